#pragma once

// Newline-delimited JSON protocol for out-of-process mask predictors.
//
//   server -> client (once): {"proto":"mdm-pred/1","vocab":V,"mask_id":M}
//   client -> server:        {"id":N,"tokens":[..],"mask_id":M,"block":[start,end],"step":s}
//   server -> client:        {"id":N,"entries":[{"pos":p,"token":t,"conf":c},..]}
//                         or {"id":N,"error":"..."}
//
// "block" is the half-open absolute range of the active block. The client
// keeps at most one request in flight per session.

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include "mdm/predictor.hpp"

namespace mdm::wire {

inline constexpr std::string_view kProtocol = "mdm-pred/1";

struct Handshake {
  std::string proto;
  int vocab = 0;
  TokenId mask_id = 0;
};

struct Request {
  std::uint64_t id = 0;
  std::vector<TokenId> tokens;
  TokenId mask_id = 0;
  std::size_t block_begin = 0;
  std::size_t block_end = 0;
  StepIndex step = 0;
};

std::string encode_handshake(const Handshake& hs);
// Throws kProtocolMismatch unless proto == kProtocol and the fields are sane.
Handshake decode_handshake(std::string_view line);

// The masked positions the response must cover are derived from the state.
std::string encode_request(const SequenceState& state, BlockIndex b, StepIndex s, std::uint64_t id);
Request decode_request(std::string_view line);

std::string encode_response(const PredictionFrame& frame, std::uint64_t id);
std::string encode_error(std::uint64_t id, std::string_view message);

// Parses and validates a response against the request it answers: id must
// match and the entries must cover exactly the masked positions of block b.
PredictionFrame decode_response(std::string_view line, std::uint64_t expected_id, const SequenceState& state,
                                BlockIndex b, StepIndex s);

// Predictor backed by a child process speaking the protocol over stdio.
class ExternPredictor final : public Predictor {
 public:
  // Runs command through /bin/sh -c and reads the handshake.
  explicit ExternPredictor(const std::string& command);
  ~ExternPredictor() override;

  ExternPredictor(const ExternPredictor&) = delete;
  ExternPredictor& operator=(const ExternPredictor&) = delete;

  PredictionFrame predict(const SequenceState& state, BlockIndex b, StepIndex s) override;
  int vocab_size() const override { return handshake_.vocab; }
  TokenId mask_id() const override { return handshake_.mask_id; }
  bool thread_safe() const override { return false; }

 private:
  struct Process;

  std::string read_line();

  std::unique_ptr<Process> proc_;
  Handshake handshake_;
  std::uint64_t next_id_ = 1;
};

}  // namespace mdm::wire

#include "mdm/wire.hpp"

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstdio>
#include <cstring>
#include <string>

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"
#include "mdm/error.hpp"

namespace mdm::wire {

using nlohmann::json;

namespace {

json parse_line(std::string_view line, ErrorCode code) {
  try {
    json j = json::parse(line);
    if (!j.is_object()) throw Error(code, "expected a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw Error(code, e.what());
  }
}

}  // namespace

std::string encode_handshake(const Handshake& hs) {
  return json{{"proto", hs.proto}, {"vocab", hs.vocab}, {"mask_id", hs.mask_id}}.dump() + "\n";
}

Handshake decode_handshake(std::string_view line) {
  const json j = parse_line(line, ErrorCode::kProtocolMismatch);
  Handshake hs;
  try {
    hs.proto = j.at("proto").get<std::string>();
    hs.vocab = j.at("vocab").get<int>();
    hs.mask_id = j.at("mask_id").get<TokenId>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProtocolMismatch, e.what());
  }
  if (hs.proto != kProtocol) {
    throw Error(ErrorCode::kProtocolMismatch, "server speaks '" + hs.proto + "', expected '" +
                                                  std::string(kProtocol) + "'");
  }
  if (hs.vocab < 2 || hs.mask_id < 0 || hs.mask_id >= hs.vocab) {
    throw Error(ErrorCode::kProtocolMismatch, "handshake vocab/mask_id out of range");
  }
  return hs;
}

std::string encode_request(const SequenceState& state, BlockIndex b, StepIndex s, std::uint64_t id) {
  const auto& layout = state.layout();
  json j;
  j["id"] = id;
  j["tokens"] = std::vector<TokenId>(state.tokens().begin(), state.tokens().end());
  j["mask_id"] = state.mask_id();
  j["block"] = {layout.block_begin(b), layout.block_end(b)};
  j["step"] = s;
  return j.dump() + "\n";
}

Request decode_request(std::string_view line) {
  const json j = parse_line(line, ErrorCode::kMalformedResponse);
  Request r;
  try {
    r.id = j.at("id").get<std::uint64_t>();
    r.tokens = j.at("tokens").get<std::vector<TokenId>>();
    r.mask_id = j.at("mask_id").get<TokenId>();
    const auto& block = j.at("block");
    if (!block.is_array() || block.size() != 2) throw Error(ErrorCode::kMalformedResponse, "block must be [start,end]");
    r.block_begin = block[0].get<std::size_t>();
    r.block_end = block[1].get<std::size_t>();
    r.step = j.at("step").get<StepIndex>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedResponse, e.what());
  }
  if (r.block_begin > r.block_end || r.block_end > r.tokens.size()) {
    throw Error(ErrorCode::kMalformedResponse, "block range outside token buffer");
  }
  return r;
}

std::string encode_response(const PredictionFrame& frame, std::uint64_t id) {
  json entries = json::array();
  for (const FrameEntry& e : frame.entries) {
    entries.push_back({{"pos", e.pos}, {"token", e.token}, {"conf", e.conf}});
  }
  return json{{"id", id}, {"entries", std::move(entries)}}.dump() + "\n";
}

std::string encode_error(std::uint64_t id, std::string_view message) {
  return json{{"id", id}, {"error", message}}.dump() + "\n";
}

PredictionFrame decode_response(std::string_view line, std::uint64_t expected_id, const SequenceState& state,
                                BlockIndex b, StepIndex s) {
  const json j = parse_line(line, ErrorCode::kMalformedResponse);
  PredictionFrame frame{b, s, {}};
  try {
    const auto id = j.at("id").get<std::uint64_t>();
    if (id != expected_id) {
      throw Error(ErrorCode::kIdMismatch,
                  "response id " + std::to_string(id) + " for request " + std::to_string(expected_id));
    }
    if (j.contains("error")) {
      throw Error(ErrorCode::kMalformedResponse, "server error: " + j.at("error").get<std::string>());
    }
    for (const auto& e : j.at("entries")) {
      frame.entries.push_back({e.at("pos").get<std::size_t>(), e.at("token").get<TokenId>(),
                               e.at("conf").get<double>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedResponse, e.what());
  }
  std::sort(frame.entries.begin(), frame.entries.end(),
            [](const FrameEntry& x, const FrameEntry& y) { return x.pos < y.pos; });
  validate_frame(frame, state, b);
  return frame;
}

struct ExternPredictor::Process {
  pid_t pid = -1;
  FILE* to_child = nullptr;
  FILE* from_child = nullptr;

  ~Process() {
    if (to_child) std::fclose(to_child);
    if (from_child) std::fclose(from_child);
    if (pid > 0) {
      int status = 0;
      waitpid(pid, &status, 0);
    }
  }
};

ExternPredictor::ExternPredictor(const std::string& command) : proc_(std::make_unique<Process>()) {
  // A dead server must surface as PREDICTOR_UNAVAILABLE, not kill the engine.
  std::signal(SIGPIPE, SIG_IGN);

  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0) throw Error(ErrorCode::kPredictorUnavailable, std::strerror(errno));
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw Error(ErrorCode::kPredictorUnavailable, std::strerror(errno));
  }
  const pid_t pid = fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    throw Error(ErrorCode::kPredictorUnavailable, std::strerror(errno));
  }
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  proc_->pid = pid;
  proc_->to_child = fdopen(in_pipe[1], "w");
  proc_->from_child = fdopen(out_pipe[0], "r");
  if (!proc_->to_child || !proc_->from_child) {
    throw Error(ErrorCode::kPredictorUnavailable, "fdopen failed");
  }
  handshake_ = decode_handshake(read_line());
}

ExternPredictor::~ExternPredictor() = default;

std::string ExternPredictor::read_line() {
  std::string line;
  int c;
  while ((c = std::fgetc(proc_->from_child)) != EOF) {
    if (c == '\n') return line;
    line.push_back(static_cast<char>(c));
  }
  throw Error(ErrorCode::kPredictorUnavailable, "predictor process closed its output");
}

PredictionFrame ExternPredictor::predict(const SequenceState& state, BlockIndex b, StepIndex s) {
  if (state.mask_id() != handshake_.mask_id) {
    throw Error(ErrorCode::kProtocolMismatch, "sequence mask id differs from server mask id");
  }
  if (state.masked_in_block(b).empty()) {
    throw Error(ErrorCode::kEmptyBlock, "block " + std::to_string(b) + " has no masked positions");
  }
  const std::uint64_t id = next_id_++;
  const std::string request = encode_request(state, b, s, id);
  if (std::fwrite(request.data(), 1, request.size(), proc_->to_child) != request.size() ||
      std::fflush(proc_->to_child) != 0) {
    throw Error(ErrorCode::kPredictorUnavailable, "failed to write request");
  }
  return decode_response(read_line(), id, state, b, s);
}

}  // namespace mdm::wire

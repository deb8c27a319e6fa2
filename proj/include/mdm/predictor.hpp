#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "mdm/seqstate.hpp"

namespace mdm {

// Built-in predictors work over byte-level ids with one reserved mask id.
inline constexpr int kByteVocab = 257;
inline constexpr TokenId kByteMaskId = 256;

struct FrameEntry {
  std::size_t pos = 0;
  TokenId token = 0;
  double conf = 0.0;  // in (0, 1]

  bool operator==(const FrameEntry&) const = default;
};

// One denoising step's proposals for the still-masked positions of a block,
// ordered by ascending position.
struct PredictionFrame {
  BlockIndex block = 1;
  StepIndex step = 0;
  std::vector<FrameEntry> entries;

  bool operator==(const PredictionFrame&) const = default;
};

// Throws kIncompleteCoverage / kMalformedResponse when the frame does not
// cover exactly masked_in_block(state, b) with confidences in (0, 1].
void validate_frame(const PredictionFrame& frame, const SequenceState& state, BlockIndex b);

class Predictor {
 public:
  virtual ~Predictor() = default;

  // One call is one predictor invocation for throughput accounting.
  virtual PredictionFrame predict(const SequenceState& state, BlockIndex b, StepIndex s) = 0;

  virtual int vocab_size() const = 0;
  virtual TokenId mask_id() const = 0;

  // Built-in predictors are immutable and may be shared across threads.
  virtual bool thread_safe() const { return true; }
};

// FNV-1a over the prompt ids; identifies a prompt for jitter and reference lookup.
std::uint64_t prompt_fingerprint(std::span<const TokenId> prompt);

// Copy task target: the prompt repeated cyclically to gen_len tokens.
std::vector<TokenId> copy_task_reference(std::span<const TokenId> prompt, std::size_t gen_len);

// Parametric U-shaped confidence over the steps of a block.
struct ScriptedSchedule {
  double c_peak = 0.95;
  double c_edge = 0.80;
  double t_peak = 0.5;
  double jitter_scale = 0.0;
  std::uint64_t seed = 0;
  // Steps-per-block estimate; 0 means "use block_len".
  std::size_t steps_estimate = 0;
};

// Deterministic value in [-1, 1] from a hash of the arguments.
double scripted_jitter(std::uint64_t seed, std::uint64_t prompt_id, BlockIndex b, StepIndex s,
                       std::size_t position);

double scripted_confidence(BlockIndex b, StepIndex s, std::size_t steps_estimate, std::size_t position,
                           const ScriptedSchedule& schedule, std::uint64_t prompt_id = 0);

// Always proposes the reference token; confidence follows ScriptedSchedule.
class ScriptedPredictor final : public Predictor {
 public:
  explicit ScriptedPredictor(ScriptedSchedule schedule);

  // Registers an explicit target for a prompt. Positions past the end of
  // reference fall back to the copy-task target.
  void add_reference(std::span<const TokenId> prompt, std::vector<TokenId> reference);

  std::vector<TokenId> reference_for(std::span<const TokenId> prompt, std::size_t gen_len) const;

  PredictionFrame predict(const SequenceState& state, BlockIndex b, StepIndex s) override;
  int vocab_size() const override { return kByteVocab; }
  TokenId mask_id() const override { return kByteMaskId; }

  const ScriptedSchedule& schedule() const { return schedule_; }

 private:
  ScriptedSchedule schedule_;
  std::map<std::uint64_t, std::vector<TokenId>> references_;
};

class BigramModel {
 public:
  BigramModel(int vocab, double alpha);

  int vocab() const { return vocab_; }
  double alpha() const { return alpha_; }
  std::uint64_t count(TokenId prev, TokenId next) const;
  std::uint64_t row_sum(TokenId prev) const;
  // (count + alpha) / (row_sum + alpha * V)
  double probability(TokenId prev, TokenId next) const;

  void add_pair(TokenId prev, TokenId next);

 private:
  int vocab_;
  double alpha_;
  std::vector<std::uint64_t> counts_;  // row-major V x V
  std::vector<std::uint64_t> row_sums_;
};

BigramModel bigram_fit(std::span<const std::vector<TokenId>> corpus, int vocab, double alpha);

// Proposes argmax_{t != mask} P(t | context) for every masked position, where
// the context is the nearest decoded token to the left (the mask id row when
// there is none). Ties go to the lowest token id.
class BigramPredictor final : public Predictor {
 public:
  BigramPredictor(BigramModel model, TokenId mask_id);

  PredictionFrame predict(const SequenceState& state, BlockIndex b, StepIndex s) override;
  int vocab_size() const override { return model_.vocab(); }
  TokenId mask_id() const override { return mask_id_; }

  const BigramModel& model() const { return model_; }

 private:
  struct RowBest {
    TokenId token;
    double prob;
  };

  BigramModel model_;
  TokenId mask_id_;
  std::vector<RowBest> best_;  // precomputed per context row
};

}  // namespace mdm

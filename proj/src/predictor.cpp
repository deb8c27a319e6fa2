#include "mdm/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mdm/error.hpp"

namespace mdm {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<std::size_t> require_masked(const SequenceState& state, BlockIndex b) {
  auto masked = state.masked_in_block(b);
  if (masked.empty()) {
    throw Error(ErrorCode::kEmptyBlock, "block " + std::to_string(b) + " has no masked positions");
  }
  return masked;
}

}  // namespace

void validate_frame(const PredictionFrame& frame, const SequenceState& state, BlockIndex b) {
  const auto masked = state.masked_in_block(b);
  if (frame.entries.size() != masked.size()) {
    throw Error(ErrorCode::kIncompleteCoverage, "frame has " + std::to_string(frame.entries.size()) +
                                                    " entries for " + std::to_string(masked.size()) +
                                                    " masked positions");
  }
  for (std::size_t k = 0; k < masked.size(); ++k) {
    const FrameEntry& e = frame.entries[k];
    if (e.pos != masked[k]) {
      throw Error(ErrorCode::kIncompleteCoverage, "masked position " + std::to_string(masked[k]) + " not covered");
    }
    if (!(e.conf > 0.0 && e.conf <= 1.0)) {
      throw Error(ErrorCode::kMalformedResponse, "confidence out of (0,1] at " + std::to_string(e.pos));
    }
    if (e.token == state.mask_id() || e.token < 0) {
      throw Error(ErrorCode::kMalformedResponse, "proposed mask/invalid token at " + std::to_string(e.pos));
    }
  }
}

std::uint64_t prompt_fingerprint(std::span<const TokenId> prompt) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (TokenId t : prompt) {
    auto v = static_cast<std::uint32_t>(t);
    for (int i = 0; i < 4; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::vector<TokenId> copy_task_reference(std::span<const TokenId> prompt, std::size_t gen_len) {
  std::vector<TokenId> ref(gen_len);
  for (std::size_t i = 0; i < gen_len; ++i) {
    ref[i] = prompt.empty() ? static_cast<TokenId>('a' + i % 26) : prompt[i % prompt.size()];
  }
  return ref;
}

double scripted_jitter(std::uint64_t seed, std::uint64_t prompt_id, BlockIndex b, StepIndex s,
                       std::size_t position) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ prompt_id);
  h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(b)));
  h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(s)));
  h = splitmix64(h ^ static_cast<std::uint64_t>(position));
  const double unit = static_cast<double>(h >> 11) * 0x1.0p-53;  // [0, 1)
  return 2.0 * unit - 1.0;
}

double scripted_confidence(BlockIndex b, StepIndex s, std::size_t steps_estimate, std::size_t position,
                           const ScriptedSchedule& schedule, std::uint64_t prompt_id) {
  const double span = static_cast<double>(std::max<std::size_t>(steps_estimate, 2) - 1);
  const double t = static_cast<double>(s) / span;
  const double width = std::max(schedule.t_peak, 1.0 - schedule.t_peak);
  const double u = (t - schedule.t_peak) / width;
  const double base = schedule.c_peak - (schedule.c_peak - schedule.c_edge) * u * u;
  double jitter = 0.0;
  if (schedule.jitter_scale != 0.0) {
    jitter = scripted_jitter(schedule.seed, prompt_id, b, s, position) * schedule.jitter_scale;
  }
  return std::clamp(base + jitter, 1e-6, 1.0);
}

ScriptedPredictor::ScriptedPredictor(ScriptedSchedule schedule) : schedule_(schedule) {
  if (!(schedule_.c_edge > 0.0 && schedule_.c_edge <= schedule_.c_peak && schedule_.c_peak <= 1.0)) {
    throw Error(ErrorCode::kInvalidPolicy, "scripted schedule needs 0 < c_edge <= c_peak <= 1");
  }
  if (schedule_.t_peak < 0.0 || schedule_.t_peak > 1.0 || schedule_.jitter_scale < 0.0) {
    throw Error(ErrorCode::kInvalidPolicy, "scripted schedule needs t_peak in [0,1], jitter_scale >= 0");
  }
}

void ScriptedPredictor::add_reference(std::span<const TokenId> prompt, std::vector<TokenId> reference) {
  references_[prompt_fingerprint(prompt)] = std::move(reference);
}

std::vector<TokenId> ScriptedPredictor::reference_for(std::span<const TokenId> prompt,
                                                      std::size_t gen_len) const {
  std::vector<TokenId> ref = copy_task_reference(prompt, gen_len);
  if (auto it = references_.find(prompt_fingerprint(prompt)); it != references_.end()) {
    std::copy_n(it->second.begin(), std::min(gen_len, it->second.size()), ref.begin());
  }
  return ref;
}

PredictionFrame ScriptedPredictor::predict(const SequenceState& state, BlockIndex b, StepIndex s) {
  const auto masked = require_masked(state, b);
  const auto& layout = state.layout();
  const std::uint64_t prompt_id = prompt_fingerprint(state.prompt());
  const std::vector<TokenId> ref = reference_for(state.prompt(), layout.gen_len);
  const std::size_t steps = schedule_.steps_estimate ? schedule_.steps_estimate : layout.block_len;

  PredictionFrame frame{b, s, {}};
  frame.entries.reserve(masked.size());
  for (std::size_t pos : masked) {
    frame.entries.push_back({pos, ref[pos - layout.prompt_len],
                             scripted_confidence(b, s, steps, pos, schedule_, prompt_id)});
  }
  return frame;
}

BigramModel::BigramModel(int vocab, double alpha) : vocab_(vocab), alpha_(alpha) {
  if (vocab < 2) throw Error(ErrorCode::kInvalidPolicy, "bigram vocabulary must be >= 2");
  if (!(alpha > 0.0)) throw Error(ErrorCode::kInvalidPolicy, "bigram smoothing must be > 0");
  const auto v = static_cast<std::size_t>(vocab);
  counts_.assign(v * v, 0);
  row_sums_.assign(v, 0);
}

std::uint64_t BigramModel::count(TokenId prev, TokenId next) const {
  return counts_.at(static_cast<std::size_t>(prev) * static_cast<std::size_t>(vocab_) +
                    static_cast<std::size_t>(next));
}

std::uint64_t BigramModel::row_sum(TokenId prev) const { return row_sums_.at(static_cast<std::size_t>(prev)); }

double BigramModel::probability(TokenId prev, TokenId next) const {
  return (static_cast<double>(count(prev, next)) + alpha_) /
         (static_cast<double>(row_sum(prev)) + alpha_ * vocab_);
}

void BigramModel::add_pair(TokenId prev, TokenId next) {
  if (prev < 0 || prev >= vocab_ || next < 0 || next >= vocab_) {
    throw Error(ErrorCode::kInvalidToken, "bigram pair outside vocabulary");
  }
  ++counts_[static_cast<std::size_t>(prev) * static_cast<std::size_t>(vocab_) + static_cast<std::size_t>(next)];
  ++row_sums_[static_cast<std::size_t>(prev)];
}

BigramModel bigram_fit(std::span<const std::vector<TokenId>> corpus, int vocab, double alpha) {
  BigramModel model(vocab, alpha);
  std::size_t tokens = 0;
  for (const auto& seq : corpus) {
    tokens += seq.size();
    for (std::size_t i = 1; i < seq.size(); ++i) model.add_pair(seq[i - 1], seq[i]);
  }
  if (tokens == 0) throw Error(ErrorCode::kEmptyCorpus, "bigram corpus has no tokens");
  return model;
}

BigramPredictor::BigramPredictor(BigramModel model, TokenId mask_id)
    : model_(std::move(model)), mask_id_(mask_id) {
  if (mask_id_ < 0 || mask_id_ >= model_.vocab()) {
    throw Error(ErrorCode::kInvalidToken, "mask id outside bigram vocabulary");
  }
  best_.resize(static_cast<std::size_t>(model_.vocab()));
  for (TokenId prev = 0; prev < model_.vocab(); ++prev) {
    RowBest best{-1, -1.0};
    for (TokenId next = 0; next < model_.vocab(); ++next) {
      if (next == mask_id_) continue;
      const double p = model_.probability(prev, next);
      if (p > best.prob) best = {next, p};
    }
    best_[static_cast<std::size_t>(prev)] = best;
  }
}

PredictionFrame BigramPredictor::predict(const SequenceState& state, BlockIndex b, StepIndex s) {
  const auto masked = require_masked(state, b);
  PredictionFrame frame{b, s, {}};
  frame.entries.reserve(masked.size());
  for (std::size_t pos : masked) {
    TokenId context = mask_id_;
    for (std::size_t i = pos; i-- > 0;) {
      if (!state.is_masked(i)) {
        context = state.tokens()[i];
        break;
      }
    }
    if (context < 0 || context >= model_.vocab()) {
      throw Error(ErrorCode::kInvalidToken, "context token outside bigram vocabulary");
    }
    const RowBest& best = best_[static_cast<std::size_t>(context)];
    frame.entries.push_back({pos, best.token, best.prob});
  }
  return frame;
}

}  // namespace mdm

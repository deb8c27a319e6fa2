#pragma once

#include <functional>
#include <vector>

#include "mdm/predictor.hpp"

// Predictor whose confidence is a fixed function of (block, step, offset in
// block). Proposes token 1 everywhere.
class TablePredictor : public mdm::Predictor {
 public:
  using ConfFn = std::function<double(mdm::BlockIndex, mdm::StepIndex, std::size_t)>;

  explicit TablePredictor(ConfFn fn) : fn_(std::move(fn)) {}
  // Same per-offset confidences in every block and step.
  explicit TablePredictor(std::vector<double> per_offset)
      : fn_([v = std::move(per_offset)](mdm::BlockIndex, mdm::StepIndex, std::size_t off) { return v[off]; }) {}

  mdm::PredictionFrame predict(const mdm::SequenceState& state, mdm::BlockIndex b, mdm::StepIndex s) override {
    ++calls;
    mdm::PredictionFrame frame{b, s, {}};
    const std::size_t begin = state.layout().block_begin(b);
    for (std::size_t pos : state.masked_in_block(b)) frame.entries.push_back({pos, 1, fn_(b, s, pos - begin)});
    return frame;
  }
  int vocab_size() const override { return 4; }
  mdm::TokenId mask_id() const override { return 3; }

  std::size_t calls = 0;

 private:
  ConfFn fn_;
};

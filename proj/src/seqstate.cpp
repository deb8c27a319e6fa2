#include "mdm/seqstate.hpp"

#include <algorithm>
#include <string>

#include "mdm/error.hpp"

namespace mdm {

BlockLayout BlockLayout::make(std::size_t prompt_len, std::size_t gen_len, std::size_t block_len) {
  if (gen_len == 0) throw Error(ErrorCode::kEmptyGeneration, "gen_len must be >= 1");
  if (block_len == 0) throw Error(ErrorCode::kNonDivisibleLength, "block_len must be >= 1");
  if (gen_len % block_len != 0) {
    throw Error(ErrorCode::kNonDivisibleLength,
                "gen_len " + std::to_string(gen_len) + " is not a multiple of block_len " +
                    std::to_string(block_len));
  }
  BlockLayout layout;
  layout.prompt_len = prompt_len;
  layout.gen_len = gen_len;
  layout.block_len = block_len;
  layout.num_blocks = static_cast<int>(gen_len / block_len);
  return layout;
}

std::size_t BlockLayout::block_begin(BlockIndex b) const {
  if (b < 1 || b > num_blocks) {
    throw Error(ErrorCode::kBlockOutOfRange,
                "block " + std::to_string(b) + " not in [1, " + std::to_string(num_blocks) + "]");
  }
  return prompt_len + static_cast<std::size_t>(b - 1) * block_len;
}

std::size_t BlockLayout::block_end(BlockIndex b) const { return block_begin(b) + block_len; }

BlockIndex BlockLayout::block_of(std::size_t pos) const {
  if (pos < prompt_len || pos >= total_len()) {
    throw Error(ErrorCode::kBlockOutOfRange, "position " + std::to_string(pos) + " is not a generation position");
  }
  return static_cast<BlockIndex>((pos - prompt_len) / block_len) + 1;
}

SequenceState init_sequence(std::span<const TokenId> prompt, std::size_t gen_len,
                            std::size_t block_len, TokenId mask_id) {
  SequenceState state;
  state.layout_ = BlockLayout::make(prompt.size(), gen_len, block_len);
  state.mask_id_ = mask_id;
  for (TokenId t : prompt) {
    if (t == mask_id || t < 0) {
      throw Error(ErrorCode::kInvalidToken, "prompt contains token " + std::to_string(t));
    }
  }
  state.tokens_.assign(prompt.begin(), prompt.end());
  state.tokens_.resize(state.layout_.total_len(), mask_id);
  state.masked_.assign(state.layout_.total_len(), 0);
  std::fill(state.masked_.begin() + static_cast<std::ptrdiff_t>(prompt.size()), state.masked_.end(), 1);
  state.masked_count_ = gen_len;
  return state;
}

std::vector<std::size_t> SequenceState::masked_in_block(BlockIndex b) const {
  std::vector<std::size_t> out;
  const std::size_t end = layout_.block_end(b);
  for (std::size_t i = layout_.block_begin(b); i < end; ++i) {
    if (masked_[i]) out.push_back(i);
  }
  return out;
}

void SequenceState::commit(const UnmaskSelection& sel) {
  if (sel.positions.size() != sel.tokens.size()) {
    throw Error(ErrorCode::kInvalidToken, "selection has mismatched positions/tokens");
  }
  // Validate everything before touching the buffers so a failed commit
  // leaves the state unchanged.
  for (std::size_t k = 0; k < sel.positions.size(); ++k) {
    const std::size_t pos = sel.positions[k];
    if (!layout_.contains(sel.block, pos)) {
      throw Error(ErrorCode::kPositionOutsideBlock,
                  "position " + std::to_string(pos) + " outside block " + std::to_string(sel.block));
    }
    if (!masked_[pos]) {
      throw Error(ErrorCode::kPositionNotMasked, "position " + std::to_string(pos) + " already decoded");
    }
    if (sel.tokens[k] == mask_id_ || sel.tokens[k] < 0) {
      throw Error(ErrorCode::kInvalidToken, "cannot commit token " + std::to_string(sel.tokens[k]));
    }
    for (std::size_t q = 0; q < k; ++q) {
      if (sel.positions[q] == pos) {
        throw Error(ErrorCode::kPositionNotMasked, "position " + std::to_string(pos) + " selected twice");
      }
    }
  }
  for (std::size_t k = 0; k < sel.positions.size(); ++k) {
    tokens_[sel.positions[k]] = sel.tokens[k];
    masked_[sel.positions[k]] = 0;
  }
  masked_count_ -= sel.positions.size();
}

SequenceState unmask_and_update(SequenceState state, const UnmaskSelection& sel) {
  state.commit(sel);
  return state;
}

nlohmann::json sequence_to_json(const SequenceState& state) {
  nlohmann::json j;
  j["prompt"] = std::vector<TokenId>(state.prompt().begin(), state.prompt().end());
  j["tokens"] = std::vector<TokenId>(state.tokens().begin(), state.tokens().end());
  std::vector<bool> masked(state.layout().total_len());
  for (std::size_t i = 0; i < masked.size(); ++i) masked[i] = state.is_masked(i);
  j["masked"] = masked;
  j["block_len"] = state.layout().block_len;
  return j;
}

SequenceState sequence_from_json(const nlohmann::json& j, TokenId mask_id) {
  try {
    const auto prompt = j.at("prompt").get<std::vector<TokenId>>();
    const auto tokens = j.at("tokens").get<std::vector<TokenId>>();
    const auto masked = j.at("masked").get<std::vector<bool>>();
    const auto block_len = j.at("block_len").get<std::size_t>();
    if (tokens.size() != masked.size() || tokens.size() < prompt.size()) {
      throw Error(ErrorCode::kParseError, "tokens/masked/prompt lengths disagree");
    }
    SequenceState state = init_sequence(prompt, tokens.size() - prompt.size(), block_len, mask_id);
    std::size_t count = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i < prompt.size()) {
        if (tokens[i] != prompt[i] || masked[i]) throw Error(ErrorCode::kParseError, "prompt region mismatch");
        continue;
      }
      if (masked[i] != (tokens[i] == mask_id)) {
        throw Error(ErrorCode::kParseError, "mask flag disagrees with token at " + std::to_string(i));
      }
      state.tokens_[i] = tokens[i];
      state.masked_[i] = masked[i] ? 1 : 0;
      count += masked[i] ? 1 : 0;
    }
    state.masked_count_ = count;
    return state;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
}

}  // namespace mdm

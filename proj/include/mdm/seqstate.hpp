#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

namespace mdm {

using TokenId = std::int32_t;

// Blocks are 1-based, steps within a block are 0-based.
using BlockIndex = int;
using StepIndex = int;

// Contiguous block partition of the generation region. Block b covers the
// absolute positions [prompt_len + (b-1)*block_len, prompt_len + b*block_len).
struct BlockLayout {
  std::size_t prompt_len = 0;
  std::size_t gen_len = 0;
  std::size_t block_len = 0;
  int num_blocks = 0;

  static BlockLayout make(std::size_t prompt_len, std::size_t gen_len, std::size_t block_len);

  std::size_t total_len() const { return prompt_len + gen_len; }
  std::size_t block_begin(BlockIndex b) const;
  std::size_t block_end(BlockIndex b) const;
  bool contains(BlockIndex b, std::size_t pos) const {
    return pos >= block_begin(b) && pos < block_end(b);
  }
  // 1-based block owning a generation position.
  BlockIndex block_of(std::size_t pos) const;

  bool operator==(const BlockLayout&) const = default;
};

struct UnmaskSelection {
  BlockIndex block = 1;
  StepIndex step = 0;
  std::vector<std::size_t> positions;  // ascending, absolute
  std::vector<TokenId> tokens;         // parallel to positions
  bool fallback_used = false;

  bool operator==(const UnmaskSelection&) const = default;
};

class SequenceState {
 public:
  SequenceState() = default;

  const BlockLayout& layout() const { return layout_; }
  TokenId mask_id() const { return mask_id_; }
  std::span<const TokenId> tokens() const { return tokens_; }
  std::span<const TokenId> prompt() const {
    return std::span<const TokenId>(tokens_).first(layout_.prompt_len);
  }
  std::span<const TokenId> generated() const {
    return std::span<const TokenId>(tokens_).subspan(layout_.prompt_len);
  }
  bool is_masked(std::size_t pos) const { return masked_.at(pos) != 0; }
  std::size_t masked_count() const { return masked_count_; }
  bool fully_decoded() const { return masked_count_ == 0; }

  std::vector<std::size_t> masked_in_block(BlockIndex b) const;

  // Writes sel.tokens at sel.positions and clears their mask flags.
  void commit(const UnmaskSelection& sel);

  bool operator==(const SequenceState&) const = default;

  friend SequenceState init_sequence(std::span<const TokenId> prompt, std::size_t gen_len,
                                     std::size_t block_len, TokenId mask_id);
  friend SequenceState sequence_from_json(const nlohmann::json& j, TokenId mask_id);

 private:
  BlockLayout layout_;
  TokenId mask_id_ = 0;
  std::vector<TokenId> tokens_;
  std::vector<std::uint8_t> masked_;
  std::size_t masked_count_ = 0;
};

SequenceState init_sequence(std::span<const TokenId> prompt, std::size_t gen_len,
                            std::size_t block_len, TokenId mask_id);

inline std::vector<std::size_t> masked_in_block(const SequenceState& state, BlockIndex b) {
  return state.masked_in_block(b);
}

// Value-returning form of SequenceState::commit.
SequenceState unmask_and_update(SequenceState state, const UnmaskSelection& sel);

// {"prompt":[..],"tokens":[..],"masked":[..],"block_len":n}
nlohmann::json sequence_to_json(const SequenceState& state);
SequenceState sequence_from_json(const nlohmann::json& j, TokenId mask_id);

}  // namespace mdm

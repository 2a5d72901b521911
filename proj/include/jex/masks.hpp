#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "jex/common.hpp"

namespace jex {

// Token positions that matter when classifying the relation between two
// entity mentions: the summary token plus every token of each mention.
struct PositionSet {
    int64_t cls = 0;
    std::set<int64_t> en1;
    std::set<int64_t> en2;

    // Throws ContractError unless all indices are < t, the entity sets are
    // disjoint, and cls belongs to neither.
    void validate(int64_t t) const;
};

// T x T binary visibility matrix for self-attention: bit(i, j) == 1 means
// position i may attend to position j.
class AttentionMask {
public:
    AttentionMask() = default;
    AttentionMask(int64_t t, uint8_t fill);

    int64_t size() const { return t_; }
    uint8_t at(int64_t i, int64_t j) const { return bits_[static_cast<size_t>(i * t_ + j)]; }
    void set(int64_t i, int64_t j, uint8_t v) { bits_[static_cast<size_t>(i * t_ + j)] = v; }
    const std::vector<uint8_t>& bits() const { return bits_; }

    bool has_all_zero_row() const;
    bool operator==(const AttentionMask& other) const = default;

private:
    int64_t t_ = 0;
    std::vector<uint8_t> bits_;
};

// All-ones mask: every position attends everywhere.
AttentionMask build_mask_all(int64_t t);

// Sequence tagging wants unrestricted attention, so this is the all-ones mask.
AttentionMask build_mask_ner(int64_t t);

// Variant 1: the summary row sees only itself and the two entities; every
// other row stays unrestricted, so entity representations keep their context.
AttentionMask build_mask_rc_v1(int64_t t, const PositionSet& pos);

// Variant 2: only positions in {cls} + en1 + en2 see each other. Rows outside
// that set would be left with no visible column, which the softmax rejects,
// so they are repaired to self-attention; no privileged row ever attends to
// them, so the summary row is unaffected by the repair.
AttentionMask build_mask_rc_v2(int64_t t, const PositionSet& pos);

// Same as build_mask_rc_v2 without the self-attention repair. Rows outside
// the privileged set are all zero; callers must not feed this to a softmax.
AttentionMask build_mask_rc_v2_unrepaired(int64_t t, const PositionSet& pos);

enum class RcMaskVariant { v1, v2 };

RcMaskVariant rc_mask_variant_from_name(const std::string& name);  // "v1" / "v2"
std::string rc_mask_variant_name(RcMaskVariant v);
AttentionMask build_mask_rc(RcMaskVariant variant, int64_t t, const PositionSet& pos);

// Intersect with token validity: columns >= valid_len are hidden from every
// row, and rows >= valid_len fall back to self-attention so no row ends up
// empty. valid_len == 0 is rejected.
AttentionMask compose_padding(const AttentionMask& mask, int64_t valid_len);

// Text grid of 0/1 characters, one mask row per line.
std::string mask_to_grid(const AttentionMask& mask);

}  // namespace jex

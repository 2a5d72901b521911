#include "jex/masks.hpp"

#include <sstream>

namespace jex {

void PositionSet::validate(int64_t t) const {
    if (cls < 0 || cls >= t) throw ContractError("position set: cls index out of range");
    for (int64_t i : en1)
        if (i < 0 || i >= t) throw ContractError("position set: en1 index out of range");
    for (int64_t i : en2)
        if (i < 0 || i >= t) throw ContractError("position set: en2 index out of range");
    for (int64_t i : en1)
        if (en2.count(i)) throw ContractError("position set: en1 and en2 overlap");
    if (en1.count(cls) || en2.count(cls)) throw ContractError("position set: cls inside an entity");
}

AttentionMask::AttentionMask(int64_t t, uint8_t fill)
    : t_(t), bits_(static_cast<size_t>(t * t), fill) {
    if (t < 1) throw DimensionError("attention mask needs size >= 1");
}

bool AttentionMask::has_all_zero_row() const {
    for (int64_t i = 0; i < t_; ++i) {
        bool any = false;
        for (int64_t j = 0; j < t_; ++j) any |= (at(i, j) != 0);
        if (!any) return true;
    }
    return false;
}

AttentionMask build_mask_all(int64_t t) {
    if (t < 1) throw DimensionError("build_mask_all: T must be >= 1");
    return AttentionMask(t, 1);
}

AttentionMask build_mask_ner(int64_t t) { return build_mask_all(t); }

namespace {
std::set<int64_t> privileged(const PositionSet& pos) {
    std::set<int64_t> p = pos.en1;
    p.insert(pos.en2.begin(), pos.en2.end());
    p.insert(pos.cls);
    return p;
}
}  // namespace

AttentionMask build_mask_rc_v1(int64_t t, const PositionSet& pos) {
    if (t < 1) throw DimensionError("build_mask_rc_v1: T must be >= 1");
    pos.validate(t);
    AttentionMask mask(t, 1);
    const std::set<int64_t> keep = privileged(pos);
    for (int64_t j = 0; j < t; ++j)
        if (!keep.count(j)) mask.set(pos.cls, j, 0);
    return mask;
}

AttentionMask build_mask_rc_v2_unrepaired(int64_t t, const PositionSet& pos) {
    if (t < 1) throw DimensionError("build_mask_rc_v2: T must be >= 1");
    pos.validate(t);
    AttentionMask mask(t, 0);
    const std::set<int64_t> keep = privileged(pos);
    for (int64_t i : keep)
        for (int64_t j : keep) mask.set(i, j, 1);
    return mask;
}

AttentionMask build_mask_rc_v2(int64_t t, const PositionSet& pos) {
    AttentionMask mask = build_mask_rc_v2_unrepaired(t, pos);
    const std::set<int64_t> keep = privileged(pos);
    for (int64_t i = 0; i < t; ++i)
        if (!keep.count(i)) mask.set(i, i, 1);
    return mask;
}

RcMaskVariant rc_mask_variant_from_name(const std::string& name) {
    if (name == "v1") return RcMaskVariant::v1;
    if (name == "v2") return RcMaskVariant::v2;
    throw ConfigError("unknown mask variant '" + name + "' (expected v1 or v2)");
}

std::string rc_mask_variant_name(RcMaskVariant v) {
    return v == RcMaskVariant::v1 ? "v1" : "v2";
}

AttentionMask build_mask_rc(RcMaskVariant variant, int64_t t, const PositionSet& pos) {
    return variant == RcMaskVariant::v1 ? build_mask_rc_v1(t, pos) : build_mask_rc_v2(t, pos);
}

AttentionMask compose_padding(const AttentionMask& mask, int64_t valid_len) {
    const int64_t t = mask.size();
    if (valid_len <= 0) throw ContractError("compose_padding: valid_len must be >= 1");
    if (valid_len > t) throw ContractError("compose_padding: valid_len exceeds mask size");
    AttentionMask out = mask;
    for (int64_t i = 0; i < t; ++i) {
        for (int64_t j = valid_len; j < t; ++j) out.set(i, j, 0);
    }
    for (int64_t i = valid_len; i < t; ++i) {
        for (int64_t j = 0; j < t; ++j) out.set(i, j, j == i ? 1 : 0);
    }
    return out;
}

std::string mask_to_grid(const AttentionMask& mask) {
    std::ostringstream os;
    for (int64_t i = 0; i < mask.size(); ++i) {
        for (int64_t j = 0; j < mask.size(); ++j) {
            if (j) os << ' ';
            os << (mask.at(i, j) ? '1' : '0');
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace jex

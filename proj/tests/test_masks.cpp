#include <doctest.h>

#include "jex/masks.hpp"

using namespace jex;

namespace {

PositionSet random_positions(int64_t t, Rng& rng) {
    // distinct cls plus two disjoint nonempty index sets
    PositionSet pos;
    pos.cls = 0;
    std::vector<int64_t> rest;
    for (int64_t i = 1; i < t; ++i) rest.push_back(i);
    rng.shuffle(rest);
    const size_t n1 = static_cast<size_t>(rng.uniform_int(1, std::max<int64_t>(1, t / 3)));
    const size_t n2 = static_cast<size_t>(rng.uniform_int(1, std::max<int64_t>(1, t / 3)));
    size_t k = 0;
    for (size_t i = 0; i < n1 && k < rest.size(); ++i) pos.en1.insert(rest[k++]);
    for (size_t i = 0; i < n2 && k < rest.size(); ++i) pos.en2.insert(rest[k++]);
    if (pos.en2.empty()) pos.en2.insert(rest[k - 1]), pos.en1.erase(rest[k - 1]);
    if (pos.en1.empty()) pos.en1.insert(rest[0]), pos.en2.erase(rest[0]);
    return pos;
}

}  // namespace

TEST_CASE("mask_all basics") {
    CHECK(build_mask_all(1).bits() == std::vector<uint8_t>{1});
    AttentionMask m = build_mask_all(3);
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 3; ++j) CHECK(m.at(i, j) == 1);
    CHECK_THROWS_AS(build_mask_all(0), DimensionError);
}

TEST_CASE("ner mask equals the all mask for any size") {
    for (int64_t t : {1, 2, 5, 17, 64}) CHECK(build_mask_ner(t) == build_mask_all(t));
}

TEST_CASE("rc mask v1 worked example") {
    PositionSet pos{.cls = 0, .en1 = {1}, .en2 = {3}};
    AttentionMask m = build_mask_rc_v1(5, pos);
    const std::vector<uint8_t> row0 = {1, 1, 0, 1, 0};
    for (int64_t j = 0; j < 5; ++j) CHECK(m.at(0, j) == row0[static_cast<size_t>(j)]);
    for (int64_t i = 1; i < 5; ++i)
        for (int64_t j = 0; j < 5; ++j) CHECK(m.at(i, j) == 1);
}

TEST_CASE("rc mask v1 with entities covering all non-special positions") {
    // positions 1..3 are entities, 4 is the trailing special token
    PositionSet pos{.cls = 0, .en1 = {1, 2}, .en2 = {3}};
    AttentionMask m = build_mask_rc_v1(5, pos);
    AttentionMask all = build_mask_all(5);
    for (int64_t i = 0; i < 5; ++i)
        for (int64_t j = 0; j < 5; ++j) {
            if (i == 0 && j == 4)
                CHECK(m.at(i, j) == 0);  // only the trailing token is hidden
            else
                CHECK(m.at(i, j) == all.at(i, j));
        }

    // no position outside the union: nothing masked anywhere
    PositionSet tight{.cls = 0, .en1 = {1}, .en2 = {2}};
    CHECK(build_mask_rc_v1(3, tight) == build_mask_all(3));
}

TEST_CASE("rc mask v2 worked example with repair") {
    PositionSet pos{.cls = 0, .en1 = {1}, .en2 = {3}};
    AttentionMask pre = build_mask_rc_v2_unrepaired(5, pos);
    AttentionMask post = build_mask_rc_v2(5, pos);
    const std::vector<int64_t> block = {0, 1, 3};
    for (int64_t i : block)
        for (int64_t j : block) CHECK(pre.at(i, j) == 1);
    for (int64_t j = 0; j < 5; ++j) {
        CHECK(pre.at(2, j) == 0);
        CHECK(pre.at(4, j) == 0);
    }
    CHECK(post.at(2, 2) == 1);
    CHECK(post.at(4, 4) == 1);
    // repair touches nothing else
    for (int64_t i = 0; i < 5; ++i)
        for (int64_t j = 0; j < 5; ++j)
            if (!(i == j && (i == 2 || i == 4))) CHECK(post.at(i, j) == pre.at(i, j));
}

TEST_CASE("rc mask v2 covering every index is all ones") {
    PositionSet pos{.cls = 0, .en1 = {1, 2}, .en2 = {3, 4}};
    CHECK(build_mask_rc_v2(5, pos) == build_mask_all(5));
}

TEST_CASE("v2 bits are a subset of v1 bits before repair") {
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t t = rng.uniform_int(4, 16);
        PositionSet pos = random_positions(t, rng);
        AttentionMask v1 = build_mask_rc_v1(t, pos);
        AttentionMask v2 = build_mask_rc_v2_unrepaired(t, pos);
        for (int64_t i = 0; i < t; ++i)
            for (int64_t j = 0; j < t; ++j) CHECK(v2.at(i, j) <= v1.at(i, j));
    }
}

TEST_CASE("v2 pre-repair is symmetric, v1 is not in general") {
    Rng rng(17);
    bool saw_asymmetric_v1 = false;
    for (int trial = 0; trial < 50; ++trial) {
        const int64_t t = rng.uniform_int(4, 12);
        PositionSet pos = random_positions(t, rng);
        AttentionMask v2 = build_mask_rc_v2_unrepaired(t, pos);
        bool sym = true;
        for (int64_t i = 0; i < t; ++i)
            for (int64_t j = 0; j < t; ++j) sym &= (v2.at(i, j) == v2.at(j, i));
        CHECK(sym);
        AttentionMask v1 = build_mask_rc_v1(t, pos);
        for (int64_t i = 0; i < t; ++i)
            for (int64_t j = 0; j < t; ++j) saw_asymmetric_v1 |= (v1.at(i, j) != v1.at(j, i));
    }
    CHECK(saw_asymmetric_v1);
}

TEST_CASE("v1 and v2 agree on the privileged block") {
    Rng rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        const int64_t t = rng.uniform_int(4, 12);
        PositionSet pos = random_positions(t, rng);
        std::vector<int64_t> block{pos.cls};
        block.insert(block.end(), pos.en1.begin(), pos.en1.end());
        block.insert(block.end(), pos.en2.begin(), pos.en2.end());
        AttentionMask v1 = build_mask_rc_v1(t, pos);
        AttentionMask v2 = build_mask_rc_v2(t, pos);
        for (int64_t i : block)
            for (int64_t j : block) {
                CHECK(v1.at(i, j) == 1);
                CHECK(v2.at(i, j) == 1);
            }
    }
}

TEST_CASE("builders never leave an all-zero row") {
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t t = rng.uniform_int(2, 12);
        PositionSet pos = random_positions(t, rng);
        CHECK_FALSE(build_mask_all(t).has_all_zero_row());
        CHECK_FALSE(build_mask_rc_v1(t, pos).has_all_zero_row());
        CHECK_FALSE(build_mask_rc_v2(t, pos).has_all_zero_row());
        const int64_t valid = rng.uniform_int(1, t);
        CHECK_FALSE(compose_padding(build_mask_rc_v2(t, pos), valid).has_all_zero_row());
        CHECK_FALSE(compose_padding(build_mask_rc_v1(t, pos), valid).has_all_zero_row());
    }
}

TEST_CASE("builders are pure") {
    PositionSet pos{.cls = 0, .en1 = {2, 3}, .en2 = {5}};
    CHECK(build_mask_rc_v1(7, pos) == build_mask_rc_v1(7, pos));
    CHECK(build_mask_rc_v2(7, pos) == build_mask_rc_v2(7, pos));
    CHECK(compose_padding(build_mask_all(7), 4) == compose_padding(build_mask_all(7), 4));
}

TEST_CASE("position set validation") {
    CHECK_THROWS_AS(build_mask_rc_v1(4, PositionSet{.cls = 0, .en1 = {1, 9}, .en2 = {2}}),
                    ContractError);
    CHECK_THROWS_AS(build_mask_rc_v1(4, PositionSet{.cls = 0, .en1 = {1}, .en2 = {1}}),
                    ContractError);
    CHECK_THROWS_AS(build_mask_rc_v2(4, PositionSet{.cls = 1, .en1 = {1}, .en2 = {2}}),
                    ContractError);
}

TEST_CASE("padding composition") {
    AttentionMask all4 = build_mask_all(4);
    CHECK(compose_padding(all4, 4) == all4);

    AttentionMask padded = compose_padding(all4, 2);
    for (int64_t i = 0; i < 2; ++i)
        for (int64_t j = 0; j < 4; ++j) CHECK(padded.at(i, j) == (j < 2 ? 1 : 0));
    for (int64_t i = 2; i < 4; ++i)
        for (int64_t j = 0; j < 4; ++j) CHECK(padded.at(i, j) == (i == j ? 1 : 0));

    CHECK(compose_padding(padded, 2) == padded);  // idempotent
    CHECK_THROWS_AS(compose_padding(all4, 0), ContractError);
    CHECK_THROWS_AS(compose_padding(all4, 5), ContractError);
}

TEST_CASE("mask grid rendering") {
    AttentionMask m(2, 1);
    m.set(0, 1, 0);
    CHECK(mask_to_grid(m) == "1 0\n1 1\n");
}

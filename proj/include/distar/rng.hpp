// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace distar {

// xoshiro256++ with a splitmix64-seeded state. Chosen over <random> engines so
// the full stream state (4 words + a draw counter) serializes exactly and the
// normal sampler stays cache-free: restoring a checkpoint reproduces the draw
// sequence bit for bit.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t next_u64();
    double uniform();  // [0, 1)
    double normal();   // standard normal, Box-Muller without the cached spare
    void fill_normal(double* out, std::size_t n);

    // number of next_u64 calls so far; used by the common-random-number
    // discipline to assert that paired evaluations consumed equal draws
    std::uint64_t position() const { return calls_; }

    struct State {
        std::array<std::uint64_t, 4> s{};
        std::uint64_t calls = 0;
    };
    State state() const;
    void set_state(const State& st);

  private:
    std::array<std::uint64_t, 4> s_{};
    std::uint64_t calls_ = 0;
};

std::uint64_t splitmix64(std::uint64_t& x);
std::uint64_t hash_name(std::string_view name);

// One seed, independent named substreams. Stream identity depends only on
// (seed, name), so adding draws to one stream never shifts another.
class RngPool {
  public:
    explicit RngPool(std::uint64_t seed = 0);

    Rng& stream(std::string_view name);
    std::uint64_t seed() const { return seed_; }

    // stable (name -> state) view for checkpoints
    std::vector<std::pair<std::string, Rng::State>> states() const;
    void restore(const std::vector<std::pair<std::string, Rng::State>>& states);

  private:
    std::uint64_t seed_;
    std::map<std::string, Rng, std::less<>> streams_;
};

}  // namespace distar

// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#include "distar/rng.hpp"

#include <cmath>

namespace distar {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t hash_name(std::string_view name) {
    // FNV-1a
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Rng::Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& w : s_) w = splitmix64(x);
}

static inline std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    ++calls_;
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    // u1 in (0,1] keeps the log finite
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void Rng::fill_normal(double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = normal();
}

Rng::State Rng::state() const { return State{s_, calls_}; }

void Rng::set_state(const State& st) {
    s_ = st.s;
    calls_ = st.calls;
}

RngPool::RngPool(std::uint64_t seed) : seed_(seed) {}

Rng& RngPool::stream(std::string_view name) {
    auto it = streams_.find(name);
    if (it == streams_.end()) {
        std::uint64_t derived = seed_ ^ hash_name(name);
        derived = splitmix64(derived);
        it = streams_.emplace(std::string(name), Rng(derived)).first;
    }
    return it->second;
}

std::vector<std::pair<std::string, Rng::State>> RngPool::states() const {
    std::vector<std::pair<std::string, Rng::State>> out;
    out.reserve(streams_.size());
    for (const auto& [name, rng] : streams_) out.emplace_back(name, rng.state());
    return out;
}

void RngPool::restore(const std::vector<std::pair<std::string, Rng::State>>& states) {
    for (const auto& [name, st] : states) stream(name).set_state(st);
}

}  // namespace distar

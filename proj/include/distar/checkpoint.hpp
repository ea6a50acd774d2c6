// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "distar/array.hpp"

namespace distar {

// Flat (name, shape, values) container serialized as JSON with a fixed key
// order, so checkpoints diff cleanly. Doubles are emitted with shortest
// round-trip precision; loading reproduces them bit for bit.
struct Checkpoint {
    nlohmann::ordered_json meta;  // free-form: seed, iteration, config hash, ...
    struct Entry {
        std::string name;
        Shape shape;
        std::vector<double> values;
    };
    std::vector<Entry> params;

    void add(const std::string& name, const Array& a);
    void add_raw(const std::string& name, Shape shape, std::vector<double> values);
    const Entry* find(const std::string& name) const;
    // copy values into an existing array; shape must match
    void load_into(const std::string& name, Array& a) const;

    nlohmann::ordered_json to_json() const;
    static Checkpoint from_json(const nlohmann::ordered_json& j);

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

}  // namespace distar

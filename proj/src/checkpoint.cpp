// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#include "distar/checkpoint.hpp"

#include <fstream>

namespace distar {

void Checkpoint::add(const std::string& name, const Array& a) {
    add_raw(name, a.shape(), std::vector<double>(a.values().begin(), a.values().end()));
}

void Checkpoint::add_raw(const std::string& name, Shape shape, std::vector<double> values) {
    params.push_back(Entry{name, std::move(shape), std::move(values)});
}

const Checkpoint::Entry* Checkpoint::find(const std::string& name) const {
    for (const auto& e : params)
        if (e.name == name) return &e;
    return nullptr;
}

void Checkpoint::load_into(const std::string& name, Array& a) const {
    const Entry* e = find(name);
    if (e == nullptr) throw config_error("checkpoint: missing parameter '" + name + "'");
    if (e->shape != a.shape())
        throw shape_error("checkpoint: parameter '" + name + "' has shape " +
                          shape_str(e->shape) + ", expected " + shape_str(a.shape()));
    std::copy(e->values.begin(), e->values.end(), a.data());
}

nlohmann::ordered_json Checkpoint::to_json() const {
    nlohmann::ordered_json j;
    j["format"] = "distar-checkpoint";
    j["version"] = 1;
    j["meta"] = meta.is_null() ? nlohmann::ordered_json::object() : meta;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& e : params) {
        nlohmann::ordered_json p;
        p["name"] = e.name;
        p["shape"] = e.shape;
        p["values"] = e.values;
        arr.push_back(std::move(p));
    }
    j["params"] = std::move(arr);
    return j;
}

Checkpoint Checkpoint::from_json(const nlohmann::ordered_json& j) {
    if (!j.contains("format") || j["format"] != "distar-checkpoint")
        throw config_error("checkpoint: unrecognized format");
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw config_error("checkpoint: unsupported version");
    Checkpoint ck;
    ck.meta = j.value("meta", nlohmann::ordered_json::object());
    for (const auto& p : j.at("params")) {
        Entry e;
        e.name = p.at("name").get<std::string>();
        e.shape = p.at("shape").get<Shape>();
        e.values = p.at("values").get<std::vector<double>>();
        ck.params.push_back(std::move(e));
    }
    return ck;
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw config_error("checkpoint: cannot write '" + path + "'");
    os << to_json().dump(1) << "\n";
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_error("checkpoint: cannot read '" + path + "'");
    nlohmann::ordered_json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw config_error("checkpoint: bad JSON in '" + path + "': " + e.what());
    }
    return from_json(j);
}

}  // namespace distar

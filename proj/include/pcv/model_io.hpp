#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "pcv/network.hpp"

namespace pcv {

struct ModelMeta {
    std::uint64_t seed = 0;
    double prune_ratio = 0.0;
    nlohmann::json hyperparameters = nlohmann::json::object();
};

// "pcv1" model file: little-endian u64 header length + JSON header
// (architecture, shapes, hyperparameters, seed, prune ratio, mask summary),
// then per parametric layer the weight and bias blobs as length-prefixed
// little-endian f32, then per prunable layer a length-prefixed bit-packed
// mask blob.
void save_model(const std::string& path, const NetworkF& net, const ModelMeta& meta);

struct LoadedModel {
    NetworkF net;
    ModelMeta meta;
};

LoadedModel load_model(const std::string& path);

} // namespace pcv

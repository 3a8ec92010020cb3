#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcv/network.hpp"
#include "pcv/trainer.hpp"

namespace pcv {

struct PrunePlan {
    double ratio = 0.0;
    double threshold = 0.0; // cut magnitude tau
    std::size_t total_prunable = 0;
    std::size_t total_pruned = 0;
    // (layer index, flat weight index), the weights to zero
    std::vector<std::pair<int, std::size_t>> pruned;
    std::vector<std::size_t> per_layer_counts; // indexed by layer
    std::string tie_policy = "(layer,index) ascending";

    nlohmann::json to_json() const;
};

// k = floor(ratio * M) globally smallest |w| across all prunable layers,
// ties at the cut magnitude broken by (layer, flat index) ascending.
PrunePlan compute_plan(const NetworkF& net, double ratio);

// Zeroes the selected weights and clears their mask bits. Non-prunable
// layers untouched.
NetworkF apply_prune(NetworkF net, const PrunePlan& plan);

struct SparsityReport {
    double prunable_zero_fraction = 0.0;
    double overall_zero_fraction = 0.0;
    double conv_weight_share = 0.0; // conv weights / total weights
    std::vector<std::pair<std::size_t, double>> per_layer; // (layer, zero frac)
};

SparsityReport sparsity_report(const NetworkF& net);

struct PruneFinetuneResult {
    NetworkF net;
    TrainResult train_result;
    PrunePlan plan;
};

// Prune then retrain with the same hyperparameters and mask projection on
// until the threshold is re-reached (or max_epochs).
PruneFinetuneResult prune_and_finetune(const NetworkF& net, const Dataset& ds_train,
                                       const Dataset& ds_test, double ratio,
                                       const TrainConfig& cfg);

} // namespace pcv

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pcv/data.hpp"
#include "pcv/network.hpp"

namespace pcv {

struct TrainConfig {
    std::uint64_t seed = 10;
    double lr0 = 1e-4;
    double weight_decay = 1e-4;
    double lr_gamma = 0.3;
    int lr_step_epochs = 30;
    std::size_t batch_size = 128;
    int max_epochs = 200;
    double accuracy_threshold = 0.994;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int jobs = 0; // 0 = hardware concurrency
};

enum class StopReason { ThresholdReached, MaxEpochs };

struct EpochStats {
    int epoch;
    double lr;
    double loss;
    double accuracy;
};

struct TrainResult {
    NetworkF net;
    int epochs_run = 0;
    std::vector<EpochStats> history;
    StopReason stop = StopReason::MaxEpochs;
};

// lr0 * gamma^floor(epoch / step)
double lr_schedule(int epoch, const TrainConfig& cfg);

struct CrossEntropyResult {
    double loss;
    std::vector<double> grad; // d loss / d logits = softmax - onehot
};

// -log softmax(logits)[label], max-subtraction stabilized.
CrossEntropyResult cross_entropy(std::span<const double> logits, int label);

template <typename T>
struct AdamState {
    std::vector<T> m, v;
};

// Decoupled weight decay applied separately from the bias-corrected Adam
// update.
template <typename T>
void adamw_step(std::vector<T>& w, const std::vector<T>& g, AdamState<T>& state,
                long step_index, const TrainConfig& cfg, double lr_t);

// Fresh training: He-uniform init from cfg.seed, seeded shuffling, stop the
// first time test accuracy reaches the threshold. With mask_projection the
// incoming weights are kept (fine-tuning), masked weights are re-zeroed
// after every optimizer step, and an epoch-0 evaluation may return
// immediately if the net is already at threshold.
TrainResult train(NetworkF net, const Dataset& ds_train, const Dataset& ds_test,
                  const TrainConfig& cfg, bool mask_projection);

double evaluate_accuracy(const NetworkF& net, const Dataset& ds, int jobs = 0);

// JSON-lines training history (epoch, lr, loss, accuracy).
void export_history(const std::string& path, const TrainResult& result);

} // namespace pcv

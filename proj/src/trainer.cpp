#include "pcv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "pcv/parallel.hpp"
#include "pcv/rng.hpp"

namespace pcv {

double lr_schedule(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw Error("lr_schedule: negative epoch");
    int steps = epoch / cfg.lr_step_epochs;
    return cfg.lr0 * std::pow(cfg.lr_gamma, steps);
}

CrossEntropyResult cross_entropy(std::span<const double> logits, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
        throw Error("cross_entropy: label out of range");
    double mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double z : logits) denom += std::exp(z - mx);
    CrossEntropyResult r;
    r.loss = std::log(denom) - (logits[label] - mx);
    r.grad.resize(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j)
        r.grad[j] = std::exp(logits[j] - mx) / denom;
    r.grad[label] -= 1.0;
    return r;
}

template <typename T>
void adamw_step(std::vector<T>& w, const std::vector<T>& g, AdamState<T>& state,
                long step_index, const TrainConfig& cfg, double lr_t) {
    if (w.size() != g.size()) throw Error("adamw_step: shape mismatch");
    if (step_index < 1) throw Error("adamw_step: step_index must be >= 1");
    if (state.m.empty()) {
        state.m.assign(w.size(), T(0));
        state.v.assign(w.size(), T(0));
    }
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_index));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_index));
    for (std::size_t i = 0; i < w.size(); ++i) {
        double gi = static_cast<double>(g[i]);
        double m = cfg.beta1 * static_cast<double>(state.m[i]) + (1.0 - cfg.beta1) * gi;
        double v = cfg.beta2 * static_cast<double>(state.v[i]) + (1.0 - cfg.beta2) * gi * gi;
        state.m[i] = static_cast<T>(m);
        state.v[i] = static_cast<T>(v);
        double update = (m / bc1) / (std::sqrt(v / bc2) + cfg.adam_eps);
        double decayed = static_cast<double>(w[i]) * (1.0 - lr_t * cfg.weight_decay);
        w[i] = static_cast<T>(decayed - lr_t * update);
    }
}

template void adamw_step(std::vector<float>&, const std::vector<float>&,
                         AdamState<float>&, long, const TrainConfig&, double);
template void adamw_step(std::vector<double>&, const std::vector<double>&,
                         AdamState<double>&, long, const TrainConfig&, double);

double evaluate_accuracy(const NetworkF& net, const Dataset& ds, int jobs) {
    if (ds.size() == 0) throw Error("evaluate_accuracy: empty dataset");
    if (jobs <= 0) jobs = default_jobs();
    std::vector<char> correct(ds.size(), 0);
    parallel_for(ds.size(), jobs, [&](std::size_t i) {
        correct[i] = predict(net, ds.image(i)) == ds.labels[i] ? 1 : 0;
    });
    std::size_t hits = std::accumulate(correct.begin(), correct.end(), std::size_t{0});
    return static_cast<double>(hits) / static_cast<double>(ds.size());
}

namespace {

struct SampleGrad {
    Gradients<float> grads;
    double loss;
};

} // namespace

TrainResult train(NetworkF net, const Dataset& ds_train, const Dataset& ds_test,
                  const TrainConfig& cfg, bool mask_projection) {
    int jobs = cfg.jobs > 0 ? cfg.jobs : default_jobs();

    if (!mask_projection) {
        Rng init_rng = Rng::stream(cfg.seed, "init");
        init_he_uniform(net, init_rng);
    }

    TrainResult result;

    if (mask_projection) {
        // fine-tuning: a model already at threshold returns untouched
        double acc0 = evaluate_accuracy(net, ds_test, jobs);
        if (acc0 >= cfg.accuracy_threshold) {
            result.net = std::move(net);
            result.stop = StopReason::ThresholdReached;
            return result;
        }
    }

    Rng shuffle_rng = Rng::stream(cfg.seed, "shuffle");
    std::vector<std::size_t> order(ds_train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    // one optimizer state per parameter tensor
    std::vector<AdamState<float>> wstates(net.layers.size());
    std::vector<AdamState<float>> bstates(net.layers.size());
    long step_index = 0;

    std::vector<SampleGrad> batch_grads(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        double lr_t = lr_schedule(epoch, cfg);
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        std::size_t seen = 0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t bs = std::min(cfg.batch_size, order.size() - start);
            parallel_for(bs, jobs, [&](std::size_t k) {
                TensorF x = ds_train.image(order[start + k]);
                int label = ds_train.labels[order[start + k]];
                std::vector<TensorF> acts = forward_all(net, x);
                const TensorF& logits = acts.back();
                std::vector<double> ld(logits.data.begin(), logits.data.end());
                CrossEntropyResult ce = cross_entropy(ld, label);
                TensorF lg(logits.shape);
                for (std::size_t j = 0; j < lg.numel(); ++j)
                    lg[j] = static_cast<float>(ce.grad[j]);
                batch_grads[k].grads = backward(net, x, acts, lg);
                batch_grads[k].loss = ce.loss;
            });

            // fixed-order reduction keeps runs bit-identical
            ++step_index;
            float inv = 1.0f / static_cast<float>(bs);
            for (std::size_t li = 0; li < net.layers.size(); ++li) {
                Layer<float>& L = net.layers[li];
                if (L.weights.numel() == 0) continue;
                std::vector<float> wg(L.weights.numel(), 0.0f);
                std::vector<float> bg(L.bias.numel(), 0.0f);
                for (std::size_t k = 0; k < bs; ++k) {
                    const Gradients<float>& g = batch_grads[k].grads;
                    for (std::size_t j = 0; j < wg.size(); ++j)
                        wg[j] += g.weight_grads[li][j];
                    for (std::size_t j = 0; j < bg.size(); ++j)
                        bg[j] += g.bias_grads[li][j];
                }
                for (float& v : wg) v *= inv;
                for (float& v : bg) v *= inv;
                adamw_step(L.weights.data, wg, wstates[li], step_index, cfg, lr_t);
                adamw_step(L.bias.data, bg, bstates[li], step_index, cfg, lr_t);
            }
            if (mask_projection) apply_masks(net);

            for (std::size_t k = 0; k < bs; ++k) epoch_loss += batch_grads[k].loss;
            seen += bs;
        }

        double acc = evaluate_accuracy(net, ds_test, jobs);
        result.history.push_back(
            {epoch, lr_t, epoch_loss / static_cast<double>(seen), acc});
        result.epochs_run = epoch + 1;
        if (acc >= cfg.accuracy_threshold) {
            result.stop = StopReason::ThresholdReached;
            result.net = std::move(net);
            return result;
        }
    }
    result.stop = StopReason::MaxEpochs;
    result.net = std::move(net);
    return result;
}

void export_history(const std::string& path, const TrainResult& result) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot open history file for write: " + path);
    os.precision(17);
    for (const EpochStats& e : result.history)
        os << "{\"epoch\":" << e.epoch << ",\"lr\":" << e.lr
           << ",\"loss\":" << e.loss << ",\"accuracy\":" << e.accuracy << "}\n";
}

} // namespace pcv

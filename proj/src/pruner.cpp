#include "pcv/pruner.hpp"

#include <algorithm>
#include <cmath>

namespace pcv {

using nlohmann::json;

json PrunePlan::to_json() const {
    json j;
    j["ratio"] = ratio;
    j["threshold"] = threshold;
    j["total_prunable"] = total_prunable;
    j["total_pruned"] = total_pruned;
    j["tie_policy"] = tie_policy;
    json layers = json::object();
    for (std::size_t i = 0; i < per_layer_counts.size(); ++i)
        if (per_layer_counts[i] > 0)
            layers[std::to_string(i)] = per_layer_counts[i];
    j["per_layer_counts"] = std::move(layers);
    return j;
}

PrunePlan compute_plan(const NetworkF& net, double ratio) {
    if (!(ratio >= 0.0 && ratio < 1.0))
        throw Error("compute_plan: ratio must be in [0,1)");

    struct Entry {
        float mag;
        int layer;
        std::size_t idx;
    };
    std::vector<Entry> entries;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const Layer<float>& L = net.layers[li];
        if (!L.prunable) continue;
        for (std::size_t j = 0; j < L.weights.numel(); ++j)
            entries.push_back({std::fabs(L.weights[j]), static_cast<int>(li), j});
    }
    if (entries.empty()) throw Error("compute_plan: network has no prunable layers");

    PrunePlan plan;
    plan.ratio = ratio;
    plan.total_prunable = entries.size();
    plan.per_layer_counts.assign(net.layers.size(), 0);

    // nudge before flooring so e.g. 0.7 * 90 = 62.999... still counts as 63
    double rM = ratio * static_cast<double>(entries.size());
    std::size_t k = static_cast<std::size_t>(
        std::floor(rM + 1e-9 * std::max(1.0, rM)));
    plan.total_pruned = k;
    if (k == 0) return plan;

    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.mag != b.mag) return a.mag < b.mag;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.idx < b.idx;
    });

    plan.threshold = entries[k - 1].mag;
    plan.pruned.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        plan.pruned.emplace_back(entries[i].layer, entries[i].idx);
        ++plan.per_layer_counts[entries[i].layer];
    }
    return plan;
}

NetworkF apply_prune(NetworkF net, const PrunePlan& plan) {
    if (plan.per_layer_counts.size() != net.layers.size())
        throw Error("apply_prune: plan does not match network layout");
    std::size_t prunable = 0;
    for (const auto& L : net.layers)
        if (L.prunable) prunable += L.weights.numel();
    if (prunable != plan.total_prunable)
        throw Error("apply_prune: plan was built for a different architecture");
    for (auto [li, idx] : plan.pruned) {
        if (li < 0 || static_cast<std::size_t>(li) >= net.layers.size())
            throw Error("apply_prune: plan layer index out of range");
        Layer<float>& L = net.layers[li];
        if (!L.prunable || idx >= L.weights.numel())
            throw Error("apply_prune: plan weight index out of range");
        L.weights[idx] = 0.0f;
        L.mask[idx] = 0.0f;
    }
    return net;
}

SparsityReport sparsity_report(const NetworkF& net) {
    SparsityReport r;
    std::size_t prunable_total = 0, prunable_zero = 0;
    std::size_t all_total = 0, all_zero = 0, conv_total = 0;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const Layer<float>& L = net.layers[li];
        std::size_t n = L.weights.numel();
        if (n == 0) continue;
        std::size_t z = 0;
        for (float w : L.weights.data)
            if (w == 0.0f) ++z;
        all_total += n;
        all_zero += z;
        if (L.kind == LayerKind::Conv2D) conv_total += n;
        if (L.prunable) {
            prunable_total += n;
            prunable_zero += z;
        }
        r.per_layer.emplace_back(li, static_cast<double>(z) / static_cast<double>(n));
    }
    if (prunable_total)
        r.prunable_zero_fraction =
            static_cast<double>(prunable_zero) / static_cast<double>(prunable_total);
    if (all_total) {
        r.overall_zero_fraction =
            static_cast<double>(all_zero) / static_cast<double>(all_total);
        r.conv_weight_share =
            static_cast<double>(conv_total) / static_cast<double>(all_total);
    }
    return r;
}

PruneFinetuneResult prune_and_finetune(const NetworkF& net, const Dataset& ds_train,
                                       const Dataset& ds_test, double ratio,
                                       const TrainConfig& cfg) {
    PruneFinetuneResult out;
    out.plan = compute_plan(net, ratio);
    NetworkF pruned = apply_prune(net, out.plan);
    out.train_result = train(std::move(pruned), ds_train, ds_test, cfg, true);
    out.net = out.train_result.net;
    return out;
}

} // namespace pcv

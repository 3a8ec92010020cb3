#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pcv/network.hpp"
#include "pcv/tensor.hpp"

namespace pcv {

struct RobustnessProperty {
    TensorD anchor;
    int label = 0;
    double epsilon = 0.0;
    TensorD lower; // per-pixel max(0, x - eps)
    TensorD upper; // per-pixel min(1, x + eps)
};

RobustnessProperty make_property(const TensorD& x, int label, double epsilon);

enum class Stability { Active, Inactive, Unstable };

struct NeuronRef {
    int layer = -1; // index of the ReLU layer
    std::size_t idx = 0;
    bool operator==(const NeuronRef&) const = default;
};

enum class Phase { Active, Inactive };

using SplitConstraints = std::vector<std::pair<NeuronRef, Phase>>;

struct LayerBounds {
    TensorD lower, upper;
};

struct BoundsCache {
    bool infeasible = false;
    std::vector<LayerBounds> out;         // per-layer output bounds
    std::vector<LayerBounds> relu_in;     // constrained pre-activation bounds
                                          // (empty tensors for non-ReLU layers)
    Stability stability(int relu_layer, std::size_t idx) const;
};

// Interval arithmetic through every layer; constrained ReLU inputs are
// intersected with their fixed phase. An empty intersection flags the
// whole cache infeasible.
BoundsCache ibp_bounds(const NetworkD& net, const TensorD& box_lower,
                       const TensorD& box_upper,
                       const SplitConstraints& constraints);

// Sound lower bound of z_label - z_j for every j != label, by backward
// substitution of a linear function with fixed-slope ReLU relaxation and
// Hoelder concretization over the input box. Stable and constrained
// neurons substitute exactly.
std::vector<double> crown_margin_bounds(const NetworkD& net,
                                        const RobustnessProperty& prop,
                                        const BoundsCache& cache);

// Projected gradient ascent on the best adversarial margin inside the box.
// Seeded restarts; the first restart starts at the anchor.
std::optional<TensorD> pgd_falsify(const NetworkD& net,
                                   const RobustnessProperty& prop, int steps,
                                   int restarts, double step_size,
                                   std::uint64_t seed = 0);

enum class Verdict { Verified, Falsified, Timeout, Unknown };

const char* verdict_name(Verdict v);

struct VerifyBudget {
    double timeout_s = 300.0;
    std::size_t max_subdomains = 1u << 20;
    int pgd_steps = 50;
    int pgd_restarts = 5;
    // when set, verify appends the global lower bound after each branch-and-
    // bound iteration (test instrumentation)
    std::vector<double>* bound_trace = nullptr;
};

struct VerifyStats {
    std::size_t subdomains_explored = 0;
    std::size_t splits = 0;
    double wall_s = 0.0;
};

struct VerificationOutcome {
    Verdict verdict = Verdict::Unknown;
    std::optional<TensorD> counterexample;
    double margin_lower_bound = 0.0; // worst proven bound over adversarial classes
    VerifyStats stats;
};

// IBP + CROWN root bound, PGD falsification, then worst-bound-first
// branch and bound over unstable ReLU splits.
VerificationOutcome verify(const NetworkD& net, const RobustnessProperty& prop,
                           const VerifyBudget& budget);
VerificationOutcome verify(const NetworkF& net, const RobustnessProperty& prop,
                           const VerifyBudget& budget);

enum class OracleVerdict { Robust, Nonrobust, Marginal };

// Dense-grid ground truth for nets with input dimension <= 2. Grid spacing
// is tolerance / (margin Lipschitz bound), so the grid minimum is within
// tolerance of the true minimum.
OracleVerdict exact_oracle(const NetworkD& net, const RobustnessProperty& prop,
                           double tolerance);

// L-inf -> L-inf Lipschitz bound (product of layer operator norms, additive
// over residual skips).
double lipschitz_bound(const NetworkD& net);

} // namespace pcv

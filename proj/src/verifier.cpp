#include "pcv/verifier.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <queue>

#include "pcv/rng.hpp"

namespace pcv {

namespace {

constexpr double kSoundnessSlack = 1e-6; // guards 64-bit roundoff on proven margins

using Clock = std::chrono::steady_clock;

double elapsed_s(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

} // namespace

const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::Verified: return "verified";
        case Verdict::Falsified: return "falsified";
        case Verdict::Timeout: return "timeout";
        case Verdict::Unknown: return "unknown";
    }
    return "?";
}

RobustnessProperty make_property(const TensorD& x, int label, double epsilon) {
    if (epsilon < 0.0) throw Error("make_property: epsilon must be >= 0");
    for (double v : x.data)
        if (v < 0.0 || v > 1.0)
            throw Error("make_property: anchor pixel outside [0,1]");
    RobustnessProperty p;
    p.anchor = x;
    p.label = label;
    p.epsilon = epsilon;
    p.lower = x;
    p.upper = x;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        p.lower[i] = std::max(0.0, x[i] - epsilon);
        p.upper[i] = std::min(1.0, x[i] + epsilon);
    }
    return p;
}

Stability BoundsCache::stability(int relu_layer, std::size_t idx) const {
    const LayerBounds& b = relu_in[relu_layer];
    if (b.lower[idx] >= 0.0) return Stability::Active;
    if (b.upper[idx] <= 0.0) return Stability::Inactive;
    return Stability::Unstable;
}

BoundsCache ibp_bounds(const NetworkD& net, const TensorD& box_lower,
                       const TensorD& box_upper,
                       const SplitConstraints& constraints) {
    std::size_t n = net.layers.size();
    BoundsCache cache;
    cache.out.resize(n);
    cache.relu_in.resize(n);

    LayerBounds cur{box_lower, box_upper};

    for (std::size_t i = 0; i < n; ++i) {
        const Layer<double>& L = net.layers[i];
        switch (L.kind) {
            case LayerKind::Conv2D: {
                TensorD absw = L.weights;
                for (double& w : absw.data) w = std::fabs(w);
                TensorD center(cur.lower.shape), radius(cur.lower.shape);
                for (std::size_t j = 0; j < center.numel(); ++j) {
                    center[j] = 0.5 * (cur.lower[j] + cur.upper[j]);
                    radius[j] = 0.5 * (cur.upper[j] - cur.lower[j]);
                }
                TensorD oc = conv2d(center, L.weights, L.bias, L.stride, L.padding);
                TensorD orad = conv2d(radius, absw, TensorD(), L.stride, L.padding);
                LayerBounds out{oc, oc};
                for (std::size_t j = 0; j < oc.numel(); ++j) {
                    out.lower[j] = oc[j] - orad[j];
                    out.upper[j] = oc[j] + orad[j];
                }
                cur = std::move(out);
                break;
            }
            case LayerKind::Linear: {
                std::size_t O = L.weights.shape[0], I = L.weights.shape[1];
                LayerBounds out{TensorD({O, 1, 1}), TensorD({O, 1, 1})};
                for (std::size_t o = 0; o < O; ++o) {
                    double c = L.bias[o], r = 0.0;
                    const double* wrow = L.weights.data.data() + o * I;
                    for (std::size_t j = 0; j < I; ++j) {
                        c += wrow[j] * 0.5 * (cur.lower[j] + cur.upper[j]);
                        r += std::fabs(wrow[j]) * 0.5 * (cur.upper[j] - cur.lower[j]);
                    }
                    out.lower[o] = c - r;
                    out.upper[o] = c + r;
                }
                cur = std::move(out);
                break;
            }
            case LayerKind::ReLU: {
                // intersect pre-activation with any fixed phases first
                LayerBounds in = cur;
                for (const auto& [ref, phase] : constraints) {
                    if (ref.layer != static_cast<int>(i)) continue;
                    if (phase == Phase::Active)
                        in.lower[ref.idx] = std::max(in.lower[ref.idx], 0.0);
                    else
                        in.upper[ref.idx] = std::min(in.upper[ref.idx], 0.0);
                    if (in.lower[ref.idx] > in.upper[ref.idx]) {
                        cache.infeasible = true;
                        return cache;
                    }
                }
                cache.relu_in[i] = in;
                LayerBounds out = in;
                for (std::size_t j = 0; j < out.lower.numel(); ++j) {
                    out.lower[j] = std::max(out.lower[j], 0.0);
                    out.upper[j] = std::max(out.upper[j], 0.0);
                }
                cur = std::move(out);
                break;
            }
            case LayerKind::Flatten: {
                cur.lower.shape = {cur.lower.numel(), 1, 1};
                cur.upper.shape = cur.lower.shape;
                break;
            }
            case LayerKind::GlobalAvgPool: {
                std::size_t C = cur.lower.shape[0];
                std::size_t HW = cur.lower.shape[1] * cur.lower.shape[2];
                LayerBounds out{TensorD({C, 1, 1}), TensorD({C, 1, 1})};
                for (std::size_t c = 0; c < C; ++c) {
                    double lo = 0.0, hi = 0.0;
                    for (std::size_t p = 0; p < HW; ++p) {
                        lo += cur.lower[c * HW + p];
                        hi += cur.upper[c * HW + p];
                    }
                    out.lower[c] = lo / static_cast<double>(HW);
                    out.upper[c] = hi / static_cast<double>(HW);
                }
                cur = std::move(out);
                break;
            }
            case LayerKind::ResidualAdd: {
                const LayerBounds& skip = cache.out[L.skip_source];
                for (std::size_t j = 0; j < cur.lower.numel(); ++j) {
                    cur.lower[j] += skip.lower[j];
                    cur.upper[j] += skip.upper[j];
                }
                break;
            }
        }
        cache.out[i] = cur;
    }
    return cache;
}

namespace {

struct CrownResult {
    std::vector<double> lower;        // per adversarial class
    std::vector<TensorD> minimizers;  // box point minimizing each relaxed bound
};

// Backward substitution of nspec linear functions through the network.
// Coefficient matrices are stored flat as [spec][element].
CrownResult crown_backward(const NetworkD& net, const RobustnessProperty& prop,
                           const BoundsCache& cache) {
    std::size_t n = net.layers.size();
    std::vector<Shape3> shapes = layer_output_shapes(net);
    std::size_t nc = net.num_classes;
    std::size_t nspec = nc - 1;

    auto numel_of = [&](long long i) -> std::size_t {
        return i < 0 ? net.input_shape.numel() : shapes[i].numel();
    };

    // pending[i+1] = coefficients on the output of layer i (i = -1 is the input)
    std::vector<std::vector<double>> pending(n + 1);
    std::vector<double> constant(nspec, 0.0);

    pending[n] = std::vector<double>(nspec * nc, 0.0);
    {
        std::size_t s = 0;
        for (std::size_t j = 0; j < nc; ++j) {
            if (static_cast<int>(j) == prop.label) continue;
            pending[n][s * nc + prop.label] = 1.0;
            pending[n][s * nc + j] = -1.0;
            ++s;
        }
    }

    auto accumulate = [&](long long dst_layer, const std::vector<double>& contrib) {
        std::vector<double>& slot = pending[dst_layer + 1];
        if (slot.empty()) slot.assign(nspec * numel_of(dst_layer), 0.0);
        for (std::size_t j = 0; j < contrib.size(); ++j) slot[j] += contrib[j];
    };

    for (std::size_t ri = n; ri-- > 0;) {
        std::vector<double> A = std::move(pending[ri + 1]);
        pending[ri + 1].clear();
        if (A.empty()) continue;
        const Layer<double>& L = net.layers[ri];
        long long prev = static_cast<long long>(ri) - 1;
        std::size_t out_n = numel_of(static_cast<long long>(ri));
        std::size_t in_n = numel_of(prev);

        switch (L.kind) {
            case LayerKind::Conv2D: {
                std::size_t O = L.weights.shape[0], C = L.weights.shape[1];
                std::size_t kh = L.weights.shape[2], kw = L.weights.shape[3];
                Shape3 os = shapes[ri];
                Shape3 is = prev < 0 ? net.input_shape : shapes[prev];
                std::vector<double> back(nspec * in_n, 0.0);
                for (std::size_t s = 0; s < nspec; ++s) {
                    const double* a = A.data() + s * out_n;
                    double* b = back.data() + s * in_n;
                    for (std::size_t oc = 0; oc < O; ++oc) {
                        for (std::size_t oy = 0; oy < os.h; ++oy) {
                            for (std::size_t ox = 0; ox < os.w; ++ox) {
                                double av = a[(oc * os.h + oy) * os.w + ox];
                                if (av == 0.0) continue;
                                long long iy0 =
                                    static_cast<long long>(oy) * L.stride - L.padding;
                                long long ix0 =
                                    static_cast<long long>(ox) * L.stride - L.padding;
                                for (std::size_t ic = 0; ic < C; ++ic) {
                                    const double* wrow =
                                        L.weights.data.data() + ((oc * C + ic) * kh) * kw;
                                    for (std::size_t ky = 0; ky < kh; ++ky) {
                                        long long iy = iy0 + static_cast<long long>(ky);
                                        if (iy < 0 || iy >= static_cast<long long>(is.h))
                                            continue;
                                        for (std::size_t kx = 0; kx < kw; ++kx) {
                                            long long ix =
                                                ix0 + static_cast<long long>(kx);
                                            if (ix < 0 ||
                                                ix >= static_cast<long long>(is.w))
                                                continue;
                                            b[(ic * is.h + iy) * is.w + ix] +=
                                                av * wrow[ky * kw + kx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    // bias term: sum of coefficients per output channel
                    for (std::size_t oc = 0; oc < O; ++oc) {
                        double acc = 0.0;
                        const double* arow = a + oc * os.h * os.w;
                        for (std::size_t p = 0; p < os.h * os.w; ++p) acc += arow[p];
                        constant[s] += acc * L.bias[oc];
                    }
                }
                accumulate(prev, back);
                break;
            }
            case LayerKind::Linear: {
                std::size_t O = L.weights.shape[0], I = L.weights.shape[1];
                std::vector<double> back(nspec * in_n, 0.0);
                for (std::size_t s = 0; s < nspec; ++s) {
                    const double* a = A.data() + s * out_n;
                    double* b = back.data() + s * in_n;
                    for (std::size_t o = 0; o < O; ++o) {
                        double av = a[o];
                        if (av == 0.0) continue;
                        constant[s] += av * L.bias[o];
                        const double* wrow = L.weights.data.data() + o * I;
                        for (std::size_t j = 0; j < I; ++j) b[j] += av * wrow[j];
                    }
                }
                accumulate(prev, back);
                break;
            }
            case LayerKind::ReLU: {
                const LayerBounds& in = cache.relu_in[ri];
                std::vector<double> back(nspec * in_n, 0.0);
                for (std::size_t s = 0; s < nspec; ++s) {
                    const double* a = A.data() + s * out_n;
                    double* b = back.data() + s * in_n;
                    for (std::size_t j = 0; j < in_n; ++j) {
                        double av = a[j];
                        if (av == 0.0) continue;
                        double l = in.lower[j], u = in.upper[j];
                        if (l >= 0.0) {
                            b[j] += av; // stable active: identity
                        } else if (u <= 0.0) {
                            // stable inactive: zero
                        } else if (av >= 0.0) {
                            // lower line alpha*z, alpha in {0,1}
                            if (u >= -l) b[j] += av;
                        } else {
                            // upper line u*(z-l)/(u-l)
                            double slope = u / (u - l);
                            b[j] += av * slope;
                            constant[s] += av * (-slope * l);
                        }
                    }
                }
                accumulate(prev, back);
                break;
            }
            case LayerKind::Flatten: {
                accumulate(prev, A);
                break;
            }
            case LayerKind::GlobalAvgPool: {
                Shape3 is = prev < 0 ? net.input_shape : shapes[prev];
                std::size_t HW = is.h * is.w;
                std::vector<double> back(nspec * in_n, 0.0);
                for (std::size_t s = 0; s < nspec; ++s) {
                    const double* a = A.data() + s * out_n;
                    double* b = back.data() + s * in_n;
                    for (std::size_t c = 0; c < is.c; ++c) {
                        double v = a[c] / static_cast<double>(HW);
                        if (v == 0.0) continue;
                        for (std::size_t p = 0; p < HW; ++p) b[c * HW + p] += v;
                    }
                }
                accumulate(prev, back);
                break;
            }
            case LayerKind::ResidualAdd: {
                accumulate(prev, A);
                accumulate(L.skip_source, A);
                break;
            }
        }
    }

    // concretize over the input box (Hoelder rule for L-inf)
    CrownResult res;
    res.lower.assign(nspec, 0.0);
    res.minimizers.assign(nspec, TensorD(prop.anchor.shape));
    const std::vector<double>& A0 = pending[0];
    std::size_t in_n = net.input_shape.numel();
    for (std::size_t s = 0; s < nspec; ++s) {
        double lb = constant[s];
        TensorD& xmin = res.minimizers[s];
        for (std::size_t j = 0; j < in_n; ++j) {
            double a = A0.empty() ? 0.0 : A0[s * in_n + j];
            double c = 0.5 * (prop.lower[j] + prop.upper[j]);
            double r = 0.5 * (prop.upper[j] - prop.lower[j]);
            lb += a * c - std::fabs(a) * r;
            xmin[j] = a >= 0.0 ? prop.lower[j] : prop.upper[j];
        }
        res.lower[s] = lb;
    }
    return res;
}

} // namespace

std::vector<double> crown_margin_bounds(const NetworkD& net,
                                        const RobustnessProperty& prop,
                                        const BoundsCache& cache) {
    return crown_backward(net, prop, cache).lower;
}

std::optional<TensorD> pgd_falsify(const NetworkD& net,
                                   const RobustnessProperty& prop, int steps,
                                   int restarts, double step_size,
                                   std::uint64_t seed) {
    Rng rng = Rng::stream(seed, "pgd");
    std::size_t dim = prop.anchor.numel();
    std::size_t nc = net.num_classes;

    for (int r = 0; r < restarts; ++r) {
        TensorD x = prop.anchor;
        if (r > 0)
            for (std::size_t j = 0; j < dim; ++j)
                x[j] = rng.uniform(prop.lower[j], prop.upper[j]);

        for (int it = 0; it <= steps; ++it) {
            std::vector<TensorD> acts = forward_all(net, x);
            const TensorD& logits = acts.back();
            int pred = argmax_class(logits);
            if (pred != prop.label) return x;
            if (it == steps) break;

            // ascend the best adversarial margin z_j - z_c
            int jstar = -1;
            for (std::size_t j = 0; j < nc; ++j) {
                if (static_cast<int>(j) == prop.label) continue;
                if (jstar < 0 || logits[j] > logits[jstar]) jstar = static_cast<int>(j);
            }
            TensorD lg(logits.shape);
            lg[jstar] = 1.0;
            lg[prop.label] = -1.0;
            Gradients<double> g = backward(net, x, acts, lg);
            for (std::size_t j = 0; j < dim; ++j) {
                double s = g.input_grad[j] > 0.0   ? 1.0
                           : g.input_grad[j] < 0.0 ? -1.0
                                                   : 0.0;
                x[j] = std::clamp(x[j] + step_size * s, prop.lower[j], prop.upper[j]);
            }
        }
    }
    return std::nullopt;
}

namespace {

struct Subdomain {
    SplitConstraints constraints;
    double bound;
    std::size_t seq; // deterministic tie-break
};

struct WorstFirst {
    bool operator()(const Subdomain& a, const Subdomain& b) const {
        if (a.bound != b.bound) return a.bound > b.bound;
        return a.seq > b.seq;
    }
};

bool is_constrained(const SplitConstraints& cs, int layer, std::size_t idx) {
    for (const auto& [ref, phase] : cs)
        if (ref.layer == layer && ref.idx == idx) return true;
    return false;
}

// highest min(|l|, u) among unconstrained unstable ReLU inputs
std::optional<NeuronRef> pick_split_neuron(const NetworkD& net,
                                           const BoundsCache& cache,
                                           const SplitConstraints& cs) {
    std::optional<NeuronRef> best;
    double best_score = -1.0;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (net.layers[i].kind != LayerKind::ReLU) continue;
        const LayerBounds& in = cache.relu_in[i];
        for (std::size_t j = 0; j < in.lower.numel(); ++j) {
            double l = in.lower[j], u = in.upper[j];
            if (!(l < 0.0 && u > 0.0)) continue;
            if (is_constrained(cs, static_cast<int>(i), j)) continue;
            double score = std::min(-l, u);
            if (score > best_score) {
                best_score = score;
                best = NeuronRef{static_cast<int>(i), j};
            }
        }
    }
    return best;
}

bool misclassified(const NetworkD& net, const TensorD& x, int label) {
    return predict(net, x) != label;
}

} // namespace

VerificationOutcome verify(const NetworkD& net, const RobustnessProperty& prop,
                           const VerifyBudget& budget) {
    auto start = Clock::now();
    VerificationOutcome out;
    auto finish = [&](Verdict v) {
        out.verdict = v;
        out.stats.wall_s = elapsed_s(start);
        return out;
    };

    // (1) anchor itself
    if (misclassified(net, prop.anchor, prop.label)) {
        out.counterexample = prop.anchor;
        out.margin_lower_bound = 0.0;
        return finish(Verdict::Falsified);
    }

    // (2) cheap falsification pre-filter
    double step = prop.epsilon > 0.0 ? prop.epsilon / 10.0 : 0.0;
    if (step > 0.0) {
        if (auto cex = pgd_falsify(net, prop, budget.pgd_steps, budget.pgd_restarts,
                                   step, 1)) {
            out.counterexample = *cex;
            return finish(Verdict::Falsified);
        }
    }

    // (3) root bound
    BoundsCache root_cache = ibp_bounds(net, prop.lower, prop.upper, {});
    CrownResult root = crown_backward(net, prop, root_cache);
    double root_lb = *std::min_element(root.lower.begin(), root.lower.end());
    out.stats.subdomains_explored = 1;
    out.margin_lower_bound = root_lb;
    if (root_lb > kSoundnessSlack) return finish(Verdict::Verified);

    // check the root relaxation minimizer concretely
    for (std::size_t s = 0; s < root.lower.size(); ++s) {
        if (root.lower[s] > kSoundnessSlack) continue;
        if (misclassified(net, root.minimizers[s], prop.label)) {
            out.counterexample = root.minimizers[s];
            return finish(Verdict::Falsified);
        }
    }

    // (4) branch and bound, worst bound first
    std::priority_queue<Subdomain, std::vector<Subdomain>, WorstFirst> queue;
    std::size_t seq = 0;
    queue.push({{}, root_lb, seq++});
    double leaf_min = std::numeric_limits<double>::infinity();   // unsplittable leaves
    double proven_min = std::numeric_limits<double>::infinity(); // proven subtrees
    double global_lb = root_lb;

    while (!queue.empty()) {
        if (elapsed_s(start) > budget.timeout_s) {
            out.margin_lower_bound = std::min(global_lb, leaf_min);
            return finish(Verdict::Timeout);
        }
        if (out.stats.subdomains_explored >= budget.max_subdomains) {
            out.margin_lower_bound = std::min(global_lb, leaf_min);
            return finish(Verdict::Unknown);
        }

        Subdomain sub = queue.top();
        queue.pop();
        if (sub.bound > kSoundnessSlack) {
            // worst-first order: everything still queued is proven too
            proven_min = std::min(proven_min, sub.bound);
            break;
        }

        BoundsCache cache = ibp_bounds(net, prop.lower, prop.upper, sub.constraints);
        if (cache.infeasible) continue;

        std::optional<NeuronRef> neuron = pick_split_neuron(net, cache, sub.constraints);
        if (!neuron) {
            // all ReLUs fixed yet the box concretization stays below the
            // slack: undecidable by this relaxation
            leaf_min = std::min(leaf_min, sub.bound);
            continue;
        }

        ++out.stats.splits;
        for (Phase phase : {Phase::Active, Phase::Inactive}) {
            SplitConstraints child_cs = sub.constraints;
            child_cs.emplace_back(*neuron, phase);
            BoundsCache child_cache =
                ibp_bounds(net, prop.lower, prop.upper, child_cs);
            if (child_cache.infeasible) continue;
            ++out.stats.subdomains_explored;
            CrownResult cb = crown_backward(net, prop, child_cache);
            double b = *std::min_element(cb.lower.begin(), cb.lower.end());
            // the parent bound is valid for any subregion
            b = std::max(b, sub.bound);
            if (b > kSoundnessSlack) {
                proven_min = std::min(proven_min, b);
                continue;
            }
            for (std::size_t s = 0; s < cb.lower.size(); ++s) {
                if (cb.lower[s] > kSoundnessSlack) continue;
                if (misclassified(net, cb.minimizers[s], prop.label)) {
                    out.counterexample = cb.minimizers[s];
                    out.margin_lower_bound = std::min(global_lb, b);
                    return finish(Verdict::Falsified);
                }
            }
            queue.push({std::move(child_cs), b, seq++});
        }

        double open_min = queue.empty() ? std::numeric_limits<double>::infinity()
                                        : queue.top().bound;
        global_lb = std::max(global_lb, std::min(open_min, leaf_min));
        if (budget.bound_trace) budget.bound_trace->push_back(global_lb);
    }

    if (std::isfinite(leaf_min)) {
        out.margin_lower_bound = leaf_min;
        return finish(Verdict::Unknown);
    }
    out.margin_lower_bound =
        std::isfinite(proven_min) ? proven_min : out.margin_lower_bound;
    return finish(Verdict::Verified);
}

VerificationOutcome verify(const NetworkF& net, const RobustnessProperty& prop,
                           const VerifyBudget& budget) {
    return verify(widen(net), prop, budget);
}

double lipschitz_bound(const NetworkD& net) {
    std::vector<double> cum(net.layers.size(), 0.0);
    double prev = 1.0;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const Layer<double>& L = net.layers[i];
        double cur = prev;
        switch (L.kind) {
            case LayerKind::Conv2D: {
                std::size_t O = L.weights.shape[0];
                std::size_t per = L.weights.numel() / O;
                double worst = 0.0;
                for (std::size_t o = 0; o < O; ++o) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < per; ++j)
                        s += std::fabs(L.weights[o * per + j]);
                    worst = std::max(worst, s);
                }
                cur = prev * worst;
                break;
            }
            case LayerKind::Linear: {
                std::size_t O = L.weights.shape[0], I = L.weights.shape[1];
                double worst = 0.0;
                for (std::size_t o = 0; o < O; ++o) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < I; ++j)
                        s += std::fabs(L.weights[o * I + j]);
                    worst = std::max(worst, s);
                }
                cur = prev * worst;
                break;
            }
            case LayerKind::ResidualAdd:
                cur = prev + cum[L.skip_source];
                break;
            case LayerKind::ReLU:
            case LayerKind::Flatten:
            case LayerKind::GlobalAvgPool:
                break;
        }
        cum[i] = cur;
        prev = cur;
    }
    return prev;
}

OracleVerdict exact_oracle(const NetworkD& net, const RobustnessProperty& prop,
                           double tolerance) {
    std::size_t dim = prop.anchor.numel();
    if (dim > 2) throw Error("exact_oracle: input dimension must be <= 2");
    if (tolerance <= 0.0) throw Error("exact_oracle: tolerance must be positive");

    double lip_margin = 2.0 * lipschitz_bound(net);
    double h = tolerance / std::max(lip_margin, 1e-12);

    std::vector<std::size_t> steps(dim);
    std::size_t total = 1;
    for (std::size_t d = 0; d < dim; ++d) {
        double width = prop.upper[d] - prop.lower[d];
        steps[d] = width <= 0.0
                       ? 1
                       : static_cast<std::size_t>(std::ceil(width / h)) + 1;
        total *= steps[d];
        if (total > 50'000'000)
            throw Error("exact_oracle: grid too fine for this tolerance");
    }

    double grid_min = std::numeric_limits<double>::infinity();
    TensorD x = prop.anchor;
    for (std::size_t g = 0; g < total; ++g) {
        std::size_t rem = g;
        for (std::size_t d = 0; d < dim; ++d) {
            std::size_t k = rem % steps[d];
            rem /= steps[d];
            x[d] = steps[d] == 1
                       ? prop.lower[d]
                       : prop.lower[d] + (prop.upper[d] - prop.lower[d]) *
                                             static_cast<double>(k) /
                                             static_cast<double>(steps[d] - 1);
        }
        TensorD logits = forward(net, x);
        if (argmax_class(logits) != prop.label) return OracleVerdict::Nonrobust;
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < logits.numel(); ++j) {
            if (static_cast<int>(j) == prop.label) continue;
            m = std::min(m, logits[prop.label] - logits[j]);
        }
        grid_min = std::min(grid_min, m);
    }
    return grid_min > tolerance ? OracleVerdict::Robust : OracleVerdict::Marginal;
}

} // namespace pcv

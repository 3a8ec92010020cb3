#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcv/rng.hpp"
#include "pcv/tensor.hpp"

namespace pcv {

enum class LayerKind { Conv2D, Linear, ReLU, Flatten, GlobalAvgPool, ResidualAdd };

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

struct Shape3 {
    std::size_t c = 0, h = 0, w = 0;
    std::size_t numel() const { return c * h * w; }
    bool operator==(const Shape3&) const = default;
};

template <typename T>
struct Layer {
    LayerKind kind{};
    Tensor<T> weights;       // Conv2D: out*in*kh*kw, Linear: out*in
    Tensor<T> bias;          // Conv2D/Linear: out
    int stride = 1;          // Conv2D only
    int padding = 0;         // Conv2D only
    int skip_source = -1;    // ResidualAdd only: index of an earlier layer
    bool prunable = false;   // designated Conv2D layers only
    Tensor<T> mask;          // same shape as weights when prunable, else empty
};

template <typename T>
struct Network {
    std::vector<Layer<T>> layers;
    Shape3 input_shape;
    std::size_t num_classes = 0;
};

using NetworkF = Network<float>;
using NetworkD = Network<double>;

// Per-layer gradients (empty tensors for non-parametric layers) plus the
// gradient with respect to the network input.
template <typename T>
struct Gradients {
    std::vector<Tensor<T>> weight_grads;
    std::vector<Tensor<T>> bias_grads;
    Tensor<T> input_grad;
};

// Output shape of every layer, validated against declared weight shapes.
// Throws Error naming the offending layer on any inconsistency.
template <typename T>
std::vector<Shape3> layer_output_shapes(const Network<T>& net);

// Standard zero-padded cross-correlation.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights,
                 const Tensor<T>& bias, int stride, int padding);

// All intermediate activations, one per layer (needed for residual skips
// and for backward).
template <typename T>
std::vector<Tensor<T>> forward_all(const Network<T>& net, const Tensor<T>& x);

template <typename T>
Tensor<T> forward(const Network<T>& net, const Tensor<T>& x);

template <typename T>
int predict(const Network<T>& net, const Tensor<T>& x);

// Backpropagation from a gradient on the logits. `acts` must come from
// forward_all on the same (net, x).
template <typename T>
Gradients<T> backward(const Network<T>& net, const Tensor<T>& x,
                      const std::vector<Tensor<T>>& acts,
                      const Tensor<T>& loss_grad);

// Conv stem -> ReLU -> [conv -> ReLU -> conv -> residual add -> ReLU]
// -> global average pool -> flatten -> linear head. Four weight layers;
// the three convs are prunable, the head is not. Weights start at zero,
// masks at one.
NetworkF make_resnet4(std::size_t channels, Shape3 input_shape,
                      std::size_t num_classes);

// He-uniform init of all weight tensors, biases zero.
void init_he_uniform(NetworkF& net, Rng& rng);

// Re-zero every masked weight (no-op for unmasked layers).
template <typename T>
void apply_masks(Network<T>& net);

NetworkD widen(const NetworkF& net);

} // namespace pcv

#include "pcv/network.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace pcv {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv2D: return "conv2d";
        case LayerKind::Linear: return "linear";
        case LayerKind::ReLU: return "relu";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::GlobalAvgPool: return "global_avg_pool";
        case LayerKind::ResidualAdd: return "residual_add";
    }
    return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
    if (name == "conv2d") return LayerKind::Conv2D;
    if (name == "linear") return LayerKind::Linear;
    if (name == "relu") return LayerKind::ReLU;
    if (name == "flatten") return LayerKind::Flatten;
    if (name == "global_avg_pool") return LayerKind::GlobalAvgPool;
    if (name == "residual_add") return LayerKind::ResidualAdd;
    throw Error("unknown layer kind: " + name);
}

namespace {

[[noreturn]] void layer_error(std::size_t idx, LayerKind kind, const std::string& what) {
    std::ostringstream os;
    os << "layer " << idx << " (" << layer_kind_name(kind) << "): " << what;
    throw Error(os.str());
}

std::size_t conv_out_dim(std::size_t in, int pad, std::size_t k, int stride) {
    long long num = static_cast<long long>(in) + 2ll * pad - static_cast<long long>(k);
    if (num < 0 || stride <= 0) return 0;
    return static_cast<std::size_t>(num / stride) + 1;
}

} // namespace

template <typename T>
std::vector<Shape3> layer_output_shapes(const Network<T>& net) {
    std::vector<Shape3> shapes;
    shapes.reserve(net.layers.size());
    Shape3 cur = net.input_shape;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const Layer<T>& L = net.layers[i];
        switch (L.kind) {
            case LayerKind::Conv2D: {
                if (L.weights.shape.size() != 4)
                    layer_error(i, L.kind, "weights must be 4-d");
                std::size_t O = L.weights.shape[0], I = L.weights.shape[1];
                std::size_t kh = L.weights.shape[2], kw = L.weights.shape[3];
                if (I != cur.c)
                    layer_error(i, L.kind, "input channel mismatch");
                if (L.bias.numel() != O)
                    layer_error(i, L.kind, "bias size mismatch");
                std::size_t oh = conv_out_dim(cur.h, L.padding, kh, L.stride);
                std::size_t ow = conv_out_dim(cur.w, L.padding, kw, L.stride);
                if (oh == 0 || ow == 0)
                    layer_error(i, L.kind, "non-positive output dims");
                cur = {O, oh, ow};
                break;
            }
            case LayerKind::Linear: {
                if (L.weights.shape.size() != 2)
                    layer_error(i, L.kind, "weights must be 2-d");
                std::size_t O = L.weights.shape[0], I = L.weights.shape[1];
                if (I != cur.numel())
                    layer_error(i, L.kind, "input size mismatch");
                if (L.bias.numel() != O)
                    layer_error(i, L.kind, "bias size mismatch");
                cur = {O, 1, 1};
                break;
            }
            case LayerKind::ReLU:
                break;
            case LayerKind::Flatten:
                cur = {cur.numel(), 1, 1};
                break;
            case LayerKind::GlobalAvgPool:
                cur = {cur.c, 1, 1};
                break;
            case LayerKind::ResidualAdd: {
                if (L.skip_source < 0 || static_cast<std::size_t>(L.skip_source) >= i)
                    layer_error(i, L.kind, "skip_source must reference an earlier layer");
                if (!(shapes[L.skip_source] == cur))
                    layer_error(i, L.kind, "skip shape mismatch");
                break;
            }
        }
        shapes.push_back(cur);
    }
    return shapes;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights,
                 const Tensor<T>& bias, int stride, int padding) {
    if (input.shape.size() != 3 || weights.shape.size() != 4)
        throw Error("conv2d: input must be 3-d, weights 4-d");
    std::size_t C = input.shape[0], H = input.shape[1], W = input.shape[2];
    std::size_t O = weights.shape[0], I = weights.shape[1];
    std::size_t kh = weights.shape[2], kw = weights.shape[3];
    if (I != C) throw Error("conv2d: channel mismatch");
    if (bias.numel() != 0 && bias.numel() != O)
        throw Error("conv2d: bias size mismatch");
    std::size_t OH = conv_out_dim(H, padding, kh, stride);
    std::size_t OW = conv_out_dim(W, padding, kw, stride);
    if (OH == 0 || OW == 0) throw Error("conv2d: non-positive output dims");

    Tensor<T> out({O, OH, OW});
    const T* in = input.data.data();
    const T* w = weights.data.data();
    T* o = out.data.data();
    for (std::size_t oc = 0; oc < O; ++oc) {
        T b = bias.numel() ? bias[oc] : T(0);
        for (std::size_t oy = 0; oy < OH; ++oy) {
            for (std::size_t ox = 0; ox < OW; ++ox) {
                T acc = b;
                long long iy0 = static_cast<long long>(oy) * stride - padding;
                long long ix0 = static_cast<long long>(ox) * stride - padding;
                for (std::size_t ic = 0; ic < C; ++ic) {
                    const T* wrow = w + ((oc * C + ic) * kh) * kw;
                    const T* irow = in + ic * H * W;
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        long long iy = iy0 + static_cast<long long>(ky);
                        if (iy < 0 || iy >= static_cast<long long>(H)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            long long ix = ix0 + static_cast<long long>(kx);
                            if (ix < 0 || ix >= static_cast<long long>(W)) continue;
                            acc += wrow[ky * kw + kx] * irow[iy * W + ix];
                        }
                    }
                }
                o[(oc * OH + oy) * OW + ox] = acc;
            }
        }
    }
    return out;
}

template <typename T>
std::vector<Tensor<T>> forward_all(const Network<T>& net, const Tensor<T>& x) {
    Shape3 xs{0, 0, 0};
    if (x.shape.size() == 3) xs = {x.shape[0], x.shape[1], x.shape[2]};
    if (!(xs == net.input_shape))
        throw Error("forward: input shape does not match network input shape");
    std::vector<Shape3> shapes = layer_output_shapes(net);

    std::vector<Tensor<T>> acts;
    acts.reserve(net.layers.size());
    const Tensor<T>* cur = &x;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const Layer<T>& L = net.layers[i];
        switch (L.kind) {
            case LayerKind::Conv2D:
                acts.push_back(conv2d(*cur, L.weights, L.bias, L.stride, L.padding));
                break;
            case LayerKind::Linear: {
                std::size_t O = L.weights.shape[0], I = L.weights.shape[1];
                Tensor<T> out({O, 1, 1});
                for (std::size_t o = 0; o < O; ++o) {
                    T acc = L.bias[o];
                    const T* wrow = L.weights.data.data() + o * I;
                    for (std::size_t j = 0; j < I; ++j) acc += wrow[j] * cur->data[j];
                    out[o] = acc;
                }
                acts.push_back(std::move(out));
                break;
            }
            case LayerKind::ReLU: {
                Tensor<T> out = *cur;
                for (T& v : out.data) v = v > T(0) ? v : T(0);
                acts.push_back(std::move(out));
                break;
            }
            case LayerKind::Flatten: {
                Tensor<T> out = *cur;
                out.shape = {out.numel(), 1, 1};
                acts.push_back(std::move(out));
                break;
            }
            case LayerKind::GlobalAvgPool: {
                std::size_t C = cur->shape[0], HW = cur->shape[1] * cur->shape[2];
                Tensor<T> out({C, 1, 1});
                for (std::size_t c = 0; c < C; ++c) {
                    T acc = 0;
                    for (std::size_t p = 0; p < HW; ++p) acc += cur->data[c * HW + p];
                    out[c] = acc / static_cast<T>(HW);
                }
                acts.push_back(std::move(out));
                break;
            }
            case LayerKind::ResidualAdd: {
                Tensor<T> out = *cur;
                const Tensor<T>& skip = acts[L.skip_source];
                for (std::size_t j = 0; j < out.numel(); ++j) out[j] += skip[j];
                acts.push_back(std::move(out));
                break;
            }
        }
        (void)shapes;
        cur = &acts.back();
    }
    return acts;
}

template <typename T>
Tensor<T> forward(const Network<T>& net, const Tensor<T>& x) {
    std::vector<Tensor<T>> acts = forward_all(net, x);
    Tensor<T> logits = std::move(acts.back());
    logits.shape = {logits.numel()};
    return logits;
}

template <typename T>
int predict(const Network<T>& net, const Tensor<T>& x) {
    return argmax_class(forward(net, x));
}

namespace {

// grad of conv output w.r.t. input: accumulate through the same index map
template <typename T>
void conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                     int stride, int padding, const Tensor<T>& grad_out,
                     Tensor<T>& grad_in, Tensor<T>& grad_w, Tensor<T>& grad_b) {
    std::size_t C = input.shape[0], H = input.shape[1], W = input.shape[2];
    std::size_t O = weights.shape[0];
    std::size_t kh = weights.shape[2], kw = weights.shape[3];
    std::size_t OH = grad_out.shape[1], OW = grad_out.shape[2];

    for (std::size_t oc = 0; oc < O; ++oc) {
        for (std::size_t oy = 0; oy < OH; ++oy) {
            for (std::size_t ox = 0; ox < OW; ++ox) {
                T g = grad_out[(oc * OH + oy) * OW + ox];
                if (g == T(0)) continue;
                grad_b[oc] += g;
                long long iy0 = static_cast<long long>(oy) * stride - padding;
                long long ix0 = static_cast<long long>(ox) * stride - padding;
                for (std::size_t ic = 0; ic < C; ++ic) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        long long iy = iy0 + static_cast<long long>(ky);
                        if (iy < 0 || iy >= static_cast<long long>(H)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            long long ix = ix0 + static_cast<long long>(kx);
                            if (ix < 0 || ix >= static_cast<long long>(W)) continue;
                            std::size_t ii = (ic * H + iy) * W + ix;
                            std::size_t wi = ((oc * C + ic) * kh + ky) * kw + kx;
                            grad_w[wi] += g * input[ii];
                            grad_in[ii] += g * weights[wi];
                        }
                    }
                }
            }
        }
    }
}

} // namespace

template <typename T>
Gradients<T> backward(const Network<T>& net, const Tensor<T>& x,
                      const std::vector<Tensor<T>>& acts,
                      const Tensor<T>& loss_grad) {
    if (acts.size() != net.layers.size())
        throw Error("backward: activation cache missing or stale");
    std::size_t n = net.layers.size();

    Gradients<T> grads;
    grads.weight_grads.resize(n);
    grads.bias_grads.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        grads.weight_grads[i] = Tensor<T>(net.layers[i].weights.shape);
        grads.bias_grads[i] = Tensor<T>(net.layers[i].bias.shape);
    }
    grads.input_grad = Tensor<T>(x.shape);

    // out_grads[i] accumulates dL/d(output of layer i); residual skips add
    // a second contribution to an earlier layer.
    std::vector<Tensor<T>> out_grads(n);
    out_grads[n - 1] = loss_grad;
    out_grads[n - 1].shape = acts[n - 1].shape;

    auto add_to = [](Tensor<T>& dst, const Tensor<T>& src,
                     const std::vector<std::size_t>& shape) {
        if (dst.numel() == 0) dst = Tensor<T>(shape);
        for (std::size_t j = 0; j < src.numel(); ++j) dst[j] += src[j];
    };

    for (std::size_t ri = n; ri-- > 0;) {
        if (out_grads[ri].numel() == 0)
            out_grads[ri] = Tensor<T>(acts[ri].shape);
        const Tensor<T>& g = out_grads[ri];
        const Layer<T>& L = net.layers[ri];
        const Tensor<T>& in = ri == 0 ? x : acts[ri - 1];
        Tensor<T>* gin_dst = ri == 0 ? &grads.input_grad : &out_grads[ri - 1];

        switch (L.kind) {
            case LayerKind::Conv2D: {
                Tensor<T> gin(in.shape);
                conv2d_backward(in, L.weights, L.stride, L.padding, g, gin,
                                grads.weight_grads[ri], grads.bias_grads[ri]);
                add_to(*gin_dst, gin, in.shape);
                break;
            }
            case LayerKind::Linear: {
                std::size_t O = L.weights.shape[0], I = L.weights.shape[1];
                Tensor<T> gin(in.shape);
                for (std::size_t o = 0; o < O; ++o) {
                    T go = g[o];
                    grads.bias_grads[ri][o] += go;
                    const T* wrow = L.weights.data.data() + o * I;
                    T* wg = grads.weight_grads[ri].data.data() + o * I;
                    for (std::size_t j = 0; j < I; ++j) {
                        wg[j] += go * in.data[j];
                        gin[j] += go * wrow[j];
                    }
                }
                add_to(*gin_dst, gin, in.shape);
                break;
            }
            case LayerKind::ReLU: {
                Tensor<T> gin(in.shape);
                for (std::size_t j = 0; j < in.numel(); ++j)
                    gin[j] = in[j] > T(0) ? g[j] : T(0);
                add_to(*gin_dst, gin, in.shape);
                break;
            }
            case LayerKind::Flatten: {
                Tensor<T> gin = g;
                gin.shape = in.shape;
                add_to(*gin_dst, gin, in.shape);
                break;
            }
            case LayerKind::GlobalAvgPool: {
                std::size_t C = in.shape[0], HW = in.shape[1] * in.shape[2];
                Tensor<T> gin(in.shape);
                for (std::size_t c = 0; c < C; ++c) {
                    T v = g[c] / static_cast<T>(HW);
                    for (std::size_t p = 0; p < HW; ++p) gin[c * HW + p] = v;
                }
                add_to(*gin_dst, gin, in.shape);
                break;
            }
            case LayerKind::ResidualAdd: {
                add_to(*gin_dst, g, in.shape);
                add_to(out_grads[L.skip_source], g, acts[L.skip_source].shape);
                break;
            }
        }
    }
    return grads;
}

NetworkF make_resnet4(std::size_t channels, Shape3 input_shape,
                      std::size_t num_classes) {
    NetworkF net;
    net.input_shape = input_shape;
    net.num_classes = num_classes;

    auto conv = [&](std::size_t in_c, std::size_t out_c, bool prunable) {
        Layer<float> L;
        L.kind = LayerKind::Conv2D;
        L.weights = TensorF({out_c, in_c, 3, 3});
        L.bias = TensorF({out_c});
        L.stride = 1;
        L.padding = 1;
        L.prunable = prunable;
        if (prunable) {
            L.mask = TensorF({out_c, in_c, 3, 3});
            for (float& m : L.mask.data) m = 1.0f;
        }
        return L;
    };
    auto simple = [](LayerKind k) {
        Layer<float> L;
        L.kind = k;
        return L;
    };

    net.layers.push_back(conv(input_shape.c, channels, true)); // 0 stem
    net.layers.push_back(simple(LayerKind::ReLU));             // 1
    net.layers.push_back(conv(channels, channels, true));      // 2 block conv a
    net.layers.push_back(simple(LayerKind::ReLU));             // 3
    net.layers.push_back(conv(channels, channels, true));      // 4 block conv b
    Layer<float> res = simple(LayerKind::ResidualAdd);         // 5 skip of block input
    res.skip_source = 1;
    net.layers.push_back(res);
    net.layers.push_back(simple(LayerKind::ReLU));             // 6
    net.layers.push_back(simple(LayerKind::GlobalAvgPool));    // 7
    net.layers.push_back(simple(LayerKind::Flatten));          // 8
    Layer<float> head;                                         // 9
    head.kind = LayerKind::Linear;
    head.weights = TensorF({num_classes, channels});
    head.bias = TensorF({num_classes});
    net.layers.push_back(head);

    layer_output_shapes(net); // validate
    return net;
}

void init_he_uniform(NetworkF& net, Rng& rng) {
    for (Layer<float>& L : net.layers) {
        if (L.weights.numel() == 0) continue;
        std::size_t fan_in = 1;
        if (L.kind == LayerKind::Conv2D)
            fan_in = L.weights.shape[1] * L.weights.shape[2] * L.weights.shape[3];
        else if (L.kind == LayerKind::Linear)
            fan_in = L.weights.shape[1];
        double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (float& w : L.weights.data)
            w = static_cast<float>(rng.uniform(-bound, bound));
        for (float& b : L.bias.data) b = 0.0f;
    }
    apply_masks(net);
}

template <typename T>
void apply_masks(Network<T>& net) {
    for (Layer<T>& L : net.layers) {
        if (!L.prunable || L.mask.numel() == 0) continue;
        for (std::size_t j = 0; j < L.weights.numel(); ++j)
            if (L.mask[j] == T(0)) L.weights[j] = T(0);
    }
}

NetworkD widen(const NetworkF& net) {
    NetworkD out;
    out.input_shape = net.input_shape;
    out.num_classes = net.num_classes;
    out.layers.reserve(net.layers.size());
    for (const Layer<float>& L : net.layers) {
        Layer<double> D;
        D.kind = L.kind;
        D.weights = L.weights.template cast<double>();
        D.bias = L.bias.template cast<double>();
        D.stride = L.stride;
        D.padding = L.padding;
        D.skip_source = L.skip_source;
        D.prunable = L.prunable;
        D.mask = L.mask.template cast<double>();
        out.layers.push_back(std::move(D));
    }
    return out;
}

template std::vector<Shape3> layer_output_shapes(const Network<float>&);
template std::vector<Shape3> layer_output_shapes(const Network<double>&);
template Tensor<float> conv2d(const Tensor<float>&, const Tensor<float>&,
                              const Tensor<float>&, int, int);
template Tensor<double> conv2d(const Tensor<double>&, const Tensor<double>&,
                               const Tensor<double>&, int, int);
template std::vector<Tensor<float>> forward_all(const Network<float>&,
                                                const Tensor<float>&);
template std::vector<Tensor<double>> forward_all(const Network<double>&,
                                                 const Tensor<double>&);
template Tensor<float> forward(const Network<float>&, const Tensor<float>&);
template Tensor<double> forward(const Network<double>&, const Tensor<double>&);
template int predict(const Network<float>&, const Tensor<float>&);
template int predict(const Network<double>&, const Tensor<double>&);
template Gradients<float> backward(const Network<float>&, const Tensor<float>&,
                                   const std::vector<Tensor<float>>&,
                                   const Tensor<float>&);
template Gradients<double> backward(const Network<double>&, const Tensor<double>&,
                                    const std::vector<Tensor<double>>&,
                                    const Tensor<double>&);
template void apply_masks(Network<float>&);
template void apply_masks(Network<double>&);

} // namespace pcv

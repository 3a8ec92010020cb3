#include "pcv/model_io.hpp"

#include <cstring>
#include <fstream>

namespace pcv {

using nlohmann::json;

namespace {

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw Error("model file truncated: " + path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_f32_blob(std::ostream& os, const TensorF& t) {
    write_u64(os, t.numel() * 4);
    static_assert(sizeof(float) == 4);
    // assumes little-endian host (checked in save_model)
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.numel() * 4));
}

void read_f32_blob(std::istream& is, TensorF& t, const std::string& path) {
    std::uint64_t len = read_u64(is, path);
    if (len != t.numel() * 4)
        throw Error("model blob length mismatch in " + path);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(len));
    if (!is) throw Error("model file truncated: " + path);
}

void write_mask_blob(std::ostream& os, const TensorF& mask) {
    std::uint64_t n = mask.numel();
    std::vector<unsigned char> packed((n + 7) / 8, 0);
    for (std::uint64_t i = 0; i < n; ++i)
        if (mask[i] != 0.0f) packed[i / 8] |= static_cast<unsigned char>(1u << (i % 8));
    write_u64(os, packed.size());
    os.write(reinterpret_cast<const char*>(packed.data()),
             static_cast<std::streamsize>(packed.size()));
}

void read_mask_blob(std::istream& is, TensorF& mask, const std::string& path) {
    std::uint64_t len = read_u64(is, path);
    std::uint64_t n = mask.numel();
    if (len != (n + 7) / 8) throw Error("mask blob length mismatch in " + path);
    std::vector<unsigned char> packed(len);
    is.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(len));
    if (!is) throw Error("model file truncated: " + path);
    for (std::uint64_t i = 0; i < n; ++i)
        mask[i] = (packed[i / 8] >> (i % 8)) & 1u ? 1.0f : 0.0f;
}

bool host_is_little_endian() {
    std::uint32_t x = 1;
    unsigned char c;
    std::memcpy(&c, &x, 1);
    return c == 1;
}

} // namespace

void save_model(const std::string& path, const NetworkF& net, const ModelMeta& meta) {
    if (!host_is_little_endian())
        throw Error("pcv1 writer requires a little-endian host");

    json layers = json::array();
    std::size_t total_prunable = 0, total_masked = 0;
    for (const Layer<float>& L : net.layers) {
        json j;
        j["kind"] = layer_kind_name(L.kind);
        j["weight_shape"] = L.weights.shape;
        j["bias_shape"] = L.bias.shape;
        if (L.kind == LayerKind::Conv2D) {
            j["stride"] = L.stride;
            j["padding"] = L.padding;
        }
        if (L.kind == LayerKind::ResidualAdd) j["skip_source"] = L.skip_source;
        j["prunable"] = L.prunable;
        layers.push_back(std::move(j));
        if (L.prunable) {
            total_prunable += L.mask.numel();
            for (float m : L.mask.data)
                if (m == 0.0f) ++total_masked;
        }
    }

    json header;
    header["version"] = "pcv1";
    header["input_shape"] = {net.input_shape.c, net.input_shape.h, net.input_shape.w};
    header["num_classes"] = net.num_classes;
    header["layers"] = std::move(layers);
    header["seed"] = meta.seed;
    header["prune_ratio"] = meta.prune_ratio;
    header["hyperparameters"] = meta.hyperparameters;
    header["mask_summary"] = {{"prunable_weights", total_prunable},
                              {"masked_weights", total_masked}};

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open model file for write: " + path);
    std::string hs = header.dump();
    write_u64(os, hs.size());
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const Layer<float>& L : net.layers) {
        if (L.weights.numel() == 0) continue;
        write_f32_blob(os, L.weights);
        write_f32_blob(os, L.bias);
    }
    for (const Layer<float>& L : net.layers)
        if (L.prunable) write_mask_blob(os, L.mask);
    if (!os) throw Error("write failed: " + path);
}

LoadedModel load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open model file: " + path);
    std::uint64_t hlen = read_u64(is, path);
    if (hlen == 0 || hlen > (std::uint64_t{1} << 26))
        throw Error("bad model header length in " + path);
    std::string hs(hlen, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw Error("model file truncated: " + path);
    json header = json::parse(hs, nullptr, false);
    if (header.is_discarded()) throw Error("bad model header JSON: " + path);
    if (header.value("version", "") != std::string("pcv1"))
        throw Error("unsupported model version in " + path);

    LoadedModel lm;
    auto ishape = header.at("input_shape");
    lm.net.input_shape = {ishape.at(0).get<std::size_t>(),
                          ishape.at(1).get<std::size_t>(),
                          ishape.at(2).get<std::size_t>()};
    lm.net.num_classes = header.at("num_classes").get<std::size_t>();
    for (const json& j : header.at("layers")) {
        Layer<float> L;
        L.kind = layer_kind_from_name(j.at("kind").get<std::string>());
        // an empty shape means no parameters, not a scalar
        auto make = [](std::vector<std::size_t> s) {
            return s.empty() ? TensorF() : TensorF(std::move(s));
        };
        L.weights = make(j.at("weight_shape").get<std::vector<std::size_t>>());
        L.bias = make(j.at("bias_shape").get<std::vector<std::size_t>>());
        L.stride = j.value("stride", 1);
        L.padding = j.value("padding", 0);
        L.skip_source = j.value("skip_source", -1);
        L.prunable = j.value("prunable", false);
        if (L.prunable) L.mask = TensorF(L.weights.shape);
        lm.net.layers.push_back(std::move(L));
    }
    lm.meta.seed = header.value("seed", std::uint64_t{0});
    lm.meta.prune_ratio = header.value("prune_ratio", 0.0);
    lm.meta.hyperparameters = header.value("hyperparameters", json::object());

    for (Layer<float>& L : lm.net.layers) {
        if (L.weights.numel() == 0) continue;
        read_f32_blob(is, L.weights, path);
        read_f32_blob(is, L.bias, path);
    }
    for (Layer<float>& L : lm.net.layers)
        if (L.prunable) read_mask_blob(is, L.mask, path);

    layer_output_shapes(lm.net);
    apply_masks(lm.net);
    return lm;
}

} // namespace pcv

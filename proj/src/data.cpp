#include "pcv/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "pcv/rng.hpp"

namespace pcv {

using nlohmann::json;

TensorF Dataset::image(std::size_t i) const {
    Shape3 s = item_shape();
    TensorF out({s.c, s.h, s.w});
    std::size_t n = s.numel();
    std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(i * n), n,
                out.data.begin());
    return out;
}

Dataset Dataset::subset(std::size_t n) const {
    if (n > size()) throw Error("subset: n exceeds dataset size");
    Dataset out;
    Shape3 s = item_shape();
    out.images = TensorF({n, s.c, s.h, s.w});
    std::copy_n(images.data.begin(), n * s.numel(), out.images.data.begin());
    out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
    out.num_classes = num_classes;
    out.split = split;
    return out;
}

namespace {

std::uint32_t read_be_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw Error("truncated IDX file: " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

} // namespace

Dataset load_mnist(const std::string& images_path, const std::string& labels_path,
                   const std::string& split) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw Error("cannot open IDX image file: " + images_path);
    std::uint32_t magic = read_be_u32(imgs, images_path);
    if (magic != 0x00000803u)
        throw Error("bad IDX image magic in " + images_path);
    std::uint32_t n = read_be_u32(imgs, images_path);
    std::uint32_t rows = read_be_u32(imgs, images_path);
    std::uint32_t cols = read_be_u32(imgs, images_path);

    std::ifstream lbls(labels_path, std::ios::binary);
    if (!lbls) throw Error("cannot open IDX label file: " + labels_path);
    std::uint32_t lmagic = read_be_u32(lbls, labels_path);
    if (lmagic != 0x00000801u)
        throw Error("bad IDX label magic in " + labels_path);
    std::uint32_t ln = read_be_u32(lbls, labels_path);
    if (ln != n)
        throw Error("IDX image/label count mismatch between " + images_path +
                    " and " + labels_path);

    Dataset ds;
    ds.split = split;
    ds.num_classes = 10;
    ds.images = TensorF({n, 1, rows, cols});
    std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
    for (std::uint32_t i = 0; i < n; ++i) {
        imgs.read(reinterpret_cast<char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size()));
        if (!imgs) throw Error("truncated IDX file: " + images_path);
        float* dst = ds.images.data.data() + std::size_t(i) * buf.size();
        for (std::size_t j = 0; j < buf.size(); ++j)
            dst[j] = static_cast<float>(buf[j]) / 255.0f;
    }
    ds.labels.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        unsigned char b;
        lbls.read(reinterpret_cast<char*>(&b), 1);
        if (!lbls) throw Error("truncated IDX file: " + labels_path);
        if (b > 9) throw Error("label out of range in " + labels_path);
        ds.labels[i] = b;
    }
    return ds;
}

namespace {

void gen_frost_image(Rng& rng, std::size_t size, bool frost, float* out) {
    std::size_t H = size, W = size;
    std::vector<double> terrain(H * W, 0.0);

    // low-frequency terrain: three seeded cosine waves
    for (int k = 0; k < 3; ++k) {
        double amp = rng.uniform(0.5, 1.0);
        double fx = rng.uniform(0.5, 3.0);
        double fy = rng.uniform(0.5, 3.0);
        double phase = rng.uniform(0.0, 2.0 * M_PI);
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                terrain[y * W + x] +=
                    amp * std::cos(2.0 * M_PI *
                                       (fx * static_cast<double>(x) / W +
                                        fy * static_cast<double>(y) / H) +
                                   phase);
    }
    double lo = terrain[0], hi = terrain[0];
    for (double v : terrain) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double span = hi - lo;
    for (double& v : terrain)
        v = span > 0 ? 0.2 + 0.4 * (v - lo) / span : 0.4;

    for (double& v : terrain) v += rng.uniform(-0.05, 0.05);

    if (frost) {
        // elliptical speckle region covering 10-40% of the image
        double frac = rng.uniform(0.1, 0.4);
        double area = frac * static_cast<double>(H * W);
        double aspect = rng.uniform(0.5, 2.0);
        double a = std::sqrt(area * aspect / M_PI);
        double b = area / (M_PI * a);
        double cx = rng.uniform(0.25 * W, 0.75 * W);
        double cy = rng.uniform(0.25 * H, 0.75 * H);
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                double dx = (static_cast<double>(x) - cx) / a;
                double dy = (static_cast<double>(y) - cy) / b;
                if (dx * dx + dy * dy <= 1.0 && rng.uniform() < 0.05)
                    terrain[y * W + x] += 0.35;
            }
        }
    }

    for (std::size_t j = 0; j < H * W; ++j)
        out[j] = static_cast<float>(std::clamp(terrain[j], 0.0, 1.0));
}

Dataset gen_frost_split(std::uint64_t seed, const std::string& split, std::size_t n,
                        std::size_t size) {
    Dataset ds;
    ds.split = split;
    ds.num_classes = 2;
    ds.images = TensorF({n, 1, size, size});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        int label = static_cast<int>(i % 2);
        Rng rng = Rng::stream(seed, "frost:" + split + ":" + std::to_string(i));
        gen_frost_image(rng, size, label == 1,
                        ds.images.data.data() + i * size * size);
        ds.labels[i] = label;
    }
    return ds;
}

} // namespace

FrostSurrogate gen_frost_surrogate(std::uint64_t seed, std::size_t n_train,
                                   std::size_t n_test, std::size_t size) {
    if (n_train == 0 || n_test == 0)
        throw Error("gen_frost_surrogate: split sizes must be positive");
    if (size < 8) throw Error("gen_frost_surrogate: size must be >= 8");
    FrostSurrogate out;
    out.train = gen_frost_split(seed, "train", n_train, size);
    out.test = gen_frost_split(seed, "test", n_test, size);
    return out;
}

std::vector<VerificationInput> select_verification_inputs(const Dataset& ds,
                                                          std::size_t n) {
    if (n > ds.size())
        throw Error("select_verification_inputs: n exceeds dataset size");
    std::vector<VerificationInput> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({i, ds.image(i), ds.labels[i]});
    return out;
}

namespace {

void write_u64le(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64le(std::istream& is, const std::string& path) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw Error("truncated dataset file: " + path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

} // namespace

void save_dataset(const std::string& path, const Dataset& ds, std::uint64_t seed,
                  std::size_t gen_size) {
    json header;
    header["version"] = "pcv1";
    header["kind"] = "dataset";
    header["seed"] = seed;
    header["gen_size"] = gen_size;
    header["shape"] = ds.images.shape;
    header["num_classes"] = ds.num_classes;
    header["split"] = ds.split;

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open dataset file for write: " + path);
    std::string hs = header.dump();
    write_u64le(os, hs.size());
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    write_u64le(os, ds.images.numel() * 4);
    os.write(reinterpret_cast<const char*>(ds.images.data.data()),
             static_cast<std::streamsize>(ds.images.numel() * 4));
    write_u64le(os, ds.labels.size() * 4);
    for (int l : ds.labels) {
        std::uint32_t v = static_cast<std::uint32_t>(l);
        unsigned char b[4] = {static_cast<unsigned char>(v),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
        os.write(reinterpret_cast<const char*>(b), 4);
    }
    if (!os) throw Error("dataset write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open dataset file: " + path);
    std::uint64_t hlen = read_u64le(is, path);
    if (hlen == 0 || hlen > (std::uint64_t{1} << 26))
        throw Error("bad dataset header length: " + path);
    std::string hs(hlen, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw Error("truncated dataset file: " + path);
    json header = json::parse(hs, nullptr, false);
    if (header.is_discarded() || header.value("version", "") != std::string("pcv1"))
        throw Error("bad dataset header: " + path);

    Dataset ds;
    ds.images = TensorF(header.at("shape").get<std::vector<std::size_t>>());
    ds.num_classes = header.at("num_classes").get<std::size_t>();
    ds.split = header.value("split", "test");
    std::uint64_t blen = read_u64le(is, path);
    if (blen != ds.images.numel() * 4)
        throw Error("dataset image blob length mismatch: " + path);
    is.read(reinterpret_cast<char*>(ds.images.data.data()),
            static_cast<std::streamsize>(blen));
    std::uint64_t llen = read_u64le(is, path);
    ds.labels.resize(llen / 4);
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        unsigned char b[4];
        is.read(reinterpret_cast<char*>(b), 4);
        ds.labels[i] = static_cast<int>(std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
                                        (std::uint32_t(b[2]) << 16) |
                                        (std::uint32_t(b[3]) << 24));
    }
    if (!is) throw Error("truncated dataset file: " + path);
    return ds;
}

} // namespace pcv

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcv/network.hpp"
#include "pcv/tensor.hpp"

namespace pcv {

struct Dataset {
    TensorF images; // N x C x H x W, values in [0,1]
    std::vector<int> labels;
    std::size_t num_classes = 0;
    std::string split; // "train" | "test"

    std::size_t size() const { return labels.size(); }
    Shape3 item_shape() const {
        return {images.shape[1], images.shape[2], images.shape[3]};
    }

    TensorF image(std::size_t i) const;

    // First n items, preserving stored order.
    Dataset subset(std::size_t n) const;
};

// IDX ingestion, big-endian dims per the standard. Pixels scaled byte/255.
Dataset load_mnist(const std::string& images_path, const std::string& labels_path,
                   const std::string& split);

struct FrostSurrogate {
    Dataset train;
    Dataset test;
};

// Deterministic synthetic two-class image set: class 0 is smooth cosine
// terrain with light noise, class 1 adds a speckle field inside a random
// elliptical region. Balanced classes, labels exact by construction.
FrostSurrogate gen_frost_surrogate(std::uint64_t seed, std::size_t n_train,
                                   std::size_t n_test, std::size_t size);

struct VerificationInput {
    std::size_t index;
    TensorF image;
    int label;
};

// The first n test items in stored order.
std::vector<VerificationInput> select_verification_inputs(const Dataset& ds,
                                                          std::size_t n);

// Surrogate reproducibility manifest + "pcv1"-style tensor blob export.
void save_dataset(const std::string& path, const Dataset& ds,
                  std::uint64_t seed, std::size_t gen_size);
Dataset load_dataset(const std::string& path);

} // namespace pcv

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "pertfool/dataset.hpp"
#include "pertfool/rng.hpp"
#include "pertfool/tensor.hpp"

namespace pertfool {

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

struct Conv2d {
    std::size_t kh = 3, kw = 3;
    std::size_t in_ch = 1, out_ch = 1;
    std::size_t stride = 1;
    std::size_t pad = 0;
    Tensor weights;  // (kh, kw, in_ch, out_ch)
    Tensor bias;     // (out_ch)
};

struct Relu {};

struct MaxPool2d {
    std::size_t k = 2;
    std::size_t stride = 2;
};

struct Flatten {};

struct Dense {
    std::size_t in = 1, out = 1;
    Tensor weights;  // (in, out)
    Tensor bias;     // (out)
};

using LayerSpec = std::variant<Conv2d, Relu, MaxPool2d, Flatten, Dense>;

const char* layer_kind_name(const LayerSpec& layer);

/// Output shape of a layer for a given input shape. Throws ConfigError on
/// inconsistent geometry (stride 0, kernel larger than input, ...).
std::vector<std::size_t> layer_output_shape(const LayerSpec& layer,
                                            const std::vector<std::size_t>& in);

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

/// Layered differentiable classifier over [0, 255] images. Immutable while
/// shared; training is the only mutating entry point and owns the instance.
struct Classifier {
    std::vector<LayerSpec> layers;
    std::size_t conv_base_end = 0;  // number of layers forming the convolutional base
    int num_classes = 0;
    std::array<std::size_t, 3> input_shape{0, 0, 0};  // (H, W, C)

    static constexpr double dynamic_range_lo = 0.0;
    static constexpr double dynamic_range_hi = 255.0;

    /// Validates the whole shape chain and the conv-base invariants.
    void validate() const;

    std::vector<std::size_t> input_shape_vec() const {
        return {input_shape[0], input_shape[1], input_shape[2]};
    }
};

/// The reference desk-scale architecture:
/// conv(3x3,16,pad 1) - relu - maxpool(2) - conv(3x3,32,pad 1) - relu -
/// maxpool(2) - flatten - dense(num_classes), conv base ending after the
/// second maxpool. Weights are He-uniform from the given seed.
Classifier make_reference_classifier(int num_classes, std::size_t h, std::size_t w,
                                     std::size_t c, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Forward / gradients
// ---------------------------------------------------------------------------

/// Forward pass, returns the num_classes logits.
Tensor forward(const Classifier& net, const Tensor& x);

/// Numerically stabilized -log softmax(logits)[label].
double cross_entropy(const Tensor& logits, int label);

/// Softmax probabilities of the logits (stable).
std::vector<double> softmax(const Tensor& logits);

/// argmax of softmax with lowest-index tie-breaking, plus its probability.
std::pair<int, double> predict_with_confidence(const Classifier& net, const Tensor& x);

/// Exact reverse-mode gradient of cross_entropy(forward(x), label) w.r.t. x.
Tensor input_gradient(const Classifier& net, const Tensor& x, int label);

/// Gradient plus the loss it belongs to, in one backward pass.
std::pair<Tensor, double> input_gradient_with_loss(const Classifier& net, const Tensor& x,
                                                   int label);

/// Activations after the last layer of the convolutional base.
Tensor conv_base_activations(const Classifier& net, const Tensor& x);

// ---------------------------------------------------------------------------
// Toy training (plain mini-batch SGD)
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::size_t epochs = 4;
    std::size_t batch_size = 32;
    double learning_rate = 0.05;
    std::uint64_t seed = 1;
};

struct TrainReport {
    double final_train_loss = 0.0;
    double test_accuracy = 0.0;
    std::vector<std::pair<double, double>> epoch_log;  // (mean train loss, test accuracy)
};

/// In-place SGD training. Deterministic for a fixed seed. Throws
/// TrainingError if the loss becomes non-finite.
TrainReport train(Classifier& net, const LabeledDataset& train_set,
                  const LabeledDataset& test_set, const TrainConfig& cfg);

double accuracy(const Classifier& net, const LabeledDataset& data, unsigned threads = 1);

}  // namespace pertfool

#pragma once

#include "aadv/graph.hpp"
#include "aadv/tensor.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace aadv {

enum class LayerKind : std::uint8_t { Dense = 1, Conv = 2, Relu = 3 };

struct Layer {
    LayerKind kind;
    // Dense: weights [in x out], bias [out]
    // Conv:  weights [k x k x c_in x c_out], bias [c_out]
    Tensor weights, bias;
    int stride = 1, pad = 0;
};

/// Frozen target model f: [0,1]^{w x h x c} -> R^K. Parameters are never
/// mutated by attack code (checksummed before/after every attack).
struct ClassifierModel {
    std::size_t width = 0, height = 0, channels = 0, classes = 0;
    std::vector<Layer> layers;

    /// Record the forward pass on a tape; returns the logits node ([K]).
    /// When param_ids is given, it receives the (weights, bias) input node
    /// ids of each parameterized layer, in layer order.
    int forward(ad::Graph& g, int x,
                std::vector<std::pair<int, int>>* param_ids = nullptr) const;

    Tensor predict_logits(const Tensor& image) const;
    /// argmax of logits, ties broken by lowest index.
    int predict_class(const Tensor& image) const;

    std::vector<std::size_t> input_shape() const { return {height, width, channels}; }
    std::size_t pixel_count() const { return width * height * channels; }
    std::uint64_t param_checksum() const;
};

struct Dataset {
    std::size_t width = 0, height = 0, channels = 0, classes = 0;
    std::vector<Tensor> images;
    std::vector<int> labels;
    std::vector<std::uint8_t> is_val;

    std::size_t size() const { return images.size(); }
};

int argmax_lowest(const Tensor& logits);

/// conv(3x3,8)-relu-conv(3x3,16)-relu-dense(K) on w x h x c inputs.
ClassifierModel make_conv_model(std::size_t w, std::size_t h, std::size_t c, std::size_t k,
                                std::uint64_t seed);

/// Single dense layer; used with 3x3x1 two-class instances by the
/// brute-force oracle tests.
ClassifierModel make_linear_model(std::size_t w, std::size_t h, std::size_t c, std::size_t k,
                                  std::uint64_t seed);

/// Procedural oriented-grating dataset: class k gets angle pi*k/K plus
/// per-sample phase and noise. Balanced (label = index mod K), every 5th
/// sample tagged validation, fully determined by the seed.
Dataset generate_synthetic(std::uint64_t seed, std::size_t count, std::size_t w, std::size_t h,
                           std::size_t c, std::size_t k);

struct TrainOptions {
    int epochs = 10;
    int batch_size = 16;
    double lr = 0.05;
    double momentum = 0.9;
    std::uint64_t seed = 0;
};

struct TrainHistory {
    std::vector<double> train_acc, val_acc;
    double final_val_acc() const { return val_acc.empty() ? 0.0 : val_acc.back(); }
};

/// Minibatch SGD with momentum on cross-entropy. Throws NumericError with
/// the epoch index if the loss goes non-finite.
TrainHistory train(ClassifierModel& model, const Dataset& data, const TrainOptions& opt);

double accuracy(const ClassifierModel& model, const Dataset& data, bool val_only);

// Binary container: magic "AADV", version u32, kind u8, little-endian payload.
void save_model(const ClassifierModel& model, const std::string& path);
ClassifierModel load_model(const std::string& path);
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

} // namespace aadv

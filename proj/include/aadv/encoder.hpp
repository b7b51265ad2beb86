#pragma once

#include "aadv/graph.hpp"
#include "aadv/tensor.hpp"

#include <cstdint>
#include <vector>

namespace aadv {

enum class EncoderKind : std::uint8_t { FullyConnected = 0, ConvSmall = 1 };

/// Trainable network H mapping a perturbation [h x w x c] to a pre-mask
/// tensor of the same spatial size. With channel_independent the output has
/// c channels; otherwise a single channel, broadcast over channels when the
/// mask is formed.
struct EncoderSpec {
    EncoderKind kind = EncoderKind::FullyConnected;
    std::size_t width = 0, height = 0, channels = 1;
    bool channel_independent = true;
    std::uint64_t seed = 0;

    std::size_t out_channels() const { return channel_independent ? channels : 1; }
    std::size_t in_size() const { return width * height * channels; }
    std::size_t out_size() const { return width * height * out_channels(); }
};

struct EncoderParams {
    EncoderSpec spec;
    // FullyConnected: { W [N x M], b [M] }
    // ConvSmall:      { K1 [3x3xc x8], b1 [8], K2 [3x3x8 x c_out], b2 [c_out] }
    std::vector<Tensor> params;
    std::vector<Tensor> velocity;

    /// Record H(delta) on the tape; returns the output node shaped
    /// [h x w x c_out]. param_ids receives the input node ids of params.
    int forward(ad::Graph& g, int delta, std::vector<int>* param_ids = nullptr) const;
};

/// Variance-preserving uniform init (scale 1/sqrt(fan_in)), zero biases,
/// deterministic per spec.seed.
EncoderParams init_encoder(const EncoderSpec& spec);

/// v <- momentum*v + grad; p <- p - lr*v. Throws NumericError on NaN grads.
void sgd_momentum_step(EncoderParams& enc, const std::vector<Tensor>& grads, double lr,
                       double momentum);

} // namespace aadv

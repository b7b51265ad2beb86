#include "aadv/encoder.hpp"

#include "aadv/rng.hpp"

#include <cmath>

namespace aadv {

namespace {

Tensor uniform_fanin(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
    return t;
}

} // namespace

EncoderParams init_encoder(const EncoderSpec& spec) {
    Rng rng(Rng::stream_seed(spec.seed, "encoder-init"));
    EncoderParams enc;
    enc.spec = spec;
    switch (spec.kind) {
    case EncoderKind::FullyConnected: {
        const std::size_t n = spec.in_size(), m = spec.out_size();
        enc.params = {uniform_fanin({n, m}, n, rng), Tensor({m})};
        break;
    }
    case EncoderKind::ConvSmall: {
        const std::size_t c = spec.channels, cout = spec.out_channels();
        enc.params = {uniform_fanin({3, 3, c, 8}, 9 * c, rng), Tensor({8}),
                      uniform_fanin({3, 3, 8, cout}, 9 * 8, rng), Tensor({cout})};
        break;
    }
    }
    for (const Tensor& p : enc.params) enc.velocity.emplace_back(p.shape());
    return enc;
}

int EncoderParams::forward(ad::Graph& g, int delta, std::vector<int>* param_ids) const {
    const Tensor& d = g.value(delta);
    if (d.shape() != std::vector<std::size_t>{spec.height, spec.width, spec.channels})
        throw DimensionError("encoder: perturbation shape " + d.shape_str() +
                             " does not match spec input");
    switch (spec.kind) {
    case EncoderKind::FullyConnected: {
        int w = g.input(params[0]);
        int b = g.input(params[1].reshaped({1, params[1].numel()}));
        if (param_ids) *param_ids = {w, b};
        int flat = g.reshape(delta, {1, spec.in_size()});
        int out = g.add(g.matmul(flat, w), b);
        return g.reshape(out, {spec.height, spec.width, spec.out_channels()});
    }
    case EncoderKind::ConvSmall: {
        int k1 = g.input(params[0]);
        int b1 = g.input(params[1]);
        int k2 = g.input(params[2]);
        int b2 = g.input(params[3]);
        if (param_ids) *param_ids = {k1, b1, k2, b2};
        int hidden = g.relu(g.bias_channels(g.conv2d(delta, k1, 1, 1), b1));
        return g.bias_channels(g.conv2d(hidden, k2, 1, 1), b2);
    }
    }
    throw std::logic_error("encoder: unknown kind");
}

void sgd_momentum_step(EncoderParams& enc, const std::vector<Tensor>& grads, double lr,
                       double momentum) {
    if (grads.size() != enc.params.size())
        throw DimensionError("sgd_momentum_step: gradient count mismatch");
    for (std::size_t pi = 0; pi < enc.params.size(); ++pi) {
        require_same_shape(enc.params[pi], grads[pi], "sgd_momentum_step");
        if (!grads[pi].all_finite())
            throw NumericError("sgd_momentum_step: non-finite gradient");
        Tensor& p = enc.params[pi];
        Tensor& v = enc.velocity[pi];
        const Tensor& grad = grads[pi];
        for (std::size_t i = 0; i < p.numel(); ++i) {
            v[i] = momentum * v[i] + grad[i];
            p[i] -= lr * v[i];
        }
    }
}

} // namespace aadv

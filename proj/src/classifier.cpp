#include "aadv/classifier.hpp"

#include "aadv/kernels.hpp"
#include "aadv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

namespace aadv {

int argmax_lowest(const Tensor& logits) {
    int best = 0;
    for (std::size_t i = 1; i < logits.numel(); ++i)
        if (logits[i] > logits[best]) best = static_cast<int>(i);
    return best;
}

int ClassifierModel::forward(ad::Graph& g, int x,
                             std::vector<std::pair<int, int>>* param_ids) const {
    int cur = x;
    bool flat = false;
    for (const Layer& layer : layers) {
        switch (layer.kind) {
        case LayerKind::Conv: {
            int k = g.input(layer.weights);
            int b = g.input(layer.bias);
            if (param_ids) param_ids->emplace_back(k, b);
            cur = g.bias_channels(g.conv2d(cur, k, layer.stride, layer.pad), b);
            break;
        }
        case LayerKind::Relu:
            cur = g.relu(cur);
            break;
        case LayerKind::Dense: {
            if (!flat) {
                cur = g.reshape(cur, {1, g.value(cur).numel()});
                flat = true;
            }
            int w = g.input(layer.weights);
            int b = g.input(layer.bias.reshaped({1, layer.bias.numel()}));
            if (param_ids) param_ids->emplace_back(w, b);
            cur = g.add(g.matmul(cur, w), b);
            break;
        }
        }
    }
    return g.reshape(cur, {g.value(cur).numel()});
}

Tensor ClassifierModel::predict_logits(const Tensor& image) const {
    if (image.shape() != input_shape())
        throw DimensionError("predict_logits: image shape " + image.shape_str() +
                             " does not match model input");
    ad::Graph g;
    int logits = forward(g, g.input(image));
    return g.value(logits);
}

int ClassifierModel::predict_class(const Tensor& image) const {
    return argmax_lowest(predict_logits(image));
}

std::uint64_t ClassifierModel::param_checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const Tensor& t) {
        for (double v : t.vec()) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            for (int s = 0; s < 64; s += 8) {
                h ^= (bits >> s) & 0xff;
                h *= 0x100000001b3ull;
            }
        }
    };
    for (const Layer& layer : layers) {
        mix(layer.weights);
        mix(layer.bias);
    }
    return h;
}

namespace {

Tensor uniform_fanin(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
    return t;
}

} // namespace

ClassifierModel make_conv_model(std::size_t w, std::size_t h, std::size_t c, std::size_t k,
                                std::uint64_t seed) {
    Rng rng(Rng::stream_seed(seed, "model-init"));
    ClassifierModel m;
    m.width = w;
    m.height = h;
    m.channels = c;
    m.classes = k;

    Layer c1{LayerKind::Conv, uniform_fanin({3, 3, c, 8}, 9 * c, rng), Tensor({8}), 1, 1};
    Layer c2{LayerKind::Conv, uniform_fanin({3, 3, 8, 16}, 9 * 8, rng), Tensor({16}), 1, 1};
    const std::size_t flat = w * h * 16;
    Layer d{LayerKind::Dense, uniform_fanin({flat, k}, flat, rng), Tensor({k}), 1, 0};
    m.layers = {c1, Layer{LayerKind::Relu, Tensor(), Tensor(), 1, 0}, c2,
                Layer{LayerKind::Relu, Tensor(), Tensor(), 1, 0}, d};
    return m;
}

ClassifierModel make_linear_model(std::size_t w, std::size_t h, std::size_t c, std::size_t k,
                                  std::uint64_t seed) {
    Rng rng(Rng::stream_seed(seed, "model-init"));
    ClassifierModel m;
    m.width = w;
    m.height = h;
    m.channels = c;
    m.classes = k;
    const std::size_t flat = w * h * c;
    Tensor weights({flat, k});
    for (std::size_t i = 0; i < weights.numel(); ++i) weights[i] = rng.uniform(-1.0, 1.0);
    m.layers = {Layer{LayerKind::Dense, std::move(weights), Tensor({k}), 1, 0}};
    return m;
}

Dataset generate_synthetic(std::uint64_t seed, std::size_t count, std::size_t w, std::size_t h,
                           std::size_t c, std::size_t k) {
    if (k < 2 || k > 10) throw std::invalid_argument("generate_synthetic: K must be in [2, 10]");
    if (w < 8 || h < 8) throw std::invalid_argument("generate_synthetic: need w,h >= 8");
    Rng rng(Rng::stream_seed(seed, "dataset"));
    Dataset d;
    d.width = w;
    d.height = h;
    d.channels = c;
    d.classes = k;
    const double freq = 2.5 * 2.0 * std::numbers::pi / static_cast<double>(std::min(w, h));
    for (std::size_t i = 0; i < count; ++i) {
        const int label = static_cast<int>(i % k);
        const double theta = std::numbers::pi * static_cast<double>(label) / static_cast<double>(k);
        const double cs = std::cos(theta), sn = std::sin(theta);
        // Fixed phase keeps the task solvable by a matched filter; the small
        // amplitude keeps decision boundaries close to the data.
        const double phase = 0.25 * std::numbers::pi;
        const double amp = rng.uniform(0.025, 0.035);
        Tensor img({h, w, c});
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const double base =
                    0.5 + amp * std::sin(freq * (static_cast<double>(x) * cs +
                                                 static_cast<double>(y) * sn) +
                                         phase);
                for (std::size_t ch = 0; ch < c; ++ch) {
                    double v = base + rng.uniform(-0.05, 0.05);
                    img[(y * w + x) * c + ch] = std::clamp(v, 0.0, 1.0);
                }
            }
        }
        d.images.push_back(std::move(img));
        d.labels.push_back(label);
        // per-block tagging keeps both splits class-balanced
        d.is_val.push_back((i / k) % 5 == 4 ? 1 : 0);
    }
    return d;
}

double accuracy(const ClassifierModel& model, const Dataset& data, bool val_only) {
    std::size_t total = 0, correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (val_only && !data.is_val[i]) continue;
        ++total;
        if (model.predict_class(data.images[i]) == data.labels[i]) ++correct;
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

TrainHistory train(ClassifierModel& model, const Dataset& data, const TrainOptions& opt) {
    if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
    Rng rng(Rng::stream_seed(opt.seed, "train-shuffle"));

    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (!data.is_val[i]) train_idx.push_back(i);

    struct Slot {
        Tensor gw, gb, vw, vb;
    };
    std::vector<Slot> slots(model.layers.size());
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        const Layer& layer = model.layers[li];
        if (layer.kind == LayerKind::Relu) continue;
        slots[li] = {Tensor(layer.weights.shape()), Tensor(layer.bias.shape()),
                     Tensor(layer.weights.shape()), Tensor(layer.bias.shape())};
    }

    TrainHistory hist;
    const auto& kt = kernels::active();
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        // Fisher-Yates with our own rng for cross-platform determinism
        for (std::size_t i = train_idx.size(); i > 1; --i)
            std::swap(train_idx[i - 1], train_idx[rng.below(i)]);

        for (std::size_t start = 0; start < train_idx.size();
             start += static_cast<std::size_t>(opt.batch_size)) {
            const std::size_t end =
                std::min(train_idx.size(), start + static_cast<std::size_t>(opt.batch_size));
            for (Slot& s : slots) {
                if (s.gw.numel() == 0) continue;
                s.gw = Tensor(s.gw.shape());
                s.gb = Tensor(s.gb.shape());
            }
            for (std::size_t bi = start; bi < end; ++bi) {
                const Tensor& img = data.images[train_idx[bi]];
                ad::Graph g;
                std::vector<std::pair<int, int>> params;
                int logits = model.forward(g, g.input(img), &params);
                int loss = g.softmax_ce(logits, data.labels[train_idx[bi]]);
                if (!std::isfinite(g.value(loss)[0]))
                    throw NumericError("train: non-finite loss at epoch " +
                                       std::to_string(epoch));
                g.backward(loss);
                std::size_t pi = 0;
                for (std::size_t li = 0; li < model.layers.size(); ++li) {
                    if (model.layers[li].kind == LayerKind::Relu) continue;
                    kt.add(slots[li].gw.data(), slots[li].gw.data(),
                           g.grad(params[pi].first).data(), slots[li].gw.numel());
                    kt.add(slots[li].gb.data(), slots[li].gb.data(),
                           g.grad(params[pi].second).data(), slots[li].gb.numel());
                    ++pi;
                }
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            for (std::size_t li = 0; li < model.layers.size(); ++li) {
                Layer& layer = model.layers[li];
                if (layer.kind == LayerKind::Relu) continue;
                Slot& s = slots[li];
                for (std::size_t i = 0; i < s.vw.numel(); ++i) {
                    s.vw[i] = opt.momentum * s.vw[i] + s.gw[i] * inv;
                    layer.weights[i] -= opt.lr * s.vw[i];
                }
                for (std::size_t i = 0; i < s.vb.numel(); ++i) {
                    s.vb[i] = opt.momentum * s.vb[i] + s.gb[i] * inv;
                    layer.bias[i] -= opt.lr * s.vb[i];
                }
            }
        }
        hist.train_acc.push_back(accuracy(model, data, false));
        hist.val_acc.push_back(accuracy(model, data, true));
    }
    return hist;
}

} // namespace aadv

#include "aadv/attack.hpp"

#include "aadv/kernels.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace aadv {

void AttackConfig::validate() const {
    if (eps < 0.0 || eps > 1.0) throw std::invalid_argument("AttackConfig: eps must be in [0, 1]");
    if (iters < 1) throw std::invalid_argument("AttackConfig: iters must be >= 1");
    if (c <= 0.0) throw std::invalid_argument("AttackConfig: C must be positive");
    if (gamma <= 0.0) throw std::invalid_argument("AttackConfig: gamma must be positive");
    if (!(alpha_start > 0.0 && alpha_start < alpha_end))
        throw std::invalid_argument("AttackConfig: need 0 < alpha_start < alpha_end");
    if (beta < 0.0) throw std::invalid_argument("AttackConfig: beta must be >= 0");
    if (mu < 0.0) throw std::invalid_argument("AttackConfig: mu must be >= 0");
    if (tau_bin <= 0.0) throw std::invalid_argument("AttackConfig: tau_bin must be positive");
}

Tensor init_delta(double eps, const std::vector<std::size_t>& shape, Rng& rng) {
    Tensor d(shape);
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] = rng.uniform(-eps, eps);
    return d;
}

double alpha_schedule(int t, int total, double alpha_start, double alpha_end) {
    if (t < 0 || t > total) throw std::invalid_argument("alpha_schedule: t outside [0, T]");
    if (t == 0) return alpha_start;
    if (t == total) return alpha_end;
    const double frac = static_cast<double>(t) / static_cast<double>(total);
    return alpha_start * std::pow(alpha_end / alpha_start, frac);
}

Tensor scaled_sigmoid_mask(const Tensor& h, double alpha) {
    if (alpha <= 0.0) throw std::invalid_argument("scaled_sigmoid_mask: alpha must be positive");
    Tensor m(h.shape());
    for (std::size_t i = 0; i < h.numel(); ++i) m[i] = ad::stable_sigmoid(alpha * h[i]);
    return m;
}

double dynamic_lambda(const Tensor& m, double c, double gamma) {
    std::size_t active = 0;
    for (std::size_t i = 0; i < m.numel(); ++i)
        if (m[i] > 0.5) ++active;
    return c + gamma * static_cast<double>(active) / static_cast<double>(m.numel());
}

bool momentum_grad_update(Tensor& g, const Tensor& grad, double mu) {
    require_same_shape(g, grad, "momentum_grad_update");
    double l1 = 0.0;
    for (std::size_t i = 0; i < grad.numel(); ++i) l1 += std::fabs(grad[i]);
    if (l1 < 1e-12) {
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= mu;
        return false;
    }
    const double inv = 1.0 / l1;
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] = mu * g[i] + grad[i] * inv;
    return true;
}

void pgd_step(Tensor& delta, const Tensor& g, double beta, double eps) {
    require_same_shape(delta, g, "pgd_step");
    for (std::size_t i = 0; i < delta.numel(); ++i) {
        const double s = (g[i] > 0.0) ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
        double d = delta[i] - beta * s;
        if (d > eps) d = eps;
        if (d < -eps) d = -eps;
        delta[i] = d;
    }
}

namespace {

constexpr int kMaxConsecutiveDegenerate = 50;
constexpr double kEncGradClip = 1.0;
// The encoder sees the perturbation in budget units (delta / eps, times a
// fixed gain) rather than raw pixel units. Raw deltas are O(eps), which
// leaves the encoder output stuck near zero and the mask unable to commit
// to 0/1 by the end of the alpha schedule.
constexpr double kEncInputGain = 8.0;

void check_inputs(const ClassifierModel& model, const Tensor& x, int target,
                  const AttackConfig& config) {
    config.validate();
    if (x.shape() != model.input_shape())
        throw DimensionError("attack: image shape " + x.shape_str() +
                             " does not match model input");
    for (std::size_t i = 0; i < x.numel(); ++i)
        if (x[i] < 0.0 || x[i] > 1.0)
            throw std::invalid_argument("attack: image values must lie in [0, 1]");
    if (target < 0 || static_cast<std::size_t>(target) >= model.classes)
        throw std::out_of_range("attack: target class out of range");
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double elapsed() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

/// x_adv = clamp(x + raw_pert, 0, 1); fills result image/perturbation/norm
/// fields and evaluates success on the finalized image.
void finalize_result(const ClassifierModel& model, const Tensor& x, int target,
                     const Tensor& raw_pert, AttackResult& res) {
    res.x_adv = Tensor(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        double v = x[i] + raw_pert[i];
        if (v < 0.0) v = 0.0;
        if (v > 1.0) v = 1.0;
        res.x_adv[i] = v;
    }
    res.perturbation = Tensor(x.shape());
    kernels::active().sub(res.perturbation.data(), res.x_adv.data(), x.data(), x.numel());
    res.perturbation_norms = norms(res.perturbation);
    res.success = model.predict_class(res.x_adv) == target;
}

void log_iteration(InvariantLog& log, const Tensor& delta, double eps, double lambda, double c,
                   double gamma, double alpha, double prev_alpha) {
    for (std::size_t i = 0; i < delta.numel(); ++i)
        if (std::fabs(delta[i]) > eps) {
            ++log.delta_linf_violations;
            break;
        }
    if (lambda < c || lambda > c + gamma) ++log.lambda_range_violations;
    if (alpha < prev_alpha) ++log.alpha_monotonic_violations;
}

AttackResult trivial_result(const ClassifierModel& model, const Tensor& x, int target) {
    AttackResult res;
    res.hard_mask = Tensor(x.shape());
    finalize_result(model, x, target, Tensor(x.shape()), res);
    return res;
}

/// Shared loop for run_attack (with_encoder) and baseline_no_encoder
/// (mask = sigmoid(alpha * delta) directly).
AttackResult masked_attack(const ClassifierModel& model, const Tensor& x, int target,
                           const AttackConfig& config, bool with_encoder) {
    check_inputs(model, x, target, config);
    Timer timer;
    if (config.eps == 0.0) return trivial_result(model, x, target);

    const std::uint64_t checksum_before = model.param_checksum();
    const std::size_t n = model.pixel_count();
    const std::size_t c = model.channels;
    const double n_inv = 1.0 / static_cast<double>(n);
    const bool broadcast = with_encoder && !config.channel_independent && c > 1;

    Rng delta_rng(Rng::stream_seed(config.seed, "delta-init"));
    Tensor delta = init_delta(config.eps, x.shape(), delta_rng);
    EncoderParams enc;
    if (with_encoder) {
        enc = init_encoder(EncoderSpec{config.encoder, model.width, model.height, c,
                                       config.channel_independent, config.seed});
    }
    Tensor g_mom(x.shape());
    const double beta = config.step();

    AttackResult res;
    res.invariants.alpha_first = alpha_schedule(0, config.iters, config.alpha_start, config.alpha_end);
    double prev_alpha = res.invariants.alpha_first;
    int consecutive_degenerate = 0;

    for (int t = 0; t < config.iters; ++t) {
        const double alpha =
            alpha_schedule(t, config.iters, config.alpha_start, config.alpha_end);

        ad::Graph g;
        const int xin = g.input(x);
        const int dn = g.input(delta);
        std::vector<int> enc_pids;
        const int hnode = with_encoder
                              ? enc.forward(g, g.scale(dn, kEncInputGain / config.eps), &enc_pids)
                              : dn;
        const int msmall = g.sigmoid(g.scale(hnode, alpha));
        const int mask = broadcast ? g.broadcast_channels(msmall, c) : msmall;
        const double lambda = dynamic_lambda(g.value(mask), config.c, config.gamma);

        const int logits = model.forward(g, g.add(xin, g.mul(dn, mask)));
        const int loss =
            g.add(g.softmax_ce(logits, target), g.scale(g.sum(mask), lambda * n_inv));
        if (!std::isfinite(g.value(loss)[0]))
            throw NumericError("attack: non-finite loss at iteration " + std::to_string(t));
        g.backward(loss);

        if (momentum_grad_update(g_mom, g.grad(dn), config.mu)) {
            consecutive_degenerate = 0;
        } else {
            ++res.degenerate_events;
            if (++consecutive_degenerate > kMaxConsecutiveDegenerate)
                throw NumericError("attack: persistently degenerate gradient (" +
                                   std::to_string(consecutive_degenerate) +
                                   " consecutive iterations at t=" + std::to_string(t) + ")");
        }
        pgd_step(delta, g_mom, beta, config.eps);

        if (with_encoder) {
            std::vector<Tensor> egrads;
            egrads.reserve(enc_pids.size());
            for (std::size_t pi = 0; pi < enc_pids.size(); ++pi)
                egrads.push_back(g.grad(enc_pids[pi]).reshaped(enc.params[pi].shape()));
            // The loss gradient w.r.t. the encoder scales with alpha, which
            // grows by orders of magnitude over the schedule; clip the global
            // norm so late-phase spikes cannot blow the encoder into
            // saturation.
            double sq = 0.0;
            for (const Tensor& eg : egrads)
                for (std::size_t i = 0; i < eg.numel(); ++i) sq += eg[i] * eg[i];
            if (sq > kEncGradClip * kEncGradClip) {
                const double scale = kEncGradClip / std::sqrt(sq);
                for (Tensor& eg : egrads)
                    for (std::size_t i = 0; i < eg.numel(); ++i) eg[i] *= scale;
            }
            sgd_momentum_step(enc, egrads, config.enc_lr, config.enc_momentum);
        }

        log_iteration(res.invariants, delta, config.eps, lambda, config.c, config.gamma, alpha,
                      prev_alpha);
        prev_alpha = alpha;
    }
    res.invariants.alpha_last =
        alpha_schedule(config.iters, config.iters, config.alpha_start, config.alpha_end);
    if (res.invariants.alpha_last < prev_alpha) ++res.invariants.alpha_monotonic_violations;

    // Final mask at alpha_end, hard-thresholded at 0.5 (ties round down).
    Tensor m_final;
    {
        ad::Graph g;
        const int dn = g.input(delta);
        const int hnode =
            with_encoder ? enc.forward(g, g.scale(dn, kEncInputGain / config.eps)) : dn;
        const int msmall = g.sigmoid(g.scale(hnode, res.invariants.alpha_last));
        const int mask = broadcast ? g.broadcast_channels(msmall, c) : msmall;
        m_final = g.value(mask);
    }
    res.binarized = true;
    for (std::size_t i = 0; i < m_final.numel(); ++i)
        if (std::min(m_final[i], 1.0 - m_final[i]) > config.tau_bin) {
            res.binarized = false;
            break;
        }
    res.hard_mask = Tensor(x.shape());
    Tensor raw(x.shape());
    for (std::size_t i = 0; i < m_final.numel(); ++i) {
        res.hard_mask[i] = m_final[i] > 0.5 ? 1.0 : 0.0;
        raw[i] = delta[i] * res.hard_mask[i];
    }
    res.iterations = config.iters;
    finalize_result(model, x, target, raw, res);

    if (model.param_checksum() != checksum_before)
        throw std::logic_error("attack: classifier parameters were mutated");
    res.seconds = timer.elapsed();
    return res;
}

/// Shared loop for dense, random-subset and l1-delta baselines.
AttackResult dense_attack(const ClassifierModel& model, const Tensor& x, int target,
                          const AttackConfig& config, const Tensor* fixed_mask,
                          double lambda_l1) {
    check_inputs(model, x, target, config);
    Timer timer;
    if (config.eps == 0.0) return trivial_result(model, x, target);

    const std::uint64_t checksum_before = model.param_checksum();
    const double n_inv = 1.0 / static_cast<double>(model.pixel_count());

    Rng delta_rng(Rng::stream_seed(config.seed, "delta-init"));
    Tensor delta = init_delta(config.eps, x.shape(), delta_rng);
    if (fixed_mask != nullptr) {
        require_same_shape(*fixed_mask, delta, "dense_attack mask");
        kernels::active().mul(delta.data(), delta.data(), fixed_mask->data(), delta.numel());
    }
    Tensor g_mom(x.shape());
    const double beta = config.step();

    AttackResult res;
    res.invariants.alpha_first = config.alpha_start;
    res.invariants.alpha_last = config.alpha_start; // no mask schedule in dense variants
    int consecutive_degenerate = 0;

    for (int t = 0; t < config.iters; ++t) {
        ad::Graph g;
        const int xin = g.input(x);
        const int dn = g.input(delta);
        int pert = dn;
        if (fixed_mask != nullptr) pert = g.mul(dn, g.input(*fixed_mask));
        const int logits = model.forward(g, g.add(xin, pert));
        int loss = g.softmax_ce(logits, target);
        if (lambda_l1 > 0.0)
            loss = g.add(loss, g.scale(g.sum(g.abs(dn)), lambda_l1 * n_inv));
        if (!std::isfinite(g.value(loss)[0]))
            throw NumericError("attack: non-finite loss at iteration " + std::to_string(t));
        g.backward(loss);

        if (momentum_grad_update(g_mom, g.grad(dn), config.mu)) {
            consecutive_degenerate = 0;
        } else {
            ++res.degenerate_events;
            if (++consecutive_degenerate > kMaxConsecutiveDegenerate)
                throw NumericError("attack: persistently degenerate gradient at t=" +
                                   std::to_string(t));
        }
        pgd_step(delta, g_mom, beta, config.eps);

        log_iteration(res.invariants, delta, config.eps, config.c, config.c, config.gamma,
                      config.alpha_start, config.alpha_start);
    }

    Tensor raw = delta;
    res.hard_mask = fixed_mask != nullptr ? *fixed_mask : Tensor::full(x.shape(), 1.0);
    if (fixed_mask != nullptr)
        kernels::active().mul(raw.data(), raw.data(), fixed_mask->data(), raw.numel());
    if (lambda_l1 > 0.0) {
        res.hard_mask = Tensor(x.shape());
        for (std::size_t i = 0; i < raw.numel(); ++i) {
            if (std::fabs(raw[i]) < 1e-6)
                raw[i] = 0.0;
            else
                res.hard_mask[i] = 1.0;
        }
    }
    res.iterations = config.iters;
    finalize_result(model, x, target, raw, res);

    if (model.param_checksum() != checksum_before)
        throw std::logic_error("attack: classifier parameters were mutated");
    res.seconds = timer.elapsed();
    return res;
}

} // namespace

AttackResult run_attack(const ClassifierModel& model, const Tensor& x, int target,
                        const AttackConfig& config) {
    return masked_attack(model, x, target, config, true);
}

AttackResult baseline_no_encoder(const ClassifierModel& model, const Tensor& x, int target,
                                 const AttackConfig& config) {
    return masked_attack(model, x, target, config, false);
}

AttackResult baseline_dense(const ClassifierModel& model, const Tensor& x, int target,
                            const AttackConfig& config) {
    return dense_attack(model, x, target, config, nullptr, 0.0);
}

AttackResult baseline_random(const ClassifierModel& model, const Tensor& x, int target,
                             const AttackConfig& config, std::size_t k) {
    const std::size_t n = model.pixel_count();
    if (k > n) throw std::invalid_argument("baseline_random: k exceeds pixel count");
    if (k == n) return baseline_dense(model, x, target, config);
    Rng rng(Rng::stream_seed(config.seed, "random-subset"));
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    // partial Fisher-Yates: first k entries are the subset
    for (std::size_t i = 0; i < k; ++i)
        std::swap(idx[i], idx[i + rng.below(n - i)]);
    Tensor mask(x.shape());
    for (std::size_t i = 0; i < k; ++i) mask[idx[i]] = 1.0;
    return dense_attack(model, x, target, config, &mask, 0.0);
}

AttackResult baseline_l1_delta(const ClassifierModel& model, const Tensor& x, int target,
                               const AttackConfig& config, double lambda_fixed) {
    if (lambda_fixed < 0.0)
        throw std::invalid_argument("baseline_l1_delta: lambda_fixed must be >= 0");
    return dense_attack(model, x, target, config, nullptr, lambda_fixed);
}

} // namespace aadv

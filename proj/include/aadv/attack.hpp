#pragma once

#include "aadv/classifier.hpp"
#include "aadv/encoder.hpp"
#include "aadv/metrics.hpp"
#include "aadv/rng.hpp"
#include "aadv/tensor.hpp"

#include <cstdint>
#include <vector>

namespace aadv {

struct AttackConfig {
    double eps = 16.0 / 255.0; // l_inf radius, image scale [0,1]
    int iters = 500;           // T
    double c = 0.1;            // lambda floor
    double gamma = 1.0;        // lambda range
    double alpha_start = 0.1;
    double alpha_end = 100.0;
    double mu = 1.0;  // momentum decay factor
    double beta = 0.0; // update step; 0 selects eps/10
    double enc_lr = 0.01;
    double enc_momentum = 0.9;
    std::uint64_t seed = 0;
    bool channel_independent = true;
    double tau_bin = 1e-3;
    EncoderKind encoder = EncoderKind::FullyConnected;

    double step() const { return beta > 0.0 ? beta : eps / 10.0; }
    void validate() const;
};

/// Per-iteration constraint counters, cheap enough to keep always on.
struct InvariantLog {
    long delta_linf_violations = 0;
    long lambda_range_violations = 0;
    long alpha_monotonic_violations = 0;
    double alpha_first = 0.0, alpha_last = 0.0;
};

struct AttackResult {
    Tensor x_adv;
    Tensor perturbation; // x_adv - x, exact zeros outside the hard mask
    Tensor hard_mask;    // 0/1
    bool success = false;
    Norms perturbation_norms;
    int iterations = 0;
    double seconds = 0.0;
    bool binarized = true; // every final mask entry within tau_bin of {0,1}
    int degenerate_events = 0;
    InvariantLog invariants;
};

// --- Algorithm building blocks (unit-testable in isolation) ---

/// delta_0 ~ U[-eps, eps]^shape
Tensor init_delta(double eps, const std::vector<std::size_t>& shape, Rng& rng);

/// Geometric interpolation from alpha_start (t=0) to alpha_end (t=T).
double alpha_schedule(int t, int total, double alpha_start, double alpha_end);

/// sigmoid(alpha * h), elementwise (non-tape helper).
Tensor scaled_sigmoid_mask(const Tensor& h, double alpha);

/// lambda = C + gamma/N * #{m_i > 0.5}; strict inequality, no gradient.
double dynamic_lambda(const Tensor& m, double c, double gamma);

/// g <- mu*g + grad/||grad||_1. Returns false (leaving g = mu*g) when
/// ||grad||_1 < 1e-12; the caller logs the degenerate event.
bool momentum_grad_update(Tensor& g, const Tensor& grad, double mu);

/// delta <- clip(delta - beta*sign(g), [-eps, eps]); sign(0) = 0.
void pgd_step(Tensor& delta, const Tensor& g, double beta, double eps);

// --- Full attacks ---

/// AutoAdversary: jointly optimizes delta and the mask encoder, finalizes
/// with the hard-thresholded mask and clamps into [0,1].
AttackResult run_attack(const ClassifierModel& model, const Tensor& x, int target,
                        const AttackConfig& config);

/// Momentum-normalized signed-gradient dense attack (mask == 1, CE only).
AttackResult baseline_dense(const ClassifierModel& model, const Tensor& x, int target,
                            const AttackConfig& config);

/// Dense attack restricted to a fixed uniformly random pixel subset of size k.
AttackResult baseline_random(const ClassifierModel& model, const Tensor& x, int target,
                             const AttackConfig& config, std::size_t k);

/// Dense attack with loss CE + lambda_fixed*||delta||_1/N; finalization
/// zeroes components with |delta_i| < 1e-6.
AttackResult baseline_l1_delta(const ClassifierModel& model, const Tensor& x, int target,
                               const AttackConfig& config, double lambda_fixed);

/// Mask = sigmoid(alpha_t * delta): the binarization branch without any
/// encoder; otherwise the run_attack loop.
AttackResult baseline_no_encoder(const ClassifierModel& model, const Tensor& x, int target,
                                 const AttackConfig& config);

} // namespace aadv

#include <doctest.h>

#include "aadv/encoder.hpp"
#include "aadv/graph.hpp"
#include "aadv/rng.hpp"

#include <cmath>
#include <cstring>
#include <limits>

using namespace aadv;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -0.06,
                     double hi = 0.06) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

Tensor run_forward(const EncoderParams& enc, const Tensor& delta) {
    ad::Graph g;
    return g.value(enc.forward(g, g.input(delta)));
}

} // namespace

TEST_CASE("encoder init is seed-deterministic with documented parameter shapes") {
    EncoderSpec fc{EncoderKind::FullyConnected, 16, 16, 1, true, 4};
    const EncoderParams a = init_encoder(fc), b = init_encoder(fc);
    REQUIRE(a.params.size() == 2);
    CHECK(a.params[0].shape() == std::vector<std::size_t>{256, 256});
    CHECK(a.params[0].numel() == 65536);
    CHECK(a.params[1].shape() == std::vector<std::size_t>{256});
    for (std::size_t p = 0; p < a.params.size(); ++p)
        CHECK(std::memcmp(a.params[p].data(), b.params[p].data(),
                          a.params[p].numel() * sizeof(double)) == 0);
    fc.seed = 5;
    const EncoderParams c = init_encoder(fc);
    CHECK(std::memcmp(a.params[0].data(), c.params[0].data(),
                      a.params[0].numel() * sizeof(double)) != 0);

    // biases start at zero
    for (std::size_t i = 0; i < a.params[1].numel(); ++i) CHECK(a.params[1][i] == 0.0);

    const EncoderSpec conv{EncoderKind::ConvSmall, 8, 8, 3, true, 4};
    const EncoderParams cv = init_encoder(conv);
    REQUIRE(cv.params.size() == 4);
    CHECK(cv.params[0].shape() == std::vector<std::size_t>{3, 3, 3, 8});
    CHECK(cv.params[1].shape() == std::vector<std::size_t>{8});
    CHECK(cv.params[2].shape() == std::vector<std::size_t>{3, 3, 8, 3});
    CHECK(cv.params[3].shape() == std::vector<std::size_t>{3});
}

TEST_CASE("fc encoder on 32x32x3 inputs carries about 9.44 million weights") {
    const EncoderSpec spec{EncoderKind::FullyConnected, 32, 32, 3, true, 1};
    CHECK(spec.in_size() == 3072);
    CHECK(spec.out_size() == 3072);
    const EncoderParams enc = init_encoder(spec);
    CHECK(enc.params[0].numel() == 3072u * 3072u);
}

TEST_CASE("zero parameters map every input to zero") {
    EncoderParams enc = init_encoder(EncoderSpec{EncoderKind::FullyConnected, 4, 4, 1, true, 0});
    for (Tensor& p : enc.params)
        for (std::size_t i = 0; i < p.numel(); ++i) p[i] = 0.0;
    Rng rng(1);
    const Tensor h = run_forward(enc, random_tensor(rng, {4, 4, 1}));
    for (std::size_t i = 0; i < h.numel(); ++i) CHECK(h[i] == 0.0);
}

TEST_CASE("identity fc weights make H the identity map") {
    EncoderParams enc = init_encoder(EncoderSpec{EncoderKind::FullyConnected, 3, 3, 1, true, 0});
    Tensor& w = enc.params[0];
    for (std::size_t i = 0; i < 9; ++i)
        for (std::size_t j = 0; j < 9; ++j) w[i * 9 + j] = (i == j) ? 1.0 : 0.0;
    for (std::size_t i = 0; i < enc.params[1].numel(); ++i) enc.params[1][i] = 0.0;
    Rng rng(2);
    const Tensor d = random_tensor(rng, {3, 3, 1});
    const Tensor h = run_forward(enc, d);
    REQUIRE(h.shape() == d.shape());
    for (std::size_t i = 0; i < 9; ++i) CHECK(h[i] == doctest::Approx(d[i]).epsilon(1e-12));
}

TEST_CASE("channel-shared spec collapses the output to one channel") {
    const EncoderSpec spec{EncoderKind::FullyConnected, 4, 4, 3, false, 7};
    CHECK(spec.out_channels() == 1);
    const EncoderParams enc = init_encoder(spec);
    CHECK(enc.params[0].shape() == std::vector<std::size_t>{48, 16});
    Rng rng(3);
    const Tensor h = run_forward(enc, random_tensor(rng, {4, 4, 3}));
    CHECK(h.shape() == std::vector<std::size_t>{4, 4, 1});

    const EncoderSpec cspec{EncoderKind::ConvSmall, 4, 4, 3, false, 7};
    const EncoderParams cenc = init_encoder(cspec);
    CHECK(cenc.params[2].shape() == std::vector<std::size_t>{3, 3, 8, 1});
    const Tensor hc = run_forward(cenc, random_tensor(rng, {4, 4, 3}));
    CHECK(hc.shape() == std::vector<std::size_t>{4, 4, 1});
}

TEST_CASE("fc and conv encoders disagree on the same input") {
    Rng rng(5);
    const Tensor d = random_tensor(rng, {5, 5, 1});
    const Tensor hf = run_forward(
        init_encoder(EncoderSpec{EncoderKind::FullyConnected, 5, 5, 1, true, 9}), d);
    const Tensor hc =
        run_forward(init_encoder(EncoderSpec{EncoderKind::ConvSmall, 5, 5, 1, true, 9}), d);
    REQUIRE(hf.shape() == hc.shape());
    CHECK(std::memcmp(hf.data(), hc.data(), hf.numel() * sizeof(double)) != 0);
}

TEST_CASE("finite differences validate the encoder's input gradient") {
    for (EncoderKind kind : {EncoderKind::FullyConnected, EncoderKind::ConvSmall}) {
        const EncoderParams enc = init_encoder(EncoderSpec{kind, 4, 4, 1, true, 11});
        Rng rng(6);
        const Tensor d0 = random_tensor(rng, {4, 4, 1});
        auto eval = [&](const Tensor& d) {
            ad::Graph g;
            return g.value(g.sum(enc.forward(g, g.input(d))))[0];
        };
        ad::Graph g;
        const int dn = g.input(d0);
        g.backward(g.sum(enc.forward(g, dn)));
        const Tensor analytic = g.grad(dn);
        const double h = 1e-5;
        for (std::size_t i = 0; i < d0.numel(); ++i) {
            Tensor dp = d0, dm = d0;
            dp[i] += h;
            dm[i] -= h;
            const double fd = (eval(dp) - eval(dm)) / (2.0 * h);
            const double denom = std::max({1.0, std::fabs(fd), std::fabs(analytic[i])});
            CHECK(std::fabs(fd - analytic[i]) / denom <= 1e-5);
        }
    }
}

TEST_CASE("sgd momentum step follows the pinned update rule") {
    const EncoderSpec spec{EncoderKind::FullyConnected, 2, 2, 1, true, 0};
    EncoderParams enc = init_encoder(spec);
    const EncoderParams snapshot = enc;

    std::vector<Tensor> zero = {Tensor({4, 4}), Tensor({4})};
    sgd_momentum_step(enc, zero, 0.1, 0.9);
    for (std::size_t p = 0; p < enc.params.size(); ++p)
        CHECK(std::memcmp(enc.params[p].data(), snapshot.params[p].data(),
                          enc.params[p].numel() * sizeof(double)) == 0);

    std::vector<Tensor> g = {Tensor::full({4, 4}, 0.5), Tensor::full({4}, -1.0)};
    // step 1: v = g, p -= lr*g
    sgd_momentum_step(enc, g, 0.1, 0.9);
    CHECK(enc.params[0][0] ==
          doctest::Approx(snapshot.params[0][0] - 0.1 * 0.5).epsilon(1e-12));
    CHECK(enc.params[1][0] == doctest::Approx(0.1).epsilon(1e-12));
    // step 2 with the same gradient: v = 0.9*g + g, total p0 - lr*g*(2 + 0.9)
    sgd_momentum_step(enc, g, 0.1, 0.9);
    CHECK(enc.params[0][0] ==
          doctest::Approx(snapshot.params[0][0] - 0.1 * 0.5 * 2.9).epsilon(1e-12));
}

TEST_CASE("non-finite gradients are rejected") {
    EncoderParams enc = init_encoder(EncoderSpec{EncoderKind::FullyConnected, 2, 2, 1, true, 0});
    std::vector<Tensor> g = {Tensor({4, 4}), Tensor({4})};
    g[0][3] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(sgd_momentum_step(enc, g, 0.1, 0.9), NumericError);
    g[0][3] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(sgd_momentum_step(enc, g, 0.1, 0.9), NumericError);
}

// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "wjdd/common.hpp"
#include "wjdd/nig.hpp"
#include "wjdd/rng.hpp"

using namespace wjdd;

namespace {

// Constant-parameter 2x2 field (12 sites).
NigField constant_field(double mean, double lambda, double alpha, double beta) {
    NigField f(2, 2);
    for (auto& v : f.mean.data) v = mean;
    for (auto& v : f.lambda.data) v = lambda;
    for (auto& v : f.alpha.data) v = alpha;
    for (auto& v : f.beta.data) v = beta;
    return f;
}

NigField random_field(Rng& rng) {
    NigField f(2, 2);
    for (std::size_t i = 0; i < f.mean.data.size(); ++i) {
        f.mean.data[i] = rng.uniform();
        f.lambda.data[i] = std::pow(10.0, rng.uniform(std::log10(0.5), std::log10(2000.0)));
        f.alpha.data[i] = 1.0 + std::pow(10.0, rng.uniform(std::log10(0.5), std::log10(200.0)));
        f.beta.data[i] = std::pow(10.0, rng.uniform(-4.0, 0.0));
    }
    return f;
}

// Prior obtained by a moderate perturbation of q, so KL stays O(1..100) and
// the Monte Carlo comparison is sharp.
NigField perturbed_field(const NigField& q, Rng& rng) {
    NigField p = q;
    for (std::size_t i = 0; i < p.mean.data.size(); ++i) {
        const double noise_scale = std::sqrt(q.beta.data[i] / (q.alpha.data[i] - 1.0));
        p.mean.data[i] = q.mean.data[i] + rng.uniform(-1.0, 1.0) * noise_scale;
        p.lambda.data[i] = q.lambda.data[i] * std::pow(10.0, rng.uniform(-0.5, 0.5));
        p.alpha.data[i] = 1.0 + (q.alpha.data[i] - 1.0) * std::pow(10.0, rng.uniform(-0.3, 0.3));
        p.beta.data[i] = q.beta.data[i] * std::pow(10.0, rng.uniform(-0.5, 0.5));
    }
    return p;
}

} // namespace

// ---------------------------------------------------------------------------
// Special functions

TEST_CASE("log_gamma matches known values") {
    CHECK(log_gamma(1.0) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(log_gamma(2.0) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(log_gamma(5.0) == doctest::Approx(std::log(24.0)).epsilon(1e-14));
    CHECK(log_gamma(0.5) == doctest::Approx(0.5 * std::log(M_PI)).epsilon(1e-14));
    CHECK_THROWS_AS(log_gamma(0.0), std::invalid_argument);
    CHECK_THROWS_AS(log_gamma(-1.0), std::invalid_argument);
}

TEST_CASE("digamma matches known values and its recurrence") {
    CHECK(digamma(1.0) == doctest::Approx(-0.5772156649015329).epsilon(1e-12));
    CHECK(digamma(2.0) == doctest::Approx(0.4227843350984671).epsilon(1e-12));
    CHECK(digamma(0.5) ==
          doctest::Approx(-0.5772156649015329 - 2.0 * std::log(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(digamma(0.0), std::invalid_argument);

    // psi(x+1) = psi(x) + 1/x across the whole supported range
    for (double x : {1e-3, 0.02, 0.7, 1.0, 3.5, 10.0, 181.0, 1e4, 1e6})
        CHECK(std::abs(digamma(x + 1.0) - digamma(x) - 1.0 / x) < 1e-10);
}

TEST_CASE("trigamma matches known values, recurrence, and digamma slope") {
    CHECK(trigamma(1.0) == doctest::Approx(M_PI * M_PI / 6.0).epsilon(1e-12));
    CHECK(trigamma(0.5) == doctest::Approx(M_PI * M_PI / 2.0).epsilon(1e-12));
    for (double x : {1e-3, 0.4, 1.0, 7.3, 181.0, 1e5}) {
        // values reach ~1e6 at x = 1e-3, where one ulp is already ~1.2e-10
        const double tol = 1e-10 + 4.0 * 2.2e-16 * trigamma(x);
        CHECK(std::abs(trigamma(x) - trigamma(x + 1.0) - 1.0 / (x * x)) < tol);
    }
    for (double x : {0.8, 2.0, 20.0, 300.0}) {
        const double h = 1e-5 * x;
        const double fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
        CHECK(trigamma(x) == doctest::Approx(fd).epsilon(1e-7));
    }
}

TEST_CASE("special functions stay within 1e-10 absolute error via lgamma differences") {
    // d/dx log_gamma = digamma: the secant of log_gamma over a tiny interval
    // brackets digamma; with h chosen so the secant error is < 1e-11 this
    // pins both functions to each other across the range.
    for (double x : {0.01, 0.5, 2.0, 181.0, 1e4, 9e5}) {
        const double h = 1e-4 * std::max(x, 1.0) * 1e-2;
        const double secant = (log_gamma(x + h) - log_gamma(x - h)) / (2.0 * h);
        const double tol = std::max(1e-9, 2e-3 * std::abs(trigamma(x)) * h);
        CHECK(std::abs(secant - digamma(x)) < tol + trigamma(x + 1) * h * h);
    }
}

// ---------------------------------------------------------------------------
// Densities

TEST_CASE("gaussian_log_density matches the standard normal constant") {
    CHECK(gaussian_log_density(0.0, 0.0, 1.0) ==
          doctest::Approx(-0.9189385332046727).epsilon(1e-14));
    // scale family: N(x; 0, s2) = N(x/s; 0, 1)/s
    CHECK(gaussian_log_density(0.3, 0.1, 0.04) ==
          doctest::Approx(gaussian_log_density(1.0, 0.0, 1.0) - 0.5 * std::log(0.04))
              .epsilon(1e-12));
}

TEST_CASE("nig_log_density integrates to one") {
    const double mean = 0.3, lambda = 2.0, alpha = 3.0, beta = 0.5;
    // integrate over z in [mean-8, mean+8], log sigma2 in [-9, 4]
    const int nz = 400, ns = 500;
    double total = 0.0;
    const double zlo = mean - 8.0, zhi = mean + 8.0;
    const double llo = -9.0, lhi = 4.0;
    const double dz = (zhi - zlo) / nz, dl = (lhi - llo) / ns;
    for (int i = 0; i < nz; ++i) {
        const double z = zlo + (i + 0.5) * dz;
        for (int j = 0; j < ns; ++j) {
            const double ls = llo + (j + 0.5) * dl;
            const double s2 = std::exp(ls);
            // d sigma2 = sigma2 d(log sigma2)
            total += std::exp(nig_log_density(z, s2, mean, lambda, alpha, beta)) * s2 * dz * dl;
        }
    }
    CHECK(total == doctest::Approx(1.0).epsilon(2e-3));
}

// ---------------------------------------------------------------------------
// Sampling

TEST_CASE("sample_nig matches analytic moments") {
    const NigField f = constant_field(0.4, 3.0, 4.0, 2.0);
    const long n = 50000;
    double zsum = 0, zsum2 = 0, ssum = 0;
    long m = 0;
    for (long it = 0; it < n; ++it) {
        auto [z, s2] = sample_nig(f, mix_seed(99, it));
        for (std::size_t i = 0; i < z.data.size(); ++i) {
            zsum += z.data[i];
            zsum2 += z.data[i] * z.data[i];
            ssum += s2.data[i];
            ++m;
        }
    }
    const double zmean = zsum / m;
    const double zvar = zsum2 / m - zmean * zmean;
    CHECK(std::abs(zmean - 0.4) < 3e-3);                 // E[z] = mean
    CHECK(std::abs(ssum / m - 2.0 / 3.0) < 3e-3);        // E[s2] = beta/(alpha-1)
    CHECK(std::abs(zvar - 2.0 / 9.0) < 5e-3);            // Var[z] = E[s2]/lambda

    // determinism
    auto [z1, s1] = sample_nig(f, 1234);
    auto [z2, s2] = sample_nig(f, 1234);
    for (std::size_t i = 0; i < z1.data.size(); ++i) {
        CHECK(z1.data[i] == z2.data[i]);
        CHECK(s1.data[i] == s2.data[i]);
    }
}

TEST_CASE("sample_nig collapses onto the mean for huge lambda") {
    const NigField f = constant_field(0.4, 1e12, 4.0, 2.0);
    for (long it = 0; it < 4000; ++it) {
        auto [z, s2] = sample_nig(f, mix_seed(7, it));
        for (double v : z.data) REQUIRE(std::abs(v - 0.4) < 1e-5);
    }
}

TEST_CASE("sample_nig rejects invalid fields") {
    NigField f = constant_field(0.4, 1.0, 2.0, 1.0);
    f.alpha.data[3] = 1.0; // not > 1
    CHECK_THROWS_AS(sample_nig(f, 1), ValidationError);
    f = constant_field(0.4, 0.0, 2.0, 1.0);
    CHECK_THROWS_AS(sample_nig(f, 1), ValidationError);
}

// ---------------------------------------------------------------------------
// KL closed form

TEST_CASE("kl_nig of identical fields is exactly zero") {
    Rng rng(3);
    const NigField q = random_field(rng);
    const Image kl = kl_nig(q, q);
    for (double v : kl.data) CHECK(v == 0.0);
}

TEST_CASE("kl_nig reproduces the hand-worked example 2 - 2 ln 2") {
    const NigField q = constant_field(0.0, 1.0, 2.0, 1.0);
    const NigField p = constant_field(0.0, 1.0, 2.0, 2.0);
    const Image kl = kl_nig(q, p);
    for (double v : kl.data)
        CHECK(v == doctest::Approx(2.0 - 2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("kl_nig is nonnegative over random parameter sweeps") {
    Rng rng(17);
    for (int it = 0; it < 10000; ++it) {
        NigField q(2, 2), p(2, 2);
        for (std::size_t i = 0; i < q.mean.data.size(); ++i) {
            q.mean.data[i] = rng.uniform(-1.0, 2.0);
            q.lambda.data[i] = std::pow(10.0, rng.uniform(-2.0, 4.0));
            q.alpha.data[i] = 1.0 + std::pow(10.0, rng.uniform(-2.0, 2.3));
            q.beta.data[i] = std::pow(10.0, rng.uniform(-4.0, 0.5));
            p.mean.data[i] = rng.uniform(-1.0, 2.0);
            p.lambda.data[i] = std::pow(10.0, rng.uniform(-2.0, 4.0));
            p.alpha.data[i] = 1.0 + std::pow(10.0, rng.uniform(-2.0, 2.3));
            p.beta.data[i] = std::pow(10.0, rng.uniform(-4.0, 0.5));
        }
        const Image kl = kl_nig(q, p);
        for (double v : kl.data) REQUIRE(v >= -1e-9);
    }
}

TEST_CASE("kl_nig is minimized over the posterior mean at the prior mean") {
    const NigField p = constant_field(0.37, 10.0, 3.0, 0.2);
    NigField q = constant_field(0.37, 4.0, 2.5, 0.3);
    const double at_min = kl_nig(q, p).data[0];
    for (double d : {-0.05, -0.01, 0.01, 0.05}) {
        NigField q2 = q;
        for (auto& v : q2.mean.data) v = 0.37 + d;
        CHECK(kl_nig(q2, p).data[0] > at_min);
    }
}

TEST_CASE("kl_nig agrees with the Monte Carlo oracle across 100 configurations") {
    Rng rng(2024);
    int checked = 0;
    for (int cfg = 0; cfg < 100; ++cfg) {
        const NigField q = random_field(rng);
        const NigField p = perturbed_field(q, rng);
        double closed = 0.0;
        for (double v : kl_nig(q, p).data) closed += v;
        const auto [est, se] = mc_kl_oracle(q, p, 20000, mix_seed(555, cfg));
        REQUIRE(se > 0.0);
        CHECK(std::abs(est - closed) < 3.0 * se);
        ++checked;
    }
    CHECK(checked == 100);
}

TEST_CASE("mc_kl_oracle sanity: zero at q = p, example value, 1/sqrt(n) stderr") {
    const NigField q = constant_field(0.0, 1.0, 2.0, 1.0);
    {
        const auto [est, se] = mc_kl_oracle(q, q, 5000, 42);
        CHECK(std::abs(est) <= 3.0 * std::max(se, 1e-12));
    }
    const NigField p = constant_field(0.0, 1.0, 2.0, 2.0);
    const auto [est1, se1] = mc_kl_oracle(q, p, 20000, 43);
    const double expect = 12.0 * (2.0 - 2.0 * std::log(2.0)); // 12 sites
    CHECK(std::abs(est1 - expect) < 3.0 * se1);
    const auto [est4, se4] = mc_kl_oracle(q, p, 80000, 44);
    CHECK(se4 == doctest::Approx(se1 / 2.0).epsilon(0.15));
    CHECK_THROWS_AS(mc_kl_oracle(q, p, 10, 1), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Expectation term

TEST_CASE("expectation_term reproduces the hand-worked large-lambda example") {
    // x_tilde = y_hat, lambda = 1e9, alpha = 2, beta = 1:
    // -log(2 pi)/2 + psi(2)/2 = -0.7075463656554392, third term <= 5e-10
    NigField q = constant_field(0.25, 1e9, 2.0, 1.0);
    Image x = q.mean;
    for (auto variant : {LossVariant::paper_literal, LossVariant::derivation_consistent}) {
        const Image e = expectation_term(q, x, variant);
        for (double v : e.data) CHECK(v == doctest::Approx(-0.7075463656554392).epsilon(1e-8));
    }
}

TEST_CASE("expectation_term decreases in the squared data residual") {
    NigField q = constant_field(0.5, 2.0, 3.0, 0.4);
    Image x0 = q.mean, x1 = q.mean, x2 = q.mean;
    for (auto& v : x1.data) v += 0.1;
    for (auto& v : x2.data) v += 0.3;
    for (auto variant : {LossVariant::paper_literal, LossVariant::derivation_consistent}) {
        const double e0 = expectation_term(q, x0, variant).data[0];
        const double e1 = expectation_term(q, x1, variant).data[0];
        const double e2 = expectation_term(q, x2, variant).data[0];
        CHECK(e0 > e1);
        CHECK(e1 > e2);
    }
}

TEST_CASE("derivation_consistent variant matches the Monte Carlo oracle on 100 configurations") {
    Rng rng(4048);
    for (int cfg = 0; cfg < 100; ++cfg) {
        NigField q(2, 2);
        Image x(2, 2);
        for (std::size_t i = 0; i < q.mean.data.size(); ++i) {
            q.mean.data[i] = rng.uniform();
            q.lambda.data[i] = std::pow(10.0, rng.uniform(std::log10(0.5), 2.0));
            q.alpha.data[i] = 1.5 + std::pow(10.0, rng.uniform(-1.0, 1.7));
            q.beta.data[i] = std::pow(10.0, rng.uniform(-3.0, 0.0));
            x.data[i] = q.mean.data[i] +
                        rng.uniform(-2.0, 2.0) *
                            std::sqrt(q.beta.data[i] / (q.alpha.data[i] - 1.0));
        }
        double closed = 0.0;
        for (double v : expectation_term(q, x, LossVariant::derivation_consistent).data)
            closed += v;
        const auto [est, se] = mc_expectation_oracle(q, x, 20000, mix_seed(777, cfg));
        REQUIRE(se > 0.0);
        CHECK(std::abs(est - closed) < 3.0 * se);
    }
}

TEST_CASE("the paper_literal third term measurably disagrees with sampling") {
    // lambda = 1, alpha = 3, beta = 0.5, x = y_hat: the variants differ by
    // 1/(2 lambda) - beta/(2 lambda^2 (alpha-1)) = 0.5 - 0.125 = 0.375 nats
    // per site. The oracle must side with derivation_consistent.
    NigField q = constant_field(0.5, 1.0, 3.0, 0.5);
    const Image x = q.mean;
    double lit = 0.0, con = 0.0;
    for (double v : expectation_term(q, x, LossVariant::paper_literal).data) lit += v;
    for (double v : expectation_term(q, x, LossVariant::derivation_consistent).data) con += v;
    CHECK(lit - con == doctest::Approx(12.0 * 0.375).epsilon(1e-12));
    const auto [est, se] = mc_expectation_oracle(q, x, 40000, 31337);
    CHECK(std::abs(est - con) < 3.0 * se);
    CHECK(std::abs(est - lit) > 10.0 * se);
}

// ---------------------------------------------------------------------------
// ELBO assembly and gradients

TEST_CASE("elbo_loss bundles sums consistently") {
    Rng rng(5);
    const NigField q = random_field(rng);
    const NigField p = perturbed_field(q, rng);
    Image x(2, 2);
    for (auto& v : x.data) v = rng.uniform();
    const ElboBreakdown r = elbo_loss(q, p, x, LossVariant::paper_literal);
    CHECK(r.elbo == r.expectation - r.kl);
    CHECK(r.n_sites == 12);
    double kl = 0, ex = 0;
    for (double v : r.per_pixel_kl.data) kl += v;
    for (double v : r.per_pixel_expectation.data) ex += v;
    CHECK(r.kl == doctest::Approx(kl).epsilon(1e-15));
    CHECK(r.expectation == doctest::Approx(ex).epsilon(1e-15));
    CHECK(r.kl >= 0.0);

    NigField bad = q;
    bad.beta.data[0] = -1.0;
    CHECK_THROWS_AS(elbo_loss(bad, p, x, LossVariant::paper_literal), ValidationError);
}

TEST_CASE("neg_elbo_grad matches central finite differences in both variants") {
    Rng rng(6060);
    for (auto variant : {LossVariant::paper_literal, LossVariant::derivation_consistent}) {
        for (int rep = 0; rep < 5; ++rep) {
            NigField q(2, 2), p(2, 2);
            Image x(2, 2);
            for (std::size_t i = 0; i < q.mean.data.size(); ++i) {
                q.mean.data[i] = rng.uniform();
                q.lambda.data[i] = std::pow(10.0, rng.uniform(-0.5, 1.5));
                q.alpha.data[i] = 1.5 + std::pow(10.0, rng.uniform(-0.5, 1.0));
                q.beta.data[i] = std::pow(10.0, rng.uniform(-2.0, 0.0));
                p.mean.data[i] = rng.uniform();
                p.lambda.data[i] = std::pow(10.0, rng.uniform(-0.5, 1.5));
                p.alpha.data[i] = 1.5 + std::pow(10.0, rng.uniform(-0.5, 1.5));
                p.beta.data[i] = std::pow(10.0, rng.uniform(-2.0, 0.0));
                x.data[i] = rng.uniform(-0.5, 1.5);
            }
            const NigGrad g = neg_elbo_grad(q, p, x, variant);

            auto loss = [&](const NigField& qq) {
                const ElboBreakdown r = elbo_loss(qq, p, x, variant);
                return -r.elbo;
            };
            auto check_param = [&](Image NigField::* field, const Image& grad) {
                for (std::size_t i = 0; i < q.mean.data.size(); ++i) {
                    NigField qp = q, qm = q;
                    const double h = 1e-6 * std::max(1.0, std::abs((q.*field).data[i]));
                    (qp.*field).data[i] += h;
                    (qm.*field).data[i] -= h;
                    const double fd = (loss(qp) - loss(qm)) / (2.0 * h);
                    const double scale = std::max({std::abs(fd), std::abs(grad.data[i]), 1e-6});
                    REQUIRE(std::abs(fd - grad.data[i]) / scale < 1e-4);
                }
            };
            check_param(&NigField::mean, g.d_mean);
            check_param(&NigField::lambda, g.d_lambda);
            check_param(&NigField::alpha, g.d_alpha);
            check_param(&NigField::beta, g.d_beta);
        }
    }
}

// ---------------------------------------------------------------------------
// Point estimates and MSE

TEST_CASE("posterior_estimates computes clamped mean and unclamped noise map") {
    NigField q = constant_field(0.5, 1.0, 2.0, 3.0);
    q.mean.data[0] = 1.3;
    q.mean.data[1] = -0.2;
    q.alpha.data[2] = 181.0;
    q.beta.data[2] = 18.0;
    auto [img, noise] = posterior_estimates(q);
    CHECK(img.data[0] == 1.0);
    CHECK(img.data[1] == 0.0);
    CHECK(img.data[3] == 0.5);
    CHECK(noise.data[0] == doctest::Approx(3.0).epsilon(1e-15));  // beta/(alpha-1) = 3/1
    CHECK(noise.data[2] == doctest::Approx(0.1).epsilon(1e-12));  // 18/180
    CHECK(noise.data[0] > 1.0); // noise map must not be clamped
}

TEST_CASE("mse_loss basics") {
    Image a(2, 2, 0.4), b(2, 2, 0.5);
    CHECK(mse_loss(a, a) == 0.0);
    CHECK(mse_loss(a, b) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK_THROWS_AS(mse_loss(a, Image(4, 4)), std::invalid_argument);
}

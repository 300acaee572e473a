// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0

#include "wjdd/nig.hpp"

#include <cmath>
#include <stdexcept>

#include "wjdd/common.hpp"
#include "wjdd/rng.hpp"

namespace wjdd {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void check_same_shape(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

} // namespace

void NigField::validate() const {
    if (!mean.same_shape(lambda) || !mean.same_shape(alpha) || !mean.same_shape(beta))
        throw ValidationError("NigField: parameter fields have mismatched shapes");
    for (std::size_t i = 0; i < mean.data.size(); ++i) {
        const double m = mean.data[i], l = lambda.data[i], a = alpha.data[i], b = beta.data[i];
        if (!std::isfinite(m) || !std::isfinite(l) || !std::isfinite(a) || !std::isfinite(b))
            throw ValidationError("NigField: non-finite parameter");
        if (!(l > 0.0)) throw ValidationError("NigField: lambda must be > 0");
        if (!(a > 1.0)) throw ValidationError("NigField: alpha must be > 1");
        if (!(b > 0.0)) throw ValidationError("NigField: beta must be > 0");
    }
}

const char* to_string(LossVariant v) {
    return v == LossVariant::paper_literal ? "paper_literal" : "derivation_consistent";
}

LossVariant loss_variant_from_string(const std::string& s) {
    if (s == "paper_literal") return LossVariant::paper_literal;
    if (s == "derivation_consistent") return LossVariant::derivation_consistent;
    throw UsageError("unknown loss variant '" + s +
                     "' (expected paper_literal or derivation_consistent)");
}

// ---------------------------------------------------------------------------
// Special functions

double log_gamma(double x) {
    if (!(x > 0.0)) throw std::invalid_argument("log_gamma: x must be > 0");
    return std::lgamma(x);
}

double digamma(double x) {
    if (!(x > 0.0)) throw std::invalid_argument("digamma: x must be > 0");
    // Recurrence up to x >= 10, then the Bernoulli asymptotic series; the
    // first omitted term (~1/(132 x^10)) is < 1e-12 at x = 10.
    double shift = 0.0;
    while (x < 10.0) {
        shift -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x, inv2 = inv * inv;
    const double series =
        std::log(x) - 0.5 * inv -
        inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
    return shift + series;
}

double trigamma(double x) {
    if (!(x > 0.0)) throw std::invalid_argument("trigamma: x must be > 0");
    double shift = 0.0;
    while (x < 10.0) {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    const double inv = 1.0 / x, inv2 = inv * inv;
    const double series =
        inv * (1.0 +
               inv * (0.5 + inv * (1.0 / 6.0 -
                                   inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0)))));
    return shift + series;
}

// ---------------------------------------------------------------------------
// Densities and sampling

double gaussian_log_density(double x, double mean, double sigma2) {
    const double d = x - mean;
    return -0.5 * (kLog2Pi + std::log(sigma2)) - d * d / (2.0 * sigma2);
}

double nig_log_density(double z, double sigma2, double mean, double lambda, double alpha,
                       double beta) {
    // N(z; mean, sigma2/lambda) * InvGamma(sigma2; alpha, beta)
    const double d = z - mean;
    const double log_norm =
        0.5 * (std::log(lambda) - kLog2Pi - std::log(sigma2)) - lambda * d * d / (2.0 * sigma2);
    const double log_ig = alpha * std::log(beta) - std::lgamma(alpha) -
                          (alpha + 1.0) * std::log(sigma2) - beta / sigma2;
    return log_norm + log_ig;
}

std::pair<Image, Image> sample_nig(const NigField& params, std::uint64_t seed) {
    params.validate();
    Rng rng(seed);
    Image z(params.height(), params.width());
    Image sigma2(params.height(), params.width());
    for (std::size_t i = 0; i < z.data.size(); ++i) {
        const double s2 = rng.inverse_gamma(params.alpha.data[i], params.beta.data[i]);
        sigma2.data[i] = s2;
        z.data[i] = rng.normal(params.mean.data[i], std::sqrt(s2 / params.lambda.data[i]));
    }
    return {std::move(z), std::move(sigma2)};
}

// ---------------------------------------------------------------------------
// Closed forms

Image kl_nig(const NigField& q, const NigField& p) {
    check_same_shape(q.mean, p.mean, "kl_nig");
    Image out(q.height(), q.width());
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double yh = q.mean.data[i], lh = q.lambda.data[i], ah = q.alpha.data[i],
                     bh = q.beta.data[i];
        const double y = p.mean.data[i], l = p.lambda.data[i], a = p.alpha.data[i],
                     b = p.beta.data[i];
        const double d = y - yh;
        out.data[i] = l * ah / (2.0 * bh) * d * d + l / (2.0 * lh) - 0.5 * std::log(l / lh) -
                      0.5 + a * std::log(bh / b) + std::lgamma(a) - std::lgamma(ah) +
                      (ah - a) * digamma(ah) - (bh - b) * ah / bh;
    }
    return out;
}

Image expectation_term(const NigField& q, const Image& x_tilde, LossVariant variant) {
    check_same_shape(q.mean, x_tilde, "expectation_term");
    Image out(q.height(), q.width());
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double yh = q.mean.data[i], lh = q.lambda.data[i], ah = q.alpha.data[i],
                     bh = q.beta.data[i];
        const double d = x_tilde.data[i] - yh;
        const double third = variant == LossVariant::paper_literal
                                 ? bh / (2.0 * lh * lh * (ah - 1.0))
                                 : 1.0 / (2.0 * lh);
        out.data[i] = -0.5 * kLog2Pi - 0.5 * (std::log(bh) - digamma(ah)) - third -
                      ah * d * d / (2.0 * bh);
    }
    return out;
}

ElboBreakdown elbo_loss(const NigField& q, const NigField& prior, const Image& x_tilde,
                        LossVariant variant) {
    q.validate();
    prior.validate();
    ElboBreakdown r;
    r.per_pixel_kl = kl_nig(q, prior);
    r.per_pixel_expectation = expectation_term(q, x_tilde, variant);
    for (double v : r.per_pixel_kl.data) r.kl += v;
    for (double v : r.per_pixel_expectation.data) r.expectation += v;
    r.elbo = r.expectation - r.kl;
    r.n_sites = static_cast<long>(r.per_pixel_kl.data.size());
    return r;
}

NigGrad neg_elbo_grad(const NigField& q, const NigField& prior, const Image& x_tilde,
                      LossVariant variant) {
    check_same_shape(q.mean, prior.mean, "neg_elbo_grad");
    check_same_shape(q.mean, x_tilde, "neg_elbo_grad");
    NigGrad g(q.height(), q.width());
    const bool literal = variant == LossVariant::paper_literal;
    for (std::size_t i = 0; i < q.mean.data.size(); ++i) {
        const double yh = q.mean.data[i], lh = q.lambda.data[i], ah = q.alpha.data[i],
                     bh = q.beta.data[i];
        const double y = prior.mean.data[i], l = prior.lambda.data[i], a = prior.alpha.data[i],
                     b = prior.beta.data[i];
        const double dp = y - yh;        // prior residual (KL term)
        const double dx = x_tilde.data[i] - yh; // data residual (expectation term)

        const double kl_yh = l * ah / bh * (yh - y);
        const double kl_lh = -l / (2.0 * lh * lh) + 1.0 / (2.0 * lh);
        const double kl_ah = l * dp * dp / (2.0 * bh) + (ah - a) * trigamma(ah) - (bh - b) / bh;
        const double kl_bh = -l * ah * dp * dp / (2.0 * bh * bh) + a / bh - ah * b / (bh * bh);

        const double ex_yh = ah * dx / bh;
        const double ex_lh = literal ? bh / (lh * lh * lh * (ah - 1.0)) : 1.0 / (2.0 * lh * lh);
        const double ex_ah = 0.5 * trigamma(ah) - dx * dx / (2.0 * bh) +
                             (literal ? bh / (2.0 * lh * lh * (ah - 1.0) * (ah - 1.0)) : 0.0);
        const double ex_bh = -0.5 / bh + ah * dx * dx / (2.0 * bh * bh) -
                             (literal ? 1.0 / (2.0 * lh * lh * (ah - 1.0)) : 0.0);

        g.d_mean.data[i] = kl_yh - ex_yh;
        g.d_lambda.data[i] = kl_lh - ex_lh;
        g.d_alpha.data[i] = kl_ah - ex_ah;
        g.d_beta.data[i] = kl_bh - ex_bh;
    }
    return g;
}

// ---------------------------------------------------------------------------
// Monte Carlo oracles

std::pair<double, double> mc_kl_oracle(const NigField& q, const NigField& p, long n,
                                       std::uint64_t seed) {
    if (n < 1000) throw std::invalid_argument("mc_kl_oracle: need at least 1000 draws");
    q.validate();
    p.validate();
    check_same_shape(q.mean, p.mean, "mc_kl_oracle");
    Rng rng(seed);
    double sum = 0.0, sum2 = 0.0;
    const std::size_t m = q.mean.data.size();
    for (long it = 0; it < n; ++it) {
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double s2 = rng.inverse_gamma(q.alpha.data[i], q.beta.data[i]);
            const double z =
                rng.normal(q.mean.data[i], std::sqrt(s2 / q.lambda.data[i]));
            total += nig_log_density(z, s2, q.mean.data[i], q.lambda.data[i], q.alpha.data[i],
                                     q.beta.data[i]) -
                     nig_log_density(z, s2, p.mean.data[i], p.lambda.data[i], p.alpha.data[i],
                                     p.beta.data[i]);
        }
        sum += total;
        sum2 += total * total;
    }
    const double mean = sum / n;
    const double var = std::max(0.0, sum2 / n - mean * mean);
    return {mean, std::sqrt(var / n)};
}

std::pair<double, double> mc_expectation_oracle(const NigField& q, const Image& x_tilde, long n,
                                                std::uint64_t seed) {
    if (n < 1000) throw std::invalid_argument("mc_expectation_oracle: need at least 1000 draws");
    q.validate();
    check_same_shape(q.mean, x_tilde, "mc_expectation_oracle");
    Rng rng(seed);
    double sum = 0.0, sum2 = 0.0;
    const std::size_t m = q.mean.data.size();
    for (long it = 0; it < n; ++it) {
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double s2 = rng.inverse_gamma(q.alpha.data[i], q.beta.data[i]);
            const double z =
                rng.normal(q.mean.data[i], std::sqrt(s2 / q.lambda.data[i]));
            total += gaussian_log_density(x_tilde.data[i], z, s2);
        }
        sum += total;
        sum2 += total * total;
    }
    const double mean = sum / n;
    const double var = std::max(0.0, sum2 / n - mean * mean);
    return {mean, std::sqrt(var / n)};
}

// ---------------------------------------------------------------------------
// Point estimates and baselines

std::pair<Image, Image> posterior_estimates(const NigField& q) {
    q.validate();
    Image img = q.mean;
    for (double& v : img.data) v = clamp01(v);
    Image noise(q.height(), q.width());
    for (std::size_t i = 0; i < noise.data.size(); ++i)
        noise.data[i] = q.beta.data[i] / (q.alpha.data[i] - 1.0);
    return {std::move(img), std::move(noise)};
}

double mse_loss(const Image& y_hat, const Image& y) {
    check_same_shape(y_hat, y, "mse_loss");
    double se = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        const double d = y_hat.data[i] - y.data[i];
        se += d * d;
    }
    return se / static_cast<double>(y.data.size());
}

} // namespace wjdd

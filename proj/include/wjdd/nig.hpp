// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "wjdd/image.hpp"

namespace wjdd {

// Normal-inverse-gamma parameter field: per pixel and channel, sigma^2 ~
// InvGamma(alpha, beta) and z | sigma^2 ~ N(mean, sigma^2 / lambda).
// alpha > 1 keeps E[sigma^2] = beta/(alpha-1) finite.
struct NigField {
    Image mean;
    Image lambda;
    Image alpha;
    Image beta;

    NigField() = default;
    NigField(int h, int w) : mean(h, w), lambda(h, w, 1.0), alpha(h, w, 2.0), beta(h, w, 1.0) {}

    int height() const { return mean.height; }
    int width() const { return mean.width; }

    // Throws ValidationError unless lambda > 0, beta > 0, alpha > 1 and all
    // four fields are finite and shape-matched.
    void validate() const;
};

enum class LossVariant { paper_literal, derivation_consistent };
const char* to_string(LossVariant v);
LossVariant loss_variant_from_string(const std::string& s);

struct ElboBreakdown {
    double kl = 0.0;          // summed nats
    double expectation = 0.0; // summed nats
    double elbo = 0.0;        // expectation - kl
    long n_sites = 0;         // pixel-channel count the sums run over
    Image per_pixel_kl;
    Image per_pixel_expectation;
};

// Gradient of a scalar loss with respect to each NigField parameter.
struct NigGrad {
    Image d_mean, d_lambda, d_alpha, d_beta;
    explicit NigGrad(int h, int w)
        : d_mean(h, w, 0.0), d_lambda(h, w, 0.0), d_alpha(h, w, 0.0), d_beta(h, w, 0.0) {}
};

// Special functions; absolute error < 1e-10 on [1e-3, 1e6].
double log_gamma(double x);
double digamma(double x);
double trigamma(double x);

// Exact log density of (z, sigma2) under NIG(mean, lambda, alpha, beta).
double nig_log_density(double z, double sigma2, double mean, double lambda, double alpha,
                       double beta);
double gaussian_log_density(double x, double mean, double sigma2);

// Per-pixel draws (z, sigma2); deterministic per seed.
std::pair<Image, Image> sample_nig(const NigField& params, std::uint64_t seed);

// Closed-form KL(q || p) per pixel, both fields NIG.
Image kl_nig(const NigField& q, const NigField& p);

// Closed-form E_q[log p(x_tilde | z, sigma^2)] per pixel. The two variants
// differ in one additive term; see LossVariant.
Image expectation_term(const NigField& q, const Image& x_tilde, LossVariant variant);

ElboBreakdown elbo_loss(const NigField& q, const NigField& prior, const Image& x_tilde,
                        LossVariant variant);

// Gradient of the training loss sum_j (kl_j - expectation_j) with respect to
// the posterior parameters.
NigGrad neg_elbo_grad(const NigField& q, const NigField& prior, const Image& x_tilde,
                      LossVariant variant);

// Monte Carlo estimates validating the closed forms: mean and standard error
// over n field draws of the summed log-density differences.
std::pair<double, double> mc_kl_oracle(const NigField& q, const NigField& p, long n,
                                       std::uint64_t seed);
std::pair<double, double> mc_expectation_oracle(const NigField& q, const Image& x_tilde, long n,
                                                std::uint64_t seed);

// Point estimates: E[z] clamped to [0,1] for display, E[sigma^2] unclamped.
std::pair<Image, Image> posterior_estimates(const NigField& q);

double mse_loss(const Image& y_hat, const Image& y);

} // namespace wjdd

// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0
//
// Out-of-distribution adaptation of a pretrained network on a single raw
// input. The observation itself, sampled at random neighbor pixels, acts as
// a weakly informative prior; pixels whose sampled neighbor falls outside
// the model's own confidence interval are dropped from the loss.

#pragma once

#include <cstdint>
#include <vector>

#include "wjdd/image.hpp"
#include "wjdd/net.hpp"
#include "wjdd/nig.hpp"
#include "wjdd/train.hpp"

namespace wjdd {

struct FinetuneConfig {
    double lambda = 1.0;  // prior precision scale, deliberately weak
    int patch = 3;        // neighbor window p (odd)
    double lr = 2e-6;
    long iterations = 50;
    int window = 19;  // bilateral window for the prior beta map
    LossVariant loss_variant = LossVariant::paper_literal;
    std::uint64_t seed = 0;

    void validate() const;
};

struct NeighborPrior {
    Image prior;  // input resampled at the displaced positions
    // Drawn displacement per pixel/channel, indexed like Image::data. The
    // draw never includes (0,0); reads are clamped to the image bounds, the
    // recorded offsets are the raw draws.
    std::vector<int> dy, dx;
};

// Per pixel/channel, picks a uniform non-zero offset inside the patch x patch
// window and copies that neighbor. Deterministic per seed.
NeighborPrior neighbor_prior(const Image& x_tilde, int patch, std::uint64_t seed);

// Binary per-pixel/channel field: 1 iff |prior - x_tilde| < 2 * sigma with
// strict inequality, so sigma = 0 keeps nothing (not even equal values).
Image confidence_mask(const Image& x_tilde, const Image& prior_image, const Image& sigma);

// Sum of per-pixel (-elbo) over mask support. The prior NIG field is built
// from prior_image: mean = prior_image, lambda = cfg.lambda, alpha/beta from
// the squared residual (x_tilde - prior_image)^2 through the usual bilateral
// path with window cfg.window. Throws when every pixel is masked.
double masked_elbo(const NigField& q, const Image& x_tilde, const Image& prior_image,
                   const Image& mask, const FinetuneConfig& cfg, LossVariant variant);

// Gradient of masked_elbo w.r.t. the posterior parameters; exactly zero at
// masked pixels.
NigGrad masked_elbo_grad(const NigField& q, const Image& x_tilde, const Image& prior_image,
                         const Image& mask, const FinetuneConfig& cfg, LossVariant variant);

struct FinetuneResult {
    Network net;      // adapted weights
    Image restored;   // clamped posterior mean after the final iteration
    // PSNR per iteration (index 0 = pretrained model); empty without a
    // clean reference.
    std::vector<CurvePoint> curve;
};

// Runs cfg.iterations Adam steps on the masked objective. Each iteration
// resamples the neighbor prior and rebuilds the mask from the current
// model's noise estimate sqrt(beta / (alpha - 1)). lr = 0 leaves the weights
// bit-identical to the input network.
FinetuneResult finetune(const Network& pretrained, const RawMosaic& raw,
                        const FinetuneConfig& cfg, const Image* clean = nullptr);

}  // namespace wjdd

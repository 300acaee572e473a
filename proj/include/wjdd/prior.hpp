// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "wjdd/image.hpp"
#include "wjdd/nig.hpp"

namespace wjdd {

// Settings for building the per-pixel conjugate prior from a noisy
// observation and its reference image.
struct PriorConfig {
    // Scaled-precision coupling between the latent clean value and the
    // reference mean. Large values pin the prior mean hard.
    double lambda = 2000.0;

    // Side length of the square neighborhood backing the prior counts.
    // Must be odd and >= 3. alpha is window*window / 2.
    int window = 19;

    // Spatial stddev of the bilateral weight. 0 selects window / 4.
    double bilateral_sigma_spatial = 0.0;

    // Range stddev of the bilateral weight, in squared-residual units.
    // 0 selects 40 * median of the per-channel squared-residual map.
    // The wide default keeps the local variance estimate unbiased on
    // homogeneous regions while still rejecting gross outliers.
    double bilateral_sigma_range = 0.0;

    void validate() const;
};

// Edge-preserving smoothing of a value map. Weights are
// w(t) = exp(-|t|^2 / (2 sigma_spatial^2)) * exp(-(v_t - v_0)^2 / (2 sigma_range^2))
// over a window x window neighborhood clipped to the image bounds, and the
// output is the weighted mean of the in-bounds values. Channels are
// filtered independently with the same parameters.
Image bilateral_filter(const Image& map, int window, double sigma_spatial,
                       double sigma_range);

// Single-plane variant used when per-channel parameters differ.
void bilateral_filter_plane(const double* src, double* dst, int height,
                            int width, int window, double sigma_spatial,
                            double sigma_range);

// Builds the observation-driven prior:
//   mean   = reference
//   lambda = cfg.lambda
//   alpha  = window^2 / 2
//   beta   = alpha * bilateral(squared residual), floored at 1e-8
// The bilateral range parameter adapts per channel to the median squared
// residual unless overridden in cfg.
NigField make_prior(const Image& noisy, const Image& reference,
                    const PriorConfig& cfg);

}  // namespace wjdd

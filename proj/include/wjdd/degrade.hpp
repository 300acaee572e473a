// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "wjdd/image.hpp"
#include "wjdd/nig.hpp"

namespace wjdd {

enum class NoiseKind { gaussian_iid, gaussian_spatial, uniform, poisson_gaussian, brown_gaussian };
const char* to_string(NoiseKind k);
NoiseKind noise_kind_from_string(const std::string& s);

// Parameters are in intensity units on the [0,1] scale; CLI surfaces accept
// 8-bit units and divide by 255 before constructing a spec.
struct NoiseSpec {
    NoiseKind kind = NoiseKind::gaussian_iid;
    double sigma = 0.0;      // gaussian_iid / poisson_gaussian / brown_gaussian
    double sigma_max = 0.0;  // gaussian_spatial: field maximum
    double smoothness = 0.0; // gaussian_spatial: blur std of the sigma field, pixels
    double range = 0.0;      // uniform: U(-range, range)
    double scale_a = 0.01;   // poisson_gaussian: photon scale a
    double blur_sigma = 0.0; // brown_gaussian: blur std, pixels
    std::uint64_t seed = 0;

    void validate() const; // throws ValidationError on out-of-range parameters
};

// Separable Gaussian blur, kernel radius ceil(3*std), borders renormalized
// over in-bounds taps per pass. std = 0 is the identity.
Image gaussian_blur(const Image& img, double std);

// I.i.d. uniform field, blurred with std = smoothness, then min-max rescaled
// to [0, sigma_max]; all three channels equal. Deterministic per seed.
SigmaField gen_sigma_field(int h, int w, double sigma_max, double smoothness,
                           std::uint64_t seed);

// Adds noise per spec; output is NOT clamped.
Image add_noise(const Image& image, const NoiseSpec& spec);

// Spatially varying Gaussian noise from an explicit per-pixel sigma field.
Image add_gaussian_spatial(const Image& image, const SigmaField& sigma, std::uint64_t seed);

// Two-stage sampler: sigma2 ~ InvGamma(alpha, beta), z ~ N(mean, sigma2 /
// lambda), x ~ N(z, sigma2), per pixel. Deterministic per seed.
Image degrade_two_stage(const NigField& prior, std::uint64_t seed);

// Mean of n_shots independent spatially varying corruptions of clean, plus a
// per-pixel PSNR map of the average against clean over 5x5 windows (MSE
// pooled across channels; +infinity where the window MSE is zero).
std::pair<Image, Image> average_shots(const Image& clean, const SigmaField& sigma, int n_shots,
                                      std::uint64_t seed);

} // namespace wjdd

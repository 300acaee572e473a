// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0

#include "wjdd/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "wjdd/common.hpp"
#include "wjdd/rng.hpp"

namespace wjdd {

const char* to_string(NoiseKind k) {
    switch (k) {
    case NoiseKind::gaussian_iid: return "gaussian_iid";
    case NoiseKind::gaussian_spatial: return "gaussian_spatial";
    case NoiseKind::uniform: return "uniform";
    case NoiseKind::poisson_gaussian: return "poisson_gaussian";
    case NoiseKind::brown_gaussian: return "brown_gaussian";
    }
    return "?";
}

NoiseKind noise_kind_from_string(const std::string& s) {
    if (s == "gaussian_iid") return NoiseKind::gaussian_iid;
    if (s == "gaussian_spatial") return NoiseKind::gaussian_spatial;
    if (s == "uniform") return NoiseKind::uniform;
    if (s == "poisson_gaussian") return NoiseKind::poisson_gaussian;
    if (s == "brown_gaussian") return NoiseKind::brown_gaussian;
    throw UsageError("unknown noise kind '" + s + "'");
}

void NoiseSpec::validate() const {
    auto nonneg = [](double v, const char* what) {
        if (!(v >= 0.0) || !std::isfinite(v))
            throw ValidationError(std::string("NoiseSpec: ") + what + " must be >= 0 and finite");
    };
    switch (kind) {
    case NoiseKind::gaussian_iid: nonneg(sigma, "sigma"); break;
    case NoiseKind::gaussian_spatial:
        nonneg(sigma_max, "sigma_max");
        nonneg(smoothness, "smoothness");
        break;
    case NoiseKind::uniform: nonneg(range, "range"); break;
    case NoiseKind::poisson_gaussian:
        nonneg(sigma, "sigma");
        if (!(scale_a > 0.0) || !std::isfinite(scale_a))
            throw ValidationError("NoiseSpec: scale_a must be > 0");
        break;
    case NoiseKind::brown_gaussian:
        nonneg(sigma, "sigma");
        nonneg(blur_sigma, "blur_sigma");
        break;
    }
}

// ---------------------------------------------------------------------------
// Gaussian blur

namespace {

std::vector<double> gaussian_kernel(double std) {
    if (std <= 0.0) return {1.0};
    const int radius = static_cast<int>(std::ceil(3.0 * std));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (std * std));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

// One separable pass along an axis with border renormalization.
void blur_pass(const double* src, double* dst, int h, int w, const std::vector<double>& k,
               bool along_x) {
    const int radius = static_cast<int>(k.size() / 2);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0, wsum = 0.0;
            for (int d = -radius; d <= radius; ++d) {
                const int yy = along_x ? y : y + d;
                const int xx = along_x ? x + d : x;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                const double kv = k[d + radius];
                acc += kv * src[static_cast<std::size_t>(yy) * w + xx];
                wsum += kv;
            }
            dst[static_cast<std::size_t>(y) * w + x] = acc / wsum;
        }
    }
}

} // namespace

Image gaussian_blur(const Image& img, double std) {
    const std::vector<double> k = gaussian_kernel(std);
    if (k.size() == 1) return img;
    Image out(img.height, img.width);
    std::vector<double> tmp(img.plane_size());
    for (int c = 0; c < 3; ++c) {
        blur_pass(img.plane(c), tmp.data(), img.height, img.width, k, true);
        blur_pass(tmp.data(), out.plane(c), img.height, img.width, k, false);
    }
    return out;
}

SigmaField gen_sigma_field(int h, int w, double sigma_max, double smoothness,
                           std::uint64_t seed) {
    if (!(sigma_max >= 0.0) || !(smoothness >= 0.0))
        throw ValidationError("gen_sigma_field: sigma_max and smoothness must be >= 0");
    Rng rng(seed);
    Image field(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double u = rng.uniform();
            field.at(0, y, x) = u;
            field.at(1, y, x) = u;
            field.at(2, y, x) = u;
        }
    field = gaussian_blur(field, smoothness);
    double lo = field.data[0], hi = field.data[0];
    for (double v : field.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;
    for (double& v : field.data) v = span > 0.0 ? (v - lo) / span * sigma_max : 0.0;
    return field;
}

// ---------------------------------------------------------------------------
// Noise models

Image add_gaussian_spatial(const Image& image, const SigmaField& sigma, std::uint64_t seed) {
    if (!image.same_shape(sigma))
        throw std::invalid_argument("add_gaussian_spatial: sigma field shape mismatch");
    for (double v : sigma.data)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw ValidationError("add_gaussian_spatial: sigma must be >= 0 and finite");
    Rng rng(seed);
    Image out = image;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += sigma.data[i] * rng.normal();
    return out;
}

Image add_noise(const Image& image, const NoiseSpec& spec) {
    spec.validate();
    Image out = image;
    switch (spec.kind) {
    case NoiseKind::gaussian_iid: {
        Rng rng(spec.seed);
        for (double& v : out.data) v += spec.sigma * rng.normal();
        break;
    }
    case NoiseKind::gaussian_spatial: {
        const SigmaField field = gen_sigma_field(image.height, image.width, spec.sigma_max,
                                                 spec.smoothness, mix_seed(spec.seed, 1));
        return add_gaussian_spatial(image, field, mix_seed(spec.seed, 2));
    }
    case NoiseKind::uniform: {
        Rng rng(spec.seed);
        for (double& v : out.data) v += rng.uniform(-spec.range, spec.range);
        break;
    }
    case NoiseKind::poisson_gaussian: {
        Rng rng(spec.seed);
        // a * Poisson(x/a) + sigma * N(0,1); negative intensities carry no
        // photons, so their Poisson mean is floored at zero.
        for (double& v : out.data) {
            const double photons =
                static_cast<double>(rng.poisson(std::max(v, 0.0) / spec.scale_a));
            v = spec.scale_a * photons + spec.sigma * rng.normal();
        }
        break;
    }
    case NoiseKind::brown_gaussian: {
        Rng rng(spec.seed);
        Image white(image.height, image.width);
        for (double& v : white.data) v = spec.sigma * rng.normal();
        Image brown = gaussian_blur(white, spec.blur_sigma);
        // Blurring a normalized kernel shrinks the marginal std by the
        // kernel's L2 norm; divide it back out so the interior std stays
        // sigma. The separable 2D norm is the square of the 1D norm.
        const std::vector<double> k = gaussian_kernel(spec.blur_sigma);
        double l2 = 0.0;
        for (double kv : k) l2 += kv * kv;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += brown.data[i] / l2;
        break;
    }
    }
    return out;
}

Image degrade_two_stage(const NigField& prior, std::uint64_t seed) {
    prior.validate();
    Rng rng(seed);
    Image out(prior.height(), prior.width());
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double s2 = rng.inverse_gamma(prior.alpha.data[i], prior.beta.data[i]);
        const double z =
            rng.normal(prior.mean.data[i], std::sqrt(s2 / prior.lambda.data[i]));
        out.data[i] = rng.normal(z, std::sqrt(s2));
    }
    return out;
}

std::pair<Image, Image> average_shots(const Image& clean, const SigmaField& sigma, int n_shots,
                                      std::uint64_t seed) {
    if (n_shots < 1) throw std::invalid_argument("average_shots: n_shots must be >= 1");
    Image avg(clean.height, clean.width, 0.0);
    for (int s = 0; s < n_shots; ++s) {
        const Image shot = add_gaussian_spatial(clean, sigma, mix_seed(seed, s));
        for (std::size_t i = 0; i < avg.data.size(); ++i) avg.data[i] += shot.data[i];
    }
    for (double& v : avg.data) v /= n_shots;

    // Local PSNR of avg vs clean: MSE over a 5x5 window pooled across all
    // three channels, shrink-support at borders; channels of the map equal.
    Image psnr_map(clean.height, clean.width);
    constexpr int kRad = 2;
    for (int y = 0; y < clean.height; ++y)
        for (int x = 0; x < clean.width; ++x) {
            double se = 0.0;
            int n = 0;
            for (int dy = -kRad; dy <= kRad; ++dy)
                for (int dx = -kRad; dx <= kRad; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= clean.height || xx < 0 || xx >= clean.width) continue;
                    for (int c = 0; c < 3; ++c) {
                        const double d = avg.at(c, yy, xx) - clean.at(c, yy, xx);
                        se += d * d;
                        ++n;
                    }
                }
            const double mse = se / n;
            const double db =
                mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / mse);
            for (int c = 0; c < 3; ++c) psnr_map.at(c, y, x) = db;
        }
    return {std::move(avg), std::move(psnr_map)};
}

} // namespace wjdd

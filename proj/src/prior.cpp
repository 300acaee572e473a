// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0

#include "wjdd/prior.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "wjdd/common.hpp"

namespace wjdd {

namespace {

constexpr double kBetaFloor = 1e-8;
constexpr double kMedianFloor = 1e-12;
constexpr double kRangeMedianScale = 40.0;

double plane_median(const double* src, std::size_t n) {
    std::vector<double> v(src, src + n);
    std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + mid);
    return 0.5 * (lo + hi);
}

}  // namespace

void PriorConfig::validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw ValidationError("prior lambda must be positive and finite");
    if (window < 3 || window % 2 == 0)
        throw ValidationError("prior window must be odd and >= 3");
    if (bilateral_sigma_spatial < 0.0 || !std::isfinite(bilateral_sigma_spatial))
        throw ValidationError("bilateral_sigma_spatial must be >= 0");
    if (bilateral_sigma_range < 0.0 || !std::isfinite(bilateral_sigma_range))
        throw ValidationError("bilateral_sigma_range must be >= 0");
}

void bilateral_filter_plane(const double* src, double* dst, int height,
                            int width, int window, double sigma_spatial,
                            double sigma_range) {
    if (window < 3 || window % 2 == 0)
        throw std::invalid_argument("bilateral window must be odd and >= 3");
    if (!(sigma_spatial > 0.0))
        throw std::invalid_argument("bilateral sigma_spatial must be > 0");
    if (!(sigma_range > 0.0))
        throw std::invalid_argument("bilateral sigma_range must be > 0");

    const int rad = window / 2;
    std::vector<double> spatial(static_cast<std::size_t>(window) * window);
    const double inv2ss = 1.0 / (2.0 * sigma_spatial * sigma_spatial);
    for (int dy = -rad; dy <= rad; ++dy)
        for (int dx = -rad; dx <= rad; ++dx)
            spatial[static_cast<std::size_t>(dy + rad) * window + (dx + rad)] =
                std::exp(-(static_cast<double>(dy) * dy + static_cast<double>(dx) * dx) * inv2ss);

    const double inv2sr = 1.0 / (2.0 * sigma_range * sigma_range);
    for (int y = 0; y < height; ++y) {
        const int dy0 = std::max(-rad, -y);
        const int dy1 = std::min(rad, height - 1 - y);
        for (int x = 0; x < width; ++x) {
            const double center = src[static_cast<std::size_t>(y) * width + x];
            const int dx0 = std::max(-rad, -x);
            const int dx1 = std::min(rad, width - 1 - x);
            double wsum = 0.0, vsum = 0.0;
            for (int dy = dy0; dy <= dy1; ++dy) {
                const double* row = src + static_cast<std::size_t>(y + dy) * width + x;
                const double* srow =
                    spatial.data() + static_cast<std::size_t>(dy + rad) * window + rad;
                for (int dx = dx0; dx <= dx1; ++dx) {
                    const double v = row[dx];
                    const double d = v - center;
                    const double w = srow[dx] * std::exp(-d * d * inv2sr);
                    wsum += w;
                    vsum += w * v;
                }
            }
            // The center tap always contributes weight 1, so wsum >= 1.
            dst[static_cast<std::size_t>(y) * width + x] = vsum / wsum;
        }
    }
}

Image bilateral_filter(const Image& map, int window, double sigma_spatial,
                       double sigma_range) {
    Image out(map.height, map.width);
    for (int c = 0; c < 3; ++c)
        bilateral_filter_plane(map.plane(c), out.plane(c), map.height,
                               map.width, window, sigma_spatial, sigma_range);
    return out;
}

NigField make_prior(const Image& noisy, const Image& reference,
                    const PriorConfig& cfg) {
    cfg.validate();
    if (!noisy.same_shape(reference))
        throw std::invalid_argument("make_prior: image shapes differ");

    Image residual_sq(noisy.height, noisy.width);
    const std::size_t plane = noisy.plane_size();
    for (std::size_t i = 0; i < noisy.data.size(); ++i) {
        const double r = noisy.data[i] - reference.data[i];
        residual_sq.data[i] = r * r;
    }

    const double sigma_spatial = cfg.bilateral_sigma_spatial > 0.0
                                     ? cfg.bilateral_sigma_spatial
                                     : cfg.window / 4.0;
    const double alpha = 0.5 * static_cast<double>(cfg.window) * cfg.window;

    NigField prior(noisy.height, noisy.width);
    prior.mean = reference;
    std::fill(prior.lambda.data.begin(), prior.lambda.data.end(), cfg.lambda);
    std::fill(prior.alpha.data.begin(), prior.alpha.data.end(), alpha);

    for (int c = 0; c < 3; ++c) {
        double sigma_range = cfg.bilateral_sigma_range;
        if (sigma_range <= 0.0) {
            const double med =
                std::max(plane_median(residual_sq.plane(c), plane), kMedianFloor);
            sigma_range = kRangeMedianScale * med;
        }
        bilateral_filter_plane(residual_sq.plane(c), prior.beta.plane(c),
                               noisy.height, noisy.width, cfg.window,
                               sigma_spatial, sigma_range);
    }
    for (double& b : prior.beta.data) b = std::max(alpha * b, kBetaFloor);
    return prior;
}

}  // namespace wjdd

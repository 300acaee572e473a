// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace wjdd {

enum class CfaPhase { RGGB, GRBG, GBRG, BGGR };

const char* to_string(CfaPhase phase);
CfaPhase cfa_phase_from_string(const std::string& s);

// Three-channel floating-point image, planar layout (channel, row, column).
// Values are nominally in [0, 1]; noise synthesis and loss inputs may carry
// out-of-range values, clamping happens only at file boundaries and in
// posterior_estimates. Dimensions must be even and >= 2 (Bayer packing works
// on 2x2 tiles).
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> data; // size 3 * height * width

    Image() = default;
    Image(int h, int w, double fill = 0.0);

    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double* plane(int c) { return data.data() + static_cast<std::size_t>(c) * height * width; }
    const double* plane(int c) const {
        return data.data() + static_cast<std::size_t>(c) * height * width;
    }
    std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const { return data.size(); }
    bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
};

// Per-pixel, per-channel noise standard deviation (or variance) map. Shares
// the Image container; values are nonnegative instead of [0, 1].
using SigmaField = Image;

// Single-channel Bayer luminance readings plus the CFA phase tag.
struct RawMosaic {
    int height = 0;
    int width = 0;
    std::vector<double> data; // size height * width
    CfaPhase phase = CfaPhase::RGGB;

    RawMosaic() = default;
    RawMosaic(int h, int w, CfaPhase p = CfaPhase::RGGB, double fill = 0.0);

    double& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

struct MetricReport {
    double psnr = 0.0;
    double ssim = 0.0;
};

// PNG I/O. 8- or 16-bit, RGB or grayscale (grayscale is replicated to three
// channels on load). Odd dimensions and other color types are rejected.
Image load_png(const std::string& path);
void save_png(const Image& image, const std::string& path, int bit_depth = 8);

// Raw mosaics travel as 16-bit grayscale PNG; the phase is not stored in the
// file and must be supplied on load.
RawMosaic load_raw_png(const std::string& path, CfaPhase phase = CfaPhase::RGGB);
void save_raw_png(const RawMosaic& raw, const std::string& path);

// 10*log10(peak^2 / MSE) over all pixels and channels; +infinity when MSE = 0.
double psnr(const Image& a, const Image& b, double peak = 1.0);

// Mean per-channel SSIM, 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
// K2 = 0.03, dynamic range 1. Requires min(H, W) >= 11.
double ssim(const Image& a, const Image& b);

MetricReport compare_images(const Image& a, const Image& b);

} // namespace wjdd

// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0

#include "wjdd/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <memory>
#include <stdexcept>

#include <png.h>

#include "wjdd/common.hpp"

namespace wjdd {

const char* to_string(CfaPhase phase) {
    switch (phase) {
    case CfaPhase::RGGB: return "RGGB";
    case CfaPhase::GRBG: return "GRBG";
    case CfaPhase::GBRG: return "GBRG";
    case CfaPhase::BGGR: return "BGGR";
    }
    return "?";
}

CfaPhase cfa_phase_from_string(const std::string& s) {
    if (s == "RGGB") return CfaPhase::RGGB;
    if (s == "GRBG") return CfaPhase::GRBG;
    if (s == "GBRG") return CfaPhase::GBRG;
    if (s == "BGGR") return CfaPhase::BGGR;
    throw UsageError("unknown CFA phase '" + s + "' (expected RGGB/GRBG/GBRG/BGGR)");
}

static void check_dims(int h, int w) {
    if (h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0)
        throw std::invalid_argument("image dimensions must be even and >= 2, got " +
                                    std::to_string(h) + "x" + std::to_string(w));
}

Image::Image(int h, int w, double fill) : height(h), width(w) {
    check_dims(h, w);
    data.assign(static_cast<std::size_t>(3) * h * w, fill);
}

RawMosaic::RawMosaic(int h, int w, CfaPhase p, double fill) : height(h), width(w), phase(p) {
    check_dims(h, w);
    data.assign(static_cast<std::size_t>(h) * w, fill);
}

// ---------------------------------------------------------------------------
// PNG I/O

namespace {

struct PngReader {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngWriter {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

// Decodes into row-major interleaved u16 samples with `channels` 1 or 3.
struct DecodedPng {
    int height = 0, width = 0, channels = 0, bit_depth = 0;
    std::vector<std::uint16_t> samples;
};

DecodedPng decode_png(const std::string& path) {
    PngReader r;
    r.fp = std::fopen(path.c_str(), "rb");
    if (!r.fp) throw IoError("cannot open '" + path + "' for reading");

    unsigned char sig[8];
    if (std::fread(sig, 1, 8, r.fp) != 8 || png_sig_cmp(sig, 0, 8))
        throw IoError("'" + path + "' is not a PNG file");

    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) throw IoError("libpng: failed to create read struct");
    r.info = png_create_info_struct(r.png);
    if (!r.info) throw IoError("libpng: failed to create info struct");
    if (setjmp(png_jmpbuf(r.png))) throw IoError("libpng: error while reading '" + path + "'");

    png_init_io(r.png, r.fp);
    png_set_sig_bytes(r.png, 8);
    png_read_info(r.png, r.info);

    const int bit_depth = png_get_bit_depth(r.png, r.info);
    const int color_type = png_get_color_type(r.png, r.info);
    const png_uint_32 w = png_get_image_width(r.png, r.info);
    const png_uint_32 h = png_get_image_height(r.png, r.info);

    if (bit_depth != 8 && bit_depth != 16)
        throw IoError("'" + path + "': unsupported bit depth " + std::to_string(bit_depth) +
                      " (only 8 and 16 supported)");
    if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_RGB)
        throw IoError("'" + path + "': unsupported color type (only 8/16-bit RGB and grayscale "
                      "PNGs are accepted)");
    if (h % 2 != 0 || w % 2 != 0 || h < 2 || w < 2)
        throw IoError("'" + path + "': dimensions " + std::to_string(w) + "x" + std::to_string(h) +
                      " must be even and >= 2 (Bayer 2x2 tiling)");

    if (bit_depth == 16) png_set_swap(r.png); // file is big-endian

    DecodedPng out;
    out.height = static_cast<int>(h);
    out.width = static_cast<int>(w);
    out.channels = (color_type == PNG_COLOR_TYPE_RGB) ? 3 : 1;
    out.bit_depth = bit_depth;
    out.samples.resize(static_cast<std::size_t>(h) * w * out.channels);

    std::vector<png_bytep> rows(h);
    std::vector<std::uint8_t> buf8;
    if (bit_depth == 8) {
        buf8.resize(out.samples.size());
        for (png_uint_32 y = 0; y < h; ++y)
            rows[y] = buf8.data() + static_cast<std::size_t>(y) * w * out.channels;
    } else {
        for (png_uint_32 y = 0; y < h; ++y)
            rows[y] = reinterpret_cast<png_bytep>(out.samples.data() +
                                                  static_cast<std::size_t>(y) * w * out.channels);
    }
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);

    if (bit_depth == 8)
        for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] = buf8[i];
    return out;
}

void encode_png(const std::string& path, int height, int width, int channels, int bit_depth,
                const std::vector<std::uint16_t>& samples) {
    // Write to a temp file and rename so failures never leave partial output.
    const std::string tmp = path + ".tmp";
    {
        PngWriter wtr;
        wtr.fp = std::fopen(tmp.c_str(), "wb");
        if (!wtr.fp) throw IoError("cannot open '" + path + "' for writing");
        wtr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        if (!wtr.png) throw IoError("libpng: failed to create write struct");
        wtr.info = png_create_info_struct(wtr.png);
        if (!wtr.info) throw IoError("libpng: failed to create info struct");
        if (setjmp(png_jmpbuf(wtr.png))) throw IoError("libpng: error while writing '" + path + "'");

        png_init_io(wtr.png, wtr.fp);
        png_set_IHDR(wtr.png, wtr.info, width, height, bit_depth,
                     channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(wtr.png, wtr.info);
        if (bit_depth == 16) png_set_swap(wtr.png);

        std::vector<png_bytep> rows(height);
        std::vector<std::uint8_t> buf8;
        if (bit_depth == 8) {
            buf8.resize(samples.size());
            for (std::size_t i = 0; i < samples.size(); ++i)
                buf8[i] = static_cast<std::uint8_t>(samples[i]);
            for (int y = 0; y < height; ++y)
                rows[y] = buf8.data() + static_cast<std::size_t>(y) * width * channels;
        } else {
            for (int y = 0; y < height; ++y)
                rows[y] = reinterpret_cast<png_bytep>(
                    const_cast<std::uint16_t*>(samples.data()) +
                    static_cast<std::size_t>(y) * width * channels);
        }
        png_write_image(wtr.png, rows.data());
        png_write_end(wtr.png, nullptr);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw IoError("cannot rename temporary file onto '" + path + "'");
    }
}

std::uint16_t quantize(double v, int bit_depth) {
    const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
    const double q = std::round(clamp01(v) * maxv); // ties away from zero: round(0.5*255) = 128
    return static_cast<std::uint16_t>(q);
}

} // namespace

Image load_png(const std::string& path) {
    DecodedPng d = decode_png(path);
    const double scale = d.bit_depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
    Image img(d.height, d.width);
    for (int y = 0; y < d.height; ++y) {
        for (int x = 0; x < d.width; ++x) {
            const std::size_t base = (static_cast<std::size_t>(y) * d.width + x) * d.channels;
            if (d.channels == 3) {
                img.at(0, y, x) = d.samples[base + 0] * scale;
                img.at(1, y, x) = d.samples[base + 1] * scale;
                img.at(2, y, x) = d.samples[base + 2] * scale;
            } else {
                const double v = d.samples[base] * scale;
                img.at(0, y, x) = v;
                img.at(1, y, x) = v;
                img.at(2, y, x) = v;
            }
        }
    }
    return img;
}

void save_png(const Image& image, const std::string& path, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16)
        throw UsageError("save_png: bit depth must be 8 or 16");
    for (double v : image.data)
        if (!std::isfinite(v)) throw std::invalid_argument("save_png: non-finite pixel value");
    std::vector<std::uint16_t> samples(static_cast<std::size_t>(image.height) * image.width * 3);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c)
                samples[(static_cast<std::size_t>(y) * image.width + x) * 3 + c] =
                    quantize(image.at(c, y, x), bit_depth);
    encode_png(path, image.height, image.width, 3, bit_depth, samples);
}

RawMosaic load_raw_png(const std::string& path, CfaPhase phase) {
    DecodedPng d = decode_png(path);
    if (d.channels != 1)
        throw IoError("'" + path + "': expected a grayscale PNG holding a raw mosaic");
    const double scale = d.bit_depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
    RawMosaic raw(d.height, d.width, phase);
    for (std::size_t i = 0; i < raw.data.size(); ++i) raw.data[i] = d.samples[i] * scale;
    return raw;
}

void save_raw_png(const RawMosaic& raw, const std::string& path) {
    for (double v : raw.data)
        if (!std::isfinite(v)) throw std::invalid_argument("save_raw_png: non-finite value");
    std::vector<std::uint16_t> samples(raw.data.size());
    for (std::size_t i = 0; i < raw.data.size(); ++i) samples[i] = quantize(raw.data[i], 16);
    encode_png(path, raw.height, raw.width, 1, 16, samples);
}

// ---------------------------------------------------------------------------
// Metrics

double psnr(const Image& a, const Image& b, double peak) {
    if (!a.same_shape(b)) throw std::invalid_argument("psnr: image dimensions differ");
    double se = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("ssim: image dimensions differ");
    constexpr int kWin = 11;
    constexpr int kRad = kWin / 2;
    if (a.height < kWin || a.width < kWin)
        throw std::invalid_argument("ssim: images must be at least 11x11");

    // 11x11 Gaussian window, sigma 1.5, normalized to unit sum.
    double win[kWin][kWin];
    double wsum = 0.0;
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
            const double dy = i - kRad, dx = j - kRad;
            win[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
            wsum += win[i][j];
        }
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) win[i][j] /= wsum;

    constexpr double kC1 = 0.01 * 0.01; // (K1 * L)^2 with L = 1
    constexpr double kC2 = 0.03 * 0.03;

    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        long count = 0;
        for (int y = kRad; y < a.height - kRad; ++y) {
            for (int x = kRad; x < a.width - kRad; ++x) {
                double mu1 = 0, mu2 = 0, s11 = 0, s22 = 0, s12 = 0;
                for (int i = 0; i < kWin; ++i)
                    for (int j = 0; j < kWin; ++j) {
                        const double w = win[i][j];
                        const double v1 = a.at(c, y + i - kRad, x + j - kRad);
                        const double v2 = b.at(c, y + i - kRad, x + j - kRad);
                        mu1 += w * v1;
                        mu2 += w * v2;
                        s11 += w * v1 * v1;
                        s22 += w * v2 * v2;
                        s12 += w * v1 * v2;
                    }
                const double var1 = s11 - mu1 * mu1;
                const double var2 = s22 - mu2 * mu2;
                const double cov = s12 - mu1 * mu2;
                const double num = (2.0 * mu1 * mu2 + kC1) * (2.0 * cov + kC2);
                const double den = (mu1 * mu1 + mu2 * mu2 + kC1) * (var1 + var2 + kC2);
                acc += num / den;
                ++count;
            }
        }
        total += acc / static_cast<double>(count);
    }
    return total / 3.0;
}

MetricReport compare_images(const Image& a, const Image& b) {
    return MetricReport{psnr(a, b), ssim(a, b)};
}

} // namespace wjdd

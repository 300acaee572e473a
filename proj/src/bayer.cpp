// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0

#include "wjdd/bayer.hpp"

#include <algorithm>
#include <stdexcept>
#include <utility>
#include <vector>

namespace wjdd {

namespace {

// Parity (row, col) of the red sample within each 2x2 tile.
std::pair<int, int> red_parity(CfaPhase phase) {
    switch (phase) {
    case CfaPhase::RGGB: return {0, 0};
    case CfaPhase::GRBG: return {0, 1};
    case CfaPhase::GBRG: return {1, 0};
    case CfaPhase::BGGR: return {1, 1};
    }
    return {0, 0};
}

CfaPhase phase_from_parity(int ry, int rx) {
    static constexpr CfaPhase table[2][2] = {{CfaPhase::RGGB, CfaPhase::GRBG},
                                             {CfaPhase::GBRG, CfaPhase::BGGR}};
    return table[ry & 1][rx & 1];
}

// Raster with explicit dims, shared by mosaic planes and image planes.
struct Plane {
    int h = 0, w = 0;
    std::vector<double> v;
    double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
    double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane flip_h(const Plane& p) {
    Plane o{p.h, p.w, std::vector<double>(p.v.size())};
    for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x) o.at(y, x) = p.at(y, p.w - 1 - x);
    return o;
}

Plane rot90_ccw(const Plane& p) {
    Plane o{p.w, p.h, std::vector<double>(p.v.size())};
    for (int y = 0; y < o.h; ++y)
        for (int x = 0; x < o.w; ++x) o.at(y, x) = p.at(x, p.w - 1 - y);
    return o;
}

Plane dihedral_plane(Plane p, DihedralTransform t) {
    if (t.flip()) p = flip_h(p);
    for (int r = 0; r < t.rot(); ++r) p = rot90_ccw(p);
    return p;
}

// Shifts content one pixel toward +y/+x where the parity flag is set; the
// vacated leading edge reflects about the old edge pixel (new(0) = old(1)),
// which preserves CFA parity, and the trailing edge is cropped.
Plane unify_shift(const Plane& p, int py, int px) {
    Plane o{p.h, p.w, std::vector<double>(p.v.size())};
    for (int y = 0; y < p.h; ++y) {
        const int sy = (y < py) ? 1 : y - py;
        for (int x = 0; x < p.w; ++x) {
            const int sx = (x < px) ? 1 : x - px;
            o.at(y, x) = p.at(sy, sx);
        }
    }
    return o;
}

// Inverse of unify_shift; the cropped trailing row/column is edge-replicated.
Plane undo_shift(const Plane& p, int py, int px) {
    Plane o{p.h, p.w, std::vector<double>(p.v.size())};
    for (int y = 0; y < p.h; ++y) {
        const int sy = std::min(y + py, p.h - 1);
        for (int x = 0; x < p.w; ++x) {
            const int sx = std::min(x + px, p.w - 1);
            o.at(y, x) = p.at(sy, sx);
        }
    }
    return o;
}

Plane raw_plane(const RawMosaic& raw) { return Plane{raw.height, raw.width, raw.data}; }

Plane image_plane(const Image& img, int c) {
    Plane p{img.height, img.width, {}};
    p.v.assign(img.plane(c), img.plane(c) + img.plane_size());
    return p;
}

} // namespace

int bayer_channel_at(CfaPhase phase, int y, int x) {
    const auto [ry, rx] = red_parity(phase);
    const int py = y & 1, px = x & 1;
    if (py == ry && px == rx) return 0;
    if (py == (1 - ry) && px == (1 - rx)) return 2;
    return 1;
}

CfaPhase transformed_phase(CfaPhase phase, DihedralTransform t) {
    auto [ry, rx] = red_parity(phase);
    if (t.flip()) rx = 1 - rx;
    for (int r = 0; r < t.rot(); ++r) {
        // CCW quarter turn maps (row, col) parity (ry, rx) to (1 - rx, ry)
        // because the last column becomes the first row (even dims).
        const int nry = 1 - rx;
        rx = ry;
        ry = nry;
    }
    return phase_from_parity(ry, rx);
}

RawMosaic mosaic(const Image& image, CfaPhase phase) {
    RawMosaic raw(image.height, image.width, phase);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            raw.at(y, x) = image.at(bayer_channel_at(phase, y, x), y, x);
    return raw;
}

Image bilinear_demosaic(const RawMosaic& raw) {
    const int h = raw.height, w = raw.width;
    Image out(h, w);
    static constexpr int axial[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
    static constexpr int diag[4][2] = {{-1, -1}, {-1, 1}, {1, -1}, {1, 1}};

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int have = bayer_channel_at(raw.phase, y, x);
            out.at(have, y, x) = raw.at(y, x);
            for (int c = 0; c < 3; ++c) {
                if (c == have) continue;
                // The standard bilinear stencil: axial same-channel neighbors
                // when the pattern provides them (G everywhere, R/B from a G
                // site), diagonals otherwise (R at B sites and vice versa).
                // Out-of-bounds neighbors are dropped (shrinking support).
                double sum = 0.0;
                int n = 0;
                for (const auto& d : axial) {
                    const int yy = y + d[0], xx = x + d[1];
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    if (bayer_channel_at(raw.phase, yy, xx) != c) continue;
                    sum += raw.at(yy, xx);
                    ++n;
                }
                if (n == 0) {
                    for (const auto& d : diag) {
                        const int yy = y + d[0], xx = x + d[1];
                        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                        if (bayer_channel_at(raw.phase, yy, xx) != c) continue;
                        sum += raw.at(yy, xx);
                        ++n;
                    }
                }
                out.at(c, y, x) = sum / n;
            }
        }
    }
    return out;
}

Tensor pack4(const RawMosaic& raw) {
    Tensor t(4, raw.height / 2, raw.width / 2);
    for (int y = 0; y < t.height; ++y)
        for (int x = 0; x < t.width; ++x) {
            t.at(0, y, x) = raw.at(2 * y, 2 * x);
            t.at(1, y, x) = raw.at(2 * y, 2 * x + 1);
            t.at(2, y, x) = raw.at(2 * y + 1, 2 * x);
            t.at(3, y, x) = raw.at(2 * y + 1, 2 * x + 1);
        }
    return t;
}

RawMosaic unpack4(const Tensor& planes, CfaPhase phase) {
    if (planes.channels != 4)
        throw std::invalid_argument("unpack4: expected exactly 4 planes");
    RawMosaic raw(planes.height * 2, planes.width * 2, phase);
    for (int y = 0; y < planes.height; ++y)
        for (int x = 0; x < planes.width; ++x) {
            raw.at(2 * y, 2 * x) = planes.at(0, y, x);
            raw.at(2 * y, 2 * x + 1) = planes.at(1, y, x);
            raw.at(2 * y + 1, 2 * x) = planes.at(2, y, x);
            raw.at(2 * y + 1, 2 * x + 1) = planes.at(3, y, x);
        }
    return raw;
}

Tensor space_to_depth(const Tensor& t) {
    if (t.height % 2 != 0 || t.width % 2 != 0)
        throw std::invalid_argument("space_to_depth: dims must be even");
    Tensor o(t.channels * 4, t.height / 2, t.width / 2);
    for (int c = 0; c < t.channels; ++c)
        for (int y = 0; y < o.height; ++y)
            for (int x = 0; x < o.width; ++x) {
                o.at(4 * c + 0, y, x) = t.at(c, 2 * y, 2 * x);
                o.at(4 * c + 1, y, x) = t.at(c, 2 * y, 2 * x + 1);
                o.at(4 * c + 2, y, x) = t.at(c, 2 * y + 1, 2 * x);
                o.at(4 * c + 3, y, x) = t.at(c, 2 * y + 1, 2 * x + 1);
            }
    return o;
}

Tensor depth_to_space(const Tensor& t) {
    if (t.channels % 4 != 0)
        throw std::invalid_argument("depth_to_space: channel count must be divisible by 4");
    Tensor o(t.channels / 4, t.height * 2, t.width * 2);
    for (int c = 0; c < o.channels; ++c)
        for (int y = 0; y < t.height; ++y)
            for (int x = 0; x < t.width; ++x) {
                o.at(c, 2 * y, 2 * x) = t.at(4 * c + 0, y, x);
                o.at(c, 2 * y, 2 * x + 1) = t.at(4 * c + 1, y, x);
                o.at(c, 2 * y + 1, 2 * x) = t.at(4 * c + 2, y, x);
                o.at(c, 2 * y + 1, 2 * x + 1) = t.at(4 * c + 3, y, x);
            }
    return o;
}

Image dihedral_image(const Image& image, DihedralTransform t) {
    const Plane p0 = dihedral_plane(image_plane(image, 0), t);
    Image out(p0.h, p0.w);
    for (int c = 0; c < 3; ++c) {
        const Plane p = (c == 0) ? p0 : dihedral_plane(image_plane(image, c), t);
        std::copy(p.v.begin(), p.v.end(), out.plane(c));
    }
    return out;
}

RawMosaic bayer_transform(const RawMosaic& raw, DihedralTransform t) {
    const CfaPhase moved = transformed_phase(raw.phase, t);
    const auto [py, px] = red_parity(moved);
    const Plane shifted = unify_shift(dihedral_plane(raw_plane(raw), t), py, px);
    RawMosaic out(shifted.h, shifted.w, CfaPhase::RGGB);
    out.data = shifted.v;
    return out;
}

RawMosaic inverse_bayer_transform(const RawMosaic& raw, DihedralTransform t) {
    const auto [py, px] = red_parity(transformed_phase(CfaPhase::RGGB, t));
    const Plane p = dihedral_plane(undo_shift(raw_plane(raw), py, px), t.inverse());
    RawMosaic out(p.h, p.w, CfaPhase::RGGB);
    out.data = p.v;
    return out;
}

RawMosaic unify_phase(const RawMosaic& raw) {
    const auto [py, px] = red_parity(raw.phase);
    const Plane p = unify_shift(raw_plane(raw), py, px);
    RawMosaic out(p.h, p.w, CfaPhase::RGGB);
    out.data = p.v;
    return out;
}

Image undo_bayer_transform_image(const Image& image, DihedralTransform t) {
    const auto [py, px] = red_parity(transformed_phase(CfaPhase::RGGB, t));
    Image unshifted(image.height, image.width);
    for (int c = 0; c < 3; ++c) {
        const Plane p = undo_shift(image_plane(image, c), py, px);
        std::copy(p.v.begin(), p.v.end(), unshifted.plane(c));
    }
    return dihedral_image(unshifted, t.inverse());
}

Image self_ensemble(const std::function<Image(const RawMosaic&)>& infer, const RawMosaic& raw) {
    Image acc(raw.height, raw.width, 0.0);
    for (int i = 0; i < 8; ++i) {
        const DihedralTransform t{i};
        const Image restored = undo_bayer_transform_image(infer(bayer_transform(raw, t)), t);
        if (!restored.same_shape(acc))
            throw std::invalid_argument("self_ensemble: infer changed the raster size");
        for (std::size_t j = 0; j < acc.data.size(); ++j) acc.data[j] += restored.data[j];
    }
    for (double& v : acc.data) v /= 8.0;
    return acc;
}

} // namespace wjdd

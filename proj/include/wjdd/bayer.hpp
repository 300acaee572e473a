// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

#include "wjdd/image.hpp"
#include "wjdd/tensor.hpp"

namespace wjdd {

// Element of the dihedral group of the square, encoded as index = rot + 4*flip
// with the horizontal flip applied first, then `rot` counterclockwise quarter
// turns. Index 0 is the identity.
struct DihedralTransform {
    int index = 0;

    int rot() const { return index % 4; }
    bool flip() const { return index >= 4; }
    DihedralTransform inverse() const {
        // Flipped elements are involutions; pure rotations invert to 4 - r.
        return flip() ? *this : DihedralTransform{(4 - rot()) % 4};
    }
};

// Channel sampled by the CFA at (y, x): 0 = R, 1 = G, 2 = B.
int bayer_channel_at(CfaPhase phase, int y, int x);

// CFA phase of the raster after applying t to a raster of phase `phase`.
CfaPhase transformed_phase(CfaPhase phase, DihedralTransform t);

RawMosaic mosaic(const Image& image, CfaPhase phase);

Image bilinear_demosaic(const RawMosaic& raw);

// 2x2 space-to-depth of a mosaic: plane k of the result holds tile offsets
// {(0,0),(0,1),(1,0),(1,1)} in that order.
Tensor pack4(const RawMosaic& raw);
RawMosaic unpack4(const Tensor& planes, CfaPhase phase = CfaPhase::RGGB);

// Generic 2x2 space-to-depth / depth-to-space on C-channel tensors. Output
// channel 4*c + k of space_to_depth holds offset k of input channel c.
Tensor space_to_depth(const Tensor& t);
Tensor depth_to_space(const Tensor& t);

// Plain geometric transform of a color image (no CFA bookkeeping).
Image dihedral_image(const Image& image, DihedralTransform t);

// Geometric transform plus phase unification: the result raster is always
// RGGB, same size (height/width swap for odd rotations), achieved by a
// one-pixel parity-preserving reflect pad on the leading edge and a crop of
// the trailing edge on each axis whose R parity moved.
RawMosaic bayer_transform(const RawMosaic& raw, DihedralTransform t);

// Left inverse of bayer_transform for rasters of original phase RGGB; exact
// except on the trailing row/column lost to the unification crop, which is
// reconstructed by edge replication.
RawMosaic inverse_bayer_transform(const RawMosaic& raw, DihedralTransform t);

// Converts a raw of any phase to RGGB with the same unification shift used by
// bayer_transform.
RawMosaic unify_phase(const RawMosaic& raw);

// Undo of bayer_transform's unification + geometry for a color image produced
// from the transformed raster (used to map per-branch outputs back).
Image undo_bayer_transform_image(const Image& image, DihedralTransform t);

// Mean of the 8 back-transformed outputs of `infer` over all dihedral
// versions of `raw`. Branches are evaluated and accumulated in index order.
Image self_ensemble(const std::function<Image(const RawMosaic&)>& infer, const RawMosaic& raw);

} // namespace wjdd

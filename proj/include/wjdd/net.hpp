// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wjdd/image.hpp"
#include "wjdd/nig.hpp"
#include "wjdd/tensor.hpp"

namespace wjdd {

// Architecture hyperparameters. The raster is processed at half resolution
// after a 2x2 space-to-depth, so `channels` must be divisible by 4 for the
// final depth-to-space back to full resolution.
struct NetConfig {
    int channels = 16;     // trunk width at half resolution
    int grdb_blocks = 2;   // residual dense blocks
    int grdb_layers = 3;   // 3x3 layers per block
    int growth = 16;       // channels added by each dense layer
    int kernel = 3;        // trunk kernel size (fixed)

    void validate() const;
};

// One convolution: zero padding, stride 1, kernel k x k.
// Weights are laid out [out][in][ky][kx]; biases [out].
struct ConvLayer {
    std::string name;
    int in_ch = 0, out_ch = 0, k = 0;
    std::vector<double> w;
    std::vector<double> b;

    ConvLayer() = default;
    ConvLayer(std::string n, int in_c, int out_c, int kk);
    std::size_t num_params() const { return w.size() + b.size(); }
};

// Intermediate activations retained by forward_cached for the backward pass.
struct NetCache {
    int h = 0, w = 0;    // full resolution
    int h2 = 0, w2 = 0;  // half resolution
    Tensor t0;           // packed input
    Tensor z_in, x_in;   // conv_in pre/post activation
    Tensor z_a, x_a;
    Tensor z_b, x_b;
    struct BlockCache {
        Tensor cat;                   // post-activation concatenation, the
                                      // first `channels` planes are the input
        std::vector<Tensor> z_dense;  // dense pre-activations
        Tensor f_out;                 // residual output
    };
    std::vector<BlockCache> blocks;
    Tensor z_up, x_up;
    Tensor fu;  // depth-to-space of x_up, the head input
    Tensor p;   // raw head planes, no activation
};

// Fully convolutional joint demosaicking/denoising network. Input is an
// RGGB mosaic; output is a per-pixel posterior field over the clean image.
//
// Layout: pack -> 3 stem convs -> grdb_blocks dense residual blocks ->
// one conv -> depth-to-space -> 3x3 head emitting 12 planes that the head
// mapping turns into (mean, lambda, alpha, beta):
//   mean   = bilinear demosaic + planes 0..2
//   lambda = softplus(planes 3..5) + 1e-3
//   alpha  = 1 + 1e-3 + softplus(planes 6..8)
//   beta   = softplus(planes 9..11) + 1e-8
// All arithmetic is double precision; checkpoints narrow to float32.
class Network {
public:
    explicit Network(const NetConfig& cfg);

    const NetConfig& config() const { return cfg_; }
    const std::vector<ConvLayer>& layers() const { return layers_; }
    std::vector<ConvLayer>& layers() { return layers_; }

    // Gaussian fan-in init (std = sqrt(2 / (in_ch * k * k))), zero biases.
    void init_weights(std::uint64_t seed);

    std::size_t num_params() const;
    std::vector<double> get_params() const;
    void set_params(const std::vector<double>& flat);

    NigField forward(const RawMosaic& raw) const;
    NigField forward_cached(const RawMosaic& raw, NetCache* cache) const;

    // Backprop of a scalar loss whose gradient with respect to the four
    // output fields is `d_field`. Returns flat parameter gradients aligned
    // with get_params(); ADDS into *accum when it is non-null instead.
    std::vector<double> backward(const NetCache& cache,
                                 const NigGrad& d_field) const;
    void backward_accum(const NetCache& cache, const NigGrad& d_field,
                        std::vector<double>* accum) const;

private:
    NetConfig cfg_;
    std::vector<ConvLayer> layers_;
    // Indices into layers_ for the fixed roles.
    int idx_in_, idx_a_, idx_b_, idx_up_, idx_head_;
    std::vector<std::vector<int>> idx_dense_;  // [block][layer]
    std::vector<int> idx_fuse_;                // [block]
};

double softplus(double x);
double sigmoid(double x);

// Convolution primitives backing Network. `in` holds layer.in_ch planes of
// h*w doubles; `out` holds layer.out_ch planes. The backward accumulates
// (+=) into d_w, d_b and, when non-null, d_in.
void conv2d_forward(const ConvLayer& layer, const double* in, int h, int w, double* out);
void conv2d_backward(const ConvLayer& layer, const double* in, const double* d_out, int h, int w,
                     double* d_in, double* d_w, double* d_b);

}  // namespace wjdd

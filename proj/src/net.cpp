// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0

#include "wjdd/net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wjdd/bayer.hpp"
#include "wjdd/common.hpp"
#include "wjdd/rng.hpp"

namespace wjdd {

namespace {

constexpr double kLreluSlope = 0.1;
constexpr double kLambdaFloor = 1e-3;
constexpr double kAlphaFloor = 1e-3;  // on top of the conjugacy bound alpha > 1
constexpr double kBetaFloor = 1e-8;

}  // namespace

// out(o, y, x) = b[o] + sum_{i, ky, kx} w[o][i][ky][kx] * in(i, y+ky-p, x+kx-p)
// with zero padding. Loops run over the in-bounds ranges only so padded taps
// contribute nothing.
void conv2d_forward(const ConvLayer& L, const double* in, int h, int w, double* out) {
    const int k = L.k, p = k / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int o = 0; o < L.out_ch; ++o)
        std::fill(out + o * hw, out + (o + 1) * hw, L.b[static_cast<std::size_t>(o)]);
    for (int o = 0; o < L.out_ch; ++o) {
        double* oplane = out + o * hw;
        for (int i = 0; i < L.in_ch; ++i) {
            const double* iplane = in + i * hw;
            for (int ky = 0; ky < k; ++ky) {
                const int dy = ky - p;
                const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                for (int kx = 0; kx < k; ++kx) {
                    const int dx = kx - p;
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    const double wv =
                        L.w[((static_cast<std::size_t>(o) * L.in_ch + i) * k + ky) * k + kx];
                    for (int y = y0; y < y1; ++y) {
                        double* orow = oplane + static_cast<std::size_t>(y) * w;
                        const double* irow = iplane + static_cast<std::size_t>(y + dy) * w + dx;
                        for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                    }
                }
            }
        }
    }
}

void conv2d_backward(const ConvLayer& L, const double* in, const double* d_out, int h, int w,
                     double* d_in, double* d_w, double* d_b) {
    const int k = L.k, p = k / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int o = 0; o < L.out_ch; ++o) {
        const double* dplane = d_out + o * hw;
        double s = 0.0;
        for (std::size_t j = 0; j < hw; ++j) s += dplane[j];
        d_b[o] += s;
        for (int i = 0; i < L.in_ch; ++i) {
            const double* iplane = in + i * hw;
            double* diplane = d_in ? d_in + i * hw : nullptr;
            for (int ky = 0; ky < k; ++ky) {
                const int dy = ky - p;
                const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                for (int kx = 0; kx < k; ++kx) {
                    const int dx = kx - p;
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    const std::size_t wi =
                        ((static_cast<std::size_t>(o) * L.in_ch + i) * k + ky) * k + kx;
                    const double wv = L.w[wi];
                    double acc = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const double* drow = dplane + static_cast<std::size_t>(y) * w;
                        const double* irow = iplane + static_cast<std::size_t>(y + dy) * w + dx;
                        double* dirow =
                            diplane ? diplane + static_cast<std::size_t>(y + dy) * w + dx : nullptr;
                        for (int x = x0; x < x1; ++x) {
                            acc += drow[x] * irow[x];
                            if (dirow) dirow[x] += wv * drow[x];
                        }
                    }
                    d_w[wi] += acc;
                }
            }
        }
    }
}

namespace {

void lrelu(const double* z, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] = z[i] >= 0.0 ? z[i] : kLreluSlope * z[i];
}

void lrelu_backward(const double* z, const double* d_x, double* d_z, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) d_z[i] = d_x[i] * (z[i] >= 0.0 ? 1.0 : kLreluSlope);
}

}  // namespace

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void NetConfig::validate() const {
    if (channels < 4 || channels % 4 != 0)
        throw ValidationError("channels must be a positive multiple of 4");
    if (grdb_blocks < 1) throw ValidationError("grdb_blocks must be >= 1");
    if (grdb_layers < 1) throw ValidationError("grdb_layers must be >= 1");
    if (growth < 1) throw ValidationError("growth must be >= 1");
    if (kernel != 3) throw ValidationError("kernel is fixed to 3");
}

ConvLayer::ConvLayer(std::string n, int in_c, int out_c, int kk)
    : name(std::move(n)), in_ch(in_c), out_ch(out_c), k(kk) {
    w.assign(static_cast<std::size_t>(out_ch) * in_ch * k * k, 0.0);
    b.assign(static_cast<std::size_t>(out_ch), 0.0);
}

Network::Network(const NetConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int C = cfg_.channels, g = cfg_.growth;
    const int L = cfg_.grdb_layers, B = cfg_.grdb_blocks;

    layers_.emplace_back("conv_in", 4, C, 3);
    layers_.emplace_back("conv_a", C, C, 3);
    layers_.emplace_back("conv_b", C, C, 3);
    idx_in_ = 0;
    idx_a_ = 1;
    idx_b_ = 2;
    idx_dense_.resize(B);
    idx_fuse_.resize(B);
    for (int b = 0; b < B; ++b) {
        const std::string base = "grdb" + std::to_string(b);
        for (int l = 0; l < L; ++l) {
            idx_dense_[b].push_back(static_cast<int>(layers_.size()));
            layers_.emplace_back(base + ".dense" + std::to_string(l), C + l * g, g, 3);
        }
        idx_fuse_[b] = static_cast<int>(layers_.size());
        layers_.emplace_back(base + ".fuse", C + L * g, C, 1);
    }
    idx_up_ = static_cast<int>(layers_.size());
    layers_.emplace_back("conv_up", C, C, 3);
    idx_head_ = static_cast<int>(layers_.size());
    layers_.emplace_back("head", C / 4, 12, 3);
}

void Network::init_weights(std::uint64_t seed) {
    Rng rng(mix_seed(seed));
    for (ConvLayer& L : layers_) {
        const double std = std::sqrt(2.0 / (static_cast<double>(L.in_ch) * L.k * L.k));
        for (double& v : L.w) v = rng.normal(0.0, std);
        std::fill(L.b.begin(), L.b.end(), 0.0);
    }
    // The head starts at zero so the fresh network IS the bilinear
    // demosaicker (residual mean head) with base uncertainty outputs; short
    // training runs then only move outputs where gradients ask for it.
    ConvLayer& head = layers_[static_cast<std::size_t>(idx_head_)];
    std::fill(head.w.begin(), head.w.end(), 0.0);
}

std::size_t Network::num_params() const {
    std::size_t n = 0;
    for (const ConvLayer& L : layers_) n += L.num_params();
    return n;
}

std::vector<double> Network::get_params() const {
    std::vector<double> flat;
    flat.reserve(num_params());
    for (const ConvLayer& L : layers_) {
        flat.insert(flat.end(), L.w.begin(), L.w.end());
        flat.insert(flat.end(), L.b.begin(), L.b.end());
    }
    return flat;
}

void Network::set_params(const std::vector<double>& flat) {
    if (flat.size() != num_params())
        throw std::invalid_argument("set_params: size mismatch");
    std::size_t off = 0;
    for (ConvLayer& L : layers_) {
        std::copy(flat.begin() + off, flat.begin() + off + L.w.size(), L.w.begin());
        off += L.w.size();
        std::copy(flat.begin() + off, flat.begin() + off + L.b.size(), L.b.begin());
        off += L.b.size();
    }
}

NigField Network::forward(const RawMosaic& raw) const {
    NetCache cache;
    return forward_cached(raw, &cache);
}

NigField Network::forward_cached(const RawMosaic& raw, NetCache* cache) const {
    if (raw.phase != CfaPhase::RGGB)
        throw ValidationError("network input must be an RGGB mosaic; unify the phase first");
    const int C = cfg_.channels, g = cfg_.growth, L = cfg_.grdb_layers;
    const int h = raw.height, w = raw.width, h2 = h / 2, w2 = w / 2;
    NetCache& c = *cache;
    c.h = h;
    c.w = w;
    c.h2 = h2;
    c.w2 = w2;

    c.t0 = pack4(raw);

    c.z_in = Tensor(C, h2, w2);
    conv2d_forward(layers_[idx_in_], c.t0.data.data(), h2, w2, c.z_in.data.data());
    c.x_in = Tensor(C, h2, w2);
    lrelu(c.z_in.data.data(), c.x_in.data.data(), c.z_in.size());

    c.z_a = Tensor(C, h2, w2);
    conv2d_forward(layers_[idx_a_], c.x_in.data.data(), h2, w2, c.z_a.data.data());
    c.x_a = Tensor(C, h2, w2);
    lrelu(c.z_a.data.data(), c.x_a.data.data(), c.z_a.size());

    c.z_b = Tensor(C, h2, w2);
    conv2d_forward(layers_[idx_b_], c.x_a.data.data(), h2, w2, c.z_b.data.data());
    c.x_b = Tensor(C, h2, w2);
    lrelu(c.z_b.data.data(), c.x_b.data.data(), c.z_b.size());

    const std::size_t hw2 = static_cast<std::size_t>(h2) * w2;
    const Tensor* f = &c.x_b;
    c.blocks.clear();
    c.blocks.resize(idx_fuse_.size());
    for (std::size_t b = 0; b < idx_fuse_.size(); ++b) {
        NetCache::BlockCache& bc = c.blocks[b];
        bc.cat = Tensor(C + L * g, h2, w2);
        std::copy(f->data.begin(), f->data.end(), bc.cat.data.begin());
        for (int l = 0; l < L; ++l) {
            Tensor z(g, h2, w2);
            conv2d_forward(layers_[static_cast<std::size_t>(idx_dense_[b][l])], bc.cat.data.data(),
                         h2, w2, z.data.data());
            lrelu(z.data.data(), bc.cat.plane(C + l * g), z.size());
            bc.z_dense.push_back(std::move(z));
        }
        bc.f_out = Tensor(C, h2, w2);
        conv2d_forward(layers_[static_cast<std::size_t>(idx_fuse_[b])], bc.cat.data.data(), h2, w2,
                     bc.f_out.data.data());
        for (std::size_t j = 0; j < C * hw2; ++j) bc.f_out.data[j] += f->data[j];
        f = &bc.f_out;
    }

    c.z_up = Tensor(C, h2, w2);
    conv2d_forward(layers_[idx_up_], f->data.data(), h2, w2, c.z_up.data.data());
    c.x_up = Tensor(C, h2, w2);
    lrelu(c.z_up.data.data(), c.x_up.data.data(), c.z_up.size());

    c.fu = depth_to_space(c.x_up);

    c.p = Tensor(12, h, w);
    conv2d_forward(layers_[idx_head_], c.fu.data.data(), h, w, c.p.data.data());

    Image dem = bilinear_demosaic(raw);
    NigField out(h, w);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int ch = 0; ch < 3; ++ch) {
        const double* p0 = c.p.plane(ch);
        const double* p1 = c.p.plane(3 + ch);
        const double* p2 = c.p.plane(6 + ch);
        const double* p3 = c.p.plane(9 + ch);
        const double* d = dem.plane(ch);
        double* m = out.mean.plane(ch);
        double* la = out.lambda.plane(ch);
        double* al = out.alpha.plane(ch);
        double* be = out.beta.plane(ch);
        for (std::size_t j = 0; j < hw; ++j) {
            m[j] = d[j] + p0[j];
            la[j] = softplus(p1[j]) + kLambdaFloor;
            al[j] = 1.0 + kAlphaFloor + softplus(p2[j]);
            be[j] = softplus(p3[j]) + kBetaFloor;
        }
    }
    return out;
}

std::vector<double> Network::backward(const NetCache& cache, const NigGrad& d_field) const {
    std::vector<double> grads(num_params(), 0.0);
    backward_accum(cache, d_field, &grads);
    return grads;
}

void Network::backward_accum(const NetCache& cache, const NigGrad& d_field,
                             std::vector<double>* accum) const {
    if (accum->size() != num_params())
        throw std::invalid_argument("backward_accum: gradient size mismatch");
    const int C = cfg_.channels, g = cfg_.growth, L = cfg_.grdb_layers;
    const int h = cache.h, w = cache.w, h2 = cache.h2, w2 = cache.w2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    const std::size_t hw2 = static_cast<std::size_t>(h2) * w2;

    // Flat offsets of each layer's weight block, in get_params() order.
    std::vector<std::size_t> w_off(layers_.size());
    std::vector<std::size_t> b_off(layers_.size());
    std::size_t off = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        w_off[i] = off;
        off += layers_[i].w.size();
        b_off[i] = off;
        off += layers_[i].b.size();
    }
    double* G = accum->data();

    // Head mapping: chain through the softplus floors.
    Tensor d_p(12, h, w);
    for (int ch = 0; ch < 3; ++ch) {
        const double* p1 = cache.p.plane(3 + ch);
        const double* p2 = cache.p.plane(6 + ch);
        const double* p3 = cache.p.plane(9 + ch);
        const double* dm = d_field.d_mean.plane(ch);
        const double* dl = d_field.d_lambda.plane(ch);
        const double* da = d_field.d_alpha.plane(ch);
        const double* db = d_field.d_beta.plane(ch);
        double* o0 = d_p.plane(ch);
        double* o1 = d_p.plane(3 + ch);
        double* o2 = d_p.plane(6 + ch);
        double* o3 = d_p.plane(9 + ch);
        for (std::size_t j = 0; j < hw; ++j) {
            o0[j] = dm[j];
            o1[j] = dl[j] * sigmoid(p1[j]);
            o2[j] = da[j] * sigmoid(p2[j]);
            o3[j] = db[j] * sigmoid(p3[j]);
        }
    }

    Tensor d_fu(C / 4, h, w);
    conv2d_backward(layers_[idx_head_], cache.fu.data.data(), d_p.data.data(), h, w,
                  d_fu.data.data(), G + w_off[idx_head_], G + b_off[idx_head_]);

    Tensor d_xup = space_to_depth(d_fu);
    Tensor d_zup(C, h2, w2);
    lrelu_backward(cache.z_up.data.data(), d_xup.data.data(), d_zup.data.data(), d_zup.size());

    const int B = static_cast<int>(idx_fuse_.size());
    const Tensor& f_last = cache.blocks[static_cast<std::size_t>(B - 1)].f_out;
    Tensor d_f(C, h2, w2);
    conv2d_backward(layers_[idx_up_], f_last.data.data(), d_zup.data.data(), h2, w2,
                  d_f.data.data(), G + w_off[idx_up_], G + b_off[idx_up_]);

    for (int b = B - 1; b >= 0; --b) {
        const NetCache::BlockCache& bc = cache.blocks[static_cast<std::size_t>(b)];
        Tensor d_cat(C + L * g, h2, w2);
        const int fi = idx_fuse_[b];
        conv2d_backward(layers_[static_cast<std::size_t>(fi)], bc.cat.data.data(), d_f.data.data(),
                      h2, w2, d_cat.data.data(), G + w_off[fi], G + b_off[fi]);
        for (int l = L - 1; l >= 0; --l) {
            Tensor d_z(g, h2, w2);
            lrelu_backward(bc.z_dense[static_cast<std::size_t>(l)].data.data(),
                           d_cat.plane(C + l * g), d_z.data.data(), d_z.size());
            const int di = idx_dense_[b][l];
            conv2d_backward(layers_[static_cast<std::size_t>(di)], bc.cat.data.data(),
                          d_z.data.data(), h2, w2, d_cat.data.data(), G + w_off[di],
                          G + b_off[di]);
        }
        // Residual: block-input gradient = skip path + dense-path prefix.
        for (std::size_t j = 0; j < C * hw2; ++j) d_f.data[j] += d_cat.data[j];
    }

    Tensor d_z(C, h2, w2);
    lrelu_backward(cache.z_b.data.data(), d_f.data.data(), d_z.data.data(), d_z.size());
    Tensor d_x(C, h2, w2);
    conv2d_backward(layers_[idx_b_], cache.x_a.data.data(), d_z.data.data(), h2, w2,
                  d_x.data.data(), G + w_off[idx_b_], G + b_off[idx_b_]);

    lrelu_backward(cache.z_a.data.data(), d_x.data.data(), d_z.data.data(), d_z.size());
    std::fill(d_x.data.begin(), d_x.data.end(), 0.0);
    conv2d_backward(layers_[idx_a_], cache.x_in.data.data(), d_z.data.data(), h2, w2,
                  d_x.data.data(), G + w_off[idx_a_], G + b_off[idx_a_]);

    lrelu_backward(cache.z_in.data.data(), d_x.data.data(), d_z.data.data(), d_z.size());
    conv2d_backward(layers_[idx_in_], cache.t0.data.data(), d_z.data.data(), h2, w2, nullptr,
                  G + w_off[idx_in_], G + b_off[idx_in_]);
}

}  // namespace wjdd

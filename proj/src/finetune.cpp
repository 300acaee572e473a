// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0

#include "wjdd/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wjdd/bayer.hpp"
#include "wjdd/common.hpp"
#include "wjdd/prior.hpp"
#include "wjdd/rng.hpp"

namespace wjdd {

void FinetuneConfig::validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw ValidationError("finetune lambda must be positive and finite");
    if (patch < 3 || patch % 2 == 0) throw ValidationError("finetune patch must be odd and >= 3");
    if (lr < 0.0 || !std::isfinite(lr)) throw ValidationError("finetune lr must be >= 0");
    if (iterations < 0) throw ValidationError("finetune iterations must be >= 0");
    if (window < 3 || window % 2 == 0)
        throw ValidationError("finetune window must be odd and >= 3");
}

NeighborPrior neighbor_prior(const Image& x_tilde, int patch, std::uint64_t seed) {
    if (patch < 3 || patch % 2 == 0)
        throw std::invalid_argument("neighbor_prior: patch must be odd and >= 3");
    if (patch > std::min(x_tilde.height, x_tilde.width))
        throw std::invalid_argument("neighbor_prior: patch exceeds image size");

    const int r = patch / 2;
    const int center = (patch * patch - 1) / 2;  // linear index of (0,0)
    Rng rng(mix_seed(seed));
    NeighborPrior out;
    out.prior = Image(x_tilde.height, x_tilde.width);
    out.dy.resize(x_tilde.size());
    out.dx.resize(x_tilde.size());
    std::size_t j = 0;
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < x_tilde.height; ++y) {
            for (int x = 0; x < x_tilde.width; ++x, ++j) {
                int t = rng.uniform_int(patch * patch - 1);
                if (t >= center) ++t;  // skip the identity offset
                const int dy = t / patch - r;
                const int dx = t % patch - r;
                out.dy[j] = dy;
                out.dx[j] = dx;
                const int yy = std::clamp(y + dy, 0, x_tilde.height - 1);
                const int xx = std::clamp(x + dx, 0, x_tilde.width - 1);
                out.prior.data[j] = x_tilde.at(c, yy, xx);
            }
        }
    }
    return out;
}

Image confidence_mask(const Image& x_tilde, const Image& prior_image, const Image& sigma) {
    if (!x_tilde.same_shape(prior_image) || !x_tilde.same_shape(sigma))
        throw std::invalid_argument("confidence_mask: shape mismatch");
    for (double s : sigma.data)
        if (!(s >= 0.0)) throw std::invalid_argument("confidence_mask: sigma must be >= 0");

    Image mask(x_tilde.height, x_tilde.width);
    for (std::size_t i = 0; i < mask.data.size(); ++i)
        mask.data[i] =
            std::abs(prior_image.data[i] - x_tilde.data[i]) < 2.0 * sigma.data[i] ? 1.0 : 0.0;
    return mask;
}

namespace {

NigField finetune_prior(const Image& x_tilde, const Image& prior_image,
                        const FinetuneConfig& cfg) {
    PriorConfig pc;
    pc.lambda = cfg.lambda;
    pc.window = cfg.window;
    return make_prior(x_tilde, prior_image, pc);
}

void check_mask(const Image& q_mean, const Image& mask) {
    if (!q_mean.same_shape(mask)) throw std::invalid_argument("masked elbo: shape mismatch");
    for (double m : mask.data)
        if (m != 0.0) return;
    throw ValidationError("masked elbo: every pixel is masked");
}

// Zeroes gradient entries wherever the mask is 0.
void apply_mask(NigGrad& g, const Image& mask) {
    for (std::size_t i = 0; i < mask.data.size(); ++i) {
        if (mask.data[i] != 0.0) continue;
        g.d_mean.data[i] = 0.0;
        g.d_lambda.data[i] = 0.0;
        g.d_alpha.data[i] = 0.0;
        g.d_beta.data[i] = 0.0;
    }
}

}  // namespace

double masked_elbo(const NigField& q, const Image& x_tilde, const Image& prior_image,
                   const Image& mask, const FinetuneConfig& cfg, LossVariant variant) {
    cfg.validate();
    check_mask(q.mean, mask);
    const NigField prior = finetune_prior(x_tilde, prior_image, cfg);
    const ElboBreakdown bd = elbo_loss(q, prior, x_tilde, variant);
    double loss = 0.0;
    for (std::size_t i = 0; i < mask.data.size(); ++i)
        if (mask.data[i] != 0.0)
            loss += bd.per_pixel_kl.data[i] - bd.per_pixel_expectation.data[i];
    return loss;
}

NigGrad masked_elbo_grad(const NigField& q, const Image& x_tilde, const Image& prior_image,
                         const Image& mask, const FinetuneConfig& cfg, LossVariant variant) {
    cfg.validate();
    check_mask(q.mean, mask);
    const NigField prior = finetune_prior(x_tilde, prior_image, cfg);
    NigGrad g = neg_elbo_grad(q, prior, x_tilde, variant);
    apply_mask(g, mask);
    return g;
}

FinetuneResult finetune(const Network& pretrained, const RawMosaic& raw,
                        const FinetuneConfig& cfg, const Image* clean) {
    cfg.validate();
    Network net = pretrained;
    const Image x_tilde = bilinear_demosaic(raw);

    std::vector<double> params = net.get_params();
    AdamState adam;
    std::vector<CurvePoint> curve;
    const auto eval_psnr = [&]() {
        return psnr(posterior_estimates(net.forward(raw)).first, *clean);
    };
    if (clean) curve.push_back({0, eval_psnr()});

    for (long it = 1; it <= cfg.iterations; ++it) {
        NetCache cache;
        const NigField q = net.forward_cached(raw, &cache);

        Image sigma(x_tilde.height, x_tilde.width);
        for (std::size_t i = 0; i < sigma.data.size(); ++i)
            sigma.data[i] = std::sqrt(q.beta.data[i] / (q.alpha.data[i] - 1.0));

        const NeighborPrior np =
            neighbor_prior(x_tilde, cfg.patch, mix_seed(cfg.seed, static_cast<std::uint64_t>(it)));
        const Image mask = confidence_mask(x_tilde, np.prior, sigma);
        check_mask(q.mean, mask);

        const NigField prior = finetune_prior(x_tilde, np.prior, cfg);
        NigGrad g = neg_elbo_grad(q, prior, x_tilde, cfg.loss_variant);
        apply_mask(g, mask);

        const std::vector<double> grads = net.backward(cache, g);
        adam_step(params, grads, adam, cfg.lr);
        net.set_params(params);
        if (clean) curve.push_back({it, eval_psnr()});
    }

    Image restored = posterior_estimates(net.forward(raw)).first;
    return {std::move(net), std::move(restored), std::move(curve)};
}

}  // namespace wjdd

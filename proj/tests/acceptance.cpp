// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance gate. Runs the release criteria end to end and prints one
// PASS/FAIL line per criterion with the measured numbers; exits nonzero if
// any criterion fails. Criteria can be selected by number on the command
// line (e.g. `acceptance 1 2 11`); unselected ones are reported as SKIP.
//
// Tolerances are pinned as constants below. Do not loosen them to make a
// run green: a red line here means the implementation, not the gate, needs
// attention.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "wjdd/bayer.hpp"
#include "wjdd/checkpoint.hpp"
#include "wjdd/common.hpp"
#include "wjdd/degrade.hpp"
#include "wjdd/finetune.hpp"
#include "wjdd/image.hpp"
#include "wjdd/net.hpp"
#include "wjdd/nig.hpp"
#include "wjdd/prior.hpp"
#include "wjdd/rng.hpp"
#include "wjdd/train.hpp"

using namespace wjdd;
namespace fs = std::filesystem;

namespace {

// --------------------------------------------------------------------------
// Pinned tolerances.

constexpr double kOracleSigmaTol = 3.0;     // closed form vs MC, in stderr units
constexpr long kOracleSamples = 1000000;    // MC draws per configuration
constexpr int kOracleConfigs = 100;
constexpr double kKlSelfTol = 1e-9;         // |kl(q, q)| bound
constexpr double kKlFloor = -1e-9;          // nonnegativity slack
constexpr int kKlPairs = 10000;
constexpr double kLiteralGapNats = 0.375;   // per-site variant gap at (1, 3, 0.5)
constexpr double kFdRelTol = 1e-3;          // network gradient vs central differences
constexpr double kCosineTol = 0.999;        // -ELBO vs MSE gradient alignment
constexpr double kHugeLambda = 1e9;
constexpr double kVarRelTol = 0.02;         // two-stage variance, relative
constexpr double kAlphaWindow19 = 180.5;    // 19*19 / 2, exact
constexpr double kPriorVarRelTol = 0.10;    // mean beta/(alpha-1) vs true s^2
constexpr double kTrainGainDb = 3.0;        // trained net over bilinear baseline
constexpr double kEnsembleTieTolDb = 0.02;  // allowed ensemble deficit
constexpr double kOverfitDropDb = 0.3;      // MSE curve peak over final value
constexpr double kFinetuneGainDb = 0.05;    // mean gain within 50 iterations
constexpr double kFinetuneDeclineDb = 0.05; // drop from peak by iteration 2000
constexpr long kFinetuneLongRun = 2000;
constexpr double kEdgeExcludedMin = 0.90;   // mask exclusion near a step edge
constexpr double kFlatExcludedMax = 0.05;   // mask exclusion on flat regions

const char* kWorkDir = "acceptance_work";

// --------------------------------------------------------------------------
// Random parameter fields. The distributions are frozen copies of the ones
// the unit suite validates the Monte Carlo oracles against.

NigField random_kl_field(Rng& rng) {
    NigField f(2, 2);
    for (std::size_t i = 0; i < f.mean.data.size(); ++i) {
        f.mean.data[i] = rng.uniform();
        f.lambda.data[i] = std::pow(10.0, rng.uniform(std::log10(0.5), std::log10(2000.0)));
        f.alpha.data[i] = 1.0 + std::pow(10.0, rng.uniform(std::log10(0.5), std::log10(200.0)));
        f.beta.data[i] = std::pow(10.0, rng.uniform(-4.0, 0.0));
    }
    return f;
}

// Moderate perturbation keeping the divergence O(1..100), where the MC
// comparison is sharpest.
NigField perturbed_field(const NigField& q, Rng& rng) {
    NigField p = q;
    for (std::size_t i = 0; i < p.mean.data.size(); ++i) {
        const double noise_scale = std::sqrt(q.beta.data[i] / (q.alpha.data[i] - 1.0));
        p.mean.data[i] = q.mean.data[i] + rng.uniform(-1.0, 1.0) * noise_scale;
        p.lambda.data[i] = q.lambda.data[i] * std::pow(10.0, rng.uniform(-0.5, 0.5));
        p.alpha.data[i] = 1.0 + (q.alpha.data[i] - 1.0) * std::pow(10.0, rng.uniform(-0.3, 0.3));
        p.beta.data[i] = q.beta.data[i] * std::pow(10.0, rng.uniform(-0.5, 0.5));
    }
    return p;
}

// alpha >= 1.5 keeps the sampled log-likelihood variance finite.
NigField random_expectation_field(Rng& rng, Image* x_tilde) {
    NigField q(2, 2);
    *x_tilde = Image(2, 2);
    for (std::size_t i = 0; i < q.mean.data.size(); ++i) {
        q.mean.data[i] = rng.uniform();
        q.lambda.data[i] = std::pow(10.0, rng.uniform(std::log10(0.5), 2.0));
        q.alpha.data[i] = 1.5 + std::pow(10.0, rng.uniform(-1.0, 1.7));
        q.beta.data[i] = std::pow(10.0, rng.uniform(-3.0, 0.0));
        x_tilde->data[i] =
            q.mean.data[i] +
            rng.uniform(-2.0, 2.0) * std::sqrt(q.beta.data[i] / (q.alpha.data[i] - 1.0));
    }
    return q;
}

NigField constant_field(int h, int w, double mean, double lambda, double alpha, double beta) {
    NigField f(h, w);
    f.mean = Image(h, w, mean);
    f.lambda = Image(h, w, lambda);
    f.alpha = Image(h, w, alpha);
    f.beta = Image(h, w, beta);
    return f;
}

RawMosaic random_raw(int h, int w, std::uint64_t seed) {
    RawMosaic raw(h, w, CfaPhase::RGGB);
    Rng rng(seed);
    for (double& v : raw.data) v = rng.uniform();
    return raw;
}

Image random_image(int h, int w, std::uint64_t seed) {
    Image img(h, w);
    Rng rng(seed);
    for (double& v : img.data) v = rng.uniform();
    return img;
}

NigField random_prior_field(int h, int w, std::uint64_t seed) {
    NigField p(h, w);
    Rng rng(seed);
    for (double& v : p.mean.data) v = rng.uniform();
    for (double& v : p.lambda.data) v = std::pow(10.0, rng.uniform(-1.0, 2.0));
    for (double& v : p.alpha.data) v = 1.2 + 3.0 * rng.uniform();
    for (double& v : p.beta.data) v = std::pow(10.0, rng.uniform(-3.0, 0.0));
    return p;
}

double sum(const Image& img) {
    double s = 0.0;
    for (double v : img.data) s += v;
    return s;
}

std::string format(const char* fmt, ...) {
    char buf[512];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    return std::string(buf);
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

// --------------------------------------------------------------------------
// 1. Closed-form KL against the Monte Carlo oracle.

Outcome criterion_kl_oracle() {
    Rng rng(101);
    double worst_sigma = 0.0;
    for (int c = 0; c < kOracleConfigs; ++c) {
        const NigField q = random_kl_field(rng);
        const NigField p = perturbed_field(q, rng);
        const double closed = sum(kl_nig(q, p));
        const auto [est, se] = mc_kl_oracle(q, p, kOracleSamples, mix_seed(9100, c));
        worst_sigma = std::max(worst_sigma, std::abs(closed - est) / se);
    }

    Rng rng_self(102);
    double worst_self = 0.0;
    for (int c = 0; c < 100; ++c) {
        const NigField q = random_kl_field(rng_self);
        for (double v : kl_nig(q, q).data) worst_self = std::max(worst_self, std::abs(v));
    }

    // Nonnegativity, stressed both near zero (perturbed pairs) and far apart
    // (independent pairs).
    Rng rng_pairs(103);
    double min_kl = 0.0;
    for (int c = 0; c < kKlPairs; ++c) {
        const NigField q = random_kl_field(rng_pairs);
        const NigField p =
            (c % 2 == 0) ? perturbed_field(q, rng_pairs) : random_kl_field(rng_pairs);
        for (double v : kl_nig(q, p).data) min_kl = std::min(min_kl, v);
    }

    Outcome o;
    o.pass = worst_sigma <= kOracleSigmaTol && worst_self <= kKlSelfTol && min_kl >= kKlFloor;
    o.detail = format("max |closed-MC| %.2f sigma over %d cfgs; |kl(q,q)| max %.1e; min kl %.1e",
                      worst_sigma, kOracleConfigs, worst_self, min_kl);
    return o;
}

// --------------------------------------------------------------------------
// 2. Closed-form expectation term against the Monte Carlo oracle, plus the
// pinned deviation of the paper_literal variant.

Outcome criterion_expectation_oracle() {
    Rng rng(202);
    double worst_sigma = 0.0;
    for (int c = 0; c < kOracleConfigs; ++c) {
        Image x;
        const NigField q = random_expectation_field(rng, &x);
        const double closed = sum(expectation_term(q, x, LossVariant::derivation_consistent));
        const auto [est, se] = mc_expectation_oracle(q, x, kOracleSamples, mix_seed(9200, c));
        worst_sigma = std::max(worst_sigma, std::abs(est - closed) / se);
    }

    // At (lambda, alpha, beta) = (1, 3, 0.5) with the observation equal to
    // the posterior mean, the variants differ by 1/(2*1) - 0.5/(2*1*2) =
    // 0.375 nats per site, and sampling sides with derivation_consistent.
    const NigField q = constant_field(2, 2, 0.5, 1.0, 3.0, 0.5);
    const Image x = q.mean;
    const double n_sites = static_cast<double>(q.mean.data.size());
    const double lit = sum(expectation_term(q, x, LossVariant::paper_literal));
    const double con = sum(expectation_term(q, x, LossVariant::derivation_consistent));
    const double closed_gap = (lit - con) / n_sites;
    const auto [est, se] = mc_expectation_oracle(q, x, 4 * kOracleSamples, 31337);
    const double mc_gap = (lit - est) / n_sites;
    const double gap_tol = kOracleSigmaTol * se / n_sites;

    Outcome o;
    o.pass = worst_sigma <= kOracleSigmaTol && std::abs(closed_gap - kLiteralGapNats) <= 1e-12 &&
             std::abs(mc_gap - kLiteralGapNats) <= gap_tol;
    o.detail = format("max %.2f sigma over %d cfgs; literal gap %.6f closed / %.6f MC "
                      "(want %.3f +- %.6f)",
                      worst_sigma, kOracleConfigs, closed_gap, mc_gap, kLiteralGapNats, gap_tol);
    return o;
}

// --------------------------------------------------------------------------
// 3. Reverse-mode gradients through the full architecture against central
// finite differences, for both loss variants and plain MSE.

Outcome criterion_gradients() {
    // Every layer kind is present; the width is reduced so the sweep over
    // all parameters stays inside the time budget.
    NetConfig nc;
    nc.channels = 8;
    nc.grdb_blocks = 2;
    nc.grdb_layers = 2;
    nc.growth = 8;
    Network net(nc);
    net.init_weights(31);
    {
        // init_weights zeroes the head; give it small random weights so the
        // sweep exercises gradient flow through every layer.
        ConvLayer& head = net.layers().back();
        Rng rng(3101);
        for (double& v : head.w) v = rng.normal(0.0, 0.05);
    }

    const RawMosaic raw = random_raw(16, 16, 311);
    const Image x_tilde = random_image(16, 16, 312);
    const NigField prior = random_prior_field(16, 16, 313);
    const std::vector<double> params = net.get_params();

    double max_rel = 0.0;
    auto sweep = [&](const std::vector<double>& analytic,
                     const std::function<double(const std::vector<double>&)>& loss) {
        std::vector<double> p = params;
        for (std::size_t i = 0; i < p.size(); ++i) {
            // The loss sums ~770 sites, so subtractive cancellation dominates
            // below h ~ 1e-5; 1e-4 sits near the central-difference optimum.
            const double h = 1e-4 * std::max(1.0, std::abs(params[i]));
            p[i] = params[i] + h;
            const double lp = loss(p);
            p[i] = params[i] - h;
            const double lm = loss(p);
            p[i] = params[i];
            const double fd = (lp - lm) / (2.0 * h);
            const double denom = std::max({std::abs(analytic[i]), std::abs(fd), 1e-4});
            max_rel = std::max(max_rel, std::abs(analytic[i] - fd) / denom);
        }
    };

    for (LossVariant variant :
         {LossVariant::paper_literal, LossVariant::derivation_consistent}) {
        net.set_params(params);
        NetCache cache;
        const NigField q = net.forward_cached(raw, &cache);
        const NigGrad g = neg_elbo_grad(q, prior, x_tilde, variant);
        sweep(net.backward(cache, g), [&](const std::vector<double>& p) {
            net.set_params(p);
            return -elbo_loss(net.forward(raw), prior, x_tilde, variant).elbo;
        });
    }

    net.set_params(params);
    NetCache cache;
    const NigField q = net.forward_cached(raw, &cache);
    NigGrad g(16, 16);
    const double inv_n = 1.0 / static_cast<double>(q.mean.size());
    for (std::size_t j = 0; j < q.mean.data.size(); ++j)
        g.d_mean.data[j] = 2.0 * (q.mean.data[j] - x_tilde.data[j]) * inv_n;
    sweep(net.backward(cache, g), [&](const std::vector<double>& p) {
        net.set_params(p);
        return mse_loss(net.forward(raw).mean, x_tilde);
    });

    Outcome o;
    o.pass = max_rel < kFdRelTol;
    o.detail = format("max rel err %.2e over %zu params x 3 objectives (16x16 input)", max_rel,
                      params.size());
    return o;
}

// --------------------------------------------------------------------------
// 4. With an overwhelming prior precision the -ELBO mean-gradient must point
// along the MSE gradient toward the prior mean.

Outcome criterion_mse_degeneration() {
    Rng rng(404);
    double min_cos = 1.0;
    for (int b = 0; b < 20; ++b) {
        // alpha and beta are constant per batch: the degeneration statement
        // concerns the direction of the mean gradient, which carries a
        // per-site alpha/beta scale.
        const double alpha = 1.5 + 3.0 * rng.uniform();
        const double beta = std::pow(10.0, rng.uniform(-2.0, 0.0));
        NigField q(4, 4);
        NigField prior(4, 4);
        Image x(4, 4);
        for (std::size_t i = 0; i < q.mean.data.size(); ++i) {
            q.mean.data[i] = rng.uniform();
            q.lambda.data[i] = std::pow(10.0, rng.uniform(-1.0, 1.0));
            q.alpha.data[i] = alpha;
            q.beta.data[i] = beta;
            prior.mean.data[i] = rng.uniform();
            prior.lambda.data[i] = kHugeLambda;
            prior.alpha.data[i] = 1.2 + 3.0 * rng.uniform();
            prior.beta.data[i] = std::pow(10.0, rng.uniform(-3.0, 0.0));
            x.data[i] = rng.uniform();
        }
        for (LossVariant variant :
             {LossVariant::paper_literal, LossVariant::derivation_consistent}) {
            const Image g = neg_elbo_grad(q, prior, x, variant).d_mean;
            double dot = 0.0, na = 0.0, nb = 0.0;
            for (std::size_t i = 0; i < g.data.size(); ++i) {
                const double m = 2.0 * (q.mean.data[i] - prior.mean.data[i]);
                dot += g.data[i] * m;
                na += g.data[i] * g.data[i];
                nb += m * m;
            }
            min_cos = std::min(min_cos, dot / std::sqrt(na * nb));
        }
    }

    Outcome o;
    o.pass = min_cos > kCosineTol;
    o.detail = format("min cosine %.6f over 20 batches x 2 variants at lambda %.0e", min_cos,
                      kHugeLambda);
    return o;
}

// --------------------------------------------------------------------------
// 5. Two-stage degradation moments.

Outcome criterion_two_stage_moments() {
    struct Cfg {
        double lambda, alpha, beta;
    };
    const Cfg cfgs[] = {{1.0, 2.5, 0.03}, {4.0, 3.0, 0.08}, {2000.0, 180.5, 0.2760}};
    const double mean_y = 0.5;

    double worst_var_rel = 0.0, worst_mean_sigma = 0.0;
    int c = 0;
    for (const Cfg& cfg : cfgs) {
        const NigField prior = constant_field(100, 100, mean_y, cfg.lambda, cfg.alpha, cfg.beta);
        const double theory = (1.0 + 1.0 / cfg.lambda) * cfg.beta / (cfg.alpha - 1.0);
        double s1 = 0.0, s2 = 0.0;
        long n = 0;
        for (int draw = 0; draw < 40; ++draw) {
            const Image x = degrade_two_stage(prior, mix_seed(905, c, draw));
            for (double v : x.data) {
                const double d = v - mean_y;
                s1 += d;
                s2 += d * d;
                ++n;
            }
        }
        const double mean = s1 / static_cast<double>(n);
        const double var = s2 / static_cast<double>(n) - mean * mean;
        worst_var_rel = std::max(worst_var_rel, std::abs(var / theory - 1.0));
        worst_mean_sigma =
            std::max(worst_mean_sigma, std::abs(mean) / std::sqrt(var / static_cast<double>(n)));
        ++c;
    }

    Outcome o;
    o.pass = worst_var_rel <= kVarRelTol && worst_mean_sigma <= kOracleSigmaTol;
    o.detail = format("var within %.2f%% of (1+1/L)B/(A-1); mean within %.2f stderr "
                      "(1.2e6 draws x 3 cfgs)",
                      100.0 * worst_var_rel, worst_mean_sigma);
    return o;
}

// --------------------------------------------------------------------------
// 6. Prior construction: exact alpha for window 19 and calibrated variance
// on iid Gaussian residuals.

Outcome criterion_prior_construction() {
    const double s = 10.0 / 255.0;
    const Image flat(256, 256, 0.5);
    NoiseSpec ns;
    ns.kind = NoiseKind::gaussian_iid;
    ns.sigma = s;
    ns.seed = 601;
    const Image noisy = add_noise(flat, ns);

    PriorConfig pc;  // window 19, lambda 2000
    const NigField prior = make_prior(noisy, flat, pc);

    bool alpha_exact = true;
    for (double v : prior.alpha.data) alpha_exact = alpha_exact && (v == kAlphaWindow19);

    double mean_var = 0.0;
    for (std::size_t i = 0; i < prior.beta.data.size(); ++i)
        mean_var += prior.beta.data[i] / (prior.alpha.data[i] - 1.0);
    mean_var /= static_cast<double>(prior.beta.data.size());
    const double ratio = mean_var / (s * s);

    Outcome o;
    o.pass = alpha_exact && std::abs(ratio - 1.0) <= kPriorVarRelTol;
    o.detail = format("alpha == %.1f %s; mean beta/(alpha-1) = %.3f * s^2 (flat 256x256)",
                      kAlphaWindow19, alpha_exact ? "everywhere" : "VIOLATED", ratio);
    return o;
}

// --------------------------------------------------------------------------
// 7. Desk-scale training against the bilinear baseline.

struct DeskSetup {
    NetConfig nc;
    TrainConfig tc;
    std::vector<Image> train_imgs, val_imgs;

    DeskSetup() {
        tc.prior.window = 9;  // keeps the per-step prior build affordable
        tc.eval_every = 250;
        tc.max_steps = 5000;
        tc.seed = 7;
        train_imgs = procedural_dataset(200, 64, 64, 71001);
        val_imgs = procedural_dataset(20, 64, 64, 71002);
    }

    std::string ckpt() const { return std::string(kWorkDir) + "/desk.wjdd"; }
    std::string log() const { return std::string(kWorkDir) + "/desk_log.jsonl"; }

    void ensure_trained() const {
        if (fs::exists(ckpt())) return;
        fs::create_directories(kWorkDir);
        train(train_imgs, val_imgs, nc, tc, ckpt(), log());
    }
};

Outcome criterion_desk_training() {
    DeskSetup desk;
    desk.ensure_trained();
    const LoadedCheckpoint lc = load_checkpoint(desk.ckpt());

    // Fresh held-out corruptions: images and noise seeds disjoint from both
    // the training stream and the model-selection set.
    const std::vector<Image> test_imgs = procedural_dataset(20, 64, 64, 71003);
    TrainConfig eval_cfg = desk.tc;
    eval_cfg.seed = 71;
    const std::vector<ValPair> pairs = make_val_pairs(test_imgs, eval_cfg);

    const MetricReport base = evaluate_baseline(pairs);
    const MetricReport single = evaluate_net(lc.net, pairs);
    const MetricReport ens = evaluate_ensemble(lc.net, pairs);

    Outcome o;
    o.pass = (single.psnr - base.psnr >= kTrainGainDb) &&
             (ens.psnr >= single.psnr - kEnsembleTieTolDb);
    o.detail = format("baseline %.2f dB, net %.2f dB (+%.2f), ensemble %.2f dB (%+.3f)",
                      base.psnr, single.psnr, single.psnr - base.psnr, ens.psnr,
                      ens.psnr - single.psnr);
    return o;
}

// --------------------------------------------------------------------------
// 8. Single-image overfit: the MSE training curve peaks above its final
// value, and the uncertainty-weighted objective peaks at least as high.

Outcome criterion_overfit_curves() {
    // Strong noise and a small target: the early curve fits the cartoon's
    // structure (peak above the observation's own PSNR) and the tail
    // memorizes noise (decline). Milder noise shrinks the gap between the
    // denoised peak and the memorized floor below the pinned 0.3 dB.
    const Image clean = cartoon_test_image(32, 32);
    NoiseSpec ns;
    ns.kind = NoiseKind::gaussian_iid;
    ns.sigma = 100.0 / 255.0;
    ns.seed = 8001;

    NetConfig nc;
    nc.channels = 24;
    nc.grdb_blocks = 1;
    nc.grdb_layers = 2;
    nc.growth = 24;
    OverfitConfig oc;
    oc.lr = 1e-3;
    oc.seed = 80;
    const long steps = 2000, every = 25;

    const std::vector<CurvePoint> mse =
        single_image_overfit(clean, ns, OverfitLoss::mse, steps, every, nc, oc);
    const std::vector<CurvePoint> elbo =
        single_image_overfit(clean, ns, OverfitLoss::elbo, steps, every, nc, oc);

    auto peak = [](const std::vector<CurvePoint>& c) {
        double p = c.front().psnr;
        for (const CurvePoint& pt : c) p = std::max(p, pt.psnr);
        return p;
    };
    const double peak_mse = peak(mse), final_mse = mse.back().psnr;
    const double peak_elbo = peak(elbo);

    Outcome o;
    o.pass = (peak_mse - final_mse >= kOverfitDropDb) && (peak_elbo >= peak_mse);
    o.detail = format("mse peak %.2f final %.2f (drop %.2f dB); elbo peak %.2f (%+.2f vs mse)",
                      peak_mse, final_mse, peak_mse - final_mse, peak_elbo, peak_elbo - peak_mse);
    return o;
}

// --------------------------------------------------------------------------
// 9. Fine-tuning on out-of-distribution uniform noise: early gain, late
// decline.

Outcome criterion_finetune_adaptation() {
    DeskSetup desk;
    desk.ensure_trained();
    const LoadedCheckpoint lc = load_checkpoint(desk.ckpt());

    const std::vector<Image> toys = procedural_dataset(10, 64, 64, 91001);
    NoiseSpec ns;
    ns.kind = NoiseKind::uniform;
    ns.range = 15.0 / 255.0;

    FinetuneConfig fc;
    fc.iterations = 50;

    std::vector<double> mean_curve(static_cast<std::size_t>(fc.iterations) + 1, 0.0);
    for (int i = 0; i < static_cast<int>(toys.size()); ++i) {
        ns.seed = mix_seed(9100, i);
        const RawMosaic raw = mosaic(add_noise(toys[i], ns), CfaPhase::RGGB);
        FinetuneConfig cfg = fc;
        cfg.seed = mix_seed(910, i);
        const FinetuneResult res = finetune(lc.net, raw, cfg, &toys[i]);
        for (std::size_t k = 0; k < mean_curve.size(); ++k)
            mean_curve[k] += res.curve[k].psnr / static_cast<double>(toys.size());
    }
    double best_gain = 0.0;
    for (double v : mean_curve) best_gain = std::max(best_gain, v - mean_curve.front());

    // Long run on one input: the curve must rise to a peak before iteration
    // 2000 and measurably decline from it.
    ns.seed = mix_seed(9100, 0);
    const RawMosaic raw0 = mosaic(add_noise(toys[0], ns), CfaPhase::RGGB);
    FinetuneConfig long_cfg = fc;
    long_cfg.iterations = kFinetuneLongRun;
    long_cfg.seed = mix_seed(910, 0);
    const FinetuneResult long_res = finetune(lc.net, raw0, long_cfg, &toys[0]);
    double peak = long_res.curve.front().psnr;
    long peak_iter = 0;
    for (const CurvePoint& pt : long_res.curve)
        if (pt.psnr > peak) {
            peak = pt.psnr;
            peak_iter = pt.step;
        }
    const double final_psnr = long_res.curve.back().psnr;

    Outcome o;
    o.pass = best_gain >= kFinetuneGainDb && peak_iter < kFinetuneLongRun &&
             (peak - final_psnr >= kFinetuneDeclineDb);
    o.detail = format("mean gain %+.3f dB within 50 iters (10 images); long run peak at "
                      "%ld, final %+.3f dB vs peak",
                      best_gain, peak_iter, final_psnr - peak);
    return o;
}

// --------------------------------------------------------------------------
// 10. Confidence mask behavior on a known step edge.

Outcome criterion_mask_step_edge() {
    // Two flat plateaus meeting between columns 31 and 32. The neighbor
    // prior crosses the edge with probability 3/8 per draw from the columns
    // adjacent to it; over 8 resampled iterations a near-edge site escapes
    // exclusion with probability (5/8)^8 ~ 2.3%. Flat sites always resample
    // their own plateau value, so 2*sigma keeps them all.
    const int h = 128, w = 64, edge = 32, draws = 8;
    Image x(h, w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) x.at(c, y, xx) = xx < edge ? 0.2 : 0.7;
    const Image sigma(h, w, 0.05);

    std::vector<char> excluded(x.data.size(), 0);
    for (int k = 0; k < draws; ++k) {
        const NeighborPrior np = neighbor_prior(x, 3, mix_seed(1010, k));
        const Image mask = confidence_mask(x, np.prior, sigma);
        for (std::size_t i = 0; i < mask.data.size(); ++i)
            if (mask.data[i] == 0.0) excluded[i] = 1;
    }

    long edge_total = 0, edge_excluded = 0, flat_total = 0, flat_excluded = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                const std::size_t i =
                    (static_cast<std::size_t>(c) * h + y) * w + static_cast<std::size_t>(xx);
                if (xx == edge - 1 || xx == edge) {
                    ++edge_total;
                    edge_excluded += excluded[i];
                } else {
                    ++flat_total;
                    flat_excluded += excluded[i];
                }
            }
    const double edge_frac = static_cast<double>(edge_excluded) / edge_total;
    const double flat_frac = static_cast<double>(flat_excluded) / flat_total;

    Outcome o;
    o.pass = edge_frac >= kEdgeExcludedMin && flat_frac <= kFlatExcludedMax;
    o.detail = format("near-edge excluded %.1f%% (need >= %.0f%%), flat %.2f%% (need <= %.0f%%)",
                      100.0 * edge_frac, 100.0 * kEdgeExcludedMin, 100.0 * flat_frac,
                      100.0 * kFlatExcludedMax);
    return o;
}

// --------------------------------------------------------------------------
// 11. Pipeline invariants.

Outcome criterion_pipeline_invariants() {
    const RawMosaic raw = random_raw(32, 48, 1101);
    std::vector<std::string> violations;

    // Space-to-depth round trip, bit exact.
    const RawMosaic packed_back = unpack4(pack4(raw), raw.phase);
    if (packed_back.data != raw.data) violations.push_back("pack4/unpack4");

    // Remosaicking the interpolation reproduces the raw samples bit exactly.
    if (mosaic(bilinear_demosaic(raw), CfaPhase::RGGB).data != raw.data)
        violations.push_back("mosaic(demosaic)");

    // Each dihedral version keeps the canonical phase: values tagged by CFA
    // color must land on sites of the same color.
    RawMosaic coded(32, 48, CfaPhase::RGGB);
    for (int y = 0; y < coded.height; ++y)
        for (int xx = 0; xx < coded.width; ++xx)
            coded.at(y, xx) = 0.25 * (1 + bayer_channel_at(CfaPhase::RGGB, y, xx));
    for (int t = 0; t < 8; ++t) {
        const RawMosaic tr = bayer_transform(coded, DihedralTransform{t});
        for (int y = 0; y < tr.height; ++y)
            for (int xx = 0; xx < tr.width; ++xx)
                if (tr.at(y, xx) != 0.25 * (1 + bayer_channel_at(CfaPhase::RGGB, y, xx))) {
                    violations.push_back(format("phase under transform %d", t));
                    y = tr.height;
                    break;
                }
    }

    // Inverse transform restores the interior exactly. The one-pixel frame
    // is excluded: phase unification costs one line whose original position
    // depends on the transform, and it comes back edge-replicated.
    for (int t = 0; t < 8; ++t) {
        const RawMosaic back =
            inverse_bayer_transform(bayer_transform(raw, DihedralTransform{t}),
                                    DihedralTransform{t});
        bool ok = back.height == raw.height && back.width == raw.width;
        for (int y = 1; ok && y < raw.height - 1; ++y)
            for (int xx = 1; xx < raw.width - 1; ++xx)
                if (back.at(y, xx) != raw.at(y, xx)) {
                    ok = false;
                    break;
                }
        if (!ok) violations.push_back(format("inverse of transform %d", t));
    }

    // Checkpoint round trip: loading reproduces the stored single-precision
    // weights exactly, and re-saving reproduces the file byte for byte.
    fs::create_directories(kWorkDir);
    NetConfig nc;
    nc.channels = 8;
    nc.grdb_blocks = 1;
    nc.grdb_layers = 1;
    nc.growth = 8;
    Network net(nc);
    net.init_weights(11);
    const std::string p1 = std::string(kWorkDir) + "/invariants_a.wjdd";
    const std::string p2 = std::string(kWorkDir) + "/invariants_b.wjdd";
    save_checkpoint(p1, net, {{"step", 1}});
    const LoadedCheckpoint lc = load_checkpoint(p1);
    const std::vector<double> orig = net.get_params();
    const std::vector<double> loaded = lc.net.get_params();
    bool ck = orig.size() == loaded.size();
    for (std::size_t i = 0; ck && i < orig.size(); ++i)
        ck = loaded[i] == static_cast<double>(static_cast<float>(orig[i]));
    if (!ck) violations.push_back("checkpoint narrowing");
    save_checkpoint(p2, lc.net, lc.training_meta);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    if (b1.empty() || b1 != b2) violations.push_back("checkpoint resave bytes");

    Outcome o;
    o.pass = violations.empty();
    if (o.pass) {
        o.detail = "pack4, remosaic, 8 transforms, checkpoint round trip all exact";
    } else {
        o.detail = "violated:";
        for (const std::string& v : violations) o.detail += " " + v + ";";
    }
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "closed-form kl vs monte carlo", criterion_kl_oracle},
        {2, "closed-form expectation vs monte carlo", criterion_expectation_oracle},
        {3, "network gradients vs finite differences", criterion_gradients},
        {4, "-elbo gradient degenerates to mse", criterion_mse_degeneration},
        {5, "two-stage degradation moments", criterion_two_stage_moments},
        {6, "prior alpha pinning and variance calibration", criterion_prior_construction},
        {7, "desk-scale training beats bilinear baseline", criterion_desk_training},
        {8, "single-image overfit peak behavior", criterion_overfit_curves},
        {9, "finetune adapts, then overfits", criterion_finetune_adaptation},
        {10, "confidence mask outlines step edges", criterion_mask_step_edge},
        {11, "pipeline invariants", criterion_pipeline_invariants},
    };

    int failures = 0, ran = 0;
    for (const Criterion& c : criteria) {
        if (!selected.empty() && selected.count(c.id) == 0) {
            std::printf("[%2d] SKIP  %s\n", c.id, c.name);
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = format("exception: %s", e.what());
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        ++ran;
        failures += o.pass ? 0 : 1;
        std::printf("[%2d] %s  %-46s %s  (%.1fs)\n", c.id, o.pass ? "PASS" : "FAIL", c.name,
                    o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d/%d criteria passed\n", ran - failures, ran);
    return failures == 0 ? 0 : 1;
}

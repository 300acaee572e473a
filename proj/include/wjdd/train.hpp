// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wjdd/degrade.hpp"
#include "wjdd/image.hpp"
#include "wjdd/net.hpp"
#include "wjdd/nig.hpp"
#include "wjdd/prior.hpp"

namespace wjdd {

struct TrainConfig {
    int patch_size = 32;
    int batch_size = 8;
    double lr_init = 5e-4;
    double lr_floor = 1e-4;
    double lr_decay = 0.8;
    double plateau_threshold = 0.01;  // dB of validation PSNR
    int plateau_patience = 3;         // eval rounds without improvement
    long max_steps = 5000;
    long eval_every = 100;
    double sigma_max = 20.0 / 255.0;  // per-patch field max ~ U(0, sigma_max)
    double noise_smoothness = 8.0;    // sigma-field blur std, pixels
    LossVariant loss_variant = LossVariant::paper_literal;
    PriorConfig prior;
    std::uint64_t seed = 0;

    // lr_init = 0 (with lr_floor = 0) is permitted as the documented
    // no-learning configuration.
    void validate() const;
};

// One corrupted patch ready for a gradient step. The demosaiced observation
// is recomputed from `raw` by the consumer.
struct TrainingPair {
    RawMosaic raw;
    NigField prior;
};

// crop (even-aligned) -> color-domain dihedral augmentation -> spatially
// varying Gaussian noise with a per-patch field max drawn from
// U(0, cfg.sigma_max) -> mosaic; the prior is built from the bilinear
// demosaic of the result against the clean augmented patch.
TrainingPair sample_training_pair(const std::vector<Image>& dataset, const TrainConfig& cfg,
                                  std::uint64_t seed);

struct AdamState {
    std::vector<double> m, v;
    long t = 0;
};

// Standard bias-corrected Adam update, in place.
void adam_step(std::vector<double>& weights, const std::vector<double>& grads, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Learning-rate controller: decay by cfg.lr_decay (never below cfg.lr_floor)
// whenever the best seen PSNR fails to improve by more than
// cfg.plateau_threshold for cfg.plateau_patience consecutive observations.
class PlateauSchedule {
public:
    PlateauSchedule(double lr_init, double lr_floor, double lr_decay, double threshold,
                    int patience);
    double observe(double psnr);
    double lr() const { return lr_; }

    // Serialization hooks so an interrupted run resumes with identical decay
    // decisions.
    void restore(double lr, double best, int since_best);
    double best() const;
    int since_best() const;

private:
    double lr_, lr_floor_, lr_decay_, threshold_;
    int patience_, since_best_ = 0;
    double best_;
};

struct ValPair {
    RawMosaic raw;
    Image clean;
};

// Fixed validation corruptions, deterministic per cfg.seed so evaluations
// are comparable across steps and runs.
std::vector<ValPair> make_val_pairs(const std::vector<Image>& val_set, const TrainConfig& cfg);

// Mean per-image PSNR/SSIM of the clamped posterior mean against clean.
MetricReport evaluate_net(const Network& net, const std::vector<ValPair>& pairs);
// Same metric for the bilinear demosaic of the raw input (no network).
MetricReport evaluate_baseline(const std::vector<ValPair>& pairs);
// Dihedral self-ensemble of the posterior mean.
MetricReport evaluate_ensemble(const Network& net, const std::vector<ValPair>& pairs);

struct TrainResult {
    double best_val_psnr = 0.0;
    double best_val_ssim = 0.0;
    long best_step = 0;
    std::vector<double> final_params;
};

// Full loop: batched -ELBO descent with Adam, JSON-lines log (one object per
// step: step, lr, loss, kl, expectation, plus val_psnr/val_ssim on eval
// steps), best-by-validation checkpoint at checkpoint_path, and a resumable
// optimizer state at checkpoint_path + ".state". Single-threaded and
// bit-deterministic per cfg.seed; resuming from the state file continues the
// interrupted run exactly.
TrainResult train(const std::vector<Image>& dataset, const std::vector<Image>& val_set,
                  const NetConfig& net_cfg, const TrainConfig& cfg,
                  const std::string& checkpoint_path, const std::string& log_path,
                  const std::string& resume_path = "");

enum class OverfitLoss { mse, elbo };
OverfitLoss overfit_loss_from_string(const std::string& s);

struct OverfitConfig {
    double lr = 5e-4;
    double lambda = 1.0;  // prior coupling for the elbo objective
    int window = 7;       // prior window for the elbo objective
    LossVariant loss_variant = LossVariant::paper_literal;
    std::uint64_t seed = 0;
};

struct CurvePoint {
    long step = 0;
    double psnr = 0.0;
};

// Corrupts `clean` once (noise then mosaic) into the target observation,
// then trains a fresh network of net_cfg to reproduce that observation from
// a fixed uniform random input raw derived from cfg.seed, recording PSNR of
// the clamped posterior mean against `clean` at step 0 and every eval_every
// steps. Fitting the observation from scratch learns its structure before
// its noise, so the curve typically peaks above the observation's own PSNR
// before declining. With OverfitLoss::elbo the prior is built with
// reference = the observation itself, so beta sits at its floor and the
// data term dominates.
std::vector<CurvePoint> single_image_overfit(const Image& clean, const NoiseSpec& noise,
                                             OverfitLoss loss, long steps, long eval_every,
                                             const NetConfig& net_cfg, const OverfitConfig& cfg);

// Two-column CSV, atomic write.
void write_curve_csv(const std::string& path, const std::string& header,
                     const std::vector<CurvePoint>& curve);

// Bundled desk-scale corpus: flat fields, linear ramps, sinusoidal textures
// and random filled triangles, deterministic per seed.
std::vector<Image> procedural_dataset(int count, int height, int width, std::uint64_t seed);

// Fixed piecewise-constant test asset (sharp edges, flat fills).
Image cartoon_test_image(int height, int width);

}  // namespace wjdd

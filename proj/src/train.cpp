// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0

#include "wjdd/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "wjdd/bayer.hpp"
#include "wjdd/checkpoint.hpp"
#include "wjdd/common.hpp"
#include "wjdd/rng.hpp"

namespace wjdd {

namespace {

Image clamp_image(Image img) {
    for (double& v : img.data) v = clamp01(v);
    return img;
}

}  // namespace

void TrainConfig::validate() const {
    if (patch_size < 2 || patch_size % 2 != 0)
        throw ValidationError("patch_size must be even and >= 2");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (lr_floor < 0.0 || lr_init < lr_floor)
        throw ValidationError("need 0 <= lr_floor <= lr_init");
    if (!(lr_decay > 0.0) || !(lr_decay < 1.0))
        throw ValidationError("lr_decay must be in (0, 1)");
    if (plateau_threshold < 0.0) throw ValidationError("plateau_threshold must be >= 0");
    if (plateau_patience < 1) throw ValidationError("plateau_patience must be >= 1");
    if (max_steps < 0) throw ValidationError("max_steps must be >= 0");
    if (eval_every < 1) throw ValidationError("eval_every must be >= 1");
    if (sigma_max < 0.0) throw ValidationError("sigma_max must be >= 0");
    if (noise_smoothness < 0.0) throw ValidationError("noise_smoothness must be >= 0");
    prior.validate();
}

TrainingPair sample_training_pair(const std::vector<Image>& dataset, const TrainConfig& cfg,
                                  std::uint64_t seed) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("sample_training_pair: empty dataset");
    Rng rng(seed);
    const Image& src =
        dataset[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(dataset.size())))];
    if (src.height < cfg.patch_size || src.width < cfg.patch_size)
        throw std::invalid_argument("sample_training_pair: patch larger than image");

    // Even-aligned crop keeps the patch on the canonical phase.
    const int oy = 2 * rng.uniform_int((src.height - cfg.patch_size) / 2 + 1);
    const int ox = 2 * rng.uniform_int((src.width - cfg.patch_size) / 2 + 1);
    Image patch(cfg.patch_size, cfg.patch_size);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < cfg.patch_size; ++y)
            for (int x = 0; x < cfg.patch_size; ++x)
                patch.at(c, y, x) = src.at(c, oy + y, ox + x);

    const DihedralTransform t{rng.uniform_int(8)};
    Image aug = dihedral_image(patch, t);

    NoiseSpec ns;
    ns.kind = NoiseKind::gaussian_spatial;
    ns.sigma_max = rng.uniform(0.0, cfg.sigma_max);
    ns.smoothness = cfg.noise_smoothness;
    ns.seed = rng.next_u64();
    Image noisy = add_noise(aug, ns);

    TrainingPair out;
    out.raw = mosaic(noisy, CfaPhase::RGGB);
    out.prior = make_prior(bilinear_demosaic(out.raw), aug, cfg.prior);
    return out;
}

void adam_step(std::vector<double>& weights, const std::vector<double>& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
    const std::size_t n = weights.size();
    if (grads.size() != n) throw std::invalid_argument("adam_step: gradient size mismatch");
    if (state.m.empty()) {
        state.m.assign(n, 0.0);
        state.v.assign(n, 0.0);
    }
    if (state.m.size() != n || state.v.size() != n)
        throw std::invalid_argument("adam_step: state size mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < n; ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        weights[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

PlateauSchedule::PlateauSchedule(double lr_init, double lr_floor, double lr_decay,
                                 double threshold, int patience)
    : lr_(lr_init),
      lr_floor_(lr_floor),
      lr_decay_(lr_decay),
      threshold_(threshold),
      patience_(patience),
      best_(-std::numeric_limits<double>::infinity()) {}

double PlateauSchedule::observe(double psnr) {
    if (psnr > best_ + threshold_) {
        best_ = psnr;
        since_best_ = 0;
    } else if (++since_best_ >= patience_) {
        lr_ = std::max(lr_ * lr_decay_, lr_floor_);
        since_best_ = 0;
    }
    return lr_;
}

std::vector<ValPair> make_val_pairs(const std::vector<Image>& val_set, const TrainConfig& cfg) {
    std::vector<ValPair> pairs;
    pairs.reserve(val_set.size());
    for (std::size_t i = 0; i < val_set.size(); ++i) {
        Rng rng(mix_seed(cfg.seed, UINT64_C(0xA11CE), i));
        NoiseSpec ns;
        ns.kind = NoiseKind::gaussian_spatial;
        ns.sigma_max = rng.uniform(0.0, cfg.sigma_max);
        ns.smoothness = cfg.noise_smoothness;
        ns.seed = rng.next_u64();
        pairs.push_back({mosaic(add_noise(val_set[i], ns), CfaPhase::RGGB), val_set[i]});
    }
    return pairs;
}

MetricReport evaluate_net(const Network& net, const std::vector<ValPair>& pairs) {
    MetricReport r{0.0, 0.0};
    for (const ValPair& p : pairs) {
        const Image restored = posterior_estimates(net.forward(p.raw)).first;
        r.psnr += psnr(restored, p.clean);
        r.ssim += ssim(restored, p.clean);
    }
    const double n = static_cast<double>(pairs.size());
    return {r.psnr / n, r.ssim / n};
}

MetricReport evaluate_baseline(const std::vector<ValPair>& pairs) {
    MetricReport r{0.0, 0.0};
    for (const ValPair& p : pairs) {
        const Image restored = clamp_image(bilinear_demosaic(p.raw));
        r.psnr += psnr(restored, p.clean);
        r.ssim += ssim(restored, p.clean);
    }
    const double n = static_cast<double>(pairs.size());
    return {r.psnr / n, r.ssim / n};
}

MetricReport evaluate_ensemble(const Network& net, const std::vector<ValPair>& pairs) {
    MetricReport r{0.0, 0.0};
    const auto infer = [&net](const RawMosaic& raw) { return net.forward(raw).mean; };
    for (const ValPair& p : pairs) {
        const Image restored = clamp_image(self_ensemble(infer, p.raw));
        r.psnr += psnr(restored, p.clean);
        r.ssim += ssim(restored, p.clean);
    }
    const double n = static_cast<double>(pairs.size());
    return {r.psnr / n, r.ssim / n};
}

namespace {

constexpr double kPsnrCap = 1e308;  // keeps plateau state JSON-finite

struct ResumedState {
    std::vector<double> params;
    AdamState adam;
    long step = 0;
    double lr = 0.0;
    double plateau_best = 0.0;
    int plateau_since = 0;
    double best_val_psnr = 0.0;
    double best_val_ssim = 0.0;
    long best_step = 0;
    bool best_valid = false;
};

ResumedState load_train_state(const std::string& path, const NetConfig& net_cfg) {
    Container c = read_container(path);
    if (!c.meta.contains("net_config") || !c.meta.contains("state"))
        throw IoError("'" + path + "' is not a training state file");
    if (net_config_to_json(net_config_from_json(c.meta.at("net_config"))) !=
        net_config_to_json(net_cfg))
        throw IoError("training state architecture does not match the requested net config");

    ResumedState out;
    for (const NamedArray& a : c.arrays) {
        if (a.name == "params")
            out.params = a.data;
        else if (a.name == "adam.m")
            out.adam.m = a.data;
        else if (a.name == "adam.v")
            out.adam.v = a.data;
    }
    if (out.params.empty() || out.adam.m.size() != out.params.size() ||
        out.adam.v.size() != out.params.size())
        throw IoError("training state arrays are missing or inconsistent");
    try {
        const nlohmann::json& s = c.meta.at("state");
        out.step = s.at("step").get<long>();
        out.adam.t = s.at("adam_t").get<long>();
        out.lr = s.at("lr").get<double>();
        out.plateau_best = s.at("plateau_best").get<double>();
        out.plateau_since = s.at("plateau_since").get<int>();
        out.best_valid = s.at("best_valid").get<bool>();
        out.best_val_psnr = s.at("best_val_psnr").get<double>();
        out.best_val_ssim = s.at("best_val_ssim").get<double>();
        out.best_step = s.at("best_step").get<long>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad training state: ") + e.what());
    }
    return out;
}

}  // namespace

void PlateauSchedule::restore(double lr, double best, int since_best) {
    lr_ = lr;
    best_ = best;
    since_best_ = since_best;
}

double PlateauSchedule::best() const { return best_; }
int PlateauSchedule::since_best() const { return since_best_; }

TrainResult train(const std::vector<Image>& dataset, const std::vector<Image>& val_set,
                  const NetConfig& net_cfg, const TrainConfig& cfg,
                  const std::string& checkpoint_path, const std::string& log_path,
                  const std::string& resume_path) {
    cfg.validate();
    net_cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

    Network net(net_cfg);
    std::vector<double> params;
    AdamState adam;
    PlateauSchedule sched(cfg.lr_init, cfg.lr_floor, cfg.lr_decay, cfg.plateau_threshold,
                          cfg.plateau_patience);
    double lr = cfg.lr_init;
    long start_step = 0;
    TrainResult result;
    bool best_valid = false;

    if (!resume_path.empty()) {
        ResumedState rs = load_train_state(resume_path, net_cfg);
        if (rs.params.size() != net.num_params())
            throw IoError("training state parameter count does not match");
        params = std::move(rs.params);
        adam = std::move(rs.adam);
        start_step = rs.step;
        lr = rs.lr;
        sched.restore(rs.lr, rs.plateau_best, rs.plateau_since);
        best_valid = rs.best_valid;
        result.best_val_psnr = rs.best_val_psnr;
        result.best_val_ssim = rs.best_val_ssim;
        result.best_step = rs.best_step;
    } else {
        net.init_weights(cfg.seed);
        params = net.get_params();
    }
    net.set_params(params);

    std::ofstream log(log_path, resume_path.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("cannot open training log '" + log_path + "'");

    const std::vector<ValPair> val_pairs = make_val_pairs(val_set, cfg);
    std::vector<double> grads(net.num_params(), 0.0);

    for (long step = start_step + 1; step <= cfg.max_steps; ++step) {
        std::fill(grads.begin(), grads.end(), 0.0);
        double loss = 0.0, kl = 0.0, expectation = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const TrainingPair tp = sample_training_pair(
                dataset, cfg,
                mix_seed(cfg.seed, static_cast<std::uint64_t>(step),
                         static_cast<std::uint64_t>(b)));
            const Image x_tilde = bilinear_demosaic(tp.raw);
            NetCache cache;
            const NigField q = net.forward_cached(tp.raw, &cache);
            const ElboBreakdown bd = elbo_loss(q, tp.prior, x_tilde, cfg.loss_variant);
            loss -= bd.elbo;
            kl += bd.kl;
            expectation += bd.expectation;
            const NigGrad g = neg_elbo_grad(q, tp.prior, x_tilde, cfg.loss_variant);
            net.backward_accum(cache, g, &grads);
        }
        adam_step(params, grads, adam, lr);
        net.set_params(params);

        nlohmann::json line = {
            {"step", step}, {"lr", lr}, {"loss", loss}, {"kl", kl}, {"expectation", expectation}};
        if (!val_pairs.empty() && step % cfg.eval_every == 0) {
            const MetricReport rep = evaluate_net(net, val_pairs);
            line["val_psnr"] = rep.psnr;
            line["val_ssim"] = rep.ssim;
            if (!best_valid || rep.psnr > result.best_val_psnr) {
                best_valid = true;
                result.best_val_psnr = rep.psnr;
                result.best_val_ssim = rep.ssim;
                result.best_step = step;
                save_checkpoint(checkpoint_path, net,
                                {{"step", step},
                                 {"lr", lr},
                                 {"val_psnr", rep.psnr},
                                 {"val_ssim", rep.ssim},
                                 {"loss_variant", to_string(cfg.loss_variant)},
                                 {"seed", cfg.seed}});
            }
            lr = sched.observe(rep.psnr);
        }
        log << line.dump() << '\n';
        if (!log) throw IoError("short write to training log '" + log_path + "'");
    }
    log.flush();

    // Runs without an eval (no validation set, or too few steps) still leave
    // a usable checkpoint behind.
    if (!best_valid)
        save_checkpoint(checkpoint_path, net,
                        {{"step", cfg.max_steps},
                         {"lr", lr},
                         {"loss_variant", to_string(cfg.loss_variant)},
                         {"seed", cfg.seed}});

    const nlohmann::json state = {
        {"step", cfg.max_steps},
        {"adam_t", adam.t},
        {"lr", lr},
        {"plateau_best", std::clamp(sched.best(), -kPsnrCap, kPsnrCap)},
        {"plateau_since", sched.since_best()},
        {"best_valid", best_valid},
        {"best_val_psnr", std::clamp(result.best_val_psnr, -kPsnrCap, kPsnrCap)},
        {"best_val_ssim", result.best_val_ssim},
        {"best_step", result.best_step}};
    if (adam.m.empty()) adam.m.assign(net.num_params(), 0.0);
    if (adam.v.empty()) adam.v.assign(net.num_params(), 0.0);
    const int n = static_cast<int>(net.num_params());
    write_container(checkpoint_path + ".state",
                    {{"net_config", net_config_to_json(net_cfg)}, {"state", state}},
                    {{"params", {n}, params, "f64"},
                     {"adam.m", {n}, adam.m, "f64"},
                     {"adam.v", {n}, adam.v, "f64"}});

    result.final_params = std::move(params);
    return result;
}

OverfitLoss overfit_loss_from_string(const std::string& s) {
    if (s == "mse") return OverfitLoss::mse;
    if (s == "elbo") return OverfitLoss::elbo;
    throw UsageError("unknown overfit loss '" + s + "' (expected mse or elbo)");
}

std::vector<CurvePoint> single_image_overfit(const Image& clean, const NoiseSpec& noise,
                                             OverfitLoss loss, long steps, long eval_every,
                                             const NetConfig& net_cfg, const OverfitConfig& cfg) {
    net_cfg.validate();
    if (steps < 0) throw std::invalid_argument("single_image_overfit: steps must be >= 0");
    if (eval_every < 1) throw std::invalid_argument("single_image_overfit: eval_every must be >= 1");

    const RawMosaic raw = mosaic(add_noise(clean, noise), CfaPhase::RGGB);
    const Image x_tilde = bilinear_demosaic(raw);

    // The network fits x_tilde from a fixed random input and never sees the
    // corrupted raw. Fitting from scratch is what makes the curve
    // informative (smooth structure is learned before the noise); fed the
    // corrupted raw itself, the residual mean head would already output
    // x_tilde exactly and nothing would move.
    RawMosaic input(clean.height, clean.width, CfaPhase::RGGB);
    Rng in_rng(mix_seed(cfg.seed, UINT64_C(0xD1B)));
    for (double& v : input.data) v = in_rng.uniform(0.0, 1.0);

    Network net(net_cfg);
    net.init_weights(cfg.seed);
    std::vector<double> params = net.get_params();

    NigField prior;
    if (loss == OverfitLoss::elbo) {
        PriorConfig pc;
        pc.lambda = cfg.lambda;
        pc.window = cfg.window;
        // Reference = observation, so the residual is zero and beta sits at
        // its floor: the prior only anchors the mean weakly.
        prior = make_prior(x_tilde, x_tilde, pc);
    }

    const auto eval_psnr = [&]() {
        return psnr(posterior_estimates(net.forward(input)).first, clean);
    };

    std::vector<CurvePoint> curve;
    curve.push_back({0, eval_psnr()});
    AdamState adam;
    for (long step = 1; step <= steps; ++step) {
        NetCache cache;
        const NigField q = net.forward_cached(input, &cache);
        NigGrad g(clean.height, clean.width);
        if (loss == OverfitLoss::mse) {
            for (std::size_t j = 0; j < q.mean.data.size(); ++j)
                g.d_mean.data[j] = 2.0 * (q.mean.data[j] - x_tilde.data[j]);
        } else {
            g = neg_elbo_grad(q, prior, x_tilde, cfg.loss_variant);
        }
        const std::vector<double> grads = net.backward(cache, g);
        adam_step(params, grads, adam, cfg.lr);
        net.set_params(params);
        if (step % eval_every == 0 || step == steps) curve.push_back({step, eval_psnr()});
    }
    return curve;
}

void write_curve_csv(const std::string& path, const std::string& header,
                     const std::vector<CurvePoint>& curve) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        out << header << '\n';
        out.precision(10);
        for (const CurvePoint& p : curve) out << p.step << ',' << p.psnr << '\n';
        if (!out) {
            out.close();
            std::remove(tmp.c_str());
            throw IoError("short write to '" + tmp + "'");
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw IoError("cannot rename '" + tmp + "' to '" + path + "'");
    }
}

std::vector<Image> procedural_dataset(int count, int height, int width, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("procedural_dataset: count must be >= 1");
    std::vector<Image> out;
    out.reserve(static_cast<std::size_t>(count));
    const double diag = static_cast<double>(std::max(height, width));
    for (int i = 0; i < count; ++i) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
        Image img(height, width);

        const int mode = rng.uniform_int(3);
        for (int c = 0; c < 3; ++c) {
            const double base = rng.uniform(0.15, 0.85);
            const double gx = mode == 1 ? rng.uniform(-0.6, 0.6) : 0.0;
            const double gy = mode == 1 ? rng.uniform(-0.6, 0.6) : 0.0;
            double* p = img.plane(c);
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x)
                    p[static_cast<std::size_t>(y) * width + x] =
                        base + gx * x / (width - 1.0) + gy * y / (height - 1.0);
        }

        const int waves = rng.uniform_int(3) + (mode == 2 ? 1 : 0);
        for (int k = 0; k < waves; ++k) {
            const double amp = rng.uniform(0.05, 0.25);
            const double cycles = rng.uniform(0.5, 6.0);
            const double theta = rng.uniform(0.0, 3.141592653589793);
            const double phase = rng.uniform(0.0, 6.283185307179586);
            const double cs = std::cos(theta), sn = std::sin(theta);
            double gain[3];
            for (double& gv : gain) gv = rng.uniform(0.2, 1.0);
            for (int y = 0; y < height; ++y) {
                for (int x = 0; x < width; ++x) {
                    const double s =
                        amp * std::sin(6.283185307179586 * cycles * (x * cs + y * sn) / diag +
                                       phase);
                    for (int c = 0; c < 3; ++c) img.at(c, y, x) += gain[c] * s;
                }
            }
        }

        const int tris = 1 + rng.uniform_int(4);
        for (int k = 0; k < tris; ++k) {
            double vy[3], vx[3], color[3];
            for (int v = 0; v < 3; ++v) {
                vy[v] = rng.uniform(0.0, height - 1.0);
                vx[v] = rng.uniform(0.0, width - 1.0);
            }
            for (double& cv : color) cv = rng.uniform(0.05, 0.95);
            const double alpha = rng.uniform(0.6, 1.0);
            const auto edge = [](double ay, double ax, double by, double bx, double py,
                                 double px) {
                return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
            };
            for (int y = 0; y < height; ++y) {
                for (int x = 0; x < width; ++x) {
                    const double e0 = edge(vy[0], vx[0], vy[1], vx[1], y, x);
                    const double e1 = edge(vy[1], vx[1], vy[2], vx[2], y, x);
                    const double e2 = edge(vy[2], vx[2], vy[0], vx[0], y, x);
                    const bool inside =
                        (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
                    if (!inside) continue;
                    for (int c = 0; c < 3; ++c)
                        img.at(c, y, x) = (1.0 - alpha) * img.at(c, y, x) + alpha * color[c];
                }
            }
        }

        for (double& v : img.data) v = clamp01(v);
        out.push_back(std::move(img));
    }
    return out;
}

Image cartoon_test_image(int height, int width) {
    Image img(height, width);
    const double h = height, w = width;
    const auto fill = [&](int c, int y, int x, double v) { img.at(c, y, x) = v; };
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const bool sky = y < 0.58 * h;
            fill(0, y, x, sky ? 0.55 : 0.35);
            fill(1, y, x, sky ? 0.75 : 0.70);
            fill(2, y, x, sky ? 0.95 : 0.30);
        }
    }
    // Sun.
    const double sy = 0.22 * h, sx = 0.75 * w, sr = 0.14 * std::min(h, w);
    // Mountain.
    const double my0 = 0.58 * h, mpy = 0.20 * h, mpx = 0.32 * w;
    // House body and door.
    const int hy0 = static_cast<int>(0.62 * h), hy1 = static_cast<int>(0.88 * h);
    const int hx0 = static_cast<int>(0.56 * w), hx1 = static_cast<int>(0.82 * w);
    const int dy0 = static_cast<int>(0.74 * h), dx0 = static_cast<int>(0.64 * w);
    const int dx1 = static_cast<int>(0.72 * w);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if ((y - sy) * (y - sy) + (x - sx) * (x - sx) <= sr * sr) {
                fill(0, y, x, 0.98);
                fill(1, y, x, 0.85);
                fill(2, y, x, 0.20);
            }
            // Triangle with apex (mpy, mpx) and base on my0.
            if (y >= mpy && y <= my0) {
                const double half = 0.30 * w * (y - mpy) / (my0 - mpy);
                if (x >= mpx - half && x <= mpx + half) {
                    fill(0, y, x, 0.50);
                    fill(1, y, x, 0.45);
                    fill(2, y, x, 0.40);
                }
            }
            if (y >= hy0 && y < hy1 && x >= hx0 && x < hx1) {
                fill(0, y, x, 0.80);
                fill(1, y, x, 0.30);
                fill(2, y, x, 0.25);
            }
            if (y >= dy0 && y < hy1 && x >= dx0 && x < dx1) {
                fill(0, y, x, 0.30);
                fill(1, y, x, 0.20);
                fill(2, y, x, 0.15);
            }
        }
    }
    return img;
}

}  // namespace wjdd

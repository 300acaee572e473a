// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: one binary, one subcommand per pipeline stage.
// Exit codes: 0 ok, 1 numeric-validation failure, 2 usage or I/O error.
// Errors go to stderr as "error: <category>: <message>".

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

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

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wjdd;

namespace {

// ---------------------------------------------------------------------------
// Run configuration. A JSON file with optional sections; every field falls
// back to the compiled-in default and unknown keys are rejected so a typo
// cannot silently revert a setting.

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw UsageError(where + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::none_of(allowed.begin(), allowed.end(),
                         [&](const char* k) { return it.key() == k; }))
            throw UsageError(where + ": unknown key '" + it.key() + "'");
    }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

NetConfig net_from_json(const json& j) {
    check_keys(j, "net", {"channels", "grdb_blocks", "grdb_layers", "growth"});
    NetConfig cfg;
    get_if(j, "channels", cfg.channels);
    get_if(j, "grdb_blocks", cfg.grdb_blocks);
    get_if(j, "grdb_layers", cfg.grdb_layers);
    get_if(j, "growth", cfg.growth);
    return cfg;
}

json net_to_json(const NetConfig& c) {
    return {{"channels", c.channels},
            {"grdb_blocks", c.grdb_blocks},
            {"grdb_layers", c.grdb_layers},
            {"growth", c.growth}};
}

PriorConfig prior_from_json(const json& j, const std::string& where) {
    check_keys(j, where, {"lambda", "window", "sigma_spatial", "sigma_range"});
    PriorConfig cfg;
    get_if(j, "lambda", cfg.lambda);
    get_if(j, "window", cfg.window);
    get_if(j, "sigma_spatial", cfg.bilateral_sigma_spatial);
    get_if(j, "sigma_range", cfg.bilateral_sigma_range);
    return cfg;
}

json prior_to_json(const PriorConfig& c) {
    return {{"lambda", c.lambda},
            {"window", c.window},
            {"sigma_spatial", c.bilateral_sigma_spatial},
            {"sigma_range", c.bilateral_sigma_range}};
}

TrainConfig train_from_json(const json& j) {
    check_keys(j, "train",
               {"patch_size", "batch_size", "lr_init", "lr_floor", "lr_decay",
                "plateau_threshold", "plateau_patience", "max_steps", "eval_every", "sigma_max",
                "noise_smoothness", "loss_variant", "prior", "seed"});
    TrainConfig cfg;
    get_if(j, "patch_size", cfg.patch_size);
    get_if(j, "batch_size", cfg.batch_size);
    get_if(j, "lr_init", cfg.lr_init);
    get_if(j, "lr_floor", cfg.lr_floor);
    get_if(j, "lr_decay", cfg.lr_decay);
    get_if(j, "plateau_threshold", cfg.plateau_threshold);
    get_if(j, "plateau_patience", cfg.plateau_patience);
    get_if(j, "max_steps", cfg.max_steps);
    get_if(j, "eval_every", cfg.eval_every);
    get_if(j, "sigma_max", cfg.sigma_max);
    get_if(j, "noise_smoothness", cfg.noise_smoothness);
    if (j.contains("loss_variant"))
        cfg.loss_variant = loss_variant_from_string(j.at("loss_variant").get<std::string>());
    if (j.contains("prior")) cfg.prior = prior_from_json(j.at("prior"), "train.prior");
    get_if(j, "seed", cfg.seed);
    return cfg;
}

json train_to_json(const TrainConfig& c) {
    return {{"patch_size", c.patch_size},
            {"batch_size", c.batch_size},
            {"lr_init", c.lr_init},
            {"lr_floor", c.lr_floor},
            {"lr_decay", c.lr_decay},
            {"plateau_threshold", c.plateau_threshold},
            {"plateau_patience", c.plateau_patience},
            {"max_steps", c.max_steps},
            {"eval_every", c.eval_every},
            {"sigma_max", c.sigma_max},
            {"noise_smoothness", c.noise_smoothness},
            {"loss_variant", to_string(c.loss_variant)},
            {"prior", prior_to_json(c.prior)},
            {"seed", c.seed}};
}

FinetuneConfig finetune_from_json(const json& j) {
    check_keys(j, "finetune",
               {"lambda", "patch", "lr", "iterations", "window", "loss_variant", "seed"});
    FinetuneConfig cfg;
    get_if(j, "lambda", cfg.lambda);
    get_if(j, "patch", cfg.patch);
    get_if(j, "lr", cfg.lr);
    get_if(j, "iterations", cfg.iterations);
    get_if(j, "window", cfg.window);
    if (j.contains("loss_variant"))
        cfg.loss_variant = loss_variant_from_string(j.at("loss_variant").get<std::string>());
    get_if(j, "seed", cfg.seed);
    return cfg;
}

json finetune_to_json(const FinetuneConfig& c) {
    return {{"lambda", c.lambda},   {"patch", c.patch},
            {"lr", c.lr},           {"iterations", c.iterations},
            {"window", c.window},   {"loss_variant", to_string(c.loss_variant)},
            {"seed", c.seed}};
}

OverfitConfig overfit_from_json(const json& j) {
    check_keys(j, "overfit", {"lr", "lambda", "window", "loss_variant", "seed"});
    OverfitConfig cfg;
    get_if(j, "lr", cfg.lr);
    get_if(j, "lambda", cfg.lambda);
    get_if(j, "window", cfg.window);
    if (j.contains("loss_variant"))
        cfg.loss_variant = loss_variant_from_string(j.at("loss_variant").get<std::string>());
    get_if(j, "seed", cfg.seed);
    return cfg;
}

json overfit_to_json(const OverfitConfig& c) {
    return {{"lr", c.lr},
            {"lambda", c.lambda},
            {"window", c.window},
            {"loss_variant", to_string(c.loss_variant)},
            {"seed", c.seed}};
}

// Procedural data generation settings used when no image directory is given.
struct DatasetSpec {
    int count = 200;
    int height = 64;
    int width = 64;
    std::uint64_t seed = 1;
    int val_count = 10;
    std::uint64_t val_seed = 9001;
};

DatasetSpec dataset_from_json(const json& j) {
    check_keys(j, "dataset", {"count", "height", "width", "seed", "val_count", "val_seed"});
    DatasetSpec d;
    get_if(j, "count", d.count);
    get_if(j, "height", d.height);
    get_if(j, "width", d.width);
    get_if(j, "seed", d.seed);
    get_if(j, "val_count", d.val_count);
    get_if(j, "val_seed", d.val_seed);
    return d;
}

json dataset_to_json(const DatasetSpec& d) {
    return {{"count", d.count},         {"height", d.height},
            {"width", d.width},         {"seed", d.seed},
            {"val_count", d.val_count}, {"val_seed", d.val_seed}};
}

struct RunConfig {
    NetConfig net;
    TrainConfig train;
    FinetuneConfig finetune;
    OverfitConfig overfit;
    DatasetSpec dataset;
};

RunConfig parse_run_config(const json& j) {
    check_keys(j, "config", {"net", "train", "finetune", "overfit", "dataset"});
    RunConfig rc;
    try {
        if (j.contains("net")) rc.net = net_from_json(j.at("net"));
        if (j.contains("train")) rc.train = train_from_json(j.at("train"));
        if (j.contains("finetune")) rc.finetune = finetune_from_json(j.at("finetune"));
        if (j.contains("overfit")) rc.overfit = overfit_from_json(j.at("overfit"));
        if (j.contains("dataset")) rc.dataset = dataset_from_json(j.at("dataset"));
    } catch (const json::exception& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    return rc;
}

json run_config_to_json(const RunConfig& rc) {
    return {{"net", net_to_json(rc.net)},
            {"train", train_to_json(rc.train)},
            {"finetune", finetune_to_json(rc.finetune)},
            {"overfit", overfit_to_json(rc.overfit)},
            {"dataset", dataset_to_json(rc.dataset)}};
}

RunConfig load_run_config(const std::string& path) {
    if (path.empty()) return RunConfig{};
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw UsageError("config '" + path + "': " + e.what());
    }
    return parse_run_config(j);
}

// ---------------------------------------------------------------------------
// Noise argument: kind[:key=value[,key=value...]]. Amplitudes (sigma,
// sigma_max, range) are given on the familiar 0-255 scale and divided by 255;
// smoothness and blur_sigma are in pixels.

double parse_num(const std::string& v, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw UsageError("--noise: bad number '" + v + "' for " + what);
    }
}

NoiseSpec parse_noise_arg(const std::string& arg, std::uint64_t seed) {
    NoiseSpec ns;
    ns.seed = seed;
    const std::size_t colon = arg.find(':');
    ns.kind = noise_kind_from_string(arg.substr(0, colon));
    if (colon != std::string::npos) {
        std::string rest = arg.substr(colon + 1);
        std::size_t start = 0;
        while (start <= rest.size()) {
            const std::size_t comma = rest.find(',', start);
            const std::string kv =
                rest.substr(start, comma == std::string::npos ? comma : comma - start);
            start = comma == std::string::npos ? rest.size() + 1 : comma + 1;
            if (kv.empty()) continue;
            const std::size_t eq = kv.find('=');
            if (eq == std::string::npos)
                throw UsageError("--noise: expected key=value, got '" + kv + "'");
            const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
            if (k == "sigma")
                ns.sigma = parse_num(v, k) / 255.0;
            else if (k == "sigma_max")
                ns.sigma_max = parse_num(v, k) / 255.0;
            else if (k == "range")
                ns.range = parse_num(v, k) / 255.0;
            else if (k == "smoothness")
                ns.smoothness = parse_num(v, k);
            else if (k == "scale_a")
                ns.scale_a = parse_num(v, k);
            else if (k == "blur_sigma")
                ns.blur_sigma = parse_num(v, k);
            else
                throw UsageError("--noise: unknown parameter '" + k + "'");
        }
    }
    ns.validate();
    return ns;
}

json noise_to_json(const NoiseSpec& ns) {
    return {{"kind", to_string(ns.kind)},
            {"sigma", ns.sigma * 255.0},
            {"sigma_max", ns.sigma_max * 255.0},
            {"range", ns.range * 255.0},
            {"smoothness", ns.smoothness},
            {"scale_a", ns.scale_a},
            {"blur_sigma", ns.blur_sigma},
            {"seed", ns.seed}};
}

// ---------------------------------------------------------------------------
// Small helpers

void make_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

std::vector<Image> load_image_dir(const std::string& dir) {
    std::vector<std::string> files;
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(dir, ec))
        if (e.path().extension() == ".png") files.push_back(e.path().string());
    if (ec) throw IoError("cannot read directory '" + dir + "': " + ec.message());
    if (files.empty()) throw IoError("no .png files in '" + dir + "'");
    std::sort(files.begin(), files.end());
    std::vector<Image> out;
    out.reserve(files.size());
    for (const std::string& f : files) out.push_back(load_png(f));
    return out;
}

// Min-max normalization for visualizing a nonnegative map; returns lo/hi.
std::pair<double, double> normalize_map(Image& map) {
    double lo = map.data[0], hi = map.data[0];
    for (double v : map.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;
    for (double& v : map.data) v = span > 0.0 ? (v - lo) / span : 0.0;
    return {lo, hi};
}

void write_csv(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        out << content;
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

// Runs the network on a raw of any CFA phase: unify to the canonical raster,
// infer, map the outputs back.
std::pair<Image, Image> infer_single(const Network& net, const RawMosaic& raw) {
    const DihedralTransform ident{0};
    const RawMosaic unified = bayer_transform(raw, ident);
    const auto [mean, noise] = posterior_estimates(net.forward(unified));
    return {undo_bayer_transform_image(mean, ident), undo_bayer_transform_image(noise, ident)};
}

// ---------------------------------------------------------------------------
// Subcommands

void run_degrade(const std::string& in, const std::string& noise_arg, std::uint64_t seed,
                 const std::string& out_dir, bool dump_sigma, bool print_config) {
    const NoiseSpec ns = parse_noise_arg(noise_arg, seed);
    if (print_config) {
        std::cout << json{{"command", "degrade"},
                          {"in", in},
                          {"out", out_dir},
                          {"noise", noise_to_json(ns)}}
                         .dump(2)
                  << "\n";
        return;
    }
    const Image img = load_png(in);
    const Image noisy = add_noise(img, ns);
    const RawMosaic raw = mosaic(noisy, CfaPhase::RGGB);

    make_out_dir(out_dir);
    const std::string stem = stem_of(in);
    const std::string raw_path = join(out_dir, stem + "_raw.png");
    const std::string noisy_path = join(out_dir, stem + "_noisy.png");
    save_raw_png(raw, raw_path);
    Image noisy_clamped = noisy;
    for (double& v : noisy_clamped.data) v = clamp01(v);
    save_png(noisy_clamped, noisy_path, 16);
    std::cout << "seed: " << seed << "\n";
    std::cout << "wrote " << raw_path << "\n";
    std::cout << "wrote " << noisy_path << "\n";

    if (dump_sigma && ns.kind == NoiseKind::gaussian_spatial) {
        // Reconstructs the exact field add_noise used (same derived seed).
        Image field = gen_sigma_field(img.height, img.width, ns.sigma_max, ns.smoothness,
                                      mix_seed(ns.seed, 1));
        const auto [lo, hi] = normalize_map(field);
        const std::string sigma_path = join(out_dir, stem + "_sigma.png");
        save_png(field, sigma_path, 16);
        std::cout << "wrote " << sigma_path << " (sigma range [" << lo * 255.0 << ", "
                  << hi * 255.0 << "] / 255)\n";
    }
}

void run_train(const std::string& config_path, const std::string& data_dir,
               const std::string& val_dir, const std::string& ckpt_path,
               const std::string& log_path, const std::string& resume_path, bool print_config) {
    const RunConfig rc = load_run_config(config_path);
    if (print_config) {
        std::cout << run_config_to_json(rc).dump(2) << "\n";
        return;
    }
    const std::vector<Image> dataset =
        data_dir.empty()
            ? procedural_dataset(rc.dataset.count, rc.dataset.height, rc.dataset.width,
                                 rc.dataset.seed)
            : load_image_dir(data_dir);
    const std::vector<Image> val_set =
        val_dir.empty() ? procedural_dataset(rc.dataset.val_count, rc.dataset.height,
                                             rc.dataset.width, rc.dataset.val_seed)
                        : load_image_dir(val_dir);
    std::cout << "seed: " << rc.train.seed << "\n";
    std::cout << "training on " << dataset.size() << " images, validating on " << val_set.size()
              << "\n";
    const TrainResult r =
        train(dataset, val_set, rc.net, rc.train, ckpt_path, log_path, resume_path);
    const MetricReport base = evaluate_baseline(make_val_pairs(val_set, rc.train));
    std::cout << "baseline (bilinear demosaic): psnr " << base.psnr << " dB, ssim " << base.ssim
              << "\n";
    std::cout << "best val: psnr " << r.best_val_psnr << " dB, ssim " << r.best_val_ssim
              << " at step " << r.best_step << "\n";
    std::cout << "wrote " << ckpt_path << "\n";
}

void run_infer(const std::string& ckpt_path, const std::string& in, const std::string& out_dir,
               const std::string& phase_str, bool ensemble, const std::string& dump_float) {
    const LoadedCheckpoint lc = load_checkpoint(ckpt_path);
    const RawMosaic raw = load_raw_png(in, cfa_phase_from_string(phase_str));

    auto [restored, noise] = infer_single(lc.net, raw);
    if (ensemble) {
        Image avg = self_ensemble(
            [&](const RawMosaic& r) { return lc.net.forward(r).mean; }, raw);
        for (double& v : avg.data) v = clamp01(v);
        restored = std::move(avg);
    }

    make_out_dir(out_dir);
    const std::string stem = stem_of(in);
    const std::string restored_path = join(out_dir, stem + "_restored.png");
    save_png(restored, restored_path, 16);
    std::cout << "wrote " << restored_path << (ensemble ? " (self-ensemble)" : "") << "\n";

    Image noise_vis = noise;
    const auto [lo, hi] = normalize_map(noise_vis);
    const std::string noise_path = join(out_dir, stem + "_noise.png");
    save_png(noise_vis, noise_path, 16);
    std::cout << "wrote " << noise_path << " (E[sigma^2] range [" << lo << ", " << hi
              << "], min-max normalized)\n";

    if (!dump_float.empty()) {
        const int h = restored.height, w = restored.width;
        write_container(dump_float,
                        {{"kind", "infer"},
                         {"source", in},
                         {"checkpoint", ckpt_path},
                         {"ensemble", ensemble}},
                        {{"mean", {3, h, w}, restored.data, "f64"},
                         {"noise", {3, h, w}, noise.data, "f64"}});
        std::cout << "wrote " << dump_float << "\n";
    }
}

void run_finetune(const std::string& config_path, const std::string& ckpt_path,
                  const std::string& in, const std::string& clean_path,
                  const std::string& out_dir, long iterations_override, bool print_config) {
    RunConfig rc = load_run_config(config_path);
    if (iterations_override >= 0) rc.finetune.iterations = iterations_override;
    if (print_config) {
        std::cout << json{{"finetune", finetune_to_json(rc.finetune)}}.dump(2) << "\n";
        return;
    }
    const LoadedCheckpoint lc = load_checkpoint(ckpt_path);
    const RawMosaic raw = load_raw_png(in);
    Image clean;
    const bool have_clean = !clean_path.empty();
    if (have_clean) clean = load_png(clean_path);

    std::cout << "seed: " << rc.finetune.seed << "\n";
    const FinetuneResult r =
        finetune(lc.net, raw, rc.finetune, have_clean ? &clean : nullptr);

    make_out_dir(out_dir);
    const std::string stem = stem_of(in);
    const std::string out_ckpt = join(out_dir, stem + "_finetuned.wjdd");
    save_checkpoint(out_ckpt, r.net,
                    {{"finetuned_from", ckpt_path},
                     {"iterations", rc.finetune.iterations},
                     {"lr", rc.finetune.lr},
                     {"seed", rc.finetune.seed}});
    const std::string restored_path = join(out_dir, stem + "_restored.png");
    save_png(r.restored, restored_path, 16);
    std::cout << "wrote " << out_ckpt << "\n";
    std::cout << "wrote " << restored_path << "\n";

    if (have_clean) {
        const std::string curve_path = join(out_dir, stem + "_curve.csv");
        write_curve_csv(curve_path, "iteration,psnr", r.curve);
        double peak = r.curve.front().psnr;
        long peak_it = 0;
        for (const CurvePoint& p : r.curve)
            if (p.psnr > peak) {
                peak = p.psnr;
                peak_it = p.step;
            }
        std::cout << "wrote " << curve_path << "\n";
        std::cout << "psnr: start " << r.curve.front().psnr << " dB, peak " << peak
                  << " dB at iteration " << peak_it << ", final " << r.curve.back().psnr
                  << " dB\n";
    }
}

void run_eval(const std::vector<std::string>& preds, const std::vector<std::string>& refs,
              const std::string& out_csv) {
    if (preds.size() != refs.size())
        throw UsageError("eval: --pred and --ref must be given the same number of times");
    if (preds.empty()) throw UsageError("eval: at least one --pred/--ref pair required");

    std::ostringstream csv;
    csv << "pred,ref,psnr,ssim\n";
    double mean_psnr = 0.0, mean_ssim = 0.0;
    std::cout << "pred\tref\tpsnr\tssim\n";
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const MetricReport m = compare_images(load_png(preds[i]), load_png(refs[i]));
        mean_psnr += m.psnr;
        mean_ssim += m.ssim;
        std::cout << preds[i] << "\t" << refs[i] << "\t" << m.psnr << "\t" << m.ssim << "\n";
        csv << preds[i] << ',' << refs[i] << ',' << m.psnr << ',' << m.ssim << '\n';
    }
    mean_psnr /= static_cast<double>(preds.size());
    mean_ssim /= static_cast<double>(preds.size());
    std::cout << "mean\t\t" << mean_psnr << "\t" << mean_ssim << "\n";
    csv << "mean,," << mean_psnr << ',' << mean_ssim << '\n';
    if (!out_csv.empty()) {
        write_csv(out_csv, csv.str());
        std::cout << "wrote " << out_csv << "\n";
    }
}

int run_validate_loss(int n, long samples, std::uint64_t seed) {
    if (n < 1) throw UsageError("validate-loss: --n must be >= 1");
    Rng rng(mix_seed(seed));
    bool ok = true;

    // KL divergence against sampling.
    double worst_kl = 0.0;
    for (int i = 0; i < n; ++i) {
        NigField q(2, 2), p(2, 2);
        for (std::size_t k = 0; k < q.mean.data.size(); ++k) {
            q.mean.data[k] = rng.uniform();
            q.lambda.data[k] = std::pow(10.0, rng.uniform(std::log10(0.5), std::log10(2000.0)));
            q.alpha.data[k] = 1.0 + std::pow(10.0, rng.uniform(std::log10(0.5), std::log10(200.0)));
            q.beta.data[k] = std::pow(10.0, rng.uniform(-4.0, 0.0));
            const double scale = std::sqrt(q.beta.data[k] / (q.alpha.data[k] - 1.0));
            p.mean.data[k] = q.mean.data[k] + rng.uniform(-1.0, 1.0) * scale;
            p.lambda.data[k] = q.lambda.data[k] * std::pow(10.0, rng.uniform(-0.5, 0.5));
            p.alpha.data[k] = 1.0 + (q.alpha.data[k] - 1.0) * std::pow(10.0, rng.uniform(-0.3, 0.3));
            p.beta.data[k] = q.beta.data[k] * std::pow(10.0, rng.uniform(-0.5, 0.5));
        }
        double closed = 0.0;
        for (double v : kl_nig(q, p).data) closed += v;
        const auto [est, se] = mc_kl_oracle(q, p, samples, mix_seed(seed, 1000, i));
        worst_kl = std::max(worst_kl, std::abs(est - closed) / se);
    }
    std::cout << "kl: max deviation " << worst_kl << " sigma over " << n << " configs ("
              << samples << " samples each)\n";
    if (worst_kl >= 3.0) ok = false;

    // Expectation term against sampling (derivation_consistent form).
    double worst_exp = 0.0;
    for (int i = 0; i < n; ++i) {
        NigField q(2, 2);
        Image x(2, 2);
        for (std::size_t k = 0; k < q.mean.data.size(); ++k) {
            q.mean.data[k] = rng.uniform();
            q.lambda.data[k] = std::pow(10.0, rng.uniform(std::log10(0.5), 2.0));
            q.alpha.data[k] = 1.5 + std::pow(10.0, rng.uniform(-1.0, 1.7));
            q.beta.data[k] = std::pow(10.0, rng.uniform(-3.0, 0.0));
            x.data[k] = q.mean.data[k] +
                        rng.uniform(-2.0, 2.0) * std::sqrt(q.beta.data[k] / (q.alpha.data[k] - 1.0));
        }
        double closed = 0.0;
        for (double v : expectation_term(q, x, LossVariant::derivation_consistent).data)
            closed += v;
        const auto [est, se] = mc_expectation_oracle(q, x, samples, mix_seed(seed, 2000, i));
        worst_exp = std::max(worst_exp, std::abs(est - closed) / se);
    }
    std::cout << "expectation: max deviation " << worst_exp << " sigma over " << n
              << " configs\n";
    if (worst_exp >= 3.0) ok = false;

    std::cout << (ok ? "PASS" : "FAIL") << "\n";
    return ok ? 0 : 1;
}

void run_overfit(const std::string& config_path, const std::string& image_path, int size,
                 const std::string& noise_arg, std::uint64_t noise_seed, long steps,
                 long eval_every, const std::string& out_dir, bool print_config) {
    const RunConfig rc = load_run_config(config_path);
    NoiseSpec ns = parse_noise_arg(noise_arg, noise_seed);
    if (print_config) {
        std::cout << json{{"net", net_to_json(rc.net)},
                          {"overfit", overfit_to_json(rc.overfit)},
                          {"noise", noise_to_json(ns)},
                          {"steps", steps},
                          {"eval_every", eval_every}}
                         .dump(2)
                  << "\n";
        return;
    }
    const Image clean = image_path.empty() ? cartoon_test_image(size, size) : load_png(image_path);
    std::cout << "seed: " << rc.overfit.seed << " (noise seed " << noise_seed << ")\n";

    make_out_dir(out_dir);
    const char* names[2] = {"mse", "elbo"};
    const OverfitLoss losses[2] = {OverfitLoss::mse, OverfitLoss::elbo};
    for (int i = 0; i < 2; ++i) {
        const std::vector<CurvePoint> curve =
            single_image_overfit(clean, ns, losses[i], steps, eval_every, rc.net, rc.overfit);
        const std::string path = join(out_dir, std::string("overfit_") + names[i] + ".csv");
        write_curve_csv(path, "step,psnr", curve);
        double peak = curve.front().psnr;
        long peak_step = 0;
        for (const CurvePoint& p : curve)
            if (p.psnr > peak) {
                peak = p.psnr;
                peak_step = p.step;
            }
        std::cout << names[i] << ": peak " << peak << " dB at step " << peak_step << ", final "
                  << curve.back().psnr << " dB (" << path << ")\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"raw-domain joint denoising and demosaicking toolkit"};
    app.require_subcommand(1);
    bool deterministic = false;
    app.add_flag("--deterministic", deterministic,
                 "force single-threaded numeric paths (currently the only mode)");

    int exit_code = 0;

    // degrade
    std::string deg_in, deg_noise = "gaussian_iid:sigma=10", deg_out = ".";
    std::uint64_t deg_seed = 0;
    bool deg_dump_sigma = false, deg_print = false;
    auto* deg = app.add_subcommand("degrade", "corrupt a clean image into a noisy raw mosaic");
    deg->add_option("--in", deg_in, "clean RGB PNG")->required();
    deg->add_option("--noise", deg_noise,
                    "noise spec kind[:k=v,...]; kinds: gaussian_iid, gaussian_spatial, uniform, "
                    "poisson_gaussian, brown_gaussian; amplitudes on the 0-255 scale");
    deg->add_option("--seed", deg_seed, "noise seed");
    deg->add_option("--out", deg_out, "output directory");
    deg->add_flag("--dump-sigma", deg_dump_sigma, "also write the sigma-field visualization");
    deg->add_flag("--print-config", deg_print, "print the resolved configuration and exit");
    deg->callback(
        [&]() { run_degrade(deg_in, deg_noise, deg_seed, deg_out, deg_dump_sigma, deg_print); });

    // train
    std::string tr_config, tr_data, tr_val, tr_ckpt = "checkpoint.wjdd", tr_log = "train.jsonl",
                tr_resume;
    bool tr_print = false;
    auto* tr = app.add_subcommand("train", "train a model (procedural dataset by default)");
    tr->add_option("--config", tr_config, "JSON run configuration");
    tr->add_option("--data-dir", tr_data, "directory of clean training PNGs");
    tr->add_option("--val-dir", tr_val, "directory of clean validation PNGs");
    tr->add_option("--out", tr_ckpt, "checkpoint path");
    tr->add_option("--log", tr_log, "JSON-lines training log path");
    tr->add_option("--resume", tr_resume, "resume from a .state file");
    tr->add_flag("--print-config", tr_print, "print the resolved configuration and exit");
    tr->callback(
        [&]() { run_train(tr_config, tr_data, tr_val, tr_ckpt, tr_log, tr_resume, tr_print); });

    // infer
    std::string inf_ckpt, inf_in, inf_out = ".", inf_phase = "RGGB", inf_dump;
    bool inf_ensemble = false;
    auto* inf = app.add_subcommand("infer", "restore a raw mosaic with a trained model");
    inf->add_option("--checkpoint", inf_ckpt, "model checkpoint")->required();
    inf->add_option("--in", inf_in, "raw mosaic (16-bit grayscale PNG)")->required();
    inf->add_option("--out", inf_out, "output directory");
    inf->add_option("--phase", inf_phase, "CFA phase of the input (RGGB, GRBG, GBRG, BGGR)");
    inf->add_flag("--ensemble", inf_ensemble, "average all 8 dihedral branches");
    inf->add_option("--dump-float", inf_dump,
                    "also write exact float outputs to this container file");
    inf->callback(
        [&]() { run_infer(inf_ckpt, inf_in, inf_out, inf_phase, inf_ensemble, inf_dump); });

    // finetune
    std::string ft_config, ft_ckpt, ft_in, ft_clean, ft_out = ".";
    long ft_iters = -1;
    bool ft_print = false;
    auto* ft = app.add_subcommand("finetune", "adapt a model to one raw input");
    ft->add_option("--config", ft_config, "JSON run configuration");
    ft->add_option("--checkpoint", ft_ckpt, "pretrained checkpoint")->required();
    ft->add_option("--in", ft_in, "raw mosaic (16-bit grayscale PNG)")->required();
    ft->add_option("--clean", ft_clean, "clean reference; enables the PSNR curve CSV");
    ft->add_option("--iterations", ft_iters, "override finetune.iterations");
    ft->add_option("--out", ft_out, "output directory");
    ft->add_flag("--print-config", ft_print, "print the resolved configuration and exit");
    ft->callback([&]() {
        run_finetune(ft_config, ft_ckpt, ft_in, ft_clean, ft_out, ft_iters, ft_print);
    });

    // eval
    std::vector<std::string> ev_preds, ev_refs;
    std::string ev_csv;
    auto* ev = app.add_subcommand("eval", "PSNR/SSIM table for prediction/reference pairs");
    ev->add_option("--pred", ev_preds, "prediction PNG (repeatable)")->required();
    ev->add_option("--ref", ev_refs, "reference PNG (repeatable)")->required();
    ev->add_option("--out", ev_csv, "also write the table as CSV");
    ev->callback([&]() { run_eval(ev_preds, ev_refs, ev_csv); });

    // validate-loss
    int vl_n = 100;
    long vl_samples = 1000000;
    std::uint64_t vl_seed = 1;
    auto* vl = app.add_subcommand("validate-loss",
                                  "compare closed-form losses against Monte Carlo oracles");
    vl->add_option("--n", vl_n, "number of random configurations");
    vl->add_option("--samples", vl_samples, "Monte Carlo samples per configuration");
    vl->add_option("--seed", vl_seed, "sampling seed");
    vl->callback([&]() { exit_code = run_validate_loss(vl_n, vl_samples, vl_seed); });

    // overfit
    std::string ov_config, ov_image, ov_noise = "gaussian_iid:sigma=25", ov_out = ".";
    int ov_size = 64;
    std::uint64_t ov_seed = 0;
    long ov_steps = 500, ov_eval = 10;
    bool ov_print = false;
    auto* ov = app.add_subcommand("overfit",
                                  "single-image overfit producing mse and elbo PSNR curves");
    ov->add_option("--config", ov_config, "JSON run configuration");
    ov->add_option("--image", ov_image, "clean PNG (default: bundled cartoon)");
    ov->add_option("--size", ov_size, "cartoon side length when no --image is given");
    ov->add_option("--noise", ov_noise, "corruption spec (see degrade)");
    ov->add_option("--noise-seed", ov_seed, "corruption seed");
    ov->add_option("--steps", ov_steps, "optimization steps");
    ov->add_option("--eval-every", ov_eval, "PSNR sampling stride");
    ov->add_option("--out", ov_out, "output directory");
    ov->add_flag("--print-config", ov_print, "print the resolved configuration and exit");
    ov->callback([&]() {
        run_overfit(ov_config, ov_image, ov_size, ov_noise, ov_seed, ov_steps, ov_eval, ov_out,
                    ov_print);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: io: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: validation: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return exit_code;
}

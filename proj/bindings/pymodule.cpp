// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0
//
// Python bindings for the main operations. Color images are numpy arrays of
// shape (3, H, W) float64 in [0, 1]; raw mosaics are (H, W) float64.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <utility>

#include <json.hpp>

#include "wjdd/bayer.hpp"
#include "wjdd/checkpoint.hpp"
#include "wjdd/common.hpp"
#include "wjdd/degrade.hpp"
#include "wjdd/image.hpp"
#include "wjdd/net.hpp"
#include "wjdd/nig.hpp"
#include "wjdd/prior.hpp"
#include "wjdd/train.hpp"

namespace py = pybind11;
using namespace wjdd;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image image_from_array(const DoubleArray& a) {
    if (a.ndim() != 3 || a.shape(0) != 3)
        throw py::value_error("expected an image array of shape (3, H, W)");
    Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
    std::memcpy(img.data.data(), a.data(), img.size() * sizeof(double));
    return img;
}

py::array_t<double> image_to_array(const Image& img) {
    py::array_t<double> a({3, img.height, img.width});
    std::memcpy(a.mutable_data(), img.data.data(), img.size() * sizeof(double));
    return a;
}

RawMosaic raw_from_array(const DoubleArray& a, const std::string& phase) {
    if (a.ndim() != 2) throw py::value_error("expected a raw array of shape (H, W)");
    RawMosaic raw(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                  cfa_phase_from_string(phase));
    std::memcpy(raw.data.data(), a.data(), raw.data.size() * sizeof(double));
    return raw;
}

py::array_t<double> raw_to_array(const RawMosaic& raw) {
    py::array_t<double> a({raw.height, raw.width});
    std::memcpy(a.mutable_data(), raw.data.data(), raw.data.size() * sizeof(double));
    return a;
}

NigField field_from_arrays(const DoubleArray& mean, const DoubleArray& lambda,
                           const DoubleArray& alpha, const DoubleArray& beta) {
    const Image m = image_from_array(mean);
    NigField f(m.height, m.width);
    f.mean = m;
    f.lambda = image_from_array(lambda);
    f.alpha = image_from_array(alpha);
    f.beta = image_from_array(beta);
    if (!f.mean.same_shape(f.lambda) || !f.mean.same_shape(f.alpha) ||
        !f.mean.same_shape(f.beta))
        throw py::value_error("field arrays must share one shape");
    f.validate();
    return f;
}

// Inference on a raw of any phase: unify to the canonical raster, run the
// network, map the outputs back.
std::pair<Image, Image> model_infer(const Network& net, const RawMosaic& raw) {
    const DihedralTransform ident{0};
    const auto [mean, noise] = posterior_estimates(net.forward(bayer_transform(raw, ident)));
    return {undo_bayer_transform_image(mean, ident), undo_bayer_transform_image(noise, ident)};
}

struct PyModel {
    Network net;
    nlohmann::json meta;

    explicit PyModel(const NetConfig& cfg) : net(cfg) {}
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Joint denoising and demosaicking of Bayer raws via "
              "normal-inverse-gamma posterior regression";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const IoError& e) {
            PyErr_SetString(PyExc_OSError, e.what());
        } catch (const UsageError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const ValidationError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        }
    });

    m.def(
        "mosaic",
        [](const DoubleArray& img, const std::string& phase) {
            return raw_to_array(mosaic(image_from_array(img), cfa_phase_from_string(phase)));
        },
        py::arg("image"), py::arg("phase") = "RGGB",
        "Subsample an RGB image (3, H, W) onto a Bayer raster (H, W).");

    m.def(
        "bilinear_demosaic",
        [](const DoubleArray& raw, const std::string& phase) {
            return image_to_array(bilinear_demosaic(raw_from_array(raw, phase)));
        },
        py::arg("raw"), py::arg("phase") = "RGGB",
        "Bilinear interpolation of a raw mosaic back to (3, H, W).");

    m.def(
        "add_noise",
        [](const DoubleArray& img, const std::string& kind, std::uint64_t seed, double sigma,
           double sigma_max, double smoothness, double range, double scale_a,
           double blur_sigma) {
            NoiseSpec ns;
            ns.kind = noise_kind_from_string(kind);
            ns.seed = seed;
            ns.sigma = sigma;
            ns.sigma_max = sigma_max;
            ns.smoothness = smoothness;
            ns.range = range;
            ns.scale_a = scale_a;
            ns.blur_sigma = blur_sigma;
            return image_to_array(add_noise(image_from_array(img), ns));
        },
        py::arg("image"), py::arg("kind"), py::arg("seed") = 0, py::arg("sigma") = 0.0,
        py::arg("sigma_max") = 0.0, py::arg("smoothness") = 0.0, py::arg("range") = 0.0,
        py::arg("scale_a") = 0.01, py::arg("blur_sigma") = 0.0,
        "Corrupt an image; kind is one of gaussian_iid, gaussian_spatial, uniform, "
        "poisson_gaussian, brown_gaussian. Amplitudes are on the [0, 1] scale.");

    m.def(
        "make_prior",
        [](const DoubleArray& noisy, const DoubleArray& reference, double lam, int window,
           double sigma_spatial, double sigma_range) {
            PriorConfig cfg;
            cfg.lambda = lam;
            cfg.window = window;
            cfg.bilateral_sigma_spatial = sigma_spatial;
            cfg.bilateral_sigma_range = sigma_range;
            const NigField p =
                make_prior(image_from_array(noisy), image_from_array(reference), cfg);
            return py::make_tuple(image_to_array(p.mean), image_to_array(p.lambda),
                                  image_to_array(p.alpha), image_to_array(p.beta));
        },
        py::arg("noisy"), py::arg("reference"), py::arg("lam") = 2000.0, py::arg("window") = 19,
        py::arg("sigma_spatial") = 0.0, py::arg("sigma_range") = 0.0,
        "Conjugate prior (mean, lambda, alpha, beta) from a noisy/reference pair.");

    m.def(
        "kl",
        [](const DoubleArray& qm, const DoubleArray& ql, const DoubleArray& qa,
           const DoubleArray& qb, const DoubleArray& pm, const DoubleArray& pl,
           const DoubleArray& pa, const DoubleArray& pb) {
            return image_to_array(kl_nig(field_from_arrays(qm, ql, qa, qb),
                                         field_from_arrays(pm, pl, pa, pb)));
        },
        py::arg("q_mean"), py::arg("q_lambda"), py::arg("q_alpha"), py::arg("q_beta"),
        py::arg("p_mean"), py::arg("p_lambda"), py::arg("p_alpha"), py::arg("p_beta"),
        "Per-pixel KL divergence between two normal-inverse-gamma fields.");

    m.def(
        "elbo",
        [](const DoubleArray& qm, const DoubleArray& ql, const DoubleArray& qa,
           const DoubleArray& qb, const DoubleArray& pm, const DoubleArray& pl,
           const DoubleArray& pa, const DoubleArray& pb, const DoubleArray& x_tilde,
           const std::string& variant) {
            const ElboBreakdown bd = elbo_loss(
                field_from_arrays(qm, ql, qa, qb), field_from_arrays(pm, pl, pa, pb),
                image_from_array(x_tilde), loss_variant_from_string(variant));
            py::dict d;
            d["kl"] = bd.kl;
            d["expectation"] = bd.expectation;
            d["elbo"] = bd.elbo;
            return d;
        },
        py::arg("q_mean"), py::arg("q_lambda"), py::arg("q_alpha"), py::arg("q_beta"),
        py::arg("p_mean"), py::arg("p_lambda"), py::arg("p_alpha"), py::arg("p_beta"),
        py::arg("x_tilde"), py::arg("variant") = "paper_literal",
        "Summed ELBO of a posterior field against a prior and observation.");

    m.def(
        "psnr",
        [](const DoubleArray& a, const DoubleArray& b, double peak) {
            return psnr(image_from_array(a), image_from_array(b), peak);
        },
        py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);

    m.def(
        "ssim",
        [](const DoubleArray& a, const DoubleArray& b) {
            return ssim(image_from_array(a), image_from_array(b));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "cartoon",
        [](int height, int width) { return image_to_array(cartoon_test_image(height, width)); },
        py::arg("height") = 64, py::arg("width") = 64,
        "Deterministic piecewise-constant test image.");

    m.def(
        "procedural_dataset",
        [](int count, int height, int width, std::uint64_t seed) {
            py::list out;
            for (const Image& img : procedural_dataset(count, height, width, seed))
                out.append(image_to_array(img));
            return out;
        },
        py::arg("count"), py::arg("height") = 64, py::arg("width") = 64, py::arg("seed") = 0,
        "Seeded synthetic training images (gradients, waves, polygons).");

    py::class_<PyModel>(m, "Model")
        .def(py::init([](int channels, int grdb_blocks, int grdb_layers, int growth) {
                 NetConfig cfg;
                 cfg.channels = channels;
                 cfg.grdb_blocks = grdb_blocks;
                 cfg.grdb_layers = grdb_layers;
                 cfg.growth = growth;
                 return PyModel(cfg);
             }),
             py::arg("channels") = 16, py::arg("grdb_blocks") = 2, py::arg("grdb_layers") = 3,
             py::arg("growth") = 16, "Fresh model with zero weights.")
        .def("init_weights", [](PyModel& self, std::uint64_t seed) { self.net.init_weights(seed); },
             py::arg("seed") = 0)
        .def("num_params", [](const PyModel& self) { return self.net.num_params(); })
        .def("config",
             [](const PyModel& self) {
                 const NetConfig& c = self.net.config();
                 py::dict d;
                 d["channels"] = c.channels;
                 d["grdb_blocks"] = c.grdb_blocks;
                 d["grdb_layers"] = c.grdb_layers;
                 d["growth"] = c.growth;
                 return d;
             })
        .def("meta_json", [](const PyModel& self) { return self.meta.dump(); },
             "Training metadata of a loaded checkpoint as a JSON string.")
        .def(
            "save",
            [](const PyModel& self, const std::string& path) {
                save_checkpoint(path, self.net, self.meta);
            },
            py::arg("path"))
        .def_static(
            "load",
            [](const std::string& path) {
                LoadedCheckpoint lc = load_checkpoint(path);
                PyModel m(lc.net.config());
                m.net = std::move(lc.net);
                m.meta = std::move(lc.training_meta);
                return m;
            },
            py::arg("path"))
        .def(
            "infer",
            [](const PyModel& self, const DoubleArray& raw, const std::string& phase) {
                const auto [mean, noise] = model_infer(self.net, raw_from_array(raw, phase));
                return py::make_tuple(image_to_array(mean), image_to_array(noise));
            },
            py::arg("raw"), py::arg("phase") = "RGGB",
            "Restore a raw mosaic; returns (restored, noise_variance) arrays.")
        .def(
            "infer_ensemble",
            [](const PyModel& self, const DoubleArray& raw, const std::string& phase) {
                Image avg = self_ensemble(
                    [&](const RawMosaic& r) { return self.net.forward(r).mean; },
                    raw_from_array(raw, phase));
                for (double& v : avg.data) v = clamp01(v);
                return image_to_array(avg);
            },
            py::arg("raw"), py::arg("phase") = "RGGB",
            "Restore with the mean over all 8 dihedral branches.");
}

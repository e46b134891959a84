// Python bindings for the core operations: fixture generation, the small
// classifier, Group-CAM / Grad-CAM, the evaluation protocols and the
// fine-tune augmenter. Images are (C, H, W) float64 arrays in [0, 1];
// saliency maps are (H, W) float64 arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "groupcam/evaluation.hpp"
#include "groupcam/finetune.hpp"
#include "groupcam/fixture.hpp"
#include "groupcam/imgproc.hpp"
#include "groupcam/io.hpp"
#include "groupcam/saliency.hpp"

namespace py = pybind11;
using namespace groupcam;

namespace {

ImageTensor to_image(const py::array_t<double, py::array::c_style>& arr) {
    if (arr.ndim() != 3) throw std::invalid_argument("image must be (C, H, W)");
    ImageTensor img(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
                    static_cast<int>(arr.shape(2)));
    std::copy(arr.data(), arr.data() + arr.size(), img.data.begin());
    return img;
}

py::array_t<double> from_image(const ImageTensor& img) {
    py::array_t<double> arr({img.channels, img.height, img.width});
    std::copy(img.data.begin(), img.data.end(), arr.mutable_data());
    return arr;
}

Map2D to_map(const py::array_t<double, py::array::c_style>& arr) {
    if (arr.ndim() != 2) throw std::invalid_argument("map must be (H, W)");
    Map2D m(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
    std::copy(arr.data(), arr.data() + arr.size(), m.data.begin());
    return m;
}

py::array_t<double> from_map(const Map2D& m) {
    py::array_t<double> arr({m.height, m.width});
    std::copy(m.data.begin(), m.data.end(), arr.mutable_data());
    return arr;
}

SaliencyMap wrap_saliency(const py::array_t<double, py::array::c_style>& arr,
                          int class_index) {
    SaliencyMap s;
    s.map = to_map(arr);
    s.class_index = class_index;
    s.method = "external";
    return s;
}

std::vector<FixtureSample> to_samples(const std::vector<py::array_t<double>>& images,
                                      const std::vector<int>& labels) {
    if (images.size() != labels.size())
        throw std::invalid_argument("images and labels must have equal length");
    std::vector<FixtureSample> out(images.size());
    for (size_t i = 0; i < images.size(); ++i) {
        out[i].image = to_image(images[i]);
        out[i].label = labels[i];
    }
    return out;
}

GroupCamConfig make_config(int groups, double theta, bool denoise, int ksize,
                           double sigma, const std::string& layer) {
    GroupCamConfig cfg;
    cfg.groups = groups;
    cfg.theta = theta;
    cfg.denoise_enabled = denoise;
    cfg.ksize = ksize;
    cfg.sigma = sigma;
    cfg.layer_id = layer;
    return cfg;
}

py::dict curve_dict(const CurveResult& c) {
    py::dict d;
    d["fractions"] = c.fractions;
    d["scores"] = c.scores;
    d["auc"] = c.auc;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Group-CAM saliency toolkit";

    py::class_<FixtureAdapter>(m, "Model")
        .def_static(
            "load",
            [](const std::string& path) {
                return FixtureAdapter(SmallConvNet::load(path));
            },
            py::arg("path"))
        .def("save",
             [](const FixtureAdapter& a, const std::string& path) {
                 a.net().save(path);
             })
        .def("layer_catalog", &FixtureAdapter::layer_catalog)
        .def("default_target_layer", &FixtureAdapter::default_target_layer)
        .def("num_classes", &FixtureAdapter::num_classes)
        .def("input_shape", &FixtureAdapter::input_shape)
        .def_property_readonly("query_count", &FixtureAdapter::query_count)
        .def("reset_query_count", &FixtureAdapter::reset_query_count)
        .def(
            "class_scores",
            [](FixtureAdapter& a, const py::array_t<double, py::array::c_style>& img) {
                return a.class_scores(to_image(img));
            },
            py::arg("image"))
        .def(
            "randomize_parameters",
            [](const FixtureAdapter& a, const std::string& layer, std::uint64_t seed) {
                auto copy = a.randomize_parameters(layer, seed);
                return FixtureAdapter(*dynamic_cast<FixtureAdapter*>(copy.get()));
            },
            py::arg("layer"), py::arg("seed"));

    m.def(
        "generate_fixtures",
        [](std::uint64_t seed, int n, int height, int width) {
            FixtureDatasetSpec spec;
            spec.seed = seed;
            spec.height = height;
            spec.width = width;
            const auto data = generate_fixture_dataset(spec, n);
            py::list images, labels, bboxes;
            for (const auto& s : data) {
                images.append(from_image(s.image));
                labels.append(s.label);
                bboxes.append(py::make_tuple(s.bbox.x, s.bbox.y, s.bbox.w, s.bbox.h));
            }
            return py::make_tuple(images, labels, bboxes);
        },
        py::arg("seed"), py::arg("n"), py::arg("height") = 64, py::arg("width") = 64,
        "Deterministic squares-vs-circles dataset; returns (images, labels, bboxes).");

    m.def(
        "train_fixture_model",
        [](const std::vector<py::array_t<double>>& images,
           const std::vector<int>& labels, int epochs, std::uint64_t seed,
           double target_accuracy) {
            TrainConfig cfg;
            cfg.target_accuracy = target_accuracy;
            TrainReport rep;
            auto adapter =
                train_fixture_model(to_samples(images, labels), epochs, seed, &rep, cfg);
            py::dict report;
            report["final_holdout_accuracy"] = rep.final_holdout_accuracy;
            report["epoch_loss"] = rep.epoch_losses;
            report["epoch_holdout_accuracy"] = rep.epoch_holdout_accuracy;
            return py::make_tuple(std::move(adapter), report);
        },
        py::arg("images"), py::arg("labels"), py::arg("epochs") = 40,
        py::arg("seed") = 1234, py::arg("target_accuracy") = 0.95);

    m.def(
        "group_cam",
        [](FixtureAdapter& model, const py::array_t<double, py::array::c_style>& img,
           int class_index, int groups, double theta, bool denoise, int ksize,
           double sigma, const std::string& layer) {
            const auto [sal, scores] =
                group_cam(model, to_image(img), class_index,
                          make_config(groups, theta, denoise, ksize, sigma, layer));
            std::vector<double> alphas;
            for (const auto& g : scores) alphas.push_back(g.alpha);
            return py::make_tuple(from_map(sal.map), alphas);
        },
        py::arg("model"), py::arg("image"), py::arg("class_index"),
        py::arg("groups") = 32, py::arg("theta") = 70.0, py::arg("denoise") = true,
        py::arg("ksize") = 51, py::arg("sigma") = 50.0, py::arg("layer") = "",
        "Returns (saliency, per-group confidence gains). Exactly groups+2 queries.");

    m.def(
        "grad_cam",
        [](FixtureAdapter& model, const py::array_t<double, py::array::c_style>& img,
           int class_index, const std::string& layer) {
            return from_map(grad_cam(model, to_image(img), class_index, layer).map);
        },
        py::arg("model"), py::arg("image"), py::arg("class_index"),
        py::arg("layer") = "");

    m.def(
        "finetune_mask",
        [](FixtureAdapter& model, const py::array_t<double, py::array::c_style>& img,
           int class_index, int groups, int ksize, double sigma,
           const std::string& layer) {
            return from_map(
                finetune_mask(model, to_image(img), class_index, groups, ksize,
                              sigma, layer));
        },
        py::arg("model"), py::arg("image"), py::arg("class_index"),
        py::arg("groups") = 16, py::arg("ksize") = 51, py::arg("sigma") = 50.0,
        py::arg("layer") = "",
        "Binary mask from the gradient-free variant. Exactly groups+1 queries.");

    m.def(
        "augment_image",
        [](FixtureAdapter& model, const py::array_t<double, py::array::c_style>& img,
           int label, int groups, int ksize, double sigma) {
            AugmentConfig cfg;
            cfg.groups = groups;
            cfg.ksize = ksize;
            cfg.sigma = sigma;
            return from_image(augment_image(model, to_image(img), label, cfg));
        },
        py::arg("model"), py::arg("image"), py::arg("label"), py::arg("groups") = 16,
        py::arg("ksize") = 51, py::arg("sigma") = 50.0);

    m.def(
        "deletion_curve",
        [](FixtureAdapter& model, const py::array_t<double, py::array::c_style>& img,
           const py::array_t<double, py::array::c_style>& saliency, int class_index,
           double step_fraction, int ksize, double sigma) {
            return curve_dict(deletion_curve(model, to_image(img),
                                             wrap_saliency(saliency, class_index),
                                             class_index, step_fraction, ksize,
                                             sigma));
        },
        py::arg("model"), py::arg("image"), py::arg("saliency"),
        py::arg("class_index"), py::arg("step_fraction") = kDefaultStepFraction,
        py::arg("ksize") = 51, py::arg("sigma") = 50.0);

    m.def(
        "insertion_curve",
        [](FixtureAdapter& model, const py::array_t<double, py::array::c_style>& img,
           const py::array_t<double, py::array::c_style>& saliency, int class_index,
           double step_fraction, int ksize, double sigma) {
            return curve_dict(insertion_curve(model, to_image(img),
                                              wrap_saliency(saliency, class_index),
                                              class_index, step_fraction, ksize,
                                              sigma));
        },
        py::arg("model"), py::arg("image"), py::arg("saliency"),
        py::arg("class_index"), py::arg("step_fraction") = kDefaultStepFraction,
        py::arg("ksize") = 51, py::arg("sigma") = 50.0);

    m.def("overall_score", &overall_score, py::arg("insertion_auc"),
          py::arg("deletion_auc"));

    m.def(
        "pointing_hit",
        [](const py::array_t<double, py::array::c_style>& saliency,
           const std::tuple<int, int, int, int>& bbox) {
            const auto sal = wrap_saliency(saliency, 0);
            const BBox box{std::get<0>(bbox), std::get<1>(bbox), std::get<2>(bbox),
                           std::get<3>(bbox)};
            return pointing_game(sal, {{"object", box}}).at("object");
        },
        py::arg("saliency"), py::arg("bbox"),
        "True iff the most salient pixel lies inside the (x, y, w, h) box.");

    m.def(
        "sanity_check",
        [](FixtureAdapter& model, const py::array_t<double, py::array::c_style>& img,
           int class_index, const std::string& mode, std::uint64_t seed, int groups) {
            GroupCamConfig cfg;
            cfg.groups = groups;
            const auto rep = sanity_check(
                model, to_image(img), class_index,
                cfg, mode == "independent" ? RandomizationMode::independent
                                           : RandomizationMode::cascade,
                seed);
            py::list out;
            for (const auto& e : rep.layers)
                out.append(py::make_tuple(e.layer_id, e.similarity));
            return out;
        },
        py::arg("model"), py::arg("image"), py::arg("class_index"),
        py::arg("mode") = "cascade", py::arg("seed") = 1234, py::arg("groups") = 32);

    m.def(
        "finetune_loop",
        [](const FixtureAdapter& model, const std::vector<py::array_t<double>>& images,
           const std::vector<int>& labels, int epochs, std::uint64_t seed,
           int groups) {
            FinetuneConfig cfg;
            cfg.augment.groups = groups;
            const auto rep =
                finetune_loop(model, to_samples(images, labels), epochs, seed, cfg);
            py::dict d;
            d["initial_accuracy"] = rep.initial_accuracy;
            d["augmented_accuracy"] = rep.augmented_accuracy;
            d["control_accuracy"] = rep.control_accuracy;
            d["augmented_train_loss"] = rep.augmented_train_loss;
            d["control_train_loss"] = rep.control_train_loss;
            return d;
        },
        py::arg("model"), py::arg("images"), py::arg("labels"), py::arg("epochs") = 5,
        py::arg("seed") = 1234, py::arg("groups") = 16);

    m.def(
        "gaussian_blur2d",
        [](const py::array_t<double, py::array::c_style>& img, int ksize,
           double sigma) { return from_image(gaussian_blur2d(to_image(img), ksize, sigma)); },
        py::arg("image"), py::arg("ksize") = 51, py::arg("sigma") = 50.0);

    m.def(
        "write_saliency_grid",
        [](const std::string& path, const py::array_t<double, py::array::c_style>& m) {
            write_saliency_grid(path, to_map(m));
        },
        py::arg("path"), py::arg("saliency"));
    m.def(
        "read_saliency_grid",
        [](const std::string& path) { return from_map(read_saliency_grid(path)); },
        py::arg("path"));
}

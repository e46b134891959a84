// Command-line front end: fixture generation, heatmap rendering, the
// evaluation protocols and the fine-tune demo. Every run is deterministic
// given its flags and writes its resolved config next to its outputs.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "groupcam/evaluation.hpp"
#include "groupcam/finetune.hpp"
#include "groupcam/fixture.hpp"
#include "groupcam/imgproc.hpp"
#include "groupcam/io.hpp"
#include "groupcam/saliency.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace groupcam;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
}

void write_config(const fs::path& out_dir, const json& cfg) {
    write_text(out_dir / "config.json", cfg.dump(2) + "\n");
}

struct EvalItem {
    std::string id;
    const FixtureSample* sample;
};

// ---------------------------------------------------------------------------
// make-fixtures
// ---------------------------------------------------------------------------

int cmd_make_fixtures(std::uint64_t seed, int n, int epochs,
                      const std::string& out) {
    const fs::path out_dir(out);
    fs::create_directories(out_dir);

    FixtureDatasetSpec spec;
    spec.seed = seed;
    const auto data = generate_fixture_dataset(spec, n);
    save_fixture_dataset(out_dir.string(), data, 0.2);

    TrainReport report;
    auto adapter = train_fixture_model(data, epochs, seed, &report);
    adapter.net().save((out_dir / "model.ckpt").string());
    write_text(out_dir / "train_report.json", train_report_to_json(report));

    write_config(out_dir, {{"command", "make-fixtures"},
                           {"seed", seed},
                           {"n", n},
                           {"epochs", epochs},
                           {"out", out}});
    std::printf("wrote %d samples, checkpoint and report to %s "
                "(holdout accuracy %.4f)\n",
                n, out.c_str(), report.final_holdout_accuracy);
    return 0;
}

// ---------------------------------------------------------------------------
// explain
// ---------------------------------------------------------------------------

int cmd_explain(const std::string& model_path, const std::string& image_path,
                int class_index, const std::string& method,
                const GroupCamConfig& cfg, double overlay_alpha, bool verbose,
                const std::string& out) {
    const fs::path out_dir(out);
    fs::create_directories(out_dir);

    FixtureAdapter adapter(SmallConvNet::load(model_path));
    const auto img = read_png(image_path);

    if (class_index < 0) {  // use the model's prediction
        const auto probs = adapter.class_scores(img);
        class_index = static_cast<int>(
            std::max_element(probs.begin(), probs.end()) - probs.begin());
        if (verbose)
            std::printf("predicted class %d (p=%.4f)\n", class_index,
                        probs[class_index]);
    } else if (class_index >= adapter.num_classes()) {
        throw std::invalid_argument("class index out of range");
    }

    SaliencyMap sal;
    if (method == "gradcam") {
        sal = grad_cam(adapter, img, class_index, cfg.layer_id);
    } else {
        auto [map, scores] = group_cam(adapter, img, class_index, cfg);
        sal = std::move(map);
        if (verbose) {
            std::printf("group  alpha\n");
            for (const auto& g : scores)
                std::printf("%5d  %+.6f\n", g.group_index, g.alpha);
        }
    }

    write_saliency_grid((out_dir / "saliency.bin").string(), sal.map);
    write_saliency_sidecar((out_dir / "saliency.json").string(), sal, cfg);
    write_png_gray((out_dir / "saliency_gray.png").string(), sal.map);
    write_png_rgb((out_dir / "overlay.png").string(),
                  colormap_overlay(img, sal.map, overlay_alpha));

    write_config(out_dir, {{"command", "explain"},
                           {"model", model_path},
                           {"image", image_path},
                           {"class", class_index},
                           {"method", method},
                           {"groups", cfg.groups},
                           {"theta", cfg.theta},
                           {"denoise", cfg.denoise_enabled},
                           {"ksize", cfg.ksize},
                           {"sigma", cfg.sigma},
                           {"layer", cfg.layer_id},
                           {"alpha", overlay_alpha},
                           {"out", out}});
    std::printf("wrote saliency grid and renderings to %s\n", out.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct AucRow {
    std::string id;
    double insertion = 0.0, deletion = 0.0;
};

int cmd_evaluate(const std::string& model_path, const std::string& data_dir,
                 const std::string& method, std::vector<std::string> metrics,
                 const GroupCamConfig& cfg, double step_fraction, int jobs,
                 std::uint64_t seed, const std::string& split,
                 const std::string& out) {
    const fs::path out_dir(out);
    fs::create_directories(out_dir);

    FixtureAdapter adapter(SmallConvNet::load(model_path));
    const auto dataset = load_fixture_dataset(data_dir);

    std::vector<EvalItem> items;
    for (size_t i = 0; i < dataset.samples.size(); ++i)
        if (split == "all" || dataset.entries[i].split == split)
            items.push_back({dataset.entries[i].id, &dataset.samples[i]});
    if (items.empty()) throw std::runtime_error("no samples in selected split");

    auto explain_one = [&](ModelAdapter& worker, const FixtureSample& s) {
        if (method == "gradcam")
            return grad_cam(worker, s.image, s.label, cfg.layer_id);
        return group_cam(worker, s.image, s.label, cfg).first;
    };

    const bool want_auc =
        std::find(metrics.begin(), metrics.end(), "auc") != metrics.end();
    const bool want_pointing =
        std::find(metrics.begin(), metrics.end(), "pointing") != metrics.end();
    const bool want_sanity =
        std::find(metrics.begin(), metrics.end(), "sanity") != metrics.end();

    std::vector<AucRow> auc_rows(items.size());
    std::vector<std::map<std::string, bool>> pointing_rows(items.size());

    if (want_auc || want_pointing) {
        const int workers = std::max(1, jobs);
        std::atomic<size_t> next{0};
        auto work = [&]() {
            auto local = adapter.clone();
            for (size_t i = next.fetch_add(1); i < items.size();
                 i = next.fetch_add(1)) {
                const auto& s = *items[i].sample;
                const auto sal = explain_one(*local, s);
                if (want_auc) {
                    const auto del = deletion_curve(*local, s.image, sal, s.label,
                                                    step_fraction, cfg.ksize,
                                                    cfg.sigma);
                    const auto ins = insertion_curve(*local, s.image, sal, s.label,
                                                     step_fraction, cfg.ksize,
                                                     cfg.sigma);
                    auc_rows[i] = {items[i].id, ins.auc, del.auc};
                }
                if (want_pointing)
                    pointing_rows[i] = pointing_game(
                        sal, {{fixture_class_name(s.label), s.bbox}});
            }
        };
        if (workers == 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < workers; ++t) pool.emplace_back(work);
            for (auto& t : pool) t.join();
        }
    }

    if (want_auc) {
        CsvWriter csv((out_dir / "auc.csv").string());
        csv.row({"image_id", "method", "insertion_auc", "deletion_auc", "overall"});
        double mean_ins = 0.0, mean_del = 0.0;
        for (const auto& r : auc_rows) {
            csv.row({r.id, method, CsvWriter::num(r.insertion),
                     CsvWriter::num(r.deletion),
                     CsvWriter::num(overall_score(r.insertion, r.deletion))});
            mean_ins += r.insertion;
            mean_del += r.deletion;
        }
        mean_ins /= auc_rows.size();
        mean_del /= auc_rows.size();
        std::printf("insertion %.4f  deletion %.4f  over-all %.4f  (%zu images)\n",
                    mean_ins, mean_del, mean_ins - mean_del, auc_rows.size());
    }

    if (want_pointing) {
        PointingResult agg;
        for (const auto& row : pointing_rows) agg.add(row);
        CsvWriter csv((out_dir / "pointing.csv").string());
        csv.row({"category", "hits", "misses", "accuracy"});
        for (const auto& [cat, st] : agg.categories)
            csv.row({cat, std::to_string(st.hits), std::to_string(st.misses),
                     CsvWriter::num(st.accuracy())});
        csv.row({"mean", "", "", CsvWriter::num(agg.mean_accuracy())});
        std::printf("pointing accuracy %.4f\n", agg.mean_accuracy());
    }

    if (want_sanity) {
        // One representative image per mode, full layer sweep each.
        const auto& s = *items[0].sample;
        for (const auto mode :
             {RandomizationMode::cascade, RandomizationMode::independent}) {
            const auto rep = sanity_check(adapter, s.image, s.label, cfg, mode, seed);
            json j;
            j["mode"] = mode == RandomizationMode::cascade ? "cascade" : "independent";
            j["image_id"] = items[0].id;
            j["layers"] = json::array();
            for (const auto& e : rep.layers)
                j["layers"].push_back(
                    {{"layer_id", e.layer_id}, {"similarity", e.similarity}});
            const std::string name =
                mode == RandomizationMode::cascade ? "sanity_cascade.json"
                                                   : "sanity_independent.json";
            write_text(out_dir / name, j.dump(2) + "\n");
            std::printf("sanity (%s): final similarity %.4f\n",
                        j["mode"].get<std::string>().c_str(),
                        rep.layers.back().similarity);
        }
    }

    write_config(out_dir, {{"command", "evaluate"},
                           {"model", model_path},
                           {"data", data_dir},
                           {"method", method},
                           {"metrics", metrics},
                           {"groups", cfg.groups},
                           {"theta", cfg.theta},
                           {"denoise", cfg.denoise_enabled},
                           {"ksize", cfg.ksize},
                           {"sigma", cfg.sigma},
                           {"layer", cfg.layer_id},
                           {"step_fraction", step_fraction},
                           {"jobs", jobs},
                           {"seed", seed},
                           {"split", split},
                           {"out", out}});
    return 0;
}

// ---------------------------------------------------------------------------
// finetune
// ---------------------------------------------------------------------------

int cmd_finetune(const std::string& model_path, const std::string& data_dir,
                 int epochs, std::uint64_t seed, bool render_epochs,
                 const std::string& out) {
    const fs::path out_dir(out);
    fs::create_directories(out_dir);

    FixtureAdapter adapter(SmallConvNet::load(model_path));
    const auto dataset = load_fixture_dataset(data_dir);

    FinetuneConfig cfg;
    std::vector<SmallConvNet> snapshots;
    const auto report =
        finetune_loop(adapter, dataset.samples, epochs, seed, cfg, nullptr,
                      nullptr, render_epochs ? &snapshots : nullptr);

    write_text(out_dir / "report.json", finetune_report_to_json(report));

    CsvWriter csv((out_dir / "curves.csv").string());
    csv.row({"epoch", "augmented_train_loss", "augmented_accuracy",
             "control_train_loss", "control_accuracy"});
    for (int e = 0; e < static_cast<int>(report.augmented_accuracy.size()); ++e)
        csv.row({std::to_string(e + 1),
                 CsvWriter::num(report.augmented_train_loss[e]),
                 CsvWriter::num(report.augmented_accuracy[e]),
                 CsvWriter::num(report.control_train_loss[e]),
                 CsvWriter::num(report.control_accuracy[e])});

    if (render_epochs && !dataset.samples.empty()) {
        // Saliency of one probe image as the model evolves across epochs.
        const auto& probe = dataset.samples.back();
        GroupCamConfig gc;
        {
            FixtureAdapter start_copy(adapter.net());
            auto [sal, scores] = group_cam(start_copy, probe.image, probe.label, gc);
            write_png_rgb((out_dir / "epoch_0_overlay.png").string(),
                          colormap_overlay(probe.image, sal.map, 0.5));
        }
        for (size_t e = 0; e < snapshots.size(); ++e) {
            FixtureAdapter snap(snapshots[e]);
            auto [sal, scores] = group_cam(snap, probe.image, probe.label, gc);
            write_png_rgb(
                (out_dir / ("epoch_" + std::to_string(e + 1) + "_overlay.png"))
                    .string(),
                colormap_overlay(probe.image, sal.map, 0.5));
        }
    }

    write_config(out_dir, {{"command", "finetune"},
                           {"model", model_path},
                           {"data", data_dir},
                           {"epochs", epochs},
                           {"seed", seed},
                           {"render_epochs", render_epochs},
                           {"out", out}});
    std::printf("fine-tune finished: initial %.4f", report.initial_accuracy);
    if (!report.augmented_accuracy.empty())
        std::printf(", augmented %.4f, control %.4f",
                    report.augmented_accuracy.back(),
                    report.control_accuracy.back());
    std::printf("\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Group-CAM saliency toolkit"};
    app.require_subcommand(1);

    // make-fixtures
    auto* mk = app.add_subcommand("make-fixtures",
                                  "generate the synthetic dataset and train the "
                                  "fixture classifier");
    std::uint64_t mk_seed = 1234;
    int mk_n = 300, mk_epochs = 40;
    std::string mk_out;
    mk->add_option("--seed", mk_seed, "dataset and training seed");
    mk->add_option("--n", mk_n, "number of samples to generate");
    mk->add_option("--epochs", mk_epochs, "training epoch budget");
    mk->add_option("--out", mk_out, "output directory")->required();

    // explain
    auto* ex = app.add_subcommand("explain", "write a saliency map for one image");
    std::string ex_model, ex_image, ex_method = "groupcam", ex_layer, ex_out;
    int ex_class = -1;
    GroupCamConfig ex_cfg;
    bool ex_no_denoise = false, ex_verbose = false;
    double ex_alpha = 0.5;
    ex->add_option("--model", ex_model, "checkpoint path")->required();
    ex->add_option("--image", ex_image, "input PNG")->required();
    ex->add_option("--class", ex_class, "class index (default: model argmax)");
    ex->add_option("--method", ex_method, "groupcam or gradcam")
        ->check(CLI::IsMember({"groupcam", "gradcam"}));
    ex->add_option("--groups", ex_cfg.groups, "number of groups");
    ex->add_option("--theta", ex_cfg.theta, "de-noise percentile");
    ex->add_option("--ksize", ex_cfg.ksize, "baseline blur kernel size");
    ex->add_option("--sigma", ex_cfg.sigma, "baseline blur sigma");
    ex->add_option("--layer", ex_layer, "target layer id");
    ex->add_option("--alpha", ex_alpha, "overlay blend alpha");
    ex->add_flag("--no-denoise", ex_no_denoise, "skip the de-noise step");
    ex->add_flag("--verbose", ex_verbose, "print the per-group alpha table");
    ex->add_option("--out", ex_out, "output directory")->required();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "run the evaluation protocols");
    std::string ev_model, ev_data, ev_method = "groupcam", ev_layer, ev_out,
                ev_split = "holdout";
    std::vector<std::string> ev_metrics = {"auc", "pointing", "sanity"};
    GroupCamConfig ev_cfg;
    double ev_step = kDefaultStepFraction;
    int ev_jobs = 1;
    std::uint64_t ev_seed = 1234;
    bool ev_no_denoise = false;
    ev->add_option("--model", ev_model, "checkpoint path")->required();
    ev->add_option("--data", ev_data, "fixture dataset directory")->required();
    ev->add_option("--method", ev_method, "groupcam or gradcam")
        ->check(CLI::IsMember({"groupcam", "gradcam"}));
    ev->add_option("--metrics", ev_metrics, "any of: auc pointing sanity")
        ->delimiter(',');
    ev->add_option("--groups", ev_cfg.groups, "number of groups");
    ev->add_option("--theta", ev_cfg.theta, "de-noise percentile");
    ev->add_option("--ksize", ev_cfg.ksize, "baseline blur kernel size");
    ev->add_option("--sigma", ev_cfg.sigma, "baseline blur sigma");
    ev->add_option("--layer", ev_layer, "target layer id");
    ev->add_option("--step-fraction", ev_step, "pixel fraction per curve step");
    ev->add_option("--jobs", ev_jobs, "parallel workers");
    ev->add_option("--seed", ev_seed, "randomization seed for sanity checks");
    ev->add_option("--split", ev_split, "train, holdout or all")
        ->check(CLI::IsMember({"train", "holdout", "all"}));
    ev->add_flag("--no-denoise", ev_no_denoise, "skip the de-noise step");
    ev->add_option("--out", ev_out, "output directory")->required();

    // finetune
    auto* ft = app.add_subcommand("finetune", "paired control/augmented fine-tune");
    std::string ft_model, ft_data, ft_out;
    int ft_epochs = 5;
    std::uint64_t ft_seed = 1234;
    bool ft_render = false;
    ft->add_option("--model", ft_model, "checkpoint path")->required();
    ft->add_option("--data", ft_data, "fixture dataset directory")->required();
    ft->add_option("--epochs", ft_epochs, "fine-tune epochs");
    ft->add_option("--seed", ft_seed, "shuffling seed");
    ft->add_flag("--render-epochs", ft_render, "write per-epoch saliency overlays");
    ft->add_option("--out", ft_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*mk) return cmd_make_fixtures(mk_seed, mk_n, mk_epochs, mk_out);
        if (*ex) {
            ex_cfg.denoise_enabled = !ex_no_denoise;
            ex_cfg.layer_id = ex_layer;
            return cmd_explain(ex_model, ex_image, ex_class, ex_method, ex_cfg,
                               ex_alpha, ex_verbose, ex_out);
        }
        if (*ev) {
            ev_cfg.denoise_enabled = !ev_no_denoise;
            ev_cfg.layer_id = ev_layer;
            for (const auto& m : ev_metrics)
                if (m != "auc" && m != "pointing" && m != "sanity")
                    throw std::invalid_argument("unknown metric: " + m);
            return cmd_evaluate(ev_model, ev_data, ev_method, ev_metrics, ev_cfg,
                                ev_step, ev_jobs, ev_seed, ev_split, ev_out);
        }
        if (*ft)
            return cmd_finetune(ft_model, ft_data, ft_epochs, ft_seed, ft_render,
                                ft_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

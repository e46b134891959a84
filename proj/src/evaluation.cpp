#include "groupcam/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "groupcam/imgproc.hpp"
#include "groupcam/rng.hpp"

namespace groupcam {

namespace {

double trapezoid_auc(const std::vector<double>& fractions,
                     const std::vector<double>& scores) {
    double auc = 0.0;
    for (size_t i = 1; i < fractions.size(); ++i)
        auc += (fractions[i] - fractions[i - 1]) * (scores[i] + scores[i - 1]) * 0.5;
    return auc;
}

// Pixel indices by descending saliency, ties broken by ascending row-major
// index so runs are bit-reproducible.
std::vector<size_t> ranked_pixels(const Map2D& sal) {
    std::vector<size_t> order(sal.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&sal](size_t a, size_t b) {
        if (sal.data[a] != sal.data[b]) return sal.data[a] > sal.data[b];
        return a < b;
    });
    return order;
}

CurveResult perturbation_curve(ModelAdapter& adapter, const ImageTensor& img,
                               const SaliencyMap& saliency, int class_index,
                               double step_fraction, int ksize, double sigma,
                               bool deletion) {
    require(step_fraction > 0.0 && step_fraction <= 1.0,
            "curve: step_fraction must be in (0, 1]");
    require(saliency.map.height == img.height && saliency.map.width == img.width,
            "curve: saliency dims must equal image dims");

    const ImageTensor blurred = gaussian_blur2d(img, ksize, sigma);
    const std::vector<size_t> order = ranked_pixels(saliency.map);
    const size_t n = order.size();
    const size_t plane = n;

    ImageTensor work = deletion ? img : blurred;
    const ImageTensor& source = deletion ? blurred : img;

    CurveResult res;
    res.fractions.push_back(0.0);
    res.scores.push_back(adapter.class_score(work, class_index));

    const int total_steps = static_cast<int>(std::ceil(1.0 / step_fraction));
    size_t done = 0;
    for (int t = 1; t <= total_steps; ++t) {
        size_t target = (t == total_steps)
                            ? n
                            : std::min(n, static_cast<size_t>(
                                              std::ceil(t * step_fraction * n)));
        for (; done < target; ++done) {
            const size_t p = order[done];
            for (int c = 0; c < img.channels; ++c)
                work.data[c * plane + p] = source.data[c * plane + p];
        }
        res.fractions.push_back(static_cast<double>(done) / n);
        res.scores.push_back(adapter.class_score(work, class_index));
    }

    res.auc = trapezoid_auc(res.fractions, res.scores);
    return res;
}

}  // namespace

CurveResult deletion_curve(ModelAdapter& adapter, const ImageTensor& img,
                           const SaliencyMap& saliency, int class_index,
                           double step_fraction, int ksize, double sigma) {
    return perturbation_curve(adapter, img, saliency, class_index, step_fraction,
                              ksize, sigma, /*deletion=*/true);
}

CurveResult insertion_curve(ModelAdapter& adapter, const ImageTensor& img,
                            const SaliencyMap& saliency, int class_index,
                            double step_fraction, int ksize, double sigma) {
    return perturbation_curve(adapter, img, saliency, class_index, step_fraction,
                              ksize, sigma, /*deletion=*/false);
}

double overall_score(double insertion_auc, double deletion_auc) {
    require(insertion_auc >= 0.0 && insertion_auc <= 1.0 &&
                deletion_auc >= 0.0 && deletion_auc <= 1.0,
            "overall_score: AUCs must be in [0, 1]");
    return insertion_auc - deletion_auc;
}

std::pair<int, int> argmax_pixel(const Map2D& m) {
    size_t best = 0;
    for (size_t i = 1; i < m.size(); ++i)
        if (m.data[i] > m.data[best]) best = i;
    return {static_cast<int>(best / m.width), static_cast<int>(best % m.width)};
}

std::map<std::string, bool> pointing_game(
    const SaliencyMap& saliency,
    const std::vector<std::pair<std::string, BBox>>& boxes) {
    require(!boxes.empty(), "pointing_game: bbox list must not be empty");
    const auto [y, x] = argmax_pixel(saliency.map);

    std::map<std::string, bool> out;
    for (const auto& [cat, box] : boxes) {
        const bool inside = box.contains(x, y);
        auto it = out.find(cat);
        if (it == out.end()) out[cat] = inside;
        else it->second = it->second || inside;  // union over the category's boxes
    }
    return out;
}

double spearman(const Map2D& a, const Map2D& b) {
    require(a.size() == b.size(), "spearman: size mismatch");
    if (a.data == b.data) return 1.0;

    auto ranks = [](const std::vector<double>& v) {
        const size_t n = v.size();
        std::vector<size_t> order(n);
        std::iota(order.begin(), order.end(), size_t{0});
        std::sort(order.begin(), order.end(),
                  [&v](size_t i, size_t j) { return v[i] < v[j]; });
        std::vector<double> r(n);
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
            const double avg = 0.5 * (i + j) + 1.0;  // average rank for ties
            for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
            i = j + 1;
        }
        return r;
    };

    const auto ra = ranks(a.data);
    const auto rb = ranks(b.data);
    const size_t n = ra.size();
    const double mean = (n + 1) * 0.5;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double da = ra[i] - mean, db = rb[i] - mean;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va == 0.0 || vb == 0.0) return 0.0;  // constant map: no ranking signal
    return cov / std::sqrt(va * vb);
}

SanityReport sanity_check(ModelAdapter& adapter, const ImageTensor& img,
                          int class_index, const GroupCamConfig& config,
                          RandomizationMode mode, std::uint64_t seed) {
    SanityReport report;
    report.mode = mode;

    const Map2D reference = group_cam(adapter, img, class_index, config).first.map;

    // Self-comparison row: recompute from an untouched copy.
    {
        auto self = adapter.clone();
        const Map2D again = group_cam(*self, img, class_index, config).first.map;
        report.layers.push_back({"none", spearman(reference, again)});
    }

    std::vector<std::string> catalog = adapter.layer_catalog();
    std::reverse(catalog.begin(), catalog.end());  // deepest first

    std::unique_ptr<ModelAdapter> cascade;
    for (size_t i = 0; i < catalog.size(); ++i) {
        const std::uint64_t layer_seed = Rng::mix(seed, i);
        std::unique_ptr<ModelAdapter> perturbed;
        if (mode == RandomizationMode::cascade) {
            cascade = (i == 0 ? adapter.randomize_parameters(catalog[i], layer_seed)
                              : cascade->randomize_parameters(catalog[i], layer_seed));
            perturbed = cascade->clone();
        } else {
            perturbed = adapter.randomize_parameters(catalog[i], layer_seed);
        }
        const Map2D sal = group_cam(*perturbed, img, class_index, config).first.map;
        report.layers.push_back({catalog[i], spearman(reference, sal)});
    }
    return report;
}

}  // namespace groupcam

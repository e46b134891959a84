#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "groupcam/fixture.hpp"
#include "groupcam/model.hpp"
#include "groupcam/saliency.hpp"
#include "groupcam/tensor.hpp"

namespace groupcam {

// Default per-step pixel fraction for deletion/insertion (224*8 pixels of a
// 224x224 image).
inline constexpr double kDefaultStepFraction = 8.0 / 224.0;

struct CurveResult {
    std::vector<double> fractions;  // ascending, first 0, last 1
    std::vector<double> scores;     // post-softmax probability per step
    double auc = 0.0;               // trapezoid over the fraction axis
};

// Pixels ranked by descending saliency (ties by ascending row-major index);
// each step replaces the next batch of original pixels with the blurred
// image's pixels. Scores recorded before any deletion and after each step.
// ceil(1/step_fraction) + 1 forward evaluations.
CurveResult deletion_curve(ModelAdapter& adapter, const ImageTensor& img,
                           const SaliencyMap& saliency, int class_index,
                           double step_fraction = kDefaultStepFraction,
                           int ksize = 51, double sigma = 50.0);

// Starts from the fully blurred image and restores ranked original pixels.
CurveResult insertion_curve(ModelAdapter& adapter, const ImageTensor& img,
                            const SaliencyMap& saliency, int class_index,
                            double step_fraction = kDefaultStepFraction,
                            int ksize = 51, double sigma = 50.0);

// insertion AUC - deletion AUC.
double overall_score(double insertion_auc, double deletion_auc);

// Row-major index of the most salient pixel (ties -> smallest index).
std::pair<int, int> argmax_pixel(const Map2D& m);  // (y, x)

// Hit per category iff the most salient pixel lies inside the union of that
// category's boxes, inclusive boundaries.
std::map<std::string, bool> pointing_game(
    const SaliencyMap& saliency,
    const std::vector<std::pair<std::string, BBox>>& boxes);

// Accumulated pointing-game outcomes across images.
struct PointingResult {
    struct CategoryStat {
        int hits = 0;
        int misses = 0;
        double accuracy() const {
            return hits + misses > 0
                       ? static_cast<double>(hits) / (hits + misses)
                       : 0.0;
        }
    };
    std::map<std::string, CategoryStat> categories;

    void add(const std::map<std::string, bool>& outcome) {
        for (const auto& [cat, hit] : outcome) {
            if (hit) ++categories[cat].hits;
            else ++categories[cat].misses;
        }
    }
    // Mean over categories with at least one sample.
    double mean_accuracy() const {
        if (categories.empty()) return 0.0;
        double sum = 0.0;
        for (const auto& [cat, st] : categories) sum += st.accuracy();
        return sum / categories.size();
    }
};

enum class RandomizationMode { cascade, independent };

struct SanityReport {
    RandomizationMode mode = RandomizationMode::cascade;
    struct Entry {
        std::string layer_id;  // "none" for the un-randomized reference row
        double similarity = 0.0;
    };
    std::vector<Entry> layers;
};

// Spearman rank correlation of the flattened maps; average ranks for ties.
// Bitwise-identical maps compare as 1.0; otherwise a constant map on either
// side yields 0.0 (no ranking information).
double spearman(const Map2D& a, const Map2D& b);

// Cascade mode randomizes layers cumulatively from deepest to shallowest;
// independent mode randomizes one layer at a time from a fresh copy. The
// first report row is the un-randomized self-comparison.
SanityReport sanity_check(ModelAdapter& adapter, const ImageTensor& img,
                          int class_index, const GroupCamConfig& config,
                          RandomizationMode mode, std::uint64_t seed);

}  // namespace groupcam

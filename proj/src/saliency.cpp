#include "groupcam/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "groupcam/imgproc.hpp"

namespace groupcam {

std::vector<double> importance_weights(const ActivationBundle& bundle) {
    require(!bundle.gradients.empty(), "importance_weights: bundle has no gradients");
    const int K = bundle.channels;
    const int Z = bundle.spatial_size();
    std::vector<double> w(K, 0.0);
    for (int k = 0; k < K; ++k) {
        double acc = 0.0;
        const double* g = bundle.gradients.data() + static_cast<size_t>(k) * Z;
        for (int i = 0; i < Z; ++i) acc += g[i];
        w[k] = acc / Z;
    }
    return w;
}

std::vector<Map2D> grouped_masks(const ActivationBundle& bundle,
                                 const std::vector<double>& weights, int groups) {
    const int K = bundle.channels;
    require(groups >= 1 && groups <= K, "grouped_masks: need 1 <= groups <= channels");
    require(static_cast<int>(weights.size()) == K,
            "grouped_masks: weights size must equal channel count");

    const int h = bundle.height, w = bundle.width;
    const int Z = h * w;
    const int per_group = K / groups;  // remainder channels join the last group

    std::vector<Map2D> masks;
    masks.reserve(groups);
    for (int g = 0; g < groups; ++g) {
        const int k0 = g * per_group;
        const int k1 = (g == groups - 1) ? K : (g + 1) * per_group;
        Map2D m(h, w);
        for (int k = k0; k < k1; ++k) {
            const double wk = weights[k];
            const double* a = bundle.activations.data() + static_cast<size_t>(k) * Z;
            for (int i = 0; i < Z; ++i) m.data[i] += wk * a[i];
        }
        for (double& v : m.data) v = v > 0.0 ? v : 0.0;
        masks.push_back(std::move(m));
    }
    return masks;
}

double confidence_gain(ModelAdapter& adapter, const ImageTensor& original,
                       const ImageTensor& baseline, const Map2D& mask,
                       int class_index) {
    const ImageTensor blended = blend(original, baseline, mask);
    const double masked_score = adapter.class_score(blended, class_index);
    const double base_score = adapter.class_score(baseline, class_index);
    return masked_score - base_score;
}

namespace {

Map2D relu_map(Map2D m) {
    for (double& v : m.data) v = v > 0.0 ? v : 0.0;
    return m;
}

}  // namespace

std::pair<SaliencyMap, std::vector<GroupScore>> group_cam(
    ModelAdapter& adapter, const ImageTensor& img, int class_index,
    const GroupCamConfig& config) {
    const std::string layer =
        config.layer_id.empty() ? adapter.default_target_layer() : config.layer_id;

    const ActivationBundle bundle =
        adapter.activations_with_gradients(img, class_index, layer);
    const std::vector<double> weights = importance_weights(bundle);
    const std::vector<Map2D> raw_masks =
        grouped_masks(bundle, weights, config.groups);

    const ImageTensor baseline = gaussian_blur2d(img, config.ksize, config.sigma);
    const double base_score = adapter.class_score(baseline, class_index);

    Map2D accum(img.height, img.width);
    std::vector<GroupScore> scores;
    scores.reserve(raw_masks.size());

    for (int g = 0; g < static_cast<int>(raw_masks.size()); ++g) {
        Map2D m = raw_masks[g];
        if (config.denoise_enabled) m = denoise(m, config.theta);
        m = minmax_normalize(m);
        Map2D up = bilinear_upsample(m, img.height, img.width);

        const ImageTensor blended = blend(img, baseline, up);
        const double alpha = adapter.class_score(blended, class_index) - base_score;

        for (size_t i = 0; i < accum.size(); ++i) accum.data[i] += alpha * up.data[i];
        scores.push_back({g, alpha, std::move(up)});
    }

    SaliencyMap out;
    out.map = minmax_normalize(relu_map(std::move(accum)));
    out.class_index = class_index;
    out.method = "groupcam";
    return {std::move(out), std::move(scores)};
}

SaliencyMap grad_cam(ModelAdapter& adapter, const ImageTensor& img,
                     int class_index, const std::string& layer_id) {
    const std::string layer =
        layer_id.empty() ? adapter.default_target_layer() : layer_id;

    const ActivationBundle bundle =
        adapter.activations_with_gradients(img, class_index, layer);
    const std::vector<double> weights = importance_weights(bundle);
    // Single group over all channels: ReLU of the full weighted sum.
    const Map2D cam = grouped_masks(bundle, weights, 1)[0];

    SaliencyMap out;
    out.map = minmax_normalize(bilinear_upsample(cam, img.height, img.width));
    out.class_index = class_index;
    out.method = "gradcam";
    return out;
}

Map2D finetune_mask(ModelAdapter& adapter, const ImageTensor& img,
                    int class_index, int groups, int ksize, double sigma,
                    const std::string& layer_id) {
    const std::string layer =
        layer_id.empty() ? adapter.default_target_layer() : layer_id;

    const ActivationBundle bundle = adapter.activations(img, layer);
    const std::vector<double> ones(bundle.channels, 1.0);
    const std::vector<Map2D> raw_masks = grouped_masks(bundle, ones, groups);

    const ImageTensor baseline = gaussian_blur2d(img, ksize, sigma);

    // Masked-input scores are used as weights directly; scoring the blurred
    // baseline as well would cost one extra query over the G+1 budget.
    Map2D accum(img.height, img.width);
    for (const Map2D& raw : raw_masks) {
        Map2D up = bilinear_upsample(minmax_normalize(raw), img.height, img.width);
        const ImageTensor blended = blend(img, baseline, up);
        const double alpha = adapter.class_score(blended, class_index);
        for (size_t i = 0; i < accum.size(); ++i) accum.data[i] += alpha * up.data[i];
    }

    Map2D m = minmax_normalize(relu_map(std::move(accum)));
    const double mean =
        std::accumulate(m.data.begin(), m.data.end(), 0.0) / m.size();
    Map2D binary(m.height, m.width);
    for (size_t i = 0; i < m.size(); ++i)
        binary.data[i] = m.data[i] > mean ? 1.0 : 0.0;
    return binary;
}

}  // namespace groupcam

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "groupcam/model.hpp"
#include "groupcam/tensor.hpp"

namespace groupcam {

struct GroupCamConfig {
    int groups = 32;
    double theta = 70.0;        // de-noise percentile
    bool denoise_enabled = true;
    int ksize = 51;             // Gaussian baseline blur
    double sigma = 50.0;
    std::string layer_id;       // empty -> adapter's default target layer
};

struct SaliencyMap {
    Map2D map;                  // H x W, values in [0, 1]
    int class_index = -1;
    std::string method;
};

struct GroupScore {
    int group_index = 0;
    double alpha = 0.0;         // confidence gain of this group's mask
    Map2D mask;                 // de-noised, normalized, upsampled mask in [0, 1]
};

// Per-channel global average pool of the gradients: w_k = mean_ij grad[k,i,j].
std::vector<double> importance_weights(const ActivationBundle& bundle);

// Channels split into G contiguous blocks of floor(K/G); remainder channels
// join the last block. Each mask is ReLU of the weighted channel sum.
std::vector<Map2D> grouped_masks(const ActivationBundle& bundle,
                                 const std::vector<double>& weights, int groups);

// Probability of class_index for blend(original, baseline, mask) minus the
// probability for the baseline itself. Two forward evaluations.
double confidence_gain(ModelAdapter& adapter, const ImageTensor& original,
                       const ImageTensor& baseline, const Map2D& mask,
                       int class_index);

// Full pipeline: gradients -> grouped masks -> de-noise/normalize/upsample
// -> blur-blend -> confidence gains -> ReLU-weighted sum, min-max normalized.
// Exactly groups + 2 forward evaluations.
std::pair<SaliencyMap, std::vector<GroupScore>> group_cam(
    ModelAdapter& adapter, const ImageTensor& img, int class_index,
    const GroupCamConfig& config = {});

// ReLU of the importance-weighted channel sum, upsampled and normalized.
// Equals the single-group pipeline with de-noising off (when that run's
// confidence gain is positive). One forward evaluation.
SaliencyMap grad_cam(ModelAdapter& adapter, const ImageTensor& img,
                     int class_index, const std::string& layer_id = "");

// Gradient-free mask for fine-tuning: unweighted grouped sums, no
// de-noising, masked-input scores as weights, binarized at the mean.
// Exactly groups + 1 forward evaluations.
Map2D finetune_mask(ModelAdapter& adapter, const ImageTensor& img,
                    int class_index, int groups = 16, int ksize = 51,
                    double sigma = 50.0, const std::string& layer_id = "");

}  // namespace groupcam

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "groupcam/tensor.hpp"

namespace groupcam {

// Target-layer feature maps plus the gradient of the class logit with
// respect to them, for one (image, class) pair. Activations and gradients
// always share the K x h x w shape; Z = h * w.
struct ActivationBundle {
    int channels = 0;
    int height = 0;
    int width = 0;
    int class_index = -1;
    std::string layer_id;
    std::vector<double> activations;  // K*h*w, channel-major
    std::vector<double> gradients;    // same layout; empty for plain taps

    int spatial_size() const { return height * width; }
    double act(int k, int y, int x) const {
        return activations[(static_cast<size_t>(k) * height + y) * width + x];
    }
    double grad(int k, int y, int x) const {
        return gradients[(static_cast<size_t>(k) * height + y) * width + x];
    }
};

// Abstraction boundary between the saliency math and any classifier.
// One forward evaluation of one input advances the query counter by one;
// batches advance it by the batch size. Instances are single-threaded;
// use one adapter per worker for parallel evaluation.
class ModelAdapter {
public:
    virtual ~ModelAdapter() = default;

    // Layer ids ordered shallow to deep.
    virtual std::vector<std::string> layer_catalog() const = 0;
    virtual std::string default_target_layer() const = 0;
    virtual int num_classes() const = 0;
    virtual std::array<int, 3> input_shape() const = 0;  // C, H, W

    // Post-softmax probabilities, one row per image, each row sums to 1.
    virtual std::vector<std::vector<double>> class_scores_batch(
        const std::vector<ImageTensor>& batch) = 0;

    std::vector<double> class_scores(const ImageTensor& img) {
        return class_scores_batch({img})[0];
    }
    double class_score(const ImageTensor& img, int class_index) {
        return class_scores(img).at(class_index);
    }

    // Gradients of the pre-softmax logit of class_index w.r.t. the layer's
    // post-activation feature maps. Counts as one forward evaluation.
    virtual ActivationBundle activations_with_gradients(
        const ImageTensor& img, int class_index, const std::string& layer_id) = 0;

    // Feature maps only, no backward pass. Counts as one forward evaluation.
    virtual ActivationBundle activations(const ImageTensor& img,
                                         const std::string& layer_id) = 0;

    // Copy of the model with one layer's parameters re-drawn i.i.d. from a
    // normal matching that layer's empirical mean/stddev. The receiver is
    // left untouched; the copy's query counter starts at zero.
    virtual std::unique_ptr<ModelAdapter> randomize_parameters(
        const std::string& layer_id, std::uint64_t seed) const = 0;

    virtual std::unique_ptr<ModelAdapter> clone() const = 0;

    std::uint64_t query_count() const { return queries_; }
    void reset_query_count() { queries_ = 0; }

protected:
    std::uint64_t queries_ = 0;
};

}  // namespace groupcam

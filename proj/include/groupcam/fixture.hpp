#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "groupcam/model.hpp"
#include "groupcam/tensor.hpp"

namespace groupcam {

// ---------------------------------------------------------------------------
// Synthetic shape dataset: squares vs circles on noise, with tight boxes.
// ---------------------------------------------------------------------------

struct BBox {
    int x = 0, y = 0, w = 0, h = 0;  // pixels, origin top-left

    bool contains(int px, int py) const {  // inclusive boundaries
        return px >= x && px <= x + w - 1 && py >= y && py <= y + h - 1;
    }
};

struct FixtureSample {
    ImageTensor image;  // 3 x H x W in [0, 1]
    int label = 0;      // 0 = square, 1 = circle
    BBox bbox;          // tight box around the shape
};

struct FixtureDatasetSpec {
    int height = 64;
    int width = 64;
    std::uint64_t seed = 0;
};

inline const char* fixture_class_name(int label) {
    return label == 0 ? "square" : "circle";
}

// Pure function of (spec.seed, index). Even indices are squares,
// odd indices circles; background is uniform noise in [0, 0.3],
// shape pixels lie in [0.7, 1.0] with a per-class channel tint.
FixtureSample generate_fixture_sample(const FixtureDatasetSpec& spec, int index);
std::vector<FixtureSample> generate_fixture_dataset(const FixtureDatasetSpec& spec, int n);

// ---------------------------------------------------------------------------
// Small convolutional classifier: three 3x3 conv stages, max pooling after
// the first two, average pooling after the third, then two fully connected
// layers. conv3 is the CAM target layer; the average pool keeps the path
// above it free of argmax kinks so finite differences stay meaningful.
// ---------------------------------------------------------------------------

struct NetConfig {
    int in_channels = 3;
    int in_h = 64;
    int in_w = 64;  // must be divisible by 8 (three pooling stages)
    int conv1 = 12;
    int conv2 = 24;
    int conv3 = 32;
    int fc_hidden = 64;
    int num_classes = 2;
};

class SmallConvNet {
public:
    SmallConvNet() = default;
    SmallConvNet(const NetConfig& cfg, std::uint64_t init_seed);

    const NetConfig& config() const { return cfg_; }
    static std::vector<std::string> layer_ids();  // shallow -> deep

    // Intermediates of one forward pass, kept for backprop and resume.
    struct Trace {
        std::vector<double> in;                      // padded copy not kept
        std::vector<double> z1, a1, p1;              // conv1 pre/post relu, pooled
        std::vector<double> z2, a2, p2;
        std::vector<double> z3, a3, p3;              // p3 is average-pooled
        std::vector<double> z4, a4;                  // fc1 pre/post relu
        std::vector<double> z5;                      // logits
        std::vector<int> idx1, idx2;                 // max-pool argmax indices
    };

    std::vector<double> forward(const ImageTensor& img, Trace* trace = nullptr) const;

    // Resume the pipeline from a layer's post-activation feature maps
    // (logits for fc2). Used by finite-difference checks.
    std::vector<double> logits_from_activations(const std::string& layer_id,
                                                const std::vector<double>& acts) const;

    // d(sum_i dlogits[i] * logit_i) / d(post-activation of layer_id).
    std::vector<double> backprop_to_activations(const Trace& tr,
                                                const std::vector<double>& dlogits,
                                                const std::string& layer_id) const;

    struct Grads {
        std::vector<double> w1, b1, w2, b2, w3, b3, wf1, bf1, wf2, bf2;
        void init(const NetConfig& cfg);
        void scale(double s);
    };

    // Accumulates parameter gradients for one sample into g.
    void backprop_params(const Trace& tr, const std::vector<double>& dlogits,
                         Grads& g) const;

    void sgd_step(const Grads& g, Grads& velocity, double lr, double momentum);

    // K, h, w of a layer's post-activation output.
    std::array<int, 3> activation_shape(const std::string& layer_id) const;

    std::vector<double>& weights(const std::string& layer_id);
    std::vector<double>& biases(const std::string& layer_id);
    const std::vector<double>& weights(const std::string& layer_id) const;
    const std::vector<double>& biases(const std::string& layer_id) const;

    // Re-draw one layer's parameters from a normal matching their
    // empirical mean and stddev.
    void randomize_layer(const std::string& layer_id, std::uint64_t seed);

    void save(const std::string& path) const;
    static SmallConvNet load(const std::string& path);

    bool operator==(const SmallConvNet& o) const;

private:
    NetConfig cfg_;
    std::vector<double> w1_, b1_, w2_, b2_, w3_, b3_;  // conv: out*in*3*3
    std::vector<double> wf1_, bf1_, wf2_, bf2_;        // fc: out*in
};

std::vector<double> softmax(const std::vector<double>& logits);

// ---------------------------------------------------------------------------
// Adapter over SmallConvNet with exact query accounting.
// ---------------------------------------------------------------------------

class FixtureAdapter final : public ModelAdapter {
public:
    explicit FixtureAdapter(SmallConvNet net) : net_(std::move(net)) {}

    std::vector<std::string> layer_catalog() const override;
    std::string default_target_layer() const override { return "conv3"; }
    int num_classes() const override { return net_.config().num_classes; }
    std::array<int, 3> input_shape() const override;

    std::vector<std::vector<double>> class_scores_batch(
        const std::vector<ImageTensor>& batch) override;
    ActivationBundle activations_with_gradients(const ImageTensor& img,
                                                int class_index,
                                                const std::string& layer_id) override;
    ActivationBundle activations(const ImageTensor& img,
                                 const std::string& layer_id) override;
    std::unique_ptr<ModelAdapter> randomize_parameters(
        const std::string& layer_id, std::uint64_t seed) const override;
    std::unique_ptr<ModelAdapter> clone() const override;

    SmallConvNet& net() { return net_; }
    const SmallConvNet& net() const { return net_; }

private:
    void check_input(const ImageTensor& img) const;
    SmallConvNet net_;
};

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

class TrainingFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    double lr = 0.01;
    double momentum = 0.8;
    int lr_decay_epochs = 8;         // halve the rate every this many epochs
    double early_stop_loss = 0.02;   // stop once epoch train loss drops below
    int batch_size = 16;
    double holdout_fraction = 0.2;   // last fraction of the dataset
    double target_accuracy = 0.95;   // throws TrainingFailure below this
    NetConfig net;
};

struct TrainReport {
    std::vector<double> epoch_losses;
    std::vector<double> epoch_holdout_accuracy;
    double final_holdout_accuracy = 0.0;
    int train_count = 0;
    int holdout_count = 0;
    int epochs = 0;
    std::uint64_t seed = 0;
};

// Trains on the first (1 - holdout_fraction) of the dataset, evaluates on
// the rest. Throws TrainingFailure if held-out accuracy stays below target
// after the budgeted epochs.
FixtureAdapter train_fixture_model(const std::vector<FixtureSample>& dataset,
                                   int epochs, std::uint64_t seed,
                                   TrainReport* report = nullptr,
                                   const TrainConfig& cfg = {});

double evaluate_accuracy(const SmallConvNet& net,
                         const std::vector<FixtureSample>& samples);

}  // namespace groupcam

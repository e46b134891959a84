#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "groupcam/fixture.hpp"
#include "groupcam/model.hpp"
#include "groupcam/tensor.hpp"

namespace groupcam {

struct AugmentConfig {
    int groups = 16;
    int ksize = 51;
    double sigma = 50.0;
    double apply_probability = 1.0;  // 1.0 = augment every image
    std::string layer_id;            // empty -> adapter default
};

// Blend the image with its blurred copy under the gradient-free binary
// saliency mask for the ground-truth class. Shape and [0, 1] range are
// preserved.
ImageTensor augment_image(ModelAdapter& adapter, const ImageTensor& img,
                          int label, const AugmentConfig& cfg = {});

struct FinetuneConfig {
    AugmentConfig augment;
    double lr = 0.01;                // plain SGD, fixed rate
    int batch_size = 16;
    double holdout_fraction = 0.2;   // last fraction of the dataset
};

struct FinetuneReport {
    std::uint64_t seed = 0;
    int epochs = 0;
    double initial_accuracy = 0.0;
    // Paired runs over identical data order; index = epoch.
    std::vector<double> augmented_train_loss;
    std::vector<double> augmented_accuracy;
    std::vector<double> control_train_loss;
    std::vector<double> control_accuracy;
};

// Runs the augmented fine-tune and a plain control fine-tune from the same
// starting weights, with identical shuffling. Masks are regenerated from
// the live model once per epoch, so better weights feed back into better
// masks. epochs = 0 reports only the initial accuracy. epoch_snapshots,
// when given, receives the augmented-run weights after every epoch.
FinetuneReport finetune_loop(const FixtureAdapter& start,
                             const std::vector<FixtureSample>& dataset,
                             int epochs, std::uint64_t seed,
                             const FinetuneConfig& cfg = {},
                             FixtureAdapter* out_augmented = nullptr,
                             FixtureAdapter* out_control = nullptr,
                             std::vector<SmallConvNet>* epoch_snapshots = nullptr);

}  // namespace groupcam

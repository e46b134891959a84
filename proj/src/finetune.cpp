#include "groupcam/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "groupcam/imgproc.hpp"
#include "groupcam/rng.hpp"
#include "groupcam/saliency.hpp"

namespace groupcam {

ImageTensor augment_image(ModelAdapter& adapter, const ImageTensor& img,
                          int label, const AugmentConfig& cfg) {
    const Map2D mask = finetune_mask(adapter, img, label, cfg.groups, cfg.ksize,
                                     cfg.sigma, cfg.layer_id);
    const ImageTensor blurred = gaussian_blur2d(img, cfg.ksize, cfg.sigma);
    return blend(img, blurred, mask);
}

namespace {

// One SGD epoch over the given images; returns the mean cross-entropy loss.
double train_epoch(SmallConvNet& net, const std::vector<const ImageTensor*>& images,
                   const std::vector<int>& labels, const std::vector<int>& order,
                   SmallConvNet::Grads& grads, SmallConvNet::Grads& velocity,
                   double lr, int batch_size) {
    const NetConfig& cfg = net.config();
    double loss_sum = 0.0;
    const int n = static_cast<int>(order.size());
    for (int start = 0; start < n; start += batch_size) {
        const int bs = std::min(batch_size, n - start);
        grads.init(cfg);
        for (int bi = 0; bi < bs; ++bi) {
            const int idx = order[start + bi];
            SmallConvNet::Trace tr;
            const auto logits = net.forward(*images[idx], &tr);
            const auto probs = softmax(logits);
            loss_sum += -std::log(std::max(probs[labels[idx]], 1e-12));
            std::vector<double> dlogits = probs;
            dlogits[labels[idx]] -= 1.0;
            net.backprop_params(tr, dlogits, grads);
        }
        grads.scale(1.0 / bs);
        net.sgd_step(grads, velocity, lr, /*momentum=*/0.0);
    }
    return loss_sum / n;
}

}  // namespace

FinetuneReport finetune_loop(const FixtureAdapter& start,
                             const std::vector<FixtureSample>& dataset,
                             int epochs, std::uint64_t seed,
                             const FinetuneConfig& cfg,
                             FixtureAdapter* out_augmented,
                             FixtureAdapter* out_control,
                             std::vector<SmallConvNet>* epoch_snapshots) {
    require(!dataset.empty(), "finetune_loop: empty dataset");
    require(epochs >= 0, "finetune_loop: epochs must be >= 0");

    const int n = static_cast<int>(dataset.size());
    const int holdout = std::max(1, static_cast<int>(n * cfg.holdout_fraction));
    const int train_n = n - holdout;
    require(train_n >= 1, "finetune_loop: dataset too small for holdout split");
    const std::vector<FixtureSample> holdout_set(dataset.end() - holdout,
                                                 dataset.end());

    FinetuneReport rep;
    rep.seed = seed;
    rep.epochs = epochs;
    rep.initial_accuracy = evaluate_accuracy(start.net(), holdout_set);

    FixtureAdapter augmented(start.net());
    FixtureAdapter control(start.net());

    if (epochs > 0) {
        std::vector<int> labels(train_n);
        std::vector<const ImageTensor*> orig_ptrs(train_n);
        for (int i = 0; i < train_n; ++i) {
            labels[i] = dataset[i].label;
            orig_ptrs[i] = &dataset[i].image;
        }

        SmallConvNet::Grads grads, vel_aug, vel_ctl;
        grads.init(start.net().config());
        vel_aug.init(start.net().config());
        vel_ctl.init(start.net().config());

        // Separate streams: shuffles stay aligned across the paired runs
        // regardless of how many apply-probability draws happen.
        Rng shuffle_rng(Rng::mix(seed, 0x0DDE));
        Rng apply_rng(Rng::mix(seed, 0xA441));
        std::vector<int> order(train_n);
        std::iota(order.begin(), order.end(), 0);

        for (int e = 0; e < epochs; ++e) {
            shuffle_rng.shuffle(order);

            // Masks come from the live augmented model at the epoch boundary.
            std::vector<ImageTensor> aug_images(train_n);
            std::vector<const ImageTensor*> aug_ptrs(train_n);
            for (int i = 0; i < train_n; ++i) {
                if (cfg.augment.apply_probability >= 1.0 ||
                    apply_rng.uniform() < cfg.augment.apply_probability) {
                    aug_images[i] = augment_image(augmented, dataset[i].image,
                                                  dataset[i].label, cfg.augment);
                } else {
                    aug_images[i] = dataset[i].image;
                }
                aug_ptrs[i] = &aug_images[i];
            }

            const std::vector<int> epoch_order = order;
            rep.augmented_train_loss.push_back(
                train_epoch(augmented.net(), aug_ptrs, labels, epoch_order, grads,
                            vel_aug, cfg.lr, cfg.batch_size));
            rep.augmented_accuracy.push_back(
                evaluate_accuracy(augmented.net(), holdout_set));
            if (epoch_snapshots) epoch_snapshots->push_back(augmented.net());

            rep.control_train_loss.push_back(
                train_epoch(control.net(), orig_ptrs, labels, epoch_order, grads,
                            vel_ctl, cfg.lr, cfg.batch_size));
            rep.control_accuracy.push_back(
                evaluate_accuracy(control.net(), holdout_set));

            if (!std::isfinite(rep.augmented_train_loss.back()) ||
                !std::isfinite(rep.control_train_loss.back()))
                throw TrainingFailure("finetune_loop: training loss diverged");
        }
    }

    if (out_augmented) *out_augmented = augmented;
    if (out_control) *out_control = control;
    return rep;
}

}  // namespace groupcam

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "groupcam/finetune.hpp"
#include "groupcam/imgproc.hpp"
#include "groupcam/saliency.hpp"
#include "test_support.hpp"

using namespace groupcam;

TEST_CASE("augment_image preserves shape/range and only edits masked-out pixels") {
    auto adapter = testsupport::trained_adapter();
    const auto& s = testsupport::heldout_pool()[0];
    AugmentConfig cfg;

    const auto aug = augment_image(adapter, s.image, s.label, cfg);
    CHECK(aug.channels == 3);
    CHECK(aug.height == 64);
    CHECK(aug.width == 64);
    for (double v : aug.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // recompute the same mask; kept pixels are bit-identical to the original
    const auto mask = finetune_mask(adapter, s.image, s.label, cfg.groups,
                                    cfg.ksize, cfg.sigma);
    const size_t plane = 64 * 64;
    bool any_changed = false;
    for (size_t p = 0; p < plane; ++p)
        for (int c = 0; c < 3; ++c) {
            if (mask.data[p] == 1.0)
                CHECK(aug.data[c * plane + p] == s.image.data[c * plane + p]);
            else if (aug.data[c * plane + p] != s.image.data[c * plane + p])
                any_changed = true;
        }
    CHECK(any_changed);
}

TEST_CASE("epochs=0 reports only the initial accuracy and changes nothing") {
    auto adapter = testsupport::trained_adapter();
    std::vector<FixtureSample> data(testsupport::heldout_pool().begin(),
                                    testsupport::heldout_pool().begin() + 50);
    FixtureAdapter out_aug(adapter.net()), out_ctl(adapter.net());
    const auto rep = finetune_loop(adapter, data, 0, 3, {}, &out_aug, &out_ctl);
    CHECK(rep.epochs == 0);
    CHECK(rep.augmented_accuracy.empty());
    CHECK(rep.control_accuracy.empty());
    CHECK(rep.initial_accuracy >= 0.0);
    CHECK(out_aug.net() == adapter.net());
    CHECK(out_ctl.net() == adapter.net());
}

TEST_CASE("finetune runs are deterministic and paired") {
    auto adapter = testsupport::trained_adapter();
    std::vector<FixtureSample> data(testsupport::heldout_pool().begin(),
                                    testsupport::heldout_pool().begin() + 60);
    FinetuneConfig cfg;
    cfg.augment.groups = 8;

    const auto r1 = finetune_loop(adapter, data, 2, 21, cfg);
    const auto r2 = finetune_loop(adapter, data, 2, 21, cfg);
    CHECK(r1.augmented_train_loss == r2.augmented_train_loss);
    CHECK(r1.control_train_loss == r2.control_train_loss);
    CHECK(r1.augmented_accuracy == r2.augmented_accuracy);
    CHECK(r1.control_accuracy == r2.control_accuracy);

    CHECK(r1.augmented_accuracy.size() == 2);
    CHECK(r1.control_accuracy.size() == 2);
    CHECK(r1.augmented_train_loss.size() == r1.control_train_loss.size());
}

TEST_CASE("masks regenerate from the live model as weights move") {
    auto adapter = testsupport::trained_adapter();
    std::vector<FixtureSample> data(testsupport::heldout_pool().begin(),
                                    testsupport::heldout_pool().begin() + 40);
    FinetuneConfig cfg;
    cfg.augment.groups = 8;
    cfg.lr = 0.05;  // move the weights noticeably in one epoch

    FixtureAdapter after(adapter.net());
    finetune_loop(adapter, data, 1, 9, cfg, &after);
    CHECK_FALSE(after.net() == adapter.net());

    FixtureAdapter before_copy(adapter.net());
    int differs = 0;
    for (int i = 0; i < 5; ++i) {
        const auto m0 = finetune_mask(before_copy, data[i].image, data[i].label,
                                      cfg.augment.groups);
        const auto m1 =
            finetune_mask(after, data[i].image, data[i].label, cfg.augment.groups);
        if (m0.data != m1.data) ++differs;
    }
    CHECK(differs >= 1);
}

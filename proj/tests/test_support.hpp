#pragma once

// Shared fixtures for the test suites. The trained adapter is built once
// per process (training takes a few seconds) and handed out as copies so
// query counters start fresh.

#include <vector>

#include "groupcam/fixture.hpp"
#include "groupcam/rng.hpp"

namespace testsupport {

inline constexpr std::uint64_t kDataSeed = 42;
inline constexpr std::uint64_t kTrainSeed = 7;

inline const std::vector<groupcam::FixtureSample>& train_pool() {
    static const auto data = [] {
        groupcam::FixtureDatasetSpec spec;
        spec.seed = kDataSeed;
        return groupcam::generate_fixture_dataset(spec, 240);
    }();
    return data;
}

// Images disjoint from the training pool (same generator, later indices).
inline const std::vector<groupcam::FixtureSample>& heldout_pool() {
    static const auto data = [] {
        groupcam::FixtureDatasetSpec spec;
        spec.seed = kDataSeed;
        std::vector<groupcam::FixtureSample> out;
        out.reserve(220);
        for (int i = 240; i < 460; ++i)
            out.push_back(groupcam::generate_fixture_sample(spec, i));
        return out;
    }();
    return data;
}

inline groupcam::FixtureAdapter trained_adapter() {
    static const groupcam::FixtureAdapter model = [] {
        return groupcam::train_fixture_model(train_pool(), 40, kTrainSeed);
    }();
    return model;  // copy; fresh query counter state for each test
}

// Small untrained net for cheap structural tests.
inline groupcam::FixtureAdapter tiny_adapter(std::uint64_t seed = 123) {
    groupcam::NetConfig cfg;
    cfg.in_h = 16;
    cfg.in_w = 16;
    cfg.conv1 = 4;
    cfg.conv2 = 6;
    cfg.conv3 = 8;
    cfg.fc_hidden = 10;
    return groupcam::FixtureAdapter(groupcam::SmallConvNet(cfg, seed));
}

inline groupcam::ImageTensor random_image(int c, int h, int w, std::uint64_t seed) {
    groupcam::ImageTensor img(c, h, w);
    groupcam::Rng rng(seed);
    for (auto& v : img.data) v = rng.uniform();
    return img;
}

inline groupcam::Map2D random_map(int h, int w, std::uint64_t seed,
                                  double lo = -1.0, double hi = 1.0) {
    groupcam::Map2D m(h, w);
    groupcam::Rng rng(seed);
    for (auto& v : m.data) v = rng.uniform(lo, hi);
    return m;
}

}  // namespace testsupport

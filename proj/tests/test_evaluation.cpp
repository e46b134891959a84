#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "groupcam/evaluation.hpp"
#include "groupcam/imgproc.hpp"
#include "test_support.hpp"

using namespace groupcam;

namespace {

SaliencyMap wrap(Map2D m) {
    SaliencyMap s;
    s.map = std::move(m);
    s.class_index = 0;
    s.method = "test";
    return s;
}

}  // namespace

TEST_CASE("curve endpoints are exact and budgets hold") {
    auto adapter = testsupport::trained_adapter();
    const auto& held = testsupport::heldout_pool();
    for (int i = 0; i < 3; ++i) {
        const auto& s = held[i];
        const auto sal = grad_cam(adapter, s.image, s.label);
        const auto blurred = gaussian_blur2d(s.image, 51, 50.0);
        const double f_orig = adapter.class_score(s.image, s.label);
        const double f_blur = adapter.class_score(blurred, s.label);

        adapter.reset_query_count();
        const auto del = deletion_curve(adapter, s.image, sal, s.label);
        CHECK(adapter.query_count() == 29);  // ceil(1/(8/224)) + 1

        adapter.reset_query_count();
        const auto ins = insertion_curve(adapter, s.image, sal, s.label);
        CHECK(adapter.query_count() == 29);

        CHECK(del.fractions.front() == 0.0);
        CHECK(del.fractions.back() == 1.0);
        CHECK(del.scores.front() == f_orig);   // no pixels touched yet
        CHECK(del.scores.back() == f_blur);    // everything replaced
        CHECK(ins.scores.front() == f_blur);
        CHECK(ins.scores.back() == f_orig);
        CHECK(ins.scores.back() == del.scores.front());
        CHECK(ins.scores.front() == del.scores.back());

        for (size_t k = 1; k < del.fractions.size(); ++k)
            CHECK(del.fractions[k] > del.fractions[k - 1]);

        // auc matches an independent trapezoid accumulation
        double auc = 0.0;
        for (size_t k = 1; k < del.fractions.size(); ++k)
            auc += (del.fractions[k] - del.fractions[k - 1]) *
                   0.5 * (del.scores[k] + del.scores[k - 1]);
        CHECK(std::fabs(auc - del.auc) < 1e-9);
        CHECK(del.auc >= *std::min_element(del.scores.begin(), del.scores.end()) - 1e-12);
        CHECK(del.auc <= *std::max_element(del.scores.begin(), del.scores.end()) + 1e-12);
    }
}

TEST_CASE("forward evaluations per curve equal ceil(1/step)+1") {
    auto adapter = testsupport::trained_adapter();
    const auto& s = testsupport::heldout_pool()[0];
    const auto sal = grad_cam(adapter, s.image, s.label);
    for (double step : {0.1, 0.3, 0.37, 1.0}) {
        adapter.reset_query_count();
        const auto del = deletion_curve(adapter, s.image, sal, s.label, step);
        const auto expected =
            static_cast<std::uint64_t>(std::ceil(1.0 / step)) + 1;
        CHECK(adapter.query_count() == expected);
        CHECK(del.scores.size() == expected);
        CHECK(del.fractions.back() == 1.0);
    }
    CHECK_THROWS_AS(deletion_curve(adapter, s.image, sal, s.label, 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(deletion_curve(adapter, s.image, sal, s.label, 1.5),
                    std::invalid_argument);
}

TEST_CASE("constant classifier yields auc equal to its score") {
    auto adapter = testsupport::tiny_adapter();
    auto& fc2w = adapter.net().weights("fc2");
    auto& fc2b = adapter.net().biases("fc2");
    std::fill(fc2w.begin(), fc2w.end(), 0.0);
    std::fill(fc2b.begin(), fc2b.end(), 0.0);  // every score is exactly 0.5

    const auto img = testsupport::random_image(3, 16, 16, 44);
    const auto sal = wrap(testsupport::random_map(16, 16, 45, 0.0, 1.0));
    const auto del = deletion_curve(adapter, img, sal, 0, 0.25);
    for (double v : del.scores) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(del.auc == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("tied saliency falls back to row-major order, reproducibly") {
    auto adapter = testsupport::trained_adapter();
    const auto& s = testsupport::heldout_pool()[1];
    const auto flat = wrap(Map2D(64, 64, 0.5));
    const auto a = deletion_curve(adapter, s.image, flat, s.label);
    const auto b = deletion_curve(adapter, s.image, flat, s.label);
    CHECK(a.scores == b.scores);
    CHECK(a.fractions == b.fractions);

    // first step of pure row-major deletion replaces the top rows
    ImageTensor expect = s.image;
    const auto blurred = gaussian_blur2d(s.image, 51, 50.0);
    const size_t first_batch = static_cast<size_t>(
        std::ceil((8.0 / 224.0) * 64 * 64));
    for (size_t p = 0; p < first_batch; ++p)
        for (int c = 0; c < 3; ++c)
            expect.data[c * 4096 + p] = blurred.data[c * 4096 + p];
    CHECK(a.scores[1] == adapter.class_score(expect, s.label));
}

TEST_CASE("overall score arithmetic") {
    CHECK(overall_score(0.568, 0.123) == doctest::Approx(0.445).epsilon(1e-12));
    CHECK(overall_score(0.6584, 0.1128) == doctest::Approx(0.5456).epsilon(1e-12));
    CHECK(overall_score(0.4, 0.4) == 0.0);
    CHECK_THROWS_AS(overall_score(1.2, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(overall_score(0.5, -0.1), std::invalid_argument);
}

TEST_CASE("pointing game containment, ties and accuracy bookkeeping") {
    Map2D m(10, 10, 0.0);
    m.at(5, 5) = 1.0;
    auto out = pointing_game(wrap(m), {{"square", {4, 4, 3, 3}}});
    CHECK(out.at("square"));

    out = pointing_game(wrap(m), {{"square", {0, 0, 3, 3}}});
    CHECK_FALSE(out.at("square"));

    // inclusive boundary: argmax exactly on the box edge
    out = pointing_game(wrap(m), {{"square", {5, 5, 1, 1}}});
    CHECK(out.at("square"));
    out = pointing_game(wrap(m), {{"square", {3, 3, 3, 3}}});
    CHECK(out.at("square"));

    // union across one category's boxes
    out = pointing_game(wrap(m), {{"circle", {0, 0, 2, 2}}, {"circle", {5, 5, 2, 2}}});
    CHECK(out.at("circle"));

    // two equal maxima: smallest row-major index wins
    Map2D tie(4, 4, 0.0);
    tie.at(1, 2) = 1.0;
    tie.at(3, 3) = 1.0;
    CHECK(argmax_pixel(tie) == std::pair<int, int>{1, 2});

    CHECK_THROWS_AS(pointing_game(wrap(m), {}), std::invalid_argument);

    PointingResult agg;
    Map2D hit_map(4, 4, 0.0);
    hit_map.at(0, 0) = 1.0;
    for (int i = 0; i < 3; ++i)
        agg.add(pointing_game(wrap(hit_map), {{"square", {0, 0, 2, 2}}}));
    agg.add(pointing_game(wrap(hit_map), {{"square", {3, 3, 1, 1}}}));
    CHECK(agg.categories.at("square").hits == 3);
    CHECK(agg.categories.at("square").misses == 1);
    CHECK(agg.categories.at("square").accuracy() == doctest::Approx(0.75));
    CHECK(agg.mean_accuracy() == doctest::Approx(0.75));
}

TEST_CASE("spearman correlation behaviour") {
    Map2D a(2, 3);
    a.data = {1, 2, 3, 4, 5, 6};
    CHECK(spearman(a, a) == 1.0);

    Map2D rev(2, 3);
    rev.data = {6, 5, 4, 3, 2, 1};
    CHECK(spearman(a, rev) == doctest::Approx(-1.0));

    // monotone transform preserves ranks exactly
    Map2D cubed(2, 3);
    for (int i = 0; i < 6; ++i) cubed.data[i] = std::pow(a.data[i], 3);
    CHECK(spearman(a, cubed) == doctest::Approx(1.0));

    Map2D constant(2, 3, 0.7);
    CHECK(spearman(a, constant) == 0.0);

    // ties are rank-averaged: hand-checked example
    Map2D t1(1, 4), t2(1, 4);
    t1.data = {1, 2, 2, 3};
    t2.data = {1, 2, 3, 4};
    const double rho = spearman(t1, t2);
    CHECK(rho == doctest::Approx(0.9486832980505138));
}

TEST_CASE("monotone transforms change neither curves nor pointing outcomes") {
    auto adapter = testsupport::trained_adapter();
    const auto& held = testsupport::heldout_pool();
    for (int i = 0; i < 3; ++i) {
        const auto& s = held[i];
        auto [sal, scores] = group_cam(adapter, s.image, s.label, {});
        SaliencyMap cubed = sal;
        for (double& v : cubed.map.data) v = v * v * v;

        const auto del1 = deletion_curve(adapter, s.image, sal, s.label);
        const auto del2 = deletion_curve(adapter, s.image, cubed, s.label);
        CHECK(del1.auc == del2.auc);
        CHECK(del1.scores == del2.scores);

        const auto ins1 = insertion_curve(adapter, s.image, sal, s.label);
        const auto ins2 = insertion_curve(adapter, s.image, cubed, s.label);
        CHECK(ins1.auc == ins2.auc);

        const std::vector<std::pair<std::string, BBox>> boxes = {
            {fixture_class_name(s.label), s.bbox}};
        CHECK(pointing_game(sal, boxes) == pointing_game(cubed, boxes));
    }
}

TEST_CASE("sanity check structure, determinism and self-row") {
    auto adapter = testsupport::trained_adapter();
    const auto& img = testsupport::heldout_pool()[2].image;
    GroupCamConfig cfg;
    cfg.groups = 8;  // keep the pass affordable

    const auto rep =
        sanity_check(adapter, img, 0, cfg, RandomizationMode::cascade, 5);
    CHECK(rep.layers.size() == adapter.layer_catalog().size() + 1);
    CHECK(rep.layers.front().layer_id == "none");
    CHECK(rep.layers.front().similarity == 1.0);
    CHECK(rep.layers[1].layer_id == "fc2");  // deepest first
    CHECK(rep.layers.back().layer_id == "conv1");

    const auto rep2 =
        sanity_check(adapter, img, 0, cfg, RandomizationMode::cascade, 5);
    for (size_t i = 0; i < rep.layers.size(); ++i)
        CHECK(rep.layers[i].similarity == rep2.layers[i].similarity);

    const auto ind =
        sanity_check(adapter, img, 0, cfg, RandomizationMode::independent, 5);
    CHECK(ind.layers.size() == rep.layers.size());
    for (const auto& e : ind.layers) CHECK(std::fabs(e.similarity) <= 1.0);
}

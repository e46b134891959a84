#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "groupcam/colormap.hpp"
#include "groupcam/imgproc.hpp"
#include "test_support.hpp"

using namespace groupcam;
using testsupport::random_image;
using testsupport::random_map;

namespace {

// Dense (non-separable) 2-D Gaussian convolution with reflect padding.
// Independent route used as the oracle for the separable implementation.
ImageTensor dense_gaussian_oracle(const ImageTensor& img, int ksize, double sigma) {
    const int r = ksize / 2;
    std::vector<double> k2d(static_cast<size_t>(ksize) * ksize);
    double sum = 0.0;
    for (int i = 0; i < ksize; ++i)
        for (int j = 0; j < ksize; ++j) {
            const double dy = i - r, dx = j - r;
            k2d[i * ksize + j] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
            sum += k2d[i * ksize + j];
        }
    for (double& v : k2d) v /= sum;

    auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i - 1;
            if (i >= n) i = 2 * n - i - 1;
        }
        return i;
    };

    ImageTensor out(img.channels, img.height, img.width);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                double acc = 0.0;
                for (int i = 0; i < ksize; ++i)
                    for (int j = 0; j < ksize; ++j)
                        acc += k2d[i * ksize + j] *
                               img.at(c, reflect(y + i - r, img.height),
                                      reflect(x + j - r, img.width));
                out.at(c, y, x) = acc;
            }
    return out;
}

// Straight scalar reimplementation of the documented sampling convention.
Map2D bilinear_oracle(const Map2D& m, int H, int W) {
    Map2D out(H, W);
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            double fy = (i + 0.5) * (static_cast<double>(m.height) / H) - 0.5;
            double fx = (j + 0.5) * (static_cast<double>(m.width) / W) - 0.5;
            fy = std::min(std::max(fy, 0.0), static_cast<double>(m.height - 1));
            fx = std::min(std::max(fx, 0.0), static_cast<double>(m.width - 1));
            const int y0 = static_cast<int>(std::floor(fy));
            const int x0 = static_cast<int>(std::floor(fx));
            const int y1 = std::min(y0 + 1, m.height - 1);
            const int x1 = std::min(x0 + 1, m.width - 1);
            const double ay = fy - y0, ax = fx - x0;
            out.at(i, j) = m.at(y0, x0) * (1 - ay) * (1 - ax) +
                           m.at(y0, x1) * (1 - ay) * ax +
                           m.at(y1, x0) * ay * (1 - ax) + m.at(y1, x1) * ay * ax;
        }
    return out;
}

double sort_percentile_oracle(std::vector<double> vals, double theta) {
    std::sort(vals.begin(), vals.end());
    if (theta <= 0.0) return vals.front();
    size_t idx = static_cast<size_t>(std::ceil(theta / 100.0 * vals.size()));
    return vals[std::min(idx - 1, vals.size() - 1)];
}

}  // namespace

TEST_CASE("gaussian_blur2d preserves constant images exactly") {
    ImageTensor img(3, 12, 9, 0.42);
    const auto out = gaussian_blur2d(img, 5, 1.5);
    for (double v : out.data) CHECK(v == doctest::Approx(0.42).epsilon(1e-12));
}

TEST_CASE("gaussian_blur2d with ksize=1 is the identity") {
    const auto img = random_image(3, 10, 10, 11);
    const auto out = gaussian_blur2d(img, 1, 2.0);
    CHECK(out.data == img.data);
}

TEST_CASE("gaussian_blur2d matches the dense 2-D convolution oracle") {
    // impulse image first (the spec's worked case), then random content
    ImageTensor impulse(1, 11, 11, 0.0);
    impulse.at(0, 5, 5) = 1.0;
    auto fast = gaussian_blur2d(impulse, 5, 1.0);
    auto slow = dense_gaussian_oracle(impulse, 5, 1.0);
    for (size_t i = 0; i < fast.size(); ++i)
        CHECK(std::fabs(fast.data[i] - slow.data[i]) < 1e-12);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto img = random_image(2, 16, 13, 100 + seed);
        const int ksize = 3 + 2 * static_cast<int>(seed % 3);
        const double sigma = 0.5 + 0.4 * static_cast<double>(seed);
        fast = gaussian_blur2d(img, ksize, sigma);
        slow = dense_gaussian_oracle(img, ksize, sigma);
        double max_err = 0.0;
        for (size_t i = 0; i < fast.size(); ++i)
            max_err = std::max(max_err, std::fabs(fast.data[i] - slow.data[i]));
        CHECK(max_err < 1e-6);
    }
}

TEST_CASE("gaussian_blur2d keeps values in [0,1] and preserves padded means") {
    const auto img = random_image(3, 20, 20, 3);
    const auto out = gaussian_blur2d(img, 7, 2.0);
    for (double v : out.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // constant-padded content: interior random, border band constant
    ImageTensor padded(1, 24, 24, 0.5);
    Rng rng(77);
    for (int y = 8; y < 16; ++y)
        for (int x = 8; x < 16; ++x) padded.at(0, y, x) = rng.uniform();
    const auto blurred = gaussian_blur2d(padded, 5, 1.0);
    double mean_in = 0.0, mean_out = 0.0;
    for (size_t i = 0; i < padded.size(); ++i) {
        mean_in += padded.data[i];
        mean_out += blurred.data[i];
    }
    CHECK(std::fabs(mean_in - mean_out) / padded.size() < 1e-4);
}

TEST_CASE("gaussian_blur2d rejects bad kernels") {
    ImageTensor img(1, 4, 4, 0.0);
    CHECK_THROWS_AS(gaussian_blur2d(img, 4, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_blur2d(img, -3, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_blur2d(img, 3, 0.0), std::invalid_argument);
}

TEST_CASE("bilinear_upsample identity and constant cases") {
    const auto m = random_map(6, 7, 21);
    const auto same = bilinear_upsample(m, 6, 7);
    CHECK(same.data == m.data);

    Map2D one(1, 1, 0.37);
    const auto big = bilinear_upsample(one, 9, 5);
    for (double v : big.data) CHECK(v == doctest::Approx(0.37));
}

TEST_CASE("bilinear_upsample matches the scalar-loop oracle") {
    // the 2x2 -> 4x4 case called out in the contract
    Map2D small(2, 2);
    small.at(0, 0) = 1.0;
    small.at(0, 1) = 2.0;
    small.at(1, 0) = 3.0;
    small.at(1, 1) = 4.0;
    auto up = bilinear_upsample(small, 4, 4);
    auto ref = bilinear_oracle(small, 4, 4);
    for (size_t i = 0; i < up.size(); ++i)
        CHECK(up.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-12));

    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(500 + seed);
        const int h = rng.uniform_int(1, 8), w = rng.uniform_int(1, 8);
        const int H = rng.uniform_int(1, 40), W = rng.uniform_int(1, 40);
        const auto m = random_map(h, w, 900 + seed);
        up = bilinear_upsample(m, H, W);
        ref = bilinear_oracle(m, H, W);
        double max_err = 0.0;
        for (size_t i = 0; i < up.size(); ++i)
            max_err = std::max(max_err, std::fabs(up.data[i] - ref.data[i]));
        CHECK(max_err <= 1e-6);

        const auto [lo, hi] = std::minmax_element(m.data.begin(), m.data.end());
        for (double v : up.data) {
            CHECK(v >= *lo - 1e-12);
            CHECK(v <= *hi + 1e-12);
        }
    }
}

TEST_CASE("minmax_normalize basic and degenerate cases") {
    Map2D m(1, 3);
    m.data = {0.0, 5.0, 10.0};
    auto n = minmax_normalize(m);
    CHECK(n.data[0] == 0.0);
    CHECK(n.data[1] == doctest::Approx(0.5));
    CHECK(n.data[2] == 1.0);

    Map2D c(4, 4, 3.3);
    n = minmax_normalize(c);
    for (double v : n.data) CHECK(v == 0.0);

    Map2D fixed(1, 3);
    fixed.data = {0.0, 0.25, 1.0};
    n = minmax_normalize(fixed);
    CHECK(n.data == fixed.data);
}

TEST_CASE("percentile nearest-rank semantics") {
    Map2D m(10, 10);
    for (int i = 0; i < 100; ++i) m.data[i] = 100 - i;  // values 1..100 unsorted
    CHECK(percentile(m, 70.0) == 70.0);
    CHECK(percentile(m, 100.0) == 100.0);
    CHECK(percentile(m, 0.0) == 1.0);

    Map2D c(3, 3, 2.5);
    CHECK(percentile(c, 13.0) == 2.5);
    CHECK(percentile(c, 99.0) == 2.5);

    CHECK_THROWS_AS(percentile(m, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(percentile(m, 100.5), std::invalid_argument);

    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(40 + seed);
        const auto rm = random_map(rng.uniform_int(1, 12), rng.uniform_int(1, 12),
                                   7000 + seed);
        const double theta = rng.uniform(0.0, 100.0);
        CHECK(percentile(rm, theta) == sort_percentile_oracle(rm.data, theta));
    }
}

TEST_CASE("denoise keeps exactly the strictly-greater pixels") {
    Map2D m(10, 10);
    for (int i = 0; i < 100; ++i) m.data[i] = i + 1;  // 1..100
    auto d = denoise(m, 70.0);
    int survivors = 0;
    for (double v : d.data)
        if (v != 0.0) {
            ++survivors;
            CHECK(v > 70.0);
        }
    CHECK(survivors == 30);

    d = denoise(m, 100.0);
    for (double v : d.data) CHECK(v == 0.0);

    Map2D c(5, 5, 1.0);
    d = denoise(c, 30.0);
    for (double v : d.data) CHECK(v == 0.0);

    // zeroed count matches the sort-based oracle on random maps
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(4000 + seed);
        const auto rm = random_map(rng.uniform_int(1, 10), rng.uniform_int(1, 10),
                                   5000 + seed, 0.0, 1.0);
        const double theta = rng.uniform(0.0, 100.0);
        const double p = sort_percentile_oracle(rm.data, theta);
        size_t above = 0;
        for (double v : rm.data)
            if (v > p) ++above;
        const auto out = denoise(rm, theta);
        size_t zeroed = 0;
        for (double v : out.data)
            if (v == 0.0) ++zeroed;
        CHECK(zeroed == rm.size() - above);
    }
}

TEST_CASE("blend endpoints and channel broadcast") {
    const auto a = random_image(3, 8, 8, 61);
    const auto b = random_image(3, 8, 8, 62);

    CHECK(blend(a, b, Map2D(8, 8, 1.0)).data == a.data);
    CHECK(blend(a, b, Map2D(8, 8, 0.0)).data == b.data);

    const auto mid = blend(a, b, Map2D(8, 8, 0.5));
    for (size_t i = 0; i < mid.size(); ++i)
        CHECK(mid.data[i] == doctest::Approx(0.5 * (a.data[i] + b.data[i])).epsilon(1e-12));

    ImageTensor wrong(3, 4, 4, 0.0);
    CHECK_THROWS_AS(blend(a, wrong, Map2D(8, 8, 0.5)), std::invalid_argument);
    CHECK_THROWS_AS(blend(a, b, Map2D(4, 4, 0.5)), std::invalid_argument);
}

TEST_CASE("blend is pointwise-linear in the mask") {
    const auto a = random_image(3, 6, 6, 71);
    const auto b = random_image(3, 6, 6, 72);
    const auto m1 = random_map(6, 6, 73, 0.0, 1.0);
    const auto m2 = random_map(6, 6, 74, 0.0, 1.0);
    const double lambda = 0.3;

    Map2D mix(6, 6);
    for (size_t i = 0; i < mix.size(); ++i)
        mix.data[i] = lambda * m1.data[i] + (1 - lambda) * m2.data[i];

    const auto lhs = blend(a, b, mix);
    const auto r1 = blend(a, b, m1);
    const auto r2 = blend(a, b, m2);
    for (size_t i = 0; i < lhs.size(); ++i)
        CHECK(std::fabs(lhs.data[i] - (lambda * r1.data[i] + (1 - lambda) * r2.data[i])) <
              1e-9);
}

TEST_CASE("colormap_overlay endpoints") {
    const auto img = random_image(3, 5, 5, 81);
    const Map2D zeros(5, 5, 0.0);
    const Map2D ones(5, 5, 1.0);

    CHECK(colormap_overlay(img, zeros, 0.0).data == img.data);

    const auto full = colormap_overlay(img, zeros, 1.0);
    const size_t plane = 25;
    for (int c = 0; c < 3; ++c)
        for (size_t i = 0; i < plane; ++i)
            CHECK(full.data[c * plane + i] == doctest::Approx(kColormap[0][c] / 255.0));

    const auto half = colormap_overlay(img, ones, 0.5);
    for (int c = 0; c < 3; ++c)
        for (size_t i = 0; i < plane; ++i)
            CHECK(half.data[c * plane + i] ==
                  doctest::Approx(0.5 * img.data[c * plane + i] +
                                  0.5 * kColormap[255][c] / 255.0));
}

TEST_CASE("operations are bit-deterministic") {
    const auto img = random_image(3, 16, 16, 91);
    const auto m = random_map(16, 16, 92, 0.0, 1.0);
    CHECK(gaussian_blur2d(img, 5, 1.2).data == gaussian_blur2d(img, 5, 1.2).data);
    CHECK(bilinear_upsample(m, 33, 29).data == bilinear_upsample(m, 33, 29).data);
    CHECK(denoise(m, 63.0).data == denoise(m, 63.0).data);
}

#include "groupcam/imgproc.hpp"

#include <algorithm>
#include <cmath>

#include "groupcam/colormap.hpp"

namespace groupcam {

namespace {

std::vector<double> gaussian_kernel(int ksize, double sigma) {
    require(ksize >= 1 && ksize % 2 == 1, "gaussian_blur2d: ksize must be odd and positive");
    require(sigma > 0.0, "gaussian_blur2d: sigma must be positive");
    std::vector<double> k(ksize);
    const int r = ksize / 2;
    double sum = 0.0;
    for (int i = 0; i < ksize; ++i) {
        const double d = i - r;
        k[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Reflect index into [0, n-1], edge pixel repeated: -1 -> 0, n -> n-1.
// Folds repeatedly so kernels wider than the image stay valid.
int reflect(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

// Horizontal then vertical pass over one plane of row-major data.
void blur_plane(const double* src, double* dst, int h, int w,
                const std::vector<double>& kernel) {
    const int r = static_cast<int>(kernel.size()) / 2;
    std::vector<double> tmp(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -r; t <= r; ++t)
                acc += kernel[t + r] * src[static_cast<size_t>(y) * w + reflect(x + t, w)];
            tmp[static_cast<size_t>(y) * w + x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -r; t <= r; ++t)
                acc += kernel[t + r] * tmp[static_cast<size_t>(reflect(y + t, h)) * w + x];
            dst[static_cast<size_t>(y) * w + x] = acc;
        }
    }
}

}  // namespace

ImageTensor gaussian_blur2d(const ImageTensor& img, int ksize, double sigma) {
    const auto kernel = gaussian_kernel(ksize, sigma);
    ImageTensor out(img.channels, img.height, img.width);
    const size_t plane = static_cast<size_t>(img.height) * img.width;
    for (int c = 0; c < img.channels; ++c)
        blur_plane(img.data.data() + c * plane, out.data.data() + c * plane,
                   img.height, img.width, kernel);
    return out;
}

Map2D gaussian_blur2d(const Map2D& m, int ksize, double sigma) {
    const auto kernel = gaussian_kernel(ksize, sigma);
    Map2D out(m.height, m.width);
    blur_plane(m.data.data(), out.data.data(), m.height, m.width, kernel);
    return out;
}

Map2D bilinear_upsample(const Map2D& m, int out_h, int out_w) {
    require(out_h >= 1 && out_w >= 1, "bilinear_upsample: output dims must be >= 1");
    Map2D out(out_h, out_w);
    const double sy = static_cast<double>(m.height) / out_h;
    const double sx = static_cast<double>(m.width) / out_w;
    for (int i = 0; i < out_h; ++i) {
        double fy = (i + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(m.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, m.height - 1);
        const double wy = fy - y0;
        for (int j = 0; j < out_w; ++j) {
            double fx = (j + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(m.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, m.width - 1);
            const double wx = fx - x0;
            const double top = m.at(y0, x0) * (1.0 - wx) + m.at(y0, x1) * wx;
            const double bot = m.at(y1, x0) * (1.0 - wx) + m.at(y1, x1) * wx;
            out.at(i, j) = top * (1.0 - wy) + bot * wy;
        }
    }
    return out;
}

Map2D minmax_normalize(const Map2D& m) {
    const auto [lo_it, hi_it] = std::minmax_element(m.data.begin(), m.data.end());
    const double lo = *lo_it, hi = *hi_it;
    Map2D out(m.height, m.width);
    if (hi == lo) return out;  // constant map carries no ranking
    const double inv = 1.0 / (hi - lo);
    for (size_t i = 0; i < m.size(); ++i) out.data[i] = (m.data[i] - lo) * inv;
    return out;
}

double percentile(const Map2D& m, double theta) {
    require(theta >= 0.0 && theta <= 100.0, "percentile: theta must be in [0, 100]");
    std::vector<double> sorted(m.data);
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    size_t idx = 0;
    if (theta > 0.0) {
        idx = static_cast<size_t>(std::ceil(theta / 100.0 * n));
        idx = (idx == 0) ? 0 : idx - 1;
        idx = std::min(idx, n - 1);
    }
    return sorted[idx];
}

Map2D denoise(const Map2D& m, double theta) {
    const double p = percentile(m, theta);
    Map2D out(m.height, m.width);
    for (size_t i = 0; i < m.size(); ++i)
        out.data[i] = (m.data[i] > p) ? m.data[i] : 0.0;
    return out;
}

ImageTensor blend(const ImageTensor& original, const ImageTensor& baseline,
                  const Map2D& mask) {
    require(original.same_shape(baseline), "blend: original/baseline shape mismatch");
    require(mask.height == original.height && mask.width == original.width,
            "blend: mask dims must equal image dims");
    ImageTensor out(original.channels, original.height, original.width);
    const size_t plane = mask.size();
    for (int c = 0; c < original.channels; ++c) {
        const double* src = original.data.data() + c * plane;
        const double* base = baseline.data.data() + c * plane;
        double* dst = out.data.data() + c * plane;
        for (size_t i = 0; i < plane; ++i)
            dst[i] = src[i] * mask.data[i] + base[i] * (1.0 - mask.data[i]);
    }
    return out;
}

ImageTensor colormap_overlay(const ImageTensor& img, const Map2D& sal,
                             double alpha) {
    require(img.channels == 3, "colormap_overlay: image must be 3-channel");
    require(sal.height == img.height && sal.width == img.width,
            "colormap_overlay: saliency dims must equal image dims");
    ImageTensor out(3, img.height, img.width);
    const size_t plane = sal.size();
    for (size_t i = 0; i < plane; ++i) {
        const int idx = std::clamp(static_cast<int>(std::lround(sal.data[i] * 255.0)), 0, 255);
        for (int c = 0; c < 3; ++c) {
            const double cm = kColormap[idx][c] / 255.0;
            out.data[c * plane + i] = (1.0 - alpha) * img.data[c * plane + i] + alpha * cm;
        }
    }
    return out;
}

}  // namespace groupcam

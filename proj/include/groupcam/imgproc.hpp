#pragma once

#include "groupcam/tensor.hpp"

namespace groupcam {

// Pure, deterministic image/array primitives. All functions are free of
// shared state and safe to call concurrently.

// Separable Gaussian convolution per channel. Kernel normalized to sum 1,
// reflect padding at borders. ksize must be odd and positive, sigma > 0.
ImageTensor gaussian_blur2d(const ImageTensor& img, int ksize, double sigma);

// Same kernel applied to a single map (used for test oracles and masks).
Map2D gaussian_blur2d(const Map2D& m, int ksize, double sigma);

// Resample to H x W. Source coordinate for output index i is
// (i + 0.5) * (h / H) - 0.5, clamped to [0, h-1]. Half-pixel centers,
// no corner alignment. Output values stay within [min(m), max(m)].
Map2D bilinear_upsample(const Map2D& m, int out_h, int out_w);

// (m - min) / (max - min). A constant map maps to all zeros.
Map2D minmax_normalize(const Map2D& m);

// Nearest-rank percentile over all pixels, zeros included: sort ascending,
// return the element at index ceil(theta/100 * n) - 1 (index 0 for theta=0).
double percentile(const Map2D& m, double theta);

// Keep pixels strictly greater than percentile(m, theta), zero the rest.
Map2D denoise(const Map2D& m, double theta);

// Per-pixel original * mask + baseline * (1 - mask); mask broadcast across
// channels. Mask spatial dims must equal the image dims.
ImageTensor blend(const ImageTensor& original, const ImageTensor& baseline,
                  const Map2D& mask);

// Alpha-blend of the fixed 256-entry colormap lookup of sal over img.
// sal values in [0, 1], same H x W as img; img must have 3 channels.
ImageTensor colormap_overlay(const ImageTensor& img, const Map2D& sal,
                             double alpha);

}  // namespace groupcam

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace groupcam {

// Dense C x H x W image tensor, channel-major, values expected in [0, 1]
// once ingested. Plain storage, no views.
struct ImageTensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    ImageTensor() = default;
    ImageTensor(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w),
          data(static_cast<size_t>(c) * h * w, fill) {
        if (c < 1 || h < 1 || w < 1)
            throw std::invalid_argument("ImageTensor: dims must be >= 1");
    }

    double& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    size_t size() const { return data.size(); }

    bool same_shape(const ImageTensor& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

// Dense h x w map of reals (activation maps, masks, saliency grids).
struct Map2D {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Map2D() = default;
    Map2D(int h, int w, double fill = 0.0)
        : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {
        if (h < 1 || w < 1)
            throw std::invalid_argument("Map2D: dims must be >= 1");
    }

    double& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    double at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return data.size(); }
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace groupcam

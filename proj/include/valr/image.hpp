#pragma once

#include <vector>

#include "valr/util.hpp"

namespace valr {

// Square RGB image, pixels in [0,1], row-major, channel-last.
struct Image {
    int side = 0;
    int image_id = 0;
    std::vector<double> pixels;  // side*side*3

    static Image filled(int side, double r, double g, double b, int image_id = 0);

    double at(int y, int x, int c) const {
        return pixels[(size_t(y) * side + size_t(x)) * 3 + size_t(c)];
    }
    double& at(int y, int x, int c) {
        return pixels[(size_t(y) * side + size_t(x)) * 3 + size_t(c)];
    }

    void validate() const;
    Image upscaled(int factor) const;  // nearest-neighbor
};

}  // namespace valr

// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace wjdd {

// Planar CHW tensor of doubles. Channel count is arbitrary (unlike Image,
// which is fixed to 3 planes and even spatial dims).
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int c, int h, int w, double fill = 0.0) : channels(c), height(h), width(w) {
        if (c < 1 || h < 1 || w < 1)
            throw std::invalid_argument("Tensor dims must be positive, got " + std::to_string(c) +
                                        "x" + std::to_string(h) + "x" + std::to_string(w));
        data.assign(static_cast<std::size_t>(c) * h * w, fill);
    }

    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double* plane(int c) { return data.data() + static_cast<std::size_t>(c) * height * width; }
    const double* plane(int c) const {
        return data.data() + static_cast<std::size_t>(c) * height * width;
    }
    std::size_t size() const { return data.size(); }
    bool same_shape(const Tensor& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

} // namespace wjdd

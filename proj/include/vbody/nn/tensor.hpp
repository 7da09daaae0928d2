#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "vbody/errors.hpp"

namespace vbody::nn {

// Dense 4D feature tensor (channels, z, y, x), x fastest. Batch size is
// always 1 in this pipeline, so no batch axis.
template <class T>
struct Tensor {
    int c = 0, z = 0, y = 0, x = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int c_, int z_, int y_, int x_)
        : c(c_), z(z_), y(y_), x(x_),
          data(static_cast<std::size_t>(c_) * z_ * y_ * x_, T(0)) {}

    static Tensor zeros_like(const Tensor& o) { return Tensor(o.c, o.z, o.y, o.x); }

    std::size_t spatial() const { return static_cast<std::size_t>(z) * y * x; }
    std::size_t size() const { return static_cast<std::size_t>(c) * spatial(); }
    bool same_shape(const Tensor& o) const {
        return c == o.c && z == o.z && y == o.y && x == o.x;
    }
    std::string shape_string() const {
        return "(" + std::to_string(c) + ", " + std::to_string(z) + ", " +
               std::to_string(y) + ", " + std::to_string(x) + ")";
    }

    T* channel(int ci) { return data.data() + static_cast<std::size_t>(ci) * spatial(); }
    const T* channel(int ci) const {
        return data.data() + static_cast<std::size_t>(ci) * spatial();
    }
    T* row(int ci, int zi, int yi) {
        return channel(ci) + (static_cast<std::size_t>(zi) * y + yi) * x;
    }
    const T* row(int ci, int zi, int yi) const {
        return channel(ci) + (static_cast<std::size_t>(zi) * y + yi) * x;
    }
};

// Concatenates along the channel axis.
template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.z != b.z || a.y != b.y || a.x != b.x)
        throw ShapeError("concat_channels: spatial shapes differ: " +
                         a.shape_string() + " vs " + b.shape_string());
    Tensor<T> out(a.c + b.c, a.z, a.y, a.x);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
    return out;
}

// Splits a channel-concatenated gradient back into the two parts.
template <class T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& g, int first_c) {
    Tensor<T> a(first_c, g.z, g.y, g.x);
    Tensor<T> b(g.c - first_c, g.z, g.y, g.x);
    std::copy(g.data.begin(), g.data.begin() + a.data.size(), a.data.begin());
    std::copy(g.data.begin() + a.data.size(), g.data.end(), b.data.begin());
    return {std::move(a), std::move(b)};
}

// Named view of one parameter tensor and its gradient accumulator.
template <class T>
struct ParamRef {
    std::string name;
    std::vector<T>* value;
    std::vector<T>* grad;
};

}  // namespace vbody::nn

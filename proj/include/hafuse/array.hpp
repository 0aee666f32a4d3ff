#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hafuse/errors.hpp"

namespace hafuse {

// Every tensor in this codebase is rank-4, laid out row-major as
// (batch, channel, height, width). Vectors and scalars use size-1 axes.
struct Shape {
    int64_t b = 0;
    int64_t c = 0;
    int64_t h = 0;
    int64_t w = 0;

    int64_t count() const { return b * c * h * w; }
    int64_t plane() const { return h * w; }
    bool operator==(const Shape&) const = default;
};

inline std::string to_string(const Shape& s) {
    return "(" + std::to_string(s.b) + "," + std::to_string(s.c) + "," +
           std::to_string(s.h) + "," + std::to_string(s.w) + ")";
}

inline bool is_scalar(const Shape& s) { return s.b == 1 && s.c == 1 && s.h == 1 && s.w == 1; }

// Plain dense value with no autodiff attached. Parameters, images converted
// for the networks, and probe snapshots all use this type.
template <typename S>
struct Array {
    Shape shape{};
    std::vector<S> data;

    Array() = default;
    explicit Array(const Shape& s, S fill = S(0))
        : shape(s), data(static_cast<size_t>(s.count()), fill) {}
    Array(const Shape& s, std::vector<S> d) : shape(s), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != shape.count())
            throw DimensionError("Array: data size " + std::to_string(data.size()) +
                                 " does not match shape " + to_string(shape));
    }

    int64_t count() const { return shape.count(); }

    S& at(int64_t bi, int64_t ci, int64_t y, int64_t x) {
        return data[static_cast<size_t>(((bi * shape.c + ci) * shape.h + y) * shape.w + x)];
    }
    S at(int64_t bi, int64_t ci, int64_t y, int64_t x) const {
        return data[static_cast<size_t>(((bi * shape.c + ci) * shape.h + y) * shape.w + x)];
    }

    template <typename T>
    Array<T> cast() const {
        Array<T> out(shape);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
        return out;
    }
};

} // namespace hafuse

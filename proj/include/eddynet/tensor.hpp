#ifndef EDDYNET_TENSOR_HPP
#define EDDYNET_TENSOR_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eddynet {

/// Raised when tensor shapes do not fit an operation. The message names the
/// shapes involved.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Shape4 {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    std::size_t size() const { return n * c * h * w; }
    std::size_t plane() const { return h * w; }
    bool operator==(const Shape4&) const = default;

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
               std::to_string(w) + ")";
    }
};

/// Dense rank-4 array in (batch, channel, row, column) order, row-major.
template <typename T>
class Tensor4 {
public:
    using value_type = T;

    Tensor4() = default;
    explicit Tensor4(Shape4 shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}
    Tensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
        : Tensor4(Shape4{n, c, h, w}, fill) {}
    Tensor4(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
        if (data_.size() != shape_.size()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_.str());
        }
    }

    const Shape4& shape() const { return shape_; }
    std::size_t n() const { return shape_.n; }
    std::size_t c() const { return shape_.c; }
    std::size_t h() const { return shape_.h; }
    std::size_t w() const { return shape_.w; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t index(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
        return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    T& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
        return data_[index(n, c, y, x)];
    }
    const T& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
        return data_[index(n, c, y, x)];
    }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> span() { return data_; }
    std::span<const T> span() const { return data_; }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    /// Pointer to the (n, c) plane.
    T* plane(std::size_t n, std::size_t c) { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
    const T* plane(std::size_t n, std::size_t c) const {
        return data_.data() + (n * shape_.c + c) * shape_.plane();
    }
    /// Pointer to batch item n (c*h*w contiguous values).
    T* item(std::size_t n) { return data_.data() + n * shape_.c * shape_.plane(); }
    const T* item(std::size_t n) const { return data_.data() + n * shape_.c * shape_.plane(); }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    Tensor4<U> cast() const {
        Tensor4<U> out(shape_);
        std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
        return out;
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    bool operator==(const Tensor4&) const = default;

private:
    Shape4 shape_{};
    std::vector<T> data_;
};

using Tensor = Tensor4<float>;

inline void require_shape(const Shape4& got, const Shape4& want, const char* what) {
    if (got != want) {
        throw ShapeError(std::string(what) + ": expected shape " + want.str() + ", got " + got.str());
    }
}

/// Concatenates along the channel axis: (n, ca, h, w) ++ (n, cb, h, w).
template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
    if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
        throw ShapeError("concat_channels: incompatible shapes " + a.shape().str() + " and " +
                         b.shape().str());
    }
    Tensor4<T> out(a.n(), a.c() + b.c(), a.h(), a.w());
    const std::size_t la = a.c() * a.shape().plane();
    const std::size_t lb = b.c() * b.shape().plane();
    for (std::size_t i = 0; i < a.n(); ++i) {
        std::copy_n(a.item(i), la, out.item(i));
        std::copy_n(b.item(i), lb, out.item(i) + la);
    }
    return out;
}

/// Inverse of concat_channels: splits the first `ca` channels from the rest.
template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> split_channels(const Tensor4<T>& t, std::size_t ca) {
    if (ca > t.c()) {
        throw ShapeError("split_channels: cannot take " + std::to_string(ca) + " channels from " +
                         t.shape().str());
    }
    Tensor4<T> a(t.n(), ca, t.h(), t.w());
    Tensor4<T> b(t.n(), t.c() - ca, t.h(), t.w());
    const std::size_t la = a.c() * t.shape().plane();
    const std::size_t lb = b.c() * t.shape().plane();
    for (std::size_t i = 0; i < t.n(); ++i) {
        std::copy_n(t.item(i), la, a.item(i));
        std::copy_n(t.item(i) + la, lb, b.item(i));
    }
    return {std::move(a), std::move(b)};
}

}  // namespace eddynet

#endif  // EDDYNET_TENSOR_HPP

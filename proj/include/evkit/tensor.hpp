#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "evkit/errors.hpp"

namespace evkit {

using Shape = std::vector<std::int64_t>;

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != 0) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

// Dense N-dimensional array of doubles, row-major.
// Invariants: every extent >= 1 and product(shape) == data.size().
// A default-constructed Tensor is empty (rank 0, no data) and is only a
// placeholder; every factory below yields a validated non-empty tensor.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        data_.assign(checked_volume(shape_), 0.0);
    }

    Tensor(Shape shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_volume(shape_) != data_.size()) {
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_str(shape_));
        }
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, double value) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = value;
        return t;
    }

    static Tensor identity(std::int64_t n) {
        Tensor t({n, n});
        for (std::int64_t i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }

    std::size_t rank() const { return shape_.size(); }
    const Shape& shape() const { return shape_; }
    std::int64_t extent(std::size_t dim) const { return shape_.at(dim); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    double flat(std::size_t i) const { return data_[i]; }
    double& flat(std::size_t i) { return data_[i]; }

    template <std::integral... Ix>
    double operator()(Ix... ix) const {
        return data_[offset(ix...)];
    }

    template <std::integral... Ix>
    double& operator()(Ix... ix) {
        return data_[offset(ix...)];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    template <std::integral... Ix>
    std::size_t offset(Ix... ix) const {
        if (sizeof...(Ix) != shape_.size()) {
            throw DimensionError("index rank " + std::to_string(sizeof...(Ix)) +
                                 " does not match tensor shape " + shape_str(shape_));
        }
        const std::int64_t idx[] = {static_cast<std::int64_t>(ix)...};
        std::size_t off = 0;
        for (std::size_t d = 0; d < shape_.size(); ++d) {
            off = off * static_cast<std::size_t>(shape_[d]) + static_cast<std::size_t>(idx[d]);
        }
        return off;
    }

    static std::size_t checked_volume(const Shape& shape) {
        std::size_t volume = 1;
        for (std::int64_t e : shape) {
            if (e < 1) {
                throw DimensionError("tensor extents must be >= 1, got " + shape_str(shape));
            }
            volume *= static_cast<std::size_t>(e);
        }
        return volume;
    }

    Shape shape_;
    std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(what) + ": shape " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.flat(i) += b.flat(i);
    return out;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (double& x : out.data()) x *= s;
    return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a.flat(i) - b.flat(i)));
    }
    return m;
}

// Frobenius inner product; the scalar readout used by gradient checks.
inline double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.flat(i) * b.flat(i);
    return s;
}

}  // namespace evkit

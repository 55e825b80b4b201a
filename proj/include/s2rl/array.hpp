#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "s2rl/errors.hpp"

namespace s2rl::numgrad {

// Dense row-major array of 64-bit floats. The only tensor type in the
// project; everything upstream (states, actions, weights, batches) is one
// of these.
class Array {
public:
    Array() = default;

    explicit Array(std::vector<int> shape);
    Array(std::vector<int> shape, std::vector<double> values);

    static Array zeros(std::vector<int> shape) { return Array(std::move(shape)); }
    static Array full(std::vector<int> shape, double v);
    static Array scalar(double v) { return Array({1}, {v}); }
    static Array vec(std::vector<double> values);
    static Array matrix(int rows, int cols, std::vector<double> values);

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    std::size_t numel() const { return v_.size(); }

    // 2-D views; a 1-D array acts as a single row.
    int rows() const { return ndim() <= 1 ? 1 : shape_[0]; }
    int cols() const { return ndim() == 0 ? 0 : shape_.back(); }

    double& at(std::size_t i) { return v_[i]; }
    double at(std::size_t i) const { return v_[i]; }
    double& at(int r, int c) { return v_[static_cast<std::size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return v_[static_cast<std::size_t>(r) * cols() + c]; }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    std::vector<double>& values() { return v_; }
    const std::vector<double>& values() const { return v_; }

    bool same_shape(const Array& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    std::string shape_str() const;

    bool operator==(const Array& o) const { return shape_ == o.shape_ && v_ == o.v_; }

private:
    std::vector<int> shape_;
    std::vector<double> v_;
};

// Throws DimensionError mentioning `where` if shapes differ.
void check_same_shape(const Array& a, const Array& b, const char* where);

}  // namespace s2rl::numgrad

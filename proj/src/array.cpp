#include "s2rl/array.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace s2rl::numgrad {

namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw DimensionError("negative dimension in shape");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

}  // namespace

Array::Array(std::vector<int> shape) : shape_(std::move(shape)), v_(shape_numel(shape_), 0.0) {}

Array::Array(std::vector<int> shape, std::vector<double> values)
        : shape_(std::move(shape)), v_(std::move(values)) {
    if (shape_numel(shape_) != v_.size()) {
        throw DimensionError("shape " + shape_str() + " does not match value count " +
                             std::to_string(v_.size()));
    }
}

Array Array::full(std::vector<int> shape, double v) {
    Array a(std::move(shape));
    for (double& x : a.v_) x = v;
    return a;
}

Array Array::vec(std::vector<double> values) {
    int n = static_cast<int>(values.size());
    return Array({n}, std::move(values));
}

Array Array::matrix(int rows, int cols, std::vector<double> values) {
    return Array({rows, cols}, std::move(values));
}

bool Array::all_finite() const {
    for (double x : v_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

std::string Array::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << 'x';
        os << shape_[i];
    }
    os << ']';
    return os.str();
}

void check_same_shape(const Array& a, const Array& b, const char* where) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
    }
}

}  // namespace s2rl::numgrad

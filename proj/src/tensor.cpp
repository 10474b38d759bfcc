#include "astream/tensor.hpp"

#include <cmath>
#include <utility>

namespace astream {

std::size_t shape_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("tensor: negative dimension in " + shape_str(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor Tensor::zeros(std::vector<int> shape) {
    Tensor t;
    std::size_t n = shape_size(shape);
    t.shape_ = std::move(shape);
    t.values_.assign(n, 0.0);
    return t;
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t = zeros(std::move(shape));
    for (double& x : t.values_) x = v;
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
    if (shape_size(shape) != values.size()) {
        throw ShapeError("tensor: " + std::to_string(values.size()) + " values do not fill shape " +
                         astream::shape_str(shape));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.values_ = std::move(values);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : values_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const { return astream::shape_str(shape_); }

}  // namespace astream

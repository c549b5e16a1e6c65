#include "smoothac/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace smoothac {

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    if (shape_.size() > 2) throw DimensionError("tensor rank above 2 is unsupported: " + shape_string(shape_));
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, const std::vector<double>& data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (shape_.size() > 2) throw DimensionError("tensor rank above 2 is unsupported: " + shape_string(shape_));
    if (data_.size() != shape_numel(shape_)) {
        throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_string(shape_));
    }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
    Shape shape{values.size()};
    return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(data));
}


double Tensor::item() const {
    if (data_.size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace smoothac

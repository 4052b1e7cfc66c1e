#include "pointhead/tensor.hpp"

#include <cmath>
#include <sstream>

namespace pointhead {

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t e : shape) {
        if (e <= 0) {
            throw ShapeError("non-positive extent in shape " + shape_to_string(shape));
        }
        n *= e;
    }
    return n;
}

std::string shape_to_string(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

TensorValue TensorValue::zeros(std::vector<std::int64_t> shape) {
    const auto n = shape_numel(shape);
    return TensorValue(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

TensorValue TensorValue::full(std::vector<std::int64_t> shape, double value) {
    if (!std::isfinite(value)) {
        throw NumericError("non-finite fill value");
    }
    const auto n = shape_numel(shape);
    return TensorValue(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value));
}

TensorValue TensorValue::scalar(double value) {
    return full({}, value);
}

TensorValue TensorValue::of(std::vector<std::int64_t> shape, std::vector<double> data) {
    const auto n = shape_numel(shape);
    if (n != static_cast<std::int64_t>(data.size())) {
        throw ShapeError("buffer length " + std::to_string(data.size()) +
                         " does not match shape " + shape_to_string(shape));
    }
    TensorValue t(std::move(shape), std::move(data));
    if (!t.all_finite()) {
        throw NumericError("non-finite entry in tensor of shape " + t.shape_str());
    }
    return t;
}

std::int64_t TensorValue::extent(std::int64_t axis) const {
    if (axis < 0) axis += rank();
    if (axis < 0 || axis >= rank()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str());
    }
    return shape_[static_cast<std::size_t>(axis)];
}

double& TensorValue::at(std::int64_t i, std::int64_t j) {
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
}

double TensorValue::at(std::int64_t i, std::int64_t j) const {
    return data_[static_cast<std::size_t>(i * shape_[1] + j)];
}

double& TensorValue::at(std::int64_t i, std::int64_t j, std::int64_t k) {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
}

double TensorValue::at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
}

double TensorValue::item() const {
    if (numel() != 1) {
        throw ContractError("item() requires a single-element tensor, got " + shape_str());
    }
    return data_[0];
}

bool TensorValue::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string TensorValue::shape_str() const {
    return shape_to_string(shape_);
}

} // namespace pointhead

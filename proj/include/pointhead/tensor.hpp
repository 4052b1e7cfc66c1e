#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pointhead/errors.hpp"

namespace pointhead {

/// Dense fp64 array in row-major order. Scalars have an empty shape and one
/// element. Values are plain data: copyable, no graph state attached.
class TensorValue {
  public:
    TensorValue() : data_(1, 0.0) {}

    static TensorValue zeros(std::vector<std::int64_t> shape);
    static TensorValue full(std::vector<std::int64_t> shape, double value);
    static TensorValue scalar(double value);
    // Validates length and finiteness.
    static TensorValue of(std::vector<std::int64_t> shape, std::vector<double> data);

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t extent(std::int64_t axis) const;
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& buffer() { return data_; }
    const std::vector<double>& buffer() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // Row-major accessors for common ranks.
    double& at(std::int64_t i, std::int64_t j);
    double at(std::int64_t i, std::int64_t j) const;
    double& at(std::int64_t i, std::int64_t j, std::int64_t k);
    double at(std::int64_t i, std::int64_t j, std::int64_t k) const;

    double item() const;

    bool same_shape(const TensorValue& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    std::string shape_str() const;

  private:
    TensorValue(std::vector<std::int64_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {}

    std::vector<std::int64_t> shape_;
    std::vector<double> data_;
};

std::int64_t shape_numel(const std::vector<std::int64_t>& shape);
std::string shape_to_string(const std::vector<std::int64_t>& shape);

} // namespace pointhead

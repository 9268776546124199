#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "ecgdl/errors.hpp"

namespace ecgdl {

/// Dense row-major n-dimensional array of doubles.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(numel_of(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (numel_of(shape_) != data_.size())
            throw ShapeError("tensor data size does not match shape");
    }

    static std::size_t numel_of(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t numel() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 3-d indexing [b][c][t], the layout the network uses throughout
    double& at3(std::size_t b, std::size_t c, std::size_t t) {
        return data_[(b * shape_[1] + c) * shape_[2] + t];
    }
    double at3(std::size_t b, std::size_t c, std::size_t t) const {
        return data_[(b * shape_[1] + c) * shape_[2] + t];
    }

    double& at2(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at2(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

} // namespace ecgdl

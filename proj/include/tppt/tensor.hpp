#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tppt {

// Dense row-major tensor of 64-bit reals.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> shape);
    Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::int64_t> shape, double value);
    static Tensor scalar(double value) { return Tensor({1}, {value}); }

    const std::vector<std::int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }

    // Leading dimensions collapsed; last dimension as columns.
    std::int64_t rows() const { return shape_.empty() ? 0 : numel() / cols(); }
    std::int64_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    double& at(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * cols() + c)]; }
    double at(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * cols() + c)]; }

    void fill(double value);
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_string() const;

private:
    std::vector<std::int64_t> shape_;
    std::vector<double> data_;
};

// C(m,n) = A(m,k) * B(k,n), optionally accumulating into C.
void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate);
// C(k,n) += A(m,k)^T * B(m,n)
void matmul_transA(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate);
// C(m,k) += A(m,n) * B(k,n)^T
void matmul_transB(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate);

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad; // same shape as value

    Parameter() = default;
    Parameter(std::string param_name, Tensor initial)
        : name(std::move(param_name)), value(std::move(initial)), grad(Tensor::zeros(value.shape())) {}
};

} // namespace tppt

#include "tppt/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "tppt/error.hpp"

namespace tppt {

namespace {

std::int64_t shape_product(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) {
        if (d < 0) throw validation_error("negative tensor dimension");
        n *= d;
    }
    return n;
}

} // namespace

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_product(shape_)), 0.0) {}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data) : shape_(std::move(shape)) {
    if (shape_product(shape_) != static_cast<std::int64_t>(data.size())) {
        throw validation_error("tensor data length does not match shape");
    }
    data_ = std::move(data);
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string Tensor::shape_string() const {
    std::ostringstream out;
    out << "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) out << ",";
        out << shape_[i];
    }
    out << ")";
    return out.str();
}

void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    const std::int64_t m = a.rows(), k = a.cols(), n = b.cols();
    if (!accumulate) c.fill(0.0);
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t l = 0; l < k; ++l) {
            const double av = pa[i * k + l];
            if (av == 0.0) continue;
            const double* brow = pb + l * n;
            double* crow = pc + i * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_transA(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    const std::int64_t m = a.rows(), k = a.cols(), n = b.cols();
    if (!accumulate) c.fill(0.0);
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = pa + i * k;
        const double* brow = pb + i * n;
        for (std::int64_t l = 0; l < k; ++l) {
            const double av = arow[l];
            if (av == 0.0) continue;
            double* crow = pc + l * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_transB(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    const std::int64_t m = a.rows(), n = a.cols(), k = b.rows();
    if (!accumulate) c.fill(0.0);
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = pa + i * n;
        for (std::int64_t j = 0; j < k; ++j) {
            const double* brow = pb + j * n;
            double acc = 0.0;
            for (std::int64_t l = 0; l < n; ++l) acc += arow[l] * brow[l];
            pc[i * k + j] += acc;
        }
    }
}

} // namespace tppt

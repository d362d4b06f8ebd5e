#include "dimel/numkernel/tensor.hpp"

#include "dimel/errors.hpp"

#include <algorithm>
#include <cmath>

namespace dimel::nk {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string());
    }
}

Tensor2 Tensor2::row_vector(std::span<const double> values) {
    return Tensor2(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Tensor2 Tensor2::identity(std::size_t n) {
    Tensor2 out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
    return out;
}

bool Tensor2::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

std::string Tensor2::shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul shape mismatch: " + a.shape_string() + " x " +
                             b.shape_string());
    }
    Tensor2 out(a.rows(), b.cols());
    const std::size_t n = a.cols();
    const std::size_t m = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* out_row = out.row(i).data();
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* b_row = b.row(k).data();
            for (std::size_t j = 0; j < m; ++j) out_row[j] += aik * b_row[j];
        }
    }
    return out;
}

Tensor2 transpose(const Tensor2& a) {
    Tensor2 out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

std::vector<double> softmax(std::span<const double> x) {
    if (x.empty()) throw DomainError("softmax of empty input");
    double peak = x[0];
    for (double v : x) {
        if (!std::isfinite(v)) throw DomainError("softmax input is not finite");
        peak = std::max(peak, v);
    }
    std::vector<double> out(x.size());
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - peak);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("dot length mismatch: " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine(std::span<const double> a, std::span<const double> b) {
    const double ab = dot(a, b);
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw DomainError("cosine of zero-norm vector");
    return std::clamp(ab / (na * nb), -1.0, 1.0);
}

} // namespace dimel::nk

#pragma once

#include "dimel/contrastive.hpp"
#include "dimel/fusion.hpp"
#include "dimel/numkernel/random.hpp"
#include "dimel/numkernel/tape.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <unistd.h>

namespace testsupport {

using dimel::nk::Tensor2;

inline Tensor2 random_tensor(dimel::nk::CounterRng& rng, std::size_t r, std::size_t c, double lo = -1.0,
                             double hi = 1.0) {
    Tensor2 t(r, c);
    for (double& x : t.data()) x = rng.uniform(lo, hi);
    return t;
}

inline std::vector<double> random_vector(dimel::nk::CounterRng& rng, std::size_t n, double lo = -1.0,
                                         double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

/// max_i |a_i - n_i| / max(max|a|, max|n|, floor), the tensor-wise relative error.
inline double relative_error(const Tensor2& analytic, const Tensor2& numeric, double floor = 1e-8) {
    double diff = 0.0, scale = floor;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff = std::max(diff, std::abs(analytic.data()[i] - numeric.data()[i]));
        scale = std::max({scale, std::abs(analytic.data()[i]), std::abs(numeric.data()[i])});
    }
    return diff / scale;
}

/// Central differences of f with respect to every entry of x.
inline Tensor2 numeric_gradient(const std::function<double()>& f, Tensor2& x, double h = 1e-5) {
    Tensor2 g(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x.data()[i];
        x.data()[i] = saved + h;
        const double up = f();
        x.data()[i] = saved - h;
        const double down = f();
        x.data()[i] = saved;
        g.data()[i] = (up - down) / (2 * h);
    }
    return g;
}

/// Loss of one sample through the full fusion forward. When grads is given,
/// also fills it with d loss / d param in AttentionParams::named() order.
inline double model_loss(const dimel::fusion::AttentionParams& params,
                         const dimel::fusion::FeatureBundle& bundle, const std::vector<double>& positive,
                         const Tensor2& negatives, dimel::contrastive::LossMode mode,
                         std::vector<Tensor2>* grads = nullptr) {
    dimel::nk::Tape tape;
    const auto bound = dimel::fusion::bind(tape, params, grads != nullptr);
    const auto fused = dimel::fusion::forward(tape, bundle, bound);
    const auto loss = dimel::contrastive::pair_loss(fused.fused, tape.constant(Tensor2::row_vector(positive)),
                                                    tape.constant(negatives), mode);
    if (grads) {
        tape.backward(loss);
        grads->clear();
        for (const auto& v : bound.ordered) grads->push_back(v.grad());
    }
    return loss.value()(0, 0);
}

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("dimel_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

} // namespace testsupport

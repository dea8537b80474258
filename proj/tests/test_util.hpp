#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "spcnav/tensor.hpp"

namespace testutil {

inline spcnav::Tensor random_leaf(std::mt19937_64& rng, std::vector<int> shape, double lo = -1.0,
                                  double hi = 1.0) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> data(n);
    for (auto& v : data) v = dist(rng);
    return spcnav::Tensor::leaf(std::move(data), std::move(shape));
}

inline spcnav::Tensor random_const(std::mt19937_64& rng, std::vector<int> shape, double lo = -1.0,
                                   double hi = 1.0) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> data(n);
    for (auto& v : data) v = dist(rng);
    return spcnav::Tensor::from(std::move(data), std::move(shape));
}

// Central-difference gradient check of a scalar-valued computation against
// the tape gradients. Returns the worst elementwise discrepancy, where the
// error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-5).
inline double grad_check(const std::function<spcnav::Tensor()>& f,
                         const std::vector<spcnav::Tensor>& leaves, double h = 1e-5) {
    using namespace spcnav;
    for (const auto& l : leaves) {
        l.node()->ensure_grad();
        std::fill(l.node()->grad.begin(), l.node()->grad.end(), 0.0);
    }
    {
        Tape tape;
        Tensor loss = f();
        tape.backward(loss);
    }
    std::vector<std::vector<double>> analytic;
    for (const auto& l : leaves) analytic.push_back(l.node()->grad);

    double worst = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& data = leaves[li].node()->value;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double keep = data[i];
            data[i] = keep + h;
            const double up = f().item();
            data[i] = keep - h;
            const double down = f().item();
            data[i] = keep;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[li][i];
            const double err =
                std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-5});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace testutil

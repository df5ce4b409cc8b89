#pragma once

#include <functional>
#include <vector>

#include "tppt/tensor.hpp"

namespace tppt {

// value <- value - lr * gradient, then gradients are zeroed.
void sgd_step(std::vector<Parameter*>& params, double lr);

void zero_grads(std::vector<Parameter*>& params);

// Scales all gradients by max_norm/|g| when the global norm exceeds max_norm.
// Returns the pre-clip global norm.
double clip_grad_norm(std::vector<Parameter*>& params, double max_norm);

// 0.5 * lr0 * (1 + cos(pi * epoch / total)).
double cosine_lr(int epoch, int total_epochs, double lr0);

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::int64_t worst_index = -1;
};

// Central-difference check of the analytic gradients produced by `backward`
// against the loss closure `forward`. Checks up to max_coords_per_param
// randomly chosen coordinates per parameter; relative error uses
// max(|analytic|, |numeric|, 1e-8) as the denominator.
GradCheckResult grad_check(const std::function<double()>& forward,
                           const std::function<void()>& backward,
                           std::vector<Parameter*>& params,
                           double h = 1e-4,
                           int max_coords_per_param = 200,
                           std::uint64_t seed = 0);

} // namespace tppt

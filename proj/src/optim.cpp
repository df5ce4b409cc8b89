#include "tppt/optim.hpp"

#include <cmath>

#include "tppt/error.hpp"
#include "tppt/rng.hpp"

namespace tppt {

void sgd_step(std::vector<Parameter*>& params, double lr) {
    for (Parameter* p : params) {
        for (std::int64_t i = 0; i < p->value.numel(); ++i) {
            p->value[i] -= lr * p->grad[i];
        }
        p->grad.fill(0.0);
    }
}

void zero_grads(std::vector<Parameter*>& params) {
    for (Parameter* p : params) p->grad.fill(0.0);
}

double clip_grad_norm(std::vector<Parameter*>& params, double max_norm) {
    double sq = 0.0;
    for (Parameter* p : params) {
        for (std::int64_t i = 0; i < p->grad.numel(); ++i) sq += p->grad[i] * p->grad[i];
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double factor = max_norm / norm;
        for (Parameter* p : params) {
            for (std::int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] *= factor;
        }
    }
    return norm;
}

double cosine_lr(int epoch, int total_epochs, double lr0) {
    if (total_epochs < 1) throw validation_error("cosine_lr: total epochs must be positive");
    if (epoch < 0 || epoch > total_epochs) throw validation_error("cosine_lr: epoch out of range");
    const double lr = 0.5 * lr0 * (1.0 + std::cos(M_PI * static_cast<double>(epoch) / total_epochs));
    return lr > 0.0 ? lr : 0.0;
}

GradCheckResult grad_check(const std::function<double()>& forward,
                           const std::function<void()>& backward,
                           std::vector<Parameter*>& params,
                           double h,
                           int max_coords_per_param,
                           std::uint64_t seed) {
    zero_grads(params);
    backward();

    GradCheckResult result;
    Rng rng(mix_seed(seed, 0x6772616463686bULL));
    for (Parameter* p : params) {
        const std::int64_t n = p->value.numel();
        std::vector<std::int64_t> coords;
        if (n <= max_coords_per_param) {
            coords.resize(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
        } else {
            const auto picks = rng.sample_without_replacement(static_cast<std::size_t>(n),
                                                              static_cast<std::size_t>(max_coords_per_param));
            coords.assign(picks.begin(), picks.end());
        }
        for (std::int64_t idx : coords) {
            const double saved = p->value[idx];
            p->value[idx] = saved + h;
            const double f_plus = forward();
            p->value[idx] = saved - h;
            const double f_minus = forward();
            p->value[idx] = saved;

            const double numeric = (f_plus - f_minus) / (2.0 * h);
            const double analytic = p->grad[idx];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            const double rel = std::abs(analytic - numeric) / denom;
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst_param = p->name;
                result.worst_index = idx;
            }
        }
    }
    return result;
}

} // namespace tppt

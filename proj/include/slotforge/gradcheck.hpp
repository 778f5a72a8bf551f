#pragma once

#include <functional>
#include <string>

#include "slotforge/params.hpp"

namespace slotforge {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    size_t worst_index = 0;
    size_t checked = 0;
    bool finite = true;
    std::string failure;

    bool passed(double tol) const { return finite && max_rel_err < tol; }
};

// Central-difference verification of reverse-mode gradients. loss_fn builds a
// fresh graph from the store on every call; 64-bit scalars are required for
// the stated tolerances to be reachable.
inline GradCheckReport gradient_check(
    const std::function<Var(GraphCtx<double>&)>& loss_fn, ParamStore<double>& params,
    double eps = 1e-5) {
    GradCheckReport rep;

    auto eval = [&](std::map<std::string, Tensor<double>>* grads_out) -> double {
        Graph<double> g;
        GraphCtx<double> ctx(g, params);
        const Var loss = loss_fn(ctx);
        require(g.val(loss).numel() == 1, "gradient_check: loss must be scalar");
        const double value = g.val(loss)[0];
        if (grads_out) {
            g.backward(loss);
            *grads_out = ctx.collect_grads();
        }
        return value;
    };

    std::map<std::string, Tensor<double>> analytic;
    double base = 0.0;
    try {
        base = eval(&analytic);
    } catch (const ContractError& e) {
        rep.finite = false;
        rep.failure = std::string("base evaluation failed: ") + e.what();
        return rep;
    }
    if (!std::isfinite(base)) {
        rep.finite = false;
        rep.failure = "non-finite base loss";
        return rep;
    }

    for (auto& [name, entry] : params) {
        if (!entry.trainable) continue;
        Tensor<double>& theta = entry.value;
        const Tensor<double>& a = analytic.at(name);
        for (size_t i = 0; i < theta.numel(); ++i) {
            const double orig = theta[i];
            double lp = 0.0, lm = 0.0;
            try {
                theta[i] = orig + eps;
                lp = eval(nullptr);
                theta[i] = orig - eps;
                lm = eval(nullptr);
            } catch (const ContractError& e) {
                theta[i] = orig;
                rep.finite = false;
                rep.failure = "non-finite loss while perturbing " + name + ": " + e.what();
                return rep;
            }
            theta[i] = orig;
            if (!std::isfinite(lp) || !std::isfinite(lm)) {
                rep.finite = false;
                rep.failure = "non-finite loss while perturbing " + name;
                return rep;
            }
            const double numeric = (lp - lm) / (2.0 * eps);
            const double denom = std::max({std::abs(a[i]), std::abs(numeric), 1e-8});
            const double rel = std::abs(a[i] - numeric) / denom;
            ++rep.checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = name;
                rep.worst_index = i;
            }
        }
    }
    return rep;
}

}  // namespace slotforge

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gantts/ops.hpp"

namespace gantts {

struct GradCheckReport {
    std::string op_name;
    std::vector<double> per_input_max_rel_err;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Central-difference gradient verification.  `f` builds a scalar objective on
// the given tape from the watched inputs; the analytic gradient from one
// backward pass is compared against (f(x+eps e) - f(x-eps e)) / (2 eps) per
// coordinate.  Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
inline GradCheckReport grad_check(
    const std::string& op_name,
    const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& inputs_in, double eps = 1e-5, double tol = 1e-6) {
    check(eps > 0.0, "grad_check: eps must be positive");
    // Private copies so the probe writes never touch caller-owned payloads.
    std::vector<Tensor> inputs;
    inputs.reserve(inputs_in.size());
    for (const Tensor& t : inputs_in) inputs.push_back(Tensor::from(t.shape, *t.data));

    Tape tape;
    std::vector<Tensor> watched;
    watched.reserve(inputs.size());
    for (Tensor& t : inputs) watched.push_back(tape.watch(t));
    Tensor root = f(tape, watched);
    check(root.numel() == 1, "grad_check: objective must be scalar");
    tape.backward(root);

    std::vector<std::vector<double>> analytic;
    for (const Tensor& w : watched) {
        const std::vector<double>* g = tape.grad_of(w);
        analytic.push_back(g ? *g : std::vector<double>(static_cast<size_t>(w.numel()), 0.0));
    }

    auto eval = [&]() {
        Tape t2;
        std::vector<Tensor> w2;
        w2.reserve(inputs.size());
        for (Tensor& t : inputs) w2.push_back(t2.watch(t));
        return f(t2, w2).values()[0];
    };

    GradCheckReport rep;
    rep.op_name = op_name;
    for (size_t i = 0; i < inputs.size(); ++i) {
        double worst = 0.0;
        std::vector<double>& vals = *inputs[i].data;
        for (size_t j = 0; j < vals.size(); ++j) {
            const double saved = vals[j];
            vals[j] = saved + eps;
            const double fp = eval();
            vals[j] = saved - eps;
            const double fm = eval();
            vals[j] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double ana = analytic[i][j];
            const double denom = std::max({std::abs(ana), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(numeric - ana) / denom);
        }
        rep.per_input_max_rel_err.push_back(worst);
        rep.max_rel_err = std::max(rep.max_rel_err, worst);
    }
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

}  // namespace gantts

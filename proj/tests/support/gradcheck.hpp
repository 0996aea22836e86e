#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "nrsfm/tape.hpp"

namespace testsupport {

using nrsfm::Tape;
using nrsfm::Tensor;
using nrsfm::Var;

// builds a scalar loss from leaves registered in input order
using BuildFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckResult {
    bool ok = true;
    std::string detail;
};

inline double eval_scalar(const std::vector<Tensor>& inputs, const BuildFn& build) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(inputs.size());
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
    return tape.value(build(tape, leaves)).value();
}

// Central finite differences against reverse-mode gradients for every element
// of every leaf.
inline GradCheckResult check_gradients(std::vector<Tensor> inputs, const BuildFn& build,
                                       double h = 1e-5, double rtol = 1e-4, double atol = 1e-8) {
    std::vector<Tensor> grads;
    {
        Tape tape;
        std::vector<Var> leaves;
        leaves.reserve(inputs.size());
        for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
        tape.backward(build(tape, leaves));
        for (Var v : leaves) grads.push_back(tape.grad(v));
    }
    for (std::size_t li = 0; li < inputs.size(); ++li) {
        for (std::size_t i = 0; i < inputs[li].size(); ++i) {
            const double orig = inputs[li][i];
            inputs[li][i] = orig + h;
            const double fp = eval_scalar(inputs, build);
            inputs[li][i] = orig - h;
            const double fm = eval_scalar(inputs, build);
            inputs[li][i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double analytic = grads[li][i];
            const double err = std::abs(numeric - analytic);
            const double tol = atol + rtol * std::max(std::abs(numeric), std::abs(analytic));
            if (!(err <= tol)) {
                std::ostringstream os;
                os << "leaf " << li << " element " << i << ": analytic " << analytic
                   << " vs numeric " << numeric << " (err " << err << ", tol " << tol << ")";
                return {false, os.str()};
            }
        }
    }
    return {true, ""};
}

}  // namespace testsupport

#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ruled {

struct LbfgsOptions {
    int memory = 10;
    int max_iterations = 300;
    double relative_tolerance = 1e-6;  // stop when (f_k - f_k+1) / |f_k| drops below this
    double gradient_tolerance = 1e-12;
    int max_halvings = 60;
    double armijo = 1e-4;
};

struct LbfgsReport {
    int iterations = 0;
    int evaluations = 0;
    int rejected_steps = 0;           // trial steps rejected by the feasibility test
    int feasibility_violations = 0;   // accepted iterates failing the test (must stay 0)
    std::vector<double> energies;     // f after each accepted step, energies[0] = f(x0)
    bool line_search_failed = false;
    std::string status;
};

/// Value and gradient. The gradient pointer is never null.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;
/// Hard constraint test; steps to points failing it are halved.
using FeasibilityTest = std::function<bool(const Eigen::VectorXd& x)>;

/// Limited-memory BFGS with a backtracking line search that halves the step
/// until the point is feasible and satisfies the Armijo condition. The
/// accepted energies are non-increasing. `x` must be feasible on entry and
/// holds the best point on return.
LbfgsReport minimize_lbfgs(const Objective& f, const FeasibilityTest& feasible, Eigen::VectorXd& x,
                           const LbfgsOptions& opt = {});

} // namespace ruled

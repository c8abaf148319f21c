#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace ruled {

/// Residuals r(x) and, when `jacobian` is non-null, their sparse Jacobian.
/// The objective is sum r_i^2.
using ResidualFunction =
    std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& residuals, Eigen::SparseMatrix<double>* jacobian)>;

struct DoglegOptions {
    int max_iterations = 200;
    double gradient_tolerance = 1e-8;  // on the max-norm of the objective gradient 2 J^T r
    double function_tolerance = 1e-6;  // stop when an accepted step lowers the objective by less, relatively
    double parameter_tolerance = 1e-8; // stop when an accepted step is shorter than this times |x|
    double initial_radius = 0.05;
    double min_radius = 1e-14;
    double regularization = 1e-10;     // relative to the largest diagonal entry of J^T J
};

struct DoglegReport {
    int iterations = 0;
    int accepted = 0;
    std::vector<double> energies;  // objective after each accepted step, energies[0] = start
    double gradient_norm = 0.0;
    std::string status;
};

/// Powell's dogleg trust-region method. Steps are taken only if they lower
/// the objective, so the accepted energies are non-increasing.
DoglegReport minimize_dogleg(const ResidualFunction& f, Eigen::VectorXd& x, const DoglegOptions& opt = {});

} // namespace ruled

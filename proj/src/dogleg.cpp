#include "ruled/dogleg.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseCholesky>

#include "ruled/error.hpp"

namespace ruled {

DoglegReport minimize_dogleg(const ResidualFunction& f, Eigen::VectorXd& x, const DoglegOptions& opt)
{
    DoglegReport rep;
    Eigen::VectorXd r, r_trial;
    Eigen::SparseMatrix<double> J;
    f(x, r, &J);
    if (J.rows() != r.size() || J.cols() != x.size()) throw PreconditionError("minimize_dogleg: Jacobian shape mismatch");
    double energy = r.squaredNorm();
    if (!std::isfinite(energy)) throw PreconditionError("minimize_dogleg: non-finite objective at the start");
    rep.energies.push_back(energy);
    double radius = opt.initial_radius;
    bool fresh = true;
    Eigen::VectorXd g, step_gn, step_sd;

    while (true) {
        if (fresh) {
            g = J.transpose() * r;
            rep.gradient_norm = 2.0 * (g.size() ? g.cwiseAbs().maxCoeff() : 0.0);
            if (rep.gradient_norm < opt.gradient_tolerance) {
                rep.status = "gradient_tolerance";
                break;
            }
            // Gauss-Newton step with a small ridge against rank collapse.
            Eigen::SparseMatrix<double> H = J.transpose() * J;
            double diag = 0.0;
            for (int i = 0; i < H.cols(); ++i) diag = std::max(diag, H.coeff(i, i));
            Eigen::SparseMatrix<double> ridge(H.rows(), H.cols());
            ridge.setIdentity();
            H += (opt.regularization * std::max(diag, 1e-300)) * ridge;
            Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(H);
            step_gn = ldlt.info() == Eigen::Success ? Eigen::VectorXd(ldlt.solve(-g)) : Eigen::VectorXd();
            if (step_gn.size() == 0 || !step_gn.allFinite()) step_gn = Eigen::VectorXd::Zero(x.size());
            const Eigen::VectorXd Jg = J * g;
            const double denom = Jg.squaredNorm();
            step_sd = denom > 0.0 ? Eigen::VectorXd(-(g.squaredNorm() / denom) * g) : Eigen::VectorXd(-g);
            fresh = false;
        }
        if (rep.iterations >= opt.max_iterations) {
            rep.status = "max_iterations";
            break;
        }
        if (radius < opt.min_radius) {
            rep.status = "trust_region_collapsed";
            break;
        }
        ++rep.iterations;

        Eigen::VectorXd step;
        const double n_gn = step_gn.norm(), n_sd = step_sd.norm();
        if (n_gn > 0.0 && n_gn <= radius) {
            step = step_gn;
        } else if (n_sd >= radius || n_gn == 0.0) {
            step = (radius / std::max(n_sd, 1e-300)) * step_sd;
        } else {
            // Point on the segment from the Cauchy point to the Gauss-Newton point at distance radius.
            const Eigen::VectorXd d = step_gn - step_sd;
            const double a = d.squaredNorm(), b = 2.0 * step_sd.dot(d), c = n_sd * n_sd - radius * radius;
            const double beta = (-b + std::sqrt(std::max(0.0, b * b - 4.0 * a * c))) / (2.0 * a);
            step = step_sd + beta * d;
        }
        const double predicted = -(2.0 * g.dot(step) + (J * step).squaredNorm());
        const Eigen::VectorXd trial = x + step;
        f(trial, r_trial, nullptr);
        const double e_trial = r_trial.squaredNorm();
        const double actual = energy - e_trial;
        const double rho = predicted > 0.0 ? actual / predicted : -1.0;
        if (std::isfinite(e_trial) && actual > 0.0) {
            const double x_norm = x.norm();
            x = trial;
            const double previous = energy;
            energy = e_trial;
            rep.energies.push_back(energy);
            ++rep.accepted;
            if (actual <= opt.function_tolerance * previous) {
                rep.status = "function_tolerance";
                break;
            }
            if (step.norm() <= opt.parameter_tolerance * (x_norm + opt.parameter_tolerance)) {
                rep.status = "parameter_tolerance";
                break;
            }
            f(x, r, &J);
            fresh = true;
            if (rho > 0.75 && step.norm() > 0.99 * radius) radius *= 2.0;
            else if (rho < 0.25) radius = 0.5 * step.norm();
        } else {
            radius = 0.5 * std::min(radius, step.norm());
        }
    }
    return rep;
}

} // namespace ruled

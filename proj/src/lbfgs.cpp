#include "ruled/lbfgs.hpp"

#include <cmath>
#include <deque>

#include "ruled/error.hpp"

namespace ruled {

namespace {

struct Pair {
    Eigen::VectorXd s;
    Eigen::VectorXd y;
    double rho;
};

Eigen::VectorXd two_loop(const std::deque<Pair>& mem, const Eigen::VectorXd& g)
{
    Eigen::VectorXd q = g;
    std::vector<double> alpha(mem.size());
    for (std::size_t i = mem.size(); i-- > 0;) {
        alpha[i] = mem[i].rho * mem[i].s.dot(q);
        q -= alpha[i] * mem[i].y;
    }
    if (!mem.empty()) {
        const Pair& last = mem.back();
        q *= last.s.dot(last.y) / last.y.squaredNorm();
    }
    for (std::size_t i = 0; i < mem.size(); ++i) {
        const double beta = mem[i].rho * mem[i].y.dot(q);
        q += (alpha[i] - beta) * mem[i].s;
    }
    return -q;
}

} // namespace

LbfgsReport minimize_lbfgs(const Objective& f, const FeasibilityTest& feasible, Eigen::VectorXd& x,
                           const LbfgsOptions& opt)
{
    if (feasible && !feasible(x)) throw PreconditionError("minimize_lbfgs: infeasible start");
    LbfgsReport rep;
    Eigen::VectorXd g(x.size());
    double fx = f(x, &g);
    ++rep.evaluations;
    if (!std::isfinite(fx)) throw PreconditionError("minimize_lbfgs: non-finite energy at start");
    rep.energies.push_back(fx);

    std::deque<Pair> mem;
    Eigen::VectorXd xn(x.size()), gn(x.size());
    bool steepest = true;
    while (rep.iterations < opt.max_iterations) {
        if (g.norm() <= opt.gradient_tolerance * std::max(1.0, x.norm())) {
            rep.status = "gradient";
            return rep;
        }
        Eigen::VectorXd d = mem.empty() ? Eigen::VectorXd(-g) : two_loop(mem, g);
        double slope = g.dot(d);
        if (!(slope < 0.0)) {
            mem.clear();
            d = -g;
            slope = -g.squaredNorm();
        }
        steepest = mem.empty();
        double step = steepest ? std::min(1.0, 1.0 / g.norm()) : 1.0;

        bool accepted = false;
        double fn = 0.0;
        for (int h = 0; h <= opt.max_halvings; ++h, step *= 0.5) {
            xn = x + step * d;
            if (feasible && !feasible(xn)) {
                ++rep.rejected_steps;
                continue;
            }
            fn = f(xn, &gn);
            ++rep.evaluations;
            if (std::isfinite(fn) && fn <= fx + opt.armijo * step * slope) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (!steepest) {
                mem.clear();
                continue;
            }
            rep.line_search_failed = true;
            rep.status = "line_search";
            return rep;
        }
        if (feasible && !feasible(xn)) ++rep.feasibility_violations;

        Pair p{xn - x, gn - g, 0.0};
        const double sy = p.s.dot(p.y);
        if (sy > 1e-16 * p.y.squaredNorm() && sy > 0.0) {
            p.rho = 1.0 / sy;
            mem.push_back(std::move(p));
            if (static_cast<int>(mem.size()) > opt.memory) mem.pop_front();
        }
        const double decrease = fx - fn;
        x = xn;
        g = gn;
        const double prev = fx;
        fx = fn;
        ++rep.iterations;
        rep.energies.push_back(fx);
        if (decrease <= opt.relative_tolerance * std::max(std::abs(prev), 1e-300)) {
            rep.status = "relative_decrease";
            return rep;
        }
    }
    rep.status = "max_iterations";
    return rep;
}

} // namespace ruled

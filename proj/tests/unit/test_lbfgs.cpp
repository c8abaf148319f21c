#include <doctest.h>

#include <cmath>

#include "ruled/error.hpp"
#include "ruled/lbfgs.hpp"

using namespace ruled;

namespace {

double rosenbrock(const Eigen::VectorXd& x, Eigen::VectorXd* g)
{
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    (*g)[0] = -2.0 * a - 400.0 * x[0] * b;
    (*g)[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
}

bool non_increasing(const std::vector<double>& e)
{
    for (std::size_t i = 1; i < e.size(); ++i)
        if (e[i] > e[i - 1]) return false;
    return true;
}

} // namespace

TEST_CASE("lbfgs minimizes the Rosenbrock function")
{
    Eigen::VectorXd x(2);
    x << -1.2, 1.0;
    LbfgsOptions opt;
    opt.max_iterations = 500;
    opt.relative_tolerance = 1e-15;
    const LbfgsReport rep = minimize_lbfgs(rosenbrock, nullptr, x, opt);
    CHECK((x - Eigen::Vector2d(1.0, 1.0)).norm() < 1e-5);
    CHECK(non_increasing(rep.energies));
    CHECK(rep.energies.size() == static_cast<std::size_t>(rep.iterations) + 1);
    CHECK_FALSE(rep.line_search_failed);
}

TEST_CASE("lbfgs solves a convex quadratic exactly enough")
{
    const int n = 20;
    Eigen::VectorXd diag(n), b(n);
    for (int i = 0; i < n; ++i) {
        diag[i] = 1.0 + i;
        b[i] = std::sin(i + 1.0);
    }
    const Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
        *g = diag.cwiseProduct(x) - b;
        return 0.5 * x.dot(diag.cwiseProduct(x)) - b.dot(x);
    };
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    LbfgsOptions opt;
    opt.relative_tolerance = 1e-16;
    opt.gradient_tolerance = 1e-10;
    minimize_lbfgs(f, nullptr, x, opt);
    CHECK((x - b.cwiseQuotient(diag)).norm() < 1e-8);
}

TEST_CASE("lbfgs never accepts an infeasible point")
{
    // Minimum at x = -1 lies outside the feasible set x > 0.
    const Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
        (*g)[0] = 2.0 * (x[0] + 1.0) - 1e-3 / (x[0] * x[0]);
        return (x[0] + 1.0) * (x[0] + 1.0) + 1e-3 / x[0];
    };
    int outside = 0;
    const FeasibilityTest feas = [&](const Eigen::VectorXd& x) {
        if (x[0] <= 0.0) ++outside;
        return x[0] > 0.0;
    };
    Eigen::VectorXd x(1);
    x << 2.0;
    LbfgsOptions opt;
    opt.relative_tolerance = 1e-14;
    const LbfgsReport rep = minimize_lbfgs(f, feas, x, opt);
    CHECK(x[0] > 0.0);
    CHECK(rep.feasibility_violations == 0);
    CHECK(rep.rejected_steps == outside);
    CHECK(non_increasing(rep.energies));
    // Stationary point of the barrier problem: 2 (x + 1) x^2 = 1e-3.
    CHECK(std::abs(2.0 * (x[0] + 1.0) * x[0] * x[0] - 1e-3) < 1e-8);
}

TEST_CASE("lbfgs stops on the relative decrease test")
{
    Eigen::VectorXd x(2);
    x << -1.2, 1.0;
    LbfgsOptions opt;
    opt.relative_tolerance = 1e-2;
    const LbfgsReport rep = minimize_lbfgs(rosenbrock, nullptr, x, opt);
    CHECK(rep.status == "relative_decrease");
    const std::size_t k = rep.energies.size();
    REQUIRE(k >= 2);
    CHECK(rep.energies[k - 2] - rep.energies[k - 1] <= 1e-2 * rep.energies[k - 2]);
}

TEST_CASE("lbfgs respects the iteration cap")
{
    Eigen::VectorXd x(2);
    x << -1.2, 1.0;
    LbfgsOptions opt;
    opt.max_iterations = 3;
    opt.relative_tolerance = 0.0;
    const LbfgsReport rep = minimize_lbfgs(rosenbrock, nullptr, x, opt);
    CHECK(rep.iterations == 3);
    CHECK(rep.status == "max_iterations");
}

TEST_CASE("lbfgs rejects an infeasible start")
{
    Eigen::VectorXd x(2);
    x << -1.2, 1.0;
    CHECK_THROWS_AS(minimize_lbfgs(rosenbrock, [](const Eigen::VectorXd&) { return false; }, x),
                    PreconditionError);
}

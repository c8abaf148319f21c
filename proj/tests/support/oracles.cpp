#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "shapes.hpp"

namespace oracles {

JointState random_state(unsigned seed)
{
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const TriangleMesh rest = shapes::random_surface(4, seed);
    const double h = rest.mean_edge_length();
    RulingField field(rest.num_faces());
    for (int f = 0; f < rest.num_faces(); ++f) {
        const FaceFrame fr = face_frame(rest, f);
        const double ang = std::numbers::pi * u(rng);
        const Vec3 t1 = fr.d1.normalized();
        const Vec3 dir = std::cos(ang) * t1 + std::sin(ang) * fr.normal.cross(t1);
        const auto [a, b] = edge_coefficients(rest, f, (1.0 + 0.3 * u(rng)) * dir);
        field[f] = {a, b, 0.4 * u(rng) / h};
    }
    JointState s = make_joint_state(rest, field);
    for (int f = 0; f < rest.num_faces(); ++f) {
        s.curv.theta[f] = std::numbers::pi * u(rng);
        s.curv.mu[f] = 3.0 * u(rng);
    }
    std::vector<Vec3> moved = rest.vertices();
    for (Vec3& p : moved) p += 0.05 * h * Vec3(u(rng), u(rng), u(rng));
    s.mesh = rest.with_vertices(std::move(moved));
    for (Vec3& p : s.footpoints) p += 0.05 * h * Vec3(u(rng), u(rng), u(rng));
    double top = 0.0;
    for (double c : edge_comb_values(s)) top = std::max(top, std::sqrt(c));
    s.nu = 0.5 * top;
    return s;
}

double term_value(const EnergyBreakdown& e, Term t)
{
    switch (t) {
    case Term::Sparse: return e.sparse;
    case Term::Close: return e.close;
    case Term::Barrier: return e.barrier;
    case Term::Laplacian: return e.laplacian;
    case Term::Length: return e.length;
    case Term::Total: return e.total;
    }
    return 0.0;
}

// Gradient of one unweighted term: difference of the total gradients with
// that term's weight at one and at zero.
Eigen::VectorXd term_gradient(const JointState& base, Term t)
{
    if (t == Term::Total) {
        Eigen::VectorXd g;
        energy_total(base, &g);
        return g;
    }
    JointState s = base;
    s.weights = {0.0, 0.0, 0.0, 0.0};
    Eigen::VectorXd g0;
    energy_total(s, &g0);
    if (t == Term::Sparse) return g0;
    switch (t) {
    case Term::Close: s.weights.close = 1.0; break;
    case Term::Barrier: s.weights.barrier = 1.0; break;
    case Term::Laplacian: s.weights.laplacian = 1.0; break;
    case Term::Length: s.weights.length = 1.0; break;
    default: break;
    }
    Eigen::VectorXd g1;
    energy_total(s, &g1);
    return g1 - g0;
}

Eigen::VectorXd central_differences(const JointState& base, Term t, double h)
{
    const Eigen::VectorXd x0 = pack_variables(base);
    Eigen::VectorXd out(x0.size());
    JointState s = base;
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
        Eigen::VectorXd x = x0;
        x[i] = x0[i] + h;
        unpack_variables(s, x);
        const double fp = term_value(energy_total(s), t);
        x[i] = x0[i] - h;
        unpack_variables(s, x);
        const double fm = term_value(energy_total(s), t);
        out[i] = (fp - fm) / (2.0 * h);
    }
    return out;
}

LabelProblem random_problem(std::mt19937& rng, int n, int labels)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    LabelProblem pb;
    pb.num_labels = labels;
    pb.fixed.assign(n, -1);
    pb.unary.assign(n, std::vector<double>(labels, 0.0));
    for (int p = 0; p < n; ++p) {
        if (u(rng) < 0.2) pb.fixed[p] = static_cast<int>(rng() % labels);
        for (double& c : pb.unary[p]) c = u(rng);
    }
    for (int p = 0; p < n; ++p)
        for (int q = p + 1; q < n; ++q)
            if (u(rng) < 0.35) pb.pairs.push_back({p, q, 0.6 * u(rng)});
    return pb;
}

double exhaustive_minimum(const LabelProblem& pb)
{
    const int n = pb.num_nodes();
    std::vector<int> labels(n, 0);
    for (int p = 0; p < n; ++p)
        if (pb.fixed[p] >= 0) labels[p] = pb.fixed[p];
    double best = labeling_cost(pb, labels);
    while (true) {
        int p = 0;
        for (; p < n; ++p) {
            if (pb.fixed[p] >= 0) continue;
            if (++labels[p] < pb.num_labels) break;
            labels[p] = 0;
        }
        if (p == n) break;
        best = std::min(best, labeling_cost(pb, labels));
    }
    return best;
}

} // namespace oracles

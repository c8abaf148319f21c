#include "ruled/field_init.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

namespace ruled {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

constexpr double kRegularization = 1e-10;
// Candidates whose target energy is within this fraction of the best one are
// compared by the curvature of their integral lines.
constexpr double kCandidateSlack = 0.2;

Vec2 block(const FieldCoords& y, int f) { return y.segment<2>(2 * f); }

Vec2 to_coords(const Mat32& basis, const Vec3& t) { return basis.transpose() * t; }

Vec2 unit2(const Vec2& v)
{
    const double n = v.norm();
    return n > 0.0 ? Vec2(v / n) : Vec2(1.0, 0.0);
}

double min_alignment(const std::vector<Vec2>& targets, const Vec2& y, int* which = nullptr)
{
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double v = std::pow(y.dot(targets[i]), 2);
        if (v < best) {
            best = v;
            if (which) *which = static_cast<int>(i);
        }
    }
    return best;
}

void add_block(std::vector<Triplet>& trip, int fi, int fj, const Mat2& m)
{
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) trip.emplace_back(2 * fi + r, 2 * fj + c, m(r, c));
    }
}

SpMat smoothness_matrix(const InitProblem& pb)
{
    std::vector<Triplet> trip;
    trip.reserve(pb.smooth.size() * 16);
    for (const SmoothnessTerm& t : pb.smooth) {
        add_block(trip, t.face_i, t.face_i, t.coupling_i.transpose() * t.coupling_i);
        add_block(trip, t.face_j, t.face_j, t.coupling_j.transpose() * t.coupling_j);
        add_block(trip, t.face_i, t.face_j, -t.coupling_i.transpose() * t.coupling_j);
        add_block(trip, t.face_j, t.face_i, -t.coupling_j.transpose() * t.coupling_i);
    }
    SpMat s(2 * pb.num_faces(), 2 * pb.num_faces());
    s.setFromTriplets(trip.begin(), trip.end());
    return s;
}

// S + sum_f w_f t_f t_f^T + shift I.
SpMat with_alignment(const SpMat& smooth, const std::vector<Vec2>& dirs, const std::vector<double>& weights,
                     double shift)
{
    std::vector<Triplet> trip;
    trip.reserve(dirs.size() * 4);
    for (std::size_t f = 0; f < dirs.size(); ++f) {
        Mat2 m = weights[f] * dirs[f] * dirs[f].transpose();
        m += shift * Mat2::Identity();
        add_block(trip, static_cast<int>(f), static_cast<int>(f), m);
    }
    SpMat a(smooth.rows(), smooth.cols());
    a.setFromTriplets(trip.begin(), trip.end());
    return smooth + a;
}

// Smallest eigenpair of a symmetric positive semidefinite matrix by block
// inverse iteration with Rayleigh-Ritz.
Eigen::VectorXd smallest_eigenvector(const SpMat& m, double tol)
{
    const int n = static_cast<int>(m.rows());
    SpMat shifted = m;
    for (int i = 0; i < n; ++i) shifted.coeffRef(i, i) += kRegularization;
    Eigen::SimplicialLDLT<SpMat> solver(shifted);
    if (solver.info() != Eigen::Success) throw DegeneracyError("spectral_init: factorization failed");

    const int p = std::min(n, 4);
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    Eigen::MatrixXd x(n, p);
    for (int c = 0; c < p; ++c) {
        for (int r = 0; r < n; ++r) x(r, c) = uni(rng);
    }
    double scale = 0.0;
    for (int k = 0; k < m.outerSize(); ++k) {
        for (SpMat::InnerIterator it(m, k); it; ++it) scale = std::max(scale, std::abs(it.value()));
    }
    scale = std::max(scale, 1e-300);

    for (int iter = 0; iter < 10000; ++iter) {
        Eigen::MatrixXd z = solver.solve(x);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
        x = qr.householderQ() * Eigen::MatrixXd::Identity(n, p);
        const Eigen::MatrixXd mx = m * x;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ritz(x.transpose() * mx);
        x = x * ritz.eigenvectors();
        const Eigen::VectorXd v = x.col(0);
        const double lambda = ritz.eigenvalues()[0];
        const double residual = (m * v - lambda * v).norm();
        if (residual <= tol * scale) return v;
    }
    throw DegeneracyError("spectral_init: eigen-solver did not converge");
}

std::vector<int> face_components(const TriangleMesh& mesh)
{
    std::vector<int> comp(mesh.num_faces(), -1);
    int next = 0;
    std::vector<int> stack;
    for (int f0 = 0; f0 < mesh.num_faces(); ++f0) {
        if (comp[f0] >= 0) continue;
        comp[f0] = next;
        stack.assign(1, f0);
        while (!stack.empty()) {
            const int f = stack.back();
            stack.pop_back();
            for (int g : mesh.face_neighbors(f)) {
                if (comp[g] < 0) {
                    comp[g] = next;
                    stack.push_back(g);
                }
            }
        }
        ++next;
    }
    return comp;
}

} // namespace

double InitSchedule::mu1(int stage) const
{
    if (ramp_stages <= 1) return mu1_end;
    return mu1_start * std::pow(mu1_end / mu1_start, static_cast<double>(stage) / (ramp_stages - 1));
}

double InitSchedule::mu2(int stage) const
{
    if (ramp_stages <= 1) return mu2_end;
    return mu2_start * std::pow(mu2_end / mu2_start, static_cast<double>(stage) / (ramp_stages - 1));
}

Mat32 tangent_basis(const TriangleMesh& mesh, int f)
{
    const FaceFrame fr = face_frame(mesh, f);
    Mat32 d;
    d.col(0) = fr.d1.normalized();
    d.col(1) = fr.normal.cross(d.col(0));
    return d;
}

std::vector<std::vector<Vec3>> build_targets(const TriangleMesh& mesh, const std::vector<PrincipalEstimate>& est)
{
    std::vector<std::vector<Vec3>> out(mesh.num_faces());
    for (int f = 0; f < mesh.num_faces(); ++f) {
        const PrincipalEstimate& e = est[f];
        const Vec3 n = mesh.face_normal(f);
        if (e.gaussian() >= 0.0) {
            out[f] = {e.e1};
            continue;
        }
        const bool first_positive = e.kappa1 > 0.0;
        const Vec3 p = first_positive ? e.e1 : e.e2;
        const double kp = first_positive ? e.kappa1 : e.kappa2;
        const double kn = first_positive ? e.kappa2 : e.kappa1;
        // cos^2 phi kp + sin^2 phi kn = 0
        const double phi = std::atan(std::sqrt(-kp / kn));
        const Vec3 q = n.cross(p);
        const Vec3 a_plus = std::cos(phi) * p + std::sin(phi) * q;
        const Vec3 a_minus = std::cos(phi) * p - std::sin(phi) * q;
        out[f] = {n.cross(a_plus).normalized(), n.cross(a_minus).normalized()};
    }
    return out;
}

InitProblem build_init_problem(const TriangleMesh& mesh, const std::vector<PrincipalEstimate>& est)
{
    InitProblem pb;
    const int nf = mesh.num_faces();
    pb.basis.resize(nf);
    pb.targets.resize(nf);
    pb.positive.resize(nf);
    pb.largest_dir.resize(nf);
    pb.smallest_dir.resize(nf);
    const auto targets = build_targets(mesh, est);
    for (int f = 0; f < nf; ++f) {
        pb.basis[f] = tangent_basis(mesh, f);
        for (const Vec3& t : targets[f]) pb.targets[f].push_back(unit2(to_coords(pb.basis[f], t)));
        pb.positive[f] = est[f].gaussian() > 0.0;
        pb.largest_dir[f] = unit2(to_coords(pb.basis[f], est[f].e1));
        pb.smallest_dir[f] = unit2(to_coords(pb.basis[f], est[f].e2));
    }
    for (int e = 0; e < mesh.num_edges(); ++e) {
        if (mesh.edge(e).is_boundary()) continue;
        const SharedEdgeBases sb = shared_edge_bases(mesh, e);
        SmoothnessTerm t;
        t.face_i = sb.face_i;
        t.face_j = sb.face_j;
        t.coupling_i = sb.basis_i.transpose() * pb.basis[sb.face_i];
        t.coupling_j = sb.basis_j.transpose() * pb.basis[sb.face_j];
        pb.smooth.push_back(t);
    }
    return pb;
}

double smoothness_energy(const InitProblem& pb, const FieldCoords& y)
{
    double sum = 0.0;
    for (const SmoothnessTerm& t : pb.smooth)
        sum += (t.coupling_i * block(y, t.face_i) - t.coupling_j * block(y, t.face_j)).squaredNorm();
    return sum;
}

double init_energy(const InitProblem& pb, const FieldCoords& y, double mu1, double mu2, double mu3)
{
    double unit = 0.0, align_np = 0.0, align_p = 0.0;
    for (int f = 0; f < pb.num_faces(); ++f) {
        const Vec2 yf = block(y, f);
        unit += std::pow(yf.norm() - 1.0, 2);
        if (pb.positive[f])
            align_p += std::pow(yf.dot(pb.targets[f][0]), 2);
        else
            align_np += min_alignment(pb.targets[f], yf);
    }
    return smoothness_energy(pb, y) + mu1 * unit + mu2 * align_np + mu3 * align_p;
}

double init_surrogate(const InitProblem& pb, const FieldCoords& y, const FieldCoords& yk, double mu1, double mu2,
                      double mu3)
{
    double unit = 0.0, align_np = 0.0, align_p = 0.0;
    for (int f = 0; f < pb.num_faces(); ++f) {
        const Vec2 yf = block(y, f);
        const Vec2 ykf = block(yk, f);
        unit += (yf - unit2(ykf)).squaredNorm();
        if (pb.positive[f]) {
            align_p += std::pow(yf.dot(pb.targets[f][0]), 2);
        } else {
            int which = 0;
            min_alignment(pb.targets[f], ykf, &which);
            align_np += std::pow(yf.dot(pb.targets[f][which]), 2);
        }
    }
    return smoothness_energy(pb, y) + mu1 * unit + mu2 * align_np + mu3 * align_p;
}

FieldCoords spectral_init(const InitProblem& pb, const InitSchedule& sched, ProxyAlignment proxy)
{
    const int nf = pb.num_faces();
    if (nf == 0) throw PreconditionError("spectral_init: empty problem");
    std::vector<Vec2> dirs(nf);
    std::vector<double> weights(nf);
    for (int f = 0; f < nf; ++f) {
        if (pb.positive[f]) {
            dirs[f] = pb.targets[f][0];
            weights[f] = sched.mu3;
        } else {
            dirs[f] = pb.largest_dir[f];
            if (pb.targets[f].size() == 2 && proxy == ProxyAlignment::FirstAsymptotic) dirs[f] = pb.targets[f][0];
            if (pb.targets[f].size() == 2 && proxy == ProxyAlignment::SecondAsymptotic) dirs[f] = pb.targets[f][1];
            weights[f] = sched.mu2(0);
        }
    }
    const SpMat m = with_alignment(smoothness_matrix(pb), dirs, weights, 0.0);
    const Eigen::VectorXd v = smallest_eigenvector(m, 1e-8);

    FieldCoords y(2 * nf);
    const double tiny = 1e-12 * v.cwiseAbs().maxCoeff();
    for (int f = 0; f < nf; ++f) {
        const Vec2 b = v.segment<2>(2 * f);
        y.segment<2>(2 * f) = b.norm() > tiny ? Vec2(b.normalized()) : pb.smallest_dir[f];
    }
    return y;
}

MMResult mm_solve(const InitProblem& pb, const FieldCoords& y0, const InitSchedule& sched)
{
    const int nf = pb.num_faces();
    if (y0.size() != 2 * nf) throw PreconditionError("mm_solve: coordinate vector has wrong size");
    for (int f = 0; f < nf; ++f) {
        if (!(block(y0, f).norm() > 0.0)) throw PreconditionError("mm_solve: zero initial block");
    }
    const SpMat smooth = smoothness_matrix(pb);

    MMResult res;
    FieldCoords y = y0;
    std::vector<Vec2> dirs(nf);
    std::vector<double> weights(nf);
    Eigen::SimplicialLDLT<SpMat> solver;
    bool analyzed = false;

    for (int stage = 0; stage < sched.ramp_stages; ++stage) {
        const double mu1 = sched.mu1(stage);
        const double mu2 = sched.mu2(stage);
        const double mu3 = sched.mu3;
        double h = init_energy(pb, y, mu1, mu2, mu3);
        for (int iter = 0; iter < sched.max_iterations; ++iter) {
            Eigen::VectorXd rhs(2 * nf);
            for (int f = 0; f < nf; ++f) {
                const Vec2 yf = block(y, f);
                rhs.segment<2>(2 * f) = mu1 * unit2(yf);
                if (pb.positive[f]) {
                    dirs[f] = pb.targets[f][0];
                    weights[f] = mu3;
                } else {
                    int which = 0;
                    min_alignment(pb.targets[f], yf, &which);
                    dirs[f] = pb.targets[f][which];
                    weights[f] = mu2;
                }
            }
            const SpMat a = with_alignment(smooth, dirs, weights, mu1 + kRegularization);
            if (!analyzed) {
                solver.analyzePattern(a);
                analyzed = true;
            }
            solver.factorize(a);
            if (solver.info() != Eigen::Success) throw DegeneracyError("mm_solve: surrogate system is singular");
            FieldCoords next = solver.solve(rhs);

            MMIteration it;
            it.stage = stage;
            it.energy_before = h;
            it.surrogate_at_k = init_surrogate(pb, y, y, mu1, mu2, mu3);
            it.energy_after = init_energy(pb, next, mu1, mu2, mu3);
            res.trace.push_back(it);

            const double decrease = h - it.energy_after;
            y = std::move(next);
            h = it.energy_after;
            if (decrease <= sched.relative_tolerance * std::max(it.energy_before, 1e-300)) break;
        }
        res.final_energy = h;
    }
    res.y = y;
    return res;
}

std::vector<Vec3> coords_to_directions(const InitProblem& pb, const FieldCoords& y)
{
    std::vector<Vec3> out(pb.num_faces());
    for (int f = 0; f < pb.num_faces(); ++f) out[f] = pb.basis[f] * block(y, f);
    return out;
}

double field_line_curvature(const TriangleMesh& mesh, const std::vector<Vec3>& directions)
{
    double total = 0.0;
    for (int f = 0; f < mesh.num_faces(); ++f) {
        const Vec3 n = mesh.face_normal(f);
        const Vec3 r = directions[f].normalized();
        const Vec3 c = n.cross(r);
        Eigen::Matrix<double, 3, 2> a;
        Eigen::Vector3d b;
        int rows = 0;
        for (int g : mesh.face_neighbors(f)) {
            Vec3 rg = unfold_vector(mesh, g, f, directions[g]).normalized();
            if (rg.dot(r) < 0.0) rg = -rg;
            const Vec3 d = unfold_neighbor(mesh, f, g).displacement;
            a(rows, 0) = d.dot(r);
            a(rows, 1) = d.dot(c);
            b(rows) = std::atan2(rg.dot(c), rg.dot(r));
            ++rows;
        }
        if (rows < 2) continue;
        const Eigen::Vector2d grad = a.topRows(rows).colPivHouseholderQr().solve(b.head(rows));
        total += mesh.face_area(f) * grad[0] * grad[0];
    }
    return total;
}

void orient_by_majority(const TriangleMesh& mesh, std::vector<Vec3>& directions)
{
    const std::vector<int> comp = face_components(mesh);
    const int ncomp = comp.empty() ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
    std::vector<Eigen::Matrix3d> scatter(ncomp, Eigen::Matrix3d::Zero());
    for (int f = 0; f < mesh.num_faces(); ++f) {
        const Vec3 r = directions[f].normalized();
        scatter[comp[f]] += r * r.transpose();
    }
    std::vector<Vec3> axis(ncomp);
    for (int k = 0; k < ncomp; ++k) {
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(scatter[k]);
        Vec3 a = es.eigenvectors().col(2);
        int big = 0;
        a.cwiseAbs().maxCoeff(&big);
        if (a[big] < 0.0) a = -a;
        axis[k] = a;
    }
    std::vector<int> votes(ncomp, 0);
    for (int f = 0; f < mesh.num_faces(); ++f) votes[comp[f]] += directions[f].dot(axis[comp[f]]) >= 0.0 ? 1 : -1;
    for (int f = 0; f < mesh.num_faces(); ++f) {
        if (votes[comp[f]] < 0) directions[f] = -directions[f];
    }
}

RulingField init_ruling_field(const TriangleMesh& mesh, const InitSchedule& sched, FieldInitReport* report)
{
    const auto est = estimate_principal(mesh);
    const InitProblem pb = build_init_problem(mesh, est);
    const bool has_negative = std::any_of(pb.targets.begin(), pb.targets.end(),
                                          [](const std::vector<Vec2>& t) { return t.size() == 2; });

    std::vector<ProxyAlignment> proxies = {ProxyAlignment::LargestPrincipal};
    if (has_negative) {
        proxies.push_back(ProxyAlignment::FirstAsymptotic);
        proxies.push_back(ProxyAlignment::SecondAsymptotic);
    }
    std::vector<MMResult> runs;
    std::vector<std::vector<Vec3>> dirs;
    FieldInitReport rep;
    for (ProxyAlignment p : proxies) {
        runs.push_back(mm_solve(pb, spectral_init(pb, sched, p), sched));
        dirs.push_back(coords_to_directions(pb, runs.back().y));
        rep.candidate_energy.push_back(runs.back().final_energy);
        rep.candidate_curvature.push_back(proxies.size() > 1 ? field_line_curvature(mesh, dirs.back()) : 0.0);
    }
    const double best_h = *std::min_element(rep.candidate_energy.begin(), rep.candidate_energy.end());
    int chosen = -1;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (rep.candidate_energy[i] > (1.0 + kCandidateSlack) * best_h + 1e-12) continue;
        if (chosen < 0 || rep.candidate_curvature[i] < rep.candidate_curvature[chosen]) chosen = static_cast<int>(i);
    }
    rep.chosen_candidate = chosen;
    rep.coords = runs[chosen].y;

    std::vector<Vec3> r = dirs[chosen];
    orient_by_majority(mesh, r);
    RulingField field(mesh.num_faces());
    for (int f = 0; f < mesh.num_faces(); ++f) {
        if (!(r[f].norm() > 1e-12)) throw DegeneracyError("init_ruling_field: zero direction on face " + std::to_string(f));
        const auto [a, b] = edge_coefficients(mesh, f, r[f]);
        field[f] = {a, b, 0.0};
    }
    field.normalize_gauge(mesh);
    if (report) *report = rep;
    return field;
}

void write_field_vectors(std::ostream& out, const TriangleMesh& mesh, const RulingField& field)
{
    char buf[160];
    for (int f = 0; f < mesh.num_faces(); ++f) {
        const Vec3 r = face_ruling_dir(mesh, field, f).ruling;
        std::snprintf(buf, sizeof buf, "%d %.9g %.9g %.9g\n", f, r.x(), r.y(), r.z());
        out << buf;
    }
}

} // namespace ruled

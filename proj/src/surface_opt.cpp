#include "ruled/surface_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <thread>

#include <ceres/jet.h>

#include "ruled/geometry.hpp"

namespace ruled {

namespace {

template <class T>
V3<T> curvature_vector(const V3<T>& m, const V3<T>& b, const V3<T>& p)
{
    using std::sqrt;
    const V3<T> u = p - b, w = b - m;
    const T lu = sqrt(u.squaredNorm()), lw = sqrt(w.squaredNorm());
    return (u / lu - w / lw) / ((lu + lw) * 0.5);
}

// Point where the plane through s with normal d meets the line (c, e).
template <class T>
bool plane_line(const V3<T>& s, const V3<T>& d, const V3<T>& c, const V3<T>& e, V3<T>& out)
{
    using std::abs;
    using std::sqrt;
    const V3<T> ce = e - c;
    const T denom = ce.dot(d);
    if (!(abs(denom) > T(1e-9) * sqrt(ce.squaredNorm()))) return false;
    out = c + ce * ((s - c).dot(d) / denom);
    return true;
}

template <class T>
bool ruling_curvature(const V3<T>& a, const V3<T>& b, double t, const V3<T>& pa, const V3<T>& pb, const V3<T>& na,
                      const V3<T>& nb, V3<T>& out)
{
    const V3<T> s = a * T(1.0 - t) + b * T(t);
    const V3<T> d = kernel::unit<T>(V3<T>(b - a));
    V3<T> sm, sp;
    if (!plane_line<T>(s, d, pa, pb, sm) || !plane_line<T>(s, d, na, nb, sp)) return false;
    out = curvature_vector<T>(sm, s, sp);
    return true;
}

template <class Job>
void run_parallel(std::size_t n, int threads, const Job& job)
{
    const std::size_t nt = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, n));
    if (nt == 1) {
        job(0, n);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + nt - 1) / nt;
    for (std::size_t i = 0; i < nt; ++i) {
        const std::size_t lo = i * chunk, hi = std::min(n, lo + chunk);
        if (lo < hi) pool.emplace_back([&, lo, hi] { job(lo, hi); });
    }
    for (std::thread& th : pool) th.join();
}

double mean_knn_distance(const std::vector<Vec3>& pts, std::size_t i, int k)
{
    std::vector<double> d;
    d.reserve(pts.size());
    for (std::size_t j = 0; j < pts.size(); ++j)
        if (j != i) d.push_back((pts[i] - pts[j]).norm());
    const std::size_t kk = std::min<std::size_t>(k, d.size());
    if (kk == 0) return 0.0;
    std::partial_sort(d.begin(), d.begin() + kk, d.end());
    double s = 0.0;
    for (std::size_t j = 0; j < kk; ++j) s += d[j];
    return s / kk;
}

Vec3 sample_point(const std::vector<Vec3>& p, const FinalProblem::Sample& s)
{
    return (1.0 - s.t) * p[s.start] + s.t * p[s.end];
}

} // namespace

std::vector<double> ruling_sample_params(int m)
{
    if (m < 1) throw PreconditionError("ruling_sample_params: need at least one sample per ruling");
    std::vector<double> t(m);
    for (int i = 0; i < m; ++i) t[i] = (i + 1.0) / (m + 1.0);
    return t;
}

Vec3 boundary_curvature_vector(const Vec3& bm, const Vec3& b, const Vec3& bp)
{
    if (!((bp - b).norm() > 0.0) || !((b - bm).norm() > 0.0))
        throw DegeneracyError("boundary_curvature: coincident neighbours");
    return curvature_vector<double>(bm, b, bp);
}

double boundary_curvature(const Vec3& bm, const Vec3& b, const Vec3& bp)
{
    return boundary_curvature_vector(bm, b, bp).norm();
}

bool normal_curvature_vector(const Vec3& a, const Vec3& b, double t, const Vec3& pa, const Vec3& pb, const Vec3& na,
                             const Vec3& nb, Vec3& out)
{
    return ruling_curvature<double>(a, b, t, pa, pb, na, nb, out);
}

double normal_curvature_sample(const Vec3& a, const Vec3& b, double t, const Vec3& pa, const Vec3& pb, const Vec3& na,
                               const Vec3& nb)
{
    Vec3 k;
    if (!normal_curvature_vector(a, b, t, pa, pb, na, nb, k)) return std::numeric_limits<double>::quiet_NaN();
    return k.norm();
}

int FinalProblem::num_residuals() const
{
    int n = 3 * static_cast<int>(samples.size() + vertices.size() + bends.size());
    for (const Sample& s : samples) n += s.prev_start >= 0 ? 3 : 0;
    return n;
}

FinalProblem build_final_problem(const PiecewiseRuledSurface& surface, const FinalOptions& opt)
{
    FinalProblem pb;
    pb.options = opt;
    pb.num_points = static_cast<int>(surface.points.size());
    const std::vector<double> ts = ruling_sample_params(opt.samples_per_ruling);
    const std::vector<Vec3>& P = surface.points;
    const auto owner = surface.point_polylines();

    // Samples per ruling, with neighbours in patch order.
    struct RulingRef {
        int start, end, prev, next;
    };
    std::vector<RulingRef> refs;
    for (const RuledPatch& patch : surface.patches) {
        const int base = static_cast<int>(refs.size());
        const int n = static_cast<int>(patch.rulings.size());
        for (int i = 0; i < n; ++i) {
            const Ruling& r = patch.rulings[i];
            const bool has_prev = i > 0 && surface.strip_between(patch.rulings[i - 1], r);
            const bool has_next = i + 1 < n && surface.strip_between(r, patch.rulings[i + 1]);
            refs.push_back({r.start, r.end, has_prev ? base + i - 1 : -1, has_next ? base + i + 1 : -1});
        }
    }
    std::vector<int> first_sample(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
        first_sample[i] = static_cast<int>(pb.samples.size());
        for (double t : ts) {
            FinalProblem::Sample s;
            s.start = refs[i].start;
            s.end = refs[i].end;
            s.t = t;
            if (refs[i].prev >= 0 && refs[i].next >= 0) {
                const RulingRef& p = refs[refs[i].prev];
                const RulingRef& q = refs[refs[i].next];
                Vec3 k;
                if (normal_curvature_vector(P[s.start], P[s.end], t, P[p.start], P[p.end], P[q.start], P[q.end], k) &&
                    k.allFinite()) {
                    s.prev_start = p.start;
                    s.prev_end = p.end;
                    s.next_start = q.start;
                    s.next_end = q.end;
                } else {
                    ++pb.skipped_samples;
                }
            }
            pb.samples.push_back(s);
        }
    }

    for (int p = 0; p < pb.num_points; ++p) {
        FinalProblem::Vertex v;
        v.point = p;
        for (int l : owner[p]) v.on_surface_boundary = v.on_surface_boundary || !surface.polylines[l].seam;
        pb.vertices.push_back(v);
    }

    for (const BoundaryPolyline& pl : surface.polylines) {
        const int n = static_cast<int>(pl.vertices.size());
        if (n < 3) continue;
        const int lo = pl.closed ? 0 : 1, hi = pl.closed ? n : n - 1;
        for (int k = lo; k < hi; ++k) {
            FinalProblem::Bend bd{pl.vertices[(k - 1 + n) % n], pl.vertices[k], pl.vertices[(k + 1) % n], 0.0};
            const double l0 = (P[bd.point] - P[bd.prev]).norm(), l1 = (P[bd.next] - P[bd.point]).norm();
            if (!(l0 > 1e-12) || !(l1 > 1e-12)) continue;
            bd.eta = 0.5 * (l0 + l1);
            pb.bends.push_back(bd);
        }
    }

    // Constant weights from the initial positions.
    std::vector<Vec3> pool;
    for (const auto& s : pb.samples) pool.push_back(sample_point(P, s));
    for (const auto& v : pb.vertices) pool.push_back(P[v.point]);
    std::vector<double> alpha(pool.size());
    run_parallel(pool.size(), opt.threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const double d = mean_knn_distance(pool, i, opt.neighbors);
            alpha[i] = std::max(d * d, 1e-300);
        }
    });
    for (std::size_t i = 0; i < pb.samples.size(); ++i) pb.samples[i].alpha = alpha[i];
    for (std::size_t i = 0; i < pb.vertices.size(); ++i) pb.vertices[i].alpha = alpha[pb.samples.size() + i];

    const int m = opt.samples_per_ruling;
    for (std::size_t r = 0; r < refs.size(); ++r) {
        for (int i = 0; i < m; ++i) {
            FinalProblem::Sample& s = pb.samples[first_sample[r] + i];
            if (s.prev_start < 0) continue;
            const Vec3 x = sample_point(P, s);
            std::vector<double> same;
            for (int j = 0; j < m; ++j)
                if (j != i) same.push_back((sample_point(P, pb.samples[first_sample[r] + j]) - x).norm());
            std::sort(same.begin(), same.end());
            double sum = 0.0;
            int count = 0;
            for (std::size_t j = 0; j < std::min<std::size_t>(2, same.size()); ++j, ++count) sum += same[j];
            for (int nb : {refs[r].prev, refs[r].next}) {
                double best = std::numeric_limits<double>::infinity();
                for (int j = 0; j < m; ++j)
                    best = std::min(best, (sample_point(P, pb.samples[first_sample[nb] + j]) - x).norm());
                sum += best;
                ++count;
            }
            const double d = sum / count;
            s.beta = std::max(d * d, 1e-300);
        }
    }

    for (const auto& s : pb.samples) {
        pb.m1 += s.alpha;
        if (s.prev_start >= 0) pb.m3 += s.beta;
    }
    for (const auto& v : pb.vertices) pb.m2 += v.alpha;
    for (const auto& b : pb.bends) pb.m4 += b.eta;
    return pb;
}

Footpoints compute_footpoints(const FinalProblem& pb, const std::vector<Vec3>& points, const ClosestPointIndex& reference)
{
    Footpoints fp;
    fp.samples.resize(pb.samples.size());
    fp.vertices.resize(pb.vertices.size());
    const bool has_boundary = reference.has_boundary();
    run_parallel(pb.samples.size(), pb.options.threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) fp.samples[i] = reference.closest(sample_point(points, pb.samples[i])).point;
    });
    run_parallel(pb.vertices.size(), pb.options.threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const auto& v = pb.vertices[i];
            fp.vertices[i] = v.on_surface_boundary && has_boundary ? reference.closest_on_boundary(points[v.point]).point
                                                                    : reference.closest(points[v.point]).point;
        }
    });
    return fp;
}

void final_residuals(const FinalProblem& pb, const std::vector<Vec3>& points, const Footpoints& foot,
                     Eigen::VectorXd& r, Eigen::SparseMatrix<double>* jacobian)
{
    const FinalOptions& o = pb.options;
    r.setZero(pb.num_residuals());
    using Triplet = Eigen::Triplet<double>;
    std::vector<Triplet> trip;
    auto add_block = [&](int row, int point, double scale) {
        for (int c = 0; c < 3; ++c) trip.emplace_back(row + c, 3 * point + c, scale);
    };

    int row = 0;
    for (std::size_t i = 0; i < pb.samples.size(); ++i) {
        const auto& s = pb.samples[i];
        const double c = pb.m1 > 0.0 ? std::sqrt(o.lambda1 * s.alpha / pb.m1) : 0.0;
        r.segment<3>(row) = c * (sample_point(points, s) - foot.samples[i]);
        if (jacobian) {
            add_block(row, s.start, c * (1.0 - s.t));
            add_block(row, s.end, c * s.t);
        }
        row += 3;
    }
    for (std::size_t i = 0; i < pb.vertices.size(); ++i) {
        const auto& v = pb.vertices[i];
        const double c = pb.m2 > 0.0 ? std::sqrt(o.lambda2 * v.alpha / pb.m2) : 0.0;
        r.segment<3>(row) = c * (points[v.point] - foot.vertices[i]);
        if (jacobian) add_block(row, v.point, c);
        row += 3;
    }

    // Curvature terms, evaluated with dual numbers over the involved points.
    std::vector<int> curv_samples;
    for (std::size_t i = 0; i < pb.samples.size(); ++i)
        if (pb.samples[i].prev_start >= 0) curv_samples.push_back(static_cast<int>(i));
    const int curv_row = row;
    std::vector<std::array<double, 3 * 18>> curv_grad(curv_samples.size());
    run_parallel(curv_samples.size(), o.threads, [&](std::size_t lo, std::size_t hi) {
        using J = ceres::Jet<double, 18>;
        for (std::size_t k = lo; k < hi; ++k) {
            const auto& s = pb.samples[curv_samples[k]];
            const double c = pb.m3 > 0.0 ? std::sqrt(o.lambda3 * s.beta / pb.m3) : 0.0;
            const int ids[6] = {s.start, s.end, s.prev_start, s.prev_end, s.next_start, s.next_end};
            V3<J> q[6];
            for (int a = 0; a < 6; ++a)
                for (int d = 0; d < 3; ++d) q[a][d] = J(points[ids[a]][d], 3 * a + d);
            V3<J> kv;
            const int rr = curv_row + 3 * static_cast<int>(k);
            if (!ruling_curvature<J>(q[0], q[1], s.t, q[2], q[3], q[4], q[5], kv)) {
                curv_grad[k].fill(0.0);
                continue;
            }
            for (int d = 0; d < 3; ++d) {
                r[rr + d] = c * kv[d].a;
                for (int v = 0; v < 18; ++v) curv_grad[k][18 * d + v] = c * kv[d].v[v];
            }
        }
    });
    if (jacobian)
        for (std::size_t k = 0; k < curv_samples.size(); ++k) {
            const auto& s = pb.samples[curv_samples[k]];
            const int ids[6] = {s.start, s.end, s.prev_start, s.prev_end, s.next_start, s.next_end};
            for (int d = 0; d < 3; ++d)
                for (int v = 0; v < 18; ++v)
                    if (curv_grad[k][18 * d + v] != 0.0)
                        trip.emplace_back(curv_row + 3 * k + d, 3 * ids[v / 3] + v % 3, curv_grad[k][18 * d + v]);
        }
    row += 3 * static_cast<int>(curv_samples.size());

    using J9 = ceres::Jet<double, 9>;
    for (const auto& b : pb.bends) {
        const double c = pb.m4 > 0.0 ? std::sqrt(o.lambda4 * b.eta / pb.m4) : 0.0;
        const int ids[3] = {b.prev, b.point, b.next};
        V3<J9> q[3];
        for (int a = 0; a < 3; ++a)
            for (int d = 0; d < 3; ++d) q[a][d] = J9(points[ids[a]][d], 3 * a + d);
        const V3<J9> kv = curvature_vector<J9>(q[0], q[1], q[2]);
        for (int d = 0; d < 3; ++d) {
            r[row + d] = c * kv[d].a;
            if (jacobian)
                for (int v = 0; v < 9; ++v)
                    if (kv[d].v[v] != 0.0) trip.emplace_back(row + d, 3 * ids[v / 3] + v % 3, c * kv[d].v[v]);
        }
        row += 3;
    }

    if (jacobian) {
        jacobian->resize(r.size(), 3 * pb.num_points);
        jacobian->setFromTriplets(trip.begin(), trip.end());
    }
}

FinalEnergy final_energy(const FinalProblem& pb, const std::vector<Vec3>& points, const Footpoints& foot)
{
    const FinalOptions& o = pb.options;
    FinalEnergy e;
    for (std::size_t i = 0; i < pb.samples.size(); ++i)
        if (pb.m1 > 0.0)
            e.disp += o.lambda1 * pb.samples[i].alpha / pb.m1 *
                      (sample_point(points, pb.samples[i]) - foot.samples[i]).squaredNorm();
    for (std::size_t i = 0; i < pb.vertices.size(); ++i)
        if (pb.m2 > 0.0)
            e.disp += o.lambda2 * pb.vertices[i].alpha / pb.m2 *
                      (points[pb.vertices[i].point] - foot.vertices[i]).squaredNorm();
    for (const auto& s : pb.samples) {
        if (s.prev_start < 0 || !(pb.m3 > 0.0)) continue;
        const double k = normal_curvature_sample(points[s.start], points[s.end], s.t, points[s.prev_start],
                                                 points[s.prev_end], points[s.next_start], points[s.next_end]);
        if (std::isfinite(k)) e.rul += s.beta / pb.m3 * k * k;
    }
    for (const auto& b : pb.bends) {
        const double k = curvature_vector<double>(points[b.prev], points[b.point], points[b.next]).norm();
        if (pb.m4 > 0.0) e.bdr += b.eta / pb.m4 * k * k;
    }
    e.total = e.disp + o.lambda3 * e.rul + o.lambda4 * e.bdr;
    return e;
}

FinalReport optimize_surface(PiecewiseRuledSurface& surface, const ClosestPointIndex& reference, const FinalOptions& opt)
{
    const FinalProblem pb = build_final_problem(surface, opt);
    FinalReport rep;
    rep.skipped_samples = pb.skipped_samples;
    const int n = pb.num_points;
    auto unpack = [&](const Eigen::VectorXd& x) {
        std::vector<Vec3> p(n);
        for (int i = 0; i < n; ++i) p[i] = x.segment<3>(3 * i);
        return p;
    };
    Eigen::VectorXd x(3 * n);
    for (int i = 0; i < n; ++i) x.segment<3>(3 * i) = surface.points[i];

    Footpoints foot = compute_footpoints(pb, surface.points, reference);
    rep.initial = final_energy(pb, surface.points, foot);
    rep.energies.push_back(rep.initial.total);
    for (int pass = 0; pass < std::max(1, opt.max_refreshes); ++pass) {
        if (pass > 0) {
            foot = compute_footpoints(pb, unpack(x), reference);
            rep.energies.push_back(final_energy(pb, unpack(x), foot).total);
        }
        const ResidualFunction f = [&](const Eigen::VectorXd& v, Eigen::VectorXd& r, Eigen::SparseMatrix<double>* J) {
            final_residuals(pb, unpack(v), foot, r, J);
        };
        DoglegReport d = minimize_dogleg(f, x, opt.dogleg);
        rep.energies.insert(rep.energies.end(), d.energies.begin() + 1, d.energies.end());
        const bool moved = d.accepted > 0;
        const double before = d.energies.front(), after = d.energies.back();
        rep.solves.push_back(std::move(d));
        if (!moved || before - after <= 1e-6 * before) break;
    }
    surface.points = unpack(x);
    rep.final = final_energy(pb, surface.points, foot);
    return rep;
}

namespace {

// Position along a polyline between vertex slots i and j, walking in the
// direction of increasing slot index (cyclically when closed).
struct PolylinePath {
    std::vector<int> slots;
    std::vector<double> arclength;
};

PolylinePath path_between(const PiecewiseRuledSurface& s, const BoundaryPolyline& pl, int i, int j)
{
    const int n = static_cast<int>(pl.vertices.size());
    PolylinePath path;
    int step = j >= i ? 1 : -1;
    if (pl.closed) {
        const int fwd = ((j - i) % n + n) % n, bwd = ((i - j) % n + n) % n;
        step = fwd <= bwd ? 1 : -1;
    }
    int k = i;
    path.slots.push_back(k);
    path.arclength.push_back(0.0);
    while (k != j) {
        const int next = pl.closed ? ((k + step) % n + n) % n : k + step;
        path.arclength.push_back(path.arclength.back() +
                                 (s.points[pl.vertices[next]] - s.points[pl.vertices[k]]).norm());
        path.slots.push_back(next);
        k = next;
    }
    return path;
}

// Catmull-Rom point with chord-length tangents on segment (k, k+1) at local u in [0, 1].
Vec3 cubic_point(const PiecewiseRuledSurface& s, const BoundaryPolyline& pl, int k, int k1, double u)
{
    const int n = static_cast<int>(pl.vertices.size());
    auto at = [&](int slot) {
        if (pl.closed) return s.points[pl.vertices[((slot % n) + n) % n]];
        return s.points[pl.vertices[std::clamp(slot, 0, n - 1)]];
    };
    const int dir = k1 - k == 1 || (pl.closed && k1 == (k + 1) % n) ? 1 : -1;
    const Vec3 p0 = at(k - dir), p1 = at(k), p2 = at(k + dir), p3 = at(k + 2 * dir);
    const double h = (p2 - p1).norm();
    auto tangent = [&](const Vec3& a, const Vec3& b, const Vec3& c) {
        const double l = (c - a).norm();
        return l > 0.0 ? Vec3((c - a) * (h / l)) : Vec3(c - b);
    };
    const Vec3 m1 = tangent(p0, p1, p2), m2 = tangent(p1, p2, p3);
    const double u2 = u * u, u3 = u2 * u;
    return (2 * u3 - 3 * u2 + 1) * p1 + (u3 - 2 * u2 + u) * m1 + (-2 * u3 + 3 * u2) * p2 + (u3 - u2) * m2;
}

// Point at fraction f of the path's arc length (or of its spline parameter).
struct PathPoint {
    Vec3 point;
    int slot_a, slot_b;  // polyline segment holding the point
    double u;            // local position on that segment
};

PathPoint point_on_path(const PiecewiseRuledSurface& s, const BoundaryPolyline& pl, const PolylinePath& path,
                        double f, DensifyMode mode)
{
    const double target = f * path.arclength.back();
    std::size_t k = 0;
    while (k + 2 < path.slots.size() && path.arclength[k + 1] < target) ++k;
    const double seg = path.arclength[k + 1] - path.arclength[k];
    const double u = seg > 0.0 ? std::clamp((target - path.arclength[k]) / seg, 0.0, 1.0) : 0.0;
    const Vec3& a = s.points[pl.vertices[path.slots[k]]];
    const Vec3& b = s.points[pl.vertices[path.slots[k + 1]]];
    PathPoint pp{a + u * (b - a), path.slots[k], path.slots[k + 1], u};
    if (mode == DensifyMode::Spline) pp.point = cubic_point(s, pl, path.slots[k], path.slots[k + 1], u);
    return pp;
}

int slot_in(const BoundaryPolyline& pl, int point)
{
    for (int k = 0; k < static_cast<int>(pl.vertices.size()); ++k)
        if (pl.vertices[k] == point) return k;
    return -1;
}

} // namespace

PiecewiseRuledSurface densify_rulings(const PiecewiseRuledSurface& surface, int factor, DensifyMode mode)
{
    if (factor < 1) throw PreconditionError("densify_rulings: factor must be at least 1");
    PiecewiseRuledSurface out = surface;
    if (factor == 1) return out;
    const auto owner = surface.point_polylines();

    // Insertions per polyline: (segment start slot, order key) -> point.
    std::vector<std::vector<std::pair<std::pair<int, double>, int>>> inserted(surface.polylines.size());
    auto common = [&](int p, int q) {
        for (int l : owner[p])
            if (std::find(owner[q].begin(), owner[q].end(), l) != owner[q].end()) return l;
        return -1;
    };
    auto insert_point = [&](int line, const PathPoint& pp) {
        const BoundaryPolyline& pl = surface.polylines[line];
        const int n = static_cast<int>(pl.vertices.size());
        // Key on the lower slot of the segment so both walking directions agree.
        const bool forward = pp.slot_b == pp.slot_a + 1 || (pl.closed && pp.slot_b == (pp.slot_a + 1) % n);
        const int seg = forward ? pp.slot_a : pp.slot_b;
        const double u = forward ? pp.u : 1.0 - pp.u;
        const int id = static_cast<int>(out.points.size());
        out.points.push_back(pp.point);
        inserted[line].push_back({{seg, u}, id});
        return id;
    };

    for (std::size_t pi = 0; pi < surface.patches.size(); ++pi) {
        const RuledPatch& patch = surface.patches[pi];
        std::vector<Ruling> rulings;
        for (std::size_t k = 0; k < patch.rulings.size(); ++k) {
            const Ruling& r = patch.rulings[k];
            rulings.push_back(r);
            if (k + 1 == patch.rulings.size()) break;
            const Ruling& s = patch.rulings[k + 1];
            const int ls = common(r.start, s.start), le = common(r.end, s.end);
            if (ls < 0 || le < 0) continue;
            const BoundaryPolyline& ps = surface.polylines[ls];
            const BoundaryPolyline& pe = surface.polylines[le];
            const PolylinePath a = path_between(surface, ps, slot_in(ps, r.start), slot_in(ps, s.start));
            const PolylinePath b = path_between(surface, pe, slot_in(pe, r.end), slot_in(pe, s.end));
            if (a.slots.size() < 2 || b.slots.size() < 2) continue;
            for (int j = 1; j < factor; ++j) {
                const double f = static_cast<double>(j) / factor;
                const int p0 = insert_point(ls, point_on_path(surface, ps, a, f, mode));
                const int p1 = insert_point(le, point_on_path(surface, pe, b, f, mode));
                rulings.push_back({p0, p1});
            }
        }
        out.patches[pi].rulings = std::move(rulings);
    }

    for (std::size_t l = 0; l < surface.polylines.size(); ++l) {
        auto ins = inserted[l];
        if (ins.empty()) continue;
        std::stable_sort(ins.begin(), ins.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
        const BoundaryPolyline& pl = surface.polylines[l];
        std::vector<int> verts;
        std::size_t c = 0;
        for (int k = 0; k < static_cast<int>(pl.vertices.size()); ++k) {
            verts.push_back(pl.vertices[k]);
            while (c < ins.size() && ins[c].first.first == k) verts.push_back(ins[c++].second);
        }
        out.polylines[l].vertices = std::move(verts);
    }
    return out;
}

} // namespace ruled

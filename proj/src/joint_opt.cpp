#include "ruled/joint_opt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <thread>

#include <ceres/jet.h>
#include "json.hpp"

namespace ruled {

namespace {

constexpr std::array<double, 3> kGeodSamples = {0.25, 0.5, 0.75};
constexpr int kFaceVars = 5;  // a, b, gamma, theta, mu

template <class T>
struct FaceVars {
    T a, b, gamma, theta, mu;
};

// Vertices of an interior edge neighbourhood: 0, 1 are the edge endpoints,
// 2 is opposite in face_i and 3 opposite in face_j.
struct EdgeStencil {
    int edge = -1;
    int face_i = -1;
    int face_j = -1;
    std::array<int, 4> verts{};
    std::array<int, 3> local_i{};  // face_i's vertices in face order, as stencil slots
    std::array<int, 3> local_j{};
};

EdgeStencil make_stencil(const TriangleMesh& m, int e)
{
    const Edge& ed = m.edge(e);
    EdgeStencil st;
    st.edge = e;
    st.face_i = ed.faces[0];
    st.face_j = ed.faces[1];
    st.verts[0] = ed.verts[0];
    st.verts[1] = ed.verts[1];
    auto opposite = [&](int f) {
        for (int v : m.face(f))
            if (v != ed.verts[0] && v != ed.verts[1]) return v;
        return -1;
    };
    st.verts[2] = opposite(st.face_i);
    st.verts[3] = opposite(st.face_j);
    auto slots = [&](int f, int opp_slot) {
        std::array<int, 3> out{};
        for (int k = 0; k < 3; ++k) {
            const int v = m.face(f)[k];
            out[k] = v == st.verts[0] ? 0 : v == st.verts[1] ? 1 : opp_slot;
        }
        return out;
    };
    st.local_i = slots(st.face_i, 2);
    st.local_j = slots(st.face_j, 3);
    return st;
}

template <class T>
T geod_kernel(const std::array<V3<T>, 4>& p, const kernel::RulingFrame<T>& fi, const T& gi,
              const kernel::RulingFrame<T>& fj, const T& gj)
{
    const V3<T> e = kernel::unit<T>(V3<T>(p[1] - p[0]));
    const V3<T> wi = e.cross(fi.normal);
    const V3<T> wj = e.cross(fj.normal);
    T sum(0.0);
    for (double t : kGeodSamples) {
        const V3<T> q = p[0] + T(t) * (p[1] - p[0]);
        const V3<T> si = kernel::unit<T>(kernel::ruling_at<T>(fi, gi, q));
        const V3<T> sj = kernel::unit<T>(kernel::ruling_at<T>(fj, gj, q));
        const T du = e.dot(si) - e.dot(sj);
        const T dv = wi.dot(si) - wj.dot(sj);
        sum += du * du + dv * dv;
    }
    return sum;
}

// E_sff of face f toward its neighbour g across the edge (p0, p1); `apex` is
// f's vertex opposite the edge.
template <class T>
T sff_kernel(const V3<T>& p0, const V3<T>& p1, const V3<T>& apex, const kernel::RulingFrame<T>& ff, const T& theta,
             const T& mu, const V3<T>& centroid_g, const V3<T>& normal_g)
{
    using std::cos;
    using std::sin;
    const V3<T> d = kernel::unfold_point<T>(p0, p1, apex, centroid_g) - ff.origin;
    const T c = cos(theta), s = sin(theta);
    const V3<T> b1 = c * ff.ruling + s * ff.cross;
    const V3<T> b2 = -s * ff.ruling + c * ff.cross;
    const V3<T> dn = normal_g - ff.normal;
    const T r1 = mu * s * s * b1.dot(d) - b1.dot(dn);
    const T r2 = -mu * c * c * b2.dot(d) - b2.dot(dn);
    return (r1 * r1 + r2 * r2) / d.squaredNorm();
}

template <class T>
void edge_kernel(const std::array<V3<T>, 4>& p, const EdgeStencil& st, const FaceVars<T>& vi, const FaceVars<T>& vj,
                 T& geod, T& curv)
{
    const auto fi = kernel::ruling_frame<T>(p[st.local_i[0]], p[st.local_i[1]], p[st.local_i[2]], vi.a, vi.b);
    const auto fj = kernel::ruling_frame<T>(p[st.local_j[0]], p[st.local_j[1]], p[st.local_j[2]], vj.a, vj.b);
    geod = geod_kernel<T>(p, fi, vi.gamma, fj, vj.gamma);
    curv = sff_kernel<T>(p[0], p[1], p[2], fi, vi.theta, vi.mu, fj.origin, fj.normal) +
           sff_kernel<T>(p[0], p[1], p[3], fj, vj.theta, vj.mu, fi.origin, fi.normal);
}

template <class T>
T barrier_kernel(const std::array<V3<T>, 3>& p, const T& a, const T& b, const T& gamma)
{
    const auto fr = kernel::ruling_frame<T>(p[0], p[1], p[2], a, b);
    T sum(0.0);
    for (int k = 0; k < 3; ++k) {
        const T m = T(1.0) + gamma * (p[k] - fr.origin).dot(fr.ruling);
        sum += T(1.0) / (m * m);
    }
    return sum;
}

double face_margin(const Vec3& p0, const Vec3& p1, const Vec3& p2, const RulingParams& q)
{
    const Vec3 n = (p1 - p0).cross(p2 - p0);
    const Vec3 dir = q.a * (p1 - p0) + q.b * (p2 - p0);
    const double scale = (p1 - p0).squaredNorm() + (p2 - p0).squaredNorm();
    if (!(n.norm() > 1e-14 * scale) || !(dir.squaredNorm() > 1e-24)) return -1.0;
    const Vec3 r = dir.normalized();
    const Vec3 o = (p0 + p1 + p2) / 3.0;
    double margin = 1.0;
    for (const Vec3* v : {&p0, &p1, &p2}) margin = std::min(margin, 1.0 + q.gamma * (*v - o).dot(r));
    return margin;
}

bool state_feasible(const TriangleMesh& m, const std::vector<Vec3>& verts, const RulingField& field)
{
    for (int f = 0; f < m.num_faces(); ++f) {
        const Face& t = m.face(f);
        if (!(face_margin(verts[t[0]], verts[t[1]], verts[t[2]], field[f]) > 0.0)) return false;
    }
    return true;
}

std::vector<int> laplacian_neighbors(const TriangleMesh& m, int v)
{
    return m.vertex_neighbors(v, m.is_boundary_vertex(v));
}

// Energy and gradient evaluator over packed variables.
class Evaluator {
public:
    explicit Evaluator(const JointState& s) : s_(s), mesh_(s.mesh)
    {
        for (int e = 0; e < mesh_.num_edges(); ++e)
            if (!mesh_.edge(e).is_boundary()) stencils_.push_back(make_stencil(mesh_, e));
        neighbors_.resize(mesh_.num_vertices());
        for (int v = 0; v < mesh_.num_vertices(); ++v) neighbors_[v] = laplacian_neighbors(mesh_, v);
    }

    int vertex_offset(int v) const { return 3 * v; }
    int face_offset(int f) const { return 3 * mesh_.num_vertices() + kFaceVars * f; }
    int size() const { return 3 * mesh_.num_vertices() + kFaceVars * mesh_.num_faces(); }

    EnergyBreakdown evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* grad, int threads) const
    {
        const int nv = mesh_.num_vertices();
        auto vert = [&](int v) { return Vec3(x.segment<3>(3 * v)); };
        auto fvars = [&](int f) {
            const int o = face_offset(f);
            return FaceVars<double>{x[o], x[o + 1], x[o + 2], x[o + 3], x[o + 4]};
        };
        if (grad) grad->setZero(size());
        EnergyBreakdown out;
        const double nu2 = 2.0 * s_.nu * s_.nu;

        // Sparse term, one independent job per interior edge.
        using EdgeJet = ceres::Jet<double, 22>;
        struct EdgeOut {
            double comb = 0.0;
            Eigen::Matrix<double, 22, 1> d;
        };
        std::vector<EdgeOut> eo(stencils_.size());
        auto edge_job = [&](std::size_t k) {
            const EdgeStencil& st = stencils_[k];
            if (!grad) {
                std::array<Vec3, 4> p;
                for (int i = 0; i < 4; ++i) p[i] = vert(st.verts[i]);
                double g = 0.0, c = 0.0;
                edge_kernel<double>(p, st, fvars(st.face_i), fvars(st.face_j), g, c);
                eo[k].comb = g + c;
                return;
            }
            std::array<V3<EdgeJet>, 4> p;
            for (int i = 0; i < 4; ++i)
                for (int c = 0; c < 3; ++c) p[i][c] = EdgeJet(x[3 * st.verts[i] + c], 3 * i + c);
            auto jet_vars = [&](int f, int base) {
                const FaceVars<double> q = fvars(f);
                return FaceVars<EdgeJet>{EdgeJet(q.a, base), EdgeJet(q.b, base + 1), EdgeJet(q.gamma, base + 2),
                                         EdgeJet(q.theta, base + 3), EdgeJet(q.mu, base + 4)};
            };
            EdgeJet g, c;
            edge_kernel<EdgeJet>(p, st, jet_vars(st.face_i, 12), jet_vars(st.face_j, 17), g, c);
            const EdgeJet comb = g + c;
            eo[k].comb = comb.a;
            eo[k].d = comb.v;
        };
        run_parallel(stencils_.size(), threads, edge_job);
        for (std::size_t k = 0; k < stencils_.size(); ++k) {
            const double w = std::exp(-eo[k].comb / nu2);
            out.sparse += 1.0 - w;
            if (!grad) continue;
            const double dpsi = w / nu2;
            const EdgeStencil& st = stencils_[k];
            for (int i = 0; i < 4; ++i) grad->segment<3>(3 * st.verts[i]) += dpsi * eo[k].d.segment<3>(3 * i);
            grad->segment<kFaceVars>(face_offset(st.face_i)) += dpsi * eo[k].d.segment<kFaceVars>(12);
            grad->segment<kFaceVars>(face_offset(st.face_j)) += dpsi * eo[k].d.segment<kFaceVars>(17);
        }

        const JointWeights& w = s_.weights;
        // Closeness to fixed footpoints.
        for (int v = 0; v < nv; ++v) {
            const Vec3 r = vert(v) - s_.footpoints[v];
            out.close += r.squaredNorm();
            if (grad) grad->segment<3>(3 * v) += 2.0 * w.close * r;
        }

        // Barrier.
        using FaceJet = ceres::Jet<double, 12>;
        for (int f = 0; f < mesh_.num_faces(); ++f) {
            const Face& t = mesh_.face(f);
            const FaceVars<double> q = fvars(f);
            if (!grad) {
                out.barrier += barrier_kernel<double>({vert(t[0]), vert(t[1]), vert(t[2])}, q.a, q.b, q.gamma);
                continue;
            }
            std::array<V3<FaceJet>, 3> p;
            for (int i = 0; i < 3; ++i)
                for (int c = 0; c < 3; ++c) p[i][c] = FaceJet(x[3 * t[i] + c], 3 * i + c);
            const FaceJet val = barrier_kernel<FaceJet>(p, FaceJet(q.a, 9), FaceJet(q.b, 10), FaceJet(q.gamma, 11));
            out.barrier += val.a;
            for (int i = 0; i < 3; ++i) grad->segment<3>(3 * t[i]) += w.barrier * val.v.segment<3>(3 * i);
            grad->segment<3>(face_offset(f)) += w.barrier * val.v.segment<3>(9);
        }

        // Laplacian of the displacement.
        for (int v = 0; v < nv; ++v) {
            const std::vector<int>& nb = neighbors_[v];
            if (nb.empty()) continue;
            Vec3 lap = vert(v) - s_.initial_vertices[v];
            const double inv = 1.0 / static_cast<double>(nb.size());
            for (int u : nb) lap -= inv * (vert(u) - s_.initial_vertices[u]);
            out.laplacian += lap.squaredNorm();
            if (!grad) continue;
            grad->segment<3>(3 * v) += 2.0 * w.laplacian * lap;
            for (int u : nb) grad->segment<3>(3 * u) -= 2.0 * w.laplacian * inv * lap;
        }

        // Edge length change.
        for (int e = 0; e < mesh_.num_edges(); ++e) {
            const Edge& ed = mesh_.edge(e);
            const Vec3 h = vert(ed.verts[1]) - vert(ed.verts[0]);
            const double len = h.norm(), len0 = s_.initial_lengths[e];
            const double r = (len - len0) / len0;
            out.length += r * r;
            if (!grad) continue;
            const Vec3 g = (2.0 * w.length * r / len0 / len) * h;
            grad->segment<3>(3 * ed.verts[1]) += g;
            grad->segment<3>(3 * ed.verts[0]) -= g;
        }

        out.total = out.sparse + w.close * out.close + w.barrier * out.barrier + w.laplacian * out.laplacian +
                    w.length * out.length;
        return out;
    }

    std::vector<double> edge_comb(const Eigen::VectorXd& x) const
    {
        std::vector<double> out(mesh_.num_edges(), 0.0);
        for (const EdgeStencil& st : stencils_) {
            std::array<Vec3, 4> p;
            for (int i = 0; i < 4; ++i) p[i] = x.segment<3>(3 * st.verts[i]);
            const int oi = face_offset(st.face_i), oj = face_offset(st.face_j);
            double g = 0.0, c = 0.0;
            edge_kernel<double>(p, st, {x[oi], x[oi + 1], x[oi + 2], x[oi + 3], x[oi + 4]},
                                {x[oj], x[oj + 1], x[oj + 2], x[oj + 3], x[oj + 4]}, g, c);
            out[st.edge] = g + c;
        }
        return out;
    }

    bool feasible(const Eigen::VectorXd& x) const
    {
        if (!x.allFinite()) return false;
        for (int f = 0; f < mesh_.num_faces(); ++f) {
            const Face& t = mesh_.face(f);
            const int o = face_offset(f);
            const RulingParams q{x[o], x[o + 1], x[o + 2]};
            if (!(face_margin(x.segment<3>(3 * t[0]), x.segment<3>(3 * t[1]), x.segment<3>(3 * t[2]), q) > 0.0))
                return false;
        }
        return true;
    }

private:
    template <class Job>
    static void run_parallel(std::size_t n, int threads, const Job& job)
    {
        const std::size_t nt = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, n));
        if (nt <= 1) {
            for (std::size_t k = 0; k < n; ++k) job(k);
            return;
        }
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < nt; ++t) {
            pool.emplace_back([&, t] {
                for (std::size_t k = t * n / nt; k < (t + 1) * n / nt; ++k) job(k);
            });
        }
        for (std::thread& th : pool) th.join();
    }

    const JointState& s_;
    const TriangleMesh& mesh_;
    std::vector<EdgeStencil> stencils_;
    std::vector<std::vector<int>> neighbors_;
};

// Linear change of variables dx = P z. Vertex displacements are expressed in
// (normal, tangent, tangent) frames; every variable class gets its own scale
// from a stochastic estimate of the Hessian diagonal, since the edge-length
// term makes tangential motion orders of magnitude stiffer than normal motion.
class Preconditioner {
public:
    enum Class { Normal, Tangent, A, B, Gamma, Theta, Mu, NumClasses };

    Preconditioner(const TriangleMesh& mesh, int size) : nv_(mesh.num_vertices()), size_(size)
    {
        frames_.resize(nv_);
        const std::vector<Vec3> vn = vertex_normals(mesh);
        for (int v = 0; v < nv_; ++v) {
            const Vec3 n = vn[v];
            const Vec3 seed = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
            const Vec3 t1 = (seed - seed.dot(n) * n).normalized();
            frames_[v].col(0) = n;
            frames_[v].col(1) = t1;
            frames_[v].col(2) = n.cross(t1);
        }
        scale_.fill(1.0);
    }

    Class face_class(int i) const { return static_cast<Class>(A + (i - 3 * nv_) % kFaceVars); }

    Eigen::VectorXd apply(const Eigen::VectorXd& z) const
    {
        Eigen::VectorXd x(size_);
        for (int v = 0; v < nv_; ++v) {
            const Vec3 zs(scale_[Normal] * z[3 * v], scale_[Tangent] * z[3 * v + 1], scale_[Tangent] * z[3 * v + 2]);
            x.segment<3>(3 * v) = frames_[v] * zs;
        }
        for (int i = 3 * nv_; i < size_; ++i) x[i] = scale_[face_class(i)] * z[i];
        return x;
    }

    Eigen::VectorXd apply_transpose(const Eigen::VectorXd& g) const
    {
        Eigen::VectorXd z(size_);
        for (int v = 0; v < nv_; ++v) {
            const Vec3 r = frames_[v].transpose() * g.segment<3>(3 * v);
            z[3 * v] = scale_[Normal] * r[0];
            z[3 * v + 1] = scale_[Tangent] * r[1];
            z[3 * v + 2] = scale_[Tangent] * r[2];
        }
        for (int i = 3 * nv_; i < size_; ++i) z[i] = scale_[face_class(i)] * g[i];
        return z;
    }

    Class variable_class(int i) const
    {
        if (i >= 3 * nv_) return face_class(i);
        return i % 3 == 0 ? Normal : Tangent;
    }

    void set_scales(const std::array<double, NumClasses>& s) { scale_ = s; }

private:
    int nv_;
    int size_;
    std::vector<Eigen::Matrix3d> frames_;
    std::array<double, NumClasses> scale_{};
};

Preconditioner estimate_preconditioner(const Evaluator& ev, const JointState& s, const Eigen::VectorXd& x0,
                                       int threads)
{
    constexpr int kProbes = 4;
    constexpr double kStep = 1e-7;
    Preconditioner pc(s.mesh, static_cast<int>(x0.size()));
    std::array<double, Preconditioner::NumClasses> diag{}, count{};
    std::mt19937 rng(12345);
    Eigen::VectorXd gp, gm;
    for (int probe = 0; probe < kProbes; ++probe) {
        Eigen::VectorXd u(x0.size());
        for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = (rng() & 1u) ? 1.0 : -1.0;
        const Eigen::VectorXd dx = kStep * pc.apply(u);
        if (!ev.feasible(x0 + dx) || !ev.feasible(x0 - dx)) continue;
        ev.evaluate(x0 + dx, &gp, threads);
        ev.evaluate(x0 - dx, &gm, threads);
        const Eigen::VectorXd hu = pc.apply_transpose(gp - gm) / (2.0 * kStep);
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            const int c = pc.variable_class(static_cast<int>(i));
            diag[c] += u[i] * hu[i];
            count[c] += 1.0;
        }
    }
    double largest = 0.0;
    for (int c = 0; c < Preconditioner::NumClasses; ++c) {
        diag[c] = count[c] > 0.0 ? std::abs(diag[c]) / count[c] : 0.0;
        largest = std::max(largest, diag[c]);
    }
    std::array<double, Preconditioner::NumClasses> scale{};
    for (int c = 0; c < Preconditioner::NumClasses; ++c)
        scale[c] = largest > 0.0 ? 1.0 / std::sqrt(std::max(diag[c], 1e-8 * largest)) : 1.0;
    pc.set_scales(scale);
    return pc;
}

void require_interior(const TriangleMesh& m, int e, const char* what)
{
    if (e < 0 || e >= m.num_edges() || m.edge(e).is_boundary())
        throw PreconditionError(std::string(what) + ": edge is not interior");
}

} // namespace

CurvatureVars init_curvature_vars(const TriangleMesh& mesh, const RulingField& field,
                                  const std::vector<PrincipalEstimate>& est)
{
    CurvatureVars cv;
    cv.theta.resize(mesh.num_faces());
    cv.mu.resize(mesh.num_faces());
    for (int f = 0; f < mesh.num_faces(); ++f) {
        const RulingDirections rd = face_ruling_dir(mesh, field, f);
        const double th = std::atan2(rd.ruling.cross(est[f].e1).dot(mesh.face_normal(f)), rd.ruling.dot(est[f].e1));
        const double s2 = std::sin(th) * std::sin(th), c2 = std::cos(th) * std::cos(th);
        cv.theta[f] = th;
        cv.mu[f] = (est[f].kappa1 * s2 - est[f].kappa2 * c2) / (s2 * s2 + c2 * c2);
    }
    return cv;
}

JointState make_joint_state(const TriangleMesh& mesh, const RulingField& field, const JointWeights& weights)
{
    if (field.size() != mesh.num_faces()) throw PreconditionError("make_joint_state: field size mismatch");
    JointState s;
    s.mesh = mesh;
    s.field = field;
    s.curv = init_curvature_vars(mesh, field, estimate_principal(mesh));
    s.weights = weights;
    s.initial_vertices = mesh.vertices();
    s.initial_lengths.resize(mesh.num_edges());
    for (int e = 0; e < mesh.num_edges(); ++e) s.initial_lengths[e] = mesh.edge_length(e);
    s.footpoints = mesh.vertices();
    return s;
}

double welsch(double x, double nu) { return 1.0 - std::exp(-x * x / (2.0 * nu * nu)); }

double energy_geod(const TriangleMesh& mesh, const RulingField& field, int edge)
{
    require_interior(mesh, edge, "energy_geod");
    const EdgeStencil st = make_stencil(mesh, edge);
    std::array<Vec3, 4> p;
    for (int i = 0; i < 4; ++i) p[i] = mesh.vertex(st.verts[i]);
    const auto fi = ruling_frame(mesh, field, st.face_i);
    const auto fj = ruling_frame(mesh, field, st.face_j);
    for (double t : kGeodSamples) {
        const Vec3 q = p[0] + t * (p[1] - p[0]);
        if (!(kernel::ruling_at<double>(fi, field[st.face_i].gamma, q).norm() >= 1e-12) ||
            !(kernel::ruling_at<double>(fj, field[st.face_j].gamma, q).norm() >= 1e-12))
            throw DegeneracyError("energy_geod: degenerate ruling at an edge sample");
    }
    return geod_kernel<double>(p, fi, field[st.face_i].gamma, fj, field[st.face_j].gamma);
}

double energy_geod_field_gradient(const TriangleMesh& mesh, const RulingField& field, int edge,
                                  std::array<double, 6>& grad)
{
    const double value = energy_geod(mesh, field, edge);
    using J = ceres::Jet<double, 6>;
    const EdgeStencil st = make_stencil(mesh, edge);
    std::array<V3<J>, 4> p;
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 3; ++c) p[i][c] = J(mesh.vertex(st.verts[i])[c]);
    auto frame = [&](int f, int base) {
        const Face& t = mesh.face(f);
        V3<J> q[3];
        for (int k = 0; k < 3; ++k)
            for (int c = 0; c < 3; ++c) q[k][c] = J(mesh.vertex(t[k])[c]);
        return kernel::ruling_frame<J>(q[0], q[1], q[2], J(field[f].a, base), J(field[f].b, base + 1));
    };
    const J g = geod_kernel<J>(p, frame(st.face_i, 0), J(field[st.face_i].gamma, 2), frame(st.face_j, 3),
                               J(field[st.face_j].gamma, 5));
    for (int k = 0; k < 6; ++k) grad[k] = g.v[k];
    return value;
}

double energy_sff(const TriangleMesh& mesh, const RulingField& field, const CurvatureVars& curv, int f, int g)
{
    const int e = mesh.shared_edge(f, g);
    if (e < 0) throw PreconditionError("energy_sff: faces are not adjacent");
    const Edge& ed = mesh.edge(e);
    int apex = -1;
    for (int v : mesh.face(f))
        if (v != ed.verts[0] && v != ed.verts[1]) apex = v;
    const auto ff = ruling_frame(mesh, field, f);
    const Vec3 cg = mesh.face_centroid(g);
    const Vec3 d = kernel::unfold_point<double>(mesh.vertex(ed.verts[0]), mesh.vertex(ed.verts[1]), mesh.vertex(apex),
                                                cg) -
                   ff.origin;
    if (!(d.norm() >= 1e-12)) throw DegeneracyError("energy_sff: coincident centroids");
    return sff_kernel<double>(mesh.vertex(ed.verts[0]), mesh.vertex(ed.verts[1]), mesh.vertex(apex), ff, curv.theta[f],
                              curv.mu[f], cg, mesh.face_normal(g));
}

double energy_curv(const TriangleMesh& mesh, const RulingField& field, const CurvatureVars& curv, int edge)
{
    require_interior(mesh, edge, "energy_curv");
    const Edge& ed = mesh.edge(edge);
    return energy_sff(mesh, field, curv, ed.faces[0], ed.faces[1]) +
           energy_sff(mesh, field, curv, ed.faces[1], ed.faces[0]);
}

double energy_comb(const TriangleMesh& mesh, const RulingField& field, const CurvatureVars& curv, int edge)
{
    return energy_geod(mesh, field, edge) + energy_curv(mesh, field, curv, edge);
}

double energy_barrier(const TriangleMesh& mesh, const RulingField& field, int f)
{
    const Face& t = mesh.face(f);
    if (!check_feasibility(mesh, field, f).feasible) throw PreconditionError("energy_barrier: infeasible face");
    return barrier_kernel<double>({mesh.vertex(t[0]), mesh.vertex(t[1]), mesh.vertex(t[2])}, field[f].a, field[f].b,
                                  field[f].gamma);
}

double energy_laplacian(const TriangleMesh& mesh, const std::vector<Vec3>& initial_vertices, int v)
{
    const std::vector<int> nb = laplacian_neighbors(mesh, v);
    if (nb.empty()) return 0.0;
    Vec3 lap = mesh.vertex(v) - initial_vertices[v];
    for (int u : nb) lap -= (mesh.vertex(u) - initial_vertices[u]) / static_cast<double>(nb.size());
    return lap.squaredNorm();
}

double energy_length(const TriangleMesh& mesh, const std::vector<double>& initial_lengths, int edge)
{
    const double r = (mesh.edge_length(edge) - initial_lengths[edge]) / initial_lengths[edge];
    return r * r;
}

Eigen::VectorXd pack_variables(const JointState& s)
{
    const int nv = s.mesh.num_vertices(), nf = s.mesh.num_faces();
    Eigen::VectorXd x(3 * nv + kFaceVars * nf);
    for (int v = 0; v < nv; ++v) x.segment<3>(3 * v) = s.mesh.vertex(v);
    for (int f = 0; f < nf; ++f) {
        const int o = 3 * nv + kFaceVars * f;
        x[o] = s.field[f].a;
        x[o + 1] = s.field[f].b;
        x[o + 2] = s.field[f].gamma;
        x[o + 3] = s.curv.theta[f];
        x[o + 4] = s.curv.mu[f];
    }
    return x;
}

void unpack_variables(JointState& s, const Eigen::VectorXd& x)
{
    const int nv = s.mesh.num_vertices(), nf = s.mesh.num_faces();
    if (x.size() != 3 * nv + kFaceVars * nf) throw PreconditionError("unpack_variables: size mismatch");
    std::vector<Vec3> verts(nv);
    for (int v = 0; v < nv; ++v) verts[v] = x.segment<3>(3 * v);
    s.mesh = s.mesh.with_vertices(std::move(verts));
    for (int f = 0; f < nf; ++f) {
        const int o = 3 * nv + kFaceVars * f;
        s.field[f] = {x[o], x[o + 1], x[o + 2]};
        s.curv.theta[f] = x[o + 3];
        s.curv.mu[f] = x[o + 4];
    }
}

EnergyBreakdown energy_total(const JointState& s, Eigen::VectorXd* gradient, int threads)
{
    if (!state_feasible(s.mesh, s.mesh.vertices(), s.field)) throw PreconditionError("energy_total: infeasible state");
    const Evaluator ev(s);
    return ev.evaluate(pack_variables(s), gradient, threads);
}

std::vector<double> edge_comb_values(const JointState& s)
{
    const Evaluator ev(s);
    return ev.edge_comb(pack_variables(s));
}

void project_to_reference(JointState& s, const ClosestPointIndex& reference)
{
    const bool boundary = reference.has_boundary();
    s.footpoints.resize(s.mesh.num_vertices());
    for (int v = 0; v < s.mesh.num_vertices(); ++v) {
        const Vec3& p = s.mesh.vertex(v);
        s.footpoints[v] = boundary && s.mesh.is_boundary_vertex(v) ? reference.closest_on_boundary(p).point
                                                                    : reference.closest(p).point;
    }
}

std::vector<double> nu_schedule(double nu_max, double nu_min)
{
    if (!(nu_min > 0.0)) throw PreconditionError("nu_schedule: nu_min must be positive");
    if (!(nu_max > nu_min)) return {nu_min};
    const int stages = static_cast<int>(std::ceil(std::log2(nu_max / nu_min))) + 1;
    std::vector<double> out;
    for (int k = 0; k < stages; ++k) out.push_back(std::max(nu_min, nu_max / std::ldexp(1.0, k)));
    return out;
}

JointResult optimize_joint(JointState& s, const ClosestPointIndex& reference, const JointConfig& cfg)
{
    if (!state_feasible(s.mesh, s.mesh.vertices(), s.field))
        throw PreconditionError("optimize_joint: infeasible initial state");
    JointResult res;
    if (cfg.nu_max > 0.0)
        res.nu_max = cfg.nu_max;
    else
        for (double c : edge_comb_values(s)) res.nu_max = std::max(res.nu_max, std::sqrt(c));

    const Evaluator ev(s);
    for (double nu : nu_schedule(res.nu_max, cfg.nu_min)) {
        s.nu = nu;
        project_to_reference(s, reference);
        const Eigen::VectorXd x0 = pack_variables(s);
        const Preconditioner pc = estimate_preconditioner(ev, s, x0, cfg.threads);
        Eigen::VectorXd z = Eigen::VectorXd::Zero(x0.size());
        Eigen::VectorXd gx;
        const Objective obj = [&](const Eigen::VectorXd& zz, Eigen::VectorXd* g) {
            const double e = ev.evaluate(x0 + pc.apply(zz), &gx, cfg.threads).total;
            *g = pc.apply_transpose(gx);
            return e;
        };
        const FeasibilityTest feas = [&](const Eigen::VectorXd& zz) { return ev.feasible(x0 + pc.apply(zz)); };
        JointStage stage;
        stage.nu = nu;
        stage.solver = minimize_lbfgs(obj, feas, z, cfg.lbfgs);
        unpack_variables(s, x0 + pc.apply(z));
        s.field.normalize_gauge(s.mesh);
        stage.edge_comb = edge_comb_values(s);
        res.feasibility_violations += stage.solver.feasibility_violations;
        if (stage.solver.line_search_failed)
            res.warnings.push_back("line search failed at nu = " + std::to_string(nu) + "; kept best point");
        res.stages.push_back(std::move(stage));
    }
    if (!state_feasible(s.mesh, s.mesh.vertices(), s.field)) ++res.feasibility_violations;
    res.edge_comb = res.stages.back().edge_comb;
    return res;
}

void save_joint_checkpoint(const std::filesystem::path& path, const JointState& s, const JointResult& r)
{
    nlohmann::json j;
    j["schema"] = "ruled.joint_checkpoint";
    j["version"] = 1;
    auto& verts = j["vertices"] = nlohmann::json::array();
    for (const Vec3& v : s.mesh.vertices()) verts.push_back({v.x(), v.y(), v.z()});
    auto& field = j["field"] = nlohmann::json::array();
    for (const RulingParams& p : s.field.params()) field.push_back({p.a, p.b, p.gamma});
    auto& curv = j["curvature"] = nlohmann::json::array();
    for (int f = 0; f < s.curv.size(); ++f) curv.push_back({s.curv.theta[f], s.curv.mu[f]});
    auto& nus = j["nu_history"] = nlohmann::json::array();
    for (const JointStage& st : r.stages) nus.push_back(st.nu);
    j["edge_comb"] = r.edge_comb;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(1) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

JointCheckpoint load_joint_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
        if (j.at("schema") != "ruled.joint_checkpoint" || j.at("version") != 1)
            throw ParseError(path.string() + ": not a version 1 joint checkpoint");
        JointCheckpoint c;
        for (const auto& v : j.at("vertices")) c.vertices.emplace_back(v.at(0), v.at(1), v.at(2));
        std::vector<RulingParams> params;
        for (const auto& p : j.at("field")) params.push_back({p.at(0), p.at(1), p.at(2)});
        c.field = RulingField(std::move(params));
        for (const auto& q : j.at("curvature")) {
            c.curv.theta.push_back(q.at(0));
            c.curv.mu.push_back(q.at(1));
        }
        c.nu_history = j.at("nu_history").get<std::vector<double>>();
        c.edge_comb = j.at("edge_comb").get<std::vector<double>>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

} // namespace ruled

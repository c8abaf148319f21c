#include "ruled/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numbers>
#include <queue>

#include <Eigen/Dense>

namespace ruled {

namespace {

int opposite_vertex(const TriangleMesh& mesh, int f, const Edge& e)
{
    for (int v : mesh.face(f)) {
        if (v != e.verts[0] && v != e.verts[1]) return v;
    }
    return -1;
}

} // namespace

FaceFrame face_frame(const TriangleMesh& mesh, int f)
{
    const Face& t = mesh.face(f);
    FaceFrame fr;
    fr.face = f;
    fr.d1 = mesh.vertex(t[1]) - mesh.vertex(t[0]);
    fr.d2 = mesh.vertex(t[2]) - mesh.vertex(t[0]);
    fr.normal = fr.d1.cross(fr.d2).normalized();
    fr.centroid = mesh.face_centroid(f);
    return fr;
}

SharedEdgeBases shared_edge_bases(const TriangleMesh& mesh, int e)
{
    const Edge& ed = mesh.edge(e);
    if (ed.is_boundary()) throw PreconditionError("shared_edge_bases: boundary edge " + std::to_string(e));
    SharedEdgeBases out;
    out.edge = e;
    out.face_i = ed.faces[0];
    out.face_j = ed.faces[1];
    out.direction = (mesh.vertex(ed.verts[1]) - mesh.vertex(ed.verts[0])).normalized();
    const Vec3 ni = mesh.face_normal(out.face_i);
    const Vec3 nj = mesh.face_normal(out.face_j);
    out.basis_i.col(0) = out.direction;
    out.basis_i.col(1) = out.direction.cross(ni);
    out.basis_j.col(0) = out.direction;
    out.basis_j.col(1) = out.direction.cross(nj);
    return out;
}

UnfoldedNeighbor unfold_neighbor(const TriangleMesh& mesh, int face, int neighbor)
{
    const int e = face == neighbor ? -1 : mesh.shared_edge(face, neighbor);
    if (e < 0)
        throw PreconditionError("unfold_neighbor: faces " + std::to_string(face) + " and "
                                + std::to_string(neighbor) + " are not adjacent");
    const Edge& ed = mesh.edge(e);
    const Vec3& p = mesh.vertex(ed.verts[0]);
    const Vec3& q = mesh.vertex(ed.verts[1]);
    const Vec3& apex = mesh.vertex(opposite_vertex(mesh, face, ed));
    const Vec3& w = mesh.vertex(opposite_vertex(mesh, neighbor, ed));
    const Vec3 w_unf = kernel::unfold_point<double>(p, q, apex, w);
    UnfoldedNeighbor out;
    out.face = face;
    out.neighbor = neighbor;
    out.unfolded_centroid = (p + q + w_unf) / 3.0;
    out.displacement = out.unfolded_centroid - mesh.face_centroid(face);
    return out;
}

Vec3 unfold_vector(const TriangleMesh& mesh, int from, int to, const Vec3& t)
{
    const int e = mesh.shared_edge(from, to);
    if (e < 0) throw PreconditionError("unfold_vector: faces are not adjacent");
    const Edge& ed = mesh.edge(e);
    const Vec3 u = (mesh.vertex(ed.verts[1]) - mesh.vertex(ed.verts[0])).normalized();
    const Vec3 n_from = mesh.face_normal(from);
    const Vec3 n_to = mesh.face_normal(to);
    // Coordinates in [u, u x n] are preserved by the unfolding.
    const double along = t.dot(u);
    const double side = t.dot(u.cross(n_from));
    return along * u + side * u.cross(n_to);
}

Vec3 closest_point_on_segment(const Vec3& p, const Vec3& a, const Vec3& b)
{
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 <= 0.0) return a;
    const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return a + t * ab;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c)
{
    // Region classification after Ericson, Real-Time Collision Detection 5.1.5.
    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    const Vec3 ap = p - a;
    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp);
    const double d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp);
    const double d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
        return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);

    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

std::vector<Vec3> vertex_normals(const TriangleMesh& mesh)
{
    std::vector<Vec3> normals(mesh.num_vertices(), Vec3::Zero());
    for (int f = 0; f < mesh.num_faces(); ++f) {
        const Face& t = mesh.face(f);
        const Vec3 n = mesh.face_normal(f);
        for (int k = 0; k < 3; ++k) {
            const Vec3& p = mesh.vertex(t[k]);
            const Vec3 u = (mesh.vertex(t[(k + 1) % 3]) - p).normalized();
            const Vec3 w = (mesh.vertex(t[(k + 2) % 3]) - p).normalized();
            const double angle = std::acos(std::clamp(u.dot(w), -1.0, 1.0));
            normals[t[k]] += angle * n;
        }
    }
    for (Vec3& n : normals) {
        const double len = n.norm();
        if (len > 0.0) n /= len;
    }
    return normals;
}

std::vector<PrincipalEstimate> estimate_principal(const TriangleMesh& mesh)
{
    const std::vector<Vec3> vn = vertex_normals(mesh);
    std::vector<PrincipalEstimate> out(mesh.num_faces());

    for (int f = 0; f < mesh.num_faces(); ++f) {
        const FaceFrame fr = face_frame(mesh, f);
        const Vec3 u = fr.d1.normalized();
        const Vec3 w = fr.normal.cross(u);

        // Unknowns (L, M, N) of the symmetric 2x2 shape operator in (u, w).
        Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
        Eigen::Vector3d atb = Eigen::Vector3d::Zero();
        auto add_edge = [&](int va, int vb) {
            const Vec3 e = mesh.vertex(vb) - mesh.vertex(va);
            const Vec3 dn = vn[vb] - vn[va];
            const double eu = e.dot(u), ew = e.dot(w);
            const double inv = 1.0 / std::max(e.squaredNorm(), 1e-300);
            Eigen::Vector3d r0(eu, ew, 0.0), r1(0.0, eu, ew);
            ata += inv * (r0 * r0.transpose() + r1 * r1.transpose());
            atb += inv * (r0 * dn.dot(u) + r1 * dn.dot(w));
        };
        for (int e : mesh.face_edges(f)) add_edge(mesh.edge(e).verts[0], mesh.edge(e).verts[1]);
        for (int g : mesh.face_neighbors(f)) {
            for (int e : mesh.face_edges(g)) {
                const Edge& ed = mesh.edge(e);
                if (ed.faces[0] == f || ed.faces[1] == f) continue;
                add_edge(ed.verts[0], ed.verts[1]);
            }
        }
        ata += 1e-12 * Eigen::Matrix3d::Identity();
        const Eigen::Vector3d lmn = ata.ldlt().solve(atb);

        Eigen::Matrix2d shape;
        shape << lmn[0], lmn[1], lmn[1], lmn[2];
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(shape);
        const Eigen::Vector2d vals = eig.eigenvalues();
        const Eigen::Matrix2d vecs = eig.eigenvectors();

        const int big = std::abs(vals[1]) > std::abs(vals[0]) ? 1 : 0;
        const int small = 1 - big;
        const double scale = std::max(1.0, std::max(std::abs(vals[0]), std::abs(vals[1])));
        PrincipalEstimate& pe = out[f];
        pe.kappa1 = vals[big];
        pe.kappa2 = vals[small];
        if (std::abs(std::abs(vals[0]) - std::abs(vals[1])) <= 1e-12 * scale) {
            // Tie: every tangent is principal; use a world axis so neighbours agree.
            const Vec3 axis = std::abs(fr.normal.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
            pe.e1 = (axis - axis.dot(fr.normal) * fr.normal).normalized();
        } else {
            pe.e1 = (vecs(0, big) * u + vecs(1, big) * w).normalized();
        }
        pe.e2 = fr.normal.cross(pe.e1);
    }
    return out;
}

double mixed_area(const TriangleMesh& mesh, int v)
{
    double area = 0.0;
    for (int f : mesh.vertex_faces(v)) {
        const Face& t = mesh.face(f);
        int k = 0;
        while (t[k] != v) ++k;
        const Vec3& p = mesh.vertex(t[k]);
        const Vec3& q = mesh.vertex(t[(k + 1) % 3]);
        const Vec3& r = mesh.vertex(t[(k + 2) % 3]);
        const double tri = mesh.face_area(f);
        const double ang_p = std::acos(std::clamp((q - p).normalized().dot((r - p).normalized()), -1.0, 1.0));
        const double ang_q = std::acos(std::clamp((p - q).normalized().dot((r - q).normalized()), -1.0, 1.0));
        const double ang_r = std::numbers::pi - ang_p - ang_q;
        const double half_pi = 0.5 * std::numbers::pi;
        if (ang_p > half_pi) {
            area += 0.5 * tri;
        } else if (ang_q > half_pi || ang_r > half_pi) {
            area += 0.25 * tri;
        } else {
            // Voronoi region: (|pr|^2 cot(q) + |pq|^2 cot(r)) / 8
            area += ((r - p).squaredNorm() / std::tan(ang_q) + (q - p).squaredNorm() / std::tan(ang_r)) / 8.0;
        }
    }
    return area;
}

double gaussian_curvature_vertex(const TriangleMesh& mesh, int v)
{
    if (mesh.is_boundary_vertex(v))
        throw PreconditionError("gaussian_curvature_vertex: boundary vertex " + std::to_string(v));
    double angle_sum = 0.0;
    for (int f : mesh.vertex_faces(v)) {
        const Face& t = mesh.face(f);
        int k = 0;
        while (t[k] != v) ++k;
        const Vec3& p = mesh.vertex(t[k]);
        const Vec3 a = (mesh.vertex(t[(k + 1) % 3]) - p).normalized();
        const Vec3 b = (mesh.vertex(t[(k + 2) % 3]) - p).normalized();
        angle_sum += std::acos(std::clamp(a.dot(b), -1.0, 1.0));
    }
    return (2.0 * std::numbers::pi - angle_sum) / mixed_area(mesh, v);
}

std::vector<double> graph_geodesic(const TriangleMesh& mesh, std::span<const int> sources,
                                   const std::vector<bool>& allowed)
{
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(mesh.num_vertices(), inf);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    for (int s : sources) {
        if (!allowed.empty() && !allowed[s]) continue;
        dist[s] = 0.0;
        queue.emplace(0.0, s);
    }
    while (!queue.empty()) {
        auto [d, v] = queue.top();
        queue.pop();
        if (d > dist[v]) continue;
        for (int e : mesh.vertex_edges(v)) {
            const Edge& ed = mesh.edge(e);
            const int w = ed.verts[0] == v ? ed.verts[1] : ed.verts[0];
            if (!allowed.empty() && !allowed[w]) continue;
            const double nd = d + mesh.edge_length(e);
            if (nd < dist[w]) {
                dist[w] = nd;
                queue.emplace(nd, w);
            }
        }
    }
    return dist;
}

} // namespace ruled

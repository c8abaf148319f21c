#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "ruled/mesh.hpp"

namespace ruled {

template <class T>
using V3 = Eigen::Matrix<T, 3, 1>;
template <class T>
using V2 = Eigen::Matrix<T, 2, 1>;
using Mat32 = Eigen::Matrix<double, 3, 2>;

// Scalar-generic kernels. They are instantiated with double and with
// forward-mode dual numbers by the optimizers, so they avoid branches on
// values wherever possible.
namespace kernel {

template <class T>
V3<T> unit(const V3<T>& v)
{
    using std::sqrt;
    return v / sqrt(v.squaredNorm());
}

/// Rotates `w` about the line through p, q into the plane spanned by p, q and
/// `apex`, placing it on the side of the line opposite to `apex`.
template <class T>
V3<T> unfold_point(const V3<T>& p, const V3<T>& q, const V3<T>& apex, const V3<T>& w)
{
    using std::sqrt;
    const V3<T> u = unit<T>(V3<T>(q - p));
    const V3<T> rel_w = w - p;
    const T along = rel_w.dot(u);
    const V3<T> perp_w = rel_w - along * u;
    const V3<T> rel_a = apex - p;
    const V3<T> perp_a = rel_a - rel_a.dot(u) * u;
    const V3<T> away = -unit<T>(perp_a);
    return p + along * u + sqrt(perp_w.squaredNorm()) * away;
}

/// Ruling frame of a face whose vertices are p0, p1, p2 (in face order).
template <class T>
struct RulingFrame {
    V3<T> origin;  // centroid o_f
    V3<T> normal;  // n_f
    V3<T> ruling;  // r_f
    V3<T> cross;   // c_f = n_f x r_f
};

template <class T>
RulingFrame<T> ruling_frame(const V3<T>& p0, const V3<T>& p1, const V3<T>& p2, const T& a, const T& b)
{
    RulingFrame<T> fr;
    const V3<T> d1 = p1 - p0;
    const V3<T> d2 = p2 - p0;
    fr.origin = (p0 + p1 + p2) / T(3.0);
    fr.normal = unit<T>(V3<T>(d1.cross(d2)));
    fr.ruling = unit<T>(V3<T>(a * d1 + b * d2));
    fr.cross = fr.normal.cross(fr.ruling);
    return fr;
}

/// Unnormalized ruling direction (1 + g x) r + g y c at point s.
template <class T>
V3<T> ruling_at(const RulingFrame<T>& fr, const T& gamma, const V3<T>& s)
{
    const V3<T> rel = s - fr.origin;
    const T x = rel.dot(fr.ruling);
    const T y = rel.dot(fr.cross);
    return (T(1.0) + gamma * x) * fr.ruling + (gamma * y) * fr.cross;
}

} // namespace kernel

/// Centroid, unit normal and the two edge vectors of a face.
struct FaceFrame {
    int face = -1;
    Vec3 centroid;
    Vec3 normal;
    Vec3 d1;  // v2 - v1
    Vec3 d2;  // v3 - v1
};

FaceFrame face_frame(const TriangleMesh& mesh, int f);

/// Bases [e, e x n_i] and [e, e x n_j] of the two faces of an interior edge.
/// face_i is edge.faces[0]; e points from edge.verts[0] to edge.verts[1].
struct SharedEdgeBases {
    int edge = -1;
    int face_i = -1;
    int face_j = -1;
    Vec3 direction;
    Mat32 basis_i;
    Mat32 basis_j;
};

SharedEdgeBases shared_edge_bases(const TriangleMesh& mesh, int e);

/// Centroid of `neighbor` rotated about the shared edge into the plane of `face`.
struct UnfoldedNeighbor {
    int face = -1;
    int neighbor = -1;
    Vec3 unfolded_centroid;
    Vec3 displacement;  // unfolded_centroid - centroid(face)
};

UnfoldedNeighbor unfold_neighbor(const TriangleMesh& mesh, int face, int neighbor);

/// Rotates a tangent vector of face `from` about the shared edge into the
/// plane of face `to`.
Vec3 unfold_vector(const TriangleMesh& mesh, int from, int to, const Vec3& t);

/// Closest point on triangle (a, b, c) to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);
/// Closest point on segment [a, b] to p.
Vec3 closest_point_on_segment(const Vec3& p, const Vec3& a, const Vec3& b);

/// Per-face principal curvature estimate. |kappa1| >= |kappa2|.
struct PrincipalEstimate {
    Vec3 e1;
    Vec3 e2;
    double kappa1 = 0.0;
    double kappa2 = 0.0;
    double gaussian() const { return kappa1 * kappa2; }
};

/// Angle-weighted vertex normals.
std::vector<Vec3> vertex_normals(const TriangleMesh& mesh);

/// Fits a symmetric shape operator per face from vertex-normal differences
/// along the edges of the face and its edge neighbours. Where the two
/// curvatures tie, e1 is the world x axis (y for faces facing x) projected
/// into the face plane.
std::vector<PrincipalEstimate> estimate_principal(const TriangleMesh& mesh);

/// Mixed Voronoi area of a vertex.
double mixed_area(const TriangleMesh& mesh, int v);

/// Angle deficit over mixed area. Throws PreconditionError on boundary vertices.
double gaussian_curvature_vertex(const TriangleMesh& mesh, int v);

/// Shortest-path distances over the vertex-edge graph. Unreachable vertices
/// get +infinity. When `allowed` is non-empty only flagged vertices are visited.
std::vector<double> graph_geodesic(const TriangleMesh& mesh, std::span<const int> sources,
                                   const std::vector<bool>& allowed = {});

} // namespace ruled

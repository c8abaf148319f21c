#pragma once

#include <array>
#include <filesystem>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "ruled/error.hpp"

namespace ruled {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Face = std::array<int, 3>;

inline constexpr int kNoFace = -1;

/// Undirected mesh edge. `faces[1]` is kNoFace for boundary edges.
struct Edge {
    std::array<int, 2> verts{};
    std::array<int, 2> faces{kNoFace, kNoFace};

    bool is_boundary() const { return faces[1] == kNoFace; }
    int other_face(int f) const { return faces[0] == f ? faces[1] : faces[0]; }
};

/// Indexed triangle mesh with a derived edge table.
///
/// The mesh is immutable after construction. Construction validates that the
/// input is an orientable 2-manifold (with or without boundary); geometry
/// changes go through `with_vertices`, which keeps the connectivity.
class TriangleMesh {
public:
    TriangleMesh() = default;

    /// Builds adjacency and validates the input. When `check_area` is set,
    /// faces with area below 1e-12 of the squared bbox diagonal are rejected.
    TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces, bool check_area = true);

    int num_vertices() const { return static_cast<int>(vertices_.size()); }
    int num_faces() const { return static_cast<int>(faces_.size()); }
    int num_edges() const { return static_cast<int>(edges_.size()); }
    bool empty() const { return faces_.empty(); }

    const std::vector<Vec3>& vertices() const { return vertices_; }
    const std::vector<Face>& faces() const { return faces_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const Vec3& vertex(int v) const { return vertices_[v]; }
    const Face& face(int f) const { return faces_[f]; }
    const Edge& edge(int e) const { return edges_[e]; }

    /// Edge k of face f joins face(f)[k] and face(f)[(k+1)%3].
    int face_edge(int f, int k) const { return face_edges_[f][k]; }
    const std::array<int, 3>& face_edges(int f) const { return face_edges_[f]; }

    /// Edge index joining a and b, or -1.
    int find_edge(int a, int b) const;

    const std::vector<int>& vertex_edges(int v) const { return vertex_edges_[v]; }
    const std::vector<int>& vertex_faces(int v) const { return vertex_faces_[v]; }
    /// Edge-adjacent faces of f (kNoFace entries omitted).
    std::vector<int> face_neighbors(int f) const;
    /// Edge shared by faces f and g, or -1.
    int shared_edge(int f, int g) const;

    bool is_boundary_vertex(int v) const { return boundary_vertex_[v]; }
    bool is_boundary_edge(int e) const { return edges_[e].is_boundary(); }
    bool has_boundary() const;

    /// Neighbouring vertices along edges; for boundary vertices only the
    /// neighbours along boundary edges when `boundary_only` is set.
    std::vector<int> vertex_neighbors(int v, bool boundary_only = false) const;

    /// Boundary loops as ordered vertex lists, oriented with the faces.
    std::vector<std::vector<int>> boundary_loops() const;

    int euler_characteristic() const { return num_vertices() - num_edges() + num_faces(); }

    Vec3 face_centroid(int f) const;
    Vec3 face_normal(int f) const;
    double face_area(int f) const;
    double edge_length(int e) const;
    double mean_edge_length() const;
    double total_area() const;
    std::pair<Vec3, Vec3> bounding_box() const;
    double bbox_diagonal() const;

    /// Same connectivity with new vertex positions. Adjacency is shared.
    TriangleMesh with_vertices(std::vector<Vec3> vertices) const;

private:
    void build_adjacency();

    std::vector<Vec3> vertices_;
    std::vector<Face> faces_;
    std::vector<Edge> edges_;
    std::vector<std::array<int, 3>> face_edges_;
    std::vector<std::vector<int>> vertex_edges_;
    std::vector<std::vector<int>> vertex_faces_;
    std::vector<bool> boundary_vertex_;
};

/// Uniform scale followed by translation: x_normalized = scale * x + translation.
struct MeshTransform {
    double scale = 1.0;
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return scale * p + translation; }
    Vec3 invert(const Vec3& p) const { return (p - translation) / scale; }
};

/// Reads `v` and `f` records of an ASCII OBJ file. Polygons are fan-triangulated
/// from their first vertex; texture/normal indices and other records are ignored.
TriangleMesh load_obj(const std::filesystem::path& path);
TriangleMesh parse_obj(const std::string& text);

/// Writes vertices with 9 significant digits and 1-based faces.
void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Rescales to unit bounding-box diagonal, centred at the origin.
std::pair<TriangleMesh, MeshTransform> normalize_unit_diagonal(const TriangleMesh& mesh);

} // namespace ruled

#include "ruled/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace ruled {

namespace {

std::uint64_t edge_key(int a, int b)
{
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

} // namespace

TriangleMesh::TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces, bool check_area)
    : vertices_(std::move(vertices)), faces_(std::move(faces))
{
    const int nv = num_vertices();
    for (std::size_t f = 0; f < faces_.size(); ++f) {
        const Face& t = faces_[f];
        for (int k = 0; k < 3; ++k) {
            if (t[k] < 0 || t[k] >= nv)
                throw ParseError("face " + std::to_string(f) + " references vertex index out of range");
        }
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
            throw DegeneracyError("face " + std::to_string(f) + " repeats a vertex");
    }
    build_adjacency();
    if (check_area && !faces_.empty()) {
        const double diag = bbox_diagonal();
        const double min_area = 1e-12 * diag * diag;
        for (int f = 0; f < num_faces(); ++f) {
            if (!(face_area(f) > min_area))
                throw DegeneracyError("face " + std::to_string(f) + " has zero area");
        }
    }
}

void TriangleMesh::build_adjacency()
{
    const int nf = num_faces();
    edges_.clear();
    face_edges_.assign(nf, {-1, -1, -1});
    vertex_edges_.assign(vertices_.size(), {});
    vertex_faces_.assign(vertices_.size(), {});
    boundary_vertex_.assign(vertices_.size(), false);

    std::unordered_map<std::uint64_t, int> lookup;
    lookup.reserve(static_cast<std::size_t>(nf) * 2);
    // Direction (a->b) in which faces[0] traverses each edge.
    std::vector<int> first_dir_start;

    for (int f = 0; f < nf; ++f) {
        for (int k = 0; k < 3; ++k) {
            const int a = faces_[f][k];
            const int b = faces_[f][(k + 1) % 3];
            vertex_faces_[a].push_back(f);
            auto [it, inserted] = lookup.try_emplace(edge_key(a, b), num_edges());
            if (inserted) {
                Edge e;
                e.verts = {a, b};
                e.faces = {f, kNoFace};
                edges_.push_back(e);
                first_dir_start.push_back(a);
                vertex_edges_[a].push_back(it->second);
                vertex_edges_[b].push_back(it->second);
            } else {
                Edge& e = edges_[it->second];
                if (e.faces[1] != kNoFace)
                    throw TopologyError("edge (" + std::to_string(a) + "," + std::to_string(b)
                                        + ") has more than two adjacent faces");
                if (first_dir_start[it->second] == a)
                    throw TopologyError("inconsistent face orientation across edge ("
                                        + std::to_string(a) + "," + std::to_string(b) + ")");
                e.faces[1] = f;
            }
            face_edges_[f][k] = it->second;
        }
    }
    for (const Edge& e : edges_) {
        if (e.is_boundary()) {
            boundary_vertex_[e.verts[0]] = true;
            boundary_vertex_[e.verts[1]] = true;
        }
    }
}

int TriangleMesh::find_edge(int a, int b) const
{
    for (int e : vertex_edges_[a]) {
        const Edge& ed = edges_[e];
        if ((ed.verts[0] == a && ed.verts[1] == b) || (ed.verts[0] == b && ed.verts[1] == a)) return e;
    }
    return -1;
}

std::vector<int> TriangleMesh::face_neighbors(int f) const
{
    std::vector<int> out;
    for (int e : face_edges_[f]) {
        const int g = edges_[e].other_face(f);
        if (g != kNoFace) out.push_back(g);
    }
    return out;
}

int TriangleMesh::shared_edge(int f, int g) const
{
    for (int e : face_edges_[f]) {
        if (edges_[e].other_face(f) == g) return e;
    }
    return -1;
}

bool TriangleMesh::has_boundary() const
{
    return std::any_of(edges_.begin(), edges_.end(), [](const Edge& e) { return e.is_boundary(); });
}

std::vector<int> TriangleMesh::vertex_neighbors(int v, bool boundary_only) const
{
    std::vector<int> out;
    const bool restrict = boundary_only && boundary_vertex_[v];
    for (int e : vertex_edges_[v]) {
        if (restrict && !edges_[e].is_boundary()) continue;
        const Edge& ed = edges_[e];
        out.push_back(ed.verts[0] == v ? ed.verts[1] : ed.verts[0]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::vector<int>> TriangleMesh::boundary_loops() const
{
    // Boundary edges are traversed in the direction of their single face.
    std::vector<int> next(vertices_.size(), -1);
    std::vector<int> starts;
    for (int f = 0; f < num_faces(); ++f) {
        for (int k = 0; k < 3; ++k) {
            if (!edges_[face_edges_[f][k]].is_boundary()) continue;
            const int a = faces_[f][k];
            if (next[a] != -1)
                throw TopologyError("boundary vertex " + std::to_string(a) + " is non-manifold");
            next[a] = faces_[f][(k + 1) % 3];
            starts.push_back(a);
        }
    }
    std::sort(starts.begin(), starts.end());
    std::vector<bool> used(vertices_.size(), false);
    std::vector<std::vector<int>> loops;
    for (int s : starts) {
        if (used[s]) continue;
        std::vector<int> loop;
        int v = s;
        while (!used[v]) {
            used[v] = true;
            loop.push_back(v);
            v = next[v];
            if (v < 0) throw TopologyError("open boundary chain");
        }
        loops.push_back(std::move(loop));
    }
    return loops;
}

Vec3 TriangleMesh::face_centroid(int f) const
{
    const Face& t = faces_[f];
    return (vertices_[t[0]] + vertices_[t[1]] + vertices_[t[2]]) / 3.0;
}

Vec3 TriangleMesh::face_normal(int f) const
{
    const Face& t = faces_[f];
    return (vertices_[t[1]] - vertices_[t[0]]).cross(vertices_[t[2]] - vertices_[t[0]]).normalized();
}

double TriangleMesh::face_area(int f) const
{
    const Face& t = faces_[f];
    return 0.5 * (vertices_[t[1]] - vertices_[t[0]]).cross(vertices_[t[2]] - vertices_[t[0]]).norm();
}

double TriangleMesh::edge_length(int e) const
{
    return (vertices_[edges_[e].verts[1]] - vertices_[edges_[e].verts[0]]).norm();
}

double TriangleMesh::mean_edge_length() const
{
    if (edges_.empty()) return 0.0;
    double sum = 0.0;
    for (int e = 0; e < num_edges(); ++e) sum += edge_length(e);
    return sum / num_edges();
}

double TriangleMesh::total_area() const
{
    double sum = 0.0;
    for (int f = 0; f < num_faces(); ++f) sum += face_area(f);
    return sum;
}

std::pair<Vec3, Vec3> TriangleMesh::bounding_box() const
{
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const Vec3& p : vertices_) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return {lo, hi};
}

double TriangleMesh::bbox_diagonal() const
{
    if (vertices_.empty()) return 0.0;
    auto [lo, hi] = bounding_box();
    return (hi - lo).norm();
}

TriangleMesh TriangleMesh::with_vertices(std::vector<Vec3> vertices) const
{
    if (vertices.size() != vertices_.size())
        throw PreconditionError("with_vertices: vertex count mismatch");
    TriangleMesh out = *this;
    out.vertices_ = std::move(vertices);
    return out;
}

TriangleMesh parse_obj(const std::string& text)
{
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z()))
                throw ParseError("line " + std::to_string(line_no) + ": malformed vertex record");
            vertices.push_back(p);
        } else if (tag == "f") {
            std::vector<int> poly;
            std::string tok;
            while (ls >> tok) {
                const std::string head = tok.substr(0, tok.find('/'));
                int idx = 0;
                try {
                    std::size_t used = 0;
                    idx = std::stoi(head, &used);
                    if (used != head.size()) throw std::invalid_argument(head);
                } catch (const std::exception&) {
                    throw ParseError("line " + std::to_string(line_no) + ": malformed face index '" + tok + "'");
                }
                if (idx < 0) idx = static_cast<int>(vertices.size()) + idx + 1;
                if (idx < 1 || idx > static_cast<int>(vertices.size()))
                    throw ParseError("line " + std::to_string(line_no) + ": face index out of range");
                poly.push_back(idx - 1);
            }
            if (poly.size() < 3)
                throw ParseError("line " + std::to_string(line_no) + ": face with fewer than 3 vertices");
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) faces.push_back({poly[0], poly[k], poly[k + 1]});
        }
    }
    if (faces.empty()) throw ParseError("OBJ contains no faces");
    return TriangleMesh(std::move(vertices), std::move(faces));
}

TriangleMesh load_obj(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_obj(buf.str());
}

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path)
{
    if (mesh.empty()) throw PreconditionError("save_obj: empty mesh");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    char buf[128];
    for (const Vec3& p : mesh.vertices()) {
        std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", p.x(), p.y(), p.z());
        out << buf;
    }
    for (const Face& f : mesh.faces()) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

std::pair<TriangleMesh, MeshTransform> normalize_unit_diagonal(const TriangleMesh& mesh)
{
    if (mesh.num_vertices() == 0) throw PreconditionError("normalize_unit_diagonal: empty mesh");
    auto [lo, hi] = mesh.bounding_box();
    const double diag = (hi - lo).norm();
    if (!(diag > 0.0)) throw DegeneracyError("normalize_unit_diagonal: degenerate bounding box");
    MeshTransform xf;
    xf.scale = 1.0 / diag;
    xf.translation = -xf.scale * 0.5 * (lo + hi);
    std::vector<Vec3> verts;
    verts.reserve(mesh.num_vertices());
    for (const Vec3& p : mesh.vertices()) verts.push_back(xf.apply(p));
    return {mesh.with_vertices(std::move(verts)), xf};
}

} // namespace ruled

#include "ruled/seam_topology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <set>

#include "ruled/geometry.hpp"
#include "ruled/graph_cut.hpp"
#include "ruled/joint_opt.hpp"
#include "ruled/tracing.hpp"

namespace ruled {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<bool> face_mask(const TriangleMesh& mesh, const std::vector<int>& faces)
{
    std::vector<bool> m(mesh.num_faces(), false);
    for (int f : faces) {
        if (f < 0 || f >= mesh.num_faces()) throw PreconditionError("face index out of range");
        m[f] = true;
    }
    return m;
}

std::vector<bool> edge_mask(const TriangleMesh& mesh, const std::vector<int>& edges)
{
    std::vector<bool> m(mesh.num_edges(), false);
    for (int e : edges) {
        if (e < 0 || e >= mesh.num_edges()) throw PreconditionError("edge index out of range");
        m[e] = true;
    }
    return m;
}

bool region_boundary_edge(const TriangleMesh& mesh, const std::vector<bool>& in_region, int f, int e)
{
    const int g = mesh.edge(e).other_face(f);
    return g == kNoFace || !in_region[g];
}

// Boundary half-edge of a region: edge k of face, running from -> to.
struct HalfEdge {
    int face = -1;
    int k = -1;
    int from = -1;
    int to = -1;
    int edge = -1;
};

HalfEdge half_edge(const TriangleMesh& mesh, int f, int k)
{
    return {f, k, mesh.face(f)[k], mesh.face(f)[(k + 1) % 3], mesh.face_edge(f, k)};
}

int slot_of(const Face& t, int v)
{
    for (int k = 0; k < 3; ++k)
        if (t[k] == v) return k;
    return -1;
}

// Boundary loops of a face set, each an ordered list of half-edges.
std::vector<std::vector<HalfEdge>> region_loops(const TriangleMesh& mesh, const std::vector<int>& faces,
                                                const std::vector<bool>& in_region)
{
    std::set<int> visited;
    std::vector<std::vector<HalfEdge>> loops;
    for (int f : faces) {
        for (int k = 0; k < 3; ++k) {
            if (!region_boundary_edge(mesh, in_region, f, mesh.face_edge(f, k)) || visited.count(3 * f + k)) continue;
            std::vector<HalfEdge> loop;
            HalfEdge h = half_edge(mesh, f, k);
            while (!visited.count(3 * h.face + h.k)) {
                visited.insert(3 * h.face + h.k);
                loop.push_back(h);
                // Rotate about h.to through region faces to the next boundary half-edge.
                int g = h.face;
                for (int guard = 0;; ++guard) {
                    if (guard > 64 * mesh.num_faces() + 64) throw TopologyError("region boundary walk did not close");
                    const int kb = slot_of(mesh.face(g), h.to);
                    const int e = mesh.face_edge(g, kb);
                    if (region_boundary_edge(mesh, in_region, g, e)) {
                        h = half_edge(mesh, g, kb);
                        break;
                    }
                    g = mesh.edge(e).other_face(g);
                }
            }
            loops.push_back(std::move(loop));
        }
    }
    return loops;
}

// Subdivision and seam-construction plan of one region.
struct RegionPlan {
    std::vector<int> faces;
    std::vector<int> splits;
    std::vector<int> virtual_splits;
    std::vector<int> split_edges;
    int centroid_face = -1;
    std::vector<int> seam_edges;          // original edges, single-face cases
    std::map<int, int> boundary_label;    // original edge -> segment label
    int num_labels = 0;
    std::vector<std::string> warnings;
};

RegionPlan plan_single(const TriangleMesh& mesh, int f, const std::vector<int>& splits)
{
    RegionPlan plan;
    plan.faces = {f};
    plan.splits = splits;
    std::sort(plan.splits.begin(), plan.splits.end());
    plan.splits.erase(std::unique(plan.splits.begin(), plan.splits.end()), plan.splits.end());
    for (int v : plan.splits)
        if (slot_of(mesh.face(f), v) < 0) throw PreconditionError("seams_single_face: split vertex not on the face");

    auto longest = [&](auto accept) {
        int best = -1;
        for (int e : mesh.face_edges(f)) {
            if (!accept(e)) continue;
            if (best < 0 || mesh.edge_length(e) > mesh.edge_length(best) ||
                (mesh.edge_length(e) == mesh.edge_length(best) && e < best))
                best = e;
        }
        return best;
    };
    switch (plan.splits.size()) {
    case 0: plan.seam_edges = {longest([](int) { return true; })}; break;
    case 1: {
        const int q = plan.splits[0];
        plan.seam_edges = {longest([&](int e) { return mesh.edge(e).verts[0] == q || mesh.edge(e).verts[1] == q; })};
        break;
    }
    case 2: plan.seam_edges = {mesh.find_edge(plan.splits[0], plan.splits[1])}; break;
    default: plan.centroid_face = f; break;
    }
    return plan;
}

// Farthest boundary vertex from `q` (or farthest pair when q < 0) under the
// graph geodesic restricted to the region's vertices.
std::vector<int> virtual_splits(const TriangleMesh& mesh, const std::vector<int>& faces,
                                const std::vector<int>& boundary_verts, int q)
{
    std::vector<bool> allowed(mesh.num_vertices(), false);
    for (int f : faces)
        for (int v : mesh.face(f)) allowed[v] = true;
    auto farthest_from = [&](int src, double& dist) {
        const int s[] = {src};
        const std::vector<double> d = graph_geodesic(mesh, s, allowed);
        int best = -1;
        dist = -1.0;
        for (int v : boundary_verts)
            if (d[v] < kInf && d[v] > dist) {
                dist = d[v];
                best = v;
            }
        return best;
    };
    double dist = 0.0;
    if (q >= 0) return {farthest_from(q, dist)};
    int best_a = -1, best_b = -1;
    double best = -1.0;
    for (int a : boundary_verts) {
        const int b = farthest_from(a, dist);
        if (dist > best) {
            best = dist;
            best_a = std::min(a, b);
            best_b = std::max(a, b);
        }
    }
    return {best_a, best_b};
}

RegionPlan plan_multi(const TriangleMesh& mesh, const std::vector<int>& faces, const std::vector<int>& splits)
{
    RegionPlan plan;
    plan.faces = faces;
    const std::vector<bool> in_region = face_mask(mesh, faces);
    const auto loops = region_loops(mesh, faces, in_region);
    if (loops.size() > 1)
        plan.warnings.push_back("disconnected region boundary: " + std::to_string(loops.size()) + " loops");

    std::set<int> boundary_set;
    for (const auto& loop : loops)
        for (const HalfEdge& h : loop) boundary_set.insert(h.from);
    const std::vector<int> boundary_verts(boundary_set.begin(), boundary_set.end());

    std::set<int> split_set(splits.begin(), splits.end());
    for (int v : split_set)
        if (!boundary_set.count(v)) throw PreconditionError("seams_multi_face: split vertex not on the region boundary");
    if (split_set.size() == 1) {
        plan.virtual_splits = virtual_splits(mesh, faces, boundary_verts, *split_set.begin());
    } else if (split_set.empty()) {
        plan.virtual_splits = virtual_splits(mesh, faces, boundary_verts, -1);
    }
    for (int v : plan.virtual_splits) split_set.insert(v);
    plan.splits.assign(split_set.begin(), split_set.end());

    // Segment labels: each loop starts at its lowest split vertex.
    int label = 0;
    for (const auto& loop : loops) {
        const int n = static_cast<int>(loop.size());
        int start = -1;
        for (int i = 0; i < n; ++i)
            if (split_set.count(loop[i].from) && (start < 0 || loop[i].from < loop[start].from)) start = i;
        if (start < 0) {
            for (const HalfEdge& h : loop) plan.boundary_label[h.edge] = label;
            ++label;
            continue;
        }
        int current = label - 1;
        for (int i = 0; i < n; ++i) {
            const HalfEdge& h = loop[(start + i) % n];
            if (split_set.count(h.from)) ++current;
            plan.boundary_label[h.edge] = current;
        }
        label = current + 1;
    }
    plan.num_labels = label;

    std::set<int> split_edges;
    for (int f : faces) {
        std::vector<int> labels_seen;
        int inner = -1;
        for (int e : mesh.face_edges(f)) {
            const auto it = plan.boundary_label.find(e);
            if (it != plan.boundary_label.end() && region_boundary_edge(mesh, in_region, f, e))
                labels_seen.push_back(it->second);
            else
                inner = e;
        }
        if (labels_seen.size() == 2 && labels_seen[0] != labels_seen[1]) {
            split_edges.insert(inner);
        } else {
            for (int e : mesh.face_edges(f)) split_edges.insert(e);
        }
    }
    plan.split_edges.assign(split_edges.begin(), split_edges.end());
    return plan;
}

struct PlanSeams {
    std::vector<int> seam_edges;
    std::vector<int> sub_face_labels;
    std::vector<std::string> warnings;
};

PlanSeams seams_from_plan(const TriangleMesh& original, const Refinement& ref, const RegionPlan& plan,
                          double lambda_label)
{
    const TriangleMesh& m = ref.mesh;
    PlanSeams out;
    out.sub_face_labels.assign(m.num_faces(), -1);
    if (plan.faces.size() == 1) {
        if (plan.centroid_face >= 0) {
            const int c = ref.face_center[plan.centroid_face];
            for (int v : original.face(plan.centroid_face)) out.seam_edges.push_back(m.find_edge(c, v));
        } else {
            for (int e : plan.seam_edges) {
                const Edge& ed = original.edge(e);
                out.seam_edges.push_back(m.find_edge(ed.verts[0], ed.verts[1]));
            }
        }
        for (int e : out.seam_edges)
            if (e < 0) throw TopologyError("single-face seam edge lost in refinement");
        std::sort(out.seam_edges.begin(), out.seam_edges.end());
        return out;
    }

    const std::vector<bool> in_region = face_mask(original, plan.faces);
    std::vector<int> nodes;
    std::vector<int> node_of(m.num_faces(), -1);
    for (int f = 0; f < m.num_faces(); ++f)
        if (in_region[ref.parent_face[f]]) {
            node_of[f] = static_cast<int>(nodes.size());
            nodes.push_back(f);
        }
    const int n = static_cast<int>(nodes.size());

    LabelProblem pb;
    pb.num_labels = plan.num_labels;
    pb.fixed.assign(n, -1);
    for (int i = 0; i < n; ++i) {
        const int f = nodes[i];
        for (int e : m.face_edges(f)) {
            const int pe = ref.parent_edge[e];
            if (pe < 0 || !region_boundary_edge(original, in_region, ref.parent_face[f], pe)) continue;
            const int l = plan.boundary_label.at(pe);
            if (pb.fixed[i] >= 0 && pb.fixed[i] != l) {
                out.warnings.push_back("boundary sub-face touches two segment labels");
                pb.fixed[i] = std::min(pb.fixed[i], l);
            } else if (pb.fixed[i] < 0) {
                pb.fixed[i] = l;
            }
        }
    }

    // Dual graph over sub-faces with centroid distances.
    std::vector<std::vector<std::pair<int, double>>> adj(n);
    for (int e = 0; e < m.num_edges(); ++e) {
        const Edge& ed = m.edge(e);
        if (ed.is_boundary()) continue;
        const int a = node_of[ed.faces[0]], b = node_of[ed.faces[1]];
        if (a < 0 || b < 0) continue;
        const double w = (m.face_centroid(ed.faces[0]) - m.face_centroid(ed.faces[1])).norm();
        adj[a].push_back({b, w});
        adj[b].push_back({a, w});
        if (pb.fixed[a] < 0 || pb.fixed[b] < 0) pb.pairs.push_back({a, b, m.edge_length(e)});
    }
    const double unreachable = 1e6 * std::max(1.0, original.bbox_diagonal());
    pb.unary.assign(n, std::vector<double>(plan.num_labels, 0.0));
    for (int l = 0; l < plan.num_labels; ++l) {
        std::vector<double> d(n, kInf);
        using Item = std::pair<double, int>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
        for (int i = 0; i < n; ++i)
            if (pb.fixed[i] == l) {
                d[i] = 0.0;
                pq.push({0.0, i});
            }
        while (!pq.empty()) {
            const auto [di, i] = pq.top();
            pq.pop();
            if (di > d[i]) continue;
            for (const auto& [j, w] : adj[i])
                if (di + w < d[j]) {
                    d[j] = di + w;
                    pq.push({d[j], j});
                }
        }
        for (int i = 0; i < n; ++i) pb.unary[i][l] = d[i] < kInf ? lambda_label * d[i] : unreachable;
    }

    const std::vector<int> labels = alpha_expansion(pb);
    for (int i = 0; i < n; ++i) out.sub_face_labels[nodes[i]] = labels[i];
    for (int e = 0; e < m.num_edges(); ++e) {
        const Edge& ed = m.edge(e);
        if (ed.is_boundary()) continue;
        const int a = node_of[ed.faces[0]], b = node_of[ed.faces[1]];
        if (a >= 0 && b >= 0 && labels[a] != labels[b]) out.seam_edges.push_back(e);
    }
    return out;
}

RegionSeams run_plan(const TriangleMesh& mesh, const RegionPlan& plan, double lambda_label)
{
    RegionSeams rs;
    std::vector<bool> split(mesh.num_edges(), false), centroid(mesh.num_faces(), false);
    for (int e : plan.split_edges) split[e] = true;
    if (plan.centroid_face >= 0) centroid[plan.centroid_face] = true;
    rs.refinement = refine_mesh(mesh, split, centroid);
    PlanSeams ps = seams_from_plan(mesh, rs.refinement, plan, lambda_label);
    rs.seam_edges = std::move(ps.seam_edges);
    rs.sub_face_labels = std::move(ps.sub_face_labels);
    rs.splits = plan.splits;
    rs.virtual_splits = plan.virtual_splits;
    rs.num_labels = plan.num_labels;
    rs.warnings = plan.warnings;
    rs.warnings.insert(rs.warnings.end(), ps.warnings.begin(), ps.warnings.end());
    return rs;
}

} // namespace

std::vector<int> extract_candidates(const TriangleMesh& mesh, const std::vector<double>& edge_comb, double eps_edge)
{
    if (static_cast<int>(edge_comb.size()) != mesh.num_edges())
        throw PreconditionError("extract_candidates: one E_comb value per edge expected");
    std::vector<int> out;
    for (int e = 0; e < mesh.num_edges(); ++e)
        if (!mesh.is_boundary_edge(e) && edge_comb[e] > eps_edge) out.push_back(e);
    return out;
}

CleanupSet build_cleanup_set(const TriangleMesh& mesh, const std::vector<int>& candidates, double eps_area)
{
    const std::vector<bool> cand = edge_mask(mesh, candidates);
    CleanupSet cs;
    cs.in_set.assign(mesh.num_faces(), false);
    for (int f = 0; f < mesh.num_faces(); ++f) {
        int count = 0;
        for (int e : mesh.face_edges(f)) count += cand[e];
        cs.in_set[f] = count >= 2;
    }

    // Pieces of the surface cut along the candidates.
    std::vector<int> comp(mesh.num_faces(), -1);
    for (int seed = 0; seed < mesh.num_faces(); ++seed) {
        if (comp[seed] >= 0) continue;
        std::vector<int> stack{seed}, members;
        comp[seed] = seed;
        bool touches_boundary = false;
        double area = 0.0;
        while (!stack.empty()) {
            const int f = stack.back();
            stack.pop_back();
            members.push_back(f);
            area += mesh.face_area(f);
            for (int e : mesh.face_edges(f)) {
                const Edge& ed = mesh.edge(e);
                if (ed.is_boundary()) {
                    touches_boundary = true;
                    continue;
                }
                if (cand[e]) continue;
                const int g = ed.other_face(f);
                if (comp[g] < 0) {
                    comp[g] = seed;
                    stack.push_back(g);
                }
            }
        }
        if (!touches_boundary && area < eps_area)
            for (int f : members) cs.in_set[f] = true;
    }

    std::vector<bool> seen(mesh.num_faces(), false);
    for (int seed = 0; seed < mesh.num_faces(); ++seed) {
        if (!cs.in_set[seed] || seen[seed]) continue;
        std::vector<int> region, stack{seed};
        seen[seed] = true;
        while (!stack.empty()) {
            const int f = stack.back();
            stack.pop_back();
            region.push_back(f);
            for (int g : mesh.face_neighbors(f))
                if (cs.in_set[g] && !seen[g]) {
                    seen[g] = true;
                    stack.push_back(g);
                }
        }
        std::sort(region.begin(), region.end());
        cs.regions.push_back(std::move(region));
    }
    return cs;
}

std::vector<int> find_split_vertices(const TriangleMesh& mesh, const std::vector<int>& region,
                                     const std::vector<int>& candidates)
{
    const std::vector<bool> in_region = face_mask(mesh, region);
    const std::vector<bool> cand = edge_mask(mesh, candidates);
    std::vector<bool> region_edge(mesh.num_edges(), false);
    std::set<int> boundary;
    for (int f : region)
        for (int k = 0; k < 3; ++k) {
            const int e = mesh.face_edge(f, k);
            region_edge[e] = true;
            if (region_boundary_edge(mesh, in_region, f, e)) {
                boundary.insert(mesh.edge(e).verts[0]);
                boundary.insert(mesh.edge(e).verts[1]);
            }
        }
    std::vector<int> out;
    for (int v : boundary)
        for (int e : mesh.vertex_edges(v))
            if (cand[e] && !region_edge[e]) {
                out.push_back(v);
                break;
            }
    return out;
}

Refinement refine_mesh(const TriangleMesh& mesh, const std::vector<bool>& split_edges,
                       const std::vector<bool>& centroid_faces)
{
    if (static_cast<int>(split_edges.size()) != mesh.num_edges() ||
        static_cast<int>(centroid_faces.size()) != mesh.num_faces())
        throw PreconditionError("refine_mesh: mask size mismatch");
    Refinement ref;
    std::vector<Vec3> verts = mesh.vertices();
    std::vector<int> midpoint_edge;  // per appended vertex, original edge or -1
    ref.edge_midpoint.assign(mesh.num_edges(), -1);
    ref.face_center.assign(mesh.num_faces(), -1);
    for (int e = 0; e < mesh.num_edges(); ++e)
        if (split_edges[e]) {
            ref.edge_midpoint[e] = static_cast<int>(verts.size());
            verts.push_back(0.5 * (mesh.vertex(mesh.edge(e).verts[0]) + mesh.vertex(mesh.edge(e).verts[1])));
            midpoint_edge.push_back(e);
        }
    for (int f = 0; f < mesh.num_faces(); ++f)
        if (centroid_faces[f]) {
            for (int e : mesh.face_edges(f))
                if (split_edges[e]) throw PreconditionError("refine_mesh: centroid face with a split edge");
            ref.face_center[f] = static_cast<int>(verts.size());
            verts.push_back(mesh.face_centroid(f));
            midpoint_edge.push_back(-1);
        }

    std::vector<Face> faces;
    for (int f = 0; f < mesh.num_faces(); ++f) {
        const Face& t = mesh.face(f);
        auto add = [&](int a, int b, int c) {
            faces.push_back({a, b, c});
            ref.parent_face.push_back(f);
        };
        if (ref.face_center[f] >= 0) {
            const int c = ref.face_center[f];
            add(t[0], t[1], c);
            add(t[1], t[2], c);
            add(t[2], t[0], c);
            continue;
        }
        int mid[3], count = 0;
        for (int k = 0; k < 3; ++k) {
            mid[k] = ref.edge_midpoint[mesh.face_edge(f, k)];
            count += mid[k] >= 0;
        }
        if (count == 0) {
            add(t[0], t[1], t[2]);
        } else if (count == 1) {
            const int k = mid[0] >= 0 ? 0 : mid[1] >= 0 ? 1 : 2;
            add(t[k], mid[k], t[(k + 2) % 3]);
            add(mid[k], t[(k + 1) % 3], t[(k + 2) % 3]);
        } else if (count == 2) {
            const int j = mid[0] < 0 ? 0 : mid[1] < 0 ? 1 : 2;  // the unsplit edge
            const int v0 = t[j], v1 = t[(j + 1) % 3], v2 = t[(j + 2) % 3];
            const int m1 = mid[(j + 1) % 3], m2 = mid[(j + 2) % 3];
            add(m1, v2, m2);
            // Quad v0 v1 m1 m2, cut along its shorter diagonal.
            if ((verts[v0] - verts[m1]).norm() <= (verts[v1] - verts[m2]).norm()) {
                add(v0, v1, m1);
                add(v0, m1, m2);
            } else {
                add(v0, v1, m2);
                add(v1, m1, m2);
            }
        } else {
            add(t[0], mid[0], mid[2]);
            add(mid[0], t[1], mid[1]);
            add(mid[2], mid[1], t[2]);
            add(mid[0], mid[1], mid[2]);
        }
    }
    ref.mesh = TriangleMesh(std::move(verts), std::move(faces), false);

    const int n0 = mesh.num_vertices();
    ref.parent_edge.assign(ref.mesh.num_edges(), -1);
    for (int e = 0; e < ref.mesh.num_edges(); ++e) {
        int a = ref.mesh.edge(e).verts[0], b = ref.mesh.edge(e).verts[1];
        if (a >= n0 && b >= n0) continue;
        if (a >= n0) std::swap(a, b);
        if (b < n0) {
            const int pe = mesh.find_edge(a, b);
            if (pe >= 0 && !split_edges[pe]) ref.parent_edge[e] = pe;
        } else {
            const int pe = midpoint_edge[b - n0];
            if (pe >= 0 && (mesh.edge(pe).verts[0] == a || mesh.edge(pe).verts[1] == a)) ref.parent_edge[e] = pe;
        }
    }
    return ref;
}

RegionSeams seams_single_face(const TriangleMesh& mesh, int face, const std::vector<int>& splits)
{
    if (face < 0 || face >= mesh.num_faces()) throw PreconditionError("seams_single_face: face out of range");
    return run_plan(mesh, plan_single(mesh, face, splits), 0.0);
}

RegionSeams seams_multi_face(const TriangleMesh& mesh, const std::vector<int>& region, const std::vector<int>& splits,
                             double lambda_label)
{
    if (region.size() < 2) throw PreconditionError("seams_multi_face: region needs two or more faces");
    std::vector<int> faces = region;
    std::sort(faces.begin(), faces.end());
    return run_plan(mesh, plan_multi(mesh, faces, splits), lambda_label);
}

std::vector<int> label_patches(const TriangleMesh& mesh, const std::vector<bool>& seam, int& num_patches)
{
    std::vector<int> label(mesh.num_faces(), -1);
    num_patches = 0;
    for (int seed = 0; seed < mesh.num_faces(); ++seed) {
        if (label[seed] >= 0) continue;
        std::vector<int> stack{seed};
        label[seed] = num_patches;
        while (!stack.empty()) {
            const int f = stack.back();
            stack.pop_back();
            for (int e : mesh.face_edges(f)) {
                const Edge& ed = mesh.edge(e);
                if (ed.is_boundary() || (!seam.empty() && seam[e])) continue;
                const int g = ed.other_face(f);
                if (label[g] < 0) {
                    label[g] = num_patches;
                    stack.push_back(g);
                }
            }
        }
        ++num_patches;
    }
    return label;
}

std::vector<bool> SeamGraph::seam_mask() const
{
    std::vector<bool> m(refinement.mesh.num_edges(), false);
    for (int e : seam_edges) m[e] = true;
    return m;
}

std::vector<bool> SeamGraph::region_faces() const
{
    std::vector<bool> m(refinement.mesh.num_faces(), false);
    for (int f = 0; f < refinement.mesh.num_faces(); ++f) m[f] = cleanup.in_set[refinement.parent_face[f]];
    return m;
}

SeamGraph extract_seams(const TriangleMesh& mesh, const std::vector<double>& edge_comb, const SeamOptions& opt)
{
    SeamGraph sg;
    sg.candidates = extract_candidates(mesh, edge_comb, opt.eps_edge);
    if (sg.candidates.empty() && !mesh.has_boundary())
        throw PreconditionError(
            "closed surface without seam candidates: a closed surface cannot be a single ruled patch; lower nu_min");
    sg.cleanup = build_cleanup_set(mesh, sg.candidates, opt.eps_area_fraction * mesh.total_area());

    std::vector<RegionPlan> plans;
    std::vector<bool> split(mesh.num_edges(), false), centroid(mesh.num_faces(), false);
    for (const auto& region : sg.cleanup.regions) {
        const std::vector<int> splits = find_split_vertices(mesh, region, sg.candidates);
        plans.push_back(region.size() == 1 ? plan_single(mesh, region[0], splits) : plan_multi(mesh, region, splits));
        const RegionPlan& p = plans.back();
        for (int e : p.split_edges) split[e] = true;
        if (p.centroid_face >= 0) centroid[p.centroid_face] = true;
        sg.region_splits.push_back(p.splits);
        sg.warnings.insert(sg.warnings.end(), p.warnings.begin(), p.warnings.end());
    }
    sg.refinement = refine_mesh(mesh, split, centroid);

    std::set<int> seams;
    for (int e : sg.candidates) {
        const Edge& ed = mesh.edge(e);
        if (sg.cleanup.in_set[ed.faces[0]] || sg.cleanup.in_set[ed.faces[1]]) continue;
        seams.insert(sg.refinement.mesh.find_edge(ed.verts[0], ed.verts[1]));
    }
    for (const RegionPlan& p : plans) {
        PlanSeams ps = seams_from_plan(mesh, sg.refinement, p, opt.lambda_label);
        seams.insert(ps.seam_edges.begin(), ps.seam_edges.end());
        sg.warnings.insert(sg.warnings.end(), ps.warnings.begin(), ps.warnings.end());
    }
    sg.seam_edges.assign(seams.begin(), seams.end());
    sg.patch_labels = label_patches(sg.refinement.mesh, sg.seam_mask(), sg.num_patches);
    return sg;
}

RulingField transfer_field(const TriangleMesh& original, const RulingField& field, const Refinement& ref)
{
    const TriangleMesh& m = ref.mesh;
    RulingField out(m.num_faces());
    for (int f = 0; f < m.num_faces(); ++f) {
        const int p = ref.parent_face[f];
        if (m.face(f) == original.face(p)) {
            out[f] = field[p];
            continue;
        }
        const Vec3 d = ruling_at_point(original, field, p, m.face_centroid(f));
        const auto [a, b] = edge_coefficients(m, f, d.normalized());
        out[f] = {a, b, field[p].gamma};
        if (!check_feasibility(m, out, f).feasible) out[f].gamma = 0.0;
    }
    return out;
}

PostprocessReport postprocess_field(const TriangleMesh& mesh, RulingField& field, const std::vector<bool>& free_faces,
                                    const std::vector<bool>& seam, const LbfgsOptions& opt)
{
    if (static_cast<int>(free_faces.size()) != mesh.num_faces() || field.size() != mesh.num_faces())
        throw PreconditionError("postprocess_field: size mismatch");
    std::vector<int> var_of(mesh.num_faces(), -1), faces;
    for (int f = 0; f < mesh.num_faces(); ++f)
        if (free_faces[f]) {
            var_of[f] = static_cast<int>(faces.size());
            faces.push_back(f);
        }
    std::vector<int> edges;
    for (int e = 0; e < mesh.num_edges(); ++e) {
        const Edge& ed = mesh.edge(e);
        if (ed.is_boundary() || (!seam.empty() && seam[e])) continue;
        if (free_faces[ed.faces[0]] || free_faces[ed.faces[1]]) edges.push_back(e);
    }
    PostprocessReport rep;
    rep.num_edges = static_cast<int>(edges.size());
    auto total = [&](const RulingField& fld) {
        double s = 0.0;
        for (int e : edges) s += energy_geod(mesh, fld, e);
        return s;
    };
    rep.energy_before = total(field);
    rep.energy_after = rep.energy_before;
    if (edges.empty()) return rep;

    Eigen::VectorXd x(3 * faces.size());
    for (std::size_t i = 0; i < faces.size(); ++i) {
        const RulingParams& q = field[faces[i]];
        x.segment<3>(3 * i) << q.a, q.b, q.gamma;
    }
    RulingField work = field;
    auto load = [&](const Eigen::VectorXd& v) {
        for (std::size_t i = 0; i < faces.size(); ++i) work[faces[i]] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
    };
    const Objective obj = [&](const Eigen::VectorXd& v, Eigen::VectorXd* g) {
        load(v);
        g->setZero(v.size());
        double sum = 0.0;
        std::array<double, 6> grad;
        for (int e : edges) {
            sum += energy_geod_field_gradient(mesh, work, e, grad);
            const Edge& ed = mesh.edge(e);
            for (int s = 0; s < 2; ++s) {
                const int i = var_of[ed.faces[s]];
                if (i < 0) continue;
                for (int c = 0; c < 3; ++c) (*g)[3 * i + c] += grad[3 * s + c];
            }
        }
        return sum;
    };
    const FeasibilityTest feasible = [&](const Eigen::VectorXd& v) {
        load(v);
        try {
            for (int f : faces) {
                if (!check_feasibility(mesh, work, f).feasible) return false;
                if (!(ruling_at_point(mesh, work, f, mesh.face_centroid(f)).norm() > 1e-6)) return false;
            }
        } catch (const DegeneracyError&) {
            return false;
        }
        return true;
    };
    rep.solver = minimize_lbfgs(obj, feasible, x, opt);
    load(x);
    work.normalize_gauge(mesh);
    field = work;
    rep.energy_after = total(field);
    return rep;
}

namespace {

// Chain of seam or boundary mesh edges between break vertices.
struct Chain {
    std::vector<int> verts;  // closed chains do not repeat the first vertex
    std::vector<int> edges;  // edges[i] joins verts[i] and verts[i+1] (cyclically when closed)
    std::vector<double> arclength;  // at verts
    double length = 0.0;
    bool closed = false;
    bool seam = false;
};

std::vector<Chain> curve_chains(const TriangleMesh& mesh, const std::vector<bool>& curve_edge,
                                const std::vector<bool>& seam)
{
    const int nv = mesh.num_vertices();
    std::vector<std::vector<int>> inc(nv);
    for (int e = 0; e < mesh.num_edges(); ++e)
        if (curve_edge[e]) {
            inc[mesh.edge(e).verts[0]].push_back(e);
            inc[mesh.edge(e).verts[1]].push_back(e);
        }
    std::vector<bool> brk(nv, false);
    for (int v = 0; v < nv; ++v) {
        if (inc[v].empty()) continue;
        if (inc[v].size() != 2) {
            brk[v] = true;
            continue;
        }
        const int e0 = inc[v][0], e1 = inc[v][1];
        if (seam[e0] != seam[e1]) {
            brk[v] = true;
            continue;
        }
        // Sharp turns of the surface boundary become corners.
        if (!seam[e0]) {
            const int a = mesh.edge(e0).verts[0] == v ? mesh.edge(e0).verts[1] : mesh.edge(e0).verts[0];
            const int b = mesh.edge(e1).verts[0] == v ? mesh.edge(e1).verts[1] : mesh.edge(e1).verts[0];
            const Vec3 u = (mesh.vertex(v) - mesh.vertex(a)).normalized();
            const Vec3 w = (mesh.vertex(b) - mesh.vertex(v)).normalized();
            if (u.dot(w) < std::cos(M_PI / 4.0)) brk[v] = true;
        }
    }
    std::vector<bool> used(mesh.num_edges(), false);
    std::vector<Chain> chains;
    auto walk = [&](int v, int e) {
        Chain c;
        c.seam = seam[e];
        c.verts.push_back(v);
        while (true) {
            used[e] = true;
            c.edges.push_back(e);
            const int w = mesh.edge(e).verts[0] == v ? mesh.edge(e).verts[1] : mesh.edge(e).verts[0];
            if (w == c.verts.front() && !brk[w]) {
                c.closed = true;
                break;
            }
            c.verts.push_back(w);
            if (brk[w]) break;
            int next = -1;
            for (int f : inc[w])
                if (!used[f]) next = f;
            if (next < 0) break;
            v = w;
            e = next;
        }
        c.arclength.assign(c.verts.size(), 0.0);
        for (std::size_t i = 1; i < c.verts.size(); ++i)
            c.arclength[i] = c.arclength[i - 1] + (mesh.vertex(c.verts[i]) - mesh.vertex(c.verts[i - 1])).norm();
        c.length = c.arclength.back();
        if (c.closed) c.length += (mesh.vertex(c.verts.front()) - mesh.vertex(c.verts.back())).norm();
        chains.push_back(std::move(c));
    };
    for (int v = 0; v < nv; ++v)
        if (brk[v]) {
            std::vector<int> es = inc[v];
            std::sort(es.begin(), es.end());
            for (int e : es)
                if (!used[e]) walk(v, e);
        }
    for (int e = 0; e < mesh.num_edges(); ++e)
        if (curve_edge[e] && !used[e]) {
            const Edge& ed = mesh.edge(e);
            walk(std::min(ed.verts[0], ed.verts[1]), e);
        }
    return chains;
}

struct EndRef {
    int chain = -1;
    double s = 0.0;
    Vec3 point;
};

} // namespace

InitialSurface build_initial_surface(const TriangleMesh& mesh, const RulingField& field, const std::vector<bool>& seam,
                                     const std::vector<int>& patch_labels, const InitialSurfaceOptions& opt)
{
    if (static_cast<int>(seam.size()) != mesh.num_edges() || static_cast<int>(patch_labels.size()) != mesh.num_faces())
        throw PreconditionError("build_initial_surface: size mismatch");
    if (!(opt.spacing > 0.0)) throw PreconditionError("build_initial_surface: spacing must be positive");
    InitialSurface out;
    std::vector<bool> curve_edge(mesh.num_edges(), false);
    for (int e = 0; e < mesh.num_edges(); ++e) curve_edge[e] = seam[e] || mesh.is_boundary_edge(e);
    const std::vector<Chain> chains = curve_chains(mesh, curve_edge, seam);
    std::vector<int> chain_of(mesh.num_edges(), -1), slot_in_chain(mesh.num_edges(), -1);
    for (int c = 0; c < static_cast<int>(chains.size()); ++c)
        for (int i = 0; i < static_cast<int>(chains[c].edges.size()); ++i) {
            chain_of[chains[c].edges[i]] = c;
            slot_in_chain[chains[c].edges[i]] = i;
        }

    auto arclength_at = [&](int e, const Vec3& p) {
        const Chain& c = chains[chain_of[e]];
        const int i = slot_in_chain[e];
        return c.arclength[i] + (p - mesh.vertex(c.verts[i])).norm();
    };
    auto arc_distance = [&](const Chain& c, double s, double t) {
        const double d = std::abs(s - t);
        return c.closed ? std::min(d, c.length - d) : d;
    };

    const double h = opt.spacing;
    const double max_len = opt.max_length_factor * mesh.bbox_diagonal();
    std::map<std::pair<int, int>, std::vector<double>> taken;  // (chain, patch) -> end positions
    struct Raw {
        int patch;
        EndRef a, b;
        IntegralCurve curve;
    };
    std::vector<Raw> raws;

    for (int c = 0; c < static_cast<int>(chains.size()); ++c) {
        const Chain& ch = chains[c];
        const int n = std::max(1, static_cast<int>(std::floor(ch.length / h + 0.5)));
        int slot = 0;
        for (int k = 0; k < n; ++k) {
            const double s = (k + 0.5) * ch.length / n;
            while (slot + 1 < static_cast<int>(ch.edges.size()) && ch.arclength[slot + 1] <= s) ++slot;
            const int e = ch.edges[slot];
            const Vec3& p0 = mesh.vertex(ch.verts[slot]);
            const Vec3& p1 = mesh.vertex(ch.verts[(slot + 1) % ch.verts.size()]);
            const double seg = (p1 - p0).norm();
            const double t = std::clamp((s - ch.arclength[slot]) / seg, 1e-6, 1.0 - 1e-6);
            const Vec3 seed = p0 + t * (p1 - p0);
            for (int f : mesh.edge(e).faces) {
                if (f == kNoFace) continue;
                ++out.seeds;
                const int patch = patch_labels[f];
                auto& ends = taken[{c, patch}];
                const double here = arclength_at(e, seed);
                if (std::any_of(ends.begin(), ends.end(),
                                [&](double x) { return arc_distance(ch, x, here) < 0.5 * h; })) {
                    ++out.skipped_seeds;
                    continue;
                }
                IntegralCurve curve;
                try {
                    // Rulings nearly tangent to the curve would run along it.
                    const Vec3 dir = ruling_at_point(mesh, field, f, seed);
                    if (std::abs(dir.normalized().dot((p1 - p0) / seg)) > std::cos(M_PI / 36.0)) {
                        ++out.skipped_seeds;
                        continue;
                    }
                    curve = trace_curve(mesh, field, {f, seed, e}, seam, max_len);
                } catch (const DegeneracyError&) {
                    ++out.dropped_curves;
                    continue;
                }
                auto good = [](const CurveEnd& ce) {
                    return (ce.reason == StopReason::Boundary || ce.reason == StopReason::StopEdge) && ce.edge >= 0;
                };
                if (!good(curve.start) || !good(curve.end) || curve.points.size() < 2 ||
                    !(curve.length() > 1e-9 * mesh.bbox_diagonal())) {
                    ++out.dropped_curves;
                    continue;
                }
                EndRef a{chain_of[curve.start.edge], arclength_at(curve.start.edge, curve.points.front()),
                         curve.points.front()};
                EndRef b{chain_of[curve.end.edge], arclength_at(curve.end.edge, curve.points.back()),
                         curve.points.back()};
                if (std::make_pair(b.chain, b.s) < std::make_pair(a.chain, a.s)) std::swap(a, b);
                taken[{a.chain, patch}].push_back(a.s);
                taken[{b.chain, patch}].push_back(b.s);
                raws.push_back({patch, a, b, std::move(curve)});
            }
        }
    }
    if (out.dropped_curves > 0)
        out.warnings.push_back(std::to_string(out.dropped_curves) + " integral curves dropped (singularity or length cap)");

    // Points: chain end vertices shared between chains, then ruling endpoints.
    PiecewiseRuledSurface& surf = out.surface;
    std::map<int, int> vertex_point;
    auto mesh_point = [&](int v) {
        const auto it = vertex_point.find(v);
        if (it != vertex_point.end()) return it->second;
        const int id = static_cast<int>(surf.points.size());
        surf.points.push_back(mesh.vertex(v));
        vertex_point[v] = id;
        return id;
    };
    std::vector<std::vector<std::pair<double, int>>> on_chain(chains.size());
    std::vector<Ruling> rulings(raws.size());
    for (std::size_t r = 0; r < raws.size(); ++r) {
        for (int side = 0; side < 2; ++side) {
            const EndRef& er = side == 0 ? raws[r].a : raws[r].b;
            const int id = static_cast<int>(surf.points.size());
            surf.points.push_back(er.point);
            on_chain[er.chain].push_back({er.s, id});
            (side == 0 ? rulings[r].start : rulings[r].end) = id;
        }
        out.curves.push_back(std::move(raws[r].curve));
        out.curve_rulings.push_back(rulings[r]);
    }

    std::set<int> labels(patch_labels.begin(), patch_labels.end());
    std::map<int, int> patch_index;
    for (int l : labels) {
        RuledPatch p;
        p.label = l;
        std::vector<std::pair<std::pair<int, double>, Ruling>> rs;
        for (std::size_t r = 0; r < raws.size(); ++r)
            if (raws[r].patch == l) rs.push_back({{raws[r].a.chain, raws[r].a.s}, rulings[r]});
        if (rs.empty()) {
            out.warnings.push_back("patch " + std::to_string(l) + " has no rulings; omitted");
            continue;
        }
        std::stable_sort(rs.begin(), rs.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
        for (const auto& x : rs) p.rulings.push_back(x.second);
        patch_index[l] = static_cast<int>(surf.patches.size());
        surf.patches.push_back(std::move(p));
    }

    for (std::size_t c = 0; c < chains.size(); ++c) {
        const Chain& ch = chains[c];
        BoundaryPolyline pl;
        pl.closed = ch.closed;
        pl.seam = ch.seam;
        auto pts = on_chain[c];
        std::stable_sort(pts.begin(), pts.end());
        if (!ch.closed) pl.vertices.push_back(mesh_point(ch.verts.front()));
        for (const auto& [s, id] : pts) pl.vertices.push_back(id);
        if (!ch.closed) pl.vertices.push_back(mesh_point(ch.verts.back()));
        if (pl.vertices.empty()) {
            out.warnings.push_back("closed polyline without rulings kept at mesh resolution");
            for (int v : ch.verts) pl.vertices.push_back(mesh_point(v));
        }
        const Edge& ed = mesh.edge(ch.edges.front());
        auto index_of = [&](int f) {
            const auto it = f == kNoFace ? patch_index.end() : patch_index.find(patch_labels[f]);
            return it == patch_index.end() ? -1 : it->second;
        };
        pl.patches = {index_of(ed.faces[0]), index_of(ed.faces[1])};
        if (pl.patches[1] >= 0 && pl.patches[1] < pl.patches[0]) std::swap(pl.patches[0], pl.patches[1]);
        surf.polylines.push_back(std::move(pl));
    }
    return out;
}

} // namespace ruled

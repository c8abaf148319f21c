#include "ruled/closest_point.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <numeric>

#include "ruled/geometry.hpp"

namespace ruled {

struct ClosestPointIndex::Tree {
    struct Node {
        Eigen::AlignedBox3d box;
        int left = -1;   // child node, or -1 for leaves
        int right = -1;
        int begin = 0;   // primitive range for leaves
        int end = 0;
    };

    // Exact squared distance and closest point for one primitive.
    std::function<Vec3(int, const Vec3&)> project;
    std::vector<Node> nodes;
    std::vector<int> order;

    Tree(std::vector<Eigen::AlignedBox3d> boxes, std::function<Vec3(int, const Vec3&)> proj)
        : project(std::move(proj))
    {
        order.resize(boxes.size());
        std::iota(order.begin(), order.end(), 0);
        if (!boxes.empty()) build(boxes, 0, static_cast<int>(boxes.size()));
    }

    int build(const std::vector<Eigen::AlignedBox3d>& boxes, int begin, int end)
    {
        Node node;
        for (int i = begin; i < end; ++i) node.box.extend(boxes[order[i]]);
        const int id = static_cast<int>(nodes.size());
        nodes.push_back(node);
        if (end - begin <= 4) {
            nodes[id].begin = begin;
            nodes[id].end = end;
            return id;
        }
        Eigen::AlignedBox3d centers;
        for (int i = begin; i < end; ++i) centers.extend(boxes[order[i]].center());
        int axis = 0;
        centers.sizes().maxCoeff(&axis);
        const int mid = (begin + end) / 2;
        std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end, [&](int a, int b) {
            const double ca = boxes[a].center()[axis], cb = boxes[b].center()[axis];
            return ca < cb || (ca == cb && a < b);
        });
        const int l = build(boxes, begin, mid);
        const int r = build(boxes, mid, end);
        nodes[id].left = l;
        nodes[id].right = r;
        return id;
    }

    ClosestPoint query(const Vec3& p) const
    {
        ClosestPoint best;
        best.squared_distance = std::numeric_limits<double>::infinity();
        if (nodes.empty()) return best;
        std::vector<int> stack{0};
        while (!stack.empty()) {
            const Node& n = nodes[stack.back()];
            stack.pop_back();
            if (n.box.squaredExteriorDistance(p) > best.squared_distance) continue;
            if (n.left < 0) {
                for (int i = n.begin; i < n.end; ++i) {
                    const int prim = order[i];
                    const Vec3 q = project(prim, p);
                    const double d = (q - p).squaredNorm();
                    if (d < best.squared_distance || (d == best.squared_distance && prim < best.primitive)) {
                        best.squared_distance = d;
                        best.point = q;
                        best.primitive = prim;
                    }
                }
                continue;
            }
            const double dl = nodes[n.left].box.squaredExteriorDistance(p);
            const double dr = nodes[n.right].box.squaredExteriorDistance(p);
            // Visit the nearer child first.
            if (dl <= dr) {
                stack.push_back(n.right);
                stack.push_back(n.left);
            } else {
                stack.push_back(n.left);
                stack.push_back(n.right);
            }
        }
        return best;
    }
};

ClosestPointIndex::ClosestPointIndex(const TriangleMesh& reference)
    : reference_(std::make_shared<const TriangleMesh>(reference))
{
    if (reference_->empty()) throw PreconditionError("ClosestPointIndex: empty reference mesh");
    std::vector<Eigen::AlignedBox3d> tri_boxes(reference_->num_faces());
    for (int f = 0; f < reference_->num_faces(); ++f) {
        for (int v : reference_->face(f)) tri_boxes[f].extend(reference_->vertex(v));
    }
    std::shared_ptr<const TriangleMesh> mesh = reference_;
    faces_ = std::make_unique<Tree>(std::move(tri_boxes), [mesh](int f, const Vec3& p) {
        const Face& t = mesh->face(f);
        return closest_point_on_triangle(p, mesh->vertex(t[0]), mesh->vertex(t[1]), mesh->vertex(t[2]));
    });

    std::vector<Eigen::AlignedBox3d> seg_boxes;
    std::vector<int> seg_edges;
    for (int e = 0; e < reference_->num_edges(); ++e) {
        if (!reference_->is_boundary_edge(e)) continue;
        Eigen::AlignedBox3d b;
        b.extend(reference_->vertex(reference_->edge(e).verts[0]));
        b.extend(reference_->vertex(reference_->edge(e).verts[1]));
        seg_boxes.push_back(b);
        seg_edges.push_back(e);
    }
    segments_ = std::make_unique<Tree>(std::move(seg_boxes), [mesh, seg_edges](int i, const Vec3& p) {
        const Edge& ed = mesh->edge(seg_edges[i]);
        return closest_point_on_segment(p, mesh->vertex(ed.verts[0]), mesh->vertex(ed.verts[1]));
    });
    // Report boundary hits by mesh edge index.
    segment_edges_ = std::move(seg_edges);
}

ClosestPointIndex::~ClosestPointIndex() = default;
ClosestPointIndex::ClosestPointIndex(ClosestPointIndex&&) noexcept = default;
ClosestPointIndex& ClosestPointIndex::operator=(ClosestPointIndex&&) noexcept = default;

bool ClosestPointIndex::has_boundary() const { return !segment_edges_.empty(); }

ClosestPoint ClosestPointIndex::closest(const Vec3& p) const { return faces_->query(p); }

ClosestPoint ClosestPointIndex::closest_on_boundary(const Vec3& p) const
{
    if (segment_edges_.empty()) throw PreconditionError("closest_on_boundary: reference mesh is closed");
    ClosestPoint cp = segments_->query(p);
    cp.primitive = segment_edges_[cp.primitive];
    return cp;
}

ClosestPoint closest_point(const TriangleMesh& reference, const Vec3& p, bool restrict_to_boundary)
{
    const ClosestPointIndex index(reference);
    return restrict_to_boundary ? index.closest_on_boundary(p) : index.closest(p);
}

} // namespace ruled

#pragma once

#include <memory>
#include <vector>

#include "ruled/mesh.hpp"

namespace ruled {

struct ClosestPoint {
    Vec3 point;
    double squared_distance = 0.0;
    int primitive = -1;  // face index, or boundary edge index for boundary queries
};

/// Closest-point queries against a static reference mesh, backed by one
/// axis-aligned bounding-volume hierarchy over triangles and one over the
/// boundary segments.
class ClosestPointIndex {
public:
    explicit ClosestPointIndex(const TriangleMesh& reference);
    ~ClosestPointIndex();
    ClosestPointIndex(ClosestPointIndex&&) noexcept;
    ClosestPointIndex& operator=(ClosestPointIndex&&) noexcept;

    const TriangleMesh& reference() const { return *reference_; }
    bool has_boundary() const;

    ClosestPoint closest(const Vec3& p) const;
    /// Nearest point on the boundary polylines. Throws PreconditionError on closed meshes.
    ClosestPoint closest_on_boundary(const Vec3& p) const;

private:
    struct Tree;
    std::shared_ptr<const TriangleMesh> reference_;
    std::vector<int> segment_edges_;
    std::unique_ptr<Tree> faces_;
    std::unique_ptr<Tree> segments_;
};

/// One-shot query. Builds a temporary index; prefer ClosestPointIndex for repeated use.
ClosestPoint closest_point(const TriangleMesh& reference, const Vec3& p, bool restrict_to_boundary);

} // namespace ruled

#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "ruled/mesh.hpp"

namespace ruled {

/// Seam or surface-boundary curve through ruling endpoints and junctions.
struct BoundaryPolyline {
    std::vector<int> vertices;  // indices into PiecewiseRuledSurface::points
    bool closed = false;
    bool seam = false;
    std::array<int, 2> patches{-1, -1};  // patches on either side; [1] is -1 on the surface boundary
};

/// Straight segment between two polyline vertices.
struct Ruling {
    int start = -1;
    int end = -1;
};

struct RuledPatch {
    int label = -1;              // face label on the mesh the surface came from
    std::vector<Ruling> rulings; // ordered along the boundary
};

struct PiecewiseRuledSurface {
    std::vector<Vec3> points;
    std::vector<BoundaryPolyline> polylines;
    std::vector<RuledPatch> patches;

    int num_rulings() const;
    /// Polylines holding each point (junctions are held by several).
    std::vector<std::vector<int>> point_polylines() const;
    /// True if rulings r and s of a patch bound a strip: both start on the same
    /// polyline and both end on the same polyline.
    bool strip_between(const Ruling& r, const Ruling& s) const;
    /// Arc-length position of every point along its first polyline.
    std::vector<double> point_arclength() const;
    /// Each adjacent ruling pair becomes two triangles over `points`. The
    /// triangles are not checked for manifoldness.
    std::vector<Face> strip_faces() const;
    double seam_length() const;
};

/// Points and strip triangles as OBJ.
void save_strips_obj(const std::filesystem::path& path, const PiecewiseRuledSurface& s);

/// Versioned JSON artifact. `kind` names the stage that produced it.
void save_surface_json(const std::filesystem::path& path, const PiecewiseRuledSurface& s, const std::string& kind);
PiecewiseRuledSurface load_surface_json(const std::filesystem::path& path);

} // namespace ruled

#pragma once

#include <string>
#include <vector>

#include "ruled/lbfgs.hpp"
#include "ruled/mesh.hpp"
#include "ruled/ruled_surface.hpp"
#include "ruled/ruling_field.hpp"
#include "ruled/tracing.hpp"

namespace ruled {

struct SeamOptions {
    double eps_edge = 0.01;             // (2 nu_min)^2 at the default nu_min
    double eps_area_fraction = 1e-3;    // of the total mesh area
    double lambda_label = 0.5;
};

/// Interior edges with E_comb above eps_edge, ascending.
std::vector<int> extract_candidates(const TriangleMesh& mesh, const std::vector<double>& edge_comb, double eps_edge);

struct CleanupSet {
    std::vector<bool> in_set;               // per face
    std::vector<std::vector<int>> regions;  // face-adjacent components, faces ascending
};

/// Faces with two or more candidate edges, plus components of the mesh cut
/// along candidates that stay off the mesh boundary and have area below eps_area.
CleanupSet build_cleanup_set(const TriangleMesh& mesh, const std::vector<int>& candidates, double eps_area);

/// Region boundary vertices with an incident candidate edge that is not an
/// edge of any region face. Ascending.
std::vector<int> find_split_vertices(const TriangleMesh& mesh, const std::vector<int>& region,
                                     const std::vector<int>& candidates);

/// Subdivided mesh with provenance. Original vertices keep their indices;
/// midpoints and centroids are appended.
struct Refinement {
    TriangleMesh mesh;
    std::vector<int> parent_face;    // per refined face
    std::vector<int> parent_edge;    // per refined edge: original edge it lies on, or -1
    std::vector<int> edge_midpoint;  // per original edge: midpoint vertex or -1
    std::vector<int> face_center;    // per original face: centroid vertex or -1
};

/// Splits flagged edges at their midpoints and puts a centroid vertex into
/// flagged faces (which must have no split edges). Faces with one split edge
/// become 2 triangles, two split edges 3, three split edges 4, a centroid 3.
Refinement refine_mesh(const TriangleMesh& mesh, const std::vector<bool>& split_edges,
                       const std::vector<bool>& centroid_faces);

struct RegionSeams {
    Refinement refinement;
    std::vector<int> seam_edges;       // refined edge indices, ascending
    std::vector<int> splits;           // split vertices used, virtual ones included
    std::vector<int> virtual_splits;
    std::vector<int> sub_face_labels;  // per refined face, -1 outside the region
    int num_labels = 0;
    std::vector<std::string> warnings;
};

/// One-face region with 0 to 3 split vertices.
RegionSeams seams_single_face(const TriangleMesh& mesh, int face, const std::vector<int>& splits);

/// Region of two or more faces: labels boundary segments between splits,
/// subdivides, and cuts the sub-faces by alpha-expansion.
RegionSeams seams_multi_face(const TriangleMesh& mesh, const std::vector<int>& region,
                             const std::vector<int>& splits, double lambda_label);

/// Face labels of the components left after cutting along `seam` edges.
std::vector<int> label_patches(const TriangleMesh& mesh, const std::vector<bool>& seam, int& num_patches);

struct SeamGraph {
    Refinement refinement;                    // seams, labels and the field live on refinement.mesh
    std::vector<int> candidates;              // original edges
    CleanupSet cleanup;
    std::vector<std::vector<int>> region_splits;
    std::vector<int> seam_edges;              // refined edges, ascending
    std::vector<int> patch_labels;            // per refined face
    int num_patches = 0;
    std::vector<std::string> warnings;

    std::vector<bool> seam_mask() const;
    /// Refined faces whose parent lies in the clean-up set.
    std::vector<bool> region_faces() const;
};

/// Full seam extraction. Throws PreconditionError on a closed mesh without
/// candidate edges.
SeamGraph extract_seams(const TriangleMesh& mesh, const std::vector<double>& edge_comb, const SeamOptions& opt = {});

/// Field on the refined mesh: every child face takes its parent's ruling
/// evaluated at the child centroid and the parent's gamma.
RulingField transfer_field(const TriangleMesh& original, const RulingField& field, const Refinement& ref);

struct PostprocessReport {
    LbfgsReport solver;
    int num_edges = 0;
    double energy_before = 0.0;
    double energy_after = 0.0;
};

/// Minimizes the summed E_geod over interior non-seam edges with at least one
/// free face, changing only the field of free faces. Fixed neighbours act as
/// boundary conditions.
PostprocessReport postprocess_field(const TriangleMesh& mesh, RulingField& field, const std::vector<bool>& free_faces,
                                    const std::vector<bool>& seam, const LbfgsOptions& opt = {});

struct InitialSurfaceOptions {
    double spacing = 0.01;
    double max_length_factor = 4.0;  // trace cap, times the bbox diagonal
};

struct InitialSurface {
    PiecewiseRuledSurface surface;
    int seeds = 0;
    int skipped_seeds = 0;
    int dropped_curves = 0;
    std::vector<IntegralCurve> curves;  // generating curve of each ruling
    std::vector<Ruling> curve_rulings;  // ruling made from curves[i]
    std::vector<std::string> warnings;
};

/// Traces integral curves from seeds spaced along every seam and boundary
/// polyline into the adjacent patches and joins each curve's endpoints.
InitialSurface build_initial_surface(const TriangleMesh& mesh, const RulingField& field,
                                     const std::vector<bool>& seam, const std::vector<int>& patch_labels,
                                     const InitialSurfaceOptions& opt = {});

} // namespace ruled

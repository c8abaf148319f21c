#pragma once

#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "ruled/geometry.hpp"
#include "ruled/ruling_field.hpp"

namespace ruled {

using Mat2 = Eigen::Matrix2d;

/// Weight schedule of the initialization problem. mu1 and mu2 grow
/// geometrically from their start to their end values over `ramp_stages`
/// stages; mu3 is constant.
struct InitSchedule {
    double mu1_start = 1.0;
    double mu1_end = 10.0;
    double mu2_start = 0.1;
    double mu2_end = 10.0;
    double mu3 = 0.01;
    int ramp_stages = 3;
    int max_iterations = 500;       // per stage
    double relative_tolerance = 1e-8;

    double mu1(int stage) const;
    double mu2(int stage) const;
};

/// Smoothness coupling of one interior edge: the field is continuous across
/// the edge when coupling_i * y_i == coupling_j * y_j.
struct SmoothnessTerm {
    int face_i = -1;
    int face_j = -1;
    Mat2 coupling_i;  // B^i^T D_i
    Mat2 coupling_j;  // B^j^T D_j
};

/// Quadratic/nonconvex problem whose minimizer is the initial ruling field.
struct InitProblem {
    std::vector<Mat32> basis;                 // D_f, orthonormal tangent basis per face
    std::vector<std::vector<Vec2>> targets;   // A_f: unit vectors orthogonal to target lines, D_f coords
    std::vector<bool> positive;               // face in F_p (Gaussian curvature > 0)
    std::vector<Vec2> largest_dir;            // e_1 in D_f coords
    std::vector<Vec2> smallest_dir;           // e_2 in D_f coords
    std::vector<SmoothnessTerm> smooth;

    int num_faces() const { return static_cast<int>(basis.size()); }
};

/// D_f = [d1/|d1|, n x d1/|d1|].
Mat32 tangent_basis(const TriangleMesh& mesh, int f);

/// Alignment targets per face: {e1} where K >= 0, otherwise the unit normals
/// of the two asymptotic lines. For K < 0 the first entry belongs to the
/// asymptotic line obtained by rotating the positive-curvature principal
/// direction counter-clockwise about the normal.
std::vector<std::vector<Vec3>> build_targets(const TriangleMesh& mesh, const std::vector<PrincipalEstimate>& est);

InitProblem build_init_problem(const TriangleMesh& mesh, const std::vector<PrincipalEstimate>& est);

/// Stacked per-face coordinates y_f.
using FieldCoords = Eigen::VectorXd;

double smoothness_energy(const InitProblem& pb, const FieldCoords& y);
/// Target H of the initialization problem at the given weights.
double init_energy(const InitProblem& pb, const FieldCoords& y, double mu1, double mu2, double mu3);
/// Convex quadratic surrogate H(y | yk).
double init_surrogate(const InitProblem& pb, const FieldCoords& y, const FieldCoords& yk, double mu1, double mu2,
                      double mu3);

enum class ProxyAlignment {
    LargestPrincipal,  // ||y . e1||^2 on non-positive faces
    FirstAsymptotic,   // ||y . A_f[0]||^2 on negative faces
    SecondAsymptotic,  // ||y . A_f[1]||^2 on negative faces
};

/// Minimizer of the proxy quadratic over unit vectors, normalized per face.
FieldCoords spectral_init(const InitProblem& pb, const InitSchedule& sched,
                          ProxyAlignment proxy = ProxyAlignment::LargestPrincipal);

struct MMIteration {
    int stage = 0;
    double energy_before = 0.0;    // H(y_k)
    double surrogate_at_k = 0.0;   // surrogate(y_k | y_k)
    double energy_after = 0.0;     // H(y_k+1) at the same weights
};

struct MMResult {
    FieldCoords y;
    std::vector<MMIteration> trace;
    double final_energy = 0.0;
};

MMResult mm_solve(const InitProblem& pb, const FieldCoords& y0, const InitSchedule& sched);

/// Area-weighted squared geodesic curvature of the integral lines of the
/// piecewise-constant field with the given directions.
double field_line_curvature(const TriangleMesh& mesh, const std::vector<Vec3>& directions);

/// Tangent directions r_f = D_f y_f.
std::vector<Vec3> coords_to_directions(const InitProblem& pb, const FieldCoords& y);

/// Flips the sign of every direction in a face-connected component when the
/// majority of its faces points against the component's dominant axis.
void orient_by_majority(const TriangleMesh& mesh, std::vector<Vec3>& directions);

struct FieldInitReport {
    int chosen_candidate = 0;
    std::vector<double> candidate_energy;
    std::vector<double> candidate_curvature;
    FieldCoords coords;  // MM solution of the chosen candidate
};

/// Smooth initial field with gamma = 0, aligned with the directions of least
/// normal curvature.
RulingField init_ruling_field(const TriangleMesh& mesh, const InitSchedule& sched = {},
                              FieldInitReport* report = nullptr);

/// Writes one line per face: face index and unit ruling direction.
void write_field_vectors(std::ostream& out, const TriangleMesh& mesh, const RulingField& field);

} // namespace ruled

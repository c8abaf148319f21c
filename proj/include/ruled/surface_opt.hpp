#pragma once

#include <string>
#include <vector>

#include "ruled/closest_point.hpp"
#include "ruled/dogleg.hpp"
#include "ruled/ruled_surface.hpp"

namespace ruled {

struct FinalOptions {
    double lambda1 = 1.0;   // ruling-sample closeness
    double lambda2 = 1.0;   // boundary-vertex closeness
    double lambda3 = 1e-6;  // ruled-surface smoothness, 1/length^2 terms at unit diagonal
    double lambda4 = 1e-6;  // boundary smoothness
    int samples_per_ruling = 8;
    int neighbors = 4;      // k of the k-nearest-neighbour weights
    int max_refreshes = 5;  // footpoint refreshes, each followed by a dogleg solve
    DoglegOptions dogleg;
    int threads = 1;
};

/// Interior sample parameters i / (m + 1), i = 1..m.
std::vector<double> ruling_sample_params(int m);

/// Curvature vector of the polyline b- b b+: the change of unit tangent over
/// the mean of the two segment lengths. Its norm is K_b.
Vec3 boundary_curvature_vector(const Vec3& bm, const Vec3& b, const Vec3& bp);
double boundary_curvature(const Vec3& bm, const Vec3& b, const Vec3& bp);

/// Cuts the lines of the previous and next rulings with the plane through
/// the sample s = (1 - t) a + t b orthogonal to ruling (a, b), and returns the
/// curvature vector of (s-, s, s+). Returns false when a neighbour line is
/// parallel to the plane.
bool normal_curvature_vector(const Vec3& a, const Vec3& b, double t, const Vec3& pa, const Vec3& pb, const Vec3& na,
                             const Vec3& nb, Vec3& out);
/// K_r, or NaN when the sample is skipped.
double normal_curvature_sample(const Vec3& a, const Vec3& b, double t, const Vec3& pa, const Vec3& pb, const Vec3& na,
                               const Vec3& nb);

/// Residual structure and constant weights of the final optimization.
struct FinalProblem {
    struct Sample {
        int start = -1;
        int end = -1;
        double t = 0.0;
        double alpha = 0.0;
        // Neighbouring rulings, -1 when the sample has no curvature term.
        int prev_start = -1, prev_end = -1, next_start = -1, next_end = -1;
        double beta = 0.0;
    };
    struct Vertex {
        int point = -1;
        double alpha = 0.0;
        bool on_surface_boundary = false;
    };
    struct Bend {
        int prev = -1, point = -1, next = -1;
        double eta = 0.0;
    };

    FinalOptions options;
    std::vector<Sample> samples;
    std::vector<Vertex> vertices;
    std::vector<Bend> bends;
    double m1 = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0;
    int skipped_samples = 0;  // samples whose plane misses a neighbour at the start

    int num_points = 0;
    int num_residuals() const;
};

FinalProblem build_final_problem(const PiecewiseRuledSurface& surface, const FinalOptions& opt = {});

struct FinalEnergy {
    double disp = 0.0;  // weighted by lambda1, lambda2
    double rul = 0.0;   // unweighted
    double bdr = 0.0;   // unweighted
    double total = 0.0; // disp + lambda3 rul + lambda4 bdr
};

/// Footpoints of samples and vertices on the reference.
struct Footpoints {
    std::vector<Vec3> samples;
    std::vector<Vec3> vertices;
};

Footpoints compute_footpoints(const FinalProblem& pb, const std::vector<Vec3>& points, const ClosestPointIndex& reference);

/// Stacked residuals (3 per closeness term and per curvature vector) and
/// their Jacobian over the packed point coordinates.
void final_residuals(const FinalProblem& pb, const std::vector<Vec3>& points, const Footpoints& foot,
                     Eigen::VectorXd& r, Eigen::SparseMatrix<double>* jacobian);

FinalEnergy final_energy(const FinalProblem& pb, const std::vector<Vec3>& points, const Footpoints& foot);

struct FinalReport {
    std::vector<DoglegReport> solves;
    std::vector<double> energies;  // accepted objective values across all solves
    FinalEnergy initial;
    FinalEnergy final;
    int skipped_samples = 0;
};

/// Optimizes the surface's points in place.
FinalReport optimize_surface(PiecewiseRuledSurface& surface, const ClosestPointIndex& reference,
                             const FinalOptions& opt = {});

enum class DensifyMode { ArcLength, Spline };

/// Inserts factor - 1 rulings between every adjacent ruling pair.
PiecewiseRuledSurface densify_rulings(const PiecewiseRuledSurface& surface, int factor,
                                      DensifyMode mode = DensifyMode::ArcLength);

} // namespace ruled

#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ruled/closest_point.hpp"
#include "ruled/geometry.hpp"
#include "ruled/lbfgs.hpp"
#include "ruled/ruling_field.hpp"

namespace ruled {

/// Per-face curvature parametrization: theta is the signed angle (about the
/// face normal) from r_f to the first principal direction, and the principal
/// curvatures are kappa1 = mu sin^2 theta, kappa2 = -mu cos^2 theta.
struct CurvatureVars {
    std::vector<double> theta;
    std::vector<double> mu;

    int size() const { return static_cast<int>(theta.size()); }
};

/// theta from the signed angle between r_f and the estimated e1; mu from the
/// one-variable least-squares fit of both curvature relations.
CurvatureVars init_curvature_vars(const TriangleMesh& mesh, const RulingField& field,
                                  const std::vector<PrincipalEstimate>& est);

struct JointWeights {
    double close = 1e3;
    double barrier = 1e-6;
    double laplacian = 1e2;
    double length = 1e2;
};

struct JointState {
    TriangleMesh mesh;  // current vertex positions
    RulingField field;
    CurvatureVars curv;
    JointWeights weights;
    double nu = 1.0;
    std::vector<Vec3> initial_vertices;
    std::vector<double> initial_lengths;
    std::vector<Vec3> footpoints;  // P(v), held fixed between refreshes
};

/// Starts from the given mesh and field with curvature variables fitted to
/// the estimated principal curvatures and footpoints on the mesh itself.
JointState make_joint_state(const TriangleMesh& mesh, const RulingField& field, const JointWeights& weights = {});

/// Welsch function 1 - exp(-x^2 / (2 nu^2)).
double welsch(double x, double nu);

/// Geodesic mismatch across an interior edge at the three samples 1/4, 1/2, 3/4.
double energy_geod(const TriangleMesh& mesh, const RulingField& field, int edge);
/// E_geod with its gradient in the field variables (a, b, gamma) of the
/// edge's faces[0] then faces[1]; vertices held fixed.
double energy_geod_field_gradient(const TriangleMesh& mesh, const RulingField& field, int edge,
                                  std::array<double, 6>& grad);
/// Normal-variation mismatch of face f's curvature tensor toward neighbour g.
double energy_sff(const TriangleMesh& mesh, const RulingField& field, const CurvatureVars& curv, int f, int g);
double energy_curv(const TriangleMesh& mesh, const RulingField& field, const CurvatureVars& curv, int edge);
double energy_comb(const TriangleMesh& mesh, const RulingField& field, const CurvatureVars& curv, int edge);
double energy_barrier(const TriangleMesh& mesh, const RulingField& field, int f);
double energy_laplacian(const TriangleMesh& mesh, const std::vector<Vec3>& initial_vertices, int v);
double energy_length(const TriangleMesh& mesh, const std::vector<double>& initial_lengths, int edge);

struct EnergyBreakdown {
    double sparse = 0.0;
    double close = 0.0;      // unweighted sums
    double barrier = 0.0;
    double laplacian = 0.0;
    double length = 0.0;
    double total = 0.0;      // weighted
};

/// Variables packed as [vertex xyz..., then per face a, b, gamma, theta, mu].
Eigen::VectorXd pack_variables(const JointState& s);
void unpack_variables(JointState& s, const Eigen::VectorXd& x);

/// Total energy at the state's nu, optionally with its gradient in packed
/// order. Throws PreconditionError on infeasible states.
EnergyBreakdown energy_total(const JointState& s, Eigen::VectorXd* gradient = nullptr, int threads = 1);

/// E_comb per edge (0 on boundary edges).
std::vector<double> edge_comb_values(const JointState& s);

/// Refreshes footpoints: interior vertices onto the reference surface,
/// boundary vertices onto its boundary. On closed references every vertex
/// is treated as interior.
void project_to_reference(JointState& s, const ClosestPointIndex& reference);

/// nu_max, nu_max / 2, ... with the last value clamped to nu_min.
std::vector<double> nu_schedule(double nu_max, double nu_min);

struct JointConfig {
    double nu_min = 0.05;
    double nu_max = 0.0;  // <= 0: largest sqrt(E_comb) of the initial state
    LbfgsOptions lbfgs;
    int threads = 1;
};

struct JointStage {
    double nu = 0.0;
    LbfgsReport solver;
    std::vector<double> edge_comb;  // at the end of the stage
};

struct JointResult {
    double nu_max = 0.0;
    std::vector<JointStage> stages;
    std::vector<double> edge_comb;   // final, per edge
    int feasibility_violations = 0;
    std::vector<std::string> warnings;
};

JointResult optimize_joint(JointState& s, const ClosestPointIndex& reference, const JointConfig& cfg = {});

/// JSON checkpoint with vertices, field, curvature variables, nu history and
/// per-edge E_comb.
void save_joint_checkpoint(const std::filesystem::path& path, const JointState& s, const JointResult& r);

struct JointCheckpoint {
    std::vector<Vec3> vertices;
    RulingField field;
    CurvatureVars curv;
    std::vector<double> nu_history;
    std::vector<double> edge_comb;
};

JointCheckpoint load_joint_checkpoint(const std::filesystem::path& path);

} // namespace ruled

#pragma once

#include <vector>

#include "ruled/geometry.hpp"
#include "ruled/mesh.hpp"

namespace ruled {

/// First-order ruling model of one face: the centroid direction is
/// a*d1 + b*d2 (normalized) and gamma is the transverse rate of change of the
/// ruling direction, in 1/length.
struct RulingParams {
    double a = 1.0;
    double b = 0.0;
    double gamma = 0.0;
};

/// Per-face ruling field over a TriangleMesh.
class RulingField {
public:
    RulingField() = default;
    explicit RulingField(int num_faces) : params_(num_faces) {}
    explicit RulingField(std::vector<RulingParams> params) : params_(std::move(params)) {}

    int size() const { return static_cast<int>(params_.size()); }
    RulingParams& operator[](int f) { return params_[f]; }
    const RulingParams& operator[](int f) const { return params_[f]; }
    const std::vector<RulingParams>& params() const { return params_; }

    /// Rescales (a, b) so that |a d1 + b d2| = 1 on every face.
    void normalize_gauge(const TriangleMesh& mesh);

private:
    std::vector<RulingParams> params_;
};

/// Unit ruling direction r_f and c_f = n_f x r_f at the centroid.
struct RulingDirections {
    Vec3 ruling;
    Vec3 cross;
};

RulingDirections face_ruling_dir(const TriangleMesh& mesh, const RulingField& field, int f);

kernel::RulingFrame<double> ruling_frame(const TriangleMesh& mesh, const RulingField& field, int f);

/// Unnormalized ruling direction at a point s of face f.
Vec3 ruling_at_point(const TriangleMesh& mesh, const RulingField& field, int f, const Vec3& s);

struct Feasibility {
    bool feasible = true;
    double margin = 1.0;  // min over vertices of 1 + gamma * x
};

Feasibility check_feasibility(const TriangleMesh& mesh, const RulingField& field, int f);

/// True if every face is feasible.
bool field_feasible(const TriangleMesh& mesh, const RulingField& field);

/// (a, b) such that a*d1 + b*d2 equals the tangent vector t of face f.
std::pair<double, double> edge_coefficients(const TriangleMesh& mesh, int f, const Vec3& t);

} // namespace ruled

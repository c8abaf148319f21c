#include "ruled/ruling_field.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace ruled {

void RulingField::normalize_gauge(const TriangleMesh& mesh)
{
    for (int f = 0; f < size(); ++f) {
        const FaceFrame fr = face_frame(mesh, f);
        RulingParams& p = params_[f];
        const double len = (p.a * fr.d1 + p.b * fr.d2).norm();
        if (len > 0.0) {
            p.a /= len;
            p.b /= len;
        }
    }
}

kernel::RulingFrame<double> ruling_frame(const TriangleMesh& mesh, const RulingField& field, int f)
{
    const Face& t = mesh.face(f);
    const RulingParams& p = field[f];
    const Vec3 dir = p.a * (mesh.vertex(t[1]) - mesh.vertex(t[0])) + p.b * (mesh.vertex(t[2]) - mesh.vertex(t[0]));
    if (!(dir.norm() > 1e-12))
        throw DegeneracyError("ruling direction undefined on face " + std::to_string(f));
    return kernel::ruling_frame<double>(mesh.vertex(t[0]), mesh.vertex(t[1]), mesh.vertex(t[2]), p.a, p.b);
}

RulingDirections face_ruling_dir(const TriangleMesh& mesh, const RulingField& field, int f)
{
    const auto fr = ruling_frame(mesh, field, f);
    return {fr.ruling, fr.cross};
}

Vec3 ruling_at_point(const TriangleMesh& mesh, const RulingField& field, int f, const Vec3& s)
{
    const auto fr = ruling_frame(mesh, field, f);
    const double x = (s - fr.origin).dot(fr.ruling);
    if (!(1.0 + field[f].gamma * x > 0.0))
        throw DegeneracyError("ruling variation infeasible at query point on face " + std::to_string(f));
    return kernel::ruling_at<double>(fr, field[f].gamma, s);
}

Feasibility check_feasibility(const TriangleMesh& mesh, const RulingField& field, int f)
{
    const auto fr = ruling_frame(mesh, field, f);
    Feasibility out;
    out.margin = std::numeric_limits<double>::infinity();
    for (int v : mesh.face(f)) {
        const double x = (mesh.vertex(v) - fr.origin).dot(fr.ruling);
        out.margin = std::min(out.margin, 1.0 + field[f].gamma * x);
    }
    out.feasible = out.margin > 0.0;
    return out;
}

bool field_feasible(const TriangleMesh& mesh, const RulingField& field)
{
    for (int f = 0; f < mesh.num_faces(); ++f) {
        if (!check_feasibility(mesh, field, f).feasible) return false;
    }
    return true;
}

std::pair<double, double> edge_coefficients(const TriangleMesh& mesh, int f, const Vec3& t)
{
    const FaceFrame fr = face_frame(mesh, f);
    Eigen::Matrix2d gram;
    gram << fr.d1.dot(fr.d1), fr.d1.dot(fr.d2), fr.d2.dot(fr.d1), fr.d2.dot(fr.d2);
    const Eigen::Vector2d rhs(fr.d1.dot(t), fr.d2.dot(t));
    const Eigen::Vector2d ab = gram.inverse() * rhs;
    return {ab[0], ab[1]};
}

} // namespace ruled

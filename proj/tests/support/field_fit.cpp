#include "field_fit.hpp"

namespace shapes {

using namespace ruled;

RulingField fit_field(const TriangleMesh& mesh, const std::function<Vec3(const Vec3&)>& dir, bool first_order)
{
    RulingField field(mesh.num_faces());
    for (int f = 0; f < mesh.num_faces(); ++f) {
        const Vec3 n = mesh.face_normal(f);
        const Vec3 o = mesh.face_centroid(f);
        Vec3 r = dir(o);
        r -= r.dot(n) * n;
        const auto [a, b] = edge_coefficients(mesh, f, r.normalized());
        field[f] = {a, b, 0.0};
        if (!first_order) continue;

        const auto fr = ruling_frame(mesh, field, f);
        const Face& t = mesh.face(f);
        std::vector<Vec3> samples;
        for (int k = 0; k < 3; ++k) {
            samples.push_back(mesh.vertex(t[k]));
            samples.push_back(0.5 * (mesh.vertex(t[k]) + mesh.vertex(t[(k + 1) % 3])));
        }
        double num = 0.0, den = 0.0;
        for (const Vec3& s : samples) {
            Vec3 d = dir(s);
            d -= d.dot(n) * n;
            if (d.dot(fr.ruling) < 0.0) d = -d;
            const double tan = d.dot(fr.cross) / d.dot(fr.ruling);
            const double x = (s - o).dot(fr.ruling), y = (s - o).dot(fr.cross);
            const double basis = y - tan * x;
            num += tan * basis;
            den += basis * basis;
        }
        field[f].gamma = den > 0.0 ? num / den : 0.0;
        while (!check_feasibility(mesh, field, f).feasible) field[f].gamma *= 0.5;
    }
    field.normalize_gauge(mesh);
    return field;
}

} // namespace shapes

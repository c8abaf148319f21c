#include "ruled/tracing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace ruled {

const char* to_string(StopReason r)
{
    switch (r) {
    case StopReason::Boundary: return "boundary";
    case StopReason::StopEdge: return "stop_edge";
    case StopReason::Singularity: return "singularity";
    case StopReason::MaxLength: return "max_length";
    }
    return "unknown";
}

double IntegralCurve::length() const
{
    double len = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) len += (points[i] - points[i - 1]).norm();
    return len;
}

namespace {

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

struct HalfTrace {
    std::vector<Vec3> points;
    std::vector<int> faces;  // face of the segment ending at points[i]
    std::vector<int> edges;
    CurveEnd end;
};

struct Exit {
    int edge = -1;
    Vec3 point;
    double t = 0.0;
};

class Tracer {
public:
    Tracer(const TriangleMesh& mesh, const RulingField& field, const std::vector<bool>& stop, double max_len)
        : mesh_(mesh), field_(field), stop_(stop), max_len_(max_len)
    {
    }

    HalfTrace run(int face, Vec3 s, Vec3 want, int entry_edge) const
    {
        HalfTrace out;
        double length = 0.0;
        int idle_transfers = 0;
        const int max_steps = 4 * mesh_.num_faces() + 16;
        for (int step = 0; step < max_steps; ++step) {
            const auto fr = kernel::ruling_frame<double>(vtx(face, 0), vtx(face, 1), vtx(face, 2),
                                                         field_[face].a, field_[face].b);
            const double x = (s - fr.origin).dot(fr.ruling);
            if (!(1.0 + field_[face].gamma * x > 0.0) || !fr.ruling.allFinite()) {
                out.end = {StopReason::Singularity, -1};
                return out;
            }
            Vec3 d = kernel::ruling_at<double>(fr, field_[face].gamma, s);
            if (!(d.norm() > 1e-12)) {
                out.end = {StopReason::Singularity, -1};
                return out;
            }
            d.normalize();
            if (d.dot(want) < 0.0) d = -d;

            const Exit ex = find_exit(face, s, d, entry_edge);
            int crossing = ex.edge;
            if (crossing < 0) {
                // The ray leaves the face immediately through the edge holding s.
                crossing = outward_edge(face, s, d);
                if (crossing < 0 || ++idle_transfers > 2) {
                    out.end = {StopReason::Singularity, crossing};
                    return out;
                }
            } else {
                idle_transfers = 0;
                length += ex.t;
                s = ex.point;
                out.points.push_back(s);
                out.faces.push_back(face);
                out.edges.push_back(crossing);
                if (length > max_len_) {
                    out.end = {StopReason::MaxLength, crossing};
                    return out;
                }
            }
            const Edge& ed = mesh_.edge(crossing);
            if (ed.is_boundary()) {
                out.end = {StopReason::Boundary, crossing};
                return out;
            }
            if (!stop_.empty() && stop_[crossing]) {
                out.end = {StopReason::StopEdge, crossing};
                return out;
            }
            const int next = ed.other_face(face);
            want = unfold_vector(mesh_, face, next, d);
            face = next;
            entry_edge = crossing;
        }
        out.end = {StopReason::MaxLength, -1};
        return out;
    }

private:
    const Vec3& vtx(int f, int k) const { return mesh_.vertex(mesh_.face(f)[k]); }

    // Nearest crossing of the ray s + t d with the edges of `face`, skipping `skip`.
    Exit find_exit(int face, const Vec3& s, const Vec3& d, int skip) const
    {
        const Vec3& p0 = vtx(face, 0);
        const Vec3 u = (vtx(face, 1) - p0).normalized();
        const Vec3 w = mesh_.face_normal(face).cross(u);
        auto to2 = [&](const Vec3& p) { return Vec2((p - p0).dot(u), (p - p0).dot(w)); };
        const Vec2 s2 = to2(s);
        const Vec2 d2(d.dot(u), d.dot(w));
        const double scale = std::sqrt(mesh_.face_area(face));

        Exit best;
        best.t = std::numeric_limits<double>::infinity();
        for (int k = 0; k < 3; ++k) {
            const int e = mesh_.face_edge(face, k);
            if (e == skip) continue;
            const Vec2 a = to2(vtx(face, k));
            const Vec2 b = to2(vtx(face, (k + 1) % 3));
            const Vec2 ab = b - a;
            const double denom = cross2(d2, ab);
            if (std::abs(denom) < 1e-14 * ab.norm()) continue;
            const double t = cross2(a - s2, ab) / denom;
            double lambda = cross2(a - s2, d2) / denom;
            if (!(t > 1e-12 * scale) || lambda < -1e-9 || lambda > 1.0 + 1e-9) continue;
            if (t < best.t) {
                lambda = std::clamp(lambda, 1e-7, 1.0 - 1e-7);
                best.t = t;
                best.edge = e;
                best.point = vtx(face, k) + lambda * (vtx(face, (k + 1) % 3) - vtx(face, k));
            }
        }
        return best;
    }

    // Edge of `face` that contains s and across which d points out of the face.
    int outward_edge(int face, const Vec3& s, const Vec3& d) const
    {
        const Vec3 n = mesh_.face_normal(face);
        int best = -1;
        double best_dist = std::numeric_limits<double>::infinity();
        for (int k = 0; k < 3; ++k) {
            const Vec3& a = vtx(face, k);
            const Vec3& b = vtx(face, (k + 1) % 3);
            // Counter-clockwise faces: the outward normal of edge ab is (b - a) x n.
            const Vec3 out_dir = (b - a).cross(n);
            if (d.dot(out_dir) <= 0.0) continue;
            const double dist = (s - closest_point_on_segment(s, a, b)).norm();
            if (dist < best_dist) {
                best_dist = dist;
                best = mesh_.face_edge(face, k);
            }
        }
        const double tol = 1e-6 * std::sqrt(mesh_.face_area(face));
        return best_dist <= tol ? best : -1;
    }

    const TriangleMesh& mesh_;
    const RulingField& field_;
    const std::vector<bool>& stop_;
    double max_len_;
};

} // namespace

IntegralCurve trace_curve(const TriangleMesh& mesh, const RulingField& field, const TraceSeed& seed,
                          const std::vector<bool>& stop_edges, double max_length)
{
    if (seed.face < 0 || seed.face >= mesh.num_faces()) throw PreconditionError("trace_curve: invalid seed face");
    const Vec3 d0 = ruling_at_point(mesh, field, seed.face, seed.point);
    if (!(d0.norm() > 1e-12)) throw DegeneracyError("trace_curve: singular field at seed");
    const Vec3 dir = d0.normalized();

    const Tracer tracer(mesh, field, stop_edges, max_length);
    const HalfTrace fwd = tracer.run(seed.face, seed.point, dir, seed.edge);
    const HalfTrace bwd = tracer.run(seed.face, seed.point, -dir, seed.edge);

    IntegralCurve curve;
    for (std::size_t i = bwd.points.size(); i-- > 0;) {
        curve.points.push_back(bwd.points[i]);
        curve.point_edges.push_back(bwd.edges[i]);
        // Segment from this point toward the seed lies in bwd.faces[i].
        curve.faces.push_back(bwd.faces[i]);
    }
    curve.seed_index = static_cast<int>(curve.points.size());
    curve.points.push_back(seed.point);
    curve.point_edges.push_back(seed.edge);
    for (std::size_t i = 0; i < fwd.points.size(); ++i) {
        curve.faces.push_back(fwd.faces[i]);
        curve.points.push_back(fwd.points[i]);
        curve.point_edges.push_back(fwd.edges[i]);
    }
    curve.start = bwd.end;
    curve.end = fwd.end;
    return curve;
}

void write_curves_obj(std::ostream& out, const std::vector<IntegralCurve>& curves)
{
    std::size_t base = 1;
    char buf[128];
    for (const IntegralCurve& c : curves) {
        for (const Vec3& p : c.points) {
            std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", p.x(), p.y(), p.z());
            out << buf;
        }
        if (c.points.size() >= 2) {
            out << 'l';
            for (std::size_t i = 0; i < c.points.size(); ++i) out << ' ' << base + i;
            out << '\n';
        }
        base += c.points.size();
    }
}

} // namespace ruled

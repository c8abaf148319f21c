#include "ruled/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "ruled/geometry.hpp"
#include "ruled/surface_opt.hpp"

namespace ruled {

ErrorStats approximation_error(const std::vector<Vec3>& samples, const ClosestPointIndex& reference)
{
    if (samples.empty()) throw PreconditionError("approximation_error: no samples");
    ErrorStats s;
    double sum = 0.0;
    for (const Vec3& p : samples) {
        const double d = std::sqrt(reference.closest(p).squared_distance);
        sum += d;
        s.max = std::max(s.max, d);
    }
    s.samples = static_cast<int>(samples.size());
    s.avg = sum / s.samples;
    return s;
}

std::vector<Vec3> result_samples(const PiecewiseRuledSurface& surface, const SamplingOptions& opt)
{
    std::vector<Vec3> out;
    const std::vector<double> ts = ruling_sample_params(opt.samples_per_ruling);
    for (const RuledPatch& p : surface.patches)
        for (const Ruling& r : p.rulings)
            for (double t : ts) out.push_back((1.0 - t) * surface.points[r.start] + t * surface.points[r.end]);

    const std::vector<Face> faces = surface.strip_faces();
    std::vector<double> area(faces.size());
    double total = 0.0;
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const Vec3& a = surface.points[faces[f][0]];
        area[f] = 0.5 * (surface.points[faces[f][1]] - a).cross(surface.points[faces[f][2]] - a).norm();
        total += area[f];
    }
    const int want = std::max(opt.strip_density * surface.num_rulings(),
                              opt.min_samples - static_cast<int>(out.size()));
    if (!(total > 0.0) || want <= 0) return out;

    // Additive recurrence in the unit square folded onto the triangle.
    constexpr double g1 = 0.7548776662466927, g2 = 0.5698402909980532;
    double carry = 0.0;
    for (std::size_t f = 0; f < faces.size(); ++f) {
        carry += want * area[f] / total;
        const int k = static_cast<int>(std::floor(carry + 0.5));
        carry -= k;
        const Vec3& a = surface.points[faces[f][0]];
        const Vec3& b = surface.points[faces[f][1]];
        const Vec3& c = surface.points[faces[f][2]];
        for (int j = 0; j < k; ++j) {
            double u = std::fmod(0.5 + (j + 1) * g1, 1.0), v = std::fmod(0.5 + (j + 1) * g2, 1.0);
            if (u + v > 1.0) {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            out.push_back(a + u * (b - a) + v * (c - a));
        }
    }
    return out;
}

double seam_length_curvature(const TriangleMesh& mesh, double kappa_bar)
{
    std::vector<char> sharp(mesh.num_vertices(), 0);
    for (int v = 0; v < mesh.num_vertices(); ++v)
        if (!mesh.is_boundary_vertex(v) && !mesh.vertex_faces(v).empty())
            sharp[v] = std::abs(gaussian_curvature_vertex(mesh, v)) > kappa_bar;
    double length = 0.0;
    for (int e = 0; e < mesh.num_edges(); ++e) {
        const Edge& edge = mesh.edge(e);
        if (sharp[edge.verts[0]] && sharp[edge.verts[1]]) length += mesh.edge_length(e);
    }
    return length;
}

std::optional<TriangleMesh> strip_mesh(const PiecewiseRuledSurface& surface)
{
    try {
        return TriangleMesh(surface.points, surface.strip_faces(), false);
    } catch (const Error&) {
        return std::nullopt;
    }
}

std::vector<double> normalized_distances(const std::vector<Vec3>& points, const ClosestPointIndex& reference)
{
    const double diag = reference.reference().bbox_diagonal();
    std::vector<double> out;
    out.reserve(points.size());
    for (const Vec3& p : points) out.push_back(std::sqrt(reference.closest(p).squared_distance) / diag);
    return out;
}

std::array<unsigned char, 3> distance_color(double value, double scale)
{
    const double x = scale > 0.0 ? std::clamp(value / scale, 0.0, 1.0) : 0.0;
    // Blue through green to red.
    const double r = std::clamp(2.0 * x - 1.0, 0.0, 1.0);
    const double b = std::clamp(1.0 - 2.0 * x, 0.0, 1.0);
    const double g = 1.0 - r - b;
    auto byte = [](double c) { return static_cast<unsigned char>(std::lround(255.0 * c)); };
    return {byte(r), byte(g), byte(b)};
}

double export_colored_ply(const PiecewiseRuledSurface& surface, const ClosestPointIndex& reference,
                          const std::filesystem::path& path, double scale)
{
    const std::vector<double> d = normalized_distances(surface.points, reference);
    if (scale <= 0.0) scale = d.empty() ? 0.0 : *std::max_element(d.begin(), d.end());
    const std::vector<Face> faces = surface.strip_faces();
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "ply\nformat ascii 1.0\n"
        << "comment distance scale " << scale << '\n'
        << "element vertex " << surface.points.size() << '\n'
        << "property float x\nproperty float y\nproperty float z\n"
        << "property float distance\n"
        << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        << "element face " << faces.size() << '\n'
        << "property list uchar int vertex_indices\nend_header\n";
    out.precision(9);
    for (std::size_t i = 0; i < surface.points.size(); ++i) {
        const Vec3& p = surface.points[i];
        const auto c = distance_color(d[i], scale);
        out << p.x() << ' ' << p.y() << ' ' << p.z() << ' ' << d[i] << ' ' << int(c[0]) << ' ' << int(c[1]) << ' '
            << int(c[2]) << '\n';
    }
    for (const Face& f : faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    if (!out) throw IoError("write failed: " + path.string());
    return scale;
}

EvalReport evaluate(const PiecewiseRuledSurface& surface, const ClosestPointIndex& reference, const EvalOptions& opt)
{
    EvalReport r;
    const ErrorStats e = approximation_error(result_samples(surface, opt.sampling), reference);
    r.eps_avg = e.avg;
    r.eps_max = e.max;
    r.samples = e.samples;
    r.seam_length = surface.seam_length();
    r.kappa_bar = opt.kappa_bar;
    if (const auto mesh = strip_mesh(surface)) r.seam_length_curvature = seam_length_curvature(*mesh, opt.kappa_bar);
    r.patches = static_cast<int>(surface.patches.size());
    r.rulings = surface.num_rulings();
    return r;
}

void save_report_json(const EvalReport& r, const std::filesystem::path& path)
{
    nlohmann::json j;
    j["schema"] = "ruled.report";
    j["version"] = 1;
    j["eps_avg"] = r.eps_avg;
    j["eps_max"] = r.eps_max;
    j["samples"] = r.samples;
    j["seam_length"] = r.seam_length;
    j["seam_length_curvature"] = r.seam_length_curvature ? nlohmann::json(*r.seam_length_curvature) : nlohmann::json();
    j["kappa_bar"] = r.kappa_bar;
    j["patches"] = r.patches;
    j["rulings"] = r.rulings;
    j["dropped_curves"] = r.dropped_curves;
    j["color_scale"] = r.color_scale;
    j["timings"] = r.timings;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(1) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

EvalReport load_report_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    try {
        const nlohmann::json j = nlohmann::json::parse(in);
        if (j.value("schema", "") != "ruled.report" || j.value("version", 0) != 1)
            throw ParseError(path.string() + ": not a version 1 report");
        EvalReport r;
        r.eps_avg = j.at("eps_avg");
        r.eps_max = j.at("eps_max");
        r.samples = j.at("samples");
        r.seam_length = j.at("seam_length");
        if (!j.at("seam_length_curvature").is_null()) r.seam_length_curvature = j.at("seam_length_curvature").get<double>();
        r.kappa_bar = j.at("kappa_bar");
        r.patches = j.at("patches");
        r.rulings = j.at("rulings");
        r.dropped_curves = j.at("dropped_curves");
        r.color_scale = j.at("color_scale");
        r.timings = j.at("timings").get<std::map<std::string, double>>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

} // namespace ruled

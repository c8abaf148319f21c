#include "ruled/ruled_surface.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace ruled {

namespace {

bool share_polyline(const std::vector<int>& a, const std::vector<int>& b)
{
    for (int x : a)
        if (std::find(b.begin(), b.end(), x) != b.end()) return true;
    return false;
}

} // namespace

int PiecewiseRuledSurface::num_rulings() const
{
    int n = 0;
    for (const RuledPatch& p : patches) n += static_cast<int>(p.rulings.size());
    return n;
}

std::vector<std::vector<int>> PiecewiseRuledSurface::point_polylines() const
{
    std::vector<std::vector<int>> out(points.size());
    for (int i = 0; i < static_cast<int>(polylines.size()); ++i)
        for (int v : polylines[i].vertices)
            if (out[v].empty() || out[v].back() != i) out[v].push_back(i);
    return out;
}

bool PiecewiseRuledSurface::strip_between(const Ruling& r, const Ruling& s) const
{
    const auto owner = point_polylines();
    return share_polyline(owner[r.start], owner[s.start]) && share_polyline(owner[r.end], owner[s.end]);
}

std::vector<double> PiecewiseRuledSurface::point_arclength() const
{
    std::vector<double> out(points.size(), -1.0);
    for (const BoundaryPolyline& pl : polylines) {
        double len = 0.0;
        for (std::size_t k = 0; k < pl.vertices.size(); ++k) {
            if (k > 0) len += (points[pl.vertices[k]] - points[pl.vertices[k - 1]]).norm();
            if (out[pl.vertices[k]] < 0.0) out[pl.vertices[k]] = len;
        }
    }
    return out;
}

std::vector<Face> PiecewiseRuledSurface::strip_faces() const
{
    const auto owner = point_polylines();
    std::vector<Face> faces;
    for (const RuledPatch& p : patches) {
        for (std::size_t k = 1; k < p.rulings.size(); ++k) {
            const Ruling& r = p.rulings[k - 1];
            const Ruling& s = p.rulings[k];
            if (!share_polyline(owner[r.start], owner[s.start]) || !share_polyline(owner[r.end], owner[s.end]))
                continue;
            if (r.start != s.start) faces.push_back({r.start, s.start, s.end});
            if (r.end != s.end) faces.push_back({r.start, s.end, r.end});
        }
    }
    return faces;
}

double PiecewiseRuledSurface::seam_length() const
{
    double len = 0.0;
    for (const BoundaryPolyline& pl : polylines) {
        if (!pl.seam) continue;
        for (std::size_t k = 1; k < pl.vertices.size(); ++k)
            len += (points[pl.vertices[k]] - points[pl.vertices[k - 1]]).norm();
        if (pl.closed && pl.vertices.size() > 2)
            len += (points[pl.vertices.front()] - points[pl.vertices.back()]).norm();
    }
    return len;
}

void save_strips_obj(const std::filesystem::path& path, const PiecewiseRuledSurface& s)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    char buf[128];
    for (const Vec3& p : s.points) {
        std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", p.x(), p.y(), p.z());
        out << buf;
    }
    for (const Face& f : s.strip_faces()) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

void save_surface_json(const std::filesystem::path& path, const PiecewiseRuledSurface& s, const std::string& kind)
{
    nlohmann::json j;
    j["schema"] = "ruled.surface";
    j["version"] = 1;
    j["kind"] = kind;
    auto& pts = j["points"] = nlohmann::json::array();
    for (const Vec3& p : s.points) pts.push_back({p.x(), p.y(), p.z()});
    auto& pls = j["polylines"] = nlohmann::json::array();
    for (const BoundaryPolyline& pl : s.polylines)
        pls.push_back({{"vertices", pl.vertices},
                       {"closed", pl.closed},
                       {"seam", pl.seam},
                       {"patches", {pl.patches[0], pl.patches[1]}}});
    auto& pas = j["patches"] = nlohmann::json::array();
    for (const RuledPatch& p : s.patches) {
        nlohmann::json rs = nlohmann::json::array();
        for (const Ruling& r : p.rulings) rs.push_back({r.start, r.end});
        pas.push_back({{"label", p.label}, {"rulings", rs}});
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(1) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

PiecewiseRuledSurface load_surface_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    PiecewiseRuledSurface s;
    try {
        const nlohmann::json j = nlohmann::json::parse(in);
        if (j.at("schema") != "ruled.surface" || j.at("version") != 1)
            throw ParseError(path.string() + ": not a version 1 surface artifact");
        for (const auto& p : j.at("points")) s.points.emplace_back(p.at(0), p.at(1), p.at(2));
        const int n = static_cast<int>(s.points.size());
        auto check = [&](int v) {
            if (v < 0 || v >= n) throw ParseError(path.string() + ": point index out of range");
            return v;
        };
        for (const auto& q : j.at("polylines")) {
            BoundaryPolyline pl;
            for (const auto& v : q.at("vertices")) pl.vertices.push_back(check(v.get<int>()));
            pl.closed = q.at("closed");
            pl.seam = q.at("seam");
            pl.patches = {q.at("patches").at(0).get<int>(), q.at("patches").at(1).get<int>()};
            s.polylines.push_back(std::move(pl));
        }
        for (const auto& q : j.at("patches")) {
            RuledPatch p;
            p.label = q.at("label");
            for (const auto& r : q.at("rulings"))
                p.rulings.push_back({check(r.at(0).get<int>()), check(r.at(1).get<int>())});
            s.patches.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return s;
}

} // namespace ruled

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "ruled/error.hpp"
#include "ruled/metrics.hpp"
#include "shapes.hpp"

using namespace ruled;

namespace {

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b)
{
    const Vec3 ab = b - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

// Plane projection when it lands inside, edge distances otherwise.
double triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c)
{
    const Vec3 n = (b - a).cross(c - a).normalized();
    const Vec3 q = p - n.dot(p - a) * n;
    const bool inside = n.dot((b - a).cross(q - a)) >= 0 && n.dot((c - b).cross(q - b)) >= 0 &&
                        n.dot((a - c).cross(q - c)) >= 0;
    if (inside) return std::abs(n.dot(p - a));
    return std::min({segment_distance(p, a, b), segment_distance(p, b, c), segment_distance(p, c, a)});
}

double brute_distance(const TriangleMesh& m, const Vec3& p)
{
    double best = std::numeric_limits<double>::infinity();
    for (const Face& f : m.faces()) best = std::min(best, triangle_distance(p, m.vertex(f[0]), m.vertex(f[1]), m.vertex(f[2])));
    return best;
}

// Chords z = h between x = 0 and x = 1 at y = k / n, with straight sides.
PiecewiseRuledSurface flat_chords(int n, double h)
{
    PiecewiseRuledSurface s;
    BoundaryPolyline left, right;
    RuledPatch p;
    for (int k = 0; k <= n; ++k) {
        s.points.emplace_back(0.0, double(k) / n, h);
        s.points.emplace_back(1.0, double(k) / n, h);
        left.vertices.push_back(2 * k);
        right.vertices.push_back(2 * k + 1);
        p.rulings.push_back({2 * k, 2 * k + 1});
    }
    left.patches = right.patches = {0, -1};
    s.polylines = {left, right};
    s.patches = {p};
    return s;
}

PiecewiseRuledSurface transformed(PiecewiseRuledSurface s, const Eigen::Matrix3d& R, const Vec3& t, double scale)
{
    for (Vec3& p : s.points) p = scale * (R * p) + t;
    return s;
}

TriangleMesh transformed(const TriangleMesh& m, const Eigen::Matrix3d& R, const Vec3& t, double scale)
{
    std::vector<Vec3> v = m.vertices();
    for (Vec3& p : v) p = scale * (R * p) + t;
    return m.with_vertices(v);
}

struct TempDir {
    std::filesystem::path path;
    TempDir()
    {
        path = std::filesystem::temp_directory_path() / ("ruled_metrics_" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

} // namespace

TEST_CASE("approximation error")
{
    const TriangleMesh ref = shapes::wavy_bump(12);
    const ClosestPointIndex index(ref);

    SUBCASE("reference vertices")
    {
        const ErrorStats e = approximation_error(ref.vertices(), index);
        CHECK(e.avg < 1e-12);
        CHECK(e.max < 1e-12);
    }
    SUBCASE("offset plane")
    {
        const TriangleMesh plane = shapes::flat_grid(6);
        const double d = 0.013;
        const PiecewiseRuledSurface s = flat_chords(20, d);
        const ErrorStats e = approximation_error(result_samples(s), ClosestPointIndex(plane));
        CHECK(e.avg == doctest::Approx(d).epsilon(1e-12));
        CHECK(e.max == doctest::Approx(d).epsilon(1e-12));
    }
    SUBCASE("brute force distances")
    {
        std::mt19937 rng(5);
        std::uniform_real_distribution<double> u(-0.7, 0.7);
        std::vector<Vec3> pts;
        for (int i = 0; i < 300; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
        double sum = 0.0, worst = 0.0;
        for (const Vec3& p : pts) {
            const double d = brute_distance(ref, p);
            sum += d;
            worst = std::max(worst, d);
        }
        const ErrorStats e = approximation_error(pts, index);
        CHECK(std::abs(e.avg - sum / pts.size()) < 1e-12);
        CHECK(std::abs(e.max - worst) < 1e-12);
    }
    CHECK_THROWS_AS(approximation_error({}, index), PreconditionError);
}

TEST_CASE("result sampling density")
{
    const PiecewiseRuledSurface s = flat_chords(30, 0.0);
    const std::vector<Vec3> pts = result_samples(s);
    const int ruling_samples = 31 * 8;
    CHECK(pts.size() >= 1000);
    CHECK(static_cast<int>(pts.size()) - ruling_samples >= 10 * 31);
    for (const Vec3& p : pts) {
        CHECK(p.x() >= -1e-12);
        CHECK(p.x() <= 1.0 + 1e-12);
        CHECK(std::abs(p.z()) < 1e-12);
    }
    // A large surface needs ten strip samples per ruling.
    const PiecewiseRuledSurface big = flat_chords(400, 0.0);
    CHECK(static_cast<int>(result_samples(big).size()) >= 401 * 8 + 10 * 401 - 1);
    CHECK(result_samples(s) == pts);
}

TEST_CASE("curvature-based seam length")
{
    SUBCASE("smooth sphere")
    {
        const TriangleMesh sphere = shapes::uv_sphere(24, 48, 2.0);
        CHECK(seam_length_curvature(sphere, 0.5) == 0.0);
    }
    SUBCASE("unit cube, one quad per side")
    {
        // Every vertex is a corner with deficit pi / 2 over at most 3/2 area,
        // so every edge counts: 12 creases and 6 face diagonals.
        const TriangleMesh cube = shapes::box(1);
        CHECK(seam_length_curvature(cube, 0.5) == doctest::Approx(12.0 + 6.0 * std::sqrt(2.0)));
    }
    SUBCASE("subdivided cube")
    {
        // Crease and face vertices have zero deficit; no edge joins two corners.
        const TriangleMesh cube = shapes::box(3);
        CHECK(seam_length_curvature(cube, 0.5) == 0.0);
        CHECK(seam_length_curvature(cube, 0.0) == 0.0);
    }
    SUBCASE("infinite threshold")
    {
        CHECK(seam_length_curvature(shapes::box(1), std::numeric_limits<double>::infinity()) == 0.0);
    }
}

TEST_CASE("coloured export")
{
    TempDir tmp;
    const TriangleMesh plane = shapes::flat_grid(4);
    const ClosestPointIndex index(plane);

    auto read_ply = [](const std::filesystem::path& p) {
        std::ifstream in(p);
        std::string line;
        int nv = 0;
        while (std::getline(in, line) && line != "end_header")
            if (line.rfind("element vertex", 0) == 0) nv = std::stoi(line.substr(15));
        std::vector<std::array<double, 7>> rows(nv);
        for (auto& r : rows)
            for (double& x : r) in >> x;
        return rows;
    };

    SUBCASE("zero distance gives one colour")
    {
        const PiecewiseRuledSurface s = flat_chords(5, 0.0);
        export_colored_ply(s, index, tmp.path / "a.ply");
        const auto rows = read_ply(tmp.path / "a.ply");
        REQUIRE(rows.size() == s.points.size());
        for (const auto& r : rows) {
            CHECK(r[4] == rows[0][4]);
            CHECK(r[5] == rows[0][5]);
            CHECK(r[6] == rows[0][6]);
        }
    }
    SUBCASE("ramp is monotone and matches recomputed distances")
    {
        PiecewiseRuledSurface s = flat_chords(8, 0.0);
        for (Vec3& p : s.points) p.z() = 0.1 * p.y();
        const double scale = export_colored_ply(s, index, tmp.path / "b.ply");
        const auto rows = read_ply(tmp.path / "b.ply");
        const std::vector<double> d = normalized_distances(s.points, index);
        const double diag = plane.bbox_diagonal();
        for (std::size_t i = 0; i < s.points.size(); ++i) {
            CHECK(std::abs(d[i] - brute_distance(plane, s.points[i]) / diag) < 1e-12);
            CHECK(std::abs(rows[i][3] - d[i]) < 1e-8);
        }
        CHECK(scale == doctest::Approx(0.1 / diag));
        // Along the ramp red rises and blue falls.
        for (std::size_t k = 2; k < rows.size(); k += 2) {
            CHECK(rows[k][3] >= rows[k - 2][3]);
            CHECK(rows[k][4] >= rows[k - 2][4]);
            CHECK(rows[k][6] <= rows[k - 2][6]);
        }
    }
}

TEST_CASE("metrics under rigid motion and scaling")
{
    const TriangleMesh ref = shapes::wavy_bump(10);
    PiecewiseRuledSurface s = flat_chords(12, 0.02);
    for (Vec3& p : s.points) p -= Vec3(0.5, 0.5, 0.0);
    const EvalReport base = evaluate(s, ClosestPointIndex(ref));
    const Eigen::Matrix3d R = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
    const Vec3 t(0.3, -1.1, 2.0);

    const EvalReport moved = evaluate(transformed(s, R, t, 1.0), ClosestPointIndex(transformed(ref, R, t, 1.0)));
    CHECK(std::abs(moved.eps_avg - base.eps_avg) < 1e-10);
    CHECK(std::abs(moved.eps_max - base.eps_max) < 1e-10);
    CHECK(std::abs(moved.seam_length - base.seam_length) < 1e-10);

    const EvalReport scaled = evaluate(transformed(s, R, t, 2.5), ClosestPointIndex(transformed(ref, R, t, 2.5)));
    CHECK(scaled.eps_avg == doctest::Approx(2.5 * base.eps_avg).epsilon(1e-9));
    CHECK(scaled.eps_max == doctest::Approx(2.5 * base.eps_max).epsilon(1e-9));
    CHECK(base.eps_avg <= base.eps_max);
}

TEST_CASE("report json round trip")
{
    TempDir tmp;
    EvalReport r;
    r.eps_avg = 0.001;
    r.eps_max = 0.0042;
    r.samples = 1234;
    r.seam_length = 0.5;
    r.seam_length_curvature = 0.25;
    r.patches = 2;
    r.rulings = 88;
    r.dropped_curves = 3;
    r.color_scale = 0.004;
    r.timings = {{"joint", 1.5}, {"seams", 0.25}};
    save_report_json(r, tmp.path / "r.json");
    const EvalReport q = load_report_json(tmp.path / "r.json");
    CHECK(q.eps_avg == r.eps_avg);
    CHECK(q.eps_max == r.eps_max);
    CHECK(q.samples == r.samples);
    CHECK(q.seam_length_curvature == r.seam_length_curvature);
    CHECK(q.timings == r.timings);
    r.seam_length_curvature.reset();
    save_report_json(r, tmp.path / "r.json");
    CHECK(!load_report_json(tmp.path / "r.json").seam_length_curvature);
    std::ofstream(tmp.path / "bad.json") << "{\"schema\": \"other\"}";
    CHECK_THROWS_AS(load_report_json(tmp.path / "bad.json"), ParseError);
}

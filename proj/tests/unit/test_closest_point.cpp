#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "ruled/closest_point.hpp"
#include "ruled/geometry.hpp"
#include "shapes.hpp"

using namespace ruled;

namespace {

ClosestPoint brute_force(const TriangleMesh& m, const Vec3& p)
{
    ClosestPoint best;
    best.squared_distance = std::numeric_limits<double>::infinity();
    for (int f = 0; f < m.num_faces(); ++f) {
        const Face& t = m.face(f);
        const Vec3 q = closest_point_on_triangle(p, m.vertex(t[0]), m.vertex(t[1]), m.vertex(t[2]));
        const double d = (q - p).squaredNorm();
        if (d < best.squared_distance) best = {q, d, f};
    }
    return best;
}

} // namespace

TEST_CASE("point on the surface is its own foot point")
{
    const TriangleMesh m = shapes::random_surface(8, 3);
    const ClosestPointIndex idx(m);
    for (int v = 0; v < m.num_vertices(); v += 7) {
        const ClosestPoint c = idx.closest(m.vertex(v));
        CHECK(c.squared_distance < 1e-24);
        CHECK((c.point - m.vertex(v)).norm() < 1e-12);
    }
}

TEST_CASE("projection onto a flat square")
{
    const TriangleMesh m = shapes::flat_grid(4);
    const double h = 0.37;
    const ClosestPoint c = closest_point(m, Vec3(0.3, 0.6, h), false);
    CHECK((c.point - Vec3(0.3, 0.6, 0.0)).norm() < 1e-12);
    CHECK(std::abs(c.squared_distance - h * h) < 1e-12);
}

TEST_CASE("random queries match brute force")
{
    const TriangleMesh m = shapes::random_surface(15, 8);
    const ClosestPointIndex idx(m);
    std::mt19937 rng(42);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 p(u(rng), u(rng), u(rng));
        const ClosestPoint a = idx.closest(p);
        const ClosestPoint b = brute_force(m, p);
        CHECK(std::abs(a.squared_distance - b.squared_distance) < 1e-12);
        CHECK((a.point - b.point).norm() < 1e-12);
    }
}

TEST_CASE("closest distance is 1-Lipschitz")
{
    const ClosestPointIndex idx(shapes::icosphere(2, 0.5));
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 300; ++i) {
        const Vec3 p(u(rng), u(rng), u(rng)), q(u(rng), u(rng), u(rng));
        const double dp = std::sqrt(idx.closest(p).squared_distance);
        const double dq = std::sqrt(idx.closest(q).squared_distance);
        CHECK(std::abs(dp - dq) <= (p - q).norm() + 1e-12);
    }
}

TEST_CASE("boundary restricted queries")
{
    // Flat annulus between radii 0.5 and 1.
    const TriangleMesh m = shapes::param_grid(
        [](double r, double t) { return Vec3(r * std::cos(t), r * std::sin(t), 0.0); }, 0.5, 1.0, 4, 0.0,
        2 * std::numbers::pi, 64, true);
    const ClosestPointIndex idx(m);
    REQUIRE(idx.has_boundary());
    std::mt19937 rng(2);
    std::uniform_real_distribution<double> u(-1.2, 1.2);
    for (int i = 0; i < 200; ++i) {
        const Vec3 p(u(rng), u(rng), 0.3 * u(rng));
        const ClosestPoint c = idx.closest_on_boundary(p);
        REQUIRE(c.primitive >= 0);
        CHECK(m.is_boundary_edge(c.primitive));
        double best = std::numeric_limits<double>::infinity();
        for (int e = 0; e < m.num_edges(); ++e) {
            if (!m.is_boundary_edge(e)) continue;
            const Edge& ed = m.edge(e);
            best = std::min(best, (closest_point_on_segment(p, m.vertex(ed.verts[0]), m.vertex(ed.verts[1])) - p)
                                      .squaredNorm());
        }
        CHECK(std::abs(c.squared_distance - best) < 1e-12);
    }
    CHECK_THROWS_AS(ClosestPointIndex(shapes::tetrahedron()).closest_on_boundary(Vec3::Zero()), PreconditionError);
    CHECK_THROWS_AS(closest_point(shapes::tetrahedron(), Vec3::Zero(), true), PreconditionError);
}

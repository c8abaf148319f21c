// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and a
// summary; the exit status is 0 unless the harness itself breaks.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "field_fit.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "ruled/field_init.hpp"
#include "ruled/graph_cut.hpp"
#include "ruled/pipeline.hpp"
#include "ruled/tracing.hpp"
#include "shapes.hpp"

using namespace ruled;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kRuledEpsMax = 0.005;
constexpr double kRuledEpsAvg = 0.001;
constexpr double kRulingRmsDeg = 5.0;
constexpr double kRuledSeconds = 300.0;
constexpr double kTwoPatchEpsMax = 0.01;
constexpr double kSeamHausdorffEdges = 2.0;
constexpr double kGalleryEpsMax = 0.015;
constexpr double kGalleryEpsAvg = 0.0025;
constexpr double kTracingRatio = 2.0;
constexpr double kGradientRelErr = 1e-4;
constexpr double kGradientSeconds = 60.0;
constexpr double kMonotoneSlack = 1e-12;
constexpr double kSurrogateTol = 1e-10;
constexpr int kCutExactMin = 95;
constexpr double kCutWorstRatio = 1.05;
constexpr double kThroughputSeconds = 600.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int passed = 0;
int total = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail)
{
    ++total;
    if (ok) ++passed;
    std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << id << "  " << what << "  " << detail << std::endl;
}

struct Run {
    fs::path workdir;
    RunResult result;
    double seconds = 0.0;
    MeshTransform transform;
    std::string error;
};

const fs::path& root_dir()
{
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "ruled_acceptance";
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int total_violations = 0;
int pipeline_runs = 0;

Run run_full(const std::string& name, const TriangleMesh& mesh)
{
    Run r;
    r.workdir = root_dir() / name;
    fs::remove_all(r.workdir);
    fs::create_directories(r.workdir);
    const fs::path input = root_dir() / (name + ".obj");
    save_obj(mesh, input);

    RunOptions opt;
    opt.input = input;
    opt.workdir = r.workdir;
    opt.config.deterministic = true;
    const auto t0 = Clock::now();
    try {
        r.result = run_pipeline(opt);
        ++pipeline_runs;
        total_violations += r.result.feasibility_violations;
    } catch (const std::exception& e) {
        r.error = e.what();
    }
    r.seconds = seconds_since(t0);
    if (r.error.empty()) {
        const nlohmann::json ref = nlohmann::json::parse(slurp(r.workdir / artifact::reference));
        r.transform.scale = ref["scale"].get<double>();
        const auto& t = ref["translation"];
        r.transform.translation = Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
    }
    std::cerr << "  [" << name << "] " << mesh.num_vertices() << " vertices, " << mesh.num_faces() << " faces, "
              << fmt("%.1f s", r.seconds);
    if (!r.error.empty()) std::cerr << ", error: " << r.error;
    if (r.result.report)
        std::cerr << ", patches " << r.result.report->patches << ", eps_avg " << r.result.report->eps_avg
                  << ", eps_max " << r.result.report->eps_max;
    std::cerr << std::endl;
    return r;
}

std::string summary(const std::string& name, const Run& r)
{
    if (!r.error.empty()) return name + ": error (" + r.error + ")";
    const EvalReport& e = *r.result.report;
    return name + ": patches=" + std::to_string(e.patches) + " eps_avg=" + fmt("%.5f", e.eps_avg) +
           " eps_max=" + fmt("%.5f", e.eps_max) + " t=" + fmt("%.0fs", r.seconds);
}

// RMS angle in degrees between the computed rulings and the nearest analytic
// ruling direction at each ruling midpoint, in input coordinates.
double ruling_rms_degrees(const Run& r, const std::function<std::vector<Vec3>(const Vec3&)>& analytic)
{
    const PiecewiseRuledSurface s = load_surface_json(r.workdir / artifact::final_surface);
    double sum = 0.0;
    int n = 0;
    for (const RuledPatch& p : s.patches)
        for (const Ruling& rl : p.rulings) {
            const Vec3 a = r.transform.invert(s.points[rl.start]);
            const Vec3 b = r.transform.invert(s.points[rl.end]);
            const Vec3 d = (b - a).normalized();
            double best = std::numbers::pi / 2;
            for (const Vec3& t : analytic(0.5 * (a + b))) {
                const double c = std::min(1.0, std::abs(d.dot(t.normalized())));
                best = std::min(best, std::acos(c));
            }
            sum += best * best;
            ++n;
        }
    return n ? std::sqrt(sum / n) * 180.0 / std::numbers::pi : 90.0;
}

// Both straight lines of x^2/a^2 + y^2/a^2 - z^2/c^2 = 1 through p.
std::vector<Vec3> hyperboloid_lines(const Vec3& p, double a, double c)
{
    const Vec3 n = Vec3(p.x() / (a * a), p.y() / (a * a), -p.z() / (c * c)).normalized();
    const Vec3 t1 = n.unitOrthogonal();
    const Vec3 t2 = n.cross(t1);
    auto q = [&](const Vec3& u, const Vec3& v) {
        return (u.x() * v.x() + u.y() * v.y()) / (a * a) - u.z() * v.z() / (c * c);
    };
    const double A = q(t1, t1), B = q(t1, t2), C = q(t2, t2);
    // A cos^2 + 2B cos sin + C sin^2 = 0
    std::vector<Vec3> out;
    if (std::abs(C) < 1e-14) {
        out.push_back(t2);
        out.push_back(-2 * B * t1 + A * t2);
        return out;
    }
    const double disc = std::max(0.0, B * B - A * C);
    for (double sgn : {-1.0, 1.0}) {
        const double tan_t = (-B + sgn * std::sqrt(disc)) / C;
        out.push_back(t1 + tan_t * t2);
    }
    return out;
}

double point_segment(const Vec3& p, const Vec3& a, const Vec3& b)
{
    const Vec3 ab = b - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

void criterion_ruled_inputs()
{
    const double pitch = 0.3;
    const Run hel = run_full("helicoid", shapes::helicoid(20, 50, 1.0, pitch, 6.0));
    const double a = 0.5, c = 0.7;
    const Run hyp = run_full("hyperboloid", shapes::hyperboloid(20, 50, a, c, 0.6));

    bool ok = true;
    std::string detail;
    for (const auto& [name, run] : {std::pair<std::string, const Run*>{"helicoid", &hel}, {"hyperboloid", &hyp}}) {
        if (!detail.empty()) detail += "; ";
        detail += summary(name, *run);
        if (!run->error.empty()) {
            ok = false;
            continue;
        }
        const double rms = name == "helicoid"
                               ? ruling_rms_degrees(*run,
                                                    [&](const Vec3& p) {
                                                        return std::vector<Vec3>{shapes::helicoid_ruling(p.z() / pitch)};
                                                    })
                               : ruling_rms_degrees(*run, [&](const Vec3& p) { return hyperboloid_lines(p, a, c); });
        detail += " rms=" + fmt("%.2fdeg", rms);
        const EvalReport& e = *run->result.report;
        ok = ok && e.patches == 1 && e.eps_max < kRuledEpsMax && e.eps_avg < kRuledEpsAvg && rms < kRulingRmsDeg &&
             run->seconds < kRuledSeconds;
    }
    report(1, ok, "ruled inputs give one accurate patch",
           detail + " (need patches=1, eps_max<" + fmt("%g", kRuledEpsMax) + ", eps_avg<" + fmt("%g", kRuledEpsAvg) +
               ", rms<" + fmt("%g", kRulingRmsDeg) + "deg, t<" + fmt("%g", kRuledSeconds) + "s)");
}

void criterion_two_patch()
{
    const TriangleMesh mesh = shapes::two_patch(24);
    const Run r = run_full("two_patch", mesh);
    if (!r.error.empty()) {
        report(2, false, "two-patch input", summary("two_patch", r));
        return;
    }
    const PiecewiseRuledSurface s = load_surface_json(r.workdir / artifact::final_surface);
    std::vector<std::pair<Vec3, Vec3>> segs;
    int seams = 0;
    for (const BoundaryPolyline& pl : s.polylines) {
        if (!pl.seam) continue;
        ++seams;
        const int n = static_cast<int>(pl.vertices.size());
        for (int i = 0; i + 1 < n + (pl.closed ? 1 : 0); ++i)
            segs.emplace_back(r.transform.invert(s.points[pl.vertices[i]]),
                              r.transform.invert(s.points[pl.vertices[(i + 1) % n]]));
    }
    // Junction of the two pieces: x = 0, z = 0, |y| <= 1/2.
    const Vec3 j0(0.0, -0.5, 0.0), j1(0.0, 0.5, 0.0);
    double hausdorff = std::numeric_limits<double>::infinity();
    if (!segs.empty()) {
        hausdorff = 0.0;
        for (const auto& [a, b] : segs) hausdorff = std::max({hausdorff, point_segment(a, j0, j1), point_segment(b, j0, j1)});
        for (int k = 0; k <= 200; ++k) {
            const Vec3 q = j0 + (k / 200.0) * (j1 - j0);
            double best = std::numeric_limits<double>::infinity();
            for (const auto& [a, b] : segs) best = std::min(best, point_segment(q, a, b));
            hausdorff = std::max(hausdorff, best);
        }
    }
    const double h = mesh.mean_edge_length();
    const EvalReport& e = *r.result.report;
    const bool ok = seams == 1 && hausdorff <= kSeamHausdorffEdges * h && e.eps_max < kTwoPatchEpsMax;
    report(2, ok, "two-patch input splits at the junction",
           summary("two_patch", r) + " seams=" + std::to_string(seams) + " hausdorff=" + fmt("%.4f", hausdorff) +
               " (" + fmt("%.2f", hausdorff / h) + " edges) (need seams=1, hausdorff<=" +
               fmt("%g", kSeamHausdorffEdges) + " edges, eps_max<" + fmt("%g", kTwoPatchEpsMax) + ")");
}

void criterion_gallery()
{
    const Run wavy = run_full("wavy_bump", shapes::wavy_bump(54));
    const Run mixed = run_full("saddle_bump", shapes::heightfield(
                                                  [](double x, double y) {
                                                      return 0.25 * (x * x - y * y) +
                                                             0.12 * std::exp(-((x - 0.15) * (x - 0.15) +
                                                                               (y - 0.1) * (y - 0.1)) /
                                                                             0.03);
                                                  },
                                                  54, 0.5));
    bool ok = true;
    std::string detail;
    for (const auto& [name, run] : {std::pair<std::string, const Run*>{"wavy_bump", &wavy}, {"saddle_bump", &mixed}}) {
        if (!detail.empty()) detail += "; ";
        detail += summary(name, *run);
        ok = ok && run->error.empty() && run->result.report->eps_max <= kGalleryEpsMax &&
             run->result.report->eps_avg <= kGalleryEpsAvg;
    }
    report(3, ok, "freeform gallery accuracy",
           detail + " (need eps_max<=" + fmt("%g", kGalleryEpsMax) + ", eps_avg<=" + fmt("%g", kGalleryEpsAvg) + ")");
}

void criterion_tracing()
{
    const double rot = 0.1;
    const TriangleMesh m = shapes::param_grid(
        [&](double u, double v) {
            const double x = std::cos(rot) * u - std::sin(rot) * v, y = std::sin(rot) * u + std::cos(rot) * v;
            return Vec3(x, y, x * y);
        },
        -0.5, 0.5, 22, -0.5, 0.5, 22);
    auto ruling = [](const Vec3& p) { return Vec3(0.0, 1.0, p.x()); };
    const RulingField first = shapes::fit_field(m, ruling, true);
    const RulingField constant = shapes::fit_field(m, ruling, false);

    // Far end of the ruling x = x0 inside the rotated square.
    auto far_end = [&](const Vec3& seed) {
        const double x0 = seed.x();
        double lo = -1e9, hi = 1e9;
        const double cu = std::cos(rot) * x0, su = std::sin(rot);
        const double cv = -std::sin(rot) * x0, sv = std::cos(rot);
        for (auto [c0, s0] : {std::pair{cu, su}, std::pair{cv, sv}}) {
            double a = (-0.5 - c0) / s0, b = (0.5 - c0) / s0;
            if (a > b) std::swap(a, b);
            lo = std::max(lo, a);
            hi = std::min(hi, b);
        }
        const double y = std::abs(lo - seed.y()) > std::abs(hi - seed.y()) ? lo : hi;
        return Vec3(x0, y, x0 * y);
    };

    double err_first = 0.0, err_const = 0.0;
    int count = 0;
    for (int e = 0; e < m.num_edges(); ++e) {
        const Edge& ed = m.edge(e);
        if (!ed.is_boundary()) continue;
        for (double t : {0.25, 0.5, 0.75}) {
            const Vec3 seed = (1 - t) * m.vertex(ed.verts[0]) + t * m.vertex(ed.verts[1]);
            const Vec3 target = far_end(seed);
            if ((target - seed).norm() < 0.5) continue;
            auto endpoint_error = [&](const RulingField& fld) {
                const IntegralCurve c = trace_curve(m, fld, {ed.faces[0], seed, e}, {}, 10.0);
                return std::min((c.points.front() - target).norm(), (c.points.back() - target).norm());
            };
            err_first += endpoint_error(first);
            err_const += endpoint_error(constant);
            ++count;
        }
    }
    const double ratio = err_first > 0.0 ? err_const / err_first : std::numeric_limits<double>::infinity();
    report(4, count > 0 && ratio >= kTracingRatio, "first-order tracing beats the constant field",
           std::to_string(m.num_faces()) + " faces, " + std::to_string(count) + " seeds, mean endpoint error first=" +
               fmt("%.5f", err_first / std::max(count, 1)) + " constant=" +
               fmt("%.5f", err_const / std::max(count, 1)) + " ratio=" + fmt("%.2f", ratio) + " (need >=" +
               fmt("%g", kTracingRatio) + ")");
}

void criterion_gradients()
{
    using oracles::Term;
    const Term terms[] = {Term::Sparse, Term::Close, Term::Barrier, Term::Laplacian, Term::Length, Term::Total};
    const auto t0 = Clock::now();
    double worst = 0.0;
    bool degenerate = false;
    for (unsigned seed = 1; seed <= 20; ++seed) {
        const JointState s = oracles::random_state(seed);
        const double h = 1e-6 * s.mesh.bbox_diagonal();
        for (Term t : terms) {
            const Eigen::VectorXd g = oracles::term_gradient(s, t);
            const Eigen::VectorXd fd = oracles::central_differences(s, t, h);
            if (fd.norm() == 0.0) {
                degenerate = true;
                continue;
            }
            worst = std::max(worst, (g - fd).norm() / fd.norm());
        }
    }
    const double secs = seconds_since(t0);
    report(5, !degenerate && worst < kGradientRelErr && secs < kGradientSeconds,
           "analytic gradients match central differences",
           "20 states x 6 terms, worst relative error=" + fmt("%.2e", worst) + " t=" + fmt("%.1fs", secs) +
               " (need <" + fmt("%g", kGradientRelErr) + ", t<" + fmt("%g", kGradientSeconds) + "s)");
}

void criterion_mm()
{
    const InitSchedule sched;
    int iterations = 0, bad_monotone = 0, bad_surrogate = 0;
    double worst_increase = -std::numeric_limits<double>::infinity(), worst_gap = 0.0;
    for (unsigned seed = 1; seed <= 5; ++seed) {
        const TriangleMesh m = shapes::random_surface(10, seed);
        const InitProblem pb = build_init_problem(m, estimate_principal(m));
        const MMResult res = mm_solve(pb, spectral_init(pb, sched), sched);
        for (const MMIteration& it : res.trace) {
            ++iterations;
            const double inc = it.energy_after - it.energy_before;
            worst_increase = std::max(worst_increase, inc);
            if (inc > kMonotoneSlack) ++bad_monotone;
            const double gap = std::abs(it.surrogate_at_k - it.energy_before) / std::max(1.0, it.energy_before);
            worst_gap = std::max(worst_gap, gap);
            if (gap > kSurrogateTol) ++bad_surrogate;
        }
    }
    report(6, iterations > 0 && bad_monotone == 0 && bad_surrogate == 0, "MM iterations are monotone and tight",
           "5 meshes, " + std::to_string(iterations) + " iterations, worst increase=" + fmt("%.2e", worst_increase) +
               " worst surrogate gap=" + fmt("%.2e", worst_gap) + " (need <=" + fmt("%g", kMonotoneSlack) + ", <=" +
               fmt("%g", kSurrogateTol) + ")");
}

void criterion_graph_cut()
{
    std::mt19937 rng(20240611);
    int exact = 0, worse = 0;
    double worst_ratio = 1.0;
    for (int i = 0; i < 100; ++i) {
        const int n = 4 + static_cast<int>(rng() % 9);
        const int labels = 2 + static_cast<int>(rng() % 2);
        const LabelProblem pb = oracles::random_problem(rng, n, labels);
        const double cost = labeling_cost(pb, alpha_expansion(pb));
        const double opt = oracles::exhaustive_minimum(pb);
        if (cost <= opt + 1e-9 * std::max(1.0, opt)) ++exact;
        if (cost > kCutWorstRatio * opt + 1e-12) ++worse;
        if (opt > 0.0) worst_ratio = std::max(worst_ratio, cost / opt);
    }
    report(7, exact >= kCutExactMin && worse == 0, "alpha expansion against exhaustive search",
           "100 instances, exact=" + std::to_string(exact) + " worst ratio=" + fmt("%.4f", worst_ratio) +
               " (need exact>=" + std::to_string(kCutExactMin) + ", ratio<=" + fmt("%g", kCutWorstRatio) + ")");
}

void criterion_feasibility()
{
    report(8, pipeline_runs > 0 && total_violations == 0, "no infeasible field steps",
           std::to_string(pipeline_runs) + " full runs, violations=" + std::to_string(total_violations) +
               " (need 0)");
}

void criterion_determinism()
{
    const TriangleMesh mesh = shapes::two_patch(12);
    const Run a = run_full("determinism_a", mesh);
    const Run b = run_full("determinism_b", mesh);
    int differing = 0, compared = 0;
    std::string names;
    if (a.error.empty() && b.error.empty())
        for (const char* name : {artifact::reference, artifact::field, artifact::joint, artifact::seams,
                                 artifact::initial_surface, artifact::final_surface, artifact::strips,
                                 artifact::report, artifact::colored, artifact::log}) {
            ++compared;
            if (slurp(a.workdir / name) != slurp(b.workdir / name)) {
                ++differing;
                names += std::string(" ") + name;
            }
        }
    report(9, compared > 0 && differing == 0, "deterministic runs are byte-identical",
           std::to_string(compared) + " artifacts compared, differing=" + std::to_string(differing) + names);
}

void criterion_throughput()
{
    const TriangleMesh mesh = shapes::wavy_bump(31);
    const Run r = run_full("throughput", mesh);
    report(10, r.error.empty() && r.seconds < kThroughputSeconds, "1k-vertex pipeline time",
           std::to_string(mesh.num_vertices()) + " vertices, " + summary("wavy_bump", r) + " (need t<" +
               fmt("%g", kThroughputSeconds) + "s)");
}

} // namespace

int main()
{
    std::cerr << "work directories under " << root_dir() << std::endl;
    // Cheap checks first so their lines appear early.
    criterion_tracing();
    criterion_gradients();
    criterion_mm();
    criterion_graph_cut();
    criterion_ruled_inputs();
    criterion_two_patch();
    criterion_gallery();
    criterion_determinism();
    criterion_throughput();
    criterion_feasibility();
    std::cout << "acceptance: " << passed << "/" << total << " criteria passed" << std::endl;
    return 0;
}

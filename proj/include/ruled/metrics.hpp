#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ruled/closest_point.hpp"
#include "ruled/ruled_surface.hpp"

namespace ruled {

struct ErrorStats {
    double avg = 0.0;
    double max = 0.0;
    int samples = 0;
};

/// One-sided distances from `samples` to the reference. Throws PreconditionError
/// on an empty sample set.
ErrorStats approximation_error(const std::vector<Vec3>& samples, const ClosestPointIndex& reference);

struct SamplingOptions {
    int samples_per_ruling = 8;
    int strip_density = 10;   // strip samples per ruling
    int min_samples = 1000;   // ruling and strip samples together
};

/// Interior ruling samples plus area-proportional barycentric samples of the
/// triangulated strips. Deterministic.
std::vector<Vec3> result_samples(const PiecewiseRuledSurface& surface, const SamplingOptions& opt = {});

/// Total length of edges whose endpoints are both interior with |K| > kappa_bar.
double seam_length_curvature(const TriangleMesh& mesh, double kappa_bar);

/// Strip triangulation as a mesh, or nothing when it is not a manifold.
std::optional<TriangleMesh> strip_mesh(const PiecewiseRuledSurface& surface);

/// Distance of every surface point to the reference divided by the
/// reference's bounding-box diagonal.
std::vector<double> normalized_distances(const std::vector<Vec3>& points, const ClosestPointIndex& reference);

/// Blue-to-red ramp over [0, scale]; values outside are clamped.
std::array<unsigned char, 3> distance_color(double value, double scale);

/// Writes the strip triangulation as ASCII PLY with per-vertex colours of the
/// normalized distance. `scale` <= 0 picks the maximum value. Returns the scale used.
double export_colored_ply(const PiecewiseRuledSurface& surface, const ClosestPointIndex& reference,
                          const std::filesystem::path& path, double scale = 0.0);

struct EvalReport {
    double eps_avg = 0.0;
    double eps_max = 0.0;
    int samples = 0;
    double seam_length = 0.0;
    std::optional<double> seam_length_curvature;  // empty when the strips are not a manifold
    double kappa_bar = 0.5;
    int patches = 0;
    int rulings = 0;
    int dropped_curves = 0;
    double color_scale = 0.0;
    std::map<std::string, double> timings;  // seconds per stage
};

struct EvalOptions {
    SamplingOptions sampling;
    double kappa_bar = 0.5;
};

/// Everything except dropped curves, timings and the colour scale.
EvalReport evaluate(const PiecewiseRuledSurface& surface, const ClosestPointIndex& reference,
                    const EvalOptions& opt = {});

void save_report_json(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report_json(const std::filesystem::path& path);

} // namespace ruled

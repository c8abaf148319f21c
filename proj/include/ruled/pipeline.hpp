#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ruled/error.hpp"
#include "ruled/metrics.hpp"

namespace ruled {

/// A stage was asked to run before the artifacts it reads exist.
class StageDependencyError : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

/// All user-facing parameters. Lengths are in unit-bounding-box-diagonal units.
struct PipelineConfig {
    // Field initialization
    double mu1_start = 1.0;
    double mu1_end = 10.0;
    double mu2_start = 0.1;
    double mu2_end = 10.0;
    double mu3 = 0.01;
    int init_ramp_stages = 3;
    int init_max_iterations = 500;
    double init_tolerance = 1e-8;

    // Joint optimization
    double nu_min = 0.05;
    double nu_max = 0.0;  // 0: automatic
    double w_close = 1e3;
    double w_barrier = 1e-6;
    double w_laplacian = 1e2;
    double w_length = 1e2;
    int joint_max_iterations = 300;
    double joint_tolerance = 1e-6;

    // Seams and initial surface
    double eps_edge = 0.0;  // 0: (2 nu_min)^2
    double eps_area_fraction = 1e-3;
    double lambda_label = 0.5;
    int postprocess_max_iterations = 300;
    double postprocess_tolerance = 1e-6;
    double seed_spacing = 0.01;
    double trace_length_factor = 4.0;

    // Final optimization
    int samples_per_ruling = 8;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double lambda3 = 1e-6;
    double lambda4 = 1e-6;
    int neighbors = 4;
    int max_refreshes = 5;
    int dogleg_max_iterations = 200;
    double dogleg_gradient_tolerance = 1e-8;
    int densify_factor = 1;

    // Evaluation
    double kappa_bar = 0.5;
    int metric_strip_density = 10;
    int metric_min_samples = 1000;

    // Execution
    int threads = 1;
    bool deterministic = false;
    long seed = 0;

    double effective_eps_edge() const { return eps_edge > 0.0 ? eps_edge : 4.0 * nu_min * nu_min; }

    /// Throws PreconditionError on out-of-range values.
    void validate() const;
};

/// `key = value` lines; `#` starts a comment. Unknown keys, repeated keys and
/// malformed values throw ParseError. The result is validated.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);
/// Every key with its unit as a comment. Parses back to an equal config.
std::string format_config(const PipelineConfig& config);
bool operator==(const PipelineConfig& a, const PipelineConfig& b);

struct ConfigKey {
    std::string name;
    std::string unit;
    std::string description;
};
const std::vector<ConfigKey>& config_keys();

enum class Stage { All, Init, Joint, Seams, Final, Metrics };
Stage parse_stage(const std::string& name);
const char* to_string(Stage s);

/// Artifact file names inside the work directory.
namespace artifact {
inline constexpr const char* reference = "reference.json";
inline constexpr const char* field = "init_field.json";
inline constexpr const char* joint = "joint.json";
inline constexpr const char* seams = "seams.json";
inline constexpr const char* initial_surface = "initial_surface.json";
inline constexpr const char* final_surface = "final_surface.json";
inline constexpr const char* strips = "final_strips.obj";
inline constexpr const char* report = "report.json";
inline constexpr const char* colored = "distance.ply";
inline constexpr const char* log = "log.json";
inline constexpr const char* error = "error.json";
} // namespace artifact

struct RunOptions {
    Stage stage = Stage::All;
    std::filesystem::path input;  // needed by the init stage only
    PipelineConfig config;
    std::filesystem::path workdir;
};

struct RunResult {
    std::vector<Stage> stages;
    std::optional<EvalReport> report;   // when the metrics stage ran
    int feasibility_violations = 0;     // over all field optimizations that ran
    std::vector<std::string> warnings;
};

/// Runs the requested stage (or all of them). Every stage reads its inputs
/// from the work directory, so a chain of single-stage runs produces the same
/// files as one full run. Progress lines go to `log` when given. A failing
/// stage leaves an error record in the work directory and rethrows.
RunResult run_pipeline(const RunOptions& opt, std::ostream* log = nullptr);

/// Error record written next to the artifacts on failure.
void write_error_json(const std::filesystem::path& path, const std::string& stage, const std::exception& e);
/// Error category name used in the error record.
std::string error_kind(const std::exception& e);

/// Thread count from RULED_THREADS when set and positive.
std::optional<int> thread_override_from_env();

} // namespace ruled

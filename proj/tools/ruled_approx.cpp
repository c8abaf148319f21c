#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "json.hpp"
#include "ruled/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ruled;

namespace {

void print_error(const std::string& stage, const std::exception& e)
{
    const nlohmann::json j = {{"error", error_kind(e)}, {"stage", stage}, {"message", e.what()}};
    std::cerr << j.dump() << '\n';
}

int run_command(const std::string& stage_name, const fs::path& input, const fs::path& config, const fs::path& workdir,
                bool deterministic, bool quiet)
{
    RunOptions opt;
    try {
        opt.stage = parse_stage(stage_name);
        opt.input = input;
        opt.workdir = workdir;
        if (!config.empty()) opt.config = load_config(config);
        if (deterministic) opt.config.deterministic = true;
        if (const auto n = thread_override_from_env()) opt.config.threads = *n;
    } catch (const std::exception& e) {
        print_error("setup", e);
        return 2;
    }
    try {
        const RunResult r = run_pipeline(opt, quiet ? nullptr : &std::cerr);
        if (r.report) {
            std::printf("eps_avg %.6g\neps_max %.6g\npatches %d\nrulings %d\nseam_length %.6g\n", r.report->eps_avg,
                        r.report->eps_max, r.report->patches, r.report->rulings, r.report->seam_length);
        }
        if (r.feasibility_violations > 0)
            std::fprintf(stderr, "feasibility violations: %d\n", r.feasibility_violations);
        return 0;
    } catch (const std::exception& e) {
        // The failing stage is named in the error record.
        std::string stage = stage_name;
        try {
            std::ifstream in(workdir / artifact::error);
            stage = nlohmann::json::parse(in).value("stage", stage_name);
        } catch (...) {
        }
        print_error(stage, e);
        return 1;
    }
}

int report_command(const fs::path& workdir)
{
    try {
        if (!fs::exists(workdir / artifact::report))
            throw StageDependencyError(std::string("stage dependency missing: report needs ") + artifact::report);
        const EvalReport r = load_report_json(workdir / artifact::report);
        std::printf("eps_avg                %.6g\n", r.eps_avg);
        std::printf("eps_max                %.6g\n", r.eps_max);
        std::printf("samples                %d\n", r.samples);
        std::printf("patches                %d\n", r.patches);
        std::printf("rulings                %d\n", r.rulings);
        std::printf("dropped_curves         %d\n", r.dropped_curves);
        std::printf("seam_length            %.6g\n", r.seam_length);
        if (r.seam_length_curvature)
            std::printf("seam_length_curvature  %.6g (kappa_bar %.3g)\n", *r.seam_length_curvature, r.kappa_bar);
        else
            std::printf("seam_length_curvature  n/a (strips are not a manifold)\n");
        std::printf("color_scale            %.6g\n", r.color_scale);
        for (const auto& [stage, t] : r.timings) std::printf("time_%-17s %.3f s\n", stage.c_str(), t);
        return 0;
    } catch (const std::exception& e) {
        print_error("report", e);
        return 1;
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Piecewise ruled surface approximation of triangle meshes"};
    app.require_subcommand(1);

    std::string stage = "all";
    fs::path input, config, workdir;
    bool deterministic = false, quiet = false;
    CLI::App* run = app.add_subcommand("run", "Run one stage or the whole pipeline");
    run->add_option("--stage", stage, "all, init, joint, seams, final or metrics")
        ->check(CLI::IsMember({"all", "init", "joint", "seams", "final", "metrics"}));
    run->add_option("--input", input, "Input OBJ mesh (init stage)");
    run->add_option("--config", config, "key = value configuration file");
    run->add_option("--workdir", workdir, "Artifact directory")->required();
    run->add_flag("--deterministic", deterministic, "Leave timings out of artifacts");
    run->add_flag("--quiet", quiet, "No progress lines");

    fs::path report_dir;
    CLI::App* report = app.add_subcommand("report", "Print the evaluation report of a work directory");
    report->add_option("--workdir", report_dir, "Artifact directory")->required();

    CLI::App* defaults = app.add_subcommand("config", "Print the default configuration");

    CLI11_PARSE(app, argc, argv);
    if (*run) return run_command(stage, input, config, workdir, deterministic, quiet);
    if (*report) return report_command(report_dir);
    if (*defaults) {
        std::cout << format_config(PipelineConfig{});
        return 0;
    }
    return 0;
}

#include "ruled/pipeline.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <variant>

#include "json.hpp"
#include "ruled/closest_point.hpp"
#include "ruled/field_init.hpp"
#include "ruled/joint_opt.hpp"
#include "ruled/seam_topology.hpp"
#include "ruled/surface_opt.hpp"

namespace ruled {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

using Member = std::variant<double PipelineConfig::*, int PipelineConfig::*, bool PipelineConfig::*,
                            long PipelineConfig::*>;

struct KeyDef {
    ConfigKey key;
    Member member;
};

const std::vector<KeyDef>& key_defs()
{
    using C = PipelineConfig;
    static const std::vector<KeyDef> defs = {
        {{"mu1_start", "-", "initial weight of the principal-direction term"}, &C::mu1_start},
        {{"mu1_end", "-", "final weight of the principal-direction term"}, &C::mu1_end},
        {{"mu2_start", "-", "initial weight of the asymptotic-line term"}, &C::mu2_start},
        {{"mu2_end", "-", "final weight of the asymptotic-line term"}, &C::mu2_end},
        {{"mu3", "-", "unit-length penalty weight"}, &C::mu3},
        {{"init_ramp_stages", "count", "weight stages of the field initialization"}, &C::init_ramp_stages},
        {{"init_max_iterations", "count", "MM iterations per stage"}, &C::init_max_iterations},
        {{"init_tolerance", "relative", "MM stop on relative energy decrease"}, &C::init_tolerance},
        {{"nu_min", "length", "final Welsch scale"}, &C::nu_min},
        {{"nu_max", "length", "first Welsch scale, 0 for automatic"}, &C::nu_max},
        {{"w_close", "1/length^2", "closeness weight"}, &C::w_close},
        {{"w_barrier", "-", "feasibility barrier weight"}, &C::w_barrier},
        {{"w_laplacian", "1/length^2", "Laplacian regularizer weight"}, &C::w_laplacian},
        {{"w_length", "1/length^2", "edge-length regularizer weight"}, &C::w_length},
        {{"joint_max_iterations", "count", "L-BFGS iterations per Welsch scale"}, &C::joint_max_iterations},
        {{"joint_tolerance", "relative", "L-BFGS stop on relative energy decrease"}, &C::joint_tolerance},
        {{"eps_edge", "length^2", "seam candidate threshold on E_comb, 0 for (2 nu_min)^2"}, &C::eps_edge},
        {{"eps_area_fraction", "fraction", "small-loop area threshold over total area"}, &C::eps_area_fraction},
        {{"lambda_label", "-", "label term weight of the seam cut"}, &C::lambda_label},
        {{"postprocess_max_iterations", "count", "L-BFGS iterations of the seam post-process"},
         &C::postprocess_max_iterations},
        {{"postprocess_tolerance", "relative", "post-process stop on relative energy decrease"},
         &C::postprocess_tolerance},
        {{"seed_spacing", "length", "arc-length spacing of ruling seeds"}, &C::seed_spacing},
        {{"trace_length_factor", "diagonals", "integral curve length cap"}, &C::trace_length_factor},
        {{"samples_per_ruling", "count", "interior samples per ruling"}, &C::samples_per_ruling},
        {{"lambda1", "-", "ruling-sample closeness weight"}, &C::lambda1},
        {{"lambda2", "-", "boundary-vertex closeness weight"}, &C::lambda2},
        {{"lambda3", "length^4", "ruled-surface smoothness weight"}, &C::lambda3},
        {{"lambda4", "length^4", "boundary smoothness weight"}, &C::lambda4},
        {{"neighbors", "count", "nearest neighbours of the sample weights"}, &C::neighbors},
        {{"max_refreshes", "count", "footpoint refreshes of the final stage"}, &C::max_refreshes},
        {{"dogleg_max_iterations", "count", "trust-region iterations per refresh"}, &C::dogleg_max_iterations},
        {{"dogleg_gradient_tolerance", "-", "trust-region stop on the gradient max-norm"},
         &C::dogleg_gradient_tolerance},
        {{"densify_factor", "count", "rulings per original ruling gap in the output"}, &C::densify_factor},
        {{"kappa_bar", "1/length^2", "Gaussian curvature threshold of the curvature seam length"}, &C::kappa_bar},
        {{"metric_strip_density", "count", "strip samples per ruling for the error metrics"},
         &C::metric_strip_density},
        {{"metric_min_samples", "count", "minimum error samples"}, &C::metric_min_samples},
        {{"threads", "count", "worker threads"}, &C::threads},
        {{"deterministic", "bool", "leave wall-clock timings out of artifacts"}, &C::deterministic},
        {{"seed", "integer", "random seed, recorded only"}, &C::seed},
    };
    return defs;
}

std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <class T>
bool parse_number(const std::string& s, T& out)
{
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// ---- artifacts ----

void write_json(const fs::path& path, const json& j)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(1) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

json read_json(const fs::path& path, const std::string& schema)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    if (j.value("schema", "") != schema || j.value("version", 0) != 1)
        throw ParseError(path.string() + ": not a version 1 " + schema + " artifact");
    return j;
}

void require(const fs::path& workdir, std::initializer_list<const char*> names, Stage stage)
{
    for (const char* n : names)
        if (!fs::exists(workdir / n))
            throw StageDependencyError(std::string("stage dependency missing: ") + to_string(stage) + " needs " + n);
}

json mesh_json(const TriangleMesh& m)
{
    json v = json::array(), f = json::array();
    for (const Vec3& p : m.vertices()) v.push_back({p.x(), p.y(), p.z()});
    for (const Face& t : m.faces()) f.push_back({t[0], t[1], t[2]});
    return {{"vertices", v}, {"faces", f}};
}

TriangleMesh mesh_from_json(const json& j, bool check_area)
{
    std::vector<Vec3> v;
    std::vector<Face> f;
    for (const auto& p : j.at("vertices")) v.emplace_back(p.at(0), p.at(1), p.at(2));
    for (const auto& t : j.at("faces")) f.push_back({t.at(0), t.at(1), t.at(2)});
    return TriangleMesh(std::move(v), std::move(f), check_area);
}

json field_json(const RulingField& field)
{
    json a = json::array();
    for (const RulingParams& p : field.params()) a.push_back({p.a, p.b, p.gamma});
    return a;
}

RulingField field_from_json(const json& a)
{
    std::vector<RulingParams> p;
    for (const auto& x : a) p.push_back({x.at(0), x.at(1), x.at(2)});
    return RulingField(std::move(p));
}

TriangleMesh load_reference(const fs::path& workdir)
{
    const json j = read_json(workdir / artifact::reference, "ruled.reference");
    try {
        return mesh_from_json(j.at("mesh"), true);
    } catch (const json::exception& e) {
        throw ParseError(std::string(artifact::reference) + ": " + e.what());
    }
}

// ---- log ----

class StageLog {
public:
    explicit StageLog(fs::path path) : path_(std::move(path))
    {
        std::ifstream in(path_);
        if (in) {
            try {
                entries_ = json::parse(in);
            } catch (const json::exception&) {
                entries_ = json::object();
            }
        }
        if (!entries_.is_object() || entries_.value("schema", "") != "ruled.log") entries_ = json::object();
        entries_["schema"] = "ruled.log";
        entries_["version"] = 1;
        if (!entries_.contains("stages")) entries_["stages"] = json::object();
    }
    void record(Stage s, json entry)
    {
        entries_["stages"][to_string(s)] = std::move(entry);
        write_json(path_, entries_);
    }
    std::map<std::string, double> timings() const
    {
        std::map<std::string, double> t;
        for (const auto& [name, e] : entries_["stages"].items())
            if (e.contains("seconds")) t[name] = e["seconds"];
        return t;
    }

private:
    fs::path path_;
    json entries_;
};

LbfgsOptions lbfgs_options(int iterations, double tolerance)
{
    LbfgsOptions o;
    o.max_iterations = iterations;
    o.relative_tolerance = tolerance;
    return o;
}

struct StageContext {
    const RunOptions& opt;
    const PipelineConfig& cfg;
    std::ostream* log;
    RunResult& result;

    void say(const std::string& line) const
    {
        if (log) *log << line << '\n';
    }
    void warn(const std::vector<std::string>& w) const
    {
        for (const std::string& s : w) {
            say("warning: " + s);
            result.warnings.push_back(s);
        }
    }
};

json run_init(const StageContext& c)
{
    if (c.opt.input.empty()) throw PreconditionError("init stage needs an input mesh");
    const auto [mesh, transform] = normalize_unit_diagonal(load_obj(c.opt.input));
    json ref = {{"schema", "ruled.reference"},
                {"version", 1},
                {"scale", transform.scale},
                {"translation", {transform.translation.x(), transform.translation.y(), transform.translation.z()}},
                {"mesh", mesh_json(mesh)}};
    write_json(c.opt.workdir / artifact::reference, ref);

    InitSchedule sched;
    sched.mu1_start = c.cfg.mu1_start;
    sched.mu1_end = c.cfg.mu1_end;
    sched.mu2_start = c.cfg.mu2_start;
    sched.mu2_end = c.cfg.mu2_end;
    sched.mu3 = c.cfg.mu3;
    sched.ramp_stages = c.cfg.init_ramp_stages;
    sched.max_iterations = c.cfg.init_max_iterations;
    sched.relative_tolerance = c.cfg.init_tolerance;
    FieldInitReport rep;
    const RulingField field = init_ruling_field(mesh, sched, &rep);
    write_json(c.opt.workdir / artifact::field, {{"schema", "ruled.field"},
                                                 {"version", 1},
                                                 {"chosen_candidate", rep.chosen_candidate},
                                                 {"candidate_energy", rep.candidate_energy},
                                                 {"field", field_json(field)}});
    c.say("init: " + std::to_string(mesh.num_vertices()) + " vertices, " + std::to_string(mesh.num_faces()) +
          " faces, candidate " + std::to_string(rep.chosen_candidate));
    return {{"vertices", mesh.num_vertices()},
            {"faces", mesh.num_faces()},
            {"chosen_candidate", rep.chosen_candidate},
            {"candidate_energy", rep.candidate_energy},
            {"candidate_curvature", rep.candidate_curvature}};
}

json run_joint(const StageContext& c)
{
    require(c.opt.workdir, {artifact::reference, artifact::field}, Stage::Joint);
    const TriangleMesh reference = load_reference(c.opt.workdir);
    const json fj = read_json(c.opt.workdir / artifact::field, "ruled.field");
    const RulingField field = field_from_json(fj.at("field"));
    if (field.size() != reference.num_faces()) throw ParseError("field size does not match the reference");

    JointWeights w;
    w.close = c.cfg.w_close;
    w.barrier = c.cfg.w_barrier;
    w.laplacian = c.cfg.w_laplacian;
    w.length = c.cfg.w_length;
    JointState state = make_joint_state(reference, field, w);
    JointConfig jc;
    jc.nu_min = c.cfg.nu_min;
    jc.nu_max = c.cfg.nu_max;
    jc.lbfgs = lbfgs_options(c.cfg.joint_max_iterations, c.cfg.joint_tolerance);
    jc.threads = c.cfg.threads;
    const JointResult res = optimize_joint(state, ClosestPointIndex(reference), jc);
    save_joint_checkpoint(c.opt.workdir / artifact::joint, state, res);

    json stages = json::array();
    for (const JointStage& st : res.stages) {
        stages.push_back({{"nu", st.nu},
                          {"iterations", st.solver.iterations},
                          {"energy_start", st.solver.energies.front()},
                          {"energy_end", st.solver.energies.back()},
                          {"status", st.solver.status}});
        c.say("joint: nu " + format_double(st.nu) + ", " + std::to_string(st.solver.iterations) + " iterations, E " +
              format_double(st.solver.energies.front()) + " -> " + format_double(st.solver.energies.back()));
    }
    c.warn(res.warnings);
    c.result.feasibility_violations += res.feasibility_violations;
    return {{"nu_max", res.nu_max},
            {"stages", stages},
            {"feasibility_violations", res.feasibility_violations},
            {"warnings", res.warnings}};
}

json run_seams(const StageContext& c)
{
    require(c.opt.workdir, {artifact::reference, artifact::joint}, Stage::Seams);
    const TriangleMesh reference = load_reference(c.opt.workdir);
    const JointCheckpoint ck = load_joint_checkpoint(c.opt.workdir / artifact::joint);
    if (static_cast<int>(ck.vertices.size()) != reference.num_vertices() || ck.field.size() != reference.num_faces() ||
        static_cast<int>(ck.edge_comb.size()) != reference.num_edges())
        throw ParseError("joint checkpoint does not match the reference");
    const TriangleMesh mesh = reference.with_vertices(ck.vertices);

    SeamOptions so;
    so.eps_edge = c.cfg.effective_eps_edge();
    so.eps_area_fraction = c.cfg.eps_area_fraction;
    so.lambda_label = c.cfg.lambda_label;
    const SeamGraph sg = extract_seams(mesh, ck.edge_comb, so);
    c.warn(sg.warnings);
    const TriangleMesh& refined = sg.refinement.mesh;
    RulingField field = transfer_field(mesh, ck.field, sg.refinement);
    const std::vector<bool> seam = sg.seam_mask();
    const PostprocessReport pp = postprocess_field(
        refined, field, sg.region_faces(), seam,
        lbfgs_options(c.cfg.postprocess_max_iterations, c.cfg.postprocess_tolerance));
    c.result.feasibility_violations += pp.solver.feasibility_violations;

    InitialSurfaceOptions io;
    io.spacing = c.cfg.seed_spacing;
    io.max_length_factor = c.cfg.trace_length_factor;
    const InitialSurface init = build_initial_surface(refined, field, seam, sg.patch_labels, io);
    c.warn(init.warnings);
    save_surface_json(c.opt.workdir / artifact::initial_surface, init.surface, "initial");

    json seams = json::array();
    for (int e : sg.seam_edges) {
        const Edge& ed = refined.edge(e);
        seams.push_back({{"edge", e}, {"vertices", {ed.verts[0], ed.verts[1]}}, {"parent_edge", sg.refinement.parent_edge[e]}});
    }
    write_json(c.opt.workdir / artifact::seams, {{"schema", "ruled.seams"},
                                                 {"version", 1},
                                                 {"mesh", mesh_json(refined)},
                                                 {"parent_face", sg.refinement.parent_face},
                                                 {"candidates", sg.candidates},
                                                 {"regions", sg.cleanup.regions.size()},
                                                 {"seam_edges", seams},
                                                 {"patch_labels", sg.patch_labels},
                                                 {"num_patches", sg.num_patches},
                                                 {"field", field_json(field)},
                                                 {"seeds", init.seeds},
                                                 {"skipped_seeds", init.skipped_seeds},
                                                 {"dropped_curves", init.dropped_curves},
                                                 {"warnings", sg.warnings}});
    c.say("seams: " + std::to_string(sg.candidates.size()) + " candidates, " +
          std::to_string(sg.cleanup.regions.size()) + " regions, " + std::to_string(sg.seam_edges.size()) +
          " seam edges, " + std::to_string(sg.num_patches) + " patches, " +
          std::to_string(init.surface.num_rulings()) + " rulings, " + std::to_string(init.dropped_curves) +
          " dropped curves");
    return {{"candidates", sg.candidates.size()},
            {"regions", sg.cleanup.regions.size()},
            {"seam_edges", sg.seam_edges.size()},
            {"patches", sg.num_patches},
            {"postprocess_edges", pp.num_edges},
            {"postprocess_energy", {pp.energy_before, pp.energy_after}},
            {"feasibility_violations", pp.solver.feasibility_violations},
            {"seeds", init.seeds},
            {"rulings", init.surface.num_rulings()},
            {"dropped_curves", init.dropped_curves}};
}

json run_final(const StageContext& c)
{
    require(c.opt.workdir, {artifact::reference, artifact::initial_surface}, Stage::Final);
    const TriangleMesh reference = load_reference(c.opt.workdir);
    PiecewiseRuledSurface surface = load_surface_json(c.opt.workdir / artifact::initial_surface);
    FinalOptions fo;
    fo.lambda1 = c.cfg.lambda1;
    fo.lambda2 = c.cfg.lambda2;
    fo.lambda3 = c.cfg.lambda3;
    fo.lambda4 = c.cfg.lambda4;
    fo.samples_per_ruling = c.cfg.samples_per_ruling;
    fo.neighbors = c.cfg.neighbors;
    fo.max_refreshes = c.cfg.max_refreshes;
    fo.dogleg.max_iterations = c.cfg.dogleg_max_iterations;
    fo.dogleg.gradient_tolerance = c.cfg.dogleg_gradient_tolerance;
    fo.threads = c.cfg.threads;
    json entry = {{"rulings", surface.num_rulings()}};
    if (surface.num_rulings() > 0) {
        const FinalReport rep = optimize_surface(surface, ClosestPointIndex(reference), fo);
        entry["solves"] = rep.solves.size();
        entry["energy"] = {rep.initial.total, rep.final.total};
        entry["skipped_samples"] = rep.skipped_samples;
        c.say("final: " + std::to_string(rep.solves.size()) + " solves, E " + format_double(rep.initial.total) +
              " -> " + format_double(rep.final.total));
    } else {
        c.warn({"final: surface has no rulings"});
    }
    if (c.cfg.densify_factor > 1) surface = densify_rulings(surface, c.cfg.densify_factor);
    save_surface_json(c.opt.workdir / artifact::final_surface, surface, "final");
    save_strips_obj(c.opt.workdir / artifact::strips, surface);
    entry["output_rulings"] = surface.num_rulings();
    return entry;
}

json run_metrics(const StageContext& c, const StageLog& stage_log)
{
    require(c.opt.workdir, {artifact::reference, artifact::final_surface, artifact::seams}, Stage::Metrics);
    const TriangleMesh reference = load_reference(c.opt.workdir);
    const PiecewiseRuledSurface surface = load_surface_json(c.opt.workdir / artifact::final_surface);
    const json seams = read_json(c.opt.workdir / artifact::seams, "ruled.seams");
    const ClosestPointIndex index(reference);
    EvalOptions eo;
    eo.kappa_bar = c.cfg.kappa_bar;
    eo.sampling.samples_per_ruling = c.cfg.samples_per_ruling;
    eo.sampling.strip_density = c.cfg.metric_strip_density;
    eo.sampling.min_samples = c.cfg.metric_min_samples;
    if (surface.num_rulings() == 0) throw PreconditionError("metrics: final surface has no rulings");
    EvalReport rep = evaluate(surface, index, eo);
    rep.dropped_curves = seams.value("dropped_curves", 0);
    rep.color_scale = export_colored_ply(surface, index, c.opt.workdir / artifact::colored);
    if (!c.cfg.deterministic) rep.timings = stage_log.timings();
    save_report_json(rep, c.opt.workdir / artifact::report);
    c.result.report = rep;
    c.say("metrics: eps_avg " + format_double(rep.eps_avg) + ", eps_max " + format_double(rep.eps_max) + ", " +
          std::to_string(rep.patches) + " patches, seam length " + format_double(rep.seam_length));
    return {{"eps_avg", rep.eps_avg}, {"eps_max", rep.eps_max}, {"patches", rep.patches}};
}

} // namespace

// ---- config ----

void PipelineConfig::validate() const
{
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0)) throw PreconditionError(std::string("config: ") + name + " must be positive");
    };
    auto non_negative = [](double v, const char* name) {
        if (!(v >= 0.0)) throw PreconditionError(std::string("config: ") + name + " must be non-negative");
    };
    auto at_least = [](long v, long lo, const char* name) {
        if (v < lo) throw PreconditionError(std::string("config: ") + name + " must be at least " + std::to_string(lo));
    };
    for (auto [v, n] : {std::pair{mu1_start, "mu1_start"}, {mu1_end, "mu1_end"}, {mu2_start, "mu2_start"},
                        {mu2_end, "mu2_end"}, {init_tolerance, "init_tolerance"}, {nu_min, "nu_min"},
                        {joint_tolerance, "joint_tolerance"}, {eps_area_fraction, "eps_area_fraction"},
                        {postprocess_tolerance, "postprocess_tolerance"}, {seed_spacing, "seed_spacing"},
                        {trace_length_factor, "trace_length_factor"},
                        {dogleg_gradient_tolerance, "dogleg_gradient_tolerance"}})
        positive(v, n);
    for (auto [v, n] : {std::pair{mu3, "mu3"}, {nu_max, "nu_max"}, {w_close, "w_close"}, {w_barrier, "w_barrier"},
                        {w_laplacian, "w_laplacian"}, {w_length, "w_length"}, {eps_edge, "eps_edge"},
                        {lambda_label, "lambda_label"}, {lambda1, "lambda1"}, {lambda2, "lambda2"},
                        {lambda3, "lambda3"}, {lambda4, "lambda4"}, {kappa_bar, "kappa_bar"}})
        non_negative(v, n);
    if (nu_max > 0.0 && nu_max < nu_min) throw PreconditionError("config: nu_max must not be below nu_min");
    for (auto [v, lo, n] : {std::tuple{init_ramp_stages, 1, "init_ramp_stages"},
                            {init_max_iterations, 1, "init_max_iterations"},
                            {joint_max_iterations, 1, "joint_max_iterations"},
                            {postprocess_max_iterations, 1, "postprocess_max_iterations"},
                            {samples_per_ruling, 1, "samples_per_ruling"},
                            {neighbors, 1, "neighbors"},
                            {max_refreshes, 1, "max_refreshes"},
                            {dogleg_max_iterations, 1, "dogleg_max_iterations"},
                            {densify_factor, 1, "densify_factor"},
                            {metric_strip_density, 10, "metric_strip_density"},
                            {metric_min_samples, 1000, "metric_min_samples"},
                            {threads, 1, "threads"}})
        at_least(v, lo, n);
}

const std::vector<ConfigKey>& config_keys()
{
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        for (const KeyDef& d : key_defs()) k.push_back(d.key);
        return k;
    }();
    return keys;
}

PipelineConfig parse_config(const std::string& text)
{
    PipelineConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = "config line " + std::to_string(line_no) + ": ";
        if (eq == std::string::npos) throw ParseError(where + "expected key = value");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        const auto def = std::find_if(key_defs().begin(), key_defs().end(),
                                      [&](const KeyDef& d) { return d.key.name == key; });
        if (def == key_defs().end()) throw ParseError(where + "unknown key '" + key + "'");
        if (!seen.insert(key).second) throw ParseError(where + "repeated key '" + key + "'");
        const bool ok = std::visit(
            [&](auto member) {
                auto& slot = cfg.*member;
                using T = std::decay_t<decltype(slot)>;
                if constexpr (std::is_same_v<T, bool>) {
                    if (value == "true" || value == "1") return slot = true, true;
                    if (value == "false" || value == "0") return slot = false, true;
                    return false;
                } else {
                    if constexpr (std::is_same_v<T, double>)
                        if (value == "auto" && (key == "nu_max" || key == "eps_edge")) return slot = 0.0, true;
                    T v{};
                    if (!parse_number(value, v)) return false;
                    slot = v;
                    return true;
                }
            },
            def->member);
        if (!ok) throw ParseError(where + "bad value '" + value + "' for " + key);
    }
    cfg.validate();
    return cfg;
}

PipelineConfig load_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string format_config(const PipelineConfig& cfg)
{
    std::ostringstream out;
    for (const KeyDef& d : key_defs()) {
        std::string value = std::visit(
            [&](auto member) -> std::string {
                const auto& slot = cfg.*member;
                using T = std::decay_t<decltype(slot)>;
                if constexpr (std::is_same_v<T, bool>)
                    return slot ? "true" : "false";
                else if constexpr (std::is_same_v<T, double>)
                    return format_double(slot);
                else
                    return std::to_string(slot);
            },
            d.member);
        out << "# " << d.key.description << " [" << d.key.unit << "]\n" << d.key.name << " = " << value << '\n';
    }
    return out.str();
}

bool operator==(const PipelineConfig& a, const PipelineConfig& b)
{
    for (const KeyDef& d : key_defs())
        if (!std::visit([&](auto member) { return a.*member == b.*member; }, d.member)) return false;
    return true;
}

Stage parse_stage(const std::string& name)
{
    for (Stage s : {Stage::All, Stage::Init, Stage::Joint, Stage::Seams, Stage::Final, Stage::Metrics})
        if (name == to_string(s)) return s;
    throw PreconditionError("unknown stage '" + name + "'");
}

const char* to_string(Stage s)
{
    switch (s) {
    case Stage::All: return "all";
    case Stage::Init: return "init";
    case Stage::Joint: return "joint";
    case Stage::Seams: return "seams";
    case Stage::Final: return "final";
    case Stage::Metrics: return "metrics";
    }
    return "?";
}

RunResult run_pipeline(const RunOptions& opt, std::ostream* log)
{
    opt.config.validate();
    fs::create_directories(opt.workdir);
    fs::remove(opt.workdir / artifact::error);
    RunResult result;
    const StageContext ctx{opt, opt.config, log, result};
    StageLog stage_log(opt.workdir / artifact::log);

    std::vector<Stage> stages;
    if (opt.stage == Stage::All)
        stages = {Stage::Init, Stage::Joint, Stage::Seams, Stage::Final, Stage::Metrics};
    else
        stages = {opt.stage};

    for (Stage s : stages) {
        const auto t0 = std::chrono::steady_clock::now();
        json entry;
        try {
            switch (s) {
            case Stage::Init: entry = run_init(ctx); break;
            case Stage::Joint: entry = run_joint(ctx); break;
            case Stage::Seams: entry = run_seams(ctx); break;
            case Stage::Final: entry = run_final(ctx); break;
            case Stage::Metrics: entry = run_metrics(ctx, stage_log); break;
            case Stage::All: break;
            }
        } catch (const std::exception& e) {
            write_error_json(opt.workdir / artifact::error, to_string(s), e);
            throw;
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!opt.config.deterministic) entry["seconds"] = seconds;
        stage_log.record(s, std::move(entry));
        result.stages.push_back(s);
    }
    return result;
}

std::string error_kind(const std::exception& e)
{
    if (dynamic_cast<const StageDependencyError*>(&e)) return "stage_dependency_missing";
    if (dynamic_cast<const ParseError*>(&e)) return "parse";
    if (dynamic_cast<const TopologyError*>(&e)) return "topology";
    if (dynamic_cast<const DegeneracyError*>(&e)) return "degeneracy";
    if (dynamic_cast<const PreconditionError*>(&e)) return "precondition";
    if (dynamic_cast<const IoError*>(&e)) return "io";
    return "internal";
}

void write_error_json(const fs::path& path, const std::string& stage, const std::exception& e)
{
    write_json(path, {{"schema", "ruled.error"}, {"version", 1}, {"stage", stage}, {"kind", error_kind(e)},
                      {"message", e.what()}});
}

std::optional<int> thread_override_from_env()
{
    const char* v = std::getenv("RULED_THREADS");
    if (!v) return std::nullopt;
    int n = 0;
    if (!parse_number(std::string(v), n) || n < 1) return std::nullopt;
    return n;
}

} // namespace ruled

#include "pbc/scenario.hpp"

#include <cstdio>
#include <fstream>
#include <map>

namespace pbc {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

void put_vector(std::ostream& os, const Vector& v, int dim) {
    for (int i = 0; i < dim; ++i) os << ',' << (i < v.size() ? format_double(v(i)) : std::string());
}

void put_header(std::ostream& os, const char* prefix, int dim) {
    for (int i = 0; i < dim; ++i) os << ',' << prefix << i;
}

}  // namespace

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    const int n = traj.x.empty() ? 0 : static_cast<int>(traj.x[0].size());
    const int m = traj.u.empty() ? 0 : static_cast<int>(traj.u[0].size());
    const int p = traj.yhat.empty() ? 0 : static_cast<int>(traj.yhat[0].size());
    os << 'k';
    put_header(os, "x", n);
    put_header(os, "u", m);
    put_header(os, "yhat", p);
    put_header(os, "xref", n);
    os << '\n';
    const Vector none;
    for (std::size_t k = 0; k < traj.x.size(); ++k) {
        const bool has_step = k < traj.u.size();
        os << k;
        put_vector(os, traj.x[k], n);
        put_vector(os, has_step ? traj.u[k] : none, m);
        put_vector(os, has_step ? traj.yhat[k] : none, p);
        put_vector(os, has_step ? traj.x_ref[k] : none, n);
        os << '\n';
    }
}

void write_error_grid_csv(std::ostream& os, const ErrorGrid& grid) {
    const int p = grid.points.empty() ? 0 : static_cast<int>(grid.points[0].y.size());
    put_header(os, "y", p);
    os << ",error,coverage\n";
    for (const GridPoint& g : grid.points) {
        std::string line;
        for (int i = 0; i < p; ++i) line += (i ? "," : "") + format_double(g.y(i));
        os << line << ',' << format_double(g.error) << ',' << (std::isnan(g.coverage) ? "" : format_double(g.coverage))
           << '\n';
    }
}

void write_responses_csv(std::ostream& os, const SystemResponses& phi) {
    os << "block,tap,row,col,value\n";
    auto dump = [&os](const char* name, int tap, const Matrix& M) {
        for (int j = 0; j < M.cols(); ++j)
            for (int i = 0; i < M.rows(); ++i)
                if (M(i, j) != 0.0)
                    os << name << ',' << tap << ',' << i << ',' << j << ',' << format_double(M(i, j)) << '\n';
    };
    for (int k = 1; k <= phi.horizon(); ++k) {
        dump("xw", k, phi.xw.tap(k));
        dump("xn", k, phi.xn.tap(k));
        dump("uw", k, phi.uw.tap(k));
        dump("un", k, phi.un.tap(k));
    }
    dump("tail_x", phi.horizon() + 1, phi.tail_x);
    dump("tail_u", phi.horizon() + 1, phi.tail_u);
}

namespace {

const std::vector<std::string> kStages{"collect", "synthesize", "rollout", "grid", "verify"};

void validate_pipeline(const Scenario& s, const std::vector<std::string>& pipeline) {
    int last = -1;
    bool collected = false, synthesized = false;
    for (const std::string& stage : pipeline) {
        const auto it = std::find(kStages.begin(), kStages.end(), stage);
        if (it == kStages.end()) throw InputError("pipeline: unknown stage '" + stage + "'");
        const int idx = static_cast<int>(it - kStages.begin());
        if (idx <= last) throw InputError("pipeline: stage '" + stage + "' is out of order or repeated");
        last = idx;
        const bool learned = s.predictor.kind != "true";
        if ((stage == "rollout" || stage == "grid") && learned && !collected)
            throw InputError("pipeline: '" + stage + "' with a learned predictor needs 'collect' first");
        if (stage == "rollout" && s.rollout.controller == "sls" && !synthesized)
            throw InputError("pipeline: 'rollout' with the sls controller needs 'synthesize' first");
        collected |= stage == "collect";
        synthesized |= stage == "synthesize";
    }
}

class Bundle {
public:
    explicit Bundle(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

    std::ofstream open(const std::string& name) {
        std::ofstream os(dir_ / name, std::ios::binary);
        if (!os) throw InputError("cannot write '" + (dir_ / name).string() + "'");
        files.push_back(name);
        return os;
    }
    void json(const std::string& name, const Json& j) { open(name) << j.dump(2) << '\n'; }

    std::vector<std::string> files;

private:
    std::filesystem::path dir_;
};

Json synthesis_summary(const SynthesizedController& c, double r_max_ref) {
    return Json{{"horizon", c.phi.horizon()},
                {"objective", c.objective},
                {"l1_objective", c.l1_objective},
                {"residual", c.residual},
                {"duality_gap", c.duality_gap},
                {"noise_scale", c.noise_scale},
                {"noise_cost_l1", noise_cost_l1(c.plant, c.phi)},
                {"r_max", r_max_of_responses(c, r_max_ref)},
                {"lp_rows", c.lp_rows},
                {"lp_cols", c.lp_cols},
                {"lp_iterations", c.lp_iterations}};
}

Json region_json(const std::vector<RegionSummary>& summary) {
    Json out = Json::array();
    for (const RegionSummary& r : summary)
        out.push_back({{"region", r.region}, {"count", r.count}, {"median", r.median}, {"p99", r.p99}});
    return out;
}

}  // namespace

RunResult run_scenario(const Scenario& s, const std::vector<std::string>& pipeline,
                       const std::filesystem::path& out_dir) {
    RunResult result;
    Bundle bundle(out_dir);
    Json metrics = Json::object();
    std::string failed_stage, error;

    std::shared_ptr<ObservationMap> map;
    Dataset data;
    std::optional<SynthesizedController> ctrl;
    try {
        failed_stage = "pipeline";
        validate_pipeline(s, pipeline);
        if (!pipeline.empty()) map = make_map(s);
        for (const std::string& stage : pipeline) {
            failed_stage = stage;
            if (stage == "collect") {
                data = collect_for_scenario(s, *map);
                auto os = bundle.open("dataset.csv");
                write_dataset_csv(os, data);
                bundle.open("dataset.csv.json") << dataset_sidecar_json(data) << '\n';
                metrics["collect"] = {{"T", data.size()}, {"protocol", s.sampling.protocol}};
            } else if (stage == "synthesize") {
                ctrl = sls_synthesize(make_augmentation(s), s.controller.horizon, s.controller.eps_h);
                auto os = bundle.open("responses.csv");
                write_responses_csv(os, ctrl->phi);
                const Json summary = synthesis_summary(*ctrl, make_reference(s).r_max_ref());
                bundle.json("synthesis.json", summary);
                metrics["synthesize"] = summary;
            } else if (stage == "rollout") {
                const LinearSystem<double> sys = make_system(s);
                const auto predictor = make_predictor(s, data, map);
                std::unique_ptr<TrackingController> k;
                if (s.rollout.controller == "sls")
                    k = std::make_unique<SlsTrackingController>(realize_controller(*ctrl));
                else
                    k = std::make_unique<ObserverTrackingController>(make_sampling_controller(s));
                RolloutOptions opt;
                opt.T_sim = s.rollout.T_sim;
                opt.region = s.rollout.region;
                opt.process_noise = s.noise.process;
                opt.seed = derive_seed(s.seed, 0x726f6c6c);
                const Trajectory traj = rollout(sys, *map, predictor.get(), *k, make_reference(s), opt);
                auto os = bundle.open("trajectory.csv");
                write_trajectory_csv(os, traj);
                metrics["rollout"] = {{"finite_horizon_cost", tracking_cost(traj, s.system.Q, s.system.R)},
                                      {"escaped", traj.escaped},
                                      {"escape_time", traj.escape_time},
                                      {"aborted", traj.aborted},
                                      {"steps", traj.steps()},
                                      {"max_perception_error", traj.max_perception_error}};
            } else if (stage == "grid") {
                const auto predictor = make_predictor(s, data, map);
                const auto* nw = dynamic_cast<const NwRegressor*>(predictor.get());
                const ErrorGrid grid = evaluate_error_grid(*predictor, *map, s.grid, nw);
                auto os = bundle.open("error_grid.csv");
                write_error_grid_csv(os, grid);
                metrics["grid"] = {{"points", grid.points.size()}, {"regions", region_json(grid.summary)}};
            } else if (stage == "verify") {
                Json reports = Json::array();
                for (const std::string& suite : s.verify.suites) {
                    const VerificationReport rep = suite == "prop4" && ctrl
                                                       ? verify_prop4(s, *ctrl, s.verify.trials)
                                                       : verify_bounds(s, suite, s.verify.trials);
                    const Json j = report_to_json(rep);
                    bundle.json("verify_" + suite + ".json", j);
                    result.bounds_failed |= !rep.passed;
                    reports.push_back({{"suite", suite}, {"passed", rep.passed}, {"frequency", rep.frequency}});
                }
                metrics["verify"] = reports;
            }
        }
        failed_stage.clear();
    } catch (const std::exception& e) {
        result.failed = true;
        error = e.what();
    }

    result.report = Json{{"report_version", 1},
                         {"scenario", s.name},
                         {"seed", s.seed},
                         {"pipeline", pipeline},
                         {"status", result.failed ? "failed" : (result.bounds_failed ? "bounds_failed" : "ok")},
                         {"manifest", bundle.files},
                         {"metrics", metrics}};
    if (result.failed) result.report["error"] = {{"stage", failed_stage}, {"message", error}};
    result.files = bundle.files;
    std::ofstream(out_dir / "report.json", std::ios::binary) << result.report.dump(2) << '\n';
    return result;
}

}  // namespace pbc

// Command line front end: collect, synthesize, rollout, grid, verify, run.
// Exit codes: 0 success, 2 bound verification failed, 1 error.

#include "pbc/scenario.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

using namespace pbc;

struct Common {
    std::string scenario;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--scenario", c.scenario, "scenario JSON file")->required()->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "override the scenario seed");
    app->add_option("--out-dir", c.out_dir, "directory for artifacts");
}

Scenario load(const Common& c) {
    Scenario s = load_scenario(c.scenario);
    if (c.seed) s.seed = *c.seed;
    return s;
}

std::filesystem::path output_path(const Common& c, const std::string& out, const std::string& fallback) {
    std::filesystem::create_directories(c.out_dir);
    return std::filesystem::path(c.out_dir) / (out.empty() ? fallback : out);
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot write '" + path.string() + "'");
    return os;
}

void emit_json(const std::filesystem::path& path, const Json& j) {
    open_out(path) << j.dump(2) << '\n';
    std::cout << j.dump(2) << '\n';
}

Dataset dataset_for(const Scenario& s, const ObservationMap& map, const std::string& dataset_path) {
    if (s.predictor.kind == "true") return Dataset{};
    return dataset_path.empty() ? collect_for_scenario(s, map) : read_dataset(dataset_path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Perception-based control toolkit"};
    app.require_subcommand(1);

    Common collect_c, synth_c, roll_c, grid_c, verify_c, run_c;

    auto* collect = app.add_subcommand("collect", "sample a training dataset");
    add_common(collect, collect_c);
    std::optional<int> collect_T;
    std::optional<double> collect_rbar;
    std::string collect_out;
    collect->add_option("--T", collect_T, "dataset size")->check(CLI::PositiveNumber);
    collect->add_option("--rbar", collect_rbar, "uniform sampling radius (selects the uniform protocol)")
        ->check(CLI::PositiveNumber);
    collect->add_option("--out", collect_out, "dataset CSV name");

    auto* synth = app.add_subcommand("synthesize", "synthesize a tracking controller");
    add_common(synth, synth_c);
    std::optional<int> horizon;
    std::optional<double> eps_h, radius;
    std::string synth_out;
    synth->add_option("--horizon", horizon, "FIR horizon")->check(CLI::PositiveNumber);
    synth->add_option("--eps-h", eps_h, "perception error scale")->check(CLI::NonNegativeNumber);
    synth->add_option("--radius", radius, "safe radius (adds the robust constraint)")->check(CLI::PositiveNumber);
    synth->add_option("--out", synth_out, "responses CSV name");

    auto* roll = app.add_subcommand("rollout", "closed-loop rollout with a perception predictor");
    add_common(roll, roll_c);
    std::optional<std::string> predictor;
    std::optional<int> T_sim;
    std::string roll_out, roll_dataset;
    roll->add_option("--predictor", predictor, "nw | krr | true")->check(CLI::IsMember({"nw", "krr", "true"}));
    roll->add_option("--T-sim", T_sim, "rollout length")->check(CLI::PositiveNumber);
    roll->add_option("--dataset", roll_dataset, "training CSV (collected when omitted)");
    roll->add_option("--out", roll_out, "trajectory CSV name");

    auto* grid = app.add_subcommand("grid", "evaluate the learned map on a grid");
    add_common(grid, grid_c);
    std::optional<std::string> grid_predictor;
    std::string grid_out, grid_dataset;
    grid->add_option("--predictor", grid_predictor, "nw | krr | true")->check(CLI::IsMember({"nw", "krr", "true"}));
    grid->add_option("--dataset", grid_dataset, "training CSV (collected when omitted)");
    grid->add_option("--out", grid_out, "grid CSV name");

    auto* verify = app.add_subcommand("verify", "run a bound-verification suite");
    add_common(verify, verify_c);
    std::string suite;
    std::optional<int> trials;
    verify->add_option("--suite", suite, "lemma1 | lemma2 | thm3 | prop4 | rate")
        ->required()
        ->check(CLI::IsMember({"lemma1", "lemma2", "thm3", "prop4", "rate"}));
    verify->add_option("--trials", trials, "number of trials (at least 100)");

    auto* run = app.add_subcommand("run", "run a pipeline and write a report bundle");
    add_common(run, run_c);
    std::vector<std::string> pipeline{"collect", "synthesize", "rollout", "grid", "verify"};
    run->add_option("--pipeline", pipeline, "stages in order")->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    try {
        if (collect->parsed()) {
            Scenario s = load(collect_c);
            if (collect_T) s.sampling.T = *collect_T;
            if (collect_rbar) {
                s.sampling.protocol = "uniform";
                s.sampling.rbar = *collect_rbar;
            }
            const auto map = make_map(s);
            const Dataset data = collect_for_scenario(s, *map);
            const auto path = output_path(collect_c, collect_out, "dataset.csv");
            auto os = open_out(path);
            write_dataset_csv(os, data);
            open_out(path.string() + ".json") << dataset_sidecar_json(data) << '\n';
            std::cout << path.string() << '\n';
            return 0;
        }
        if (synth->parsed()) {
            Scenario s = load(synth_c);
            const int H = horizon.value_or(s.controller.horizon);
            const double eps = eps_h.value_or(s.controller.eps_h);
            const AugmentedSystem plant = make_augmentation(s);
            const double r_max_ref = make_reference(s).r_max_ref();
            const SynthesizedController c = radius ? robust_sls_synthesize(plant, H, eps, *radius, r_max_ref)
                                                   : sls_synthesize(plant, H, eps);
            const auto path = output_path(synth_c, synth_out, "responses.csv");
            auto os = open_out(path);
            write_responses_csv(os, c.phi);
            Json j{{"horizon", H},
                   {"objective", c.objective},
                   {"residual", c.residual},
                   {"duality_gap", c.duality_gap},
                   {"r_max", r_max_of_responses(c, r_max_ref)},
                   {"noise_cost_l1", noise_cost_l1(c.plant, c.phi)}};
            if (radius) j["radius"] = *radius;
            emit_json(path.string() + ".json", j);
            return 0;
        }
        if (roll->parsed()) {
            Scenario s = load(roll_c);
            if (predictor) s.predictor.kind = *predictor;
            if (T_sim) s.rollout.T_sim = *T_sim;
            const LinearSystem<double> sys = make_system(s);
            const auto map = make_map(s);
            const Dataset data = dataset_for(s, *map, roll_dataset);
            const auto pred = make_predictor(s, data, map);
            std::unique_ptr<TrackingController> k;
            if (s.rollout.controller == "sls")
                k = std::make_unique<SlsTrackingController>(realize_controller(
                    sls_synthesize(make_augmentation(s), s.controller.horizon, s.controller.eps_h)));
            else
                k = std::make_unique<ObserverTrackingController>(make_sampling_controller(s));
            RolloutOptions opt;
            opt.T_sim = s.rollout.T_sim;
            opt.region = s.rollout.region;
            opt.process_noise = s.noise.process;
            opt.seed = derive_seed(s.seed, 0x726f6c6c);
            const Trajectory traj = rollout(sys, *map, pred.get(), *k, make_reference(s), opt);
            const auto path = output_path(roll_c, roll_out, "trajectory.csv");
            auto os = open_out(path);
            write_trajectory_csv(os, traj);
            emit_json(path.string() + ".json",
                      Json{{"finite_horizon_cost", tracking_cost(traj, s.system.Q, s.system.R)},
                           {"escaped", traj.escaped},
                           {"escape_time", traj.escape_time},
                           {"aborted", traj.aborted},
                           {"max_perception_error", traj.max_perception_error}});
            return 0;
        }
        if (grid->parsed()) {
            Scenario s = load(grid_c);
            if (grid_predictor) s.predictor.kind = *grid_predictor;
            const auto map = make_map(s);
            const Dataset data = dataset_for(s, *map, grid_dataset);
            const auto pred = make_predictor(s, data, map);
            const ErrorGrid g =
                evaluate_error_grid(*pred, *map, s.grid, dynamic_cast<const NwRegressor*>(pred.get()));
            const auto path = output_path(grid_c, grid_out, "error_grid.csv");
            auto os = open_out(path);
            write_error_grid_csv(os, g);
            Json regions = Json::array();
            for (const RegionSummary& r : g.summary)
                regions.push_back({{"region", r.region}, {"count", r.count}, {"median", r.median}, {"p99", r.p99}});
            emit_json(path.string() + ".json", Json{{"regions", regions}});
            return 0;
        }
        if (verify->parsed()) {
            const Scenario s = load(verify_c);
            const VerificationReport rep = verify_bounds(s, suite, trials.value_or(s.verify.trials));
            emit_json(output_path(verify_c, "", "verify_" + suite + ".json"), report_to_json(rep));
            return rep.passed ? 0 : 2;
        }
        if (run->parsed()) {
            const Scenario s = load(run_c);
            const RunResult r = run_scenario(s, pipeline, run_c.out_dir);
            std::cout << r.report.dump(2) << '\n';
            if (r.failed) return 1;
            return r.bounds_failed ? 2 : 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

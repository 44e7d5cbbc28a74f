#pragma once

// Scenario files, experiment orchestration and bound-verification suites.

#include "pbc/closed_loop.hpp"
#include "pbc/lin_sys.hpp"
#include "pbc/perception.hpp"
#include "pbc/rng.hpp"
#include "pbc/sampling.hpp"
#include "pbc/synthesis.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pbc {

using Json = nlohmann::ordered_json;

constexpr int kScenarioVersion = 1;

struct SystemSpec {
    std::string preset;  // "hovercraft" or empty for explicit matrices
    Matrix A, B, C;
    Matrix Q, R;         // cost weights (diagonal)
    Matrix W, V;         // Kalman design covariances
};

struct MapSpec {
    std::string kind = "sinusoidal";  // "sinusoidal" | "raster"
    double box = 3.0;
    std::uint64_t seed = 1;
};

struct NoiseConfig {
    NoiseSpec label{0.01, 1.0};  // eta on training labels
    double sigma_0 = 0.0;        // reset radius
    NoiseSpec process{0.0, 1.0}; // w during rollouts
};

struct ControllerSpec {
    int horizon = 40;
    double sigma_w = 0.01;
    double delta = 0.13;
    double eps_h = 0.05;  // noise-channel scale used in synthesis
};

struct SamplingSpec {
    std::string protocol = "circle";  // "circle" (training circles) | "uniform" (resets)
    int T = 2000;
    double rbar = 2.5;                // uniform protocol only
};

struct PredictorSpec {
    std::string kind = "nw";          // "nw" | "krr" | "true"
    std::string kernel = "triangular";
    double bandwidth = 0.2;
    double krr_alpha = 10.0;
    double krr_lambda = 0.111;
};

struct ReferenceSpec {
    double amp_x = 1.9;
    double amp_y = 2.0;
    int period = 100;
    double delta = 0.13;
};

struct RolloutSpec {
    int T_sim = 400;
    double region = 2.5;
    std::string controller = "observer";  // "observer" | "sls"
};

struct GridSpec {
    int per_side = 50;
    double radius = 2.5;
    std::string norm = "inf";  // "inf" | "2"
    double inner_lo = 1.85, inner_hi = 2.1;
    double outer_lo = 1.25, outer_hi = 2.75;
};

struct VerifySpec {
    std::vector<std::string> suites;
    int trials = 100;
    double delta = 0.1;
    int T = 2000;
    double bandwidth = 0.3;
    double rbar = 1.0;            // lemma1 collection radius
    std::vector<double> point;    // lemma1 evaluation point (empty: origin)
    double r = 1.0;               // lemma2 / thm3 certified radius
    int grid_per_side = 15;
    std::vector<int> T_list{500, 1000, 2000, 4000, 8000};
    int seeds = 10;
    double r_max_ref = 0.5;       // prop4 reference class
    double safe_radius = 2.5;     // prop4 region
};

struct Scenario {
    int version = kScenarioVersion;
    std::string name;
    SystemSpec system;
    MapSpec map;
    NoiseConfig noise;
    ControllerSpec controller;
    SamplingSpec sampling;
    PredictorSpec predictor;
    ReferenceSpec reference;
    RolloutSpec rollout;
    GridSpec grid;
    VerifySpec verify;
    std::uint64_t seed = 0;
};

/// The hovercraft preset: double integrators in two axes with position outputs.
SystemSpec hovercraft_system();

Scenario parse_scenario(const Json& j);
Scenario load_scenario(const std::string& path);
Json scenario_to_json(const Scenario& s);

/// Training circles: radius steps through 1.75, 1.875, 2.0, 2.125 every 100 steps.
Vector training_reference(int k);

// Builders used by every stage. All are pure functions of the scenario.
LinearSystem<double> make_system(const Scenario& s);
std::shared_ptr<ObservationMap> make_map(const Scenario& s);
StaticOutputController<double> make_sampling_controller(const Scenario& s);
Dataset collect_for_scenario(const Scenario& s, const ObservationMap& map);
std::unique_ptr<Predictor> make_predictor(const Scenario& s, const Dataset& data,
                                          std::shared_ptr<const ObservationMap> map);
AugmentedSystem make_augmentation(const Scenario& s);
ReferenceSignal make_reference(const Scenario& s);

struct GridPoint {
    Vector y;
    double error = 0.0;
    double coverage = 0.0;  // NaN when the predictor has no notion of coverage
};

struct RegionSummary {
    std::string region;
    int count = 0;
    double median = 0.0;
    double p99 = 0.0;
};

struct ErrorGrid {
    std::vector<GridPoint> points;
    std::vector<RegionSummary> summary;  // "inner", "outer"
};

/// Errors of `predictor` on a per_side^2 grid over [-radius, radius]^2. Coverage
/// is reported when `nw` is given.
ErrorGrid evaluate_error_grid(const Predictor& predictor, const ObservationMap& map, const GridSpec& grid,
                              const NwRegressor* nw = nullptr);

struct VerificationReport {
    std::string suite;
    int trials = 0;
    int violations = 0;
    double frequency = 0.0;
    double delta = 0.0;
    double ci_low = 0.0, ci_high = 0.0;  // Wilson 95% interval of the frequency
    double threshold = 0.0;              // allowed frequency
    bool passed = false;
    Json details = Json::object();
};

/// suite: lemma1 | lemma2 | thm3 | prop4 | rate. trials must be at least 100
/// (for rate: repetitions per T come from the scenario).
VerificationReport verify_bounds(const Scenario& s, const std::string& suite, int trials);

/// prop4 against an already synthesized controller: paired rollouts with
/// learned and exact perception on random-walk references.
VerificationReport verify_prop4(const Scenario& s, const SynthesizedController& ctrl, int trials);

Json report_to_json(const VerificationReport& r);

/// Observation map constants and the decay envelope of the sampling loop.
struct SamplingConstants {
    double lg = 1.0, lh = 1.0;
    DecayEnvelope envelope;
};
SamplingConstants sampling_constants(const Scenario& s, const ObservationMap& map);

// ---------------------------------------------------------------------------
// Pipeline.

struct RunResult {
    Json report;                      // manifest + metrics
    std::vector<std::string> files;   // written artifacts, relative to out_dir
    bool bounds_failed = false;
    bool failed = false;
};

/// Stages: collect, synthesize, rollout, grid, verify. Every artifact is written
/// under out_dir; the report (report.json) lists them.
RunResult run_scenario(const Scenario& s, const std::vector<std::string>& pipeline,
                       const std::filesystem::path& out_dir);

// Persistence helpers shared with the command line tool.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
void write_error_grid_csv(std::ostream& os, const ErrorGrid& grid);
void write_responses_csv(std::ostream& os, const SystemResponses& phi);
std::string format_double(double v);

}  // namespace pbc

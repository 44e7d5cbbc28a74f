#include "pbc/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace pbc {

namespace {

// Reads j[key] into out when present; type mismatches name the field.
template <typename T>
void read(const Json& j, const char* key, const std::string& path, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw InputError("scenario: field '" + path + key + "' has the wrong type");
    }
}

const Json& section(const Json& j, const char* key) {
    static const Json empty = Json::object();
    if (!j.contains(key)) return empty;
    if (!j.at(key).is_object()) throw InputError(std::string("scenario: field '") + key + "' must be an object");
    return j.at(key);
}

Matrix read_matrix(const Json& j, const std::string& field) {
    if (!j.is_array() || j.empty()) throw InputError("scenario: field '" + field + "' must be a nonempty array of rows");
    const int rows = static_cast<int>(j.size());
    if (!j[0].is_array() || j[0].empty()) throw InputError("scenario: field '" + field + "' must contain rows");
    const int cols = static_cast<int>(j[0].size());
    Matrix M(rows, cols);
    for (int i = 0; i < rows; ++i) {
        if (!j[i].is_array() || static_cast<int>(j[i].size()) != cols)
            throw InputError("scenario: field '" + field + "' has ragged rows");
        for (int c = 0; c < cols; ++c) {
            if (!j[i][c].is_number()) throw InputError("scenario: field '" + field + "' must hold numbers");
            M(i, c) = j[i][c].get<double>();
        }
    }
    return M;
}

Json write_matrix(const Matrix& M) {
    Json rows = Json::array();
    for (int i = 0; i < M.rows(); ++i) {
        Json row = Json::array();
        for (int c = 0; c < M.cols(); ++c) row.push_back(M(i, c));
        rows.push_back(row);
    }
    return rows;
}

void positive(double v, const std::string& field) {
    if (!(v > 0)) throw InputError("scenario: field '" + field + "' must be positive");
}

void one_of(const std::string& v, const std::set<std::string>& allowed, const std::string& field) {
    if (!allowed.count(v)) throw InputError("scenario: field '" + field + "' has unknown value '" + v + "'");
}

}  // namespace

SystemSpec hovercraft_system() {
    SystemSpec s;
    s.preset = "hovercraft";
    s.A.resize(4, 4);
    s.A << 1, 0.1, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0.1, 0, 0, 0, 1;
    s.B = Matrix::Zero(4, 2);
    s.B(1, 0) = 1;
    s.B(3, 1) = 1;
    s.C = Matrix::Zero(2, 4);
    s.C(0, 0) = 1;
    s.C(1, 2) = 1;
    s.Q = s.C.transpose() * s.C;
    s.R = Matrix::Identity(2, 2);
    s.W = Matrix::Identity(4, 4);
    s.V = 0.1 * Matrix::Identity(2, 2);
    return s;
}

Scenario parse_scenario(const Json& j) {
    if (!j.is_object()) throw InputError("scenario: top level must be an object");
    Scenario s;
    if (!j.contains("version")) throw InputError("scenario: field 'version' is missing");
    read(j, "version", "", s.version);
    if (s.version != kScenarioVersion)
        throw InputError("scenario: field 'version' must be " + std::to_string(kScenarioVersion));
    if (!j.contains("seed")) throw InputError("scenario: field 'seed' is missing");
    read(j, "seed", "", s.seed);
    read(j, "name", "", s.name);

    const Json& sys = section(j, "system");
    read(sys, "preset", "system.", s.system.preset);
    if (!s.system.preset.empty()) {
        one_of(s.system.preset, {"hovercraft"}, "system.preset");
        s.system = hovercraft_system();
    } else {
        for (const char* key : {"A", "B", "C"})
            if (!sys.contains(key)) throw InputError(std::string("scenario: field 'system.") + key + "' is missing");
        s.system.A = read_matrix(sys.at("A"), "system.A");
        s.system.B = read_matrix(sys.at("B"), "system.B");
        s.system.C = read_matrix(sys.at("C"), "system.C");
        const int n = static_cast<int>(s.system.A.rows());
        const int m = static_cast<int>(s.system.B.cols());
        const int p = static_cast<int>(s.system.C.rows());
        s.system.Q = sys.contains("Q") ? read_matrix(sys.at("Q"), "system.Q")
                                       : Matrix(s.system.C.transpose() * s.system.C);
        s.system.R = sys.contains("R") ? read_matrix(sys.at("R"), "system.R") : Matrix(Matrix::Identity(m, m));
        s.system.W = sys.contains("W") ? read_matrix(sys.at("W"), "system.W") : Matrix(Matrix::Identity(n, n));
        s.system.V = sys.contains("V") ? read_matrix(sys.at("V"), "system.V") : Matrix(0.1 * Matrix::Identity(p, p));
    }

    const Json& map = section(j, "map");
    read(map, "kind", "map.", s.map.kind);
    read(map, "box", "map.", s.map.box);
    read(map, "seed", "map.", s.map.seed);
    one_of(s.map.kind, {"sinusoidal", "raster"}, "map.kind");
    positive(s.map.box, "map.box");

    const Json& noise = section(j, "noise");
    read(noise, "label_std", "noise.", s.noise.label.std);
    read(noise, "label_clip", "noise.", s.noise.label.clip);
    read(noise, "sigma_0", "noise.", s.noise.sigma_0);
    read(noise, "process_std", "noise.", s.noise.process.std);
    read(noise, "process_clip", "noise.", s.noise.process.clip);
    require(s.noise.label.std >= 0 && s.noise.process.std >= 0, "scenario: noise std must be nonnegative");
    positive(s.noise.label.clip, "noise.label_clip");
    positive(s.noise.process.clip, "noise.process_clip");
    require(s.noise.sigma_0 >= 0, "scenario: field 'noise.sigma_0' must be nonnegative");

    const Json& ctrl = section(j, "controller");
    read(ctrl, "horizon", "controller.", s.controller.horizon);
    read(ctrl, "sigma_w", "controller.", s.controller.sigma_w);
    read(ctrl, "delta", "controller.", s.controller.delta);
    read(ctrl, "eps_h", "controller.", s.controller.eps_h);
    require(s.controller.horizon >= 1, "scenario: field 'controller.horizon' must be >= 1");

    const Json& samp = section(j, "sampling");
    read(samp, "protocol", "sampling.", s.sampling.protocol);
    read(samp, "T", "sampling.", s.sampling.T);
    read(samp, "rbar", "sampling.", s.sampling.rbar);
    one_of(s.sampling.protocol, {"circle", "uniform"}, "sampling.protocol");
    require(s.sampling.T >= 1, "scenario: field 'sampling.T' must be >= 1");
    positive(s.sampling.rbar, "sampling.rbar");

    const Json& pred = section(j, "predictor");
    read(pred, "kind", "predictor.", s.predictor.kind);
    read(pred, "kernel", "predictor.", s.predictor.kernel);
    read(pred, "bandwidth", "predictor.", s.predictor.bandwidth);
    read(pred, "krr_alpha", "predictor.", s.predictor.krr_alpha);
    read(pred, "krr_lambda", "predictor.", s.predictor.krr_lambda);
    one_of(s.predictor.kind, {"nw", "krr", "true"}, "predictor.kind");
    one_of(s.predictor.kernel, {"triangular", "epanechnikov", "box"}, "predictor.kernel");
    positive(s.predictor.bandwidth, "predictor.bandwidth");

    const Json& ref = section(j, "reference");
    read(ref, "amp_x", "reference.", s.reference.amp_x);
    read(ref, "amp_y", "reference.", s.reference.amp_y);
    read(ref, "period", "reference.", s.reference.period);
    read(ref, "delta", "reference.", s.reference.delta);
    require(s.reference.period >= 1, "scenario: field 'reference.period' must be >= 1");

    const Json& roll = section(j, "rollout");
    read(roll, "T_sim", "rollout.", s.rollout.T_sim);
    read(roll, "region", "rollout.", s.rollout.region);
    read(roll, "controller", "rollout.", s.rollout.controller);
    require(s.rollout.T_sim >= 1, "scenario: field 'rollout.T_sim' must be >= 1");
    positive(s.rollout.region, "rollout.region");
    one_of(s.rollout.controller, {"observer", "sls"}, "rollout.controller");

    const Json& grid = section(j, "grid");
    read(grid, "per_side", "grid.", s.grid.per_side);
    read(grid, "radius", "grid.", s.grid.radius);
    read(grid, "norm", "grid.", s.grid.norm);
    read(grid, "inner_lo", "grid.", s.grid.inner_lo);
    read(grid, "inner_hi", "grid.", s.grid.inner_hi);
    read(grid, "outer_lo", "grid.", s.grid.outer_lo);
    read(grid, "outer_hi", "grid.", s.grid.outer_hi);
    require(s.grid.per_side >= 1, "scenario: field 'grid.per_side' must be >= 1");
    positive(s.grid.radius, "grid.radius");
    one_of(s.grid.norm, {"inf", "2"}, "grid.norm");

    const Json& ver = section(j, "verify");
    read(ver, "suites", "verify.", s.verify.suites);
    read(ver, "trials", "verify.", s.verify.trials);
    read(ver, "delta", "verify.", s.verify.delta);
    read(ver, "T", "verify.", s.verify.T);
    read(ver, "bandwidth", "verify.", s.verify.bandwidth);
    read(ver, "rbar", "verify.", s.verify.rbar);
    read(ver, "point", "verify.", s.verify.point);
    read(ver, "r", "verify.", s.verify.r);
    read(ver, "grid_per_side", "verify.", s.verify.grid_per_side);
    read(ver, "T_list", "verify.", s.verify.T_list);
    read(ver, "seeds", "verify.", s.verify.seeds);
    read(ver, "r_max_ref", "verify.", s.verify.r_max_ref);
    read(ver, "safe_radius", "verify.", s.verify.safe_radius);
    for (const auto& suite : s.verify.suites) one_of(suite, {"lemma1", "lemma2", "thm3", "prop4", "rate"}, "verify.suites");
    require(s.verify.delta > 0 && s.verify.delta < 1, "scenario: field 'verify.delta' must lie in (0, 1)");
    positive(s.verify.bandwidth, "verify.bandwidth");
    positive(s.verify.rbar, "verify.rbar");
    positive(s.verify.r, "verify.r");
    positive(s.verify.safe_radius, "verify.safe_radius");
    require(s.verify.seeds >= 1, "scenario: field 'verify.seeds' must be >= 1");

    make_system(s);  // dimension checks
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("scenario: cannot open " + path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("scenario: " + path + " is not valid JSON: " + e.what());
    }
    return parse_scenario(j);
}

Json scenario_to_json(const Scenario& s) {
    Json j;
    j["version"] = s.version;
    j["name"] = s.name;
    j["seed"] = s.seed;
    if (!s.system.preset.empty()) {
        j["system"] = {{"preset", s.system.preset}};
    } else {
        j["system"] = {{"A", write_matrix(s.system.A)}, {"B", write_matrix(s.system.B)},
                       {"C", write_matrix(s.system.C)}, {"Q", write_matrix(s.system.Q)},
                       {"R", write_matrix(s.system.R)}, {"W", write_matrix(s.system.W)},
                       {"V", write_matrix(s.system.V)}};
    }
    j["map"] = {{"kind", s.map.kind}, {"box", s.map.box}, {"seed", s.map.seed}};
    j["noise"] = {{"label_std", s.noise.label.std},     {"label_clip", s.noise.label.clip},
                  {"sigma_0", s.noise.sigma_0},         {"process_std", s.noise.process.std},
                  {"process_clip", s.noise.process.clip}};
    j["controller"] = {{"horizon", s.controller.horizon},
                       {"sigma_w", s.controller.sigma_w},
                       {"delta", s.controller.delta},
                       {"eps_h", s.controller.eps_h}};
    j["sampling"] = {{"protocol", s.sampling.protocol}, {"T", s.sampling.T}, {"rbar", s.sampling.rbar}};
    j["predictor"] = {{"kind", s.predictor.kind},
                      {"kernel", s.predictor.kernel},
                      {"bandwidth", s.predictor.bandwidth},
                      {"krr_alpha", s.predictor.krr_alpha},
                      {"krr_lambda", s.predictor.krr_lambda}};
    j["reference"] = {{"amp_x", s.reference.amp_x},
                      {"amp_y", s.reference.amp_y},
                      {"period", s.reference.period},
                      {"delta", s.reference.delta}};
    j["rollout"] = {{"T_sim", s.rollout.T_sim}, {"region", s.rollout.region}, {"controller", s.rollout.controller}};
    j["grid"] = {{"per_side", s.grid.per_side}, {"radius", s.grid.radius},     {"norm", s.grid.norm},
                 {"inner_lo", s.grid.inner_lo}, {"inner_hi", s.grid.inner_hi}, {"outer_lo", s.grid.outer_lo},
                 {"outer_hi", s.grid.outer_hi}};
    j["verify"] = {{"suites", s.verify.suites},
                   {"trials", s.verify.trials},
                   {"delta", s.verify.delta},
                   {"T", s.verify.T},
                   {"bandwidth", s.verify.bandwidth},
                   {"rbar", s.verify.rbar},
                   {"point", s.verify.point},
                   {"r", s.verify.r},
                   {"grid_per_side", s.verify.grid_per_side},
                   {"T_list", s.verify.T_list},
                   {"seeds", s.verify.seeds},
                   {"r_max_ref", s.verify.r_max_ref},
                   {"safe_radius", s.verify.safe_radius}};
    return j;
}

Vector training_reference(int k) {
    require(k >= 0, "training_reference: k must be nonnegative");
    const double a = 1.75 + 0.125 * ((k / 100) % 4);
    const double th = 2.0 * M_PI * k / 100.0;
    Vector y(2);
    y << a * std::sin(th), a * std::cos(th);
    return y;
}

LinearSystem<double> make_system(const Scenario& s) {
    return LinearSystem<double>(s.system.A, s.system.B, s.system.C);
}

std::shared_ptr<ObservationMap> make_map(const Scenario& s) {
    return make_observation_map(s.map.kind, static_cast<int>(s.system.C.rows()), s.map.box, s.map.seed);
}

StaticOutputController<double> make_sampling_controller(const Scenario& s) {
    const LinearSystem<double> sys = make_system(s);
    const Matrix K = dlqr(sys, s.system.Q, s.system.R);
    const Matrix L = kalman_predictor_gain(sys, s.system.W, s.system.V);
    StaticOutputController<double> ctrl(sys, K, L);
    if (!ctrl.stabilizing()) throw SynthesisError("scenario: the LQR/Kalman design does not stabilize the plant");
    return ctrl;
}

namespace {

Matrix output_lift(const Matrix& C) { return Eigen::CompleteOrthogonalDecomposition<Matrix>(C).pseudoInverse(); }

}  // namespace

Dataset collect_for_scenario(const Scenario& s, const ObservationMap& map) {
    const LinearSystem<double> sys = make_system(s);
    const auto ctrl = make_sampling_controller(s);
    if (s.sampling.protocol == "circle") {
        require(sys.p() == 2, "collect: the circle protocol needs p = 2");
        const Matrix lift = output_lift(sys.C);
        Dataset d = collect_trajectory_dataset(
            sys, map, ctrl, [&lift](int k) { return Vector(lift * training_reference(k)); }, s.sampling.T,
            s.noise.label, s.seed);
        d.sigma_0 = s.noise.sigma_0;
        return d;
    }
    SamplingPlan plan;
    plan.rbar = s.sampling.rbar;
    plan.T = s.sampling.T;
    plan.sigma_0 = s.noise.sigma_0;
    plan.noise = s.noise.label;
    plan.seed = s.seed;
    return collect_dataset(sys, map, ctrl, plan);
}

std::unique_ptr<Predictor> make_predictor(const Scenario& s, const Dataset& data,
                                          std::shared_ptr<const ObservationMap> map) {
    if (s.predictor.kind == "true") return std::make_unique<TruePredictor>(map);
    require(data.size() > 0, "make_predictor: learned predictors need a collected dataset");
    if (s.predictor.kind == "krr")
        return std::make_unique<KrrRegressor>(data, s.predictor.krr_alpha, s.predictor.krr_lambda,
                                              map->metric_scale());
    return std::make_unique<NwRegressor>(data, Kernel::parse(s.predictor.kernel), s.predictor.bandwidth,
                                         map->metric_scale());
}

AugmentedSystem make_augmentation(const Scenario& s) {
    return build_tracking_augmentation(make_system(s), s.system.Q, s.system.R, s.controller.sigma_w,
                                       s.controller.delta, s.noise.label.bound());
}

ReferenceSignal make_reference(const Scenario& s) {
    return ReferenceSignal::circle(output_lift(s.system.C), s.reference.amp_x, s.reference.amp_y,
                                   s.reference.period, s.reference.delta);
}

}  // namespace pbc

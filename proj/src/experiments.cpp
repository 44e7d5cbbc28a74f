#include "pbc/scenario.hpp"

#include <algorithm>
#include <cmath>

namespace pbc {

namespace {

double percentile(std::vector<double> v, double q) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

RegionSummary summarize(const std::string& name, const std::vector<double>& errors) {
    return RegionSummary{name, static_cast<int>(errors.size()), percentile(errors, 0.5), percentile(errors, 0.99)};
}

void fill_frequency(VerificationReport& r, double threshold) {
    const double n = r.trials;
    const double f = n > 0 ? r.violations / n : 0.0;
    const double z = 1.96;
    const double denom = 1.0 + z * z / n;
    const double center = (f + z * z / (2 * n)) / denom;
    const double half = z * std::sqrt(f * (1 - f) / n + z * z / (4 * n * n)) / denom;
    r.frequency = f;
    r.ci_low = std::max(0.0, center - half);
    r.ci_high = std::min(1.0, center + half);
    r.threshold = threshold;
    r.passed = f <= threshold;
}

double three_sigma_threshold(double delta, int trials) { return delta + 3.0 * std::sqrt(delta * (1 - delta) / trials); }

SamplingPlan plan_for(const Scenario& s, double rbar, int T, std::uint64_t seed) {
    SamplingPlan plan;
    plan.rbar = rbar;
    plan.T = T;
    plan.sigma_0 = s.noise.sigma_0;
    plan.noise = s.noise.label;
    plan.seed = seed;
    return plan;
}

double max_grid_error(const Predictor& pred, const ObservationMap& map, const std::vector<Vector>& grid) {
    double e = 0.0;
    for (const Vector& y : grid) e = std::max(e, inf_norm(Vector(pred.predict(map.forward(y)) - y)));
    return e;
}

VerificationReport verify_lemma1(const Scenario& s, int trials) {
    const LinearSystem<double> sys = make_system(s);
    const auto map = make_map(s);
    const auto ctrl = make_sampling_controller(s);
    const Kernel kernel = Kernel::parse(s.predictor.kernel);
    const int p = sys.p();
    const double gamma = s.verify.bandwidth;
    const double sigma = s.noise.label.bound();
    Vector y0 = Vector::Zero(p);
    if (!s.verify.point.empty()) {
        require(static_cast<int>(s.verify.point.size()) == p, "verify lemma1: point has wrong dimension");
        for (int i = 0; i < p; ++i) y0(i) = s.verify.point[i];
    }
    const Vector z0 = map->forward(y0);

    VerificationReport r;
    r.suite = "lemma1";
    r.trials = trials;
    r.delta = s.verify.delta;
    double min_cov = kInf, max_err = 0.0, max_ratio = 0.0;
    int uncertified = 0;
    for (int t = 0; t < trials; ++t) {
        const Dataset data =
            collect_dataset(sys, *map, ctrl, plan_for(s, s.verify.rbar, s.verify.T, derive_seed(s.seed, t)));
        const NwRegressor reg(data, kernel, gamma, map->metric_scale());
        const NwPrediction pr = reg.evaluate(z0);
        min_cov = std::min(min_cov, pr.coverage);
        const double err = inf_norm(Vector(pr.y - y0));
        max_err = std::max(max_err, err);
        if (pr.coverage < 1.0) {
            ++uncertified;
            ++r.violations;
            continue;
        }
        const double bound = pointwise_error_bound(pr.coverage, gamma, map->lh(), sigma, p, r.delta);
        max_ratio = std::max(max_ratio, err / bound);
        if (err > bound) ++r.violations;
    }
    fill_frequency(r, three_sigma_threshold(r.delta, trials));
    r.details = {{"bandwidth", gamma},      {"T", s.verify.T},        {"rbar", s.verify.rbar},
                 {"min_coverage", min_cov}, {"max_error", max_err},   {"max_error_to_bound", max_ratio},
                 {"uncertified", uncertified}, {"lh", map->lh()},     {"sigma_eta", sigma}};
    return r;
}

VerificationReport verify_lemma2(const Scenario& s, int trials) {
    const LinearSystem<double> sys = make_system(s);
    const auto map = make_map(s);
    const auto ctrl = make_sampling_controller(s);
    const SamplingConstants k = sampling_constants(s, *map);
    const Kernel kernel = Kernel::parse(s.predictor.kernel);
    const int p = sys.p();
    const double gamma = s.verify.bandwidth;
    const double r = s.verify.r;
    const double sigma = s.noise.label.bound();
    const double spread = k.envelope.M * std::max(s.noise.sigma_0, sigma) / (1.0 - k.envelope.rho);
    const double rbar = r + spread + gamma / k.lg;
    require(rbar <= map->box(), "verify lemma2: required sampling radius exceeds the map's working box");
    const double V = v_ker(kernel, p);
    const BoundValue bound = coverage_lower_bound(s.verify.T, gamma, rbar, k.lg, p, V, k.lh, s.verify.delta);
    const auto grid = box_grid(p, r, s.verify.grid_per_side);

    VerificationReport rep;
    rep.suite = "lemma2";
    rep.trials = trials;
    rep.delta = s.verify.delta;
    double worst = kInf;
    for (int t = 0; t < trials; ++t) {
        const Dataset data = collect_dataset(sys, *map, ctrl, plan_for(s, rbar, s.verify.T, derive_seed(s.seed, t)));
        const NwRegressor reg(data, kernel, gamma, map->metric_scale());
        const double cov = min_grid_coverage(reg, *map, grid);
        worst = std::min(worst, cov);
        if (cov < bound.value) ++rep.violations;
    }
    fill_frequency(rep, three_sigma_threshold(rep.delta, trials));
    rep.details = {{"bound", bound.value},  {"warning", bound.warning}, {"rbar", rbar},
                   {"r", r},                {"bandwidth", gamma},       {"min_coverage", worst},
                   {"M", k.envelope.M},     {"rho", k.envelope.rho},    {"lg", k.lg},
                   {"lh", k.lh}};
    return rep;
}

VerificationReport verify_thm3(const Scenario& s, int trials) {
    const LinearSystem<double> sys = make_system(s);
    const auto map = make_map(s);
    const auto ctrl = make_sampling_controller(s);
    const SamplingConstants k = sampling_constants(s, *map);
    const Kernel kernel = Kernel::parse(s.predictor.kernel);
    const int p = sys.p();
    const double gamma = s.verify.bandwidth;
    const double r = s.verify.r;
    const double rbar = std::sqrt(2.0) * r;
    require(rbar <= map->box(), "verify thm3: sqrt(2) r exceeds the map's working box");
    const double sigma = s.noise.label.bound();
    UniformBoundConditions cond;
    cond.v_kernel = v_ker(kernel, p);
    cond.l_kernel = kernel.lipschitz();
    cond.decay_M = k.envelope.M;
    cond.decay_rho = k.envelope.rho;
    cond.sigma_0 = s.noise.sigma_0;
    const BoundValue bound = uniform_error_bound(s.verify.T, gamma, r, k.lg, k.lh, sigma, p, s.verify.delta, cond);
    const auto grid = box_grid(p, r, s.verify.grid_per_side);

    VerificationReport rep;
    rep.suite = "thm3";
    rep.trials = trials;
    rep.delta = s.verify.delta;
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        const Dataset data = collect_dataset(sys, *map, ctrl, plan_for(s, rbar, s.verify.T, derive_seed(s.seed, t)));
        const NwRegressor reg(data, kernel, gamma, map->metric_scale());
        const double err = max_grid_error(reg, *map, grid);
        worst = std::max(worst, err);
        if (err > bound.value) ++rep.violations;
    }
    fill_frequency(rep, three_sigma_threshold(rep.delta, trials));
    rep.details = {{"bound", bound.value}, {"warning", bound.warning}, {"note", bound.note}, {"rbar", rbar},
                   {"r", r},               {"bandwidth", gamma},       {"max_error", worst}};
    return rep;
}

VerificationReport verify_rate(const Scenario& s) {
    const LinearSystem<double> sys = make_system(s);
    const auto map = make_map(s);
    const auto ctrl = make_sampling_controller(s);
    const Kernel kernel = Kernel::parse(s.predictor.kernel);
    const int p = sys.p();
    const double rbar = s.verify.rbar;
    const double r_max = rbar / 2.0;
    const double sigma = s.noise.label.bound();
    const double V = v_ker(kernel, p);
    const auto grid = box_grid(p, rbar, s.verify.grid_per_side);
    const auto& Ts = s.verify.T_list;
    require(Ts.size() >= 2, "verify rate: need at least two values of T");

    Json rows = Json::array();
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < Ts.size(); ++i) {
        const double gamma = optimal_bandwidth(Ts[i], r_max, map->lg(), map->lh(), sigma, p, V).value;
        double mean = 0.0;
        for (int seed = 0; seed < s.verify.seeds; ++seed) {
            const std::uint64_t sd = derive_seed(derive_seed(s.seed, 9000 + i), seed);
            const Dataset data = collect_dataset(sys, *map, ctrl, plan_for(s, rbar, Ts[i], sd));
            const NwRegressor reg(data, kernel, gamma, map->metric_scale());
            mean += max_grid_error(reg, *map, grid) / s.verify.seeds;
        }
        lx.push_back(std::log(Ts[i]));
        ly.push_back(std::log(mean));
        rows.push_back({{"T", Ts[i]}, {"bandwidth", gamma}, {"mean_max_error", mean}});
    }
    // Ordinary least squares on (log T, log error).
    const double n = static_cast<double>(lx.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i] / n;
        my += ly[i] / n;
    }
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    const double slope = sxy / sxx;
    double sse = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        const double res = ly[i] - (my + slope * (lx[i] - mx));
        sse += res * res;
    }
    const double se = lx.size() > 2 ? std::sqrt(sse / (n - 2) / sxx) : 0.0;
    // two-sided 95% Student t quantiles for 1..8 degrees of freedom
    static const double tq[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306};
    const int dof = static_cast<int>(lx.size()) - 2;
    const double tcrit = dof >= 1 ? (dof <= 8 ? tq[dof - 1] : 1.96) : 0.0;
    const double theory = -1.0 / (p + 4);
    const double tol = 0.15;

    VerificationReport rep;
    rep.suite = "rate";
    rep.trials = static_cast<int>(Ts.size()) * s.verify.seeds;
    rep.delta = s.verify.delta;
    rep.violations = std::abs(slope - theory) <= tol ? 0 : 1;
    rep.frequency = slope;
    rep.ci_low = slope - tcrit * se;
    rep.ci_high = slope + tcrit * se;
    rep.threshold = tol;
    rep.passed = rep.violations == 0;
    rep.details = {{"slope", slope}, {"slope_ci", {rep.ci_low, rep.ci_high}}, {"theory_slope", theory},
                   {"tolerance", tol}, {"rows", rows}, {"seeds", s.verify.seeds}};
    return rep;
}

}  // namespace

SamplingConstants sampling_constants(const Scenario& s, const ObservationMap& map) {
    const LinearSystem<double> sys = make_system(s);
    const auto ctrl = make_sampling_controller(s);
    SamplingConstants k;
    k.lg = map.lg();
    k.lh = map.lh();
    k.envelope = fit_decay_envelope(closed_loop_responses(sys, ctrl, 200), sys);
    return k;
}

ErrorGrid evaluate_error_grid(const Predictor& predictor, const ObservationMap& map, const GridSpec& spec,
                              const NwRegressor* nw) {
    require(spec.radius <= map.box() + 1e-12, "evaluate_error_grid: grid exceeds the map's working box");
    ErrorGrid out;
    std::vector<double> inner, outer;
    for (const Vector& y : box_grid(map.p(), spec.radius, spec.per_side)) {
        GridPoint g;
        g.y = y;
        const Vector z = map.forward(y);
        const Vector diff = predictor.predict(z) - y;
        g.error = spec.norm == "2" ? diff.norm() : inf_norm(diff);
        g.coverage = nw ? nw->coverage(z) : std::nan("");
        const double rad = y.norm();
        if (rad >= spec.inner_lo && rad <= spec.inner_hi)
            inner.push_back(g.error);
        else if (rad >= spec.outer_lo && rad <= spec.outer_hi)
            outer.push_back(g.error);
        out.points.push_back(std::move(g));
    }
    out.summary = {summarize("inner", inner), summarize("outer", outer)};
    return out;
}

VerificationReport verify_prop4(const Scenario& s, const SynthesizedController& ctrl, int trials) {
    require(trials >= 1, "verify prop4: trials must be positive");
    const LinearSystem<double> sys = make_system(s);
    const auto map = make_map(s);
    const Dataset data = collect_for_scenario(s, *map);
    const auto predictor = make_predictor(s, data, map);
    const int p = sys.p();
    const Matrix lift = Eigen::CompleteOrthogonalDecomposition<Matrix>(sys.C).pseudoInverse();
    const double lift_norm = induced_inf_norm(lift);
    const Matrix Q = (ctrl.plant.Q_half.transpose() * ctrl.plant.Q_half).topLeftCorner(sys.n(), sys.n());
    const Matrix R = ctrl.plant.R_half.transpose() * ctrl.plant.R_half;
    const double noise_cost = noise_cost_l1(ctrl.plant, ctrl.phi);
    const double step = ctrl.plant.delta / std::max(lift_norm, 1e-300);

    VerificationReport rep;
    rep.suite = "prop4";
    rep.trials = trials;
    rep.delta = 0.0;
    int escaped = 0;
    double worst_ratio = -kInf, max_gap = -kInf;
    for (int t = 0; t < trials; ++t) {
        const ReferenceSignal walk = ReferenceSignal::random_walk(p, s.verify.r_max_ref / lift_norm, step,
                                                                  derive_seed(s.seed, 5000 + t), s.rollout.T_sim);
        const ReferenceSignal ref([&walk, &lift](int k) { return Vector(lift * walk.at(k)); }, s.verify.r_max_ref,
                                  ctrl.plant.delta);
        RolloutOptions opt;
        opt.T_sim = s.rollout.T_sim;
        opt.region = s.verify.safe_radius;
        opt.process_noise = s.noise.process;
        opt.seed = derive_seed(s.seed, 6000 + t);
        SlsTrackingController k_ce(realize_controller(ctrl));
        SlsTrackingController k_star(realize_controller(ctrl));
        const Trajectory ce = rollout(sys, *map, predictor.get(), k_ce, ref, opt);
        const Trajectory star = rollout(sys, *map, nullptr, k_star, ref, opt);
        if (ce.escaped || ce.aborted || star.escaped || star.aborted) {
            ++escaped;
            continue;
        }
        const double c_ce = tracking_cost(ce, Q, R);
        const double c_star = tracking_cost(star, Q, R);
        const double gap = c_ce - c_star;
        const double bound = ce.max_perception_error * noise_cost;
        max_gap = std::max(max_gap, gap);
        if (bound > 0) worst_ratio = std::max(worst_ratio, gap / bound);
        // rounding slack of the two cost evaluations
        if (gap > bound + 1e-12 * (1.0 + c_ce)) ++rep.violations;
    }
    rep.frequency = rep.trials > 0 ? static_cast<double>(rep.violations) / rep.trials : 0.0;
    rep.ci_low = rep.ci_high = rep.frequency;
    rep.threshold = 0.0;
    rep.passed = rep.violations == 0;
    rep.details = {{"escaped", escaped},
                   {"checked", trials - escaped},
                   {"noise_cost_l1", noise_cost},
                   {"max_gap", max_gap},
                   {"max_gap_to_bound", worst_ratio}};
    return rep;
}

VerificationReport verify_bounds(const Scenario& s, const std::string& suite, int trials) {
    if (suite == "rate") return verify_rate(s);
    require(trials >= 100, "verify_bounds: trials must be at least 100");
    if (suite == "lemma1") return verify_lemma1(s, trials);
    if (suite == "lemma2") return verify_lemma2(s, trials);
    if (suite == "thm3") return verify_thm3(s, trials);
    if (suite == "prop4") {
        const SynthesizedController ctrl =
            sls_synthesize(make_augmentation(s), s.controller.horizon, s.controller.eps_h);
        return verify_prop4(s, ctrl, trials);
    }
    throw InputError("verify_bounds: unknown suite '" + suite + "'");
}

Json report_to_json(const VerificationReport& r) {
    return Json{{"suite", r.suite},         {"trials", r.trials},       {"violations", r.violations},
                {"frequency", r.frequency}, {"delta", r.delta},         {"ci", {r.ci_low, r.ci_high}},
                {"threshold", r.threshold}, {"passed", r.passed},       {"details", r.details}};
}

}  // namespace pbc

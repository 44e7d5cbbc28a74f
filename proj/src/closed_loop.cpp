#include "pbc/closed_loop.hpp"

#include "pbc/sampling.hpp"

#include <cmath>

namespace pbc {

Vector SlsTrackingController::step(const Vector& y, const Vector& x_ref) {
    Vector ybar(y.size() + x_ref.size());
    ybar << y, x_ref;
    return k_.step(ybar);
}

Vector ce_step(TrackingController& ctrl, const Vector& h_z, const Vector& x_ref) { return ctrl.step(h_z, x_ref); }

ReferenceSignal::ReferenceSignal(std::function<Vector(int)> generator, double r_max_ref, double delta)
    : gen_(std::move(generator)), r_max_ref_(r_max_ref), delta_(delta) {
    require(static_cast<bool>(gen_), "ReferenceSignal: empty generator");
    require(r_max_ref >= 0 && delta >= 0, "ReferenceSignal: class parameters must be nonnegative");
}

Vector ReferenceSignal::at(int k) const {
    require(k >= 0, "ReferenceSignal: negative time");
    const Vector x = gen_(k);
    const double slack = 1e-9 * (1.0 + r_max_ref_);
    if (inf_norm(x) > r_max_ref_ + slack)
        throw InputError("ReferenceSignal: ||x_ref(" + std::to_string(k) + ")||_inf exceeds r_max_ref");
    if (k > 0 && inf_norm(Vector(x - gen_(k - 1))) > delta_ + 1e-9 * (1.0 + delta_))
        throw InputError("ReferenceSignal: step at k=" + std::to_string(k) + " exceeds delta");
    return x;
}

ReferenceSignal ReferenceSignal::circle(const Matrix& lift, double amp_x, double amp_y, int period, double delta) {
    require(lift.cols() == 2, "ReferenceSignal::circle: lift must have two columns");
    require(period > 0, "ReferenceSignal::circle: period must be positive");
    const double r_max = std::max(std::abs(amp_x), std::abs(amp_y)) * induced_inf_norm(lift);
    return ReferenceSignal(
        [lift, amp_x, amp_y, period](int k) {
            const double th = 2.0 * M_PI * k / period;
            Vector y(2);
            y << amp_x * std::sin(th), amp_y * std::cos(th);
            return Vector(lift * y);
        },
        r_max, delta);
}

ReferenceSignal ReferenceSignal::constant(const Vector& x_ref, double delta) {
    return ReferenceSignal([x_ref](int) { return x_ref; }, inf_norm(x_ref), delta);
}

ReferenceSignal ReferenceSignal::random_walk(int n, double r_max_ref, double delta, std::uint64_t seed, int length) {
    require(n >= 1 && length >= 1, "ReferenceSignal::random_walk: invalid size");
    Rng rng = make_rng(seed, 0x7265);
    auto path = std::make_shared<std::vector<Vector>>();
    Vector x = Vector::Zero(n);
    for (int k = 0; k < length; ++k) {
        path->push_back(x);
        for (int i = 0; i < n; ++i) x(i) = std::clamp(x(i) + uniform(rng, -delta, delta), -r_max_ref, r_max_ref);
    }
    return ReferenceSignal(
        [path](int k) { return (*path)[std::min<std::size_t>(k, path->size() - 1)]; }, r_max_ref, delta);
}

Trajectory rollout(const LinearSystem<double>& sys, const ObservationMap& map, const Predictor* predictor,
                   TrackingController& ctrl, const ReferenceSignal& reference, const RolloutOptions& options) {
    require(options.T_sim >= 1, "rollout: T_sim must be at least 1");
    require(map.p() == sys.p(), "rollout: map dimension differs from the measurement dimension");
    const int n = sys.n();
    Vector x = options.x0.size() == 0 ? Vector::Zero(n) : options.x0;
    require(x.size() == n, "rollout: x0 has wrong dimension");
    ctrl.reset();
    Rng rng = make_rng(options.seed, 0x726f);
    Trajectory traj;
    traj.x.push_back(x);
    auto check_escape = [&](int k) {
        if (!traj.escaped && inf_norm(Vector(sys.C * x)) > options.region) {
            traj.escaped = true;
            traj.escape_time = k;
        }
    };
    check_escape(0);
    for (int k = 0; k < options.T_sim; ++k) {
        const Vector cx = sys.C * x;
        Vector z = map.forward(cx);
        Vector yhat = predictor ? predictor->predict(z) : cx;
        const Vector xr = reference.at(k);
        Vector u = ce_step(ctrl, yhat, xr);
        const Vector w = clipped_gaussian(rng, n, options.process_noise);
        traj.max_perception_error = std::max(traj.max_perception_error, inf_norm(Vector(yhat - cx)));
        traj.z.push_back(std::move(z));
        traj.yhat.push_back(std::move(yhat));
        traj.x_ref.push_back(xr);
        x = simulate_step(sys, x, u, w);
        traj.u.push_back(std::move(u));
        if (!x.allFinite()) {
            traj.aborted = true;
            traj.u.pop_back();
            traj.z.pop_back();
            traj.yhat.pop_back();
            traj.x_ref.pop_back();
            break;
        }
        traj.x.push_back(x);
        check_escape(k + 1);
        if (inf_norm(x) > options.guard) {
            traj.aborted = true;
            break;
        }
    }
    return traj;
}

double tracking_cost(const Trajectory& traj, const Matrix& Q, const Matrix& R) {
    double cost = 0.0;
    for (int k = 0; k < traj.steps(); ++k) {
        const Vector e = traj.x[k] - traj.x_ref[k];
        require(e.size() == Q.rows() && traj.u[k].size() == R.rows(), "tracking_cost: weight dimensions");
        cost = std::max(cost, inf_norm(Vector(Q.diagonal().cwiseSqrt().cwiseProduct(e))));
        cost = std::max(cost, inf_norm(Vector(R.diagonal().cwiseSqrt().cwiseProduct(traj.u[k]))));
    }
    return cost;
}

double perception_error_margin(const SynthesizedController& ctrl, double r, double r_max_ref) {
    const double slack = r - r_max_of_responses(ctrl, r_max_ref);
    if (slack <= 0)
        throw CertificateUnavailable("perception_error_margin: r_max(Phi) already exceeds the safe radius r");
    const double gain = output_noise_l1(ctrl.plant, ctrl.phi);
    return gain > 0 ? slack / gain : kInf;
}

double suboptimality_bound(double eps_h, const SynthesizedController& ctrl, double r, double r_max_ref) {
    require(eps_h >= 0, "suboptimality_bound: eps_h must be nonnegative");
    const double margin = perception_error_margin(ctrl, r, r_max_ref);
    if (eps_h > margin)
        throw CertificateUnavailable("suboptimality_bound: eps_h = " + std::to_string(eps_h) +
                                     " exceeds (r - r_max) / ||C Phi_xn||_L1 = " + std::to_string(margin));
    return eps_h * noise_cost_l1(ctrl.plant, ctrl.phi);
}

Vector FlawedPredictor::predict(const Vector& z) const {
    const double x = z(0);
    if (std::abs(x) >= r_ - 1e-9 || std::abs(x - xbar_) <= 1e-9) return Vector::Zero(1);
    return z;
}

Vector Example1Controller::step(const Vector& y, const Vector& x_ref) {
    Vector u(1);
    u(0) = cfg_.k_x * y(0) + cfg_.k_r0 * x_ref(0) + cfg_.k_r1 * prev_ref_;
    prev_ref_ = x_ref(0);
    return u;
}

LinearSystem<double> example1_system(const Example1Config& cfg) {
    return LinearSystem<double>(Matrix::Constant(1, 1, cfg.a), Matrix::Ones(1, 1), Matrix::Ones(1, 1));
}

ReferenceSignal example1_reference(const Example1Config& cfg) {
    require(cfg.k_r0 != 0, "example1_reference: k_r0 must be nonzero");
    require(cfg.r > 0 && std::abs(cfg.xbar) < cfg.r, "example1_reference: need |xbar| < r");
    const double ref0 = cfg.xbar / cfg.k_r0;
    const double ref1 = (cfg.r - cfg.a * cfg.xbar - cfg.k_r1 * ref0) / cfg.k_r0;
    const double r_max = std::max(std::abs(ref0), std::abs(ref1));
    const double delta = std::max({std::abs(ref0), std::abs(ref1 - ref0), std::abs(ref1)});
    return ReferenceSignal(
        [ref0, ref1](int k) { return Vector::Constant(1, k == 0 ? ref0 : (k == 1 ? ref1 : 0.0)); }, r_max, delta);
}

Trajectory run_example1(const Example1Config& cfg, int steps, bool flawless) {
    const LinearSystem<double> sys = example1_system(cfg);
    const IdentityMap map;
    const FlawedPredictor flawed(cfg.xbar, cfg.r);
    Example1Controller ctrl(cfg);
    RolloutOptions opt;
    opt.T_sim = steps;
    opt.region = cfg.r;
    return rollout(sys, map, flawless ? nullptr : &flawed, ctrl, example1_reference(cfg), opt);
}

double end_to_end_bound(double T, double lg, double lh, double r_max, double sigma_eta, int p, double delta,
                        double noise_cost) {
    require(T >= 1 && delta > 0 && delta < 1, "end_to_end_bound: need T >= 1 and delta in (0,1)");
    const double rate = std::pow(4.0 * p * p * std::pow(sigma_eta, 4) / T, 1.0 / (p + 4));
    return 4.0 * lg * lh * r_max * rate * noise_cost * std::sqrt(std::log(T * T / delta));
}

std::vector<RateRow> end_to_end_rate(const LinearSystem<double>& sys, const ObservationMap& map,
                                     const StaticOutputController<double>& sampler,
                                     const SynthesizedController& ctrl, const RateConfig& cfg) {
    require(!cfg.T_list.empty(), "end_to_end_rate: empty T list");
    for (std::size_t i = 1; i < cfg.T_list.size(); ++i)
        require(cfg.T_list[i] > cfg.T_list[i - 1], "end_to_end_rate: T list must be increasing");
    const int p = sys.p();
    const double r_max = r_max_of_responses(ctrl, cfg.r_max_ref);
    const double rbar = 2.0 * r_max;
    require(rbar <= map.box(), "end_to_end_rate: 2 r_max(Phi) exceeds the map's working box");
    const double sigma = cfg.label_noise.bound();
    const Kernel kernel{KernelProfile::Triangular};
    const double V = v_ker(kernel, p);
    const double noise_cost = noise_cost_l1(ctrl.plant, ctrl.phi);
    const Matrix Qf = (ctrl.plant.Q_half.transpose() * ctrl.plant.Q_half).topLeftCorner(sys.n(), sys.n());
    const Matrix Rf = ctrl.plant.R_half.transpose() * ctrl.plant.R_half;
    const auto grid = box_grid(p, r_max, cfg.grid_per_side);

    std::vector<RateRow> rows;
    for (std::size_t i = 0; i < cfg.T_list.size(); ++i) {
        RateRow row;
        row.T = cfg.T_list[i];
        SamplingPlan plan;
        plan.rbar = rbar;
        plan.T = row.T;
        plan.sigma_0 = cfg.sigma_0;
        plan.noise = cfg.label_noise;
        plan.seed = derive_seed(cfg.seed, i);
        const Dataset data = collect_dataset(sys, map, sampler, plan);
        row.gamma = optimal_bandwidth(row.T, r_max, map.lg(), map.lh(), sigma, p, V).value;
        const NwRegressor reg(data, kernel, row.gamma, map.metric_scale());
        for (const Vector& y : grid)
            row.eps_emp = std::max(row.eps_emp, inf_norm(Vector(reg.predict(map.forward(y)) - y)));
        row.eps_bound = end_to_end_bound(row.T, map.lg(), map.lh(), r_max, sigma, p, cfg.delta, 1.0);
        row.subopt_bound = row.eps_bound * noise_cost;

        const ReferenceSignal ref =
            ReferenceSignal::random_walk(sys.n(), cfg.r_max_ref, ctrl.plant.delta, derive_seed(cfg.seed, 1000 + i),
                                         cfg.T_sim);
        RolloutOptions opt;
        opt.T_sim = cfg.T_sim;
        opt.region = cfg.r;
        opt.process_noise = cfg.process_noise;
        opt.seed = derive_seed(cfg.seed, 2000 + i);
        SlsTrackingController k_ce(realize_controller(ctrl));
        SlsTrackingController k_star(realize_controller(ctrl));
        const Trajectory ce = rollout(sys, map, &reg, k_ce, ref, opt);
        const Trajectory star = rollout(sys, map, nullptr, k_star, ref, opt);
        row.escaped = ce.escaped || ce.aborted;
        row.subopt_emp = tracking_cost(ce, Qf, Rf) - tracking_cost(star, Qf, Rf);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace pbc

#pragma once

// Certainty-equivalent rollouts, tracking cost and suboptimality accounting,
// plus the packaged one-dimensional instability scenario.

#include "pbc/lin_sys.hpp"
#include "pbc/perception.hpp"
#include "pbc/rng.hpp"
#include "pbc/synthesis.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace pbc {

/// A controller that consumes a measurement estimate and the current reference state.
class TrackingController {
public:
    virtual ~TrackingController() = default;
    virtual Vector step(const Vector& y, const Vector& x_ref) = 0;
    virtual void reset() = 0;
    virtual std::unique_ptr<TrackingController> clone() const = 0;
};

/// u = K (xhat - x_ref) with the observer updated from y.
class ObserverTrackingController final : public TrackingController {
public:
    explicit ObserverTrackingController(StaticOutputController<double> ctrl) : ctrl_(std::move(ctrl)) {}
    Vector step(const Vector& y, const Vector& x_ref) override { return ctrl_.step(y, -ctrl_.K() * x_ref); }
    void reset() override { ctrl_.reset(); }
    std::unique_ptr<TrackingController> clone() const override {
        return std::make_unique<ObserverTrackingController>(*this);
    }

private:
    StaticOutputController<double> ctrl_;
};

/// Realized SLS controller fed with ybar = [y; x_ref].
class SlsTrackingController final : public TrackingController {
public:
    explicit SlsTrackingController(RealizedController realization) : k_(std::move(realization)) {}
    Vector step(const Vector& y, const Vector& x_ref) override;
    void reset() override { k_.reset(); }
    std::unique_ptr<TrackingController> clone() const override {
        return std::make_unique<SlsTrackingController>(*this);
    }

private:
    RealizedController k_;
};

/// One certainty-equivalent step: the perception output is used as if it were C x.
Vector ce_step(TrackingController& ctrl, const Vector& h_z, const Vector& x_ref);

/// k -> x_ref(k) together with the class parameters it promises to respect.
class ReferenceSignal {
public:
    ReferenceSignal(std::function<Vector(int)> generator, double r_max_ref, double delta);

    /// Throws InputError if the generated value leaves the class.
    Vector at(int k) const;
    double r_max_ref() const { return r_max_ref_; }
    double delta() const { return delta_; }

    /// Position references mapped to states through `lift` (n x p).
    static ReferenceSignal circle(const Matrix& lift, double amp_x, double amp_y, int period, double delta);
    static ReferenceSignal constant(const Vector& x_ref, double delta = 0.0);
    /// Steps uniform in [-delta, delta] per coordinate, clamped to the r_max_ref box.
    static ReferenceSignal random_walk(int n, double r_max_ref, double delta, std::uint64_t seed, int length);

private:
    std::function<Vector(int)> gen_;
    double r_max_ref_;
    double delta_;
};

struct Trajectory {
    std::vector<Vector> x;      // x_0 .. x_T
    std::vector<Vector> u;      // u_0 .. u_{T-1}
    std::vector<Vector> z;      // observations of x_0 .. x_{T-1}
    std::vector<Vector> yhat;   // perception outputs
    std::vector<Vector> x_ref;  // references used
    bool escaped = false;
    int escape_time = -1;       // first k with ||C x_k||_inf > r
    bool aborted = false;       // non-finite state or guard exceeded; prefix retained
    double max_perception_error = 0.0;  // max_k ||yhat_k - C x_k||_inf

    int steps() const { return static_cast<int>(u.size()); }
};

struct RolloutOptions {
    int T_sim = 400;
    double region = kInf;       // escape when ||C x||_inf > region
    NoiseSpec process_noise;    // w_k
    std::uint64_t seed = 0;
    double guard = 1e6;
    Vector x0;                  // empty means zero
};

/// x+ = A x + B u + w with u from ce_step on predictor(g(C x)). A null predictor
/// stands for perfect perception (yhat = C x).
Trajectory rollout(const LinearSystem<double>& sys, const ObservationMap& map, const Predictor* predictor,
                   TrackingController& ctrl, const ReferenceSignal& reference, const RolloutOptions& options);

/// Finite-horizon cost max_k ||[Q^{1/2}(x_k - x_ref_k); R^{1/2} u_k]||_inf over recorded steps.
double tracking_cost(const Trajectory& traj, const Matrix& Q, const Matrix& R);

/// eps_h ||[Q^{1/2} Phi_xn; R^{1/2} Phi_un]||_L1; throws CertificateUnavailable when
/// eps_h exceeds (r - r_max(Phi)) / ||C Phi_xn||_L1.
double suboptimality_bound(double eps_h, const SynthesizedController& ctrl, double r, double r_max_ref);

/// Largest perception error for which the escape-containment guarantee holds.
double perception_error_margin(const SynthesizedController& ctrl, double r, double r_max_ref);

// ---------------------------------------------------------------------------
// One-dimensional instability scenario.

struct Example1Config {
    double a = 1.2;
    double r = 1.0;
    double xbar = 0.5;
    double k_x = -1.0;   // feedback gain on the measurement
    double k_r0 = 0.8;   // gain on x_ref_k
    double k_r1 = 0.0;   // gain on x_ref_{k-1}
};

/// g = identity on R^1.
class IdentityMap final : public ObservationMap {
public:
    explicit IdentityMap(double box = 1e6) : box_(box) {}
    std::string id() const override { return "identity"; }
    int p() const override { return 1; }
    int q() const override { return 1; }
    double box() const override { return box_; }
    Vector forward(const Vector& y) const override { return y; }
    Vector inverse(const Vector& z) const override { return z; }
    double metric_scale() const override { return 1.0; }

private:
    double box_;
};

/// Correct everywhere except at xbar and outside (-r, r), where it reports 0.
class FlawedPredictor final : public Predictor {
public:
    FlawedPredictor(double xbar, double r) : xbar_(xbar), r_(r) {}
    Vector predict(const Vector& z) const override;

private:
    double xbar_, r_;
};

/// u_k = k_x yhat_k + k_r0 x_ref_k + k_r1 x_ref_{k-1}.
class Example1Controller final : public TrackingController {
public:
    explicit Example1Controller(const Example1Config& cfg) : cfg_(cfg) {}
    Vector step(const Vector& y, const Vector& x_ref) override;
    void reset() override { prev_ref_ = 0.0; }
    std::unique_ptr<TrackingController> clone() const override { return std::make_unique<Example1Controller>(*this); }

private:
    Example1Config cfg_;
    double prev_ref_ = 0.0;
};

LinearSystem<double> example1_system(const Example1Config& cfg);
/// Two constructed reference values that steer x to xbar and then to r; zero afterwards.
ReferenceSignal example1_reference(const Example1Config& cfg);
/// Rollout from x_0 = 0 with the flawed (or flawless) predictor.
Trajectory run_example1(const Example1Config& cfg, int steps, bool flawless);

// ---------------------------------------------------------------------------
// End-to-end rate table.

struct RateRow {
    int T = 0;
    double gamma = 0.0;
    double eps_emp = 0.0;       // max grid error of the learned map
    double eps_bound = 0.0;     // end-to-end bound on the perception error
    double subopt_emp = 0.0;    // measured cost gap
    double subopt_bound = 0.0;  // end-to-end suboptimality bound
    bool escaped = false;
};

struct RateConfig {
    std::vector<int> T_list;
    double delta = 0.1;
    double r = 2.5;             // safe region for rollouts
    double r_max_ref = 1.0;
    int grid_per_side = 15;
    int T_sim = 200;
    NoiseSpec label_noise;
    NoiseSpec process_noise;
    double sigma_0 = 0.0;
    std::uint64_t seed = 0;
};

/// For each T: collect with rbar = 2 r_max(Phi), fit NW at the optimal bandwidth,
/// measure the grid error and the paired-rollout cost gap, and evaluate the bound.
std::vector<RateRow> end_to_end_rate(const LinearSystem<double>& sys, const ObservationMap& map,
                                     const StaticOutputController<double>& sampler,
                                     const SynthesizedController& ctrl, const RateConfig& cfg);

/// 4 L_g L_h r_max (4 p^2 sigma^4 / T)^{1/(p+4)} || [Q Phi_xn; R Phi_un] ||_L1 sqrt(log(T^2/delta)).
double end_to_end_bound(double T, double lg, double lh, double r_max, double sigma_eta, int p, double delta,
                        double noise_cost);

}  // namespace pbc

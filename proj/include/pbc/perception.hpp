#pragma once

// Observation maps, kernels, Nadaraya-Watson / kernel ridge regression and the
// error certificates that go with them.

#include "pbc/common.hpp"
#include "pbc/rng.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pbc {

/// Injective map g from the measurement subspace R^p into an observation space R^q,
/// with its inverse h and a metric on observations. All built-in metrics are a
/// scaled Euclidean distance, which lets regressors vectorize distance computations.
class ObservationMap {
public:
    virtual ~ObservationMap() = default;

    virtual std::string id() const = 0;
    virtual int p() const = 0;
    virtual int q() const = 0;
    /// Half-width of the box ||y||_inf <= box() on which g is invertible and the
    /// Lipschitz constants were estimated.
    virtual double box() const = 0;
    virtual Vector forward(const Vector& y) const = 0;
    virtual Vector inverse(const Vector& z) const = 0;
    virtual double metric_scale() const = 0;

    double metric(const Vector& a, const Vector& b) const { return metric_scale() * (a - b).norm(); }
    double lg() const { return lg_; }
    double lh() const { return lh_; }

    /// Sampled ratios ρ(g(y),g(y'))/||y-y'|| and ||y-y'||/ρ(g(y),g(y')), maximized
    /// over `pairs` random pairs in the working box (half global, half local).
    struct LipschitzEstimate {
        double lg = 0.0;
        double lh = 0.0;
    };
    LipschitzEstimate sample_lipschitz(std::uint64_t seed, int pairs) const;

protected:
    /// Estimates both constants and stores them inflated by `inflation`.
    void calibrate(std::uint64_t seed, int pairs = 10000, double inflation = 1.2);

private:
    double lg_ = 1.0;
    double lh_ = 1.0;
};

/// z_j = sin(<omega_j, y> + phi_j), j = 1..q.
/// Frequencies satisfy ||omega_j||_1 * box <= pi/6 and |phi_j| <= pi/6, so every
/// phase stays in [-pi/3, pi/3] where asin inverts sin.
class SinusoidalLift final : public ObservationMap {
public:
    SinusoidalLift(int p, int q, double box, std::uint64_t seed);

    std::string id() const override;
    int p() const override { return static_cast<int>(omega_.cols()); }
    int q() const override { return static_cast<int>(omega_.rows()); }
    double box() const override { return box_; }
    Vector forward(const Vector& y) const override;
    Vector inverse(const Vector& z) const override;
    double metric_scale() const override { return scale_; }

    const Matrix& frequencies() const { return omega_; }
    const Vector& phases() const { return phi_; }

private:
    Matrix omega_;
    Vector phi_;
    Matrix pinv_;
    double box_;
    double scale_;
    std::uint64_t seed_;
};

/// A Gaussian blob of width `width` rendered on a `side`^p pixel lattice covering
/// [-extent, extent]^p, centered at y. Inverse by Gauss-Newton from the intensity
/// centroid.
class RasterMap final : public ObservationMap {
public:
    RasterMap(int p, int side, double box, double extent, double width, std::uint64_t seed = 0);

    std::string id() const override;
    int p() const override { return p_; }
    int q() const override { return static_cast<int>(centers_.cols()); }
    double box() const override { return box_; }
    Vector forward(const Vector& y) const override;
    Vector inverse(const Vector& z) const override;
    double metric_scale() const override { return 1.0; }

private:
    int p_;
    int side_;
    double box_;
    double extent_;
    double width_;
    Matrix centers_;  // p x q pixel centers
};

/// kind: "sinusoidal" or "raster".
std::shared_ptr<ObservationMap> make_observation_map(const std::string& kind, int p, double box, std::uint64_t seed);

enum class KernelProfile { Triangular, Epanechnikov, Box };

/// Radial profile kappa: R_+ -> [0, 1], zero beyond 1.
struct Kernel {
    KernelProfile profile = KernelProfile::Triangular;

    double operator()(double u) const;
    /// Lipschitz constant of the profile (infinite for the box).
    double lipschitz() const;
    std::string name() const;
    static Kernel parse(const std::string& name);
};

/// V_kappa = int_{R^p_+} kappa(||y||_inf) dy = int_0^1 kappa(u) p u^{p-1} du.
double v_ker(const Kernel& kernel, int p);

struct Dataset {
    std::vector<Vector> z;
    std::vector<Vector> y;
    double sigma_eta = 0.0;
    double sigma_0 = 0.0;
    std::string map_id;
    std::uint64_t seed = 0;
    /// Simulator ground truth C x for each sample; kept for tests and diagnostics.
    std::vector<Vector> y_true;

    int size() const { return static_cast<int>(z.size()); }
    void validate() const;
};

void write_dataset_csv(std::ostream& os, const Dataset& data);
std::string dataset_sidecar_json(const Dataset& data);
/// Reads `path` (CSV) and `path`.json (sidecar) when present.
Dataset read_dataset(const std::string& csv_path);

/// Anything that turns an observation into a measurement estimate.
class Predictor {
public:
    virtual ~Predictor() = default;
    virtual Vector predict(const Vector& z) const = 0;
};

/// Returns h(z) exactly.
class TruePredictor final : public Predictor {
public:
    explicit TruePredictor(std::shared_ptr<const ObservationMap> map) : map_(std::move(map)) {}
    Vector predict(const Vector& z) const override { return map_->inverse(z); }

private:
    std::shared_ptr<const ObservationMap> map_;
};

struct NwPrediction {
    Vector y;
    double coverage = 0.0;
};

class NwRegressor final : public Predictor {
public:
    NwRegressor(const Dataset& data, Kernel kernel, double bandwidth, double metric_scale);

    NwPrediction evaluate(const Vector& z) const;
    Vector predict(const Vector& z) const override { return evaluate(z).y; }
    double coverage(const Vector& z) const { return evaluate(z).coverage; }

    double bandwidth() const { return gamma_; }
    const Kernel& kernel() const { return kernel_; }
    double metric_scale() const { return scale_; }
    int size() const { return static_cast<int>(Z_.cols()); }
    int p() const { return static_cast<int>(Y_.rows()); }
    double sigma_eta() const { return sigma_eta_; }
    double metric(const Vector& a, const Vector& b) const { return scale_ * (a - b).norm(); }

private:
    Matrix Z_;  // q x T
    Matrix Y_;  // p x T
    Vector znorm2_;
    Kernel kernel_;
    double gamma_;
    double scale_;
    double sigma_eta_;
};

/// Nadaraya-Watson prediction; (0, 0) when no training point is within bandwidth.
NwPrediction nw_predict(const NwRegressor& reg, const Vector& z);

/// Kernel ridge regression with k(z, z') = exp(-alpha ||z - z'||^2).
class KrrRegressor final : public Predictor {
public:
    KrrRegressor(const Dataset& data, double alpha, double lambda, double metric_scale = 1.0);
    Vector predict(const Vector& z) const override;

private:
    Matrix Z_;
    Matrix coef_;  // p x T, Y (lambda I + K)^{-1}
    double alpha_;
    double scale_;
};

Vector krr_predict(const Dataset& data, double alpha, double lambda, const Vector& z);

/// gamma L_h + sigma / sqrt(s) * sqrt(log(p^2 sqrt(s) / delta)); requires s >= 1.
double pointwise_error_bound(double coverage, double gamma, double lh, double sigma_eta, int p, double delta);

/// Uniform certificate built from coverage at a finite anchor set.
class DataDrivenCertificate {
public:
    DataDrivenCertificate(const NwRegressor& reg, std::vector<Vector> anchors, double lh, double delta);

    double operator()(const Vector& z) const;
    int anchor_count() const { return static_cast<int>(anchors_.size()); }

private:
    std::vector<Vector> anchors_;
    std::vector<double> anchor_terms_;
    std::vector<double> slope_;
    double base_;
    double scale_;
};

DataDrivenCertificate data_driven_uniform_certificate(const NwRegressor& reg, std::vector<Vector> anchors,
                                                      double lh, double delta);

/// 1/2 sqrt(T V) (gamma / (rbar L_g))^{p/2}; warning set when T is below the
/// sample-size condition (which needs L_h and delta).
BoundValue coverage_lower_bound(double T, double gamma, double rbar, double lg, int p, double v_kernel,
                                std::optional<double> lh = std::nullopt, double delta = 0.1);

/// Side quantities needed to evaluate the conditions of the uniform bound.
struct UniformBoundConditions {
    double v_kernel = 0.0;
    double l_kernel = 1.0;
    double decay_M = 1.0;
    double decay_rho = 0.0;
    double sigma_0 = 0.0;
};

BoundValue uniform_error_bound(double T, double gamma, double r, double lg, double lh, double sigma_eta, int p,
                               double delta, std::optional<UniformBoundConditions> conditions = std::nullopt);

/// Bandwidth balancing the bias and noise terms of the end-to-end bound.
BoundValue optimal_bandwidth(double T, double r_max, double lg, double lh, double sigma_eta, int p,
                             double v_kernel);

/// Adaptive Simpson quadrature of f over [a, b].
double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-12);

}  // namespace pbc

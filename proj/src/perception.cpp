#include "pbc/perception.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace pbc {

namespace {

double simpson_step(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
                    double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_step(f, a, b, fa, fm, fb, whole, tol, 50);
}

double Kernel::operator()(double u) const {
    if (u < 0.0) u = -u;
    if (u > 1.0) return 0.0;
    switch (profile) {
        case KernelProfile::Triangular: return 1.0 - u;
        case KernelProfile::Epanechnikov: return 1.0 - u * u;
        case KernelProfile::Box: return 1.0;
    }
    return 0.0;
}

double Kernel::lipschitz() const {
    switch (profile) {
        case KernelProfile::Triangular: return 1.0;
        case KernelProfile::Epanechnikov: return 2.0;
        case KernelProfile::Box: return kInf;
    }
    return kInf;
}

std::string Kernel::name() const {
    switch (profile) {
        case KernelProfile::Triangular: return "triangular";
        case KernelProfile::Epanechnikov: return "epanechnikov";
        case KernelProfile::Box: return "box";
    }
    return "unknown";
}

Kernel Kernel::parse(const std::string& name) {
    if (name == "triangular") return {KernelProfile::Triangular};
    if (name == "epanechnikov") return {KernelProfile::Epanechnikov};
    if (name == "box") return {KernelProfile::Box};
    throw InputError("unknown kernel '" + name + "'");
}

double v_ker(const Kernel& kernel, int p) {
    require(p >= 1, "v_ker: p must be >= 1");
    return integrate([&](double u) { return kernel(u) * p * std::pow(u, p - 1); }, 0.0, 1.0, 1e-13);
}

void Dataset::validate() const {
    require(z.size() == y.size(), "Dataset: observation and label counts differ");
    require(y_true.empty() || y_true.size() == y.size(), "Dataset: ground truth count differs");
    for (std::size_t t = 1; t < z.size(); ++t) {
        require(z[t].size() == z[0].size(), "Dataset: observations differ in dimension");
        require(y[t].size() == y[0].size(), "Dataset: labels differ in dimension");
    }
}

void write_dataset_csv(std::ostream& os, const Dataset& data) {
    data.validate();
    const int q = data.z.empty() ? 0 : static_cast<int>(data.z[0].size());
    const int p = data.y.empty() ? 0 : static_cast<int>(data.y[0].size());
    os << 't';
    for (int j = 0; j < q; ++j) os << ",z" << j;
    for (int j = 0; j < p; ++j) os << ",y" << j;
    os << '\n';
    os.precision(17);
    for (int t = 0; t < data.size(); ++t) {
        os << t;
        for (int j = 0; j < q; ++j) os << ',' << data.z[t](j);
        for (int j = 0; j < p; ++j) os << ',' << data.y[t](j);
        os << '\n';
    }
}

std::string dataset_sidecar_json(const Dataset& data) {
    nlohmann::json j;
    j["sigma_eta"] = data.sigma_eta;
    j["sigma_0"] = data.sigma_0;
    j["map"] = data.map_id;
    j["seed"] = data.seed;
    j["T"] = data.size();
    return j.dump(2);
}

Dataset read_dataset(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw InputError("cannot open dataset '" + csv_path + "'");
    std::string line;
    if (!std::getline(in, line)) throw InputError("dataset '" + csv_path + "' is empty");
    int q = 0, p = 0;
    {
        std::istringstream header(line);
        std::string cell;
        while (std::getline(header, cell, ',')) {
            if (!cell.empty() && cell[0] == 'z') ++q;
            if (!cell.empty() && cell[0] == 'y') ++p;
        }
    }
    require(q > 0 && p > 0, "dataset header must contain z and y columns");
    Dataset data;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<double> values;
        while (std::getline(row, cell, ',')) values.push_back(std::stod(cell));
        require(static_cast<int>(values.size()) == 1 + q + p, "dataset row has wrong column count");
        data.z.push_back(Eigen::Map<const Vector>(values.data() + 1, q));
        data.y.push_back(Eigen::Map<const Vector>(values.data() + 1 + q, p));
    }
    std::ifstream side(csv_path + ".json");
    if (side) {
        const nlohmann::json j = nlohmann::json::parse(side);
        data.sigma_eta = j.value("sigma_eta", 0.0);
        data.sigma_0 = j.value("sigma_0", 0.0);
        data.map_id = j.value("map", std::string());
        data.seed = j.value("seed", std::uint64_t{0});
    }
    return data;
}

NwRegressor::NwRegressor(const Dataset& data, Kernel kernel, double bandwidth, double metric_scale)
    : kernel_(kernel), gamma_(bandwidth), scale_(metric_scale), sigma_eta_(data.sigma_eta) {
    data.validate();
    require(bandwidth > 0, "NwRegressor: bandwidth must be positive");
    require(metric_scale > 0, "NwRegressor: metric scale must be positive");
    require(data.size() > 0, "NwRegressor: empty dataset");
    const int q = static_cast<int>(data.z[0].size());
    const int p = static_cast<int>(data.y[0].size());
    Z_.resize(q, data.size());
    Y_.resize(p, data.size());
    for (int t = 0; t < data.size(); ++t) {
        Z_.col(t) = data.z[t];
        Y_.col(t) = data.y[t];
    }
    znorm2_ = Z_.colwise().squaredNorm().transpose();
}

NwPrediction NwRegressor::evaluate(const Vector& z) const {
    require(z.size() == Z_.rows(), "nw_predict: wrong observation dimension");
    const Vector d2 = ((znorm2_ - 2.0 * Z_.transpose() * z).array() + z.squaredNorm()).cwiseMax(0.0).matrix();
    const double inv = scale_ / gamma_;
    Vector w(d2.size());
    for (Eigen::Index t = 0; t < d2.size(); ++t) w(t) = kernel_(inv * std::sqrt(d2(t)));
    NwPrediction out;
    out.coverage = w.sum();
    out.y = out.coverage > 0 ? Vector(Y_ * w / out.coverage) : Vector::Zero(Y_.rows());
    return out;
}

NwPrediction nw_predict(const NwRegressor& reg, const Vector& z) { return reg.evaluate(z); }

KrrRegressor::KrrRegressor(const Dataset& data, double alpha, double lambda, double metric_scale)
    : alpha_(alpha), scale_(metric_scale) {
    data.validate();
    require(data.size() > 0, "KrrRegressor: empty dataset");
    require(alpha > 0, "KrrRegressor: alpha must be positive");
    require(lambda >= 0, "KrrRegressor: lambda must be nonnegative");
    const int T = data.size();
    Z_.resize(data.z[0].size(), T);
    Matrix Y(data.y[0].size(), T);
    for (int t = 0; t < T; ++t) {
        Z_.col(t) = data.z[t];
        Y.col(t) = data.y[t];
    }
    const double a = alpha_ * scale_ * scale_;
    Matrix K(T, T);
    for (int i = 0; i < T; ++i)
        for (int j = i; j < T; ++j) K(i, j) = K(j, i) = std::exp(-a * (Z_.col(i) - Z_.col(j)).squaredNorm());
    K.diagonal().array() += lambda;
    Eigen::FullPivLU<Matrix> lu(K);
    const double rcond = lu.rcond();
    if (!lu.isInvertible() || rcond < 1e-14) {
        std::ostringstream os;
        os << "krr: lambda I + K is numerically singular (reciprocal condition estimate " << rcond << ")";
        throw NumericalError(os.str());
    }
    coef_ = lu.solve(Y.transpose()).transpose();
}

Vector KrrRegressor::predict(const Vector& z) const {
    require(z.size() == Z_.rows(), "krr_predict: wrong observation dimension");
    const double a = alpha_ * scale_ * scale_;
    const Vector k = (-a * (Z_.colwise() - z).colwise().squaredNorm().transpose()).array().exp().matrix();
    return coef_ * k;
}

Vector krr_predict(const Dataset& data, double alpha, double lambda, const Vector& z) {
    return KrrRegressor(data, alpha, lambda).predict(z);
}

double pointwise_error_bound(double coverage, double gamma, double lh, double sigma_eta, int p, double delta) {
    require(delta > 0 && delta < 1, "pointwise_error_bound: delta must be in (0, 1)");
    require(p >= 1, "pointwise_error_bound: p must be >= 1");
    require(gamma >= 0 && lh >= 0 && sigma_eta >= 0, "pointwise_error_bound: negative parameter");
    if (!(coverage >= 1.0))
        throw CertificateUnavailable("pointwise_error_bound: coverage " + std::to_string(coverage) + " < 1");
    const double noise =
        sigma_eta / std::sqrt(coverage) * std::sqrt(std::log(double(p) * p * std::sqrt(coverage) / delta));
    return gamma * lh + noise;
}

DataDrivenCertificate::DataDrivenCertificate(const NwRegressor& reg, std::vector<Vector> anchors, double lh,
                                             double delta)
    : anchors_(std::move(anchors)), scale_(reg.metric_scale()) {
    require(!anchors_.empty(), "data_driven_uniform_certificate: empty anchor set");
    require(delta > 0 && delta < 1, "data_driven_uniform_certificate: delta must be in (0, 1)");
    const double gamma = reg.bandwidth();
    const double sigma = reg.sigma_eta();
    const double H = static_cast<double>(anchors_.size());
    const double T = reg.size();
    const int p = reg.p();
    base_ = gamma * lh;
    for (const auto& a : anchors_) {
        const double s = reg.coverage(a);
        if (!(s >= 1.0))
            throw CertificateUnavailable("data_driven_uniform_certificate: anchor coverage " + std::to_string(s) +
                                         " < 1");
        anchor_terms_.push_back(sigma / std::sqrt(s) * std::sqrt(std::log(double(p) * p * H * std::sqrt(s) / delta)));
        slope_.push_back(2.0 * sigma * T / s * reg.kernel().lipschitz() / gamma);
    }
}

double DataDrivenCertificate::operator()(const Vector& z) const {
    double best = kInf;
    for (std::size_t i = 0; i < anchors_.size(); ++i) {
        const double dist = scale_ * (z - anchors_[i]).norm();
        const double extra = slope_[i] == 0.0 ? 0.0 : slope_[i] * dist;
        best = std::min(best, anchor_terms_[i] + extra);
    }
    return base_ + best;
}

DataDrivenCertificate data_driven_uniform_certificate(const NwRegressor& reg, std::vector<Vector> anchors, double lh,
                                                      double delta) {
    return DataDrivenCertificate(reg, std::move(anchors), lh, delta);
}

BoundValue coverage_lower_bound(double T, double gamma, double rbar, double lg, int p, double v_kernel,
                                std::optional<double> lh, double delta) {
    require(T >= 0 && gamma > 0 && rbar > 0 && lg > 0 && v_kernel > 0 && p >= 1,
            "coverage_lower_bound: invalid parameter");
    BoundValue out;
    out.value = 0.5 * std::sqrt(T * v_kernel) * std::pow(gamma / (rbar * lg), 0.5 * p);
    if (lh) {
        require(delta > 0 && delta < 1, "coverage_lower_bound: delta must be in (0, 1)");
        const double needed = 8.0 / v_kernel * std::log(1.0 / delta) * std::pow(rbar * *lh * lg * lg, p) *
                              std::pow(gamma, -p);
        if (T < needed) {
            out.warning = true;
            out.note = "T below the sample-size condition (" + std::to_string(needed) + ")";
        }
    }
    return out;
}

BoundValue uniform_error_bound(double T, double gamma, double r, double lg, double lh, double sigma_eta, int p,
                               double delta, std::optional<UniformBoundConditions> conditions) {
    require(T >= 1 && gamma > 0 && r > 0 && lg > 0 && lh >= 0 && sigma_eta >= 0 && p >= 1,
            "uniform_error_bound: invalid parameter");
    require(delta > 0 && delta < 1, "uniform_error_bound: delta must be in (0, 1)");
    BoundValue out;
    const double logterm = std::log(T * T / delta);
    out.value = gamma * lh + sigma_eta / std::pow(T, 0.25) * std::pow(lg * std::sqrt(2.0) * r / gamma, 0.25 * p) *
                                 (std::sqrt(p * logterm) + 1.0);
    if (conditions) {
        const auto& c = *conditions;
        std::string note;
        const double wbound = c.decay_M * std::max(c.sigma_0, sigma_eta) / (1.0 - c.decay_rho);
        if (gamma > lg * ((std::sqrt(2.0) - 1.0) * r - wbound)) note += "bandwidth above the admissible maximum; ";
        const double t1 = 8.0 * p / c.v_kernel * std::pow(std::sqrt(2.0) * lh * lg * lg, p) * std::pow(r / gamma, p) *
                          logterm;
        const double t2 = std::pow(c.v_kernel, -1.0 / 3.0) * std::pow(24.0 * c.l_kernel * lh, 4.0 / 3.0) *
                          std::pow(lg, p / 3.0) * std::pow(r / gamma, (p + 4.0) / 3.0);
        if (T < std::max(t1, t2)) note += "T below the sample-size condition (" + std::to_string(std::max(t1, t2)) + ")";
        if (!note.empty()) {
            out.warning = true;
            out.note = note;
        }
    }
    return out;
}

BoundValue optimal_bandwidth(double T, double r_max, double lg, double lh, double sigma_eta, int p, double v_kernel) {
    require(T > 0 && r_max > 0 && lg > 0 && lh > 0 && sigma_eta >= 0 && p >= 1 && v_kernel > 0,
            "optimal_bandwidth: arguments must be positive");
    BoundValue out;
    const double rhs = std::sqrt(2.0) * std::sqrt(double(p)) * sigma_eta * std::pow(2.0 * r_max * lg, 0.25 * p) /
                       (lh * std::pow(T * v_kernel, 0.25));
    out.value = std::pow(rhs, 4.0 / (p + 4.0));
    if (sigma_eta == 0.0) {
        out.warning = true;
        out.note = "noiseless labels: the balancing bandwidth degenerates to zero";
    }
    return out;
}

}  // namespace pbc

#include "pbc/perception.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace pbc {

ObservationMap::LipschitzEstimate ObservationMap::sample_lipschitz(std::uint64_t seed, int pairs) const {
    Rng rng = make_rng(seed, 0x11b5);
    const double R = box();
    LipschitzEstimate est;
    for (int i = 0; i < pairs; ++i) {
        Vector a = uniform_box(rng, p(), R);
        Vector b;
        if (i % 2 == 0) {
            b = uniform_box(rng, p(), R);
        } else {
            const double scale = R * std::pow(10.0, uniform(rng, -4.0, 0.0));
            b = (a + uniform_box(rng, p(), scale)).cwiseMax(-R).cwiseMin(R);
        }
        const double dy = (a - b).cwiseAbs().maxCoeff();
        if (dy <= 1e-12 * R) continue;
        const double dz = metric(forward(a), forward(b));
        est.lg = std::max(est.lg, dz / dy);
        if (dz > 0) est.lh = std::max(est.lh, dy / dz);
    }
    return est;
}

void ObservationMap::calibrate(std::uint64_t seed, int pairs, double inflation) {
    const LipschitzEstimate est = sample_lipschitz(seed, pairs);
    require(est.lg > 0 && est.lh > 0, "ObservationMap: Lipschitz estimation failed");
    lg_ = inflation * est.lg;
    lh_ = inflation * est.lh;
}

SinusoidalLift::SinusoidalLift(int p, int q, double box, std::uint64_t seed) : box_(box), seed_(seed) {
    require(p >= 1 && p <= 12, "SinusoidalLift: p must be in [1, 12]");
    require(q >= 2 * p + 1, "SinusoidalLift: q must be at least 2p + 1");
    require(box > 0, "SinusoidalLift: box must be positive");
    constexpr double kSixth = std::numbers::pi / 6.0;
    Rng rng = make_rng(seed, 0x5157);
    for (int attempt = 0; attempt < 100; ++attempt) {
        omega_.resize(q, p);
        phi_.resize(q);
        for (int j = 0; j < q; ++j) {
            Vector row = uniform_box(rng, p, 1.0);
            const double l1 = row.lpNorm<1>();
            const double target = uniform(rng, 0.5, 1.0) * kSixth / box;
            omega_.row(j) = (row * (target / std::max(l1, 1e-12))).transpose();
            phi_(j) = uniform(rng, -kSixth, kSixth);
        }
        Eigen::JacobiSVD<Matrix> svd(omega_);
        const Vector sv = svd.singularValues();
        if (sv(p - 1) > 1e-3 * sv(0)) break;
    }
    pinv_ = omega_.completeOrthogonalDecomposition().pseudoInverse();

    // ||Omega||_{inf -> 2}: the maximum is attained at a vertex of the unit cube.
    double best = 0.0;
    const long vertices = 1L << p;
    for (long mask = 0; mask < vertices; ++mask) {
        Vector v(p);
        for (int i = 0; i < p; ++i) v(i) = (mask >> i) & 1 ? 1.0 : -1.0;
        best = std::max(best, (omega_ * v).norm());
    }
    scale_ = 1.0 / best;
    calibrate(seed);
}

std::string SinusoidalLift::id() const {
    std::ostringstream os;
    os << "sinusoidal:p=" << p() << ",q=" << q() << ",box=" << box_ << ",seed=" << seed_;
    return os.str();
}

Vector SinusoidalLift::forward(const Vector& y) const {
    require(y.size() == p(), "SinusoidalLift: wrong measurement dimension");
    return (omega_ * y + phi_).array().sin().matrix();
}

Vector SinusoidalLift::inverse(const Vector& z) const {
    require(z.size() == q(), "SinusoidalLift: wrong observation dimension");
    const Vector phase = z.cwiseMax(-1.0).cwiseMin(1.0).array().asin().matrix() - phi_;
    return pinv_ * phase;
}

RasterMap::RasterMap(int p, int side, double box, double extent, double width, std::uint64_t seed)
    : p_(p), side_(side), box_(box), extent_(extent), width_(width) {
    require(p >= 1 && p <= 3, "RasterMap: p must be 1, 2 or 3");
    require(side >= 2, "RasterMap: side must be at least 2");
    require(box > 0 && extent > box && width > 0, "RasterMap: need 0 < box < extent and width > 0");
    int q = 1;
    for (int i = 0; i < p; ++i) q *= side;
    centers_.resize(p, q);
    for (int idx = 0; idx < q; ++idx) {
        int rest = idx;
        for (int d = 0; d < p; ++d) {
            const int c = rest % side;
            rest /= side;
            centers_(d, idx) = -extent + 2.0 * extent * c / (side - 1);
        }
    }
    calibrate(seed);
}

std::string RasterMap::id() const {
    std::ostringstream os;
    os << "raster:p=" << p_ << ",side=" << side_ << ",box=" << box_ << ",extent=" << extent_ << ",width=" << width_;
    return os.str();
}

Vector RasterMap::forward(const Vector& y) const {
    require(y.size() == p_, "RasterMap: wrong measurement dimension");
    const Vector d2 = (centers_.colwise() - y).colwise().squaredNorm().transpose();
    return (-d2 / (2.0 * width_ * width_)).array().exp().matrix();
}

Vector RasterMap::inverse(const Vector& z) const {
    require(z.size() == q(), "RasterMap: wrong observation dimension");
    const Vector w = z.cwiseMax(0.0);
    const double mass = w.sum();
    Vector y = mass > 0 ? Vector(centers_ * w / mass) : Vector::Zero(p_);
    const double w2 = width_ * width_;
    double lambda = 1e-6;
    Vector r = forward(y) - z;
    double cost = r.squaredNorm();
    for (int it = 0; it < 200; ++it) {
        const Vector f = forward(y);
        Matrix J(q(), p_);
        for (int i = 0; i < q(); ++i) J.row(i) = (f(i) / w2) * (centers_.col(i) - y).transpose();
        const Matrix JtJ = J.transpose() * J;
        const Vector g = J.transpose() * r;
        const Vector step =
            (JtJ + lambda * Matrix::Identity(p_, p_) * std::max(1e-12, JtJ.diagonal().maxCoeff())).ldlt().solve(-g);
        const Vector candidate = y + step;
        const Vector rc = forward(candidate) - z;
        const double cc = rc.squaredNorm();
        if (cc <= cost) {
            y = candidate;
            r = rc;
            const bool done = step.norm() < 1e-14 * (1.0 + y.norm()) || cost - cc <= 1e-30;
            cost = cc;
            lambda = std::max(lambda * 0.1, 1e-12);
            if (done) break;
        } else {
            lambda *= 10.0;
            if (lambda > 1e8) break;
        }
    }
    return y;
}

std::shared_ptr<ObservationMap> make_observation_map(const std::string& kind, int p, double box, std::uint64_t seed) {
    if (kind == "sinusoidal") return std::make_shared<SinusoidalLift>(p, 2 * p + 3, box, seed);
    if (kind == "raster") {
        const double extent = 1.25 * box;
        const int side = p == 1 ? 41 : (p == 2 ? 21 : 9);
        const double width = 2.5 * extent / (side - 1);
        return std::make_shared<RasterMap>(p, side, box, extent, width, seed);
    }
    throw InputError("unknown observation map kind '" + kind + "'");
}

}  // namespace pbc

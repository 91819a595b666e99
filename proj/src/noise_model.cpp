#include "spme/noise_model.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

#include "spme/errors.hpp"

namespace spme {

DiagonalNoise::DiagonalNoise(const MeasureSpace& space, std::vector<State> modes,
                             std::vector<double> coeffs)
    : weights_(space.weights()), modes_(std::move(modes)), coeffs_(std::move(coeffs)) {
    if (modes_.size() != coeffs_.size()) throw DimensionMismatch(modes_.size(), coeffs_.size());
    for (const auto& e : modes_) space.check(e);
    for (double c : coeffs_)
        if (!(c > 0.0) || !std::isfinite(c))
            throw InvalidParameters("noise coefficients must be positive");
    for (std::size_t k = 0; k < modes_.size(); ++k)
        for (std::size_t j = k; j < modes_.size(); ++j) {
            const double g = space.inner(modes_[k], modes_[j]);
            if (std::abs(g - (k == j ? 1.0 : 0.0)) > 1e-10)
                throw InvalidParameters("noise modes are not orthonormal in L2(mu)");
        }
}

DiagonalNoise DiagonalNoise::none(const MeasureSpace& space) { return {space, {}, {}}; }

DiagonalNoise DiagonalNoise::constant(const MeasureSpace& space, double coeff) {
    const State e = State::Constant(static_cast<Eigen::Index>(space.size()),
                                    1.0 / std::sqrt(space.total_mass()));
    return {space, {e}, {coeff}};
}

DiagonalNoise DiagonalNoise::indicators(const MeasureSpace& space,
                                        const std::vector<std::vector<std::size_t>>& sets,
                                        const std::vector<double>& coeffs) {
    std::vector<State> modes;
    for (const auto& set : sets) {
        State e = State::Zero(static_cast<Eigen::Index>(space.size()));
        double mass = 0.0;
        for (std::size_t i : set) {
            if (i >= space.size()) throw InvalidParameters("indicator index out of range");
            e[static_cast<Eigen::Index>(i)] = 1.0;
            mass += space.weights()[static_cast<Eigen::Index>(i)];
        }
        if (mass <= 0.0) throw InvalidParameters("indicator mode over an empty set");
        modes.push_back(e / std::sqrt(mass));
    }
    return {space, std::move(modes), coeffs};
}

DiagonalNoise DiagonalNoise::eigenmodes(const DirichletOperator& op,
                                        const std::vector<double>& coeffs) {
    if (coeffs.size() > op.size()) throw InvalidParameters("more eigenmodes than points");
    const Spectrum sp = op.spectrum();
    std::vector<State> modes;
    for (std::size_t k = 0; k < coeffs.size(); ++k) {
        State e = sp.vectors.col(static_cast<Eigen::Index>(k));
        // Fix the sign so the largest entry is positive.
        Eigen::Index imax;
        e.cwiseAbs().maxCoeff(&imax);
        if (e[imax] < 0.0) e = -e;
        modes.push_back(std::move(e));
    }
    return {op.space(), std::move(modes), coeffs};
}

State DiagonalNoise::apply(const State& x, const State& dW) const {
    if (x.size() != weights_.size())
        throw DimensionMismatch(static_cast<std::size_t>(weights_.size()),
                                static_cast<std::size_t>(x.size()));
    if (static_cast<std::size_t>(dW.size()) != modes_.size())
        throw DimensionMismatch(modes_.size(), static_cast<std::size_t>(dW.size()));
    State field = State::Zero(x.size());
    for (std::size_t k = 0; k < modes_.size(); ++k)
        field += (coeffs_[k] * dW[static_cast<Eigen::Index>(k)]) * modes_[k];
    return x.cwiseProduct(field);
}

Eigen::MatrixXd DiagonalNoise::dense_operator(const State& x) const {
    // B(x)h = Σ_k μ_k (x·e_k) e_kᵀ M h.
    const auto n = weights_.size();
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t k = 0; k < modes_.size(); ++k)
        B += coeffs_[k] * x.cwiseProduct(modes_[k]) *
             modes_[k].cwiseProduct(weights_).transpose();
    return B;
}

double DiagonalNoise::hs_norm_l2(const State& x) const {
    double s = 0.0;
    for (std::size_t k = 0; k < modes_.size(); ++k) {
        const State v = coeffs_[k] * x.cwiseProduct(modes_[k]);
        s += (weights_.array() * v.array().square()).sum();
    }
    return std::sqrt(s);
}

double DiagonalNoise::hs_moment_2m(const State& x, double m) const {
    if (!(m >= 1.0)) throw InvalidParameters("moment exponent m must be >= 1");
    State density = State::Zero(x.size());
    for (std::size_t k = 0; k < modes_.size(); ++k)
        density.array() += (coeffs_[k] * x.cwiseProduct(modes_[k])).array().square();
    return (weights_.array() * density.array().pow(m)).sum();
}

double DiagonalNoise::hs_norm_dual(const DirichletOperator& op, const State& x,
                                   double nu) const {
    double s = 0.0;
    for (std::size_t k = 0; k < modes_.size(); ++k) {
        const double d = op.dual_norm(coeffs_[k] * x.cwiseProduct(modes_[k]), nu);
        s += d * d;
    }
    return std::sqrt(s);
}

double DiagonalNoise::C3() const {
    double s = 0.0;
    for (std::size_t k = 0; k < modes_.size(); ++k) {
        const double sup = modes_[k].cwiseAbs().maxCoeff();
        s += coeffs_[k] * coeffs_[k] * sup * sup;
    }
    return std::sqrt(s);
}

double DiagonalNoise::C4(double m) const { return std::pow(C3(), 2.0 * m); }

std::vector<double> DiagonalNoise::multiplier_bounds(const DirichletOperator& op,
                                                     double nu) const {
    std::vector<double> out;
    if (modes_.empty()) return out;
    // Gram matrix of ‖·‖²_{F*ν}: A = M(νM + S)^{-1}M.
    const auto n = static_cast<Eigen::Index>(op.size());
    Eigen::MatrixXd A(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        State ej = State::Zero(n);
        ej[j] = 1.0;
        A.col(j) = op.resolve(ej, nu).cwiseProduct(op.space().weights());
    }
    A = 0.5 * (A + A.transpose());
    for (const auto& e : modes_) {
        const Eigen::MatrixXd DAD = e.asDiagonal() * A * e.asDiagonal();
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(DAD, A,
                                                                     Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success) throw Error("multiplier eigenproblem failed");
        out.push_back(std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff())));
    }
    return out;
}

double DiagonalNoise::C2(const DirichletOperator& op, const std::vector<double>& nu_grid) const {
    double best = 0.0;
    for (double nu : nu_grid) {
        const auto xi = multiplier_bounds(op, nu);
        double s = 0.0;
        for (std::size_t k = 0; k < xi.size(); ++k) s += coeffs_[k] * coeffs_[k] * xi[k] * xi[k];
        best = std::max(best, std::sqrt(s));
    }
    return best;
}

double DiagonalNoise::summability(const DirichletOperator& op,
                                  const std::vector<double>& nu_grid) const {
    std::vector<double> xi(modes_.size(), 0.0);
    for (double nu : nu_grid) {
        const auto x = multiplier_bounds(op, nu);
        for (std::size_t k = 0; k < x.size(); ++k) xi[k] = std::max(xi[k], x[k]);
    }
    double s = 0.0;
    for (std::size_t k = 0; k < modes_.size(); ++k) {
        const double sup = modes_[k].cwiseAbs().maxCoeff();
        s += coeffs_[k] * coeffs_[k] * (xi[k] * xi[k] + sup * sup);
    }
    return s;
}

// ---------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t stream_id) {
    return splitmix64(splitmix64(master_seed) ^ (stream_id * 0xd1b54a32d192ed03ULL));
}

IncrementStream::IncrementStream(std::uint64_t master_seed, std::uint64_t stream_id,
                                 std::size_t modes)
    : stream_id_(stream_id), modes_(modes), engine_(derive_seed(master_seed, stream_id)) {}

State IncrementStream::next(double dt) {
    if (!(dt >= 0.0)) throw InvalidParameters("increment needs dt >= 0");
    const double s = std::sqrt(dt);
    State out(static_cast<Eigen::Index>(modes_));
    for (std::size_t k = 0; k < modes_; ++k) out[static_cast<Eigen::Index>(k)] = s * normal_(engine_);
    return out;
}

}  // namespace spme

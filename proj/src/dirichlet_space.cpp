#include "spme/dirichlet_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "spme/errors.hpp"

namespace spme {

namespace {

constexpr double kPivotTol = 1e-12;

bool pivots_positive(const State& d) {
    if (d.size() == 0) return true;
    const double top = d.cwiseAbs().maxCoeff();
    return d.minCoeff() > kPivotTol * top;
}

}  // namespace

// ---------------------------------------------------------------------------
// MeasureSpace

MeasureSpace::MeasureSpace(State weights, std::vector<std::string> labels)
    : weights_(std::move(weights)), labels_(std::move(labels)) {
    if (weights_.size() == 0) throw InvalidParameters("measure space needs at least one point");
    for (Eigen::Index i = 0; i < weights_.size(); ++i)
        if (!(weights_[i] > 0.0) || !std::isfinite(weights_[i]))
            throw InvalidParameters("point masses must be positive and finite");
    if (!labels_.empty() && labels_.size() != size())
        throw DimensionMismatch(size(), labels_.size());
}

void MeasureSpace::check(const State& u) const {
    if (static_cast<std::size_t>(u.size()) != size())
        throw DimensionMismatch(size(), static_cast<std::size_t>(u.size()));
}

double MeasureSpace::inner(const State& u, const State& v) const {
    check(u);
    check(v);
    return (weights_.array() * u.array() * v.array()).sum();
}

double MeasureSpace::norm2(const State& u) const { return std::sqrt(inner(u, u)); }

double MeasureSpace::lp_pow(const State& u, double p) const {
    check(u);
    if (p == 2.0) return (weights_.array() * u.array().square()).sum();
    return (weights_.array() * u.array().abs().pow(p)).sum();
}

const char* to_string(OperatorKind kind) {
    switch (kind) {
        case OperatorKind::grid_dirichlet: return "grid_dirichlet";
        case OperatorKind::spectral_function: return "spectral_function";
        case OperatorKind::jump_kernel: return "jump_kernel";
        case OperatorKind::sierpinski: return "sierpinski";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Bernstein

Bernstein::Bernstein(std::vector<Term> terms) : terms_(std::move(terms)) {
    if (terms_.empty()) throw InvalidBernstein("Bernstein function needs at least one term");
    bool any = false;
    for (const auto& t : terms_) {
        if (!(t.weight >= 0.0) || !std::isfinite(t.weight))
            throw InvalidBernstein("Bernstein weights must be nonnegative");
        if (t.kind == Kind::power && !(t.param > 0.0 && t.param <= 1.0))
            throw InvalidBernstein("power Bernstein exponent must lie in (0, 1]");
        if (t.kind == Kind::log1p && !(t.param > 0.0))
            throw InvalidBernstein("log1p Bernstein scale must be positive");
        any = any || t.weight > 0.0;
    }
    if (!any) throw InvalidBernstein("Bernstein function is identically zero");
}

Bernstein Bernstein::power(double beta, double weight) {
    return Bernstein({{Kind::power, weight, beta}});
}
Bernstein Bernstein::log1p(double scale, double weight) {
    return Bernstein({{Kind::log1p, weight, scale}});
}
Bernstein Bernstein::linear(double weight) { return Bernstein({{Kind::linear, weight, 0.0}}); }

double Bernstein::operator()(double s) const {
    double out = 0.0;
    for (const auto& t : terms_) {
        switch (t.kind) {
            case Kind::power: out += t.weight * std::pow(s, t.param); break;
            case Kind::log1p: out += t.weight * std::log1p(t.param * s); break;
            case Kind::linear: out += t.weight * s; break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// ShiftedSystem

ShiftedSystem::ShiftedSystem(const SparseMatrix& S, bool dense) : dense_(dense) {
    if (dense_) {
        S_dense_ = Eigen::MatrixXd(S);
        return;
    }
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(S.nonZeros() + S.rows()));
    for (Eigen::Index k = 0; k < S.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(S, k); it; ++it)
            trip.emplace_back(it.row(), it.col(), it.value());
    for (Eigen::Index i = 0; i < S.rows(); ++i) trip.emplace_back(i, i, 0.0);
    pattern_.resize(S.rows(), S.cols());
    pattern_.setFromTriplets(trip.begin(), trip.end());
    pattern_.makeCompressed();
    diag_slot_.resize(static_cast<std::size_t>(S.rows()));
    for (Eigen::Index k = 0; k < pattern_.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(pattern_, k); it; ++it)
            if (it.row() == it.col())
                diag_slot_[static_cast<std::size_t>(k)] =
                    &it.valueRef() - pattern_.valuePtr();
    work_ = pattern_;
    sparse_.analyzePattern(work_);
}

bool ShiftedSystem::factorize(const State& diag, double scale) {
    if (dense_) {
        Eigen::MatrixXd A = scale * S_dense_;
        A.diagonal() += diag;
        dense_ldlt_.compute(A);
        return dense_ldlt_.info() == Eigen::Success && pivots_positive(dense_ldlt_.vectorD());
    }
    const Eigen::Index nnz = pattern_.nonZeros();
    double* w = work_.valuePtr();
    const double* p = pattern_.valuePtr();
    for (Eigen::Index i = 0; i < nnz; ++i) w[i] = scale * p[i];
    for (std::size_t i = 0; i < diag_slot_.size(); ++i)
        w[diag_slot_[i]] += diag[static_cast<Eigen::Index>(i)];
    sparse_.factorize(work_);
    return sparse_.info() == Eigen::Success && pivots_positive(sparse_.vectorD());
}

State ShiftedSystem::solve(const State& rhs) const {
    return dense_ ? State(dense_ldlt_.solve(rhs)) : State(sparse_.solve(rhs));
}

// ---------------------------------------------------------------------------
// DirichletOperator

struct DirichletOperator::Factor {
    Factor(const SparseMatrix& S, bool dense) : system(S, dense) {}
    ShiftedSystem system;
    bool ok = false;
};

struct DirichletOperator::Cache {
    std::mutex mutex;
    std::map<double, std::shared_ptr<const Factor>> factors;
    std::optional<Spectrum> spectrum;
    std::optional<bool> transient;
};

DirichletOperator::DirichletOperator(MeasureSpace space, SparseMatrix energy, OperatorKind kind,
                                     std::optional<JumpKernel> kernel, bool dense)
    : space_(std::move(space)), S_(std::move(energy)), kind_(kind),
      kernel_(std::move(kernel)), dense_(dense), cache_(std::make_shared<Cache>()) {
    const auto n = static_cast<Eigen::Index>(space_.size());
    if (S_.rows() != n || S_.cols() != n)
        throw DimensionMismatch(space_.size(), static_cast<std::size_t>(S_.rows()));
    S_.makeCompressed();
    const SparseMatrix St = S_.transpose();
    const double asym = (S_ - St).norm();
    if (asym > 1e-12 * std::max(1.0, S_.norm()))
        throw InvalidParameters("energy matrix is not symmetric");
}

const JumpKernel& DirichletOperator::kernel() const {
    if (!kernel_) throw NoKernel(std::string("operator of kind ") + to_string(kind_) +
                                 " carries no jump kernel");
    return *kernel_;
}

Eigen::MatrixXd DirichletOperator::generator() const {
    Eigen::MatrixXd L = -Eigen::MatrixXd(S_);
    for (Eigen::Index i = 0; i < L.rows(); ++i) L.row(i) /= space_.weights()[i];
    return L;
}

State DirichletOperator::apply(const State& u) const {
    space_.check(u);
    return -(S_ * u).cwiseQuotient(space_.weights());
}

double DirichletOperator::energy(const State& u, const State& v) const {
    space_.check(u);
    space_.check(v);
    return u.dot(S_ * v);
}

std::shared_ptr<const DirichletOperator::Factor> DirichletOperator::factor(double nu) const {
    if (!(nu >= 0.0) || !std::isfinite(nu)) throw InvalidParameters("nu must be >= 0");
    std::lock_guard<std::mutex> lock(cache_->mutex);
    auto it = cache_->factors.find(nu);
    if (it != cache_->factors.end()) return it->second;
    if (cache_->factors.size() >= 64) cache_->factors.clear();
    auto f = std::make_shared<Factor>(S_, dense_);
    f->ok = f->system.factorize(nu * space_.weights(), 1.0);
    cache_->factors.emplace(nu, f);
    return f;
}

bool DirichletOperator::transient() const {
    {
        std::lock_guard<std::mutex> lock(cache_->mutex);
        if (cache_->transient) return *cache_->transient;
    }
    const bool ok = factor(0.0)->ok;
    std::lock_guard<std::mutex> lock(cache_->mutex);
    cache_->transient = ok;
    return ok;
}

State DirichletOperator::resolve(const State& l, double nu) const {
    space_.check(l);
    auto f = factor(nu);
    if (!f->ok) {
        if (nu == 0.0) throw NotTransient("-L is singular; the nu = 0 norm is undefined");
        throw InvalidParameters("nu - L is not positive definite");
    }
    return f->system.solve(l.cwiseProduct(space_.weights()));
}

double DirichletOperator::dual_norm(const State& l, double nu) const {
    const State z = resolve(l, nu);
    return std::sqrt(std::max(0.0, space_.inner(l, z)));
}

double DirichletOperator::dual_norm_of_image_sq(const State& w, double nu) const {
    return nu * space_.inner(w, w) + energy(w, w);
}

Spectrum DirichletOperator::spectrum() const {
    {
        std::lock_guard<std::mutex> lock(cache_->mutex);
        if (cache_->spectrum) return *cache_->spectrum;
    }
    const State isq = space_.weights().cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd A = isq.asDiagonal() * Eigen::MatrixXd(S_) * isq.asDiagonal();
    A = 0.5 * (A + A.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    if (es.info() != Eigen::Success) throw Error("eigendecomposition failed");
    Spectrum s{es.eigenvalues(), isq.asDiagonal() * es.eigenvectors()};
    std::lock_guard<std::mutex> lock(cache_->mutex);
    cache_->spectrum = s;
    return s;
}

State DirichletOperator::carre_du_champ(const State& u, const State& v) const {
    const JumpKernel& k = kernel();
    space_.check(u);
    space_.check(v);
    State g = State::Zero(u.size());
    for (Eigen::Index c = 0; c < k.J.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(k.J, c); it; ++it) {
            const Eigen::Index x = it.row(), y = it.col();
            g[x] += 2.0 * (u[x] - u[y]) * (v[x] - v[y]) * it.value();
        }
    return g;
}

double DirichletOperator::killing_energy(const State& u, const State& v) const {
    const JumpKernel& k = kernel();
    space_.check(u);
    space_.check(v);
    return (k.killing.array() * space_.weights().array() * u.array() * v.array()).sum();
}

H4Report DirichletOperator::check_h4ii(const State& u, const std::function<double(double)>& phi,
                                       double lipschitz) const {
    kernel();
    State pu = u.unaryExpr(phi);
    H4Report r;
    r.lhs = carre_du_champ(pu, pu);
    r.rhs = carre_du_champ(u, pu);
    r.C5 = 2.0 * lipschitz;
    r.max_violation = std::max(0.0, (r.lhs - r.C5 * r.rhs).maxCoeff());
    return r;
}

// ---------------------------------------------------------------------------
// Builders

namespace {

DirichletOperator assemble_jump(const MeasureSpace& space, SparseMatrix J, State killing,
                                OperatorKind kind, bool allow_recurrent) {
    const auto n = static_cast<Eigen::Index>(space.size());
    if (J.rows() != n || J.cols() != n)
        throw DimensionMismatch(space.size(), static_cast<std::size_t>(J.rows()));
    if (killing.size() == 0) killing = State::Zero(n);
    space.check(killing);
    J.makeCompressed();
    const State& mu = space.weights();
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(killing[i] >= 0.0)) throw InvalidParameters("killing rates must be >= 0");

    // A = diag(μ)J must be symmetric.
    SparseMatrix A = mu.asDiagonal() * J;
    SparseMatrix At = A.transpose();
    for (Eigen::Index c = 0; c < J.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(J, c); it; ++it) {
            if (it.row() == it.col() && it.value() != 0.0)
                throw InvalidParameters("jump kernel must vanish on the diagonal");
            if (!(it.value() >= 0.0)) throw InvalidParameters("jump kernel must be >= 0");
        }
    const double asym = (A - At).norm();
    if (asym > 1e-12 * std::max(1.0, A.norm()))
        throw InvalidParameters("jump kernel is not mu-symmetric");

    SparseMatrix sym = A + At;  // μ_i J_ij + μ_j J_ji
    State rowsum = sym * State::Ones(n);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(sym.nonZeros() + n));
    for (Eigen::Index c = 0; c < sym.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(sym, c); it; ++it)
            if (it.row() != it.col()) trip.emplace_back(it.row(), it.col(), -it.value());
    for (Eigen::Index i = 0; i < n; ++i)
        trip.emplace_back(i, i, rowsum[i] + mu[i] * killing[i]);
    SparseMatrix S(n, n);
    S.setFromTriplets(trip.begin(), trip.end());

    DirichletOperator op(space, std::move(S), kind, JumpKernel{std::move(J), std::move(killing)});
    if (!allow_recurrent && !op.transient())
        throw NotTransient("jump operator is singular; add killing to make -L invertible");
    return op;
}

}  // namespace

DirichletOperator build_grid_dirichlet(int dim, const std::vector<int>& sides, double h) {
    if (dim != 1 && dim != 2) throw InvalidParameters("grid dimension must be 1 or 2");
    if (sides.size() != static_cast<std::size_t>(dim))
        throw DimensionMismatch(static_cast<std::size_t>(dim), sides.size());
    for (int s : sides)
        if (s < 1) throw InvalidParameters("grid sides must be >= 1");
    if (!(h > 0.0)) throw InvalidParameters("mesh width h must be positive");

    const int nx = sides[0];
    const int ny = dim == 2 ? sides[1] : 1;
    const Eigen::Index n = static_cast<Eigen::Index>(nx) * ny;
    const double rate = 1.0 / (h * h);
    std::vector<Eigen::Triplet<double>> trip;
    State killing = State::Zero(n);
    std::vector<std::string> labels;
    labels.reserve(static_cast<std::size_t>(n));
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const Eigen::Index id = i + static_cast<Eigen::Index>(nx) * j;
            labels.push_back(dim == 1 ? std::to_string(i)
                                      : std::to_string(i) + ":" + std::to_string(j));
            int missing = 0;
            auto link = [&](int ii, int jj, bool inside) {
                if (inside)
                    trip.emplace_back(id, ii + static_cast<Eigen::Index>(nx) * jj, 0.5 * rate);
                else
                    ++missing;
            };
            link(i - 1, j, i > 0);
            link(i + 1, j, i + 1 < nx);
            if (dim == 2) {
                link(i, j - 1, j > 0);
                link(i, j + 1, j + 1 < ny);
            }
            killing[id] = missing * rate;
        }
    SparseMatrix J(n, n);
    J.setFromTriplets(trip.begin(), trip.end());
    MeasureSpace space(State::Constant(n, std::pow(h, dim)), std::move(labels));
    return assemble_jump(space, std::move(J), std::move(killing), OperatorKind::grid_dirichlet,
                         false);
}

DirichletOperator build_spectral_function(const DirichletOperator& base, const Bernstein& f) {
    if (!base.transient())
        throw NotTransient("spectral transform needs a strictly negative definite base");
    const Spectrum sp = base.spectrum();
    State ftheta(sp.theta.size());
    for (Eigen::Index i = 0; i < sp.theta.size(); ++i) ftheta[i] = f(sp.theta[i]);
    const State& mu = base.space().weights();
    const Eigen::MatrixXd MV = mu.asDiagonal() * sp.vectors;
    Eigen::MatrixXd S = MV * ftheta.asDiagonal() * MV.transpose();
    S = 0.5 * (S + S.transpose());
    DirichletOperator op(base.space(), S.sparseView(), OperatorKind::spectral_function,
                         std::nullopt, true);
    if (!op.transient()) throw NotTransient("spectral transform is singular");
    return op;
}

DirichletOperator build_jump_kernel(const MeasureSpace& space, const SparseMatrix& J,
                                    const State& killing, bool allow_recurrent) {
    return assemble_jump(space, J, killing, OperatorKind::jump_kernel, allow_recurrent);
}

DirichletOperator build_sierpinski(int level, double c, double lambda_p, double rho) {
    if (level < 1) throw InvalidParameters("Sierpinski level must be >= 1");
    if (level > 8) throw InvalidParameters("Sierpinski level above 8 exceeds 10^4 points");
    if (!(c > 0.0 && c < lambda_p && lambda_p < 1.0))
        throw InvalidParameters("Sierpinski parameters need 0 < c < lambda_p < 1");
    if (!(rho > 0.0)) throw InvalidParameters("Sierpinski conductance scale must be positive");

    struct Word {
        std::string label;
        int depth;
        long long ox, oy;  // cell origin in units of 2^{-depth}
        Eigen::Index parent;
    };
    const long long px[3] = {0, 1, 0};
    const long long py[3] = {0, 0, 1};
    std::vector<Word> words{{"root", 0, 0, 0, -1}};
    std::vector<std::pair<std::size_t, std::size_t>> by_level{{0, 1}};
    for (int d = 1; d <= level; ++d) {
        const auto [b, e] = by_level.back();
        const std::size_t start = words.size();
        for (std::size_t w = b; w < e; ++w)
            for (int k = 0; k < 3; ++k) {
                const Word& p = words[w];
                std::string label = (d == 1 ? std::string() : p.label) + char('0' + k);
                words.push_back({std::move(label), d, 2 * p.ox + px[k], 2 * p.oy + py[k],
                                 static_cast<Eigen::Index>(w)});
            }
        by_level.emplace_back(start, words.size());
    }

    const auto n = static_cast<Eigen::Index>(words.size());
    const double ratio = c / (3.0 * lambda_p);
    State mu(n);
    for (Eigen::Index i = 0; i < n; ++i)
        mu[i] = std::pow(ratio, words[static_cast<std::size_t>(i)].depth);

    std::vector<Eigen::Triplet<double>> trip;
    auto edge = [&](Eigen::Index x, Eigen::Index y, double cond) {
        trip.emplace_back(x, y, cond / (2.0 * mu[x]));
        trip.emplace_back(y, x, cond / (2.0 * mu[y]));
    };
    for (Eigen::Index i = 1; i < n; ++i) {
        const Word& w = words[static_cast<std::size_t>(i)];
        edge(w.parent, i, std::pow(rho, w.depth));
    }
    for (int d = 1; d <= level; ++d) {
        const auto [b, e] = by_level[static_cast<std::size_t>(d)];
        std::map<std::pair<long long, long long>, std::vector<Eigen::Index>> corners;
        for (std::size_t w = b; w < e; ++w)
            for (int k = 0; k < 3; ++k)
                corners[{words[w].ox + px[k], words[w].oy + py[k]}].push_back(
                    static_cast<Eigen::Index>(w));
        for (const auto& [pt, ids] : corners)
            for (std::size_t a = 0; a < ids.size(); ++a)
                for (std::size_t z = a + 1; z < ids.size(); ++z)
                    edge(ids[a], ids[z], std::pow(rho, d));
    }
    SparseMatrix J(n, n);
    J.setFromTriplets(trip.begin(), trip.end());

    State killing = State::Zero(n);
    const auto [b, e] = by_level.back();
    for (std::size_t w = b; w < e; ++w)
        killing[static_cast<Eigen::Index>(w)] =
            3.0 * std::pow(rho, level + 1) / mu[static_cast<Eigen::Index>(w)];

    std::vector<std::string> labels;
    labels.reserve(words.size());
    for (auto& w : words) labels.push_back(std::move(w.label));
    return assemble_jump(MeasureSpace(std::move(mu), std::move(labels)), std::move(J),
                         std::move(killing), OperatorKind::sierpinski, false);
}

void export_operator_csv(const DirichletOperator& op, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw Error("cannot write " + (dir / name).string());
        f << std::setprecision(17);
        return f;
    };
    const auto& labels = op.space().labels();
    {
        auto f = open("mu.csv");
        f << "index,label,mu\n";
        for (std::size_t i = 0; i < op.size(); ++i)
            f << i << ',' << (labels.empty() ? std::to_string(i) : labels[i]) << ','
              << op.space().weights()[static_cast<Eigen::Index>(i)] << '\n';
    }
    {
        auto f = open("generator.csv");
        f << "row,col,value\n";
        const Eigen::MatrixXd L = op.generator();
        for (Eigen::Index i = 0; i < L.rows(); ++i)
            for (Eigen::Index j = 0; j < L.cols(); ++j)
                if (L(i, j) != 0.0) f << i << ',' << j << ',' << L(i, j) << '\n';
    }
    {
        auto f = open("spectrum.csv");
        f << "index,theta\n";
        const Spectrum s = op.spectrum();
        for (Eigen::Index i = 0; i < s.theta.size(); ++i) f << i << ',' << s.theta[i] << '\n';
    }
}

}  // namespace spme

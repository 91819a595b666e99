#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace spme {

using State = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Finite measure space E = {0, ..., n-1} with point masses μ_i > 0.
class MeasureSpace {
public:
    explicit MeasureSpace(State weights, std::vector<std::string> labels = {});

    std::size_t size() const noexcept { return static_cast<std::size_t>(weights_.size()); }
    const State& weights() const noexcept { return weights_; }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    double total_mass() const { return weights_.sum(); }

    /// ⟨u, v⟩_μ = Σ μ_i u_i v_i.
    double inner(const State& u, const State& v) const;
    double norm2(const State& u) const;
    /// |u|_p^p = Σ μ_i |u_i|^p.
    double lp_pow(const State& u, double p) const;

    void check(const State& u) const;

private:
    State weights_;
    std::vector<std::string> labels_;
};

enum class OperatorKind { grid_dirichlet, spectral_function, jump_kernel, sierpinski };

const char* to_string(OperatorKind kind);

/// Jump kernel J_ij ≥ 0 (μ-symmetric) and killing rates κ_i ≥ 0.
struct JumpKernel {
    SparseMatrix J;
    State killing;
};

/// Nonnegative combination of whitelisted Bernstein functions.
class Bernstein {
public:
    enum class Kind { power, log1p, linear };
    struct Term {
        Kind kind;
        double weight;
        double param;  // exponent for power, scale for log1p, unused for linear
    };

    Bernstein() = default;
    explicit Bernstein(std::vector<Term> terms);

    /// w·s^β with β ∈ (0, 1].
    static Bernstein power(double beta, double weight = 1.0);
    /// w·log(1 + c·s).
    static Bernstein log1p(double scale, double weight = 1.0);
    static Bernstein linear(double weight = 1.0);

    double operator()(double s) const;
    const std::vector<Term>& terms() const noexcept { return terms_; }

private:
    std::vector<Term> terms_;
};

/// Repeated factorization of diag(d) + s·S for the energy matrix S of one
/// operator, sharing the symbolic analysis between calls.
class ShiftedSystem {
public:
    ShiftedSystem(const SparseMatrix& S, bool dense);

    /// Returns false if the matrix is not numerically positive definite
    /// (smallest pivot below 1e-12 of the largest).
    bool factorize(const State& diag, double scale);
    State solve(const State& rhs) const;

private:
    bool dense_;
    SparseMatrix pattern_;
    std::vector<Eigen::Index> diag_slot_;
    Eigen::MatrixXd S_dense_;
    SparseMatrix work_;
    Eigen::SimplicialLDLT<SparseMatrix> sparse_;
    Eigen::LDLT<Eigen::MatrixXd> dense_ldlt_;
};

/// μ-orthonormal eigenpairs of −L: (−L)v_i = θ_i v_i, θ ascending.
struct Spectrum {
    State theta;
    Eigen::MatrixXd vectors;
};

/// Result of the pointwise check Γ(φ(u),φ(u)) ≤ C5·Γ(u,φ(u)).
struct H4Report {
    State lhs;
    State rhs;
    double C5 = 0.0;
    double max_violation = 0.0;  // max_i (lhs_i − C5·rhs_i), clipped at 0
    bool holds(double slack) const { return max_violation <= slack; }
};

/// Symmetric negative semidefinite operator L on L²(μ) with energy
/// ℰ(u,v) = ⟨−Lu, v⟩_μ.
///
/// Stored through the symmetric energy matrix S = M(−L), M = diag(μ).
/// Factorizations and the spectrum are computed lazily and cached; the
/// caches are guarded so concurrent read-only use is safe, and copies share them.
class DirichletOperator {
public:
    DirichletOperator(MeasureSpace space, SparseMatrix energy, OperatorKind kind,
                      std::optional<JumpKernel> kernel, bool dense = false);

    const MeasureSpace& space() const noexcept { return space_; }
    std::size_t size() const noexcept { return space_.size(); }
    OperatorKind kind() const noexcept { return kind_; }
    const SparseMatrix& energy_matrix() const noexcept { return S_; }
    bool is_dense() const noexcept { return dense_; }
    bool has_kernel() const noexcept { return kernel_.has_value(); }
    const JumpKernel& kernel() const;

    /// Dense copy of L.
    Eigen::MatrixXd generator() const;
    State apply(const State& u) const;  // L u
    double energy(const State& u, const State& v) const;

    /// −L strictly positive definite (the transience surrogate).
    bool transient() const;

    /// (ν − L)^{-1} l.
    State resolve(const State& l, double nu) const;
    /// ⟨l, (ν − L)^{-1} l⟩_μ^{1/2}; ν = 0 gives the extended dual norm.
    double dual_norm(const State& l, double nu) const;
    /// ‖(ν − L)w‖²_{F*ν} = ⟨(ν − L)w, w⟩_μ.
    double dual_norm_of_image_sq(const State& w, double nu) const;

    Spectrum spectrum() const;

    State carre_du_champ(const State& u, const State& v) const;
    /// Σ κ_i μ_i u_i v_i.
    double killing_energy(const State& u, const State& v) const;
    H4Report check_h4ii(const State& u, const std::function<double(double)>& phi,
                        double lipschitz) const;

private:
    struct Factor;
    struct Cache;
    std::shared_ptr<const Factor> factor(double nu) const;

    MeasureSpace space_;
    SparseMatrix S_;
    OperatorKind kind_;
    std::optional<JumpKernel> kernel_;
    bool dense_;

    std::shared_ptr<Cache> cache_;
};

/// Finite-difference Laplacian with Dirichlet killing on a box of
/// `sides` interior points per axis, mesh width h and μ_i = h^dim.
DirichletOperator build_grid_dirichlet(int dim, const std::vector<int>& sides, double h);

/// −f(−L_base) for a Bernstein function f.
DirichletOperator build_spectral_function(const DirichletOperator& base, const Bernstein& f);

/// ℰ(u,v) = Σ_i Σ_j (u_i − u_j)(v_i − v_j) J_ij μ_i + Σ κ_i μ_i u_i v_i.
/// Throws NotTransient if the result is singular unless allow_recurrent.
DirichletOperator build_jump_kernel(const MeasureSpace& space, const SparseMatrix& J,
                                    const State& killing, bool allow_recurrent = false);

/// Truncated Sierpiński graph: words over {0,1,2} of length ≤ level with
/// vertical (parent/child) and horizontal (touching cells) edges,
/// μ(x) = (c/(3λ_p))^{|x|}, conductance ρ^{max(|x|,|y|)} and killing at the
/// deepest level equal to three absent children.
DirichletOperator build_sierpinski(int level, double c, double lambda_p, double rho = 1.0);

/// Writes mu.csv, generator.csv and spectrum.csv into dir.
void export_operator_csv(const DirichletOperator& op, const std::filesystem::path& dir);

}  // namespace spme

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "spme/dirichlet_space.hpp"

namespace spme {

/// Multiplicative noise B(x)h = Σ_k μ_k ⟨e_k, h⟩_μ x·e_k over a finite family
/// of μ-orthonormal modes e_k. Modes beyond the truncation contribute nothing.
class DiagonalNoise {
public:
    DiagonalNoise(const MeasureSpace& space, std::vector<State> modes,
                  std::vector<double> coeffs);

    /// Noise that is switched off (no modes).
    static DiagonalNoise none(const MeasureSpace& space);
    /// e = 1/√μ(E).
    static DiagonalNoise constant(const MeasureSpace& space, double coeff);
    /// e_k = 1_{A_k}/√μ(A_k) for disjoint index sets A_k.
    static DiagonalNoise indicators(const MeasureSpace& space,
                                    const std::vector<std::vector<std::size_t>>& sets,
                                    const std::vector<double>& coeffs);
    /// The first coeffs.size() μ-orthonormal eigenvectors of −L.
    static DiagonalNoise eigenmodes(const DirichletOperator& op, const std::vector<double>& coeffs);

    std::size_t truncation() const noexcept { return modes_.size(); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(weights_.size()); }
    const std::vector<State>& modes() const noexcept { return modes_; }
    const std::vector<double>& coeffs() const noexcept { return coeffs_; }
    bool active() const noexcept { return !modes_.empty(); }

    /// Σ_k μ_k dW_k x·e_k.
    State apply(const State& x, const State& dW) const;
    /// Dense matrix of h ↦ B(x)h in the coordinates of the ambient space.
    Eigen::MatrixXd dense_operator(const State& x) const;

    /// (Σ_k |μ_k x·e_k|²_2)^{1/2}.
    double hs_norm_l2(const State& x) const;
    /// ∫ (Σ_k |B(x)e_k|²)^m dμ.
    double hs_moment_2m(const State& x, double m) const;
    /// (Σ_k ‖μ_k x·e_k‖²_{F*ν})^{1/2}.
    double hs_norm_dual(const DirichletOperator& op, const State& x, double nu) const;

    /// C₃ = (Σ_k μ_k² |e_k|²_∞)^{1/2}.
    double C3() const;
    /// C₄ = C₃^{2m}, so hs_moment_2m(x, m) ≤ C₄ |x|_{2m}^{2m}.
    double C4(double m) const;
    /// ξ_k(ν) = sup_x ‖x·e_k‖_{F*ν} / ‖x‖_{F*ν}, computed as the top generalized
    /// eigenvalue of the multiplier against the F*ν Gram matrix.
    std::vector<double> multiplier_bounds(const DirichletOperator& op, double nu) const;
    /// C₂ = max over the ν grid of (Σ_k μ_k² ξ_k(ν)²)^{1/2}.
    double C2(const DirichletOperator& op, const std::vector<double>& nu_grid) const;
    /// Σ μ_k² (ξ_k² + |e_k|²_∞) with ξ_k maximized over the ν grid.
    double summability(const DirichletOperator& op, const std::vector<double>& nu_grid) const;

private:
    State weights_;
    std::vector<State> modes_;
    std::vector<double> coeffs_;
};

/// Reproducible source of Wiener increments for one trajectory.
///
/// The engine is seeded from (master seed, stream id) through splitmix64, so
/// each trajectory owns an independent stream regardless of scheduling.
class IncrementStream {
public:
    IncrementStream(std::uint64_t master_seed, std::uint64_t stream_id, std::size_t modes);

    /// N iid normal(0, dt) coordinates.
    State next(double dt);

    std::uint64_t stream_id() const noexcept { return stream_id_; }
    std::size_t modes() const noexcept { return modes_; }

private:
    std::uint64_t stream_id_;
    std::size_t modes_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t stream_id);

}  // namespace spme

#pragma once

#include <limits>
#include <memory>
#include <vector>

namespace spme {

/// Closed interval [lo, hi] of the real line; a singleton when lo == hi.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double v, double tol = 0.0) const { return v >= lo - tol && v <= hi + tol; }
    bool singleton() const { return lo == hi; }
    /// Distance from v to the interval (0 when inside).
    double distance(double v) const { return v < lo ? lo - v : (v > hi ? v - hi : 0.0); }

    friend bool operator==(const Interval&, const Interval&) = default;
};

/// One closed-form branch of a monotone graph.
///
/// All three families share the evaluation formula
///   r ↦ coeff·|r − center|^{exponent−1}(r − center) + offset,
/// linear is exponent 1 and constant is coeff 0. The kind is kept so that
/// configurations round-trip in the form they were written.
class Piece {
public:
    enum class Kind { power, linear, constant };

    static Piece power(double exponent, double coeff, double center, double offset = 0.0);
    static Piece linear(double slope, double offset = 0.0);
    static Piece constant(double value);

    Kind kind() const noexcept { return kind_; }
    double exponent() const noexcept { return exponent_; }
    double coeff() const noexcept { return coeff_; }
    double center() const noexcept { return center_; }
    double offset() const noexcept { return offset_; }

    double value(double r) const;
    /// Classical derivative; +∞ for power pieces with exponent < 1 at the center.
    double derivative(double r) const;
    /// An antiderivative of value(); differences give exact integrals.
    double antiderivative(double r) const;

    friend bool operator==(const Piece&, const Piece&) = default;

private:
    Piece(Kind kind, double exponent, double coeff, double center, double offset)
        : kind_(kind), exponent_(exponent), coeff_(coeff), center_(center), offset_(offset) {}

    Kind kind_;
    double exponent_;
    double coeff_;
    double center_;
    double offset_;
};

/// A piece active on the half-open interval [from, to).
struct GraphSegment {
    double from = -std::numeric_limits<double>::infinity();
    double to = std::numeric_limits<double>::infinity();
    Piece piece = Piece::constant(0.0);

    friend bool operator==(const GraphSegment&, const GraphSegment&) = default;
};

/// The filled value set at a breakpoint.
struct Jump {
    double at = 0.0;
    Interval values;

    friend bool operator==(const Jump&, const Jump&) = default;
};

/// Solution of a scalar inclusion together with the generalized derivative of
/// the graph at the solution (may be +∞ on a vertical segment).
struct InclusionRoot {
    double y = 0.0;
    double graph_slope = 0.0;
};

/// Value of (Ψ_λ + λI)^{-1}(w) and its derivative with respect to w.
struct ShiftInverse {
    double y = 0.0;
    double slope = 0.0;
};

/// Maximal monotone graph Ψ: ℝ → 2^ℝ with polynomial growth, assembled from
/// finitely many closed-form pieces and filled jumps.
///
/// Immutable after construction; every member function is const and pure.
class MonotoneGraph {
public:
    /// Segments must be contiguous and cover ℝ. A jump record replaces the
    /// value set at a breakpoint; breakpoints without one take the value of the
    /// segment that starts there. Throws InvalidParameters when the result is
    /// not monotone, misses 0 ∈ Ψ(0), or breaks the growth bound
    /// sup|Ψ(r)| ≤ growth_C·(|r|^growth_m + 1) on a sampled grid.
    MonotoneGraph(std::vector<GraphSegment> segments, std::vector<Jump> jumps, double growth_m,
                  double growth_C);

    /// Discontinuous example: power branches outside [−2, 2], flat at ±2,
    /// |r|^{m−1}r on (−1, 1), with the gaps at ±1 filled.
    static MonotoneGraph example_discontinuous(double m);
    static MonotoneGraph sign();
    /// |r|^γ sign(r); γ = 0 gives the sign graph.
    static MonotoneGraph fast_diffusion(double gamma);
    static MonotoneGraph linear(double slope);

    Interval eval_set(double r) const;
    /// Element of Ψ(r) with least modulus (Ψ⁰).
    double minimal_section(double r) const;
    /// (1 + λΨ)^{-1}(r). Throws NonMaximalGraph if the range has a gap.
    double resolvent(double lambda, double r) const;
    InclusionRoot resolvent_root(double lambda, double r) const;
    /// Ψ_λ(r) = (r − (1+λΨ)^{-1}(r)) / λ.
    double yosida(double lambda, double r) const;
    /// j(r) = ∫₀^r Ψ⁰(s) ds, exact.
    double primitive(double r) const;
    /// j_λ(r) via the proximal identity |r − y|²/(2λ) + j(y), y = resolvent.
    double moreau_envelope(double lambda, double r) const;
    /// Unique z with |z|^{m−1}z + Ψ(z) ∋ w.
    double duality_resolvent(double m, double w) const;
    /// Inverse of the strictly increasing map y ↦ Ψ_λ(y) + λy.
    ShiftInverse yosida_shift_inverse(double lambda, double w) const;

    /// Breakpoints whose value set does not fill [left limit, right limit].
    std::vector<Jump> gaps() const;
    bool is_maximal() const { return gaps().empty(); }

    double growth_m() const noexcept { return growth_m_; }
    double growth_C() const noexcept { return growth_C_; }
    const std::vector<GraphSegment>& segments() const noexcept { return segments_; }
    const std::vector<Jump>& jumps() const noexcept { return jumps_; }
    const std::vector<double>& breakpoints() const noexcept { return breaks_; }

    friend bool operator==(const MonotoneGraph& a, const MonotoneGraph& b) {
        return a.segments_ == b.segments_ && a.jumps_ == b.jumps_ &&
               a.growth_m_ == b.growth_m_ && a.growth_C_ == b.growth_C_;
    }

private:
    struct Shift;
    InclusionRoot solve_inclusion(const Shift& shift, double kappa, double r, double lo,
                                  double hi) const;
    std::size_t piece_index(double r) const;
    double break_slope(std::size_t j) const;
    double slope_at(double r) const;

    std::vector<GraphSegment> segments_;
    std::vector<Jump> jumps_;
    double growth_m_;
    double growth_C_;

    std::vector<double> breaks_;        // b_0 < b_1 < ... < b_{k-1}
    std::vector<Piece> pieces_;         // pieces_[i] lives on (b_{i-1}, b_i)
    std::vector<Interval> break_sets_;  // Ψ(b_j)
};

/// Ψ_λ together with its graph; the view shares ownership of the graph.
class YosidaView {
public:
    YosidaView(std::shared_ptr<const MonotoneGraph> graph, double lambda);

    const MonotoneGraph& graph() const noexcept { return *graph_; }
    std::shared_ptr<const MonotoneGraph> graph_ptr() const noexcept { return graph_; }
    double lambda() const noexcept { return lambda_; }

    double operator()(double r) const { return graph_->yosida(lambda_, r); }
    double resolvent(double r) const { return graph_->resolvent(lambda_, r); }
    double envelope(double r) const { return graph_->moreau_envelope(lambda_, r); }
    ShiftInverse shift_inverse(double w) const {
        return graph_->yosida_shift_inverse(lambda_, w);
    }

private:
    std::shared_ptr<const MonotoneGraph> graph_;
    double lambda_;
};

}  // namespace spme

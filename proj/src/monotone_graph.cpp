#include "spme/monotone_graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "spme/errors.hpp"

namespace spme {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSetTol = 1e-12;

double member_tol(double r) { return kSetTol * std::max(1.0, std::abs(r)); }

double signed_pow(double t, double a) {
    if (a == 1.0) return t;
    if (a == 2.0) return std::abs(t) * t;
    return std::copysign(std::pow(std::abs(t), a), t);
}

}  // namespace

// ---------------------------------------------------------------------------
// Piece

Piece Piece::power(double exponent, double coeff, double center, double offset) {
    if (!(exponent > 0.0) || !std::isfinite(exponent))
        throw InvalidParameters("power piece needs a positive exponent");
    if (!(coeff >= 0.0) || !std::isfinite(coeff))
        throw InvalidParameters("power piece needs a nonnegative coefficient");
    return Piece(Kind::power, exponent, coeff, center, offset);
}

Piece Piece::linear(double slope, double offset) {
    if (!(slope >= 0.0) || !std::isfinite(slope))
        throw InvalidParameters("linear piece needs a nonnegative slope");
    return Piece(Kind::linear, 1.0, slope, 0.0, offset);
}

Piece Piece::constant(double value) { return Piece(Kind::constant, 1.0, 0.0, 0.0, value); }

double Piece::value(double r) const {
    if (coeff_ == 0.0) return offset_;
    return coeff_ * signed_pow(r - center_, exponent_) + offset_;
}

double Piece::derivative(double r) const {
    if (coeff_ == 0.0) return 0.0;
    if (exponent_ == 1.0) return coeff_;
    const double t = std::abs(r - center_);
    if (t == 0.0) return exponent_ < 1.0 ? kInf : 0.0;
    return coeff_ * exponent_ * std::pow(t, exponent_ - 1.0);
}

double Piece::antiderivative(double r) const {
    double out = offset_ * r;
    if (coeff_ != 0.0) {
        const double t = std::abs(r - center_);
        out += coeff_ * std::pow(t, exponent_ + 1.0) / (exponent_ + 1.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// MonotoneGraph

/// Strictly increasing shift a(y) with a(0) = 0 in the inclusion a(y) + κΨ(y) ∋ r.
struct MonotoneGraph::Shift {
    double m = 1.0;  // a(y) = |y|^{m-1} y

    double value(double y) const { return signed_pow(y, m); }
    double derivative(double y) const {
        if (m == 1.0) return 1.0;
        return m * std::pow(std::abs(y), m - 1.0);
    }
};

MonotoneGraph::MonotoneGraph(std::vector<GraphSegment> segments, std::vector<Jump> jumps,
                             double growth_m, double growth_C)
    : segments_(std::move(segments)), jumps_(std::move(jumps)), growth_m_(growth_m),
      growth_C_(growth_C) {
    if (segments_.empty()) throw InvalidParameters("graph needs at least one segment");
    if (!(growth_m_ >= 1.0) || !std::isfinite(growth_m_))
        throw InvalidParameters("growth exponent m must lie in [1, inf)");
    if (!(growth_C_ > 0.0) || !std::isfinite(growth_C_))
        throw InvalidParameters("growth constant C must be positive");
    if (segments_.front().from != -kInf || segments_.back().to != kInf)
        throw InvalidParameters("segments must cover the whole real line");
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        const auto& s = segments_[i];
        if (!(s.from < s.to)) throw InvalidParameters("segment with empty interval");
        if (i + 1 < segments_.size()) {
            if (s.to != segments_[i + 1].from)
                throw InvalidParameters("segments must be contiguous");
            breaks_.push_back(s.to);
        }
        pieces_.push_back(s.piece);
    }

    break_sets_.resize(breaks_.size());
    for (std::size_t j = 0; j < breaks_.size(); ++j) {
        const double v = pieces_[j + 1].value(breaks_[j]);
        break_sets_[j] = {v, v};
    }
    std::sort(jumps_.begin(), jumps_.end(),
              [](const Jump& a, const Jump& b) { return a.at < b.at; });
    for (const auto& jump : jumps_) {
        if (!(jump.values.lo <= jump.values.hi))
            throw InvalidParameters("jump interval with lo > hi");
        auto it = std::lower_bound(breaks_.begin(), breaks_.end(), jump.at);
        if (it == breaks_.end() || *it != jump.at) {
            std::ostringstream msg;
            msg << "jump at " << jump.at << " is not a segment boundary";
            throw InvalidParameters(msg.str());
        }
        break_sets_[static_cast<std::size_t>(it - breaks_.begin())] = jump.values;
    }

    for (std::size_t j = 0; j < breaks_.size(); ++j) {
        const double b = breaks_[j];
        const double left = pieces_[j].value(b);
        const double right = pieces_[j + 1].value(b);
        const double tol = member_tol(std::max(std::abs(left), std::abs(right)));
        if (left > break_sets_[j].lo + tol || break_sets_[j].hi > right + tol) {
            std::ostringstream msg;
            msg << "graph is not monotone at breakpoint " << b;
            throw InvalidParameters(msg.str());
        }
    }

    if (!eval_set(0.0).contains(0.0, kSetTol))
        throw InvalidParameters("graph must satisfy 0 in Psi(0)");

    // Growth bound on a grid that covers the breakpoints and a wide window.
    double reach = 10.0;
    for (double b : breaks_) reach = std::max(reach, 2.0 * std::abs(b));
    std::vector<double> grid;
    const int n = 2001;
    for (int i = 0; i < n; ++i) grid.push_back(-reach + 2.0 * reach * i / (n - 1));
    for (double b : breaks_) grid.push_back(b);
    for (double r : grid) {
        const Interval s = eval_set(r);
        const double sup = std::max(std::abs(s.lo), std::abs(s.hi));
        const double bound = growth_C_ * (std::pow(std::abs(r), growth_m_) + 1.0);
        if (sup > bound * (1.0 + kSetTol)) {
            std::ostringstream msg;
            msg << "growth bound sup|Psi(r)| <= C(|r|^m + 1) fails at r = " << r;
            throw InvalidParameters(msg.str());
        }
    }
}

MonotoneGraph MonotoneGraph::example_discontinuous(double m) {
    if (!(m >= 1.0)) throw InvalidParameters("exponent m must be >= 1");
    std::vector<GraphSegment> segs = {
        {-kInf, -2.0, Piece::power(m, 1.0, -2.0, -2.0)},
        {-2.0, -1.0, Piece::constant(-2.0)},
        {-1.0, 1.0, Piece::power(m, 1.0, 0.0, 0.0)},
        {1.0, 2.0, Piece::constant(2.0)},
        {2.0, kInf, Piece::power(m, 1.0, 2.0, 2.0)},
    };
    std::vector<Jump> jumps = {{-1.0, {-2.0, -1.0}}, {1.0, {1.0, 2.0}}};
    return MonotoneGraph(std::move(segs), std::move(jumps), m, 1.0);
}

MonotoneGraph MonotoneGraph::sign() {
    std::vector<GraphSegment> segs = {
        {-kInf, 0.0, Piece::constant(-1.0)},
        {0.0, kInf, Piece::constant(1.0)},
    };
    return MonotoneGraph(std::move(segs), {{0.0, {-1.0, 1.0}}}, 1.0, 1.0);
}

MonotoneGraph MonotoneGraph::fast_diffusion(double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw InvalidParameters("fast diffusion exponent must lie in [0, 1]");
    if (gamma == 0.0) return sign();
    return MonotoneGraph({{-kInf, kInf, Piece::power(gamma, 1.0, 0.0, 0.0)}}, {}, 1.0, 1.0);
}

MonotoneGraph MonotoneGraph::linear(double slope) {
    if (!(slope > 0.0)) throw InvalidParameters("linear graph needs a positive slope");
    return MonotoneGraph({{-kInf, kInf, Piece::linear(slope)}}, {}, 1.0, slope);
}

std::size_t MonotoneGraph::piece_index(double r) const {
    return static_cast<std::size_t>(std::upper_bound(breaks_.begin(), breaks_.end(), r) -
                                    breaks_.begin());
}

Interval MonotoneGraph::eval_set(double r) const {
    auto it = std::lower_bound(breaks_.begin(), breaks_.end(), r);
    if (it != breaks_.end() && *it == r)
        return break_sets_[static_cast<std::size_t>(it - breaks_.begin())];
    const double v = pieces_[piece_index(r)].value(r);
    return {v, v};
}

double MonotoneGraph::minimal_section(double r) const {
    const Interval s = eval_set(r);
    if (s.lo > 0.0) return s.lo;
    if (s.hi < 0.0) return s.hi;
    return 0.0;
}

double MonotoneGraph::break_slope(std::size_t j) const {
    if (!break_sets_[j].singleton()) return kInf;
    const double b = breaks_[j];
    const double dl = pieces_[j].derivative(b);
    const double dr = pieces_[j + 1].derivative(b);
    if (!std::isfinite(dl) || !std::isfinite(dr)) return kInf;
    return 0.5 * (dl + dr);
}

double MonotoneGraph::slope_at(double r) const {
    auto it = std::lower_bound(breaks_.begin(), breaks_.end(), r);
    if (it != breaks_.end() && *it == r)
        return break_slope(static_cast<std::size_t>(it - breaks_.begin()));
    return pieces_[piece_index(r)].derivative(r);
}

InclusionRoot MonotoneGraph::solve_inclusion(const Shift& shift, double kappa, double r,
                                             double lo, double hi) const {
    const double tol = member_tol(r);

    // Locate r among the breakpoints inside [lo, hi] by bisection on the index.
    auto first = std::lower_bound(breaks_.begin(), breaks_.end(), lo);
    auto last = std::upper_bound(breaks_.begin(), breaks_.end(), hi);
    std::size_t a = static_cast<std::size_t>(first - breaks_.begin());
    std::size_t b = static_cast<std::size_t>(last - breaks_.begin());
    while (a < b) {
        const std::size_t mid = a + (b - a) / 2;
        const double base = shift.value(breaks_[mid]);
        const double flo = base + kappa * break_sets_[mid].lo;
        const double fhi = base + kappa * break_sets_[mid].hi;
        if (r < flo - tol) {
            b = mid;
        } else if (r > fhi + tol) {
            a = mid + 1;
        } else {
            return {breaks_[mid], break_slope(mid)};
        }
    }

    // The root lies in the open piece between breaks a-1 and a.
    const Piece& piece = pieces_[a];
    const double left = std::max(lo, a > 0 ? breaks_[a - 1] : -kInf);
    const double right = std::min(hi, a < breaks_.size() ? breaks_[a] : kInf);
    auto g = [&](double y) { return shift.value(y) + kappa * piece.value(y); };

    const double gl = g(left);
    const double gr = g(right);
    if (gl > r + tol || gr < r - tol) {
        std::ostringstream msg;
        msg << "range of y + k*Psi(y) has a gap near r = " << r << " (y in [" << left << ", "
            << right << "])";
        throw NonMaximalGraph(msg.str());
    }
    if (std::abs(gl - r) <= 0.0) return {left, piece.derivative(left)};
    if (std::abs(gr - r) <= 0.0) return {right, piece.derivative(right)};

    double y;
    bool closed_form = shift.m == 1.0;
    if (closed_form) {
        const double c = piece.coeff();
        const double q = r - piece.center() - kappa * piece.offset();
        if (c == 0.0) {
            y = r - kappa * piece.offset();
        } else if (piece.exponent() == 1.0) {
            y = piece.center() + q / (1.0 + kappa * c);
        } else if (piece.exponent() == 2.0) {
            const double aq = std::abs(q);
            y = piece.center() +
                std::copysign(2.0 * aq / (1.0 + std::sqrt(1.0 + 4.0 * kappa * c * aq)), q);
        } else {
            closed_form = false;
        }
    }
    if (closed_form) {
        y = std::clamp(y, left, right);
        return {y, piece.derivative(y)};
    }

    // Safeguarded Newton: keep a sign bracket [yl, yr] with g(yl) < r < g(yr).
    double yl = left, yr = right;
    if (!std::isfinite(yl)) {
        double step = std::max(1.0, std::abs(yr));
        yl = yr - step;
        while (g(yl) > r) { yr = yl; step *= 2.0; yl = yr - step; }
    }
    if (!std::isfinite(yr)) {
        double step = std::max(1.0, std::abs(yl));
        yr = yl + step;
        while (g(yr) < r) { yl = yr; step *= 2.0; yr = yl + step; }
    }
    y = 0.5 * (yl + yr);
    for (int it = 0; it < 400; ++it) {
        const double f = g(y) - r;
        if (f == 0.0) break;
        if (f < 0.0) yl = y; else yr = y;
        const double df = shift.derivative(y) + kappa * piece.derivative(y);
        double next = (std::isfinite(df) && df > 0.0) ? y - f / df : 0.5 * (yl + yr);
        if (!(next > yl && next < yr)) next = 0.5 * (yl + yr);
        const double scale = 1e-15 * std::max(1.0, std::abs(y));
        if (std::abs(next - y) <= scale || yr - yl <= scale) {
            y = next;
            break;
        }
        y = next;
    }
    return {y, piece.derivative(y)};
}

InclusionRoot MonotoneGraph::resolvent_root(double lambda, double r) const {
    if (!(lambda > 0.0)) throw InvalidParameters("resolvent needs lambda > 0");
    if (r == 0.0) return {0.0, slope_at(0.0)};
    return solve_inclusion(Shift{}, lambda, r, std::min(0.0, r), std::max(0.0, r));
}

double MonotoneGraph::resolvent(double lambda, double r) const {
    return resolvent_root(lambda, r).y;
}

double MonotoneGraph::yosida(double lambda, double r) const {
    return (r - resolvent(lambda, r)) / lambda;
}

double MonotoneGraph::primitive(double r) const {
    if (r == 0.0) return 0.0;
    const double a = std::min(0.0, r);
    const double b = std::max(0.0, r);
    double total = 0.0;
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
        const double from = i > 0 ? breaks_[i - 1] : -kInf;
        const double to = i < breaks_.size() ? breaks_[i] : kInf;
        const double s = std::max(a, from);
        const double e = std::min(b, to);
        if (s < e) total += pieces_[i].antiderivative(e) - pieces_[i].antiderivative(s);
    }
    return r > 0.0 ? total : -total;
}

double MonotoneGraph::moreau_envelope(double lambda, double r) const {
    const double y = resolvent(lambda, r);
    return (r - y) * (r - y) / (2.0 * lambda) + primitive(y);
}

double MonotoneGraph::duality_resolvent(double m, double w) const {
    if (!(m >= 1.0)) throw InvalidParameters("duality resolvent needs m >= 1");
    if (w == 0.0) return 0.0;
    const Shift shift{m};
    // Expand the bracket until the upper value set of the inclusion covers w.
    double reach = std::max(1.0, std::abs(w));
    for (;;) {
        const double y = std::copysign(reach, w);
        const Interval s = eval_set(y);
        const double v = shift.value(y) + (w > 0.0 ? s.hi : s.lo);
        if (w > 0.0 ? v >= w : v <= w) break;
        reach *= 2.0;
        if (!std::isfinite(reach)) throw NonMaximalGraph("duality resolvent bracket diverged");
    }
    return solve_inclusion(shift, 1.0, w, std::min(0.0, std::copysign(reach, w)),
                           std::max(0.0, std::copysign(reach, w)))
        .y;
}

ShiftInverse MonotoneGraph::yosida_shift_inverse(double lambda, double w) const {
    if (!(lambda > 0.0)) throw InvalidParameters("yosida needs lambda > 0");
    // With z = J_λ(y) and η = Ψ_λ(y): y = z + λη and w = η + λy = λz + (1+λ²)η,
    // so z solves z + ((1+λ²)/λ)Ψ(z) ∋ w/λ.
    const double k = (1.0 + lambda * lambda) / lambda;
    const InclusionRoot root = w == 0.0 ? InclusionRoot{0.0, slope_at(0.0)}
                                        : solve_inclusion(Shift{}, k, w / lambda,
                                                          std::min(0.0, w / lambda),
                                                          std::max(0.0, w / lambda));
    const double eta = (w - lambda * root.y) / (1.0 + lambda * lambda);
    const double y = root.y + lambda * eta;
    double slope;
    if (std::isfinite(root.graph_slope)) {
        const double d = root.graph_slope;
        slope = (1.0 + lambda * d) / (lambda + (1.0 + lambda * lambda) * d);
    } else {
        slope = lambda / (1.0 + lambda * lambda);
    }
    return {y, slope};
}

std::vector<Jump> MonotoneGraph::gaps() const {
    std::vector<Jump> out;
    for (std::size_t j = 0; j < breaks_.size(); ++j) {
        const double b = breaks_[j];
        const double left = pieces_[j].value(b);
        const double right = pieces_[j + 1].value(b);
        const double tol = member_tol(std::max(std::abs(left), std::abs(right)));
        if (break_sets_[j].lo > left + tol) out.push_back({b, {left, break_sets_[j].lo}});
        if (break_sets_[j].hi < right - tol) out.push_back({b, {break_sets_[j].hi, right}});
    }
    return out;
}

YosidaView::YosidaView(std::shared_ptr<const MonotoneGraph> graph, double lambda)
    : graph_(std::move(graph)), lambda_(lambda) {
    if (!graph_) throw InvalidParameters("yosida view needs a graph");
    if (!(lambda_ > 0.0)) throw InvalidParameters("yosida view needs lambda > 0");
}

}  // namespace spme

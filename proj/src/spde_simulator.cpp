#include "spme/spde_simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "spme/errors.hpp"
#include "spme/statistics.hpp"

namespace spme {

const char* to_string(Level level) {
    switch (level) {
        case Level::eps_level: return "eps_level";
        case Level::nu_level: return "nu_level";
        case Level::lambda_level: return "lambda_level";
    }
    return "unknown";
}

Level level_from_string(const std::string& name) {
    if (name == "eps_level") return Level::eps_level;
    if (name == "nu_level") return Level::nu_level;
    if (name == "lambda_level") return Level::lambda_level;
    throw InvalidParameters("unknown level '" + name + "'");
}

namespace {

void validate(const SimConfig& cfg, const DirichletOperator& op) {
    if (!(cfg.T > 0.0) || !std::isfinite(cfg.T)) throw InvalidParameters("T must be positive");
    if (cfg.steps < 1) throw InvalidParameters("steps must be >= 1");
    if (!(cfg.lambda > 0.0 && cfg.lambda < 1.0))
        throw InvalidParameters("lambda must lie in (0, 1)");
    if (cfg.level != Level::lambda_level && !(cfg.nu > 0.0 && cfg.nu <= 1.0))
        throw InvalidParameters("nu must lie in (0, 1]");
    if (cfg.level == Level::eps_level && !(cfg.eps > 0.0 && cfg.eps < 1.0))
        throw InvalidParameters("eps must lie in (0, 1)");
    if (!(cfg.m >= 1.0)) throw InvalidParameters("m must be >= 1");
    if (!(cfg.nu0 > 0.0)) throw InvalidParameters("nu0 must be positive");
    op.space().check(cfg.initial);
    if (cfg.level == Level::lambda_level && !op.transient())
        throw NotTransient("lambda_level runs need a strictly negative definite operator");
    if (cfg.level == Level::eps_level && cfg.dt() > cfg.eps / 4.0) {
        std::ostringstream msg;
        msg << "explicit eps_level step needs dt <= eps/4 (dt = " << cfg.dt()
            << ", eps = " << cfg.eps << ")";
        throw StabilityViolation(msg.str());
    }
}

}  // namespace

Simulator::Simulator(const DirichletOperator& op, std::shared_ptr<const MonotoneGraph> graph,
                     const DiagonalNoise& noise, SimConfig cfg)
    : op_(op), graph_(std::move(graph)), noise_(noise), cfg_(std::move(cfg)) {
    validate(cfg_, op_);
    if (noise_.dim() != op_.size()) throw DimensionMismatch(op_.size(), noise_.dim());
    const double eps = cfg_.level == Level::eps_level ? cfg_.eps : cfg_.dt();
    solver_ = std::make_unique<ResolventSolver>(op_, graph_, cfg_.lambda, eps,
                                                cfg_.effective_nu(), cfg_.solver);
    transient_ = op_.transient();
}

State Simulator::step_implicit(const State& x, const State& dW, ResolventResult* info) const {
    if (cfg_.level == Level::eps_level)
        throw InvalidParameters("step_implicit is not the eps_level scheme");
    State z = noise_.active() ? State(x + noise_.apply(x, dW)) : x;
    ResolventResult r = solver_->solve(z);
    State y = r.y;
    if (info) *info = std::move(r);
    return y;
}

State Simulator::step_yosida_explicit(const State& x, const State& dW,
                                      ResolventResult* info) const {
    if (cfg_.level != Level::eps_level)
        throw InvalidParameters("step_yosida_explicit needs an eps_level configuration");
    ResolventResult r = solver_->solve(x);
    State next = x - (cfg_.dt() / cfg_.eps) * (x - r.y);
    if (noise_.active()) next += noise_.apply(x, dW);
    if (info) *info = std::move(r);
    return next;
}

StepRecord Simulator::record(const State& x, const State& w, const State& drift_point,
                             double t) const {
    const MeasureSpace& space = op_.space();
    StepRecord r;
    r.time = t;
    r.l2_sq = space.lp_pow(x, 2.0);
    r.l2m_pow = space.lp_pow(x, 2.0 * cfg_.m);
    r.dual_nu0 = op_.dual_norm(x, cfg_.nu0);
    r.dual_e = transient_ ? op_.dual_norm(x, 0.0) : std::numeric_limits<double>::quiet_NaN();
    State psi(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) psi[i] = graph_->yosida(cfg_.lambda, x[i]);
    r.psi_l2_sq = space.lp_pow(psi, 2.0);
    r.psi_l2m_pow = space.lp_pow(psi, 2.0 * cfg_.m);
    r.drift_dual_sq = op_.dual_norm_of_image_sq(w, cfg_.effective_nu());
    r.pairing = space.inner(w, drift_point);
    return r;
}

Trajectory Simulator::run(std::uint64_t master_seed, std::uint64_t stream_id,
                          bool keep_states) const {
    Trajectory traj;
    traj.stream_id = stream_id;
    IncrementStream stream(master_seed, stream_id, noise_.truncation());
    const double dt = cfg_.dt();
    const int K = cfg_.steps;
    traj.records.reserve(static_cast<std::size_t>(K) + 1);
    State x = cfg_.initial;
    if (keep_states) traj.states.push_back(x);

    if (cfg_.level == Level::eps_level) {
        for (int n = 0; n <= K; ++n) {
            ResolventResult r = solver_->solve(x);
            StepRecord rec = record(x, r.w, r.y, n * dt);
            rec.iterations = r.newton_iterations + r.picard_iterations;
            traj.records.push_back(rec);
            if (n == K) break;
            const State dW = stream.next(dt);
            State next = x - (dt / cfg_.eps) * (x - r.y);
            if (noise_.active()) next += noise_.apply(x, dW);
            x = std::move(next);
            if (keep_states) traj.states.push_back(x);
        }
        return traj;
    }

    traj.records.push_back(record(x, solver_->forward(x), x, 0.0));
    for (int n = 0; n < K; ++n) {
        const State dW = stream.next(dt);
        ResolventResult r;
        x = step_implicit(x, dW, &r);
        StepRecord rec = record(x, r.w, x, (n + 1) * dt);
        rec.iterations = r.newton_iterations + r.picard_iterations;
        traj.records.push_back(rec);
        if (keep_states) traj.states.push_back(x);
    }
    return traj;
}

std::vector<Trajectory> simulate(const DirichletOperator& op,
                                 std::shared_ptr<const MonotoneGraph> graph,
                                 const DiagonalNoise& noise, const SimConfig& cfg, int M,
                                 std::uint64_t master_seed, bool keep_states) {
    if (M < 0) throw InvalidParameters("sample count must be >= 0");
    std::vector<Trajectory> out;
    if (M == 0) return out;
    Simulator sim(op, std::move(graph), noise, cfg);
    out.reserve(static_cast<std::size_t>(M));
    for (int s = 0; s < M; ++s)
        out.push_back(sim.run(master_seed, static_cast<std::uint64_t>(s), keep_states));
    return out;
}

double MomentSeries::sup_mean() const {
    double best = -std::numeric_limits<double>::infinity();
    for (double v : mean) best = std::max(best, v);
    return best;
}

MomentSeries estimate_moments(const std::vector<Trajectory>& ensemble, MomentKind kind) {
    MomentSeries out;
    if (ensemble.empty()) return out;
    const std::size_t K = ensemble.front().records.size();
    std::vector<double> xs(ensemble.size());
    for (std::size_t n = 0; n < K; ++n) {
        for (std::size_t s = 0; s < ensemble.size(); ++s) {
            const StepRecord& r = ensemble[s].records.at(n);
            xs[s] = kind == MomentKind::l2 ? r.l2_sq : r.l2m_pow;
        }
        const MeanSe ms = mean_se(xs);
        out.time.push_back(ensemble.front().records[n].time);
        out.mean.push_back(ms.mean);
        out.se.push_back(ms.se);
    }
    return out;
}

ScalarEstimate time_integral(const std::vector<Trajectory>& ensemble, double dt,
                             double StepRecord::*field) {
    std::vector<double> xs;
    xs.reserve(ensemble.size());
    for (const auto& t : ensemble) {
        double s = 0.0;
        for (std::size_t n = 0; n + 1 < t.records.size(); ++n) s += dt * (t.records[n].*field);
        xs.push_back(s);
    }
    const MeanSe ms = mean_se(xs);
    return {ms.mean, ms.se, static_cast<int>(xs.size())};
}

DifferenceEstimate coupled_difference(const DirichletOperator& op,
                                      std::shared_ptr<const MonotoneGraph> graph,
                                      const DiagonalNoise& noise, const SimConfig& a,
                                      const SimConfig& b, int M, std::uint64_t master_seed,
                                      DiffNorm norm, double nu0) {
    if (a.T != b.T || a.steps != b.steps || a.level != b.level || a.m != b.m ||
        a.initial.size() != b.initial.size() || a.initial != b.initial)
        throw ConfigMismatch("coupled configurations may differ only in lambda, nu and eps");
    if (M < 1) throw InvalidParameters("coupled difference needs M >= 1");
    DifferenceEstimate out;
    if (a.lambda != b.lambda) {
        out.param_a = a.lambda;
        out.param_b = b.lambda;
    } else if (a.nu != b.nu) {
        out.param_a = a.nu;
        out.param_b = b.nu;
    } else if (a.eps != b.eps) {
        out.param_a = a.eps;
        out.param_b = b.eps;
    } else {
        out.param_a = out.param_b = a.lambda;
    }
    if (norm == DiffNorm::extended && !op.transient())
        throw NotTransient("the extended dual norm needs a transient operator");

    Simulator sa(op, graph, noise, a);
    Simulator sb(op, graph, noise, b);
    const double index = norm == DiffNorm::extended ? 0.0 : nu0;
    std::vector<double> sups;
    sups.reserve(static_cast<std::size_t>(M));
    for (int s = 0; s < M; ++s) {
        const Trajectory ta = sa.run(master_seed, static_cast<std::uint64_t>(s), true);
        const Trajectory tb = sb.run(master_seed, static_cast<std::uint64_t>(s), true);
        double sup = 0.0;
        for (std::size_t n = 0; n < ta.states.size(); ++n) {
            const double d = op.dual_norm(ta.states[n] - tb.states[n], index);
            sup = std::max(sup, d * d);
        }
        sups.push_back(sup);
    }
    const MeanSe ms = mean_se(sups);
    out.sup_sq = {ms.mean, ms.se, M};
    return out;
}

DissipationReport deterministic_dissipation(const DirichletOperator& op,
                                            std::shared_ptr<const MonotoneGraph> graph,
                                            const SimConfig& cfg) {
    if (cfg.level == Level::eps_level)
        throw InvalidParameters("dissipation check runs on the implicit levels");
    if (cfg.effective_nu() == 0.0 && !op.transient())
        throw NotTransient("lambda_level dissipation needs a transient operator");
    const DiagonalNoise silent = DiagonalNoise::none(op.space());
    Simulator sim(op, graph, silent, cfg);
    const Trajectory t = sim.run(0, 0, true);
    const double nu = cfg.effective_nu();
    const double dt = cfg.dt();

    DissipationReport rep;
    rep.ledger_max = -std::numeric_limits<double>::infinity();
    for (const auto& x : t.states) rep.norms.push_back(op.dual_norm(x, nu));
    ResolventSolver forward(op, graph, cfg.lambda, dt, nu, cfg.solver);
    for (std::size_t n = 0; n + 1 < t.states.size(); ++n) {
        const State& x = t.states[n];
        const State& y = t.states[n + 1];
        const State w = forward.forward(y);
        // y solves the step exactly for the input x + r, and the step is
        // nonexpansive in this norm, so ‖r‖ bounds the solver's contribution.
        const State r = y + dt * (nu * w - op.apply(w)) - x;
        const double slack = 1e-12 * rep.norms[n] + op.dual_norm(r, nu);
        const double inc = rep.norms[n + 1] - rep.norms[n];
        rep.max_increase = std::max(rep.max_increase, inc);
        if (inc > slack) ++rep.violations;
        const double ledger = 0.5 * rep.norms[n + 1] * rep.norms[n + 1] -
                              0.5 * rep.norms[n] * rep.norms[n] +
                              dt * op.space().inner(w, y);
        rep.ledger_max = std::max(rep.ledger_max, ledger);
    }
    if (t.states.size() < 2) rep.ledger_max = 0.0;
    return rep;
}

Prop71Report certify_prop71(const DirichletOperator& op,
                            std::shared_ptr<const MonotoneGraph> graph,
                            const DiagonalNoise& noise, const SimConfig& cfg, int M,
                            std::uint64_t master_seed) {
    if (cfg.level != Level::eps_level)
        throw InvalidParameters("the drift bound is certified on eps_level runs");
    op.kernel();
    if (M < 2) throw InvalidParameters("certify_prop71 needs M >= 2");
    Simulator sim(op, graph, noise, cfg);
    ResolventSolver solver(op, graph, cfg.lambda, cfg.eps, cfg.nu, cfg.solver);

    Prop71Report rep;
    const double lam = cfg.lambda;
    rep.C3sq = noise.C3() * noise.C3();
    rep.C5 = 2.0 * (1.0 / lam + lam);
    const double x2 = op.space().lp_pow(cfg.initial, 2.0);
    rep.bound = 0.5 * (1.0 / lam + lam + rep.C5) * std::exp(rep.C3sq * cfg.T) * x2;

    std::vector<double> sums;
    sums.reserve(static_cast<std::size_t>(M));
    for (int s = 0; s < M; ++s) {
        const Trajectory t = sim.run(master_seed, static_cast<std::uint64_t>(s), s == 0);
        double sum = 0.0;
        for (std::size_t n = 0; n + 1 < t.records.size(); ++n)
            sum += cfg.dt() * t.records[n].drift_dual_sq;
        sums.push_back(sum);
        if (s != 0) continue;
        for (const auto& x : t.states) {
            const ResolventResult r = solver.solve(x);
            const State lhs = op.carre_du_champ(r.w, r.w);
            const State rhs = op.carre_du_champ(r.y, r.w);
            const double scale = rhs.cwiseAbs().maxCoeff();
            for (Eigen::Index i = 0; i < lhs.size(); ++i)
                if (rhs[i] > 1e-12 * scale && scale > 0.0)
                    rep.C5_measured = std::max(rep.C5_measured, lhs[i] / rhs[i]);
        }
    }
    const MeanSe ms = mean_se(sums);
    rep.lhs = {ms.mean, ms.se, M};
    rep.slack = rep.bound - rep.lhs.mean;
    rep.passed = rep.lhs.mean <= rep.bound + 3.0 * rep.lhs.se;
    return rep;
}

std::string trajectories_csv(const std::vector<Trajectory>& ensemble) {
    std::ostringstream out;
    out << "sample,step,time,l2_sq,l2m_pow,dual_nu0,dual_e,psi_l2_sq,psi_l2m_pow,"
           "drift_dual_sq,pairing,iterations\r\n";
    for (const auto& t : ensemble)
        for (std::size_t n = 0; n < t.records.size(); ++n) {
            const StepRecord& r = t.records[n];
            out << t.stream_id << ',' << n << ',' << format_number(r.time) << ','
                << format_number(r.l2_sq) << ',' << format_number(r.l2m_pow) << ','
                << format_number(r.dual_nu0) << ',' << format_number(r.dual_e) << ','
                << format_number(r.psi_l2_sq) << ',' << format_number(r.psi_l2m_pow) << ','
                << format_number(r.drift_dual_sq) << ',' << format_number(r.pairing) << ','
                << r.iterations << "\r\n";
        }
    return out.str();
}

}  // namespace spme

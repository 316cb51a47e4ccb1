#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "meue/analysis.hpp"
#include "meue/network.hpp"
#include "meue/rng.hpp"
#include "meue/routing.hpp"

namespace meue {

enum class DynamicsKind { culo, averaging, best_response, projection, smith, replicator };

inline std::string to_string(DynamicsKind k) {
    switch (k) {
        case DynamicsKind::culo: return "culo";
        case DynamicsKind::averaging: return "averaging";
        case DynamicsKind::best_response: return "best_response";
        case DynamicsKind::projection: return "projection";
        case DynamicsKind::smith: return "smith";
        case DynamicsKind::replicator: return "replicator";
    }
    throw std::invalid_argument("unknown DynamicsKind");
}

inline DynamicsKind dynamics_kind_from_string(const std::string& s) {
    if (s == "culo") return DynamicsKind::culo;
    if (s == "averaging") return DynamicsKind::averaging;
    if (s == "best_response") return DynamicsKind::best_response;
    if (s == "projection") return DynamicsKind::projection;
    if (s == "smith") return DynamicsKind::smith;
    if (s == "replicator") return DynamicsKind::replicator;
    throw std::invalid_argument("unknown dynamics kind: " + s);
}

/// Step-size schedule: constant eta0 or harmonic eta0/(1+t).
struct StepSchedule {
    enum class Kind { constant, harmonic } kind = Kind::constant;
    double eta0 = 1.0;

    static StepSchedule constant(double eta0) { return make(Kind::constant, eta0); }
    static StepSchedule harmonic(double eta0) { return make(Kind::harmonic, eta0); }

    double eta(int t) const {
        return kind == Kind::constant ? eta0 : eta0 / (1.0 + static_cast<double>(t));
    }

private:
    static StepSchedule make(Kind k, double eta0) {
        if (!(eta0 > 0.0)) throw std::invalid_argument("eta0 must be positive");
        return StepSchedule{k, eta0};
    }
};

struct RunConfig {
    DynamicsKind kind = DynamicsKind::culo;
    double r = 1.0;           // logit dispersion (1/time units)
    StepSchedule schedule;
    double gap_tol = 1e-5;
    int max_days = 3000;
    std::uint64_t seed = 0;   // only consumed by auxiliary randomized diagnostics
    // Cost unit used by the day-to-day updates. Travel costs are expressed in
    // multiples of this unit before entering the valuation/choice updates, so
    // that r and eta are dimensionless knobs with a network-independent
    // meaning. 0 selects the default unit (see default_cost_scale). The
    // limiting point is not affected: scaling costs by 1/C is equivalent to
    // scaling r (or, for the cost-driven dynamics, eta) by 1/C, and the
    // equilibrium set, the relative gap, and the KL projection are all
    // invariant under that rescaling.
    double cost_scale = 0.0;
};

struct TraceRow {
    int day = 0;
    double gap = 0.0;
    double entropy = 0.0;      // -phi, matching the reporting convention
    int used_1e4 = 0;
    int used_1e6 = 0;
    double prop_res_max = 0.0; // max CULO-invariant residual over the kernel basis
    double ms = 0.0;           // wall time of the day, milliseconds
};

struct Trace {
    std::vector<TraceRow> rows;
    bool converged = false;
    // admissible-step diagnostic for CULO with a constant schedule
    double lipschitz_estimate = 0.0;
    double eta_bound = 0.0;  // 1 / (2 r L_hat)
};

inline void write_trace_csv(const Trace& tr, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "day,gap,entropy,used_1e4,used_1e6,prop_res_max,ms\n";
    char buf[160];
    for (const TraceRow& row : tr.rows) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%d,%d,%.17g,%.3f\n", row.day, row.gap,
                      row.entropy, row.used_1e4, row.used_1e6, row.prop_res_max, row.ms);
        out << buf;
    }
}

/// Logit choice map q_r: p_k = exp(-r s_k) / sum over the OD's routes.
/// The per-OD minimum of s is subtracted first; cumulative valuations grow
/// without bound, so the raw exponent would overflow.
inline std::vector<double> logit_choice(const std::vector<double>& s, double r,
                                        const RouteSet& rs) {
    if (!(r > 0.0)) throw std::invalid_argument("r must be positive");
    if (s.size() != rs.size()) throw std::invalid_argument("valuation size mismatch");
    for (double v : s)
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite valuation");
    std::vector<double> p(s.size(), 0.0);
    for (const auto& ks : rs.per_od) {
        double lo = std::numeric_limits<double>::infinity();
        for (int k : ks) lo = std::min(lo, s[k]);
        double z = 0.0;
        for (int k : ks) {
            p[k] = std::exp(-r * (s[k] - lo));
            z += p[k];
        }
        for (int k : ks) p[k] /= z;
    }
    return p;
}

/// CULO update: s' = s + eta c, p' = q_r(s').
inline StrategyState culo_step(const StrategyState& state, const std::vector<double>& c,
                               double eta, double r, const RouteSet& rs) {
    if (!(eta >= 0.0)) throw std::invalid_argument("eta must be non-negative");
    StrategyState next = state;
    for (std::size_t k = 0; k < next.s.size(); ++k) next.s[k] += eta * c[k];
    next.p = logit_choice(next.s, r, rs);
    ++next.day;
    return next;
}

/// Classical averaging update: s' = (1-eta) s + eta c, p' = q_r(s').
inline StrategyState averaging_step(const StrategyState& state, const std::vector<double>& c,
                                    double eta, double r, const RouteSet& rs) {
    if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must be in (0, 1]");
    StrategyState next = state;
    for (std::size_t k = 0; k < next.s.size(); ++k)
        next.s[k] = (1.0 - eta) * next.s[k] + eta * c[k];
    next.p = logit_choice(next.s, r, rs);
    ++next.day;
    return next;
}

/// Discretized best response: p' = (1-eta) p + eta B(p), where B puts all of
/// each OD's mass on its minimum-cost route (ties to the lowest route index).
inline StrategyState best_response_step(const StrategyState& state, const std::vector<double>& c,
                                        double eta, const RouteSet& rs) {
    if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must be in (0, 1]");
    StrategyState next = state;
    for (const auto& ks : rs.per_od) {
        int best = ks.front();
        for (int k : ks)
            if (c[k] < c[best]) best = k;
        for (int k : ks) next.p[k] = (1.0 - eta) * state.p[k] + (k == best ? eta : 0.0);
    }
    ++next.day;
    return next;
}

/// Euclidean projection onto the unit simplex (sort-and-threshold).
inline std::vector<double> simplex_project(const std::vector<double>& y) {
    for (double v : y)
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite input");
    std::vector<double> u = y;
    std::sort(u.begin(), u.end(), std::greater<double>());
    double css = 0.0, theta = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        css += u[j];
        double t = (css - 1.0) / static_cast<double>(j + 1);
        if (u[j] - t > 0.0) theta = t;
    }
    std::vector<double> p(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) p[i] = std::max(y[i] - theta, 0.0);
    return p;
}

/// Projection dynamic: per OD, p' = Proj_simplex(p - eta c).
inline StrategyState projection_step(const StrategyState& state, const std::vector<double>& c,
                                     double eta, const RouteSet& rs) {
    if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
    StrategyState next = state;
    for (const auto& ks : rs.per_od) {
        std::vector<double> y(ks.size());
        for (std::size_t i = 0; i < ks.size(); ++i) y[i] = state.p[ks[i]] - eta * c[ks[i]];
        std::vector<double> proj = simplex_project(y);
        for (std::size_t i = 0; i < ks.size(); ++i) next.p[ks[i]] = proj[i];
    }
    ++next.day;
    return next;
}

/// Pairwise-comparison dynamics. Switching rate from route k to k':
///   smith:      pi    = eta [c_k - c_k']_+
///   replicator: gamma = eta p_k' [c_k - c_k']_+
/// Each traveler's stay probability 1 - sum of outgoing rates must remain
/// non-negative; a violating eta is an error rather than a silent clamp.
inline StrategyState pairwise_step(DynamicsKind kind, const StrategyState& state,
                                   const std::vector<double>& c, double eta, const RouteSet& rs) {
    if (kind != DynamicsKind::smith && kind != DynamicsKind::replicator)
        throw std::invalid_argument("pairwise_step handles smith and replicator only");
    if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
    StrategyState next = state;
    for (const auto& ks : rs.per_od) {
        std::vector<double> delta(ks.size(), 0.0);
        for (std::size_t i = 0; i < ks.size(); ++i) {
            double out = 0.0;
            for (std::size_t j = 0; j < ks.size(); ++j) {
                if (i == j) continue;
                double adv = c[ks[i]] - c[ks[j]];
                if (adv <= 0.0) continue;
                double rate = eta * adv;
                if (kind == DynamicsKind::replicator) rate *= state.p[ks[j]];
                out += rate;
                delta[j] += state.p[ks[i]] * rate;
            }
            if (out > 1.0 + 1e-12)
                throw std::invalid_argument("eta too large: negative stay probability");
            delta[i] -= state.p[ks[i]] * out;
        }
        for (std::size_t i = 0; i < ks.size(); ++i) next.p[ks[i]] = state.p[ks[i]] + delta[i];
    }
    ++next.day;
    return next;
}

/// Default cost unit for the day-to-day updates: the maximum route cost under
/// the equal-distribution strategy. Costs divided by this unit are O(1), which
/// makes the conventional parameter ranges (r = 1, eta up to 1, and the
/// pairwise-dynamics step grids) meaningful on any network regardless of how
/// congested its raw cost scale is.
inline double cost_unit(const Network& net, const RouteSet& rs) {
    std::vector<double> p(rs.size(), 0.0);
    for (const auto& ks : rs.per_od)
        for (int k : ks) p[k] = 1.0 / static_cast<double>(ks.size());
    auto c = route_cost(rs, link_costs(net, aggregate_flows(net, rs, p)));
    double unit = 0.0;
    for (double v : c) unit = std::max(unit, v);
    if (!(unit > 0.0)) throw std::runtime_error("degenerate zero-cost network in cost_unit");
    return unit;
}

namespace detail {

/// Method-of-successive-averages approximation of the UE link flow:
/// x <- x + (AON(u(x)) - x) / t. Used only to pick a representative operating
/// point for the automatic cost scale; it needs no route set.
inline LinkFlow msa_flows(const Network& net, int iters) {
    LinkFlow x(net.links.size(), 0.0);
    std::vector<std::vector<int>> by_origin(net.node_count);
    for (std::size_t w = 0; w < net.od_pairs.size(); ++w)
        by_origin[net.od_pairs[w].origin].push_back(static_cast<int>(w));
    for (int t = 1; t <= iters; ++t) {
        std::vector<double> u = link_costs(net, x);
        LinkFlow aon(net.links.size(), 0.0);
        for (int o = 0; o < net.node_count; ++o) {
            for (int w : by_origin[o]) {
                Route r = shortest_path(net, u, w);
                for (int a : r.links) aon[a] += net.od_pairs[w].demand;
            }
        }
        for (std::size_t a = 0; a < x.size(); ++a) x[a] += (aon[a] - x[a]) / t;
    }
    return x;
}

}  // namespace detail

/// Automatic cost unit for the day-to-day updates: an estimate of the local
/// Lipschitz constant of the route-cost map c(p) near equilibrium,
/// L = max_w d_w x sum of u_a'(x_msa) along w's shortest route at x_msa.
/// (Shifting a fraction of w's travelers onto a route changes that route's
/// cost at about this rate.) Dividing costs by L keeps the day-to-day
/// feedback loop gain of order one, so the conventional dimensionless
/// parameters (r = 1, eta up to 1) are stable regardless of how steep the
/// network's congestion functions are. Falls back to cost_unit for
/// flow-independent costs, whose feedback gain is zero at any scale.
inline double default_cost_scale(const Network& net, const RouteSet& rs) {
    LinkFlow x = detail::msa_flows(net, 30);
    std::vector<double> u0 = link_costs(net, x);
    LinkFlow xh = x;
    std::vector<double> h(x.size());
    for (std::size_t a = 0; a < x.size(); ++a) {
        h[a] = 1e-4 * (1.0 + std::abs(x[a]));
        xh[a] += h[a];
    }
    std::vector<double> u1 = link_costs(net, xh);
    std::vector<double> du(x.size());
    for (std::size_t a = 0; a < x.size(); ++a) du[a] = (u1[a] - u0[a]) / h[a];
    double L = 0.0;
    for (std::size_t w = 0; w < net.od_pairs.size(); ++w) {
        Route r = shortest_path(net, u0, static_cast<int>(w));
        double slope = 0.0;
        for (int a : r.links) slope += du[a];
        L = std::max(L, net.od_pairs[w].demand * slope);
    }
    return L > 0.0 ? L : cost_unit(net, rs);
}

/// Relative equilibrium gap of the link flow induced by p:
/// delta = -<u(x), x' - x> / <u(x), x>, with x' the all-or-nothing assignment
/// onto whole-network shortest paths under u(x).
inline double relative_gap(const Network& net, const RouteSet& rs, const std::vector<double>& p,
                           const std::vector<double>& d) {
    LinkFlow x = aggregate_flows(net, rs, p);
    std::vector<double> u = link_costs(net, x);
    double total = std::inner_product(u.begin(), u.end(), x.begin(), 0.0);
    if (total == 0.0) throw std::runtime_error("degenerate zero-cost network in relative_gap");

    double aon = 0.0;
    // group ODs by origin so each origin needs one shortest-path tree
    std::vector<std::vector<int>> by_origin(net.node_count);
    for (std::size_t w = 0; w < net.od_pairs.size(); ++w)
        by_origin[net.od_pairs[w].origin].push_back(static_cast<int>(w));
    for (int o = 0; o < net.node_count; ++o) {
        if (by_origin[o].empty()) continue;
        auto tree = detail::shortest_path_tree(net, u, o);
        for (int w : by_origin[o]) {
            double dd = tree.dist[net.od_pairs[w].destination];
            if (!std::isfinite(dd)) throw std::runtime_error("destination unreachable");
            aon += d[w] * dd;
        }
    }
    return (total - aon) / total;
}

namespace detail {

// Random per-OD simplex point (exponential draws, normalized).
inline std::vector<double> random_feasible_p(const RouteSet& rs, CounterRng& rng) {
    std::vector<double> p(rs.size());
    for (const auto& ks : rs.per_od) {
        double z = 0.0;
        for (int k : ks) {
            p[k] = -std::log(rng.next_double());
            z += p[k];
        }
        for (int k : ks) p[k] /= z;
    }
    return p;
}

// Empirical Lipschitz constant of p -> c(p) over random feasible pairs.
inline double lipschitz_estimate(const Network& net, const RouteSet& rs, std::uint64_t seed) {
    CounterRng rng(seed, 0xc0571u);
    double L = 0.0;
    for (int it = 0; it < 200; ++it) {
        auto pa = random_feasible_p(rs, rng);
        auto pb = random_feasible_p(rs, rng);
        auto ca = route_cost(rs, link_costs(net, aggregate_flows(net, rs, pa)));
        auto cb = route_cost(rs, link_costs(net, aggregate_flows(net, rs, pb)));
        double dc = 0.0, dp = 0.0;
        for (std::size_t k = 0; k < rs.size(); ++k) {
            dc += (ca[k] - cb[k]) * (ca[k] - cb[k]);
            dp += (pa[k] - pb[k]) * (pa[k] - pb[k]);
        }
        if (dp > 0.0) L = std::max(L, std::sqrt(dc / dp));
    }
    return L;
}

}  // namespace detail

/// Per-day observer; invoked after each recorded day with the current state.
using RunObserver = std::function<void(const StrategyState&)>;

/// Runs the configured dynamic from initial valuations s0 until the relative
/// gap reaches gap_tol or max_days elapse. Non-convergence is flagged in the
/// trace, not raised. The initial choice is p0 = q_r(s0).
///
/// basis, when given, feeds the per-day proportionality-residual column
/// (max CULO residual |<e, log p> + r <e, s0>|); it is optional because the
/// exact kernel computation can dwarf the run itself on large route sets.
inline std::pair<StrategyState, Trace> run_dynamics(const Network& net, const RouteSet& rs,
                                                    const RunConfig& config,
                                                    const std::vector<double>& s0,
                                                    const KernelBasis* basis = nullptr,
                                                    const RunObserver& observer = nullptr) {
    if (s0.size() != rs.size()) throw std::invalid_argument("s0 size mismatch");
    for (const auto& ks : rs.per_od)
        if (ks.empty()) throw std::invalid_argument("route set does not cover every OD");
    if (!(config.gap_tol > 0.0)) throw std::invalid_argument("gap_tol must be positive");

    const std::vector<double> d = net.demands();
    const double scale =
        config.cost_scale > 0.0 ? config.cost_scale : default_cost_scale(net, rs);

    StrategyState state;
    state.s = s0;
    state.p = logit_choice(s0, config.r, rs);
    state.day = 0;

    Trace tr;
    if (config.kind == DynamicsKind::culo &&
        config.schedule.kind == StepSchedule::Kind::constant) {
        tr.lipschitz_estimate = detail::lipschitz_estimate(net, rs, config.seed) / scale;
        if (tr.lipschitz_estimate > 0.0)
            tr.eta_bound = 1.0 / (2.0 * config.r * tr.lipschitz_estimate);
    }

    auto record = [&](double ms) {
        TraceRow row;
        row.day = state.day;
        row.gap = relative_gap(net, rs, state.p, d);
        row.entropy = -entropy(rs, state.p, d);
        row.used_1e4 = used_route_count(state.p, 1e-4);
        row.used_1e6 = used_route_count(state.p, 1e-6);
        if (basis != nullptr)
            row.prop_res_max = proportionality_residuals(state.p, *basis, config.r, s0).max_abs_culo;
        row.ms = ms;
        tr.rows.push_back(row);
        if (observer) observer(state);
        return row.gap;
    };

    double gap = record(0.0);
    while (gap > config.gap_tol && state.day < config.max_days) {
        auto t0 = std::chrono::steady_clock::now();
        double eta = config.schedule.eta(state.day);
        std::vector<double> c =
            route_cost(rs, link_costs(net, aggregate_flows(net, rs, state.p)));
        for (double& v : c) v /= scale;
        switch (config.kind) {
            case DynamicsKind::culo:
                state = culo_step(state, c, eta, config.r, rs);
                break;
            case DynamicsKind::averaging:
                state = averaging_step(state, c, eta, config.r, rs);
                break;
            case DynamicsKind::best_response:
                state = best_response_step(state, c, eta, rs);
                break;
            case DynamicsKind::projection:
                state = projection_step(state, c, eta, rs);
                break;
            case DynamicsKind::smith:
            case DynamicsKind::replicator:
                state = pairwise_step(config.kind, state, c, eta, rs);
                break;
        }
        double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                        .count();
        gap = record(ms);
    }
    tr.converged = gap <= config.gap_tol;
    return {state, tr};
}

}  // namespace meue

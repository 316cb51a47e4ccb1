#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "meue/dynamics.hpp"
#include "meue/network.hpp"
#include "meue/rng.hpp"
#include "meue/routing.hpp"

namespace meue {

enum class ExploreVariant { route_valuation, link_valuation };

struct ExploreConfig {
    ExploreVariant variant = ExploreVariant::link_valuation;
    double r = 1.0;
    // Per-link Gaussian perturbation of the valuation update with variance
    // decaying at rate 1/t: sigma_t = sigma0 / sqrt(1 + t). Unset means the
    // default 0.1 x mean free-flow cost; zero disables noise outright. Only
    // the link-valuation variant is noisy.
    std::optional<double> noise_sigma0;
    int noise_stop_window = 50;  // days without a new route before noise stops
    double gap_tol = 1e-5;
    int max_days = 3000;
    std::uint64_t seed = 0;
    // Cost unit for the valuation updates, matching RunConfig::cost_scale.
    // 0 selects default_cost_scale() over the initial (shortest-path) route
    // set; the unit is fixed for the whole run even as the route set grows,
    // so a run is a deterministic function of the config.
    double cost_scale = 0.0;
};

struct Discovery {
    int day = 0;
    int od_index = 0;
    std::vector<int> links;
};

struct ExploreResult {
    RouteSet route_set;
    StrategyState state;
    Trace trace;
    std::vector<Discovery> discoveries;
    int last_discovery_day = 0;
    int noise_disabled_day = -1;  // -1 while noise never ran or is still active
};

inline double default_noise_sigma0(const Network& net) {
    LinkFlow zero(net.links.size(), 0.0);
    std::vector<double> fft = link_costs(net, zero);
    double mean = 0.0;
    for (double v : fft) mean += v;
    return 0.1 * mean / static_cast<double>(fft.size());
}

/// Append-only audit log of discovered routes: `day,od_index,link_sequence`
/// with the link ids joined by '-'.
inline void write_discovery_log(const std::vector<Discovery>& ds, const std::string& path) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const Discovery& d : ds) {
        out << d.day << "," << d.od_index << ",";
        for (std::size_t i = 0; i < d.links.size(); ++i) out << (i ? "-" : "") << d.links[i];
        out << "\n";
    }
}

/// CULO with on-the-fly route discovery. The active set starts from each OD's
/// zero-cost shortest path and only ever grows; every day the true-cost
/// shortest route per OD is added if new (effective from the next day).
///
/// route_valuation: per-route s accumulates route costs; a newly added route
/// starts from the minimum active s of its OD taken before that day's
/// accumulation, then accumulates like any other.
/// link_valuation: per-link v accumulates u(x) plus optional decaying noise;
/// s is always the induced route total. Discovery always uses the true u.
inline ExploreResult explore_run(const Network& net, const ExploreConfig& config) {
    if (config.noise_stop_window < 1) throw std::invalid_argument("noise_stop_window must be >= 1");
    const std::vector<double> d = net.demands();
    const std::size_t A = net.links.size();

    ExploreResult res;
    res.route_set = RouteSet(net.od_pairs.size());
    {
        std::vector<double> zero_u(A, 0.0);
        for (std::size_t w = 0; w < net.od_pairs.size(); ++w)
            res.route_set.add_route(net, shortest_path(net, zero_u, static_cast<int>(w)));
    }
    RouteSet& rs = res.route_set;

    const double scale = config.cost_scale > 0.0 ? config.cost_scale : default_cost_scale(net, rs);

    double sigma0 = config.noise_sigma0.value_or(default_noise_sigma0(net));
    if (sigma0 < 0.0) throw std::invalid_argument("noise_sigma0 must be non-negative");
    if (config.variant == ExploreVariant::route_valuation) sigma0 = 0.0;
    bool noise_on = sigma0 > 0.0;
    CounterRng rng(config.seed, 0xe897u);

    StrategyState state;
    state.s.assign(rs.size(), 0.0);
    state.v.assign(A, 0.0);

    auto record = [&](double gap, double ms) {
        TraceRow row;
        row.day = state.day;
        row.gap = gap;
        row.entropy = -entropy(rs, state.p, d);
        row.used_1e4 = used_route_count(state.p, 1e-4);
        row.used_1e6 = used_route_count(state.p, 1e-6);
        row.ms = ms;
        res.trace.rows.push_back(row);
    };

    // group ODs by origin: one shortest-path tree per origin per day serves
    // both the relative gap and the discovery step
    std::vector<std::vector<int>> by_origin(net.node_count);
    for (std::size_t w = 0; w < net.od_pairs.size(); ++w)
        by_origin[net.od_pairs[w].origin].push_back(static_cast<int>(w));

    double ms = 0.0;
    for (;;) {
        auto t0 = std::chrono::steady_clock::now();
        state.p = logit_choice(state.s, config.r, rs);

        LinkFlow x = aggregate_flows(net, rs, state.p);
        std::vector<double> u = link_costs(net, x);
        double total = std::inner_product(u.begin(), u.end(), x.begin(), 0.0);
        if (total == 0.0) throw std::runtime_error("degenerate zero-cost network in explore_run");

        // discovery under the true costs; additions take effect next day
        double aon = 0.0;
        std::vector<Route> found;
        for (int o = 0; o < net.node_count; ++o) {
            if (by_origin[o].empty()) continue;
            auto tree = detail::shortest_path_tree(net, u, o);
            for (int w : by_origin[o]) {
                double dd = tree.dist[net.od_pairs[w].destination];
                if (!std::isfinite(dd)) throw std::runtime_error("destination unreachable");
                aon += d[w] * dd;
                Route r{w, tree.path[net.od_pairs[w].destination]};
                if (!rs.contains(r)) found.push_back(std::move(r));
            }
        }
        double gap = (total - aon) / total;
        record(gap, ms);

        // gap alone cannot end a noisy run, and a stabilized run must already
        // contain every current shortest route in its active set
        if ((gap <= config.gap_tol && !noise_on && found.empty()) ||
            state.day >= config.max_days) {
            res.trace.converged = gap <= config.gap_tol;
            break;
        }

        // valuation update
        if (config.variant == ExploreVariant::link_valuation) {
            std::vector<double> eps(A, 0.0);
            if (noise_on) {
                double sigma = sigma0 / std::sqrt(1.0 + static_cast<double>(state.day));
                for (std::size_t a = 0; a < A; ++a) eps[a] = sigma * rng.next_gaussian();
            }
            for (std::size_t a = 0; a < A; ++a) state.v[a] += (u[a] + eps[a]) / scale;
        } else {
            std::vector<double> smin(rs.od_count());
            for (std::size_t w = 0; w < rs.od_count(); ++w) {
                double lo = std::numeric_limits<double>::infinity();
                for (int k : rs.per_od[w]) lo = std::min(lo, state.s[k]);
                smin[w] = lo;
            }
            std::vector<double> c = route_cost(rs, u);
            for (std::size_t k = 0; k < rs.size(); ++k) state.s[k] += c[k] / scale;
            for (Route& r : found) {
                double sc = 0.0;
                for (int a : r.links) sc += u[a];
                state.s.push_back(smin[r.od_index] + sc / scale);
            }
        }

        for (Route& r : found) {
            res.discoveries.push_back({state.day, r.od_index, r.links});
            rs.add_route(net, r);
            res.last_discovery_day = state.day;
        }
        if (config.variant == ExploreVariant::link_valuation) {
            // derived valuations over the (possibly grown) active set
            state.s.assign(rs.size(), 0.0);
            for (std::size_t k = 0; k < rs.size(); ++k)
                for (int a : rs.routes[k].links) state.s[k] += state.v[a];
        }

        if (noise_on && state.day - res.last_discovery_day >= config.noise_stop_window) {
            noise_on = false;
            res.noise_disabled_day = state.day;
        }

        ++state.day;
        ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                 .count();
    }
    res.state = state;
    return res;
}

}  // namespace meue

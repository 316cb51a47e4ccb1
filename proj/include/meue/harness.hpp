#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "meue/analysis.hpp"
#include "meue/dynamics.hpp"
#include "meue/exploration.hpp"
#include "meue/network.hpp"
#include "meue/rng.hpp"
#include "meue/routing.hpp"

namespace meue {

/// Initial-condition sampler for batch experiments. All kinds produce route
/// valuations s0; uniform_p0 draws p0 uniformly on each OD simplex and maps
/// it through s0 = -log(p0)/r, normal_v0 draws link valuations and lifts
/// them with s0 = lambda^T v0.
struct InitSampler {
    enum class Kind { zero_valuation, uniform_p0, normal_s0, normal_v0 } kind = Kind::zero_valuation;
    int count = 1;
    std::uint64_t seed = 0;
    double scale = 1.0;

    static Kind kind_from_string(const std::string& s) {
        if (s == "zero_valuation") return Kind::zero_valuation;
        if (s == "uniform_p0") return Kind::uniform_p0;
        if (s == "normal_s0") return Kind::normal_s0;
        if (s == "normal_v0") return Kind::normal_v0;
        throw std::invalid_argument("unknown sampler kind: " + s);
    }
};

inline std::string to_string(InitSampler::Kind k) {
    switch (k) {
        case InitSampler::Kind::zero_valuation: return "zero_valuation";
        case InitSampler::Kind::uniform_p0: return "uniform_p0";
        case InitSampler::Kind::normal_s0: return "normal_s0";
        case InitSampler::Kind::normal_v0: return "normal_v0";
    }
    throw std::invalid_argument("unknown sampler kind");
}

inline std::vector<std::vector<double>> sample_initial(const InitSampler& sampler,
                                                       const Network& net, const RouteSet& rs,
                                                       double r) {
    if (sampler.count < 1) throw std::invalid_argument("sampler count must be >= 1");
    std::vector<std::vector<double>> out;
    out.reserve(sampler.count);
    CounterRng rng(sampler.seed, 0x5a3du);
    for (int n = 0; n < sampler.count; ++n) {
        std::vector<double> s0(rs.size(), 0.0);
        switch (sampler.kind) {
            case InitSampler::Kind::zero_valuation:
                break;
            case InitSampler::Kind::uniform_p0: {
                if (!(r > 0.0)) throw std::invalid_argument("uniform_p0 needs r > 0");
                // exponential draws normalized per OD give a uniform simplex point
                std::vector<double> p(rs.size());
                for (const auto& ks : rs.per_od) {
                    double z = 0.0;
                    for (int k : ks) {
                        p[k] = -std::log(rng.next_double());
                        z += p[k];
                    }
                    for (int k : ks) p[k] /= z;
                }
                for (std::size_t k = 0; k < rs.size(); ++k) s0[k] = -std::log(p[k]) / r;
                break;
            }
            case InitSampler::Kind::normal_s0:
                for (std::size_t k = 0; k < rs.size(); ++k)
                    s0[k] = sampler.scale * rng.next_gaussian();
                break;
            case InitSampler::Kind::normal_v0: {
                std::vector<double> v0(net.links.size());
                for (double& v : v0) v = sampler.scale * rng.next_gaussian();
                for (std::size_t k = 0; k < rs.size(); ++k)
                    for (int a : rs.routes[k].links) s0[k] += v0[a];
                break;
            }
        }
        out.push_back(std::move(s0));
    }
    return out;
}

struct Scenario {
    std::string name;
    std::string net_path;    // empty -> scenario's builtin default
    std::string trips_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    int workers = 1;
    double r = 0.0;          // 0 -> scenario default
    int max_days = 0;        // 0 -> scenario default
};

namespace detail {

template <class F>
inline void parallel_runs(int n, int workers, F&& body) {
    workers = std::max(1, std::min(workers, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex err_mu;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    if (!err) err = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

inline std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Per-run outcome row assembled by workers, written in index order.
struct RunRow {
    std::string text;
    bool failed = false;
};

inline int write_summary(const std::string& path, const std::string& header,
                         const std::vector<RunRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << header << "\n";
    bool any_failed = false;
    for (const RunRow& r : rows) {
        out << r.text << "\n";
        any_failed = any_failed || r.failed;
    }
    return any_failed ? 1 : 0;
}

// lambda histogram over 5000 initial points per sampler kind
inline int scenario_3n4l_histogram(const Scenario& sc) {
    const Network net = builtin_network("3n4l");
    const RouteSet rs = builtin_route_set(net, "3n4l");
    const double r = sc.r > 0.0 ? sc.r : 1.0;
    const int per_kind = 5000;
    const InitSampler::Kind kinds[] = {InitSampler::Kind::uniform_p0,
                                       InitSampler::Kind::normal_s0,
                                       InitSampler::Kind::normal_v0};

    std::vector<RunRow> rows;
    for (auto kind : kinds) {
        InitSampler sampler{kind, per_kind, sc.seed, 1.0};
        auto inits = sample_initial(sampler, net, rs, r);
        std::vector<RunRow> part(per_kind);
        parallel_runs(per_kind, sc.workers, [&](int i) {
            RunConfig cfg;
            cfg.kind = DynamicsKind::culo;
            cfg.r = r;
            cfg.schedule = StepSchedule::constant(1.0);
            cfg.gap_tol = 1e-10;
            cfg.max_days = sc.max_days > 0 ? sc.max_days : 100000;
            cfg.seed = sc.seed;
            auto [state, tr] = run_dynamics(net, rs, cfg, inits[i]);
            RunRow row;
            row.failed = !tr.converged;
            row.text = to_string(kind) + "," + std::to_string(i) + "," +
                       fmt_g(lambda_3n4l(state.p)) + "," + fmt_g(tr.rows.back().gap) + "," +
                       std::to_string(state.day) + "," + (tr.converged ? "1" : "0");
            part[i] = std::move(row);
        });
        rows.insert(rows.end(), part.begin(), part.end());
    }
    // per-run traces are deliberately not written here: 15000 near-identical
    // tiny files would drown the artifact directory; the summary carries
    // everything the histogram needs
    return write_summary(sc.out_dir + "/3n4l_histogram_summary.csv",
                         "sampler,sample,lambda,final_gap,days,converged,scale=1", rows);
}

// lambda-vs-eta sweep for all six dynamics
inline int scenario_3n4l_stepsize(const Scenario& sc) {
    const Network net = builtin_network("3n4l");
    const RouteSet rs = builtin_route_set(net, "3n4l");
    const double r = sc.r > 0.0 ? sc.r : 1.0;

    struct GridRun {
        DynamicsKind kind;
        double eta;
    };
    std::vector<GridRun> grid;
    auto sweep = [&](DynamicsKind k, double lo, double hi, double step) {
        // integer stepping avoids float accumulation carrying eta past hi
        for (int i = 0;; ++i) {
            double e = lo + i * step;
            if (e > hi + 1e-12) break;
            grid.push_back({k, std::min(e, hi)});
        }
    };
    sweep(DynamicsKind::culo, 0.05, 1.0, 0.05);
    sweep(DynamicsKind::averaging, 0.05, 1.0, 0.05);
    sweep(DynamicsKind::best_response, 0.05, 0.95, 0.05);
    sweep(DynamicsKind::projection, 0.02, 0.2, 0.02);
    sweep(DynamicsKind::smith, 0.005, 0.13, 0.005);
    sweep(DynamicsKind::replicator, 0.02, 0.4, 0.02);

    std::vector<RunRow> rows(grid.size());
    parallel_runs(static_cast<int>(grid.size()), sc.workers, [&](int i) {
        RunConfig cfg;
        cfg.kind = grid[i].kind;
        cfg.r = r;
        // best response uses the decaying schedule; everything else constant
        cfg.schedule = grid[i].kind == DynamicsKind::best_response
                           ? StepSchedule::harmonic(grid[i].eta)
                           : StepSchedule::constant(grid[i].eta);
        cfg.gap_tol = 1e-10;
        cfg.max_days = sc.max_days > 0 ? sc.max_days : 200000;
        cfg.seed = sc.seed;
        std::vector<double> s0(rs.size(), 0.0);
        auto [state, tr] = run_dynamics(net, rs, cfg, s0);
        char tag[64];
        std::snprintf(tag, sizeof tag, "%s_eta%.3f", to_string(cfg.kind).c_str(), grid[i].eta);
        write_trace_csv(tr, sc.out_dir + "/3n4l_stepsize_" + tag + ".csv");
        RunRow row;
        row.text = to_string(cfg.kind) + "," + fmt_g(grid[i].eta) + "," +
                   fmt_g(lambda_3n4l(state.p)) + "," + fmt_g(tr.rows.back().gap) + "," +
                   std::to_string(state.day) + "," + (tr.converged ? "1" : "0");
        rows[i] = std::move(row);
    });
    return write_summary(sc.out_dir + "/3n4l_stepsize_summary.csv",
                         "dynamics,eta,lambda,final_gap,days,converged", rows);
}

// Route cover for the fixed-route-set scenario. Starts from the union of the
// routes found by five seeded noisy exploration runs, then closes it by
// column generation: run the cumulative dynamic to near-convergence, add any
// missing shortest route at the resulting costs, and finish by adding every
// near-tie route (within 1e-4 of the per-OD minimum cost) so exact-equilibrium
// ties are all represented. The result is persisted for reuse.
inline RouteSet sf_route_cover(const Network& net, const std::string& cover_path,
                               std::uint64_t seed, int workers) {
    if (std::filesystem::exists(cover_path)) return read_route_list(net, cover_path);
    std::vector<RouteSet> found(5);
    parallel_runs(5, workers, [&](int i) {
        ExploreConfig cfg;
        cfg.variant = ExploreVariant::link_valuation;
        cfg.r = 1.0;
        cfg.gap_tol = 1e-5;
        cfg.max_days = 3000;
        cfg.seed = seed + 1000u * static_cast<std::uint64_t>(i + 1);
        found[i] = explore_run(net, cfg).route_set;
    });
    RouteSet cover(net.od_pairs.size());
    for (const RouteSet& rs : found)
        for (const Route& rt : rs.routes) cover.add_route(net, rt);

    std::vector<std::vector<int>> by_origin(net.node_count);
    for (std::size_t w = 0; w < net.od_pairs.size(); ++w)
        by_origin[net.od_pairs[w].origin].push_back(static_cast<int>(w));
    auto equilibrate = [&](const RouteSet& rs) {
        RunConfig cfg;
        cfg.kind = DynamicsKind::culo;
        cfg.r = 1.0;
        cfg.schedule = StepSchedule::constant(1.0);
        cfg.gap_tol = 1e-9;
        cfg.max_days = 6000;
        cfg.seed = seed;
        return run_dynamics(net, rs, cfg, std::vector<double>(rs.size(), 0.0));
    };
    std::vector<double> u;
    for (int round = 0; round < 20; ++round) {
        auto [state, tr] = equilibrate(cover);
        u = link_costs(net, aggregate_flows(net, cover, state.p));
        int added = 0;
        for (int o = 0; o < net.node_count; ++o) {
            if (by_origin[o].empty()) continue;
            auto tree = shortest_path_tree(net, u, o);
            for (int w : by_origin[o])
                if (cover.add_route(net, Route{w, tree.path[net.od_pairs[w].destination]}))
                    ++added;
        }
        if (added == 0 && tr.rows.back().gap <= 1e-6) break;
    }

    // alternate equilibration with tie closure and pruning until stable: the
    // tie set (routes within 1e-4 of their OD's minimum cost) needs a deeply
    // converged equilibrium, and deep convergence needs the exploration
    // leftovers pruned away, so the two are iterated together
    for (int pass = 0; pass < 6; ++pass) {
        auto [state, tr] = equilibrate(cover);
        u = link_costs(net, aggregate_flows(net, cover, state.p));
        RouteSet next(net.od_pairs.size());
        for (std::size_t w = 0; w < net.od_pairs.size(); ++w)
            for (Route& rt : enumerate_near_shortest(net, u, static_cast<int>(w), 1e-4))
                next.add_route(net, rt);
        for (std::size_t k = 0; k < cover.size(); ++k)
            if (state.p[k] >= 1e-9) next.add_route(net, cover.routes[k]);
        bool stable = next.size() == cover.size();
        for (std::size_t k = 0; stable && k < next.size(); ++k)
            stable = cover.contains(next.routes[k]);
        cover = std::move(next);
        if (stable) break;
    }
    write_route_list(cover, cover_path);
    return cover;
}

// Sioux-Falls scenarios:
//   A fixed route cover, plain cumulative dynamic
//   B route exploration with cumulative route valuations
//   C route exploration with cumulative link valuations, no noise
//   D as C with decaying valuation noise
/// The automatic cost unit of an exploration run, i.e. default_cost_scale
/// over the initial zero-cost shortest-path route set.
inline double sf_exploration_scale(const Network& net) {
    RouteSet sp(net.od_pairs.size());
    std::vector<double> zero(net.links.size(), 0.0);
    for (std::size_t w = 0; w < net.od_pairs.size(); ++w)
        sp.add_route(net, shortest_path(net, zero, static_cast<int>(w)));
    return default_cost_scale(net, sp);
}

inline int scenario_sf(const Scenario& sc) {
    std::string net_path = sc.net_path, trips_path = sc.trips_path;
    if (net_path.empty()) {
        net_path = std::string(MEUE_DATA_DIR) + "/SiouxFalls_net.tntp";
        trips_path = std::string(MEUE_DATA_DIR) + "/SiouxFalls_trips.tntp";
    }
    const Network net = load_tntp(net_path, trips_path);
    const std::vector<double> d = net.demands();
    const double r = sc.r > 0.0 ? sc.r : 1.0;
    const int max_days = sc.max_days > 0 ? sc.max_days : 3000;

    RouteSet cover =
        sf_route_cover(net, sc.out_dir + "/sf_route_cover.routes", sc.seed, sc.workers);

    std::vector<RunRow> rows(4);
    auto summarize = [&](int i, const std::string& label, const RouteSet& rs,
                         const std::vector<double>& p, const Trace& tr,
                         const std::string& note) {
        RunRow row;
        row.failed = !tr.converged;
        row.text = label + "," + fmt_g(tr.rows.back().gap) + "," + fmt_g(-entropy(rs, p, d)) +
                   "," + std::to_string(used_route_count(p, 1e-4)) + "," +
                   std::to_string(used_route_count(p, 1e-6)) + "," +
                   std::to_string(tr.rows.back().day) + "," + (tr.converged ? "1" : "0") + "," +
                   note;
        rows[i] = std::move(row);
    };

    parallel_runs(4, sc.workers, [&](int i) {
        const char label = static_cast<char>('A' + i);
        std::string trace_path = sc.out_dir + "/sf_trace_" + label + ".csv";
        if (i == 0) {
            RunConfig cfg;
            cfg.kind = DynamicsKind::culo;
            cfg.r = r;
            cfg.schedule = StepSchedule::constant(1.0);
            cfg.gap_tol = 1e-5;
            cfg.max_days = max_days;
            cfg.seed = sc.seed;
            std::vector<double> s0(cover.size(), 0.0);
            auto [state, tr] = run_dynamics(net, cover, cfg, s0);
            write_trace_csv(tr, trace_path);
            summarize(0, "A", cover, state.p, tr,
                      "fixed route cover = union of 5 seeded noisy exploration runs (substitute "
                      "for the published predetermined set)");
        } else {
            ExploreConfig cfg;
            cfg.variant =
                i == 1 ? ExploreVariant::route_valuation : ExploreVariant::link_valuation;
            if (i != 3) {
                cfg.noise_sigma0 = 0.0;
            } else {
                // reaching the maximum-entropy limit needs (i) a 100x slower
                // cost unit, so the handicaps written while the single known
                // route per OD is overloaded stay small enough to heal, and
                // (ii) noise kept alive for the whole run, so sqrt-decay
                // tie-flipping can still discover the last near-tie routes;
                // see the matching acceptance criterion. With the default
                // day budget this scenario shows the early trajectory only —
                // pass --max-days 2500000 to reproduce the full approach.
                cfg.cost_scale = 100.0 * sf_exploration_scale(net);
                cfg.noise_sigma0 = 1000.0;
                cfg.noise_stop_window = 1000000000;
            }
            cfg.r = r;
            cfg.gap_tol = 1e-5;
            cfg.max_days = max_days;
            cfg.seed = sc.seed;
            ExploreResult res = explore_run(net, cfg);
            write_trace_csv(res.trace, trace_path);
            write_discovery_log(res.discoveries,
                                sc.out_dir + "/sf_discoveries_" + label + ".csv");
            summarize(i, std::string(1, label), res.route_set, res.state.p, res.trace,
                      i == 1 ? "route_valuation" : (i == 2 ? "link_valuation" : "link_valuation+noise"));
        }
    });
    return write_summary(sc.out_dir + "/sf_summary.csv",
                         "scenario,final_gap,entropy,used_1e4,used_1e6,days,converged,note",
                         rows);
}

}  // namespace detail

/// Executes a named scenario. Returns 0 on success, 1 when any run failed to
/// converge or errored, and throws std::invalid_argument for unknown names.
inline int run_scenario(const Scenario& sc) {
    std::filesystem::create_directories(sc.out_dir);
    if (sc.name == "3n4l-histogram") return detail::scenario_3n4l_histogram(sc);
    if (sc.name == "3n4l-stepsize") return detail::scenario_3n4l_stepsize(sc);
    if (sc.name == "sf-scenarios") return detail::scenario_sf(sc);
    throw std::invalid_argument("unknown scenario: " + sc.name);
}

}  // namespace meue

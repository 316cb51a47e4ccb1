// meue: day-to-day route-choice dynamics, exploration, and entropy analysis.
//
//   meue run <scenario> [--net F --trips F] [--out DIR] [--seed N] [--workers N]
//   meue oracle --net ... --p0 FILE [--mode ...] [--xstar FILE]
//   meue analyze --state FILE
//
// Exit codes: 0 success, 1 failed run, 2 invalid configuration.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "meue/analysis.hpp"
#include "meue/dynamics.hpp"
#include "meue/exploration.hpp"
#include "meue/harness.hpp"
#include "meue/network.hpp"
#include "meue/routing.hpp"

namespace {

using nlohmann::json;

bool is_builtin(const std::string& name) { return name == "3n4l" || name == "counterexample"; }

meue::Network load_network(const std::string& net, const std::string& trips) {
    if (is_builtin(net)) return meue::builtin_network(net);
    if (trips.empty()) throw std::invalid_argument("--trips required with a network file");
    return meue::load_tntp(net, trips);
}

meue::RouteSet load_routes(const meue::Network& network, const std::string& net,
                           const std::string& routes) {
    if (!routes.empty()) return meue::read_route_list(network, routes);
    if (is_builtin(net)) return meue::builtin_route_set(network, net);
    return meue::full_route_set(network);
}

std::vector<double> read_vector(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("file not found: " + path);
    std::vector<double> v;
    double x;
    while (in >> x) v.push_back(x);
    return v;
}

int cmd_run(const std::string& scenario, meue::Scenario sc, const std::string& config_path) {
    sc.name = scenario;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw std::invalid_argument("config file not found: " + config_path);
        json cfg = json::parse(in);
        if (cfg.contains("name")) sc.name = cfg["name"].get<std::string>();
        if (cfg.contains("net")) sc.net_path = cfg["net"].get<std::string>();
        if (cfg.contains("trips")) sc.trips_path = cfg["trips"].get<std::string>();
        if (cfg.contains("out")) sc.out_dir = cfg["out"].get<std::string>();
        if (cfg.contains("seed")) sc.seed = cfg["seed"].get<std::uint64_t>();
        if (cfg.contains("workers")) sc.workers = cfg["workers"].get<int>();
        if (cfg.contains("r")) sc.r = cfg["r"].get<double>();
        if (cfg.contains("max_days")) sc.max_days = cfg["max_days"].get<int>();
    }
    return meue::run_scenario(sc);
}

int cmd_oracle(const std::string& net, const std::string& trips, const std::string& routes,
               const std::string& p0_path, const std::string& mode,
               const std::string& xstar_path) {
    meue::Network network = load_network(net, trips);
    meue::RouteSet rs = load_routes(network, net, routes);
    std::vector<double> p0 = read_vector(p0_path);

    meue::OracleMode m;
    if (mode == "parametric_3n4l")
        m = meue::OracleMode::parametric_3n4l;
    else if (mode == "dual_ascent")
        m = meue::OracleMode::dual_ascent;
    else
        throw std::invalid_argument("unknown oracle mode: " + mode);

    meue::LinkFlow xstar;
    const meue::LinkFlow* xp = nullptr;
    if (m == meue::OracleMode::dual_ascent) {
        if (xstar_path.empty()) {
            // derive the unique equilibrium link flow from a high-precision run
            meue::RunConfig cfg;
            cfg.kind = meue::DynamicsKind::culo;
            cfg.r = 1.0;
            cfg.gap_tol = 1e-10;
            cfg.max_days = 200000;
            std::vector<double> s0(rs.size(), 0.0);
            auto [state, tr] = meue::run_dynamics(network, rs, cfg, s0);
            xstar = meue::aggregate_flows(network, rs, state.p);
        } else {
            xstar = read_vector(xstar_path);
        }
        xp = &xstar;
    }
    meue::OracleResult res = meue::kl_projection_oracle(network, rs, p0, m, xp);

    json out;
    out["p_star"] = res.p_star;
    out["objective"] = res.objective;
    out["dual_beta"] = res.dual_beta;
    out["dual_alpha"] = res.dual_alpha;
    out["residual_norm"] = res.residual_norm;
    out["converged"] = res.converged;
    std::cout << out.dump(2) << "\n";
    return res.converged ? 0 : 1;
}

int cmd_analyze(const std::string& state_path) {
    std::ifstream in(state_path);
    if (!in) throw std::invalid_argument("state file not found: " + state_path);
    json st = json::parse(in);

    std::string net = st.at("net").get<std::string>();
    meue::Network network =
        load_network(net, st.value("trips", std::string()));
    meue::RouteSet rs = load_routes(network, net, st.value("routes", std::string()));
    std::vector<double> p = st.at("p").get<std::vector<double>>();
    if (!rs.feasible(p)) throw std::invalid_argument("p violates the simplex invariant");
    std::vector<double> d = network.demands();

    json out;
    out["entropy"] = -meue::entropy(rs, p, d);
    if (st.contains("p0")) {
        std::vector<double> p0 = st["p0"].get<std::vector<double>>();
        out["kl"] = meue::kl_divergence(rs, p, p0, d);
    }
    meue::KernelBasis basis = meue::kernel_basis(network, rs);
    double r = st.value("r", 1.0);
    std::vector<double> s0 = st.value("s0", std::vector<double>());
    meue::ProportionalityReport rep = meue::proportionality_residuals(p, basis, r, s0);
    out["residuals"] = rep.residuals;
    if (!s0.empty()) out["culo_residuals"] = rep.culo_residuals;
    out["residuals_clamped"] = rep.clamped;
    if (net == "3n4l" && p.size() == 4) out["lambda"] = meue::lambda_3n4l(p);
    out["used_counts"] = {{"1e-4", meue::used_route_count(p, 1e-4)},
                          {"1e-6", meue::used_route_count(p, 1e-6)}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"day-to-day route-choice dynamics and entropy analysis"};
    app.require_subcommand(1);

    std::string scenario, config_path;
    meue::Scenario sc;
    auto* run = app.add_subcommand("run", "execute a named scenario");
    run->add_option("scenario", scenario, "3n4l-histogram | 3n4l-stepsize | sf-scenarios")
        ->required();
    run->add_option("--net", sc.net_path, "network file (TNTP) or builtin name");
    run->add_option("--trips", sc.trips_path, "trips file (TNTP)");
    run->add_option("--out", sc.out_dir, "output directory");
    run->add_option("--seed", sc.seed, "base RNG seed");
    run->add_option("--workers", sc.workers, "concurrent runs");
    run->add_option("--r", sc.r, "logit dispersion override");
    run->add_option("--max-days", sc.max_days, "day-count override");
    run->add_option("--config", config_path, "JSON scenario override file");

    std::string onet, otrips, oroutes, op0, oxstar, omode = "dual_ascent";
    auto* oracle = app.add_subcommand("oracle", "KL projection of p0 onto the equilibrium set");
    oracle->add_option("--net", onet, "network file or builtin name")->required();
    oracle->add_option("--trips", otrips, "trips file (TNTP)");
    oracle->add_option("--routes", oroutes, "route-list file");
    oracle->add_option("--p0", op0, "whitespace-separated p0 file")->required();
    oracle->add_option("--mode", omode, "parametric_3n4l | dual_ascent");
    oracle->add_option("--xstar", oxstar, "equilibrium link-flow file");

    std::string state_path;
    auto* analyze = app.add_subcommand("analyze", "entropy/KL/proportionality report");
    analyze->add_option("--state", state_path, "JSON state file")->required();

    try {
        app.parse(argc, argv);
        if (run->parsed()) return cmd_run(scenario, sc, config_path);
        if (oracle->parsed()) return cmd_oracle(onet, otrips, oroutes, op0, omode, oxstar);
        return cmd_analyze(state_path);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

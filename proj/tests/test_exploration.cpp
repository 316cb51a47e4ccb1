#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "meue/analysis.hpp"
#include "meue/exploration.hpp"
#include "meue/network.hpp"
#include "meue/routing.hpp"

using namespace meue;

TEST_CASE("exploration on 3n4l with link valuations") {
    Network net = builtin_network("3n4l");
    ExploreConfig cfg;
    cfg.variant = ExploreVariant::link_valuation;
    cfg.noise_sigma0 = 0.0;
    cfg.r = 1.0;
    cfg.gap_tol = 1e-10;
    cfg.max_days = 50000;
    ExploreResult res = explore_run(net, cfg);
    REQUIRE(res.trace.converged);

    // the limit matches the KL projection of the uniform start onto the UE
    // set of the discovered game
    std::vector<double> p0(res.route_set.size(), 1.0 / static_cast<double>(res.route_set.size()));
    LinkFlow x_star = aggregate_flows(net, res.route_set, res.state.p);
    auto oracle = kl_projection_oracle(net, res.route_set, p0, OracleMode::dual_ascent, &x_star);
    if (res.route_set.size() == 4) {
        CHECK_THAT(lambda_3n4l(res.state.p),
                   Catch::Matchers::WithinAbs(lambda_3n4l(oracle.p_star), 1e-3));
    }
    for (std::size_t k = 0; k < res.route_set.size(); ++k)
        CHECK_THAT(res.state.p[k], Catch::Matchers::WithinAbs(oracle.p_star[k], 1e-3));

    // discovery has stabilized: the final shortest route is already active
    LinkFlow x = aggregate_flows(net, res.route_set, res.state.p);
    auto u = link_costs(net, x);
    CHECK(res.route_set.contains(shortest_path(net, u, 0)));
}

TEST_CASE("exploration on 3n4l with route valuations") {
    Network net = builtin_network("3n4l");
    ExploreConfig cfg;
    cfg.variant = ExploreVariant::route_valuation;
    cfg.r = 1.0;
    cfg.gap_tol = 1e-8;
    cfg.max_days = 50000;
    ExploreResult res = explore_run(net, cfg);
    REQUIRE(res.trace.converged);
    CHECK(res.trace.rows.back().gap <= 1e-8);
    LinkFlow x = aggregate_flows(net, res.route_set, res.state.p);
    CHECK(res.route_set.contains(shortest_path(net, link_costs(net, x), 0)));
}

TEST_CASE("route set grows monotonically") {
    Network net = builtin_network("3n4l");
    ExploreConfig cfg;
    cfg.variant = ExploreVariant::link_valuation;
    cfg.gap_tol = 1e-8;
    cfg.max_days = 20000;
    ExploreResult res = explore_run(net, cfg);
    // initial set holds one shortest route per OD; every later route appears
    // exactly once in the discovery log, in non-decreasing day order
    CHECK(res.route_set.size() == net.od_pairs.size() + res.discoveries.size());
    for (std::size_t i = 1; i < res.discoveries.size(); ++i)
        CHECK(res.discoveries[i].day >= res.discoveries[i - 1].day);
}

TEST_CASE("noise stops after a quiet window") {
    Network net = builtin_network("3n4l");
    ExploreConfig cfg;
    cfg.variant = ExploreVariant::link_valuation;
    cfg.noise_sigma0 = 5.0;
    cfg.noise_stop_window = 20;
    cfg.gap_tol = 1e-8;
    cfg.max_days = 50000;
    cfg.seed = 9;
    ExploreResult res = explore_run(net, cfg);
    REQUIRE(res.noise_disabled_day >= 0);
    CHECK(res.noise_disabled_day - res.last_discovery_day >= cfg.noise_stop_window);
    REQUIRE(res.trace.converged);
}

TEST_CASE("seeded runs are reproducible") {
    Network net = builtin_network("3n4l");
    ExploreConfig cfg;
    cfg.variant = ExploreVariant::link_valuation;
    cfg.noise_sigma0 = 2.0;
    cfg.gap_tol = 1e-8;
    cfg.max_days = 20000;
    cfg.seed = 1234;
    ExploreResult a = explore_run(net, cfg);
    ExploreResult b = explore_run(net, cfg);
    REQUIRE(a.trace.rows.size() == b.trace.rows.size());
    CHECK(a.state.p == b.state.p);
    CHECK(a.state.v == b.state.v);
    REQUIRE(a.discoveries.size() == b.discoveries.size());
    for (std::size_t i = 0; i < a.discoveries.size(); ++i) {
        CHECK(a.discoveries[i].day == b.discoveries[i].day);
        CHECK(a.discoveries[i].links == b.discoveries[i].links);
    }
    for (std::size_t i = 0; i < a.trace.rows.size(); ++i)
        CHECK(a.trace.rows[i].gap == b.trace.rows[i].gap);
}

TEST_CASE("link-valuation limit satisfies proportionality") {
    // the initial valuation lies in the row space of lambda, so the limit is
    // the maximum-entropy point of the discovered game
    Network net = builtin_network("3n4l");
    ExploreConfig cfg;
    cfg.variant = ExploreVariant::link_valuation;
    cfg.noise_sigma0 = 0.0;
    cfg.gap_tol = 1e-10;
    cfg.max_days = 50000;
    ExploreResult res = explore_run(net, cfg);
    REQUIRE(res.trace.converged);
    KernelBasis basis = kernel_basis(net, res.route_set);
    if (basis.size() > 0) {
        auto rep = proportionality_residuals(res.state.p, basis, cfg.r, {});
        CHECK(rep.max_abs <= 1e-3);
    }
}

TEST_CASE("discovery log format") {
    Network net = builtin_network("3n4l");
    ExploreConfig cfg;
    cfg.variant = ExploreVariant::link_valuation;
    cfg.gap_tol = 1e-8;
    cfg.max_days = 20000;
    ExploreResult res = explore_run(net, cfg);
    std::string path = "/tmp/meue_discoveries.csv";
    std::remove(path.c_str());
    write_discovery_log(res.discoveries, path);
    std::ifstream in(path);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        CHECK(std::count(line.begin(), line.end(), ',') == 2);
    }
    CHECK(n == res.discoveries.size());
}

TEST_CASE("default noise scale derives from free-flow costs") {
    Network net = builtin_network("3n4l");
    // mean of h = (4 + 20 + 1 + 30) / 4
    CHECK_THAT(default_noise_sigma0(net), Catch::Matchers::WithinAbs(0.1 * 55.0 / 4.0, 1e-12));
}

#include <catch2/catch_amalgamated.hpp>

#include "meue/network.hpp"
#include "meue/rng.hpp"
#include "meue/routing.hpp"

using namespace meue;

TEST_CASE("shortest path on 3n4l") {
    Network net = builtin_network("3n4l");
    // links 0..3; the cheapest route under these costs is {0, 3} at 1284
    Route r = shortest_path(net, {629, 3145, 18751, 655}, 0);
    CHECK(r.links == std::vector<int>{0, 3});
    // all-zero costs: every route ties, lexicographically smallest wins
    Route tie = shortest_path(net, {0, 0, 0, 0}, 0);
    CHECK(tie.links == std::vector<int>{0, 2});
}

TEST_CASE("shortest path tie-break on parallel links") {
    Network net = builtin_network("counterexample");
    Route r = shortest_path(net, {1, 1, 2}, 0);
    CHECK(r.links == std::vector<int>{0});
}

TEST_CASE("shortest path unreachable destination") {
    Network net;
    net.node_count = 3;
    net.links.push_back({0, 0, 1, CostSpec::constant(1)});
    net.od_pairs.push_back({0, 2, 1.0});
    net.finalize();
    CHECK_THROWS_WITH(shortest_path(net, {1}, 0),
                      Catch::Matchers::ContainsSubstring("unreachable"));
}

TEST_CASE("route costs on 3n4l") {
    Network net = builtin_network("3n4l");
    RouteSet rs = builtin_route_set(net, "3n4l");
    CHECK(route_cost(rs, {629, 3145, 18751, 655}) ==
          std::vector<double>{19380, 3800, 1284, 21896});
    CHECK(route_cost(rs, {0, 0, 0, 0}) == std::vector<double>{0, 0, 0, 0});
    CHECK(route_cost(rs, {4, 20, 1, 30})[0] == 5.0);
}

TEST_CASE("aggregate flows on 3n4l") {
    Network net = builtin_network("3n4l");
    RouteSet rs = builtin_route_set(net, "3n4l");
    CHECK(aggregate_flows(net, rs, {0.25, 0.25, 0.25, 0.25}) ==
          std::vector<double>{5, 5, 5, 5});
    CHECK(aggregate_flows(net, rs, {1, 0, 0, 0}) == std::vector<double>{10, 0, 10, 0});
    CHECK_THROWS_AS(aggregate_flows(net, rs, {0.5, 0.5, 0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("aggregate flows linear in p") {
    Network net = builtin_network("3n4l");
    RouteSet rs = builtin_route_set(net, "3n4l");
    std::vector<double> p{0.1, 0.2, 0.3, 0.4}, q{0.4, 0.3, 0.2, 0.1};
    double alpha = 0.3;
    std::vector<double> mix(4);
    for (int k = 0; k < 4; ++k) mix[k] = alpha * p[k] + (1 - alpha) * q[k];
    auto xm = aggregate_flows(net, rs, mix);
    auto xp = aggregate_flows(net, rs, p);
    auto xq = aggregate_flows(net, rs, q);
    for (int a = 0; a < 4; ++a)
        CHECK_THAT(xm[a], Catch::Matchers::WithinAbs(alpha * xp[a] + (1 - alpha) * xq[a], 1e-12));
}

TEST_CASE("add_route canonical deduplication") {
    Network net = builtin_network("3n4l");
    RouteSet rs(1);
    CHECK(rs.add_route(net, {0, {0, 2}}));
    CHECK_FALSE(rs.add_route(net, {0, {0, 2}}));
    CHECK(rs.size() == 1);
    CHECK(rs.add_route(net, {0, {1, 2}}));
    CHECK(rs.size() == 2);
}

TEST_CASE("add_route validation") {
    Network net = builtin_network("3n4l");
    RouteSet rs(1);
    CHECK_THROWS_AS(rs.add_route(net, {0, {2}}), std::invalid_argument);      // not contiguous
    CHECK_THROWS_AS(rs.add_route(net, {0, {0}}), std::invalid_argument);      // wrong endpoint
    CHECK_THROWS_AS(rs.add_route(net, {0, {}}), std::invalid_argument);       // empty
    Network two;
    two.node_count = 2;
    two.links.push_back({0, 0, 1, CostSpec::constant(1)});
    two.links.push_back({1, 1, 0, CostSpec::constant(1)});
    two.links.push_back({2, 0, 1, CostSpec::constant(1)});
    two.od_pairs.push_back({0, 1, 1.0});
    two.finalize();
    RouteSet rs2(1);
    CHECK_THROWS_AS(rs2.add_route(two, {0, {0, 1, 2}}), std::invalid_argument);  // revisits node
}

TEST_CASE("enumeration counts") {
    Network n1 = builtin_network("3n4l");
    CHECK(enumerate_acyclic_routes(n1, 0).size() == 4);
    Network n2 = builtin_network("counterexample");
    CHECK(enumerate_acyclic_routes(n2, 0).size() == 3);
    CHECK_THROWS_WITH(enumerate_acyclic_routes(n1, 0, 2),
                      Catch::Matchers::ContainsSubstring("cap"));
}

TEST_CASE("shortest path equals enumeration minimum") {
    CounterRng rng(11);
    for (const char* name : {"3n4l", "counterexample"}) {
        Network net = builtin_network(name);
        for (int it = 0; it < 50; ++it) {
            std::vector<double> u(net.links.size());
            for (double& v : u) v = 100.0 * rng.next_double();
            Route best = shortest_path(net, u, 0);
            double bc = 0.0;
            for (int a : best.links) bc += u[a];
            double mn = std::numeric_limits<double>::infinity();
            for (const Route& r : enumerate_acyclic_routes(net, 0)) {
                double c = 0.0;
                for (int a : r.links) c += u[a];
                mn = std::min(mn, c);
            }
            CHECK_THAT(bc, Catch::Matchers::WithinAbs(mn, 1e-12));
        }
    }
}

TEST_CASE("feasibility check") {
    Network net = builtin_network("3n4l");
    RouteSet rs = builtin_route_set(net, "3n4l");
    CHECK(rs.feasible({0.25, 0.25, 0.25, 0.25}));
    CHECK_FALSE(rs.feasible({0.5, 0.5, 0.5, 0.5}));
    CHECK_FALSE(rs.feasible({-0.1, 0.6, 0.25, 0.25}));
    CHECK_FALSE(rs.feasible({0.25, 0.25, 0.25}));
}

TEST_CASE("route list round trip") {
    Network net = builtin_network("3n4l");
    RouteSet rs = builtin_route_set(net, "3n4l");
    write_route_list(rs, "/tmp/meue_routes.txt");
    RouteSet again = read_route_list(net, "/tmp/meue_routes.txt");
    REQUIRE(again.size() == rs.size());
    for (std::size_t k = 0; k < rs.size(); ++k) CHECK(again.routes[k] == rs.routes[k]);
}

TEST_CASE("full route set covers every OD") {
    Network net = builtin_network("3n4l");
    RouteSet rs = full_route_set(net);
    CHECK(rs.size() == 4);
    CHECK(rs.per_od[0].size() == 4);
}

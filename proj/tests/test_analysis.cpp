#include <catch2/catch_amalgamated.hpp>

#include "meue/analysis.hpp"
#include "meue/dynamics.hpp"
#include "meue/network.hpp"
#include "meue/rng.hpp"
#include "meue/routing.hpp"

using namespace meue;

namespace {

const std::vector<double> kMeue{0.18, 0.28, 0.42, 0.12};
const std::vector<double> kUniform{0.25, 0.25, 0.25, 0.25};

}  // namespace

TEST_CASE("entropy values on 3n4l") {
    Network net = builtin_network("3n4l");
    RouteSet rs = builtin_route_set(net, "3n4l");
    auto d = net.demands();
    CHECK_THAT(entropy(rs, kUniform, d), Catch::Matchers::WithinAbs(10.0 * std::log(0.25), 1e-12));
    CHECK_THAT(entropy(rs, kMeue, d), Catch::Matchers::WithinAbs(-12.8388, 1e-3));
    CHECK(std::isfinite(entropy(rs, {0.5, 0.5, 0.0, 0.0}, d)));
}

TEST_CASE("kl divergence on 3n4l") {
    Network net = builtin_network("3n4l");
    RouteSet rs = builtin_route_set(net, "3n4l");
    auto d = net.demands();
    CHECK(kl_divergence(rs, kMeue, kMeue, d) == 0.0);
    CHECK_THAT(kl_divergence(rs, kMeue, kUniform, d),
               Catch::Matchers::WithinAbs(entropy(rs, kMeue, d) + 10.0 * std::log(4.0), 1e-12));
    CHECK_THAT(kl_divergence(rs, kMeue, kUniform, d), Catch::Matchers::WithinAbs(1.0241, 1e-3));
    CHECK(std::isinf(kl_divergence(rs, {1, 0, 0, 0}, {0, 1, 0, 0}, d)));
}

TEST_CASE("entropy/KL identity against the uniform strategy") {
    Network net = builtin_network("3n4l");
    RouteSet rs = builtin_route_set(net, "3n4l");
    auto d = net.demands();
    CounterRng rng(3);
    for (int it = 0; it < 50; ++it) {
        auto p = detail::random_feasible_p(rs, rng);
        double lhs = kl_divergence(rs, p, kUniform, d);
        double rhs = entropy(rs, p, d) + d[0] * std::log(4.0);
        CHECK_THAT(lhs, Catch::Matchers::WithinAbs(rhs, 1e-10));
    }
}

TEST_CASE("kernel basis of 3n4l") {
    Network net = builtin_network("3n4l");
    RouteSet rs = builtin_route_set(net, "3n4l");
    KernelBasis basis = kernel_basis(net, rs);
    REQUIRE(basis.size() == 1);
    auto e = basis.as_double()[0];
    // spans [1, 1, -1, -1] up to scale
    double scale = e[0];
    REQUIRE(scale != 0.0);
    CHECK(e[1] / scale == 1.0);
    CHECK(e[2] / scale == -1.0);
    CHECK(e[3] / scale == -1.0);
}

TEST_CASE("kernel basis of the counterexample is empty") {
    Network net = builtin_network("counterexample");
    RouteSet rs = builtin_route_set(net, "counterexample");
    CHECK(kernel_basis(net, rs).size() == 0);
}

TEST_CASE("kernel basis of a single-route network is empty") {
    Network net;
    net.node_count = 2;
    net.links.push_back({0, 0, 1, CostSpec::constant(1)});
    net.od_pairs.push_back({0, 1, 1.0});
    net.finalize();
    RouteSet rs(1);
    rs.add_route(net, {0, {0}});
    CHECK(kernel_basis(net, rs).size() == 0);
}

TEST_CASE("proportionality residuals") {
    Network net = builtin_network("3n4l");
    RouteSet rs = builtin_route_set(net, "3n4l");
    KernelBasis basis = kernel_basis(net, rs);

    auto uni = proportionality_residuals(kUniform, basis, 1.0, {});
    CHECK_THAT(uni.max_abs, Catch::Matchers::WithinAbs(0.0, 1e-14));
    CHECK_FALSE(uni.clamped);

    // 0.18 * 0.28 = 0.42 * 0.12: the MEUE satisfies the condition exactly
    auto meue = proportionality_residuals(kMeue, basis, 1.0, {});
    CHECK_THAT(meue.max_abs, Catch::Matchers::WithinAbs(0.0, 1e-12));

    auto off = proportionality_residuals({0.1, 0.2, 0.5, 0.2}, basis, 1.0, {});
    CHECK_THAT(std::abs(off.residuals[0]), Catch::Matchers::WithinAbs(std::abs(std::log(0.2)), 1e-12));

    auto zeroed = proportionality_residuals({0.5, 0.0, 0.5, 0.0}, basis, 1.0, {});
    CHECK(zeroed.clamped);
}

TEST_CASE("lambda extractor") {
    CHECK_THAT(lambda_3n4l(kMeue), Catch::Matchers::WithinAbs(0.12, 1e-15));
    CHECK_THAT(lambda_3n4l({0.3, 0.4, 0.3, 0.0}), Catch::Matchers::WithinAbs(0.0, 1e-15));
    CHECK_THAT(lambda_3n4l({0.1, 0.2, 0.5, 0.2}), Catch::Matchers::WithinAbs(0.2, 1e-15));
    CHECK_THROWS_AS(lambda_3n4l({0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("parametric oracle on 3n4l") {
    Network net = builtin_network("3n4l");
    RouteSet rs = builtin_route_set(net, "3n4l");

    auto res = kl_projection_oracle(net, rs, kUniform, OracleMode::parametric_3n4l);
    for (int k = 0; k < 4; ++k)
        CHECK_THAT(res.p_star[k], Catch::Matchers::WithinAbs(kMeue[k], 1e-6));

    // a UE member projects to itself
    std::vector<double> member{0.3 - 0.2, 0.4 - 0.2, 0.3 + 0.2, 0.2};
    auto self = kl_projection_oracle(net, rs, member, OracleMode::parametric_3n4l);
    for (int k = 0; k < 4; ++k)
        CHECK_THAT(self.p_star[k], Catch::Matchers::WithinAbs(member[k], 1e-6));
    CHECK_THAT(self.objective, Catch::Matchers::WithinAbs(0.0, 1e-10));

    CHECK_THROWS_AS(kl_projection_oracle(net, rs, {0.5, 0.5, 0.5, 0.5},
                                         OracleMode::parametric_3n4l),
                    std::invalid_argument);
}

TEST_CASE("link-valuation initial points project to the MEUE") {
    Network net = builtin_network("3n4l");
    RouteSet rs = builtin_route_set(net, "3n4l");
    CounterRng rng(17);
    for (int it = 0; it < 10; ++it) {
        std::vector<double> v0(4);
        for (double& v : v0) v = rng.next_gaussian();
        std::vector<double> s0(4, 0.0);
        for (int k = 0; k < 4; ++k)
            for (int a : rs.routes[k].links) s0[k] += v0[a];
        auto p0 = logit_choice(s0, 1.0, rs);
        auto res = kl_projection_oracle(net, rs, p0, OracleMode::parametric_3n4l);
        for (int k = 0; k < 4; ++k)
            CHECK_THAT(res.p_star[k], Catch::Matchers::WithinAbs(kMeue[k], 1e-5));
    }
}

TEST_CASE("dual ascent oracle matches the parametric oracle") {
    Network net = builtin_network("3n4l");
    RouteSet rs = builtin_route_set(net, "3n4l");
    LinkFlow x_star{6, 4, 3, 7};  // unique UE link flow

    auto dual = kl_projection_oracle(net, rs, kUniform, OracleMode::dual_ascent, &x_star);
    REQUIRE(dual.converged);
    for (int k = 0; k < 4; ++k)
        CHECK_THAT(dual.p_star[k], Catch::Matchers::WithinAbs(kMeue[k], 1e-6));
    CHECK(dual.residual_norm <= 1e-9);

    // KKT certificate: log p* - log p0 = sigma^T alpha + lambda^T beta
    for (int k = 0; k < 4; ++k) {
        double rhs = dual.dual_alpha[0];
        for (int a : rs.routes[k].links) rhs += dual.dual_beta[a];
        CHECK_THAT(std::log(dual.p_star[k]) - std::log(kUniform[k]),
                   Catch::Matchers::WithinAbs(rhs, 1e-6));
    }

    CHECK_THROWS_AS(kl_projection_oracle(net, rs, kUniform, OracleMode::dual_ascent, nullptr),
                    std::invalid_argument);
}

TEST_CASE("oracle p_star satisfies the proportionality condition") {
    Network net = builtin_network("3n4l");
    RouteSet rs = builtin_route_set(net, "3n4l");
    KernelBasis basis = kernel_basis(net, rs);
    CounterRng rng(5);
    for (int it = 0; it < 10; ++it) {
        auto p0 = detail::random_feasible_p(rs, rng);
        auto res = kl_projection_oracle(net, rs, p0, OracleMode::parametric_3n4l);
        // the projection restores proportionality relative to p0's violation:
        // <e, log p*> = <e, log p0> exactly at the KL optimum over the UE set
        auto rep = proportionality_residuals(res.p_star, basis, 1.0, {});
        auto rep0 = proportionality_residuals(p0, basis, 1.0, {});
        CHECK_THAT(rep.residuals[0], Catch::Matchers::WithinAbs(rep0.residuals[0], 1e-5));
    }
}

TEST_CASE("state counting oracle") {
    Network net;
    net.node_count = 2;
    net.links.push_back({0, 0, 1, CostSpec::constant(1)});
    net.links.push_back({1, 0, 1, CostSpec::constant(1)});
    net.od_pairs.push_back({0, 1, 4.0});
    net.finalize();
    RouteSet rs(1);
    rs.add_route(net, {0, {0}});
    rs.add_route(net, {0, {1}});

    auto even = entropy_count_oracle(rs, {0.5, 0.5}, net.demands(), 1.0);
    CHECK_THAT(even.log_count, Catch::Matchers::WithinAbs(std::log(6.0), 1e-12));
    CHECK_THAT(even.neg_phi_scaled, Catch::Matchers::WithinAbs(4.0 * std::log(2.0), 1e-12));

    net.od_pairs[0].demand = 20.0;
    auto big = entropy_count_oracle(rs, {0.5, 0.5}, net.demands(), 1.0);
    CHECK_THAT(big.log_count, Catch::Matchers::WithinAbs(std::log(184756.0), 1e-9));
    CHECK_THAT(big.neg_phi_scaled, Catch::Matchers::WithinAbs(20.0 * std::log(2.0), 1e-12));

    auto pure = entropy_count_oracle(rs, {1.0, 0.0}, net.demands(), 1.0);
    CHECK(pure.log_count == 0.0);
    CHECK(pure.neg_phi_scaled == 0.0);

    CHECK_THROWS_AS(entropy_count_oracle(rs, {0.51, 0.49}, net.demands(), 1.0),
                    std::invalid_argument);
}

TEST_CASE("counting ratio approaches one under scaling") {
    Network net;
    net.node_count = 2;
    for (int a = 0; a < 2; ++a) net.links.push_back({a, 0, 1, CostSpec::constant(1)});
    net.od_pairs.push_back({0, 1, 10.0});
    net.finalize();
    RouteSet rs(1);
    rs.add_route(net, {0, {0}});
    rs.add_route(net, {0, {1}});
    std::vector<double> p{0.3, 0.7};

    double prev = 0.0;
    for (double scale : {1.0, 2.0, 4.0, 8.0}) {
        net.od_pairs[0].demand = 10.0 * scale;
        auto res = entropy_count_oracle(rs, p, net.demands(), 1.0);
        double ratio = res.log_count / res.neg_phi_scaled;
        CHECK(ratio < 1.0);
        CHECK(ratio > prev);  // monotone approach to 1 from below
        prev = ratio;
    }
}

TEST_CASE("used route counts") {
    CHECK(used_route_count(kMeue, 1e-4) == 4);
    CHECK(used_route_count({0.5, 0.5, 0.0}, 1e-6) == 2);
    CHECK(used_route_count({1.0, 1e-7, 0.0}, 1e-6) == 1);
}

TEST_CASE("route conservation on 3n4l") {
    // a strictly positive start keeps all four UE routes in use at the limit
    Network net = builtin_network("3n4l");
    RouteSet rs = builtin_route_set(net, "3n4l");
    RunConfig cfg;
    cfg.kind = DynamicsKind::culo;
    cfg.gap_tol = 1e-10;
    cfg.max_days = 50000;
    auto [state, tr] = run_dynamics(net, rs, cfg, {3, 1, 4, 1});
    REQUIRE(tr.converged);
    CHECK(used_route_count(state.p, 1e-6) == 4);
}

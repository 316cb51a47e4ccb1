#pragma once

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "meue/network.hpp"

namespace meue {

/// A simple directed path for one OD pair, identified by its ordered link-id
/// sequence (the canonical form).
struct Route {
    int od_index = -1;
    std::vector<int> links;

    bool operator==(const Route& o) const {
        return od_index == o.od_index && links == o.links;
    }
};

/// Active route collection with implicit link-route (lambda) and OD-route
/// (sigma) incidence: lambda column k is routes[k].links, sigma column k has
/// its single 1 at routes[k].od_index. Copy-on-extend; never reordered.
struct RouteSet {
    std::vector<Route> routes;
    std::vector<std::vector<int>> per_od;  // route indices per OD pair

    RouteSet() = default;
    explicit RouteSet(std::size_t od_count) : per_od(od_count) {}

    std::size_t size() const { return routes.size(); }
    std::size_t od_count() const { return per_od.size(); }

    bool contains(const Route& r) const {
        return index_.count({r.od_index, r.links}) != 0;
    }

    /// Appends r as the last incidence column unless its canonical form is
    /// already present. Returns true when the route is new.
    bool add_route(const Network& net, const Route& r) {
        validate(net, r);
        if (contains(r)) return false;
        int k = static_cast<int>(routes.size());
        index_[{r.od_index, r.links}] = k;
        routes.push_back(r);
        per_od[r.od_index].push_back(k);
        return true;
    }

    /// Checks p is a per-OD probability vector: non-negative, each OD block
    /// summing to one within 1e-12.
    bool feasible(const std::vector<double>& p, double tol = 1e-12) const {
        if (p.size() != routes.size()) return false;
        for (double v : p)
            if (!(v >= 0.0)) return false;
        for (const auto& ks : per_od) {
            double s = 0.0;
            for (int k : ks) s += p[k];
            if (std::abs(s - 1.0) > tol) return false;
        }
        return true;
    }

private:
    std::map<std::pair<int, std::vector<int>>, int> index_;

    static void validate(const Network& net, const Route& r) {
        if (r.od_index < 0) throw std::invalid_argument("route without OD index");
        if (r.links.empty()) throw std::invalid_argument("empty route");
        const ODPair& od = net.od_pairs[r.od_index];
        std::vector<bool> seen(net.node_count, false);
        int at = od.origin;
        seen[at] = true;
        for (int a : r.links) {
            if (a < 0 || a >= static_cast<int>(net.links.size()))
                throw std::invalid_argument("route references unknown link");
            const Link& l = net.links[a];
            if (l.tail != at) throw std::invalid_argument("route links not contiguous");
            at = l.head;
            if (seen[at]) throw std::invalid_argument("route revisits a node");
            seen[at] = true;
        }
        if (at != od.destination) throw std::invalid_argument("route does not end at destination");
    }
};

/// Per-day state of the dynamical process: choice probabilities p, route
/// valuations s, link valuations v.
struct StrategyState {
    std::vector<double> p;
    std::vector<double> s;
    std::vector<double> v;
    int day = 0;
};

/// Route costs c = lambda^T u.
inline std::vector<double> route_cost(const RouteSet& rs, const std::vector<double>& u) {
    std::vector<double> c(rs.size(), 0.0);
    for (std::size_t k = 0; k < rs.size(); ++k)
        for (int a : rs.routes[k].links) c[k] += u[a];
    return c;
}

/// Link flows x = lambda diag(q) p with q_k the demand of route k's OD pair.
inline LinkFlow aggregate_flows(const Network& net, const RouteSet& rs,
                                const std::vector<double>& p) {
    if (!rs.feasible(p)) throw std::invalid_argument("p violates the per-OD simplex invariant");
    LinkFlow x(net.links.size(), 0.0);
    for (std::size_t k = 0; k < rs.size(); ++k) {
        double f = net.od_pairs[rs.routes[k].od_index].demand * p[k];
        if (f == 0.0) continue;
        for (int a : rs.routes[k].links) x[a] += f;
    }
    return x;
}

namespace detail {

// One-to-all label-setting search with deterministic tie-breaking: among
// equal-cost paths the lexicographically smallest link-id sequence wins.
struct ShortestPathTree {
    std::vector<double> dist;
    std::vector<std::vector<int>> path;  // link-id sequence from origin
};

inline ShortestPathTree shortest_path_tree(const Network& net, const std::vector<double>& u,
                                           int origin) {
    for (double w : u)
        if (!(w >= 0.0)) throw std::invalid_argument("negative or non-finite link cost");
    const double inf = std::numeric_limits<double>::infinity();
    ShortestPathTree t;
    t.dist.assign(net.node_count, inf);
    t.path.assign(net.node_count, {});
    t.dist[origin] = 0.0;

    using Item = std::pair<double, int>;  // (dist, node), heap tie-break by node id
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
    pq.push({0.0, origin});
    while (!pq.empty()) {
        auto [d, n] = pq.top();
        pq.pop();
        if (d > t.dist[n]) continue;
        for (int a : net.out_links[n]) {
            const Link& l = net.links[a];
            double nd = t.dist[n] + u[a];
            bool better = nd < t.dist[l.head];
            if (!better && nd == t.dist[l.head]) {
                // equal cost: compare candidate link sequence lexicographically
                const auto& cur = t.path[l.head];
                const auto& base = t.path[n];
                std::size_t i = 0;
                for (; i < base.size() && i < cur.size(); ++i) {
                    if (base[i] != cur[i]) break;
                }
                if (i < base.size() && i < cur.size())
                    better = base[i] < cur[i];
                else if (i == base.size())  // candidate continues with link a
                    better = i < cur.size() && a < cur[i];
            }
            if (better) {
                t.dist[l.head] = nd;
                t.path[l.head] = t.path[n];
                t.path[l.head].push_back(a);
                pq.push({nd, l.head});
            }
        }
    }
    return t;
}

}  // namespace detail

/// Minimum-cost simple path for one OD pair under link costs u.
/// Throws when the destination is unreachable.
inline Route shortest_path(const Network& net, const std::vector<double>& u, int od_index) {
    const ODPair& od = net.od_pairs[od_index];
    auto tree = detail::shortest_path_tree(net, u, od.origin);
    if (!std::isfinite(tree.dist[od.destination]))
        throw std::runtime_error("destination unreachable");
    return Route{od_index, tree.path[od.destination]};
}

/// All simple directed paths for one OD pair, depth-first by link id.
/// Throws when the count would exceed cap (enumeration is an oracle tool;
/// UE route counts can be astronomically large on real networks).
inline std::vector<Route> enumerate_acyclic_routes(const Network& net, int od_index,
                                                   std::size_t cap = 1000000) {
    if (cap == 0) throw std::invalid_argument("cap must be positive");
    const ODPair& od = net.od_pairs[od_index];
    std::vector<Route> out;
    std::vector<int> stack;
    std::vector<bool> visited(net.node_count, false);

    auto dfs = [&](auto&& self, int n) -> void {
        if (n == od.destination) {
            if (out.size() >= cap) throw std::runtime_error("route enumeration exceeds cap");
            out.push_back(Route{od_index, stack});
            return;
        }
        visited[n] = true;
        for (int a : net.out_links[n]) {
            int h = net.links[a].head;
            if (visited[h]) continue;
            stack.push_back(a);
            self(self, h);
            stack.pop_back();
        }
        visited[n] = false;
    };
    dfs(dfs, od.origin);
    return out;
}

/// Minimum cost from every node to dest under link costs u (reverse Dijkstra).
inline std::vector<double> distance_to(const Network& net, const std::vector<double>& u,
                                       int dest) {
    std::vector<std::vector<std::pair<int, int>>> in_links(net.node_count);  // (link, tail)
    for (std::size_t a = 0; a < net.links.size(); ++a)
        in_links[net.links[a].head].push_back({static_cast<int>(a), net.links[a].tail});
    std::vector<double> dist(net.node_count, std::numeric_limits<double>::infinity());
    dist[dest] = 0.0;
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
    pq.push({0.0, dest});
    while (!pq.empty()) {
        auto [d, n] = pq.top();
        pq.pop();
        if (d > dist[n]) continue;
        for (auto [a, t] : in_links[n]) {
            double nd = d + u[a];
            if (nd < dist[t]) {
                dist[t] = nd;
                pq.push({nd, t});
            }
        }
    }
    return dist;
}

/// Every simple route whose cost is within (1 + rel_tol) of the OD's shortest
/// cost under u. Bounded depth-first search pruned by the reverse-Dijkstra
/// lower bound, so near-tie sets are cheap even where full enumeration is not.
inline std::vector<Route> enumerate_near_shortest(const Network& net,
                                                  const std::vector<double>& u, int od_index,
                                                  double rel_tol, std::size_t cap = 1000000) {
    if (!(rel_tol >= 0.0)) throw std::invalid_argument("rel_tol must be non-negative");
    const ODPair& od = net.od_pairs[od_index];
    std::vector<double> h = distance_to(net, u, od.destination);
    if (!std::isfinite(h[od.origin])) throw std::runtime_error("destination unreachable");
    const double bound = h[od.origin] * (1.0 + rel_tol);
    std::vector<Route> out;
    std::vector<int> stack;
    std::vector<bool> visited(net.node_count, false);
    auto dfs = [&](auto&& self, int n, double g) -> void {
        if (n == od.destination) {
            if (out.size() >= cap) throw std::runtime_error("route enumeration exceeds cap");
            out.push_back(Route{od_index, stack});
            return;
        }
        visited[n] = true;
        for (int a : net.out_links[n]) {
            int head = net.links[a].head;
            if (visited[head]) continue;
            double ng = g + u[a];
            if (ng + h[head] > bound) continue;
            stack.push_back(a);
            self(self, head, ng);
            stack.pop_back();
        }
        visited[n] = false;
    };
    dfs(dfs, od.origin, 0.0);
    return out;
}

/// Route set holding every acyclic route of every OD pair (full-route-set mode).
inline RouteSet full_route_set(const Network& net, std::size_t cap = 1000000) {
    RouteSet rs(net.od_pairs.size());
    for (std::size_t w = 0; w < net.od_pairs.size(); ++w)
        for (const Route& r : enumerate_acyclic_routes(net, static_cast<int>(w), cap))
            rs.add_route(net, r);
    return rs;
}

/// The 3N4L routes in their conventional order (route 1 = links {0,2},
/// route 2 = {1,3}, route 3 = {0,3}, route 4 = {1,2}), which the lambda
/// extractor and the published UE family assume.
inline RouteSet builtin_route_set(const Network& net, const std::string& name) {
    RouteSet rs(net.od_pairs.size());
    if (name == "3n4l") {
        rs.add_route(net, {0, {0, 2}});
        rs.add_route(net, {0, {1, 3}});
        rs.add_route(net, {0, {0, 3}});
        rs.add_route(net, {0, {1, 2}});
    } else if (name == "counterexample") {
        for (int a = 0; a < 3; ++a) rs.add_route(net, {0, {a}});
    } else {
        throw std::invalid_argument("unknown builtin route set: " + name);
    }
    return rs;
}

/// Plain-text route list: one route per line, "od_index: l0,l1,...".
inline void write_route_list(const RouteSet& rs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const Route& r : rs.routes) {
        out << r.od_index << ":";
        for (std::size_t i = 0; i < r.links.size(); ++i) out << (i ? "," : " ") << r.links[i];
        out << "\n";
    }
}

inline RouteSet read_route_list(const Network& net, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("file not found: " + path);
    RouteSet rs(net.od_pairs.size());
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto colon = line.find(':');
        if (colon == std::string::npos) throw std::runtime_error("malformed route line: " + line);
        Route r;
        r.od_index = std::stoi(line.substr(0, colon));
        std::string rest = line.substr(colon + 1);
        for (char& ch : rest)
            if (ch == ',') ch = ' ';
        std::istringstream ls(rest);
        int a;
        while (ls >> a) r.links.push_back(a);
        rs.add_route(net, r);
    }
    return rs;
}

}  // namespace meue

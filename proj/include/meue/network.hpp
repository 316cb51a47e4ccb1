#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace meue {

/// Separable link cost function. Polynomial is h + w * x^m; BPR is
/// fft * (1 + b * (x / capacity)^power); constant ignores flow.
struct CostSpec {
    enum class Kind { polynomial, bpr, constant };
    Kind kind = Kind::constant;

    // polynomial
    double h = 0.0;
    double w = 0.0;
    int m = 1;

    // bpr
    double free_flow_time = 0.0;
    double capacity = 0.0;
    double b = 0.0;
    double power = 0.0;

    // constant
    double value = 0.0;

    static CostSpec polynomial(double h, double w, int m) {
        CostSpec s;
        s.kind = Kind::polynomial;
        s.h = h;
        s.w = w;
        s.m = m;
        if (h < 0.0 || w < 0.0 || m < 0) throw std::invalid_argument("polynomial cost: negative coefficient");
        return s;
    }

    static CostSpec bpr_spec(double fft, double capacity, double b, double power) {
        CostSpec s;
        s.kind = Kind::bpr;
        s.free_flow_time = fft;
        s.capacity = capacity;
        s.b = b;
        s.power = power;
        if (fft < 0.0 || b < 0.0 || power < 0.0) throw std::invalid_argument("bpr cost: negative coefficient");
        if (capacity <= 0.0) throw std::invalid_argument("bpr cost: capacity must be positive");
        return s;
    }

    static CostSpec constant(double value) {
        CostSpec s;
        s.kind = Kind::constant;
        s.value = value;
        if (value < 0.0) throw std::invalid_argument("constant cost: negative value");
        return s;
    }

    double eval(double x) const {
        switch (kind) {
            case Kind::polynomial:
                return h + w * std::pow(x, static_cast<double>(m));
            case Kind::bpr:
                return free_flow_time * (1.0 + b * std::pow(x / capacity, power));
            case Kind::constant:
                return value;
        }
        return 0.0;  // unreachable
    }
};

struct Link {
    int id = -1;
    int tail = -1;
    int head = -1;
    CostSpec cost;
};

struct ODPair {
    int origin = -1;
    int destination = -1;
    double demand = 0.0;
};

/// Immutable road network: node set 0..node_count-1, dense link ids, OD table.
struct Network {
    int node_count = 0;
    std::vector<Link> links;
    std::vector<ODPair> od_pairs;

    // outgoing link ids per node, sorted by link id
    std::vector<std::vector<int>> out_links;

    void finalize() {
        out_links.assign(node_count, {});
        for (const Link& l : links) {
            if (l.tail < 0 || l.tail >= node_count || l.head < 0 || l.head >= node_count)
                throw std::invalid_argument("link endpoint outside node range");
            if (l.tail == l.head) throw std::invalid_argument("self-loop link");
            out_links[l.tail].push_back(l.id);
        }
        for (const ODPair& od : od_pairs) {
            if (od.origin < 0 || od.origin >= node_count || od.destination < 0 ||
                od.destination >= node_count)
                throw std::invalid_argument("unknown node in OD pair");
            if (od.origin == od.destination) throw std::invalid_argument("OD origin equals destination");
            if (od.demand < 0.0) throw std::invalid_argument("negative OD demand");
        }
    }

    std::vector<double> demands() const {
        std::vector<double> d(od_pairs.size());
        for (std::size_t i = 0; i < od_pairs.size(); ++i) d[i] = od_pairs[i].demand;
        return d;
    }
};

using LinkFlow = std::vector<double>;

/// Evaluate all link cost functions at flow x. Pure; throws on negative flow.
inline std::vector<double> link_costs(const Network& net, const LinkFlow& x) {
    if (x.size() != net.links.size()) throw std::invalid_argument("link flow length mismatch");
    std::vector<double> u(x.size());
    for (std::size_t a = 0; a < x.size(); ++a) {
        if (x[a] < 0.0) throw std::invalid_argument("negative flow entry");
        u[a] = net.links[a].cost.eval(x[a]);
    }
    return u;
}

/// Built-in test networks.
///   "3n4l"           three nodes, four links, one OD pair with demand 10
///   "counterexample" three parallel constant-cost links, demand 1
inline Network builtin_network(const std::string& name) {
    Network net;
    if (name == "3n4l") {
        net.node_count = 3;
        const double h[4] = {4, 20, 1, 30};
        const double w[4] = {1, 5, 30, 1};
        const int tail[4] = {0, 0, 1, 1};
        const int head[4] = {1, 1, 2, 2};
        for (int a = 0; a < 4; ++a)
            net.links.push_back({a, tail[a], head[a], CostSpec::polynomial(h[a], w[a], 4)});
        net.od_pairs.push_back({0, 2, 10.0});
    } else if (name == "counterexample") {
        net.node_count = 2;
        const double c[3] = {1, 1, 2};
        for (int a = 0; a < 3; ++a) net.links.push_back({a, 0, 1, CostSpec::constant(c[a])});
        net.od_pairs.push_back({0, 1, 1.0});
    } else {
        throw std::invalid_argument("unknown builtin network: " + name);
    }
    net.finalize();
    return net;
}

namespace detail {

inline std::string read_file_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("file not found: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// strips TNTP comment markers (~ to end of line) and metadata lines
inline double parse_number(const std::string& tok, const std::string& context) {
    try {
        std::size_t pos = 0;
        double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (...) {
        throw std::runtime_error("non-numeric field '" + tok + "' in " + context);
    }
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

/// Load a network and trips table in TNTP conventions. Node ids are 1-based
/// in the files and converted to 0-based here. Zero-demand OD pairs are
/// dropped; repeated OD entries are summed; toll and link_type are ignored.
inline Network load_tntp(const std::string& net_path, const std::string& trips_path) {
    Network net;

    // ---- network file ----
    {
        std::string text = detail::read_file_or_throw(net_path);
        std::istringstream in(text);
        std::string line;
        int declared_links = -1;
        bool in_data = false;
        while (std::getline(in, line)) {
            if (auto tilde = line.find('~'); tilde != std::string::npos) line.erase(tilde);
            std::istringstream ls(line);
            std::string first;
            if (!(ls >> first)) continue;
            if (!in_data) {
                if (first.rfind("<NUMBER", 0) == 0) {
                    std::string what;
                    ls >> what;  // "OF"
                    ls >> what;  // "NODES>" / "LINKS>" / "ZONES>"
                    std::string val;
                    ls >> val;
                    if (what.rfind("NODES", 0) == 0)
                        net.node_count = static_cast<int>(detail::parse_number(val, "node count"));
                    else if (what.rfind("LINKS", 0) == 0)
                        declared_links = static_cast<int>(detail::parse_number(val, "link count"));
                    continue;
                }
                if (first.rfind("<END", 0) == 0) {
                    if (net.node_count <= 0) throw std::runtime_error("malformed header: missing node count");
                    in_data = true;
                    continue;
                }
                if (first.front() == '<') continue;  // other metadata
                throw std::runtime_error("malformed header line: " + line);
            }
            // data row: init term capacity length fft b power speed toll type ;
            std::vector<std::string> toks{first};
            std::string tok;
            while (ls >> tok) toks.push_back(tok);
            if (!toks.empty() && toks.back() == ";") toks.pop_back();
            if (!toks.empty() && toks.back().back() == ';') toks.back().pop_back();
            if (toks.size() < 7) throw std::runtime_error("malformed link row: " + line);
            const std::string ctx = "link row";
            int init = static_cast<int>(detail::parse_number(toks[0], ctx));
            int term = static_cast<int>(detail::parse_number(toks[1], ctx));
            double capacity = detail::parse_number(toks[2], ctx);
            double fft = detail::parse_number(toks[4], ctx);
            double b = detail::parse_number(toks[5], ctx);
            double power = detail::parse_number(toks[6], ctx);
            if (init < 1 || init > net.node_count || term < 1 || term > net.node_count)
                throw std::runtime_error("unknown node in link row: " + line);
            int id = static_cast<int>(net.links.size());
            net.links.push_back({id, init - 1, term - 1, CostSpec::bpr_spec(fft, capacity, b, power)});
        }
        if (declared_links >= 0 && declared_links != static_cast<int>(net.links.size()))
            throw std::runtime_error("link count mismatch with header");
    }

    // ---- trips file ----
    {
        std::string text = detail::read_file_or_throw(trips_path);
        std::istringstream in(text);
        std::string line;
        int origin = -1;
        bool in_data = false;
        // dense accumulation keyed by (origin, destination)
        std::vector<std::vector<double>> demand(net.node_count,
                                                std::vector<double>(net.node_count, 0.0));
        while (std::getline(in, line)) {
            if (auto tilde = line.find('~'); tilde != std::string::npos) line.erase(tilde);
            std::istringstream ls(line);
            std::string first;
            if (!(ls >> first)) continue;
            if (first.front() == '<') {
                if (first.rfind("<END", 0) == 0) in_data = true;
                continue;
            }
            if (first == "Origin") {
                std::string val;
                ls >> val;
                origin = static_cast<int>(detail::parse_number(val, "origin header"));
                if (origin < 1 || origin > net.node_count)
                    throw std::runtime_error("unknown node in trips file: origin " + val);
                continue;
            }
            if (!in_data && origin < 0) continue;
            if (origin < 0) throw std::runtime_error("trips entry before any Origin header");
            // entries "dest : demand;" possibly several per line
            std::string entry_text = first;
            {
                std::string rest;
                std::getline(ls, rest);
                entry_text += rest;
            }
            std::istringstream es(entry_text);
            std::string dtok, colon, vtok;
            while (es >> dtok) {
                if (!(es >> colon) || colon != ":" || !(es >> vtok))
                    throw std::runtime_error("malformed trips entry: " + entry_text);
                if (!vtok.empty() && vtok.back() == ';') vtok.pop_back();
                int dest = static_cast<int>(detail::parse_number(dtok, "trips entry"));
                double d = detail::parse_number(vtok, "trips entry");
                if (dest < 1 || dest > net.node_count)
                    throw std::runtime_error("unknown node in trips file: destination " + dtok);
                if (dest != origin) demand[origin - 1][dest - 1] += d;
            }
        }
        for (int o = 0; o < net.node_count; ++o)
            for (int d = 0; d < net.node_count; ++d)
                if (demand[o][d] > 0.0) net.od_pairs.push_back({o, d, demand[o][d]});
    }

    net.finalize();
    return net;
}

/// Write a network back out in the TNTP conventions read by load_tntp.
/// Doubles are printed with 17 significant digits so a reload reproduces the
/// link and demand tables bit for bit.
inline void write_tntp(const Network& net, const std::string& net_path,
                       const std::string& trips_path) {
    {
        std::ofstream out(net_path);
        if (!out) throw std::runtime_error("cannot open for writing: " + net_path);
        out << "<NUMBER OF NODES> " << net.node_count << "\n";
        out << "<NUMBER OF LINKS> " << net.links.size() << "\n";
        out << "<FIRST THRU NODE> 1\n<END OF METADATA>\n";
        for (const Link& l : net.links) {
            if (l.cost.kind != CostSpec::Kind::bpr)
                throw std::runtime_error("write_tntp supports BPR links only");
            out << (l.tail + 1) << "\t" << (l.head + 1) << "\t"
                << detail::fmt_double(l.cost.capacity) << "\t0\t"
                << detail::fmt_double(l.cost.free_flow_time) << "\t"
                << detail::fmt_double(l.cost.b) << "\t" << detail::fmt_double(l.cost.power)
                << "\t0\t0\t1\t;\n";
        }
    }
    {
        std::ofstream out(trips_path);
        if (!out) throw std::runtime_error("cannot open for writing: " + trips_path);
        double total = 0.0;
        for (const ODPair& od : net.od_pairs) total += od.demand;
        out << "<TOTAL OD FLOW> " << detail::fmt_double(total) << "\n<END OF METADATA>\n";
        int last_origin = -1;
        for (const ODPair& od : net.od_pairs) {
            if (od.origin != last_origin) {
                out << "Origin " << (od.origin + 1) << "\n";
                last_origin = od.origin;
            }
            out << "    " << (od.destination + 1) << " : " << detail::fmt_double(od.demand)
                << ";\n";
        }
    }
}

}  // namespace meue

#pragma once

#include <boost/rational.hpp>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "meue/network.hpp"
#include "meue/routing.hpp"

namespace meue {

using Rational = boost::rational<long long>;

/// Negative entropy phi(p) = sum_k d_w(k) * p_k * log(p_k), with 0 log 0 = 0.
/// Traces and reports quote -phi as "entropy".
inline double entropy(const RouteSet& rs, const std::vector<double>& p,
                      const std::vector<double>& d) {
    double phi = 0.0;
    for (std::size_t k = 0; k < rs.size(); ++k)
        if (p[k] > 0.0) phi += d[rs.routes[k].od_index] * p[k] * std::log(p[k]);
    return phi;
}

/// Demand-weighted KL divergence D(p, p0). Returns +infinity when p puts
/// mass where p0 has none.
inline double kl_divergence(const RouteSet& rs, const std::vector<double>& p,
                            const std::vector<double>& p0, const std::vector<double>& d) {
    double D = 0.0;
    for (std::size_t k = 0; k < rs.size(); ++k) {
        if (p[k] <= 0.0) continue;
        if (p0[k] <= 0.0) return std::numeric_limits<double>::infinity();
        D += d[rs.routes[k].od_index] * p[k] * (std::log(p[k]) - std::log(p0[k]));
    }
    return D;
}

/// Routes carrying more than tau of their OD's travelers.
inline int used_route_count(const std::vector<double>& p, double tau) {
    int n = 0;
    for (double v : p)
        if (v > tau) ++n;
    return n;
}

/// Basis of ker(sigma) cap ker(lambda), computed exactly so that rank
/// decisions never depend on floating-point thresholds.
struct KernelBasis {
    std::vector<std::vector<Rational>> vectors;  // each of length |routes|

    std::size_t size() const { return vectors.size(); }

    std::vector<std::vector<double>> as_double() const {
        std::vector<std::vector<double>> out;
        out.reserve(vectors.size());
        for (const auto& v : vectors) {
            std::vector<double> dv(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) dv[i] = boost::rational_cast<double>(v[i]);
            out.push_back(std::move(dv));
        }
        return out;
    }
};

/// Null space of the stacked integer incidence matrix [sigma; lambda] by
/// rational Gaussian elimination.
inline KernelBasis kernel_basis(const Network& net, const RouteSet& rs) {
    const std::size_t cols = rs.size();
    std::vector<std::vector<Rational>> m;  // row-major, only nonzero rows kept

    // sigma rows
    for (std::size_t w = 0; w < rs.od_count(); ++w) {
        std::vector<Rational> row(cols, Rational(0));
        for (int k : rs.per_od[w]) row[k] = Rational(1);
        m.push_back(std::move(row));
    }
    // lambda rows
    for (std::size_t a = 0; a < net.links.size(); ++a) {
        std::vector<Rational> row(cols, Rational(0));
        bool any = false;
        for (std::size_t k = 0; k < cols; ++k)
            for (int l : rs.routes[k].links)
                if (l == static_cast<int>(a)) {
                    row[k] = Rational(1);
                    any = true;
                }
        if (any) m.push_back(std::move(row));
    }

    // reduced row echelon form
    std::vector<int> pivot_col;
    std::size_t r = 0;
    for (std::size_t c = 0; c < cols && r < m.size(); ++c) {
        std::size_t sel = r;
        while (sel < m.size() && m[sel][c] == Rational(0)) ++sel;
        if (sel == m.size()) continue;
        std::swap(m[r], m[sel]);
        Rational inv = Rational(1) / m[r][c];
        for (std::size_t j = c; j < cols; ++j) m[r][j] *= inv;
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (i == r || m[i][c] == Rational(0)) continue;
            Rational f = m[i][c];
            for (std::size_t j = c; j < cols; ++j) m[i][j] -= f * m[r][j];
        }
        pivot_col.push_back(static_cast<int>(c));
        ++r;
    }

    KernelBasis basis;
    std::vector<bool> is_pivot(cols, false);
    for (int c : pivot_col) is_pivot[c] = true;
    for (std::size_t f = 0; f < cols; ++f) {
        if (is_pivot[f]) continue;
        std::vector<Rational> e(cols, Rational(0));
        e[f] = Rational(1);
        for (std::size_t i = 0; i < pivot_col.size(); ++i) e[pivot_col[i]] = -m[i][f];
        basis.vectors.push_back(std::move(e));
    }
    return basis;
}

/// Proportionality diagnostics against a kernel basis. Zero probabilities are
/// clamped at 1e-300 before taking logs and the clamping is flagged.
struct ProportionalityReport {
    std::vector<double> residuals;       // <e_m, log p>
    std::vector<double> culo_residuals;  // <e_m, log p> + r <e_m, s0>
    double max_abs = 0.0;                // max |residuals|
    double max_abs_culo = 0.0;
    bool clamped = false;
};

inline ProportionalityReport proportionality_residuals(const std::vector<double>& p,
                                                       const KernelBasis& basis, double r,
                                                       const std::vector<double>& s0) {
    ProportionalityReport rep;
    std::vector<double> logp(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
        double v = p[k];
        if (v < 1e-300) {
            v = 1e-300;
            rep.clamped = true;
        }
        logp[k] = std::log(v);
    }
    for (const auto& e : basis.as_double()) {
        double res = 0.0, res0 = 0.0;
        for (std::size_t k = 0; k < p.size(); ++k) {
            if (e[k] == 0.0) continue;
            res += e[k] * logp[k];
            if (!s0.empty()) res0 += e[k] * s0[k];
        }
        rep.residuals.push_back(res);
        rep.culo_residuals.push_back(res + r * res0);
        rep.max_abs = std::max(rep.max_abs, std::abs(res));
        rep.max_abs_culo = std::max(rep.max_abs_culo, std::abs(res + r * res0));
    }
    return rep;
}

/// lambda coordinate of a UE strategy on the 3N4L network, for the family
/// p = [0.3-l, 0.4-l, 0.3+l, l].
inline double lambda_3n4l(const std::vector<double>& p) {
    if (p.size() != 4) throw std::invalid_argument("lambda_3n4l expects a 4-vector");
    return ((0.3 - p[0]) + (0.4 - p[1]) + (p[2] - 0.3) + p[3]) / 4.0;
}

struct OracleResult {
    std::vector<double> p_star;
    double objective = 0.0;              // KL divergence D(p_star, p0)
    std::vector<double> dual_beta;       // link multipliers (empty in parametric mode)
    std::vector<double> dual_alpha;      // per-OD multipliers
    double residual_norm = 0.0;
    bool converged = true;
};

enum class OracleMode { parametric_3n4l, dual_ascent };

namespace detail {

inline OracleResult kl_oracle_parametric_3n4l(const RouteSet& rs, const std::vector<double>& p0,
                                              const std::vector<double>& d) {
    auto family = [](double l) {
        return std::vector<double>{0.3 - l, 0.4 - l, 0.3 + l, l};
    };
    auto obj = [&](double l) { return kl_divergence(rs, family(l), p0, d); };
    // golden-section search on [0, 0.3]; D is strictly convex in lambda
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = 0.0, b = 0.3;
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = obj(x1), f2 = obj(x2);
    while (b - a > 1e-12) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = obj(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = obj(x2);
        }
    }
    double l = (a + b) / 2.0;
    OracleResult res;
    res.p_star = family(l);
    res.objective = obj(l);
    res.residual_norm = b - a;
    return res;
}

inline OracleResult kl_oracle_dual_ascent(const Network& net, const RouteSet& rs,
                                          const std::vector<double>& p0, const LinkFlow& x_star) {
    const std::vector<double> d = net.demands();
    const std::size_t A = net.links.size();

    std::vector<double> beta(A, 0.0);
    std::vector<double> p(rs.size()), logz(rs.od_count());

    auto eval = [&](const std::vector<double>& bb) {
        // p(beta) proportional to p0 .* exp(-lambda^T beta), renormalized per OD
        for (std::size_t w = 0; w < rs.od_count(); ++w) {
            double lo = std::numeric_limits<double>::infinity();
            for (int k : rs.per_od[w]) {
                double sig = 0.0;
                for (int a : rs.routes[k].links) sig += bb[a];
                p[k] = sig;  // stash exponent
                lo = std::min(lo, sig);
            }
            double z = 0.0;
            for (int k : rs.per_od[w]) {
                p[k] = p0[k] * std::exp(-(p[k] - lo));
                z += p[k];
            }
            for (int k : rs.per_od[w]) p[k] /= z;
            logz[w] = std::log(z) - lo;
        }
        // dual objective -sum_w d_w log Z_w - <beta, x*>
        double g = 0.0;
        for (std::size_t w = 0; w < rs.od_count(); ++w) g -= d[w] * logz[w];
        for (std::size_t a = 0; a < A; ++a) g -= bb[a] * x_star[a];
        return g;
    };

    double max_d = 0.0;
    std::size_t max_len = 1;
    for (double dw : d) max_d = std::max(max_d, dw);
    for (const Route& r : rs.routes) max_len = std::max(max_len, r.links.size());
    double step = 1.0 / (max_d * static_cast<double>(max_len));

    double g = eval(beta);
    double best_res = std::numeric_limits<double>::infinity();
    std::vector<double> best_beta = beta, best_p = p;
    long long since_improve = 0;
    OracleResult res;

    for (long long it = 0;; ++it) {
        LinkFlow x = aggregate_flows(net, rs, p);
        double rnorm = 0.0;
        for (std::size_t a = 0; a < A; ++a) rnorm = std::max(rnorm, std::abs(x[a] - x_star[a]));
        if (rnorm < best_res) {
            best_res = rnorm;
            best_beta = beta;
            best_p = p;
            since_improve = 0;
        } else if (++since_improve > 10000) {
            res.converged = false;
            break;
        }
        if (rnorm <= 1e-9) break;

        std::vector<double> cand = beta;
        for (std::size_t a = 0; a < A; ++a) cand[a] += step * (x[a] - x_star[a]);
        double gc = eval(cand);
        // tolerance keeps float rounding near the optimum from being read as
        // an overshoot, which would halve the step into oblivion
        if (gc < g - 1e-14 * (1.0 + std::abs(g))) {
            step *= 0.5;  // overshoot, retreat
            g = eval(beta);
            continue;
        }
        beta = cand;
        g = gc;
    }

    res.p_star = best_p;
    res.residual_norm = best_res;
    res.objective = kl_divergence(rs, best_p, p0, d);
    // report multipliers in the stationarity convention
    // log p* - log p0 = sigma^T alpha + lambda^T beta
    eval(best_beta);
    res.dual_beta.assign(A, 0.0);
    for (std::size_t a = 0; a < A; ++a) res.dual_beta[a] = -best_beta[a];
    res.dual_alpha.assign(rs.od_count(), 0.0);
    for (std::size_t w = 0; w < rs.od_count(); ++w) res.dual_alpha[w] = -logz[w];
    return res;
}

}  // namespace detail

/// KL projection of p0 onto the UE set.
///   parametric_3n4l: exact line search over the known one-parameter UE family
///                    (builtin 3N4L with its conventional route order only).
///   dual_ascent:     gradient ascent on the equality-constrained dual; needs
///                    the unique UE link flow x_star.
inline OracleResult kl_projection_oracle(const Network& net, const RouteSet& rs,
                                         const std::vector<double>& p0, OracleMode mode,
                                         const LinkFlow* x_star = nullptr) {
    if (!rs.feasible(p0)) throw std::invalid_argument("p0 violates the simplex invariant");
    if (mode == OracleMode::parametric_3n4l) {
        if (rs.size() != 4) throw std::invalid_argument("parametric mode needs the 3N4L route set");
        return detail::kl_oracle_parametric_3n4l(rs, p0, net.demands());
    }
    if (x_star == nullptr) throw std::invalid_argument("dual_ascent needs the UE link flow");
    return detail::kl_oracle_dual_ascent(net, rs, p0, *x_star);
}

/// Exact multinomial state count for integer traveler quanta: the number of
/// distinct traveler-to-route assignments realizing p, in logs, next to the
/// scaled negative entropy it approximates.
struct CountResult {
    double log_count = 0.0;
    double neg_phi_scaled = 0.0;
};

inline CountResult entropy_count_oracle(const RouteSet& rs, const std::vector<double>& p,
                                        const std::vector<double>& d, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("tau must be positive");
    CountResult res;
    for (std::size_t w = 0; w < rs.od_count(); ++w) {
        long long n = 0;
        double acc = 0.0;
        for (int k : rs.per_od[w]) {
            double raw = d[w] * p[k] / tau;
            long long mk = std::llround(raw);
            if (std::abs(raw - static_cast<double>(mk)) > 1e-6)
                throw std::invalid_argument("non-integer traveler count");
            n += mk;
            acc -= std::lgamma(static_cast<double>(mk) + 1.0);
        }
        res.log_count += std::lgamma(static_cast<double>(n) + 1.0) + acc;
    }
    res.neg_phi_scaled = -entropy(rs, p, d) / tau;
    return res;
}

}  // namespace meue

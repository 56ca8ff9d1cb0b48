#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>

#include "aircal/tensor.hpp"

namespace aircal {

/// Real-valued magnitude responses shared across all target positions.
/// g_tx is L x N (per transmitter), g_rx is L x M (per receiver); entries
/// live in [epsilon, 1], column 0 of g_tx is pinned to all-ones and every
/// other column peaks at exactly 1 after canonicalization.
struct SharedParams {
    RealMatrix g_tx;
    RealMatrix g_rx;

    std::size_t num_tx() const { return g_tx.cols(); }
    std::size_t num_rx() const { return g_rx.cols(); }
    std::size_t num_bins() const { return g_tx.rows(); }

    static SharedParams all_ones(std::size_t l, std::size_t n, std::size_t m) {
        SharedParams s;
        s.g_tx = RealMatrix::constant(l, n, 1.0);
        s.g_rx = RealMatrix::constant(l, m, 1.0);
        return s;
    }

    void check_consistent() const {
        require(g_tx.rows() == g_rx.rows(), "SharedParams: g_tx/g_rx bin counts differ");
        require(g_tx.cols() >= 1 && g_rx.cols() >= 1, "SharedParams: empty response matrices");
    }
};

/// Per-position factors: steering vectors, unit-modulus phase response and
/// per-snapshot signal gains.
struct PositionParams {
    CVec a_tx; // N
    CVec a_rx; // M
    CVec c;    // L, |c[l]| = 1, c[0] = 1 after canonicalization
    CVec h;    // T

    static PositionParams all_ones(std::size_t n, std::size_t m, std::size_t l, std::size_t t) {
        return {ones(n), ones(m), ones(l), ones(t)};
    }
};

struct TargetPosition {
    std::size_t index = 0;
    double range_m = 0;
    double azimuth_rad = 0;
    double elevation_rad = 0;
};

struct ArrayGeometry {
    std::vector<std::array<double, 3>> tx_positions;
    std::vector<std::array<double, 3>> rx_positions;
    double f0 = 40e3;      // carrier [Hz]
    double fs = 195e3;     // sampling rate [Hz]
    double c_sound = 343;  // [m/s]
    std::size_t l_dft = 4096;

    void check() const {
        require(f0 > 0 && fs > 0 && c_sound > 0 && l_dft > 0, "ArrayGeometry: nonpositive parameter");
        require(!tx_positions.empty() && !rx_positions.empty(), "ArrayGeometry: empty array");
    }
    double delta_omega() const { return 2.0 * std::numbers::pi * fs / static_cast<double>(l_dft); }
};

/// Wave vector for direction (azimuth from z toward x, elevation from z
/// toward y): -2 pi f0 / c * [sin az cos el, sin el, cos az cos el].
inline std::array<double, 3> wavevector(const ArrayGeometry& geom, double azimuth_rad,
                                        double elevation_rad) {
    const double s = -2.0 * std::numbers::pi * geom.f0 / geom.c_sound;
    return {s * std::sin(azimuth_rad) * std::cos(elevation_rad), s * std::sin(elevation_rad),
            s * std::cos(azimuth_rad) * std::cos(elevation_rad)};
}

/// Noise-free measurement tensor: entry (n,m,l,t) =
/// a_tx[n] a_rx[m] g_tx[l,n] g_rx[l,m] c[l] h[t].
inline ComplexTensor4 synthesize(const SharedParams& shared, const PositionParams& pos) {
    shared.check_consistent();
    const std::size_t N = shared.num_tx();
    const std::size_t M = shared.num_rx();
    const std::size_t L = shared.num_bins();
    const std::size_t T = pos.h.size();
    require(pos.a_tx.size() == N && pos.a_rx.size() == M && pos.c.size() == L && T >= 1,
            "synthesize: dimension mismatch");
    ComplexTensor4 y(N, M, L, T);
    Complex* dst = y.data();
    std::size_t i = 0;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t m = 0; m < M; ++m) {
            const Complex ab = pos.a_tx[n] * pos.a_rx[m];
            for (std::size_t l = 0; l < L; ++l) {
                const Complex f = ab * (shared.g_tx(l, n) * shared.g_rx(l, m)) * pos.c[l];
                for (std::size_t t = 0; t < T; ++t) dst[i++] = f * pos.h[t];
            }
        }
    return y;
}

/// Frequency matrix B (L x NM); column n*M + m is c .* g_tx[:,n] .* g_rx[:,m].
inline ComplexMatrix frequency_matrix(const SharedParams& shared, const CVec& c) {
    shared.check_consistent();
    require(c.size() == shared.num_bins(), "frequency_matrix: phase response length mismatch");
    const std::size_t N = shared.num_tx();
    const std::size_t M = shared.num_rx();
    const std::size_t L = shared.num_bins();
    ComplexMatrix b(L, N * M);
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t m = 0; m < M; ++m)
                b(l, n * M + m) = c[l] * shared.g_tx(l, n) * shared.g_rx(l, m);
    return b;
}

struct AnalyticResponse {
    CVec a_tx; // N, unit modulus
    CVec a_rx; // M, unit modulus
    CVec b;    // L, unit modulus, linear phase in the bin index
};

/// Point-source array response from geometry alone.
inline AnalyticResponse analytic_response(const ArrayGeometry& geom, const TargetPosition& target,
                                          std::size_t num_bins) {
    geom.check();
    require(target.range_m > 0, "analytic_response: range must be positive");
    const auto k = wavevector(geom, target.azimuth_rad, target.elevation_rad);
    auto steer = [&](const std::array<double, 3>& r) {
        const double phase = -(k[0] * r[0] + k[1] * r[1] + k[2] * r[2]);
        return Complex{std::cos(phase), std::sin(phase)};
    };
    AnalyticResponse resp;
    resp.a_tx.reserve(geom.tx_positions.size());
    for (const auto& r : geom.tx_positions) resp.a_tx.push_back(steer(r));
    resp.a_rx.reserve(geom.rx_positions.size());
    for (const auto& r : geom.rx_positions) resp.a_rx.push_back(steer(r));
    resp.b.resize(num_bins);
    const double slope = 2.0 * target.range_m * geom.delta_omega() / geom.c_sound;
    for (std::size_t l = 0; l < num_bins; ++l) {
        const double phase = -slope * static_cast<double>(l);
        resp.b[l] = {std::cos(phase), std::sin(phase)};
    }
    return resp;
}

/// Element-wise correction of an analytic response with complex gains
/// estimated from a broadside reference measurement.
inline AnalyticResponse broadside_compensate(const AnalyticResponse& analytic, const CVec& gain_tx,
                                             const CVec& gain_rx, const CVec& gain_b) {
    require(gain_tx.size() == analytic.a_tx.size() && gain_rx.size() == analytic.a_rx.size() &&
                gain_b.size() == analytic.b.size(),
            "broadside_compensate: gain length mismatch");
    return {hadamard(gain_tx, analytic.a_tx), hadamard(gain_rx, analytic.a_rx),
            hadamard(gain_b, analytic.b)};
}

// --- rank-1 CPD via alternating least squares -------------------------------

struct Rank1Cpd {
    CVec a; // N
    CVec b; // M
    CVec c; // L
    CVec d; // T
    RVec f_rel_trace;
    std::size_t iterations = 0;
    bool degenerate = false;
};

namespace detail {

inline double rank1_f_rel(const ComplexTensor4& y, const Rank1Cpd& f, double y_norm_sq) {
    const auto [N, M, L, T] = y.dims();
    double err = 0;
    const Complex* src = y.data();
    std::size_t i = 0;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t m = 0; m < M; ++m) {
            const Complex ab = f.a[n] * f.b[m];
            for (std::size_t l = 0; l < L; ++l) {
                const Complex abc = ab * f.c[l];
                for (std::size_t t = 0; t < T; ++t) err += std::norm(src[i++] - abc * f.d[t]);
            }
        }
    return err / y_norm_sq;
}

} // namespace detail

/// Best rank-1 approximation a (o) b (o) c (o) d of a four-way tensor by
/// alternating least squares; the reconstruction error is nonincreasing over
/// sweeps. Stops when the normalized squared error decreases by at most tol
/// between sweeps. A zero input returns zero factors with the degenerate flag.
inline Rank1Cpd rank1_cpd(const ComplexTensor4& y, double tol = 1e-10, std::size_t max_iter = 500) {
    require(max_iter >= 1, "rank1_cpd: max_iter must be >= 1");
    const auto [N, M, L, T] = y.dims();
    Rank1Cpd f;
    f.a.assign(N, Complex{});
    f.b.assign(M, Complex{});
    f.c.assign(L, Complex{});
    f.d.assign(T, Complex{});
    const double y_norm_sq = frobenius_norm_sq(y);
    if (y_norm_sq == 0.0) {
        f.degenerate = true;
        return f;
    }

    f.a = ones(N);
    f.b = ones(M);
    f.c = ones(L);
    // Snapshot-wise mean of |Re| and |Im| as the initial gain estimate.
    for (std::size_t t = 0; t < T; ++t) {
        double sre = 0, sim = 0;
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t m = 0; m < M; ++m) {
                const auto sl = y.slice(n, m);
                for (std::size_t l = 0; l < L; ++l) {
                    sre += std::abs(sl[l * T + t].real());
                    sim += std::abs(sl[l * T + t].imag());
                }
            }
        const double scale = 1.0 / static_cast<double>(N * M * L);
        f.d[t] = {sre * scale, sim * scale};
    }

    const Complex* src = y.data();
    double prev = detail::rank1_f_rel(y, f, y_norm_sq);
    f.f_rel_trace.push_back(prev);
    for (std::size_t it = 0; it < max_iter; ++it) {
        // a[n] <- <Y[n,:,:,:], b o c o d> / (|b|^2 |c|^2 |d|^2), then b, c, d.
        const auto contract = [&](int which) -> bool {
            CVec acc;
            double den = 0;
            switch (which) {
                case 0: acc.assign(N, Complex{}); den = norm_sq(f.b) * norm_sq(f.c) * norm_sq(f.d); break;
                case 1: acc.assign(M, Complex{}); den = norm_sq(f.a) * norm_sq(f.c) * norm_sq(f.d); break;
                case 2: acc.assign(L, Complex{}); den = norm_sq(f.a) * norm_sq(f.b) * norm_sq(f.d); break;
                default: acc.assign(T, Complex{}); den = norm_sq(f.a) * norm_sq(f.b) * norm_sq(f.c); break;
            }
            if (!(den > 0.0) || !std::isfinite(den)) return false;
            std::size_t i = 0;
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t m = 0; m < M; ++m)
                    for (std::size_t l = 0; l < L; ++l)
                        for (std::size_t t = 0; t < T; ++t) {
                            const Complex v = src[i++];
                            switch (which) {
                                case 0: acc[n] += v * std::conj(f.b[m] * f.c[l] * f.d[t]); break;
                                case 1: acc[m] += v * std::conj(f.a[n] * f.c[l] * f.d[t]); break;
                                case 2: acc[l] += v * std::conj(f.a[n] * f.b[m] * f.d[t]); break;
                                default: acc[t] += v * std::conj(f.a[n] * f.b[m] * f.c[l]); break;
                            }
                        }
            const double inv = 1.0 / den;
            for (Complex& z : acc) z *= inv;
            switch (which) {
                case 0: f.a = std::move(acc); break;
                case 1: f.b = std::move(acc); break;
                case 2: f.c = std::move(acc); break;
                default: f.d = std::move(acc); break;
            }
            return true;
        };
        bool ok = true;
        for (int which = 0; which < 4 && ok; ++which) ok = contract(which);
        if (!ok) {
            f.degenerate = true;
            break;
        }
        const double cur = detail::rank1_f_rel(y, f, y_norm_sq);
        f.f_rel_trace.push_back(cur);
        f.iterations = it + 1;
        if (prev - cur <= tol) break;
        prev = cur;
    }
    return f;
}

/// Fixes the scaling of rank-1 factors so they can act as complex gain
/// corrections: steering factors get real-nonnegative first entries with
/// norms sqrt(N) and sqrt(M), the frequency factor starts at exactly 1, and
/// the snapshot factor absorbs the inverse scalings.
inline void canonicalize_rank1_gains(Rank1Cpd& f) {
    const double na = frobenius_norm(f.a);
    const double nb = frobenius_norm(f.b);
    if (na == 0.0 || nb == 0.0 || f.c.empty() || f.c[0] == Complex{}) {
        f.degenerate = true;
        return;
    }
    auto phase_of = [](Complex z) {
        return z == Complex{} ? Complex{1, 0} : Complex{std::cos(-std::arg(z)), std::sin(-std::arg(z))};
    };
    const Complex ka = phase_of(f.a[0]) * (std::sqrt(static_cast<double>(f.a.size())) / na);
    const Complex kb = phase_of(f.b[0]) * (std::sqrt(static_cast<double>(f.b.size())) / nb);
    const Complex kc = Complex{1, 0} / f.c[0];
    for (Complex& z : f.a) z *= ka;
    for (Complex& z : f.b) z *= kb;
    for (Complex& z : f.c) z *= kc;
    const Complex kh = Complex{1, 0} / (ka * kb * kc);
    for (Complex& z : f.d) z *= kh;
}

/// Per-element correction gains from a broadside rank-1 fit: the analytic
/// prediction for the broadside reference target is divided out, so that
/// compensating the analytic response at the reference position reproduces
/// the fit itself. The analytic entries are unit modulus, which keeps the
/// division well conditioned.
struct BroadsideGains {
    CVec tx;
    CVec rx;
    CVec b;
};

inline BroadsideGains broadside_gains(const Rank1Cpd& fit,
                                      const AnalyticResponse& analytic_at_reference) {
    require(fit.a.size() == analytic_at_reference.a_tx.size() &&
                fit.b.size() == analytic_at_reference.a_rx.size() &&
                fit.c.size() == analytic_at_reference.b.size(),
            "broadside_gains: factor length mismatch");
    BroadsideGains g;
    g.tx.resize(fit.a.size());
    g.rx.resize(fit.b.size());
    g.b.resize(fit.c.size());
    for (std::size_t i = 0; i < fit.a.size(); ++i) g.tx[i] = fit.a[i] / analytic_at_reference.a_tx[i];
    for (std::size_t i = 0; i < fit.b.size(); ++i) g.rx[i] = fit.b[i] / analytic_at_reference.a_rx[i];
    for (std::size_t i = 0; i < fit.c.size(); ++i) g.b[i] = fit.c[i] / analytic_at_reference.b[i];
    return g;
}

// --- canonical scaling of model parameters ---------------------------------

/// Applies the scaling that resolves the model's trivial invariances:
/// magnitude-response columns are divided by their maxima (absorbed into the
/// steering entries), steering vectors get real-nonnegative first entries and
/// norms sqrt(N)/sqrt(M), the phase response starts at 1, and the gains
/// absorb the leftover scalar. The synthesized tensor is unchanged.
/// Returns the number of positions that could not be normalized (zero-norm
/// steering vector); those positions are left untouched.
inline std::size_t canonicalize(SharedParams& shared, std::span<PositionParams> positions) {
    shared.check_consistent();
    const std::size_t N = shared.num_tx();
    const std::size_t M = shared.num_rx();
    const std::size_t L = shared.num_bins();
    // Column n = 0 of g_tx is the fixed reference and keeps scale 1.
    for (std::size_t n = 1; n < N; ++n) {
        double mx = 0;
        for (std::size_t l = 0; l < L; ++l) mx = std::max(mx, shared.g_tx(l, n));
        if (mx <= 0) continue;
        for (std::size_t l = 0; l < L; ++l) shared.g_tx(l, n) /= mx;
        for (auto& pos : positions) pos.a_tx[n] *= mx;
    }
    for (std::size_t m = 0; m < M; ++m) {
        double mx = 0;
        for (std::size_t l = 0; l < L; ++l) mx = std::max(mx, shared.g_rx(l, m));
        if (mx <= 0) continue;
        for (std::size_t l = 0; l < L; ++l) shared.g_rx(l, m) /= mx;
        for (auto& pos : positions) pos.a_rx[m] *= mx;
    }
    std::size_t flagged = 0;
    for (auto& pos : positions) {
        const double na = frobenius_norm(pos.a_tx);
        const double nb = frobenius_norm(pos.a_rx);
        if (na == 0.0 || nb == 0.0) {
            ++flagged;
            continue;
        }
        auto unit_conj_phase = [](Complex z) {
            // Zero first entry already satisfies Im = 0; keep phase 1 then.
            return z == Complex{} ? Complex{1, 0}
                                  : Complex{std::cos(-std::arg(z)), std::sin(-std::arg(z))};
        };
        const Complex ka = unit_conj_phase(pos.a_tx[0]) * (std::sqrt(static_cast<double>(N)) / na);
        const Complex kb = unit_conj_phase(pos.a_rx[0]) * (std::sqrt(static_cast<double>(M)) / nb);
        const Complex kc = std::conj(pos.c[0]); // |c[0]| = 1 by construction
        for (Complex& z : pos.a_tx) z *= ka;
        for (Complex& z : pos.a_rx) z *= kb;
        for (Complex& z : pos.c) z *= kc;
        const Complex kh = Complex{1, 0} / (ka * kb * kc);
        for (Complex& z : pos.h) z *= kh;
    }
    return flagged;
}

} // namespace aircal

#pragma once

#include <cmath>
#include <limits>

#include "aircal/model.hpp"
#include "aircal/parallel.hpp"

namespace aircal {

/// Calibration measurements: one tensor per reference position, uniform dims.
struct CalibrationSet {
    std::vector<ComplexTensor4> tensors;
    std::vector<TargetPosition> positions;

    std::size_t count() const { return tensors.size(); }

    void check() const {
        require(!tensors.empty(), "CalibrationSet: empty (P = 0)");
        require(positions.size() == tensors.size(), "CalibrationSet: positions/tensors count differ");
        const Dims4 d = tensors.front().dims();
        for (const auto& y : tensors)
            require(y.dims() == d, "CalibrationSet: tensor dimensions not uniform");
    }
    Dims4 dims() const { return tensors.front().dims(); }
};

struct BcdConfig {
    double epsilon = 1e-3;   // lower clip of the magnitude responses
    double tol = 1e-6;       // stop when f_rel decreases by at most this
    std::size_t max_iter = 500;
    bool deterministic = true; // reductions are ordered either way; kept for config echo
    std::size_t threads = 1;
    bool track_block_costs = false; // record f_rel after every block update

    void check() const {
        require(epsilon > 0 && epsilon < 1, "BcdConfig: epsilon must be in (0,1)");
        require(tol > 0, "BcdConfig: tol must be positive");
        require(max_iter >= 1, "BcdConfig: max_iter must be >= 1");
    }
};

/// Normalized cost after each block update within one iteration.
struct BlockCosts {
    double after_a_tx = 0;
    double after_a_rx = 0;
    double after_c = 0;
    double after_g_tx = 0;
    double after_g_rx = 0;
    double after_h = 0;
};

struct BcdDiagnostics {
    std::size_t iterations = 0;
    bool converged = false;
    std::size_t guarded_updates = 0;        // zero-denominator scalars kept at previous value
    std::size_t unnormalizable_positions = 0;
    std::vector<std::size_t> excluded_positions; // all-zero tensors, left out of the fit
};

struct CalibrationEstimate {
    SharedParams shared;
    std::vector<PositionParams> per_position;
    std::vector<TargetPosition> positions;
    RVec trace;                          // f_rel per iteration, trace[0] = initial fit
    std::vector<BlockCosts> block_trace; // filled when track_block_costs is set
    BcdDiagnostics diagnostics;

    double final_cost() const { return trace.empty() ? std::numeric_limits<double>::quiet_NaN() : trace.back(); }
};

/// Working state of the solver, exposed so the individual block updates can
/// be driven and inspected one at a time.
struct BcdState {
    const CalibrationSet* data = nullptr;
    SharedParams shared;
    std::vector<PositionParams> pos;
    std::vector<char> active;     // excluded positions are skipped everywhere
    std::vector<CVec> yh;         // per position: sum_t Y[n,m,l,t] conj(h[t]), index (n*M+m)*L+l
    RVec h_norm_sq;               // per position
    std::size_t guarded = 0;      // zero-denominator guards taken
    std::size_t unnormalizable = 0;
    double epsilon = 1e-3;
    std::size_t threads = 1;

    Dims4 dims() const { return data->dims(); }
};

namespace detail {

inline double position_cost(const ComplexTensor4& y, const SharedParams& shared,
                            const PositionParams& pos) {
    const auto [N, M, L, T] = y.dims();
    double err = 0;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t m = 0; m < M; ++m) {
            const Complex ab = pos.a_tx[n] * pos.a_rx[m];
            const auto sl = y.slice(n, m);
            for (std::size_t l = 0; l < L; ++l) {
                const Complex f = ab * (shared.g_tx(l, n) * shared.g_rx(l, m)) * pos.c[l];
                const Complex* row = sl.data() + l * T;
                for (std::size_t t = 0; t < T; ++t) err += std::norm(row[t] - f * pos.h[t]);
            }
        }
    return err;
}

} // namespace detail

/// Sum of squared fit errors over the data divided by the data's squared
/// Frobenius norm.
inline double normalized_cost(const CalibrationSet& data, const SharedParams& shared,
                              const std::vector<PositionParams>& pos,
                              const std::vector<char>* active = nullptr,
                              std::size_t threads = 1) {
    data.check();
    require(pos.size() == data.count(), "normalized_cost: estimate count mismatch");
    const std::size_t P = data.count();
    RVec err(P, 0.0), den(P, 0.0);
    parallel_for(P, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            if (active && !(*active)[p]) continue;
            den[p] = frobenius_norm_sq(data.tensors[p]);
            err[p] = detail::position_cost(data.tensors[p], shared, pos[p]);
        }
    });
    double num = 0, denom = 0;
    for (std::size_t p = 0; p < P; ++p) {
        num += err[p];
        denom += den[p];
    }
    if (denom == 0.0) throw validation_error("normalized_cost: data is identically zero");
    return num / denom;
}

inline double normalized_cost(const BcdState& st) {
    return normalized_cost(*st.data, st.shared, st.pos, &st.active, st.threads);
}

/// Starting point: all-ones steering, phase and magnitude responses; the gain
/// of snapshot t is the mean absolute real part plus j times the mean
/// absolute imaginary part over (n,m,l). Positions with an all-zero tensor
/// are flagged inactive.
inline BcdState init_state(const CalibrationSet& data, const BcdConfig& cfg) {
    data.check();
    cfg.check();
    const auto [N, M, L, T] = data.dims();
    BcdState st;
    st.data = &data;
    st.epsilon = cfg.epsilon;
    st.threads = cfg.threads;
    st.shared = SharedParams::all_ones(L, N, M);
    st.pos.resize(data.count());
    st.active.assign(data.count(), 1);
    st.h_norm_sq.assign(data.count(), 0.0);
    st.yh.resize(data.count());
    for (std::size_t p = 0; p < data.count(); ++p) {
        const ComplexTensor4& y = data.tensors[p];
        if (frobenius_norm_sq(y) == 0.0) {
            st.active[p] = 0;
            st.pos[p] = PositionParams::all_ones(N, M, L, T);
            st.pos[p].h.assign(T, Complex{});
            continue;
        }
        PositionParams pp = PositionParams::all_ones(N, M, L, T);
        const double scale = 1.0 / static_cast<double>(N * M * L);
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
            pp.h[t] = {sre * scale, sim * scale};
        }
        st.pos[p] = std::move(pp);
    }
    return st;
}

/// Recomputes the cached snapshot contractions sum_t Y conj(h) and |h|^2.
/// Must be called whenever the gains h change (each iteration starts with it).
inline void refresh_h_products(BcdState& st) {
    const auto [N, M, L, T] = st.dims();
    const std::size_t P = st.data->count();
    parallel_for(P, st.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            if (!st.active[p]) continue;
            const ComplexTensor4& y = st.data->tensors[p];
            const CVec& h = st.pos[p].h;
            st.h_norm_sq[p] = norm_sq(h);
            CVec& acc = st.yh[p];
            acc.assign(N * M * L, Complex{});
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t m = 0; m < M; ++m) {
                    const auto sl = y.slice(n, m);
                    Complex* out = acc.data() + (n * M + m) * L;
                    for (std::size_t l = 0; l < L; ++l) {
                        const Complex* row = sl.data() + l * T;
                        Complex s{};
                        for (std::size_t t = 0; t < T; ++t) s += row[t] * std::conj(h[t]);
                        out[l] = s;
                    }
                }
        }
    });
}

// --- block updates ----------------------------------------------------------
//
// Each update is the closed-form minimizer of the fit over its own block with
// every other block held at its latest value, so the cost is nonincreasing
// across updates. Zero denominators keep the previous iterate and count as a
// guarded update.

inline void update_a_tx(BcdState& st) {
    const auto [N, M, L, T] = st.dims();
    const std::size_t P = st.data->count();
    std::vector<std::size_t> guards(P, 0);
    parallel_for(P, st.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            if (!st.active[p]) continue;
            PositionParams& pp = st.pos[p];
            const double hn = st.h_norm_sq[p];
            const CVec& yh = st.yh[p];
            for (std::size_t n = 0; n < N; ++n) {
                Complex num{};
                double den = 0;
                for (std::size_t m = 0; m < M; ++m) {
                    const Complex* yhe = yh.data() + (n * M + m) * L;
                    Complex s{};
                    double bn = 0;
                    for (std::size_t l = 0; l < L; ++l) {
                        const Complex b = pp.c[l] * (st.shared.g_tx(l, n) * st.shared.g_rx(l, m));
                        s += std::conj(b) * yhe[l];
                        bn += std::norm(b);
                    }
                    num += std::conj(pp.a_rx[m]) * s;
                    den += std::norm(pp.a_rx[m]) * bn;
                }
                den *= hn;
                if (den > 0 && std::isfinite(den))
                    pp.a_tx[n] = num / den;
                else
                    ++guards[p];
            }
        }
    });
    for (std::size_t g : guards) st.guarded += g;
}

inline void update_a_rx(BcdState& st) {
    const auto [N, M, L, T] = st.dims();
    const std::size_t P = st.data->count();
    std::vector<std::size_t> guards(P, 0);
    parallel_for(P, st.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            if (!st.active[p]) continue;
            PositionParams& pp = st.pos[p];
            const double hn = st.h_norm_sq[p];
            const CVec& yh = st.yh[p];
            for (std::size_t m = 0; m < M; ++m) {
                Complex num{};
                double den = 0;
                for (std::size_t n = 0; n < N; ++n) {
                    const Complex* yhe = yh.data() + (n * M + m) * L;
                    Complex s{};
                    double bn = 0;
                    for (std::size_t l = 0; l < L; ++l) {
                        const Complex b = pp.c[l] * (st.shared.g_tx(l, n) * st.shared.g_rx(l, m));
                        s += std::conj(b) * yhe[l];
                        bn += std::norm(b);
                    }
                    num += std::conj(pp.a_tx[n]) * s;
                    den += std::norm(pp.a_tx[n]) * bn;
                }
                den *= hn;
                if (den > 0 && std::isfinite(den))
                    pp.a_rx[m] = num / den;
                else
                    ++guards[p];
            }
        }
    });
    for (std::size_t g : guards) st.guarded += g;
}

inline void update_c(BcdState& st) {
    const auto [N, M, L, T] = st.dims();
    const std::size_t P = st.data->count();
    std::vector<std::size_t> guards(P, 0);
    parallel_for(P, st.threads, [&](std::size_t begin, std::size_t end) {
        CVec s(L);
        for (std::size_t p = begin; p < end; ++p) {
            if (!st.active[p]) continue;
            PositionParams& pp = st.pos[p];
            const CVec& yh = st.yh[p];
            std::fill(s.begin(), s.end(), Complex{});
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t m = 0; m < M; ++m) {
                    const Complex coef = std::conj(pp.a_tx[n] * pp.a_rx[m]);
                    const Complex* yhe = yh.data() + (n * M + m) * L;
                    for (std::size_t l = 0; l < L; ++l)
                        s[l] += coef * (st.shared.g_tx(l, n) * st.shared.g_rx(l, m)) * yhe[l];
                }
            for (std::size_t l = 0; l < L; ++l) {
                const double mag = std::abs(s[l]);
                if (mag > 0 && std::isfinite(mag))
                    pp.c[l] = s[l] / mag; // exp(j arg), unit modulus by construction
                else
                    ++guards[p];
            }
        }
    });
    for (std::size_t g : guards) st.guarded += g;
}

namespace detail {

/// Shared form of the two magnitude-response updates: an unconstrained scalar
/// least-squares value per (bin, element) accumulated over every position,
/// then clipped to [epsilon, 1].
inline void update_magnitude(BcdState& st, bool transmit) {
    const auto [N, M, L, T] = st.dims();
    const std::size_t P = st.data->count();
    const std::size_t cols = transmit ? N : M;
    const std::size_t first_col = transmit ? 1 : 0; // g_tx column 0 is the fixed reference
    if (first_col >= cols) return;
    // Per-position partial sums, reduced in position order afterwards.
    std::vector<RVec> nums(P), dens(P);
    parallel_for(P, st.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            if (!st.active[p]) continue;
            const PositionParams& pp = st.pos[p];
            const double hn = st.h_norm_sq[p];
            const CVec& yh = st.yh[p];
            RVec& num = nums[p];
            RVec& den = dens[p];
            num.assign(cols * L, 0.0);
            den.assign(cols * L, 0.0);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t m = 0; m < M; ++m) {
                    const std::size_t col = transmit ? n : m;
                    if (col < first_col) continue;
                    const Complex coef = std::conj(pp.a_tx[n] * pp.a_rx[m]);
                    const double acoef = std::norm(pp.a_tx[n]) * std::norm(pp.a_rx[m]) * hn;
                    const Complex* yhe = yh.data() + (n * M + m) * L;
                    for (std::size_t l = 0; l < L; ++l) {
                        const double other = transmit ? st.shared.g_rx(l, m) : st.shared.g_tx(l, n);
                        num[col * L + l] +=
                            (coef * std::conj(pp.c[l]) * yhe[l]).real() * other;
                        den[col * L + l] += acoef * other * other;
                    }
                }
        }
    });
    RVec num(cols * L, 0.0), den(cols * L, 0.0);
    for (std::size_t p = 0; p < P; ++p) {
        if (nums[p].empty()) continue;
        for (std::size_t i = 0; i < cols * L; ++i) {
            num[i] += nums[p][i];
            den[i] += dens[p][i];
        }
    }
    RealMatrix& g = transmit ? st.shared.g_tx : st.shared.g_rx;
    for (std::size_t col = first_col; col < cols; ++col)
        for (std::size_t l = 0; l < L; ++l) {
            const double d = den[col * L + l];
            if (d > 0 && std::isfinite(d)) {
                const double ls = num[col * L + l] / d;
                g(l, col) = std::clamp(ls, st.epsilon, 1.0);
            } else {
                ++st.guarded;
            }
        }
}

} // namespace detail

inline void update_g_tx(BcdState& st) { detail::update_magnitude(st, true); }
inline void update_g_rx(BcdState& st) { detail::update_magnitude(st, false); }

inline void update_h(BcdState& st) {
    const auto [N, M, L, T] = st.dims();
    const std::size_t P = st.data->count();
    std::vector<std::size_t> guards(P, 0);
    parallel_for(P, st.threads, [&](std::size_t begin, std::size_t end) {
        CVec num(T);
        for (std::size_t p = begin; p < end; ++p) {
            if (!st.active[p]) continue;
            PositionParams& pp = st.pos[p];
            const ComplexTensor4& y = st.data->tensors[p];
            std::fill(num.begin(), num.end(), Complex{});
            double den = 0;
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t m = 0; m < M; ++m) {
                    const Complex alpha = pp.a_tx[n] * pp.a_rx[m];
                    const double amag = std::norm(alpha);
                    const auto sl = y.slice(n, m);
                    double bn = 0;
                    for (std::size_t l = 0; l < L; ++l) {
                        const Complex b = pp.c[l] * (st.shared.g_tx(l, n) * st.shared.g_rx(l, m));
                        const Complex w = std::conj(alpha * b);
                        bn += std::norm(b);
                        const Complex* row = sl.data() + l * T;
                        for (std::size_t t = 0; t < T; ++t) num[t] += w * row[t];
                    }
                    den += amag * bn;
                }
            if (den > 0 && std::isfinite(den)) {
                const double inv = 1.0 / den;
                for (std::size_t t = 0; t < T; ++t) pp.h[t] = num[t] * inv;
            } else {
                ++guards[p];
            }
        }
    });
    for (std::size_t g : guards) st.guarded += g;
}

/// Restores the scaling constraints without changing the modeled tensors.
/// Inactive positions keep their placeholder parameters.
inline void rescale(BcdState& st) {
    std::vector<std::size_t> idx;
    for (std::size_t p = 0; p < st.pos.size(); ++p)
        if (st.active[p]) idx.push_back(p);
    // canonicalize() operates on a contiguous span; gather and scatter.
    std::vector<PositionParams> gathered;
    gathered.reserve(idx.size());
    for (std::size_t p : idx) gathered.push_back(std::move(st.pos[p]));
    st.unnormalizable += canonicalize(st.shared, gathered);
    for (std::size_t i = 0; i < idx.size(); ++i) st.pos[idx[i]] = std::move(gathered[i]);
}

/// Joint estimation of shared magnitude responses and per-position factors by
/// cyclic closed-form block updates followed by the constraint-restoring
/// rescaling. Terminates when the normalized cost decreases by at most
/// cfg.tol between iterations or when max_iter is reached.
inline CalibrationEstimate calibrate(const CalibrationSet& data, const BcdConfig& cfg) {
    BcdState st = init_state(data, cfg);
    CalibrationEstimate est;
    est.positions = data.positions;
    for (std::size_t p = 0; p < data.count(); ++p)
        if (!st.active[p]) est.diagnostics.excluded_positions.push_back(p);

    double prev = normalized_cost(st);
    est.trace.push_back(prev);
    for (std::size_t it = 0; it < cfg.max_iter; ++it) {
        refresh_h_products(st);
        BlockCosts bc;
        update_a_tx(st);
        if (cfg.track_block_costs) bc.after_a_tx = normalized_cost(st);
        update_a_rx(st);
        if (cfg.track_block_costs) bc.after_a_rx = normalized_cost(st);
        update_c(st);
        if (cfg.track_block_costs) bc.after_c = normalized_cost(st);
        update_g_tx(st);
        if (cfg.track_block_costs) bc.after_g_tx = normalized_cost(st);
        update_g_rx(st);
        if (cfg.track_block_costs) bc.after_g_rx = normalized_cost(st);
        update_h(st);
        if (cfg.track_block_costs) bc.after_h = normalized_cost(st);
        rescale(st);
        const double cur = normalized_cost(st);
        if (!std::isfinite(cur)) throw numerical_error("calibrate: cost became non-finite");
        est.trace.push_back(cur);
        if (cfg.track_block_costs) est.block_trace.push_back(bc);
        est.diagnostics.iterations = it + 1;
        if (prev - cur <= cfg.tol) {
            est.diagnostics.converged = true;
            break;
        }
        prev = cur;
    }
    est.shared = std::move(st.shared);
    est.per_position = std::move(st.pos);
    est.diagnostics.guarded_updates = st.guarded;
    est.diagnostics.unnormalizable_positions = st.unnormalizable;
    return est;
}

} // namespace aircal

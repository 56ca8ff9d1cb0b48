#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "aircal/dictionary.hpp"
#include "aircal/rng.hpp"

namespace aircal {

struct SimConfig {
    std::size_t num_positions = 50; // P
    std::size_t num_tx = 4;         // N
    std::size_t num_rx = 16;        // M
    std::size_t num_bins = 24;      // L
    std::size_t num_snapshots = 10; // T
    RVec deltas = {0.0, 0.5};       // magnitude-response spread, in [0,1)
    RVec snr_db_grid = {-20, -10, 0, 10, 20};
    std::size_t n_trials = 10;      // I_MC
    std::uint64_t seed = 1234;
    bool run_rank1_cpd = true;
    BcdConfig bcd;                  // solver settings for the proposed method
    double cpd_tol = 1e-6;
    std::size_t cpd_max_iter = 500;
    std::size_t threads = 1;

    void check() const {
        require(num_positions >= 1 && num_tx >= 1 && num_rx >= 1 && num_bins >= 1 &&
                    num_snapshots >= 1,
                "SimConfig: sizes must be >= 1");
        for (double d : deltas) require(d >= 0 && d < 1, "SimConfig: delta must be in [0,1)");
        require(n_trials >= 1, "SimConfig: n_trials must be >= 1");
        require(!snr_db_grid.empty() && !deltas.empty(), "SimConfig: empty sweep grid");
    }
};

struct Truth {
    SharedParams shared;
    std::vector<PositionParams> per_position;
};

/// Random ground-truth parameters: steering, phase and gain entries are unit
/// magnitude with uniform phase; magnitude responses are uniform on
/// [1-delta, 1]. With canonicalize set, the scaling invariances are resolved
/// the same way the solver resolves them, so metrics compare canonical
/// representatives.
inline Truth generate_truth(std::size_t P, std::size_t N, std::size_t M, std::size_t L,
                            std::size_t T, double delta, Philox& rng, bool canonicalize_out = true) {
    require(P >= 1 && N >= 1 && M >= 1 && L >= 1 && T >= 1, "generate_truth: sizes must be >= 1");
    require(delta >= 0 && delta < 1, "generate_truth: delta must be in [0,1)");
    Truth truth;
    truth.shared.g_tx = RealMatrix(L, N);
    truth.shared.g_rx = RealMatrix(L, M);
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t n = 0; n < N; ++n) truth.shared.g_tx(l, n) = rng.uniform(1.0 - delta, 1.0);
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t m = 0; m < M; ++m) truth.shared.g_rx(l, m) = rng.uniform(1.0 - delta, 1.0);
    truth.per_position.resize(P);
    for (auto& pos : truth.per_position) {
        pos.a_tx.resize(N);
        pos.a_rx.resize(M);
        pos.c.resize(L);
        pos.h.resize(T);
        for (auto& z : pos.a_tx) z = rng.unit_phase();
        for (auto& z : pos.a_rx) z = rng.unit_phase();
        for (auto& z : pos.c) z = rng.unit_phase();
        for (auto& z : pos.h) z = rng.unit_phase();
    }
    if (canonicalize_out) canonicalize(truth.shared, truth.per_position);
    return truth;
}

/// Adds circular complex Gaussian noise scaled so the expected total noise
/// power is ||signal||_F^2 * 10^(-snr_db/10).
inline ComplexTensor4 add_noise(const ComplexTensor4& signal, double snr_db, Philox& rng) {
    const double sig_sq = frobenius_norm_sq(signal);
    require(sig_sq > 0, "add_noise: signal is identically zero");
    ComplexTensor4 out = signal;
    if (snr_db == std::numeric_limits<double>::infinity()) return out;
    const double per_entry_var = sig_sq / static_cast<double>(signal.size()) *
                                 std::pow(10.0, -snr_db / 10.0);
    const double sigma = std::sqrt(per_entry_var);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += sigma * rng.complex_normal();
    return out;
}

/// Mean complementary normalized cross-correlation: the average over atom
/// pairs of 1 - |<q, qhat>| / (||q|| ||qhat||). Zero for collinear pairs,
/// one for orthogonal ones; immune to per-atom complex scaling.
inline double mcncc(const std::vector<CVec>& reference, const std::vector<CVec>& estimate) {
    require(reference.size() == estimate.size() && !reference.empty(),
            "mcncc: atom counts differ or empty");
    double sum = 0, comp = 0; // Kahan accumulation, order independent of threading
    for (std::size_t p = 0; p < reference.size(); ++p) {
        const double nq = frobenius_norm(reference[p]);
        const double nqh = frobenius_norm(estimate[p]);
        require(nq > 0 && nqh > 0, "mcncc: zero-norm atom");
        const double term = 1.0 - std::abs(inner_product(reference[p], estimate[p])) / (nq * nqh);
        const double y = term - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return std::clamp(sum / static_cast<double>(reference.size()), 0.0, 1.0);
}

/// Relative pointwise reconstruction error ||Y - Yhat||_F / ||Y||_F.
inline double reconstruction_error(const ComplexTensor4& y, const ComplexTensor4& y_hat) {
    require(y.dims() == y_hat.dims(), "reconstruction_error: shape mismatch");
    const double ny = frobenius_norm(y);
    require(ny > 0, "reconstruction_error: reference tensor is zero");
    double diff = 0;
    for (std::size_t i = 0; i < y.size(); ++i) diff += std::norm(y.data()[i] - y_hat.data()[i]);
    return std::sqrt(diff) / ny;
}

struct SweepRow {
    double snr_db = 0;
    double delta = 0;
    std::string method; // "proposed" or "rank1_cpd"
    std::size_t trial = 0;
    double mcncc = 0;
};

struct SweepCell {
    double snr_db = 0;
    double delta = 0;
    std::string method;
    double mean_mcncc = 0;
};

struct MetricReport {
    std::vector<SweepRow> rows;
    std::vector<SweepCell> aggregates;
    std::uint64_t seed = 0;

    double cell_mean(double snr_db, double delta, const std::string& method) const {
        for (const auto& c : aggregates)
            if (c.snr_db == snr_db && c.delta == delta && c.method == method) return c.mean_mcncc;
        throw validation_error("MetricReport: no such sweep cell");
    }
};

namespace detail {

inline std::uint64_t trial_stream(std::size_t delta_idx, std::size_t snr_idx, std::size_t trial,
                                  std::uint64_t purpose) {
    return (static_cast<std::uint64_t>(delta_idx) << 48) |
           (static_cast<std::uint64_t>(snr_idx) << 40) |
           (static_cast<std::uint64_t>(trial) << 8) | purpose;
}

} // namespace detail

/// Monte Carlo comparison of the proposed coupled decomposition against the
/// positionwise rank-1 CPD baseline. Both methods see identical data within a
/// trial; trials run in parallel with derived random streams, so results are
/// reproducible for a fixed seed regardless of the thread count.
inline MetricReport run_sweep(const SimConfig& cfg) {
    cfg.check();
    const std::size_t n_delta = cfg.deltas.size();
    const std::size_t n_snr = cfg.snr_db_grid.size();
    const std::size_t n_tasks = n_delta * n_snr * cfg.n_trials;
    const std::size_t methods = cfg.run_rank1_cpd ? 2 : 1;

    MetricReport report;
    report.seed = cfg.seed;
    report.rows.resize(n_tasks * methods);

    parallel_for(n_tasks, cfg.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t task = begin; task < end; ++task) {
            const std::size_t di = task / (n_snr * cfg.n_trials);
            const std::size_t si = (task / cfg.n_trials) % n_snr;
            const std::size_t trial = task % cfg.n_trials;
            const double delta = cfg.deltas[di];
            const double snr_db = cfg.snr_db_grid[si];

            Philox truth_rng(cfg.seed, detail::trial_stream(di, si, trial, 0));
            Philox noise_rng(cfg.seed, detail::trial_stream(di, si, trial, 1));
            Truth truth = generate_truth(cfg.num_positions, cfg.num_tx, cfg.num_rx, cfg.num_bins,
                                         cfg.num_snapshots, delta, truth_rng);

            CalibrationSet set;
            set.tensors.reserve(cfg.num_positions);
            set.positions.resize(cfg.num_positions);
            std::vector<CVec> q_true(cfg.num_positions);
            for (std::size_t p = 0; p < cfg.num_positions; ++p) {
                set.positions[p].index = p;
                set.positions[p].range_m = 2.0;
                const ComplexTensor4 clean = synthesize(truth.shared, truth.per_position[p]);
                set.tensors.push_back(add_noise(clean, snr_db, noise_rng));
                q_true[p] = range_angle_response(truth.shared, truth.per_position[p].a_tx,
                                                 truth.per_position[p].a_rx, truth.per_position[p].c);
            }

            BcdConfig bcd = cfg.bcd;
            bcd.threads = 1; // parallelism lives at the trial level here
            const CalibrationEstimate est = calibrate(set, bcd);
            std::vector<CVec> q_hat(cfg.num_positions);
            for (std::size_t p = 0; p < cfg.num_positions; ++p)
                q_hat[p] = range_angle_response(est.shared, est.per_position[p].a_tx,
                                                est.per_position[p].a_rx, est.per_position[p].c);
            report.rows[task * methods] = {snr_db, delta, "proposed", trial, mcncc(q_true, q_hat)};

            if (cfg.run_rank1_cpd) {
                std::vector<CVec> q_cpd(cfg.num_positions);
                for (std::size_t p = 0; p < cfg.num_positions; ++p) {
                    const Rank1Cpd f = rank1_cpd(set.tensors[p], cfg.cpd_tol, cfg.cpd_max_iter);
                    CVec q(cfg.num_tx * cfg.num_rx * cfg.num_bins);
                    for (std::size_t l = 0; l < cfg.num_bins; ++l)
                        for (std::size_t m = 0; m < cfg.num_rx; ++m)
                            for (std::size_t n = 0; n < cfg.num_tx; ++n)
                                q[(l * cfg.num_rx + m) * cfg.num_tx + n] = f.a[n] * f.b[m] * f.c[l];
                    q_cpd[p] = std::move(q);
                }
                report.rows[task * methods + 1] = {snr_db, delta, "rank1_cpd", trial,
                                                   mcncc(q_true, q_cpd)};
            }
        }
    });

    for (std::size_t di = 0; di < n_delta; ++di)
        for (std::size_t si = 0; si < n_snr; ++si)
            for (std::size_t mi = 0; mi < methods; ++mi) {
                SweepCell cell;
                cell.delta = cfg.deltas[di];
                cell.snr_db = cfg.snr_db_grid[si];
                cell.method = mi == 0 ? "proposed" : "rank1_cpd";
                double sum = 0, comp = 0;
                for (std::size_t trial = 0; trial < cfg.n_trials; ++trial) {
                    const std::size_t task = (di * n_snr + si) * cfg.n_trials + trial;
                    const double v = report.rows[task * methods + mi].mcncc;
                    const double y = v - comp;
                    const double t = sum + y;
                    comp = (t - sum) - y;
                    sum = t;
                }
                cell.mean_mcncc = sum / static_cast<double>(cfg.n_trials);
                report.aggregates.push_back(cell);
            }
    return report;
}

} // namespace aircal

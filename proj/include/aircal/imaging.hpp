#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <utility>

#include "aircal/dictionary.hpp"
#include "aircal/parallel.hpp"

namespace aircal {

struct OmpConfig {
    double eta = 0.0;             // stop when the squared residual norm falls to eta
    std::size_t max_iter = 100;
    double power_floor_db = 10.0; // detections this far below the peak are discarded
    std::size_t threads = 1;

    void check() const {
        require(eta >= 0, "OmpConfig: eta must be nonnegative");
        require(max_iter >= 1, "OmpConfig: max_iter must be >= 1");
        require(power_floor_db >= 0, "OmpConfig: power floor must be nonnegative");
    }
};

struct Detection {
    std::size_t atom_index = 0;
    DictionaryAtomMeta meta;
    CVec gains;       // h, length T (joint least-squares refit)
    double power = 0; // T^{-2} ||h||^2
};

struct ImageEstimate {
    std::vector<Detection> detections;   // in selection order, distinct atoms
    RVec residual_norms;                 // squared Frobenius norms, nonincreasing
    bool gram_rank_deficient = false;    // newest atom dropped, search stopped
};

struct CartesianPoint {
    double x = 0;
    double z = 0;
    double power = 0;
};

struct AngularPoint {
    double azimuth_rad = 0;
    double elevation_rad = 0;
    double power = 0;
};

struct Projections {
    std::vector<CartesianPoint> xz;
    std::vector<AngularPoint> angular; // gains under the same direction summed
};

/// Unfolded residual: Y_(4) minus the contributions of the selected atoms.
inline ComplexMatrix residual(const ComplexMatrix& y4, const std::vector<CVec>& atoms,
                              const std::vector<CVec>& gains) {
    require(atoms.size() == gains.size(), "residual: atom/gain count differ");
    ComplexMatrix res = y4;
    const std::size_t T = y4.rows();
    const std::size_t D = y4.cols();
    for (std::size_t k = 0; k < atoms.size(); ++k) {
        require(atoms[k].size() == D && gains[k].size() == T, "residual: shape mismatch");
        for (std::size_t t = 0; t < T; ++t) {
            const Complex h = gains[k][t];
            Complex* row = res.data() + t * D;
            const Complex* q = atoms[k].data();
            for (std::size_t j = 0; j < D; ++j) row[j] -= h * q[j];
        }
    }
    return res;
}

namespace detail {

/// Cholesky factorization of a Hermitian positive definite matrix with a
/// cheap condition estimate from the pivot ratio. Returns false when the
/// matrix is numerically rank deficient.
class GramSolver {
  public:
    bool factor(const ComplexMatrix& gram, double cond_limit) {
        const std::size_t n = gram.rows();
        chol_ = gram;
        double max_piv = 0, min_piv = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n; ++k) {
            double d = chol_(k, k).real();
            for (std::size_t j = 0; j < k; ++j) d -= std::norm(chol_(k, j));
            if (!(d > 0) || !std::isfinite(d)) return false;
            const double piv = std::sqrt(d);
            chol_(k, k) = piv;
            max_piv = std::max(max_piv, piv);
            min_piv = std::min(min_piv, piv);
            for (std::size_t i = k + 1; i < n; ++i) {
                Complex s = chol_(i, k);
                for (std::size_t j = 0; j < k; ++j) s -= chol_(i, j) * std::conj(chol_(k, j));
                chol_(i, k) = s / piv;
            }
        }
        const double cond = (max_piv / min_piv) * (max_piv / min_piv);
        return std::isfinite(cond) && cond < cond_limit;
    }

    /// Solves L L^H x = b in place.
    void solve(CVec& b) const {
        const std::size_t n = chol_.rows();
        for (std::size_t i = 0; i < n; ++i) {
            Complex s = b[i];
            for (std::size_t j = 0; j < i; ++j) s -= chol_(i, j) * b[j];
            b[i] = s / chol_(i, i).real();
        }
        for (std::size_t ii = n; ii-- > 0;) {
            Complex s = b[ii];
            for (std::size_t j = ii + 1; j < n; ++j) s -= std::conj(chol_(j, ii)) * b[j];
            b[ii] = s / chol_(ii, ii).real();
        }
    }

  private:
    ComplexMatrix chol_;
};

} // namespace detail

/// Greedy multi-target localization: repeatedly selects the dictionary atom
/// with the largest normalized correlation to the residual rows, then refits
/// all gains jointly by least squares over the selected atoms. Stops when the
/// squared residual norm reaches cfg.eta, after cfg.max_iter selections, or
/// when the Gram system of the selected atoms becomes numerically rank
/// deficient (the newest atom is dropped and the estimate reports it).
inline ImageEstimate image(const ComplexTensor4& y, const Dictionary& dict, const OmpConfig& cfg) {
    cfg.check();
    dict.check();
    const auto [N, M, L, T] = y.dims();
    require(N == dict.num_tx && M == dict.num_rx && L == dict.num_bins,
            "image: tensor dimensions do not match the dictionary");
    require(T >= 1, "image: need at least one snapshot");

    const std::size_t D = dict.atom_length();
    const std::size_t P = dict.count();
    const ComplexMatrix y4 = unfold(y, 4);

    RVec atom_norm_sq(P);
    for (std::size_t p = 0; p < P; ++p) atom_norm_sq[p] = norm_sq(dict.atoms[p]);

    ImageEstimate est;
    ComplexMatrix res = y4;
    est.residual_norms.push_back(frobenius_norm_sq(res));

    std::vector<std::size_t> selected;
    std::vector<char> taken(P, 0);
    ComplexMatrix gram; // grows with the selection; gram(a,b) = <q_a, q_b>
    constexpr double kCondLimit = 1e12;

    while (selected.size() < cfg.max_iter) {
        if (est.residual_norms.back() <= cfg.eta) break;

        // Step 1: argmax over unselected atoms of ||res * conj(q)||^2 / ||q||^2,
        // ties resolved toward the lowest atom index.
        struct Best {
            double score = -1;
            std::size_t index = 0;
        };
        const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.threads, P));
        std::vector<Best> best(workers);
        const std::size_t chunk = (P + workers - 1) / workers;
        parallel_for(workers, cfg.threads, [&](std::size_t wb, std::size_t we) {
            for (std::size_t w = wb; w < we; ++w) {
                Best b;
                const std::size_t begin = w * chunk;
                const std::size_t end = std::min(P, begin + chunk);
                for (std::size_t p = begin; p < end; ++p) {
                    if (taken[p] || atom_norm_sq[p] <= 0.0) continue;
                    const Complex* q = dict.atoms[p].data();
                    double corr = 0;
                    for (std::size_t t = 0; t < T; ++t) {
                        const Complex* row = res.data() + t * D;
                        Complex s{};
                        for (std::size_t j = 0; j < D; ++j) s += row[j] * std::conj(q[j]);
                        corr += std::norm(s);
                    }
                    const double score = corr / atom_norm_sq[p];
                    if (score > b.score) {
                        b.score = score;
                        b.index = p;
                    }
                }
                best[w] = b;
            }
        });
        Best overall;
        for (const Best& b : best)
            if (b.score > overall.score) overall = b; // chunk order keeps ties at lowest index
        if (overall.score <= 0) break;                // nothing correlates with the residual

        // Step 2: joint least-squares refit of all selected gains.
        const std::size_t pick = overall.index;
        selected.push_back(pick);
        taken[pick] = 1;
        const std::size_t K = selected.size();
        ComplexMatrix grown(K, K);
        for (std::size_t a = 0; a + 1 < K; ++a)
            for (std::size_t b = 0; b + 1 < K; ++b) grown(a, b) = gram(a, b);
        for (std::size_t a = 0; a < K; ++a) {
            const Complex g = inner_product(dict.atoms[selected[a]], dict.atoms[pick]);
            grown(a, K - 1) = g;
            grown(K - 1, a) = std::conj(g);
        }
        gram = std::move(grown);

        detail::GramSolver solver;
        if (!solver.factor(gram, kCondLimit)) {
            selected.pop_back();
            taken[pick] = 0;
            est.gram_rank_deficient = true;
            break;
        }

        // Right-hand side rows: <q_k, y4 row t>; solve per snapshot.
        std::vector<CVec> gains(K, CVec(T));
        {
            CVec rhs(K);
            for (std::size_t t = 0; t < T; ++t) {
                const Complex* row = y4.data() + t * D;
                for (std::size_t k = 0; k < K; ++k) {
                    const Complex* q = dict.atoms[selected[k]].data();
                    Complex s{};
                    for (std::size_t j = 0; j < D; ++j) s += std::conj(q[j]) * row[j];
                    rhs[k] = s;
                }
                solver.solve(rhs);
                for (std::size_t k = 0; k < K; ++k) gains[k][t] = rhs[k];
            }
        }

        // Residual and bookkeeping.
        res = y4;
        for (std::size_t k = 0; k < K; ++k) {
            const Complex* q = dict.atoms[selected[k]].data();
            for (std::size_t t = 0; t < T; ++t) {
                const Complex h = gains[k][t];
                Complex* row = res.data() + t * D;
                for (std::size_t j = 0; j < D; ++j) row[j] -= h * q[j];
            }
        }
        est.residual_norms.push_back(frobenius_norm_sq(res));

        est.detections.clear();
        const double t_sq = static_cast<double>(T) * static_cast<double>(T);
        for (std::size_t k = 0; k < K; ++k) {
            Detection det;
            det.atom_index = selected[k];
            det.meta = dict.meta[selected[k]];
            det.gains = gains[k];
            det.power = norm_sq(gains[k]) / t_sq;
            est.detections.push_back(std::move(det));
        }
    }
    return est;
}

/// Applies the relative power floor and projects the surviving detections
/// onto the x-z plane and the azimuth-elevation plane. Gains of detections
/// sharing a direction (same azimuth and elevation, different scan ranges)
/// are added up in the angular view.
inline Projections threshold_and_project(const ImageEstimate& est, const OmpConfig& cfg) {
    Projections out;
    if (est.detections.empty()) return out;
    double peak = 0;
    for (const Detection& d : est.detections) peak = std::max(peak, d.power);
    const double floor = peak * std::pow(10.0, -cfg.power_floor_db / 10.0);

    std::map<std::pair<double, double>, double> angular;
    for (const Detection& d : est.detections) {
        if (d.power < floor) continue;
        const double r = d.meta.range_m;
        const double az = d.meta.azimuth_rad;
        const double el = d.meta.elevation_rad;
        out.xz.push_back({r * std::sin(az) * std::cos(el), r * std::cos(az) * std::cos(el), d.power});
        angular[{az, el}] += d.power;
    }
    out.angular.reserve(angular.size());
    for (const auto& [dir, power] : angular) out.angular.push_back({dir.first, dir.second, power});
    return out;
}

} // namespace aircal

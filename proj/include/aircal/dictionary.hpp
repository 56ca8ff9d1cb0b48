#pragma once

#include <cmath>
#include <numbers>

#include "aircal/calibration.hpp"

namespace aircal {

/// Linear phase model of the round-trip propagation delay. A target at range
/// r with system offset r0 produces the per-bin phase increment
/// dphi = 2 (r + r0) dw / c with dw = 2 pi fs / L_dft. The increment is only
/// unambiguous while |dphi| < pi, i.e. r + r0 < pi c / (2 dw); beyond that
/// the estimated offset is defined modulo pi c / dw, which leaves the
/// regenerated responses unchanged.
struct PhaseModel {
    double c_sound = 343.0;
    double delta_omega = 2.0 * std::numbers::pi * 195e3 / 4096.0;
    double r0 = 0.0;

    static PhaseModel from_sampling(double fs, std::size_t l_dft, double c_sound = 343.0,
                                    double r0 = 0.0) {
        require(fs > 0 && l_dft > 0 && c_sound > 0, "PhaseModel: nonpositive parameter");
        PhaseModel m;
        m.c_sound = c_sound;
        m.delta_omega = 2.0 * std::numbers::pi * fs / static_cast<double>(l_dft);
        m.r0 = r0;
        return m;
    }

    void check() const {
        require(c_sound > 0 && delta_omega > 0, "PhaseModel: nonpositive parameter");
    }

    double phase_slope(double range_m) const {
        return 2.0 * (range_m + r0) * delta_omega / c_sound;
    }
};

/// Unit-modulus phase response exp(-j l dphi) for bins l = 0..L-1.
inline CVec phase_response(const PhaseModel& model, double range_m, std::size_t num_bins) {
    model.check();
    require(range_m + model.r0 >= 0, "phase_response: negative total range");
    const double dphi = model.phase_slope(range_m);
    CVec v(num_bins);
    for (std::size_t l = 0; l < num_bins; ++l) {
        const double phase = -dphi * static_cast<double>(l);
        v[l] = {std::cos(phase), std::sin(phase)};
    }
    return v;
}

/// System range offset from calibrated phase responses via the
/// shift-invariance (rotational averaging) estimator. For each position the
/// phase increment is recovered from the lag-1 product of consecutive bins
/// and the known target range is subtracted; the per-position offsets are
/// averaged over positions (set average = false for the plain sum).
inline double estimate_r0(const std::vector<CVec>& phase_responses, const RVec& ranges_m,
                          const PhaseModel& model, bool average = true) {
    model.check();
    require(!phase_responses.empty(), "estimate_r0: no positions (P = 0)");
    require(phase_responses.size() == ranges_m.size(), "estimate_r0: ranges/responses count differ");
    double acc = 0;
    for (std::size_t p = 0; p < phase_responses.size(); ++p) {
        const CVec& c = phase_responses[p];
        require(c.size() >= 2, "estimate_r0: need at least two bins");
        Complex z{};
        for (std::size_t l = 0; l + 1 < c.size(); ++l) z += std::conj(c[l]) * c[l + 1];
        if (z == Complex{}) throw numerical_error("estimate_r0: undefined phase increment");
        const double dphi = -std::arg(z);
        acc += model.c_sound * dphi / (2.0 * model.delta_omega) - ranges_m[p];
    }
    return average ? acc / static_cast<double>(phase_responses.size()) : acc;
}

struct DictionaryAtomMeta {
    std::size_t source_index = 0; // calibration position the atom derives from
    double range_m = 0;           // scanned range r'
    double azimuth_rad = 0;
    double elevation_rad = 0;
};

/// Range-angle dictionary: vectorized array responses with position metadata.
/// Atom vectors have length N*M*L in mode-4 column order (n fastest, then m,
/// then l) so that correlation against an unfolded measurement is a plain
/// matrix-vector product.
struct Dictionary {
    std::size_t num_tx = 0;
    std::size_t num_rx = 0;
    std::size_t num_bins = 0;
    std::vector<CVec> atoms;
    std::vector<DictionaryAtomMeta> meta;

    std::size_t atom_length() const { return num_tx * num_rx * num_bins; }
    std::size_t count() const { return atoms.size(); }

    void check() const {
        require(meta.size() == atoms.size(), "Dictionary: meta/atom count differ");
        for (const auto& q : atoms)
            require(q.size() == atom_length(), "Dictionary: atom length mismatch");
    }
};

/// Vectorized single-snapshot array response in mode-4 column order:
/// q[(l*M + m)*N + n] = a_tx[n] a_rx[m] g_tx[l,n] g_rx[l,m] c[l].
inline CVec range_angle_response(const SharedParams& shared, const CVec& a_tx, const CVec& a_rx,
                                 const CVec& c) {
    const std::size_t N = shared.num_tx();
    const std::size_t M = shared.num_rx();
    const std::size_t L = shared.num_bins();
    require(a_tx.size() == N && a_rx.size() == M && c.size() == L,
            "range_angle_response: dimension mismatch");
    CVec q(N * M * L);
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t n = 0; n < N; ++n)
                q[(l * M + m) * N + n] =
                    a_tx[n] * a_rx[m] * (shared.g_tx(l, n) * shared.g_rx(l, m)) * c[l];
    return q;
}

enum class PhaseSource {
    model,   // regenerate linear phases at every scanned range (default)
    learned, // reuse the calibrated phase response where the scan offset is zero
};

/// Builds R * P atoms from a calibration estimate: for every calibrated
/// position and every scan offset, the phase response is regenerated at
/// r' = r_p + offset and combined with the learned steering vectors and
/// magnitude responses. Atoms are ordered position-major (all offsets of
/// position 0 first).
inline Dictionary build_dictionary(const CalibrationEstimate& est, const RVec& scan_offsets_m,
                                   const PhaseModel& model,
                                   PhaseSource phase_source = PhaseSource::model) {
    require(!scan_offsets_m.empty(), "build_dictionary: empty scan list");
    require(est.per_position.size() == est.positions.size(),
            "build_dictionary: estimate is missing position metadata");
    require(!est.per_position.empty(), "build_dictionary: empty calibration estimate");
    model.check();
    Dictionary dict;
    dict.num_tx = est.shared.num_tx();
    dict.num_rx = est.shared.num_rx();
    dict.num_bins = est.shared.num_bins();
    dict.atoms.reserve(est.per_position.size() * scan_offsets_m.size());
    dict.meta.reserve(dict.atoms.capacity());
    for (std::size_t p = 0; p < est.per_position.size(); ++p) {
        const PositionParams& pp = est.per_position[p];
        const TargetPosition& tp = est.positions[p];
        for (double offset : scan_offsets_m) {
            const double range = tp.range_m + offset;
            const CVec c = (phase_source == PhaseSource::learned && offset == 0.0)
                               ? pp.c
                               : phase_response(model, range, dict.num_bins);
            dict.atoms.push_back(range_angle_response(est.shared, pp.a_tx, pp.a_rx, c));
            dict.meta.push_back({p, range, tp.azimuth_rad, tp.elevation_rad});
        }
    }
    return dict;
}

} // namespace aircal

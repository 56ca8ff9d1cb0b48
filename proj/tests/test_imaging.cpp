#include <doctest.h>

#include <algorithm>
#include <set>

#include "test_support.hpp"

using namespace aircal;
using namespace testutil;

namespace {

/// Random dictionary whose pairwise atom coherence stays below the limit.
Dictionary random_dictionary(std::size_t count, std::size_t n, std::size_t m, std::size_t l,
                             double max_coherence, Philox& rng) {
    Dictionary dict;
    dict.num_tx = n;
    dict.num_rx = m;
    dict.num_bins = l;
    dict.atoms.resize(count);
    dict.meta.resize(count);
    const std::size_t dim = n * m * l;
    for (std::size_t p = 0; p < count; ++p) {
        dict.atoms[p] = random_cvec(dim, rng);
        dict.meta[p] = {p, 1.0 + 0.1 * double(p), 0.01 * double(p), -0.02 * double(p)};
    }
    auto coherence = [&](std::size_t a, std::size_t b) {
        return std::abs(inner_product(dict.atoms[a], dict.atoms[b])) /
               (frobenius_norm(dict.atoms[a]) * frobenius_norm(dict.atoms[b]));
    };
    for (int guard = 0; guard < 10000; ++guard) {
        double worst = 0;
        std::size_t wa = 0;
        for (std::size_t a = 0; a < count; ++a)
            for (std::size_t b = a + 1; b < count; ++b) {
                const double c = coherence(a, b);
                if (c > worst) {
                    worst = c;
                    wa = b;
                }
            }
        if (worst < max_coherence) return dict;
        dict.atoms[wa] = random_cvec(dim, rng);
    }
    FAIL("could not sample a low-coherence dictionary");
    return dict;
}

ComplexTensor4 scene_from_atoms(const Dictionary& dict, const std::vector<std::size_t>& support,
                                const std::vector<CVec>& gains, std::size_t T) {
    ComplexMatrix y4(T, dict.atom_length());
    for (std::size_t k = 0; k < support.size(); ++k)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < dict.atom_length(); ++j)
                y4(t, j) += gains[k][t] * dict.atoms[support[k]][j];
    return fold(y4, 4, Dims4{dict.num_tx, dict.num_rx, dict.num_bins, T});
}

/// Exhaustive best-K-subset least squares, the independent reference for the
/// greedy search on toy sizes.
std::pair<std::vector<std::size_t>, double> best_subset(const ComplexMatrix& y4,
                                                        const Dictionary& dict, std::size_t K) {
    std::vector<std::size_t> best;
    double best_res = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> idx(K);
    const std::size_t P = dict.count();
    const std::size_t T = y4.rows();
    const std::size_t D = y4.cols();

    std::vector<std::size_t> comb(K);
    auto eval = [&](const std::vector<std::size_t>& sel) {
        // Solve the joint LS via normal equations with full pivot-free
        // Gaussian elimination (K <= 3 keeps this trivial).
        const std::size_t k = sel.size();
        std::vector<std::vector<Complex>> g(k, std::vector<Complex>(k));
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b)
                g[a][b] = inner_product(dict.atoms[sel[a]], dict.atoms[sel[b]]);
        double res = 0;
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<Complex> rhs(k);
            for (std::size_t a = 0; a < k; ++a) {
                Complex s{};
                const Complex* q = dict.atoms[sel[a]].data();
                for (std::size_t j = 0; j < D; ++j) s += std::conj(q[j]) * y4(t, j);
                rhs[a] = s;
            }
            // Gaussian elimination on a copy of g.
            auto a_ = g;
            for (std::size_t c = 0; c < k; ++c) {
                for (std::size_t r = c + 1; r < k; ++r) {
                    const Complex f = a_[r][c] / a_[c][c];
                    for (std::size_t cc = c; cc < k; ++cc) a_[r][cc] -= f * a_[c][cc];
                    rhs[r] -= f * rhs[c];
                }
            }
            std::vector<Complex> x(k);
            for (std::size_t r = k; r-- > 0;) {
                Complex s = rhs[r];
                for (std::size_t cc = r + 1; cc < k; ++cc) s -= a_[r][cc] * x[cc];
                x[r] = s / a_[r][r];
            }
            for (std::size_t j = 0; j < D; ++j) {
                Complex v = y4(t, j);
                for (std::size_t a = 0; a < k; ++a) v -= x[a] * dict.atoms[sel[a]][j];
                res += std::norm(v);
            }
        }
        return res;
    };

    // Enumerate all K-subsets.
    std::vector<std::size_t> sel;
    std::function<void(std::size_t)> rec = [&](std::size_t start) {
        if (sel.size() == K) {
            const double r = eval(sel);
            if (r < best_res) {
                best_res = r;
                best = sel;
            }
            return;
        }
        for (std::size_t p = start; p < P; ++p) {
            sel.push_back(p);
            rec(p + 1);
            sel.pop_back();
        }
    };
    rec(0);
    (void)idx;
    (void)comb;
    return {best, best_res};
}

} // namespace

TEST_CASE("image: a single-atom scene is recovered in one selection") {
    Philox rng(70);
    const Dictionary dict = random_dictionary(12, 2, 3, 4, 0.6, rng);
    const std::size_t T = 3;
    const std::vector<std::size_t> support{5};
    const std::vector<CVec> gains{random_cvec(T, rng)};
    const ComplexTensor4 y = scene_from_atoms(dict, support, gains, T);

    OmpConfig cfg;
    cfg.eta = 1e-20;
    cfg.max_iter = 5;
    const ImageEstimate est = image(y, dict, cfg);
    REQUIRE(est.detections.size() == 1);
    CHECK(est.detections[0].atom_index == 5);
    CHECK(max_element_diff(est.detections[0].gains, gains[0]) < 1e-10);
    CHECK(est.residual_norms.back() < 1e-18);
}

TEST_CASE("image: three separated atoms recovered and matched by the subset oracle") {
    Philox rng(71);
    const Dictionary dict = random_dictionary(14, 2, 4, 6, 0.3, rng);
    const std::size_t T = 3;
    const std::vector<std::size_t> support{2, 7, 11};
    std::vector<CVec> gains;
    for (int k = 0; k < 3; ++k) {
        CVec h = random_cvec(T, rng);
        for (Complex& z : h) z *= (1.0 + 0.4 * k); // distinct magnitudes
        gains.push_back(h);
    }
    const ComplexTensor4 y = scene_from_atoms(dict, support, gains, T);

    OmpConfig cfg;
    cfg.eta = 1e-18;
    cfg.max_iter = 8;
    const ImageEstimate est = image(y, dict, cfg);
    REQUIRE(est.detections.size() == 3);
    std::set<std::size_t> got;
    for (const auto& d : est.detections) got.insert(d.atom_index);
    CHECK(got == std::set<std::size_t>(support.begin(), support.end()));
    for (const auto& d : est.detections) {
        const std::size_t k =
            std::find(support.begin(), support.end(), d.atom_index) - support.begin();
        CHECK(max_element_diff(d.gains, gains[k]) < 1e-8);
    }

    const auto [oracle_support, oracle_res] = best_subset(unfold(y, 4), dict, 3);
    CHECK(std::set<std::size_t>(oracle_support.begin(), oracle_support.end()) == got);
    CHECK(est.residual_norms.back() <= oracle_res + 1e-10);
}

TEST_CASE("image: zero tensor yields no detections") {
    Philox rng(72);
    const Dictionary dict = random_dictionary(6, 2, 2, 3, 0.7, rng);
    const ImageEstimate est = image(ComplexTensor4(2, 2, 3, 2), dict, OmpConfig{});
    CHECK(est.detections.empty());
    CHECK(est.residual_norms.size() == 1);
    CHECK(est.residual_norms[0] == 0.0);
}

TEST_CASE("image: dimension mismatch is rejected") {
    Philox rng(73);
    const Dictionary dict = random_dictionary(6, 2, 2, 3, 0.7, rng);
    CHECK_THROWS_AS(image(ComplexTensor4(2, 2, 4, 2), dict, OmpConfig{}), validation_error);
}

TEST_CASE("residual: empty selection, exact fit and direct evaluation") {
    Philox rng(74);
    const Dictionary dict = random_dictionary(5, 2, 2, 3, 0.8, rng);
    const std::size_t T = 2, D = dict.atom_length();
    const ComplexTensor4 y = scene_from_atoms(dict, {1}, {random_cvec(T, rng)}, T);
    const ComplexMatrix y4 = unfold(y, 4);

    const ComplexMatrix same = residual(y4, {}, {});
    CHECK(same == y4);

    OmpConfig cfg;
    cfg.eta = 1e-20;
    const ImageEstimate est = image(y, dict, cfg);
    REQUIRE(est.detections.size() == 1);
    const ComplexMatrix after =
        residual(y4, {dict.atoms[est.detections[0].atom_index]}, {est.detections[0].gains});
    CHECK(frobenius_norm(after) < 1e-9);

    // Random atoms/gains against the elementwise definition.
    const CVec q0 = random_cvec(D, rng), q1 = random_cvec(D, rng);
    const CVec h0 = random_cvec(T, rng), h1 = random_cvec(T, rng);
    const ComplexMatrix r = residual(y4, {q0, q1}, {h0, h1});
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < D; ++j) {
            const Complex want = y4(t, j) - h0[t] * q0[j] - h1[t] * q1[j];
            CHECK(std::abs(r(t, j) - want) < 1e-12);
        }

    CHECK_THROWS_AS(residual(y4, {q0}, {}), validation_error);
}

TEST_CASE("image: residual norms never increase and end orthogonal to selections") {
    Philox rng(75);
    const Dictionary dict = random_dictionary(16, 2, 3, 5, 0.5, rng);
    const std::size_t T = 3;
    ComplexTensor4 y = scene_from_atoms(
        dict, {1, 4, 9}, {random_cvec(T, rng), random_cvec(T, rng), random_cvec(T, rng)}, T);
    // Perturb so the scene is not exactly sparse.
    Philox noise(76);
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] += 0.01 * noise.complex_normal();

    OmpConfig cfg;
    cfg.max_iter = 6;
    const ImageEstimate est = image(y, dict, cfg);
    for (std::size_t i = 1; i < est.residual_norms.size(); ++i)
        CHECK(est.residual_norms[i] <= est.residual_norms[i - 1] * (1 + 1e-12));

    std::vector<CVec> atoms;
    std::vector<CVec> gains;
    for (const auto& d : est.detections) {
        atoms.push_back(dict.atoms[d.atom_index]);
        gains.push_back(d.gains);
    }
    const ComplexMatrix res = residual(unfold(y, 4), atoms, gains);
    const double rnorm = frobenius_norm(res);
    for (const auto& d : est.detections) {
        const CVec& q = dict.atoms[d.atom_index];
        double corr = 0;
        for (std::size_t t = 0; t < T; ++t) {
            Complex s{};
            for (std::size_t j = 0; j < q.size(); ++j) s += res(t, j) * std::conj(q[j]);
            corr += std::norm(s);
        }
        CHECK(std::sqrt(corr) / (rnorm * frobenius_norm(q)) < 1e-8);
    }
}

TEST_CASE("image: selection is invariant to positive atom rescaling") {
    Philox rng(77);
    Dictionary dict = random_dictionary(10, 2, 3, 4, 0.6, rng);
    const std::size_t T = 2;
    const ComplexTensor4 y =
        scene_from_atoms(dict, {3, 8}, {random_cvec(T, rng), random_cvec(T, rng)}, T);
    OmpConfig cfg;
    cfg.max_iter = 4;
    cfg.eta = 1e-18;
    const ImageEstimate base = image(y, dict, cfg);

    Dictionary scaled = dict;
    for (std::size_t p = 0; p < scaled.count(); ++p) {
        const double s = rng.uniform(0.1, 10.0);
        for (Complex& z : scaled.atoms[p]) z *= s;
    }
    const ImageEstimate rescaled = image(y, scaled, cfg);
    REQUIRE(base.detections.size() == rescaled.detections.size());
    for (std::size_t k = 0; k < base.detections.size(); ++k)
        CHECK(base.detections[k].atom_index == rescaled.detections[k].atom_index);
}

TEST_CASE("image: near-duplicate atoms trip the rank-deficiency guard") {
    Philox rng(78);
    const std::size_t D = 2 * 3 * 4, T = 2;
    Dictionary dict;
    dict.num_tx = 2;
    dict.num_rx = 3;
    dict.num_bins = 4;
    CVec q1 = random_cvec(D, rng);
    CVec spoiler = random_cvec(D, rng);
    CVec q2 = q1;
    for (std::size_t j = 0; j < D; ++j) q2[j] += 1e-9 * spoiler[j];
    dict.atoms = {q1, q2};
    dict.meta = {{0, 1.0, 0, 0}, {1, 1.0, 0, 0}};

    // Scene: q1 plus a small component the duplicate can still correlate with.
    ComplexMatrix y4(T, D);
    const CVec h = random_cvec(T, rng);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < D; ++j)
            y4(t, j) = h[t] * q1[j] + 1e-3 * spoiler[j] * Complex{double(t + 1), 0};
    const ComplexTensor4 y = fold(y4, 4, Dims4{2, 3, 4, T});

    OmpConfig cfg;
    cfg.max_iter = 5;
    const ImageEstimate est = image(y, dict, cfg);
    CHECK(est.gram_rank_deficient);
    CHECK(est.detections.size() == 1); // the duplicate was dropped again
}

TEST_CASE("threshold_and_project: floor, projections and angular accumulation") {
    ImageEstimate est;
    Detection strong;
    strong.atom_index = 0;
    strong.meta = {0, 2.0, 0.3, -0.1};
    strong.power = 1.0;
    Detection weak = strong;
    weak.atom_index = 1;
    weak.meta = {1, 2.2, -0.4, 0.2};
    weak.power = 0.01; // 20 dB below the peak
    est.detections = {strong, weak};

    OmpConfig cfg;
    cfg.power_floor_db = 10.0;
    Projections proj = threshold_and_project(est, cfg);
    REQUIRE(proj.xz.size() == 1);
    CHECK(proj.xz[0].x ==
          doctest::Approx(2.0 * std::sin(0.3) * std::cos(-0.1)).epsilon(1e-12));
    CHECK(proj.xz[0].z ==
          doctest::Approx(2.0 * std::cos(0.3) * std::cos(-0.1)).epsilon(1e-12));

    // With a 25 dB floor both survive.
    cfg.power_floor_db = 25.0;
    proj = threshold_and_project(est, cfg);
    CHECK(proj.xz.size() == 2);

    // Same direction at two ranges: one angular entry with summed power.
    Detection again = strong;
    again.atom_index = 2;
    again.meta.range_m = 2.4;
    again.power = 0.5;
    est.detections = {strong, again};
    cfg.power_floor_db = 10.0;
    proj = threshold_and_project(est, cfg);
    CHECK(proj.xz.size() == 2);
    REQUIRE(proj.angular.size() == 1);
    CHECK(proj.angular[0].power == doctest::Approx(1.5).epsilon(1e-12));

    // Single detection passes trivially; empty input gives empty output.
    est.detections = {strong};
    proj = threshold_and_project(est, cfg);
    CHECK(proj.xz.size() == 1);
    est.detections.clear();
    proj = threshold_and_project(est, cfg);
    CHECK(proj.xz.empty());
    CHECK(proj.angular.empty());
}

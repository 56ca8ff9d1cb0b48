#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "aircal/calibration.hpp"
#include "aircal/dictionary.hpp"
#include "aircal/imaging.hpp"
#include "aircal/benchmark.hpp"

namespace aircal {

// Binary containers are little-endian with fixed-width fields:
//   UCAL: magic "UCAL", u32 version, u32 N M L T P, then P position records
//         (range, azimuth, elevation as f64), then P tensors as interleaved
//         re/im f64 in (n,m,l,t) order with t fastest.
//   UDIC: magic "UDIC", u32 version, u32 N M L, u32 atom count, then per atom
//         the meta record (range, azimuth, elevation as f64) followed by the
//         interleaved re/im f64 atom data of length N*M*L.
//   UEST: magic "UEST", u32 version, u32 N M L T P, g_tx (L*N f64, bin-major),
//         g_rx (L*M f64), then P blocks: position record, a_tx, a_rx, c, h
//         (interleaved re/im f64).

namespace detail {

constexpr std::uint32_t kFormatVersion = 1;

class ByteWriter {
  public:
    explicit ByteWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw io_error("cannot open for writing: " + path);
        path_ = path;
    }

    void u32(std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        out_.write(reinterpret_cast<const char*>(b), 4);
    }

    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
        out_.write(reinterpret_cast<const char*>(b), 8);
    }

    void magic(const char (&m)[5]) { out_.write(m, 4); }

    void cplx(const Complex& z) {
        f64(z.real());
        f64(z.imag());
    }

    void close() {
        out_.flush();
        if (!out_) throw io_error("write failed: " + path_);
        out_.close();
    }

  private:
    std::ofstream out_;
    std::string path_;
};

class ByteReader {
  public:
    explicit ByteReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw io_error("cannot open for reading: " + path);
    }

    std::uint32_t u32(const char* section) {
        unsigned char b[4];
        read(b, 4, section);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }

    double f64(const char* section) {
        unsigned char b[8];
        read(b, 8, section);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }

    Complex cplx(const char* section) {
        const double re = f64(section);
        const double im = f64(section);
        return {re, im};
    }

    void expect_magic(const char (&m)[5], const char* format_name) {
        char got[4];
        read(reinterpret_cast<unsigned char*>(got), 4, "magic");
        if (std::memcmp(got, m, 4) != 0)
            throw io_error(path_ + ": not a " + format_name + " file (bad magic)");
    }

    void expect_version(const char* format_name) {
        const std::uint32_t v = u32("version");
        if (v != kFormatVersion)
            throw io_error(path_ + ": unsupported " + format_name + " version " + std::to_string(v));
    }

    void expect_eof(const char* format_name) {
        char extra;
        in_.read(&extra, 1);
        if (!in_.eof()) throw io_error(path_ + ": trailing bytes after " + format_name + " payload");
    }

  private:
    void read(unsigned char* dst, std::size_t n, const char* section) {
        in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw io_error(path_ + ": truncated file while reading " + section);
    }

    std::ifstream in_;
    std::string path_;
};

} // namespace detail

// --- calibration sets (UCAL) ------------------------------------------------

inline void write_calibration_file(const std::string& path, const CalibrationSet& set) {
    set.check();
    const auto [N, M, L, T] = set.dims();
    detail::ByteWriter w(path);
    w.magic("UCAL");
    w.u32(detail::kFormatVersion);
    w.u32(static_cast<std::uint32_t>(N));
    w.u32(static_cast<std::uint32_t>(M));
    w.u32(static_cast<std::uint32_t>(L));
    w.u32(static_cast<std::uint32_t>(T));
    w.u32(static_cast<std::uint32_t>(set.count()));
    for (const auto& pos : set.positions) {
        w.f64(pos.range_m);
        w.f64(pos.azimuth_rad);
        w.f64(pos.elevation_rad);
    }
    for (const auto& y : set.tensors)
        for (std::size_t i = 0; i < y.size(); ++i) w.cplx(y.data()[i]);
    w.close();
}

inline CalibrationSet read_calibration_file(const std::string& path) {
    detail::ByteReader r(path);
    r.expect_magic("UCAL", "UCAL");
    r.expect_version("UCAL");
    const std::size_t N = r.u32("header N");
    const std::size_t M = r.u32("header M");
    const std::size_t L = r.u32("header L");
    const std::size_t T = r.u32("header T");
    const std::size_t P = r.u32("header P");
    if (P == 0) throw validation_error(path + ": empty calibration set (P = 0)");
    if (N == 0 || M == 0 || L == 0 || T == 0)
        throw validation_error(path + ": zero tensor dimension in header");
    CalibrationSet set;
    set.positions.resize(P);
    for (std::size_t p = 0; p < P; ++p) {
        set.positions[p].index = p;
        set.positions[p].range_m = r.f64("position record");
        set.positions[p].azimuth_rad = r.f64("position record");
        set.positions[p].elevation_rad = r.f64("position record");
    }
    set.tensors.reserve(P);
    for (std::size_t p = 0; p < P; ++p) {
        ComplexTensor4 y(N, M, L, T);
        for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = r.cplx("tensor data");
        set.tensors.push_back(std::move(y));
    }
    r.expect_eof("UCAL");
    return set;
}

// --- dictionaries (UDIC) ------------------------------------------------------

inline void write_dictionary_file(const std::string& path, const Dictionary& dict) {
    dict.check();
    detail::ByteWriter w(path);
    w.magic("UDIC");
    w.u32(detail::kFormatVersion);
    w.u32(static_cast<std::uint32_t>(dict.num_tx));
    w.u32(static_cast<std::uint32_t>(dict.num_rx));
    w.u32(static_cast<std::uint32_t>(dict.num_bins));
    w.u32(static_cast<std::uint32_t>(dict.count()));
    for (std::size_t p = 0; p < dict.count(); ++p) {
        w.f64(dict.meta[p].range_m);
        w.f64(dict.meta[p].azimuth_rad);
        w.f64(dict.meta[p].elevation_rad);
        for (const Complex& z : dict.atoms[p]) w.cplx(z);
    }
    w.close();
}

inline Dictionary read_dictionary_file(const std::string& path) {
    detail::ByteReader r(path);
    r.expect_magic("UDIC", "UDIC");
    r.expect_version("UDIC");
    Dictionary dict;
    dict.num_tx = r.u32("header N");
    dict.num_rx = r.u32("header M");
    dict.num_bins = r.u32("header L");
    const std::size_t count = r.u32("header atom count");
    dict.atoms.reserve(count);
    dict.meta.reserve(count);
    for (std::size_t p = 0; p < count; ++p) {
        DictionaryAtomMeta meta;
        meta.source_index = p; // source position indices are not persisted
        meta.range_m = r.f64("atom meta");
        meta.azimuth_rad = r.f64("atom meta");
        meta.elevation_rad = r.f64("atom meta");
        CVec atom(dict.atom_length());
        for (Complex& z : atom) z = r.cplx("atom data");
        dict.meta.push_back(meta);
        dict.atoms.push_back(std::move(atom));
    }
    r.expect_eof("UDIC");
    dict.check();
    return dict;
}

// --- calibration estimates (UEST) --------------------------------------------

inline void write_estimate_file(const std::string& path, const CalibrationEstimate& est) {
    const std::size_t N = est.shared.num_tx();
    const std::size_t M = est.shared.num_rx();
    const std::size_t L = est.shared.num_bins();
    const std::size_t P = est.per_position.size();
    require(P >= 1 && est.positions.size() == P, "write_estimate_file: inconsistent estimate");
    const std::size_t T = est.per_position.front().h.size();
    detail::ByteWriter w(path);
    w.magic("UEST");
    w.u32(detail::kFormatVersion);
    w.u32(static_cast<std::uint32_t>(N));
    w.u32(static_cast<std::uint32_t>(M));
    w.u32(static_cast<std::uint32_t>(L));
    w.u32(static_cast<std::uint32_t>(T));
    w.u32(static_cast<std::uint32_t>(P));
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t n = 0; n < N; ++n) w.f64(est.shared.g_tx(l, n));
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t m = 0; m < M; ++m) w.f64(est.shared.g_rx(l, m));
    for (std::size_t p = 0; p < P; ++p) {
        w.f64(est.positions[p].range_m);
        w.f64(est.positions[p].azimuth_rad);
        w.f64(est.positions[p].elevation_rad);
        for (const Complex& z : est.per_position[p].a_tx) w.cplx(z);
        for (const Complex& z : est.per_position[p].a_rx) w.cplx(z);
        for (const Complex& z : est.per_position[p].c) w.cplx(z);
        for (const Complex& z : est.per_position[p].h) w.cplx(z);
    }
    w.close();
}

inline CalibrationEstimate read_estimate_file(const std::string& path) {
    detail::ByteReader r(path);
    r.expect_magic("UEST", "UEST");
    r.expect_version("UEST");
    const std::size_t N = r.u32("header N");
    const std::size_t M = r.u32("header M");
    const std::size_t L = r.u32("header L");
    const std::size_t T = r.u32("header T");
    const std::size_t P = r.u32("header P");
    if (P == 0) throw validation_error(path + ": empty estimate (P = 0)");
    CalibrationEstimate est;
    est.shared.g_tx = RealMatrix(L, N);
    est.shared.g_rx = RealMatrix(L, M);
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t n = 0; n < N; ++n) est.shared.g_tx(l, n) = r.f64("g_tx data");
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t m = 0; m < M; ++m) est.shared.g_rx(l, m) = r.f64("g_rx data");
    est.positions.resize(P);
    est.per_position.resize(P);
    for (std::size_t p = 0; p < P; ++p) {
        est.positions[p].index = p;
        est.positions[p].range_m = r.f64("position record");
        est.positions[p].azimuth_rad = r.f64("position record");
        est.positions[p].elevation_rad = r.f64("position record");
        auto& pp = est.per_position[p];
        pp.a_tx.resize(N);
        pp.a_rx.resize(M);
        pp.c.resize(L);
        pp.h.resize(T);
        for (Complex& z : pp.a_tx) z = r.cplx("a_tx data");
        for (Complex& z : pp.a_rx) z = r.cplx("a_rx data");
        for (Complex& z : pp.c) z = r.cplx("c data");
        for (Complex& z : pp.h) z = r.cplx("h data");
    }
    r.expect_eof("UEST");
    return est;
}

// --- CSV emission -------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::ofstream open_text(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    return out;
}

} // namespace detail

inline void write_trace_csv(const std::string& path, const CalibrationEstimate& est) {
    auto out = detail::open_text(path);
    const bool blocks = !est.block_trace.empty();
    out << "iteration,f_rel";
    if (blocks) out << ",f_after_a_tx,f_after_a_rx,f_after_c,f_after_g_tx,f_after_g_rx,f_after_h";
    out << "\n";
    for (std::size_t i = 0; i < est.trace.size(); ++i) {
        out << i << "," << detail::fmt_double(est.trace[i]);
        if (blocks) {
            if (i == 0) {
                out << ",,,,,,"; // no block updates before the first iteration
            } else {
                const BlockCosts& b = est.block_trace[i - 1];
                out << "," << detail::fmt_double(b.after_a_tx) << "," << detail::fmt_double(b.after_a_rx)
                    << "," << detail::fmt_double(b.after_c) << "," << detail::fmt_double(b.after_g_tx)
                    << "," << detail::fmt_double(b.after_g_rx) << "," << detail::fmt_double(b.after_h);
            }
        }
        out << "\n";
    }
    if (!out) throw io_error("write failed: " + path);
}

inline void write_detections_csv(const std::string& path, const ImageEstimate& est) {
    auto out = detail::open_text(path);
    out << "iteration,atom,range_m,azimuth_deg,elevation_deg,power,power_db\n";
    constexpr double rad2deg = 180.0 / std::numbers::pi;
    for (std::size_t i = 0; i < est.detections.size(); ++i) {
        const Detection& d = est.detections[i];
        const double db = d.power > 0 ? 10.0 * std::log10(d.power) : -std::numeric_limits<double>::infinity();
        out << i << "," << d.atom_index << "," << detail::fmt_double(d.meta.range_m) << ","
            << detail::fmt_double(d.meta.azimuth_rad * rad2deg) << ","
            << detail::fmt_double(d.meta.elevation_rad * rad2deg) << ","
            << detail::fmt_double(d.power) << "," << detail::fmt_double(db) << "\n";
    }
    if (!out) throw io_error("write failed: " + path);
}

inline void write_projection_csvs(const std::string& xz_path, const std::string& angular_path,
                                  const Projections& proj) {
    {
        auto out = detail::open_text(xz_path);
        out << "x_m,z_m,power\n";
        for (const auto& p : proj.xz)
            out << detail::fmt_double(p.x) << "," << detail::fmt_double(p.z) << ","
                << detail::fmt_double(p.power) << "\n";
        if (!out) throw io_error("write failed: " + xz_path);
    }
    {
        auto out = detail::open_text(angular_path);
        out << "azimuth_deg,elevation_deg,power\n";
        constexpr double rad2deg = 180.0 / std::numbers::pi;
        for (const auto& p : proj.angular)
            out << detail::fmt_double(p.azimuth_rad * rad2deg) << ","
                << detail::fmt_double(p.elevation_rad * rad2deg) << ","
                << detail::fmt_double(p.power) << "\n";
        if (!out) throw io_error("write failed: " + angular_path);
    }
}

inline void write_sweep_csv(const std::string& path, const MetricReport& report) {
    auto out = detail::open_text(path);
    out << "snr_db,delta,method,trial,mcncc\n";
    for (const auto& row : report.rows)
        out << detail::fmt_double(row.snr_db) << "," << detail::fmt_double(row.delta) << ","
            << row.method << "," << row.trial << "," << detail::fmt_double(row.mcncc) << "\n";
    if (!out) throw io_error("write failed: " + path);
}

} // namespace aircal

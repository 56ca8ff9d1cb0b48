#pragma once

#include <chrono>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "aircal/io.hpp"

namespace aircal::cli {

using nlohmann::json;

constexpr const char* kToolName = "aircal";
constexpr const char* kToolVersion = "0.1.0";

namespace detail {

class Stopwatch {
  public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline json manifest_base(const std::string& command, std::uint64_t seed, const json& config) {
    return json{{"tool", kToolName},
                {"version", kToolVersion},
                {"command", command},
                {"seed", seed},
                {"config", config}};
}

inline void write_manifest(const std::string& path, const json& manifest) {
    auto out = aircal::detail::open_text(path);
    out << manifest.dump(2) << "\n";
    if (!out) throw io_error("write failed: " + path);
}

inline RVec centered_offsets(std::size_t count, double step) {
    require(count >= 1, "scan range count must be >= 1");
    RVec offsets(count);
    const double mid = static_cast<double>(count - 1) / 2.0;
    for (std::size_t k = 0; k < count; ++k) offsets[k] = (static_cast<double>(k) - mid) * step;
    return offsets;
}

} // namespace detail

// --- simulate ---------------------------------------------------------------

struct SceneTarget {
    std::size_t position = 0; // calibration grid index
    double range_offset_m = 0;
    double amplitude = 1.0;
};

struct SimulateOptions {
    std::size_t grid_azimuth = 8;   // calibration points per azimuth row
    std::size_t grid_elevation = 6; // rows; P = grid_azimuth * grid_elevation
    std::size_t num_tx = 2;
    std::size_t num_rx = 8;
    std::size_t num_bins = 24;
    std::size_t num_snapshots = 4;
    double delta = 0.5;
    double snr_db = std::numeric_limits<double>::infinity(); // no noise by default
    double range_m = 1.2;       // constant calibration range
    double fov_deg = 40.0;      // grid spans +-fov in both angles
    std::string phase_model = "linear"; // "linear" or "random"
    double r0_m = 0.1;          // true system offset (linear mode)
    double fs_hz = 195e3;
    std::size_t l_dft = 4096;
    double c_sound = 343.0;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    std::string output;

    std::vector<SceneTarget> scene_targets;
    double scene_snr_db = std::numeric_limits<double>::infinity();
    std::string scene_output;

    json echo() const {
        return json{{"grid_azimuth", grid_azimuth},
                    {"grid_elevation", grid_elevation},
                    {"N", num_tx},
                    {"M", num_rx},
                    {"L", num_bins},
                    {"T", num_snapshots},
                    {"delta", delta},
                    {"snr_db", std::isfinite(snr_db) ? json(snr_db) : json("inf")},
                    {"range_m", range_m},
                    {"fov_deg", fov_deg},
                    {"phase_model", phase_model},
                    {"r0_m", r0_m},
                    {"fs_hz", fs_hz},
                    {"l_dft", l_dft},
                    {"c_sound", c_sound},
                    {"scene_snr_db", std::isfinite(scene_snr_db) ? json(scene_snr_db) : json("inf")},
                    {"scene_output", scene_output},
                    {"output", output}};
    }
};

/// Generates a calibration set on an angular grid at constant range, writes it
/// as a UCAL file and optionally synthesizes a multi-target scene tensor from
/// the same ground truth. Returns the manifest.
inline json cmd_simulate(const SimulateOptions& opts) {
    detail::Stopwatch clock;
    require(!opts.output.empty(), "simulate: output path required");
    require(opts.phase_model == "linear" || opts.phase_model == "random",
            "simulate: phase model must be 'linear' or 'random'");
    require(opts.grid_azimuth >= 1 && opts.grid_elevation >= 1, "simulate: empty grid");
    const std::size_t P = opts.grid_azimuth * opts.grid_elevation;

    Philox truth_rng(opts.seed, 0);
    Philox noise_rng(opts.seed, 1);
    Truth truth = generate_truth(P, opts.num_tx, opts.num_rx, opts.num_bins, opts.num_snapshots,
                                 opts.delta, truth_rng, /*canonicalize_out=*/false);

    const PhaseModel model =
        PhaseModel::from_sampling(opts.fs_hz, opts.l_dft, opts.c_sound, opts.r0_m);
    CalibrationSet set;
    set.positions.resize(P);
    const double fov = opts.fov_deg * std::numbers::pi / 180.0;
    for (std::size_t ie = 0; ie < opts.grid_elevation; ++ie)
        for (std::size_t ia = 0; ia < opts.grid_azimuth; ++ia) {
            const std::size_t p = ie * opts.grid_azimuth + ia;
            auto& pos = set.positions[p];
            pos.index = p;
            pos.range_m = opts.range_m;
            pos.azimuth_rad = opts.grid_azimuth == 1
                                  ? 0.0
                                  : -fov + 2.0 * fov * static_cast<double>(ia) /
                                               static_cast<double>(opts.grid_azimuth - 1);
            pos.elevation_rad = opts.grid_elevation == 1
                                    ? 0.0
                                    : -fov + 2.0 * fov * static_cast<double>(ie) /
                                                 static_cast<double>(opts.grid_elevation - 1);
        }
    if (opts.phase_model == "linear")
        for (std::size_t p = 0; p < P; ++p)
            truth.per_position[p].c = phase_response(model, set.positions[p].range_m, opts.num_bins);
    canonicalize(truth.shared, truth.per_position);

    set.tensors.reserve(P);
    for (std::size_t p = 0; p < P; ++p) {
        ComplexTensor4 y = synthesize(truth.shared, truth.per_position[p]);
        if (std::isfinite(opts.snr_db)) y = add_noise(y, opts.snr_db, noise_rng);
        set.tensors.push_back(std::move(y));
    }
    write_calibration_file(opts.output, set);

    json manifest = detail::manifest_base("simulate", opts.seed, opts.echo());
    manifest["outputs"] = json::array({opts.output});
    manifest["positions"] = P;

    if (!opts.scene_targets.empty()) {
        require(!opts.scene_output.empty(), "simulate: scene output path required");
        require(opts.phase_model == "linear", "simulate: scenes need the linear phase model");
        Philox scene_rng(opts.seed, 2);
        ComplexTensor4 scene(opts.num_tx, opts.num_rx, opts.num_bins, opts.num_snapshots);
        json truth_targets = json::array();
        for (const SceneTarget& tgt : opts.scene_targets) {
            require(tgt.position < P, "simulate: scene target index out of range");
            const auto& pos = set.positions[tgt.position];
            const double range = pos.range_m + tgt.range_offset_m;
            const CVec c = phase_response(model, range, opts.num_bins);
            const CVec q = range_angle_response(truth.shared, truth.per_position[tgt.position].a_tx,
                                                truth.per_position[tgt.position].a_rx, c);
            CVec gains(opts.num_snapshots);
            for (Complex& z : gains) z = tgt.amplitude * scene_rng.unit_phase();
            // Accumulate q (o) h in tensor layout; q is in mode-4 column order.
            for (std::size_t l = 0; l < opts.num_bins; ++l)
                for (std::size_t m = 0; m < opts.num_rx; ++m)
                    for (std::size_t n = 0; n < opts.num_tx; ++n) {
                        const Complex a = q[(l * opts.num_rx + m) * opts.num_tx + n];
                        for (std::size_t t = 0; t < opts.num_snapshots; ++t)
                            scene(n, m, l, t) += a * gains[t];
                    }
            truth_targets.push_back(json{{"position", tgt.position},
                                         {"range_m", range},
                                         {"azimuth_rad", pos.azimuth_rad},
                                         {"elevation_rad", pos.elevation_rad},
                                         {"amplitude", tgt.amplitude}});
        }
        if (std::isfinite(opts.scene_snr_db)) scene = add_noise(scene, opts.scene_snr_db, scene_rng);
        CalibrationSet scene_set;
        scene_set.tensors.push_back(std::move(scene));
        scene_set.positions.push_back(TargetPosition{});
        write_calibration_file(opts.scene_output, scene_set);
        manifest["outputs"].push_back(opts.scene_output);
        manifest["scene_truth"] = truth_targets;
    }

    manifest["wall_time_s"] = clock.seconds();
    detail::write_manifest(opts.output + ".manifest.json", manifest);
    return manifest;
}

// --- calibrate ----------------------------------------------------------------

struct CalibrateOptions {
    std::string input;
    std::string output;       // UEST path; trace goes to output + ".trace.csv"
    BcdConfig bcd;
    std::uint64_t seed = 0;   // recorded only; calibration is deterministic

    json echo() const {
        return json{{"input", input},
                    {"output", output},
                    {"epsilon", bcd.epsilon},
                    {"tol", bcd.tol},
                    {"max_iter", bcd.max_iter},
                    {"deterministic", bcd.deterministic},
                    {"threads", bcd.threads},
                    {"track_block_costs", bcd.track_block_costs}};
    }
};

inline json cmd_calibrate(const CalibrateOptions& opts) {
    detail::Stopwatch clock;
    require(!opts.input.empty() && !opts.output.empty(), "calibrate: input and output required");
    const CalibrationSet set = read_calibration_file(opts.input);
    const CalibrationEstimate est = calibrate(set, opts.bcd);
    write_estimate_file(opts.output, est);
    const std::string trace_path = opts.output + ".trace.csv";
    write_trace_csv(trace_path, est);

    json manifest = detail::manifest_base("calibrate", opts.seed, opts.echo());
    manifest["outputs"] = json::array({opts.output, trace_path});
    manifest["final_f_rel"] = est.final_cost();
    manifest["iterations"] = est.diagnostics.iterations;
    manifest["converged"] = est.diagnostics.converged;
    manifest["guarded_updates"] = est.diagnostics.guarded_updates;
    manifest["excluded_positions"] = est.diagnostics.excluded_positions;
    manifest["wall_time_s"] = clock.seconds();
    detail::write_manifest(opts.output + ".manifest.json", manifest);
    return manifest;
}

// --- dictionary -----------------------------------------------------------------

struct DictionaryOptions {
    std::string input;  // UEST
    std::string output; // UDIC
    std::size_t scan_count = 5;
    double scan_step_m = 0.034; // 0.2 * half range resolution at a 1 ms burst
    double fs_hz = 195e3;
    std::size_t l_dft = 4096;
    double c_sound = 343.0;
    bool use_learned_phases = false; // reuse calibrated phases at offset zero
    bool r0_override_set = false;
    double r0_override_m = 0.0;

    json echo() const {
        return json{{"input", input},
                    {"output", output},
                    {"scan_count", scan_count},
                    {"scan_step_m", scan_step_m},
                    {"fs_hz", fs_hz},
                    {"l_dft", l_dft},
                    {"c_sound", c_sound},
                    {"use_learned_phases", use_learned_phases},
                    {"r0_override_set", r0_override_set},
                    {"r0_override_m", r0_override_m}};
    }
};

inline json cmd_dictionary(const DictionaryOptions& opts) {
    detail::Stopwatch clock;
    require(!opts.input.empty() && !opts.output.empty(), "dictionary: input and output required");
    const CalibrationEstimate est = read_estimate_file(opts.input);

    PhaseModel model = PhaseModel::from_sampling(opts.fs_hz, opts.l_dft, opts.c_sound);
    double r0 = 0;
    if (opts.r0_override_set) {
        r0 = opts.r0_override_m;
    } else {
        std::vector<CVec> phases;
        RVec ranges;
        phases.reserve(est.per_position.size());
        for (std::size_t p = 0; p < est.per_position.size(); ++p) {
            phases.push_back(est.per_position[p].c);
            ranges.push_back(est.positions[p].range_m);
        }
        r0 = estimate_r0(phases, ranges, model);
    }
    model.r0 = r0;

    const RVec offsets = detail::centered_offsets(opts.scan_count, opts.scan_step_m);
    const Dictionary dict = build_dictionary(
        est, offsets, model, opts.use_learned_phases ? PhaseSource::learned : PhaseSource::model);
    write_dictionary_file(opts.output, dict);

    json manifest = detail::manifest_base("dictionary", 0, opts.echo());
    manifest["outputs"] = json::array({opts.output});
    manifest["r0_m"] = r0;
    manifest["atoms"] = dict.count();
    manifest["scan_offsets_m"] = offsets;
    manifest["wall_time_s"] = clock.seconds();
    detail::write_manifest(opts.output + ".manifest.json", manifest);
    return manifest;
}

// --- image ------------------------------------------------------------------------

struct ImageOptions {
    std::string input;      // UCAL holding the scene tensor (first position)
    std::string dictionary; // UDIC
    std::string output_prefix;
    OmpConfig omp;

    json echo() const {
        return json{{"input", input},
                    {"dictionary", dictionary},
                    {"output_prefix", output_prefix},
                    {"eta", omp.eta},
                    {"max_iter", omp.max_iter},
                    {"power_floor_db", omp.power_floor_db},
                    {"threads", omp.threads}};
    }
};

inline json cmd_image(const ImageOptions& opts) {
    detail::Stopwatch clock;
    require(!opts.input.empty() && !opts.dictionary.empty() && !opts.output_prefix.empty(),
            "image: input, dictionary and output prefix required");
    const CalibrationSet scene = read_calibration_file(opts.input);
    const Dictionary dict = read_dictionary_file(opts.dictionary);
    const ImageEstimate est = image(scene.tensors.front(), dict, opts.omp);
    const Projections proj = threshold_and_project(est, opts.omp);

    const std::string det_path = opts.output_prefix + "detections.csv";
    const std::string xz_path = opts.output_prefix + "xz.csv";
    const std::string ang_path = opts.output_prefix + "angular.csv";
    write_detections_csv(det_path, est);
    write_projection_csvs(xz_path, ang_path, proj);

    json manifest = detail::manifest_base("image", 0, opts.echo());
    manifest["outputs"] = json::array({det_path, xz_path, ang_path});
    manifest["detections"] = est.detections.size();
    manifest["kept_after_floor"] = proj.xz.size();
    manifest["residual_norms"] = est.residual_norms;
    manifest["gram_rank_deficient"] = est.gram_rank_deficient;
    manifest["wall_time_s"] = clock.seconds();
    detail::write_manifest(opts.output_prefix + "manifest.json", manifest);
    return manifest;
}

// --- eval -------------------------------------------------------------------------

struct EvalOptions {
    SimConfig sim;            // desk-scale defaults
    bool full_scale = false;  // P=250, M=60, 100 trials; documented multi-hour run
    std::string output_prefix;

    json echo() const {
        json grid = json::array();
        for (double s : sim.snr_db_grid) grid.push_back(s);
        json deltas = json::array();
        for (double d : sim.deltas) deltas.push_back(d);
        return json{{"P", sim.num_positions}, {"N", sim.num_tx},     {"M", sim.num_rx},
                    {"L", sim.num_bins},      {"T", sim.num_snapshots}, {"deltas", deltas},
                    {"snr_db_grid", grid},    {"n_trials", sim.n_trials}, {"seed", sim.seed},
                    {"full_scale", full_scale}, {"threads", sim.threads},
                    {"output_prefix", output_prefix}};
    }
};

inline json cmd_eval(EvalOptions opts) {
    detail::Stopwatch clock;
    require(!opts.output_prefix.empty(), "eval: output prefix required");
    if (opts.full_scale) {
        opts.sim.num_positions = 250;
        opts.sim.num_rx = 60;
        opts.sim.n_trials = 100;
    }
    const MetricReport report = run_sweep(opts.sim);

    const std::string csv_path = opts.output_prefix + "sweep.csv";
    write_sweep_csv(csv_path, report);

    json summary;
    summary["seed"] = report.seed;
    summary["cells"] = json::array();
    for (const auto& cell : report.aggregates)
        summary["cells"].push_back(json{{"snr_db", cell.snr_db},
                                        {"delta", cell.delta},
                                        {"method", cell.method},
                                        {"mean_mcncc", cell.mean_mcncc}});
    const std::string summary_path = opts.output_prefix + "summary.json";
    detail::write_manifest(summary_path, summary);

    json manifest = detail::manifest_base("eval", opts.sim.seed, opts.echo());
    manifest["outputs"] = json::array({csv_path, summary_path});
    manifest["rows"] = report.rows.size();
    manifest["wall_time_s"] = clock.seconds();
    detail::write_manifest(opts.output_prefix + "manifest.json", manifest);
    return manifest;
}

/// Parses a scene target list of the form "pos@offset[@amplitude];...".
inline std::vector<SceneTarget> parse_scene_targets(const std::string& spec) {
    std::vector<SceneTarget> targets;
    if (spec.empty()) return targets;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ';')) {
        if (item.empty()) continue;
        SceneTarget tgt;
        std::stringstream fields(item);
        std::string field;
        int idx = 0;
        while (std::getline(fields, field, '@')) {
            try {
                if (idx == 0) tgt.position = static_cast<std::size_t>(std::stoull(field));
                else if (idx == 1) tgt.range_offset_m = std::stod(field);
                else if (idx == 2) tgt.amplitude = std::stod(field);
                else throw validation_error("scene target has too many fields: " + item);
            } catch (const std::invalid_argument&) {
                throw validation_error("malformed scene target: " + item);
            } catch (const std::out_of_range&) {
                throw validation_error("malformed scene target: " + item);
            }
            ++idx;
        }
        require(idx >= 2, "scene target needs at least pos@offset: " + item);
        targets.push_back(tgt);
    }
    return targets;
}

} // namespace aircal::cli

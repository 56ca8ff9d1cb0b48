// Command-line front end for the array calibration and imaging pipeline:
//   simulate    synthesize a calibration set (and optionally a test scene)
//   calibrate   fit the coupled tensor model to a calibration set
//   dictionary  build the range-angle dictionary from a calibration estimate
//   image       localize targets in a scene tensor via matching pursuit
//   eval        Monte Carlo SNR sweep against the rank-1 CPD baseline
//
// Exit codes: 0 ok, 1 validation error, 2 I/O error, 3 numerical failure.

#include <cstdio>
#include <limits>

#include <CLI11.hpp>

#include "aircal/commands.hpp"
#include "aircal/parallel.hpp"

namespace {

struct CommonFlags {
    std::uint64_t seed = 1;
    bool deterministic = true;
    std::size_t threads = aircal::default_threads();
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->set_config("--config");
    cmd->add_option("--seed", flags.seed, "Random seed");
    cmd->add_flag("--deterministic,!--no-deterministic", flags.deterministic,
                  "Fixed reduction order (results are reproducible either way)");
    cmd->add_option("--threads", flags.threads, "Worker threads");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coupled tensor calibration and sparse 3D imaging for ultrasonic MIMO arrays"};
    app.require_subcommand(1);

    CommonFlags flags;

    aircal::cli::SimulateOptions sim;
    std::string scene_spec;
    auto* cmd_sim = app.add_subcommand("simulate", "Synthesize a calibration set");
    add_common(cmd_sim, flags);
    cmd_sim->add_option("--grid-az", sim.grid_azimuth, "Calibration grid columns (azimuth)");
    cmd_sim->add_option("--grid-el", sim.grid_elevation, "Calibration grid rows (elevation)");
    cmd_sim->add_option("--ntx,-N", sim.num_tx, "Transmitters");
    cmd_sim->add_option("--nrx,-M", sim.num_rx, "Receivers");
    cmd_sim->add_option("--bins,-L", sim.num_bins, "Frequency bins");
    cmd_sim->add_option("--snapshots,-T", sim.num_snapshots, "Snapshots per position");
    cmd_sim->add_option("--delta", sim.delta, "Magnitude response spread in [0,1)");
    cmd_sim->add_option("--snr", sim.snr_db, "Calibration SNR in dB (omit for noise-free)");
    cmd_sim->add_option("--range", sim.range_m, "Calibration range in m");
    cmd_sim->add_option("--fov", sim.fov_deg, "Grid half-width in degrees");
    cmd_sim->add_option("--phase-model", sim.phase_model, "'linear' or 'random'");
    cmd_sim->add_option("--r0", sim.r0_m, "True system range offset in m");
    cmd_sim->add_option("--fs", sim.fs_hz, "Sampling frequency in Hz");
    cmd_sim->add_option("--ldft", sim.l_dft, "DFT length in samples");
    cmd_sim->add_option("--csound", sim.c_sound, "Speed of sound in m/s");
    cmd_sim->add_option("--scene-targets", scene_spec,
                        "Scene spec 'pos@offset[@amp];...' (grid index, range offset m)");
    cmd_sim->add_option("--scene-snr", sim.scene_snr_db, "Scene SNR in dB");
    cmd_sim->add_option("--scene-out", sim.scene_output, "Scene UCAL output path");
    cmd_sim->add_option("--output,-o", sim.output, "Calibration UCAL output path")->required();

    aircal::cli::CalibrateOptions cal;
    auto* cmd_cal = app.add_subcommand("calibrate", "Fit the coupled tensor model");
    add_common(cmd_cal, flags);
    cmd_cal->add_option("--input,-i", cal.input, "Calibration UCAL path")->required();
    cmd_cal->add_option("--output,-o", cal.output, "Estimate UEST output path")->required();
    cmd_cal->add_option("--epsilon", cal.bcd.epsilon, "Magnitude response lower bound");
    cmd_cal->add_option("--tol", cal.bcd.tol, "Stop when f_rel decreases by at most this");
    cmd_cal->add_option("--max-iter", cal.bcd.max_iter, "Iteration budget");
    cmd_cal->add_flag("--trace-blocks", cal.bcd.track_block_costs,
                      "Record the cost after every block update");

    aircal::cli::DictionaryOptions dic;
    auto* cmd_dic = app.add_subcommand("dictionary", "Build the range-angle dictionary");
    add_common(cmd_dic, flags);
    cmd_dic->add_option("--input,-i", dic.input, "Estimate UEST path")->required();
    cmd_dic->add_option("--output,-o", dic.output, "Dictionary UDIC output path")->required();
    cmd_dic->add_option("--scan-count", dic.scan_count, "Number of scan ranges per position");
    cmd_dic->add_option("--scan-step", dic.scan_step_m, "Scan range spacing in m");
    cmd_dic->add_option("--fs", dic.fs_hz, "Sampling frequency in Hz");
    cmd_dic->add_option("--ldft", dic.l_dft, "DFT length in samples");
    cmd_dic->add_option("--csound", dic.c_sound, "Speed of sound in m/s");
    cmd_dic->add_flag("--learned-phases", dic.use_learned_phases,
                      "Reuse calibrated phases at the zero scan offset");
    auto* r0_opt = cmd_dic->add_option("--r0", dic.r0_override_m,
                                       "Skip offset estimation and use this value (m)");

    aircal::cli::ImageOptions img;
    auto* cmd_img = app.add_subcommand("image", "Localize targets in a scene tensor");
    add_common(cmd_img, flags);
    cmd_img->add_option("--input,-i", img.input, "Scene UCAL path")->required();
    cmd_img->add_option("--dictionary,-d", img.dictionary, "Dictionary UDIC path")->required();
    cmd_img->add_option("--output,-o", img.output_prefix, "Output prefix for CSV files")->required();
    cmd_img->add_option("--eta", img.omp.eta, "Residual threshold (squared norm)");
    cmd_img->add_option("--max-iter", img.omp.max_iter, "Selection budget");
    cmd_img->add_option("--power-floor", img.omp.power_floor_db, "Power floor below peak in dB");

    aircal::cli::EvalOptions ev;
    auto* cmd_ev = app.add_subcommand("eval", "Monte Carlo SNR sweep vs. rank-1 CPD");
    add_common(cmd_ev, flags);
    cmd_ev->add_option("--positions,-P", ev.sim.num_positions, "Calibration positions");
    cmd_ev->add_option("--ntx,-N", ev.sim.num_tx, "Transmitters");
    cmd_ev->add_option("--nrx,-M", ev.sim.num_rx, "Receivers");
    cmd_ev->add_option("--bins,-L", ev.sim.num_bins, "Frequency bins");
    cmd_ev->add_option("--snapshots,-T", ev.sim.num_snapshots, "Snapshots");
    cmd_ev->add_option("--deltas", ev.sim.deltas, "Magnitude response spreads");
    cmd_ev->add_option("--snr-grid", ev.sim.snr_db_grid, "SNR grid in dB");
    cmd_ev->add_option("--trials", ev.sim.n_trials, "Monte Carlo trials per cell");
    cmd_ev->add_option("--tol", ev.sim.bcd.tol, "Solver stopping threshold");
    cmd_ev->add_flag("--full-scale", ev.full_scale,
                     "P=250, M=60, 100 trials (multi-hour run)");
    cmd_ev->add_option("--output,-o", ev.output_prefix, "Output prefix")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (cmd_sim->parsed()) {
            sim.seed = flags.seed;
            sim.threads = flags.threads;
            sim.scene_targets = aircal::cli::parse_scene_targets(scene_spec);
            aircal::cli::cmd_simulate(sim);
        } else if (cmd_cal->parsed()) {
            cal.seed = flags.seed;
            cal.bcd.deterministic = flags.deterministic;
            cal.bcd.threads = flags.threads;
            aircal::cli::cmd_calibrate(cal);
        } else if (cmd_dic->parsed()) {
            dic.r0_override_set = r0_opt->count() > 0;
            aircal::cli::cmd_dictionary(dic);
        } else if (cmd_img->parsed()) {
            img.omp.threads = flags.threads;
            aircal::cli::cmd_image(img);
        } else if (cmd_ev->parsed()) {
            ev.sim.seed = flags.seed;
            ev.sim.threads = flags.threads;
            ev.sim.bcd.deterministic = flags.deterministic;
            aircal::cli::cmd_eval(ev);
        }
    } catch (const aircal::validation_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const aircal::io_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const aircal::numerical_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}

// pulmo: command-line front end for mixing, separation, scoring, surrogate
// synthesis and latent-space inspection.
//
// Exit codes: 0 success, 1 runtime/data error, 2 usage error.

#include "pulmo/config.hpp"
#include "pulmo/dump.hpp"
#include "pulmo/evaluation.hpp"
#include "pulmo/separation.hpp"
#include "pulmo/signal_io.hpp"
#include "pulmo/synthetic.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

namespace fs = std::filesystem;
using namespace pulmo;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Manifest = std::vector<std::pair<std::string, std::string>>;

void write_manifest(const fs::path& path, const Manifest& entries) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  for (const auto& [k, v] : entries) os << k << " = " << v << '\n';
}

// Removes everything written so far unless commit() was called.
class OutputGuard {
 public:
  explicit OutputGuard(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    created_dir_ = !fs::exists(dir_, ec);
    fs::create_directories(dir_);
  }
  OutputGuard(const OutputGuard&) = delete;
  OutputGuard& operator=(const OutputGuard&) = delete;
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& p : files_) fs::remove(p, ec);
    if (created_dir_) fs::remove(dir_, ec);
  }
  fs::path file(const std::string& name) {
    files_.push_back(dir_ / name);
    return files_.back();
  }
  void commit() { committed_ = true; }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
  bool created_dir_ = false;
  bool committed_ = false;
};

fs::path require_file(const std::string& path) {
  if (!fs::exists(path)) throw IoError("input not found: '" + path + "'");
  return path;
}

// ---------------------------------------------------------------------------
// Shared run configuration flags

struct ConfigFlags {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method, mask_mode, mask_base, high_band;
  std::optional<int> frame_len, hop, band_hi, epochs, batch, patience, nmf_rank, nmf_iters, cluster_iters;
  std::optional<double> lr, lambda;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "Plain-text 'key = value' configuration file");
    app->add_option("--seed", seed, "RNG seed (fallback: PULMO_SEED, then 17)");
    app->add_option("--method", method, "pc-dae-c | pc-dae-f | dc-dae | pc-nmf | dc-nmf");
    app->add_option("--mask-mode", mask_mode, "mask | direct");
    app->add_option("--mask-base", mask_base, "mixture | reconstruction");
    app->add_option("--high-band", high_band, "zero | mixture");
    app->add_option("--frame-len", frame_len);
    app->add_option("--hop", hop);
    app->add_option("--band-hi", band_hi, "Highest analysed STFT bin");
    app->add_option("--epochs", epochs);
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--batch", batch);
    app->add_option("--patience", patience, "Early-stop patience in epochs (0 disables)");
    app->add_option("--nmf-rank", nmf_rank);
    app->add_option("--nmf-iters", nmf_iters);
    app->add_option("--cluster-iters", cluster_iters);
    app->add_option("--lambda", lambda, "Sparsity weight of the clustering NMF");
  }

  RunConfig resolve() const {
    try {
      RunConfig c;
      if (const char* env = std::getenv("PULMO_SEED"); env && *env) apply_setting(c, "seed", env);
      if (!config_file.empty()) {
        std::ifstream in(config_file);
        if (!in) throw UsageError("cannot read config file '" + config_file + "'");
        c = parse_config(in, c);
      }
      auto set = [&](const char* key, const auto& opt) {
        if (!opt) return;
        if constexpr (std::is_same_v<std::decay_t<decltype(*opt)>, std::string>)
          apply_setting(c, key, *opt);
        else
          apply_setting(c, key, format_value(*opt));
      };
      set("seed", seed);
      set("method", method);
      set("mask_mode", mask_mode);
      set("mask_base", mask_base);
      set("high_band", high_band);
      set("frame_len", frame_len);
      set("hop", hop);
      set("band_hi", band_hi);
      set("epochs", epochs);
      set("lr", lr);
      set("batch", batch);
      set("patience", patience);
      set("nmf_rank", nmf_rank);
      set("nmf_iters", nmf_iters);
      set("cluster_iters", cluster_iters);
      set("lambda_sparsity", lambda);
      validate(c);
      return c;
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
  }

  template <class T>
  static std::string format_value(T v) {
    if constexpr (std::is_floating_point_v<T>)
      return format_number(v);
    else
      return std::to_string(v);
  }
};

std::string role_name(Role r) {
  switch (r) {
    case Role::heart: return "heart";
    case Role::lung: return "lung";
    case Role::shared: return "shared";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// mix

struct MixCmd {
  std::string target, noise, out_dir = ".";
  std::optional<double> snr;

  void attach(CLI::App* app) {
    app->add_option("--target", target, "Target (heart) WAV")->required();
    app->add_option("--noise", noise, "Noise (lung) WAV")->required();
    app->add_option("--snr", snr, "Requested SNR in dB")->required();
    app->add_option("--out-dir", out_dir);
  }

  int run() const {
    const Waveform t = load_audio(require_file(target));
    const Waveform n = load_audio(require_file(noise));
    const MixResult m = mix_at_snr(t, n, *snr);
    OutputGuard out(out_dir);
    save_audio(m.mixture, out.file("mix.wav"));
    save_audio(m.target, out.file("ref_target.wav"));
    save_audio(m.noise, out.file("ref_noise.wav"));
    write_manifest(out.file("manifest.txt"), {{"target", target},
                                              {"noise", noise},
                                              {"requested_snr_db", format_number(*snr)},
                                              {"achieved_snr_db", format_number(m.achieved_snr_db)},
                                              {"noise_gain", format_number(m.gain)},
                                              {"rescale", format_number(m.rescale)},
                                              {"sample_rate", std::to_string(m.mixture.sample_rate)},
                                              {"samples", std::to_string(m.mixture.size())}});
    out.commit();
    return 0;
  }
};

// ---------------------------------------------------------------------------
// separate

struct SeparateCmd {
  std::vector<std::string> inputs;
  std::string out_dir = "separated";
  bool dump = false;
  std::string save_model;
  int jobs = 1;
  ConfigFlags flags;

  void attach(CLI::App* app) {
    app->add_option("--input,-i", inputs, "Mixture WAV (repeat for batch mode)")->required();
    app->add_option("--out-dir,-o", out_dir);
    app->add_flag("--dump", dump, "Also write L, P, labels and masks as CSV plus PGM images");
    app->add_option("--save-model", save_model, "Write the trained DAE checkpoint (DAE methods only)");
    app->add_option("--jobs,-j", jobs, "Concurrent files in batch mode")->check(CLI::PositiveNumber);
    flags.attach(app);
  }

  static SeparationResult run_method(const Waveform& mix, const RunConfig& c, const fs::path& model_path) {
    const bool dae = c.method == Method::pc_dae_c || c.method == Method::pc_dae_f || c.method == Method::dc_dae;
    if (!dae || model_path.empty()) return separate(mix, c);
    const auto arch = c.method == Method::pc_dae_f ? nn::Architecture::dae_f : nn::Architecture::dae_c;
    const DaeAnalysis an = analyze_dae(mix, arch, c);
    nn::save_model(an.model, model_path);
    return separate_from_analysis(an, c.method == Method::dc_dae ? Grouping::direct : Grouping::periodic, c);
  }

  void run_one(const std::string& input, const fs::path& dir, const RunConfig& c) const {
    const Waveform mix = load_audio(require_file(input));
    OutputGuard out(dir);
    fs::path model_path;
    // In batch mode each input keeps its checkpoint next to its outputs.
    if (!save_model.empty()) model_path = inputs.size() > 1 ? out.file("model.bin") : fs::path(save_model);
    const SeparationResult r = run_method(mix, c, model_path);
    save_audio(r.heart, out.file("heart.wav"));
    save_audio(r.lung, out.file("lung.wav"));

    const auto counts = r.assignment.counts();
    const auto hc = std::size_t(r.assignment.heart_cluster);
    {
      std::ofstream os(out.file("result.csv"), std::ios::trunc);
      os << "method,seed,heart_units,lung_units,shared_units,heart_centroid_hz,lung_centroid_hz\n"
         << r.method << ',' << c.seed << ',' << counts[hc] << ',' << counts[1 - hc] << ',' << counts[2] << ','
         << format_number(r.assignment.centroid_hz[hc]) << ',' << format_number(r.assignment.centroid_hz[1 - hc])
         << '\n';
      if (!os) throw IoError("cannot write result.csv");
    }
    Manifest m{{"input", input}};
    for (auto& kv : config_entries(c)) m.push_back(kv);
    if (!r.training_stats.empty()) {
      m.emplace_back("epochs_run", std::to_string(r.training_stats.size()));
      m.emplace_back("final_mse", format_number(r.training_stats.back()));
    }
    write_manifest(out.file("manifest.txt"), m);

    if (dump) {
      if (r.intermediates) {
        const auto& im = *r.intermediates;
        write_csv(out.file("latent.csv"), {}, im.mixture.L);
        std::vector<std::string> hz;
        for (Eigen::Index d = 0; d < im.periodic.mod_freq_hz.size(); ++d)
          hz.push_back(format_number(im.periodic.mod_freq_hz[d]));
        write_csv(out.file("periodic.csv"), hz, im.periodic.P);
        write_labels(out.file("labels.csv"), r, im.periodic);
      }
      if (r.masks) {
        write_csv(out.file("mask_heart.csv"), {}, r.masks->first);
        write_csv(out.file("mask_lung.csv"), {}, r.masks->second);
        write_mask_pgm(out.file("mask_heart.pgm"), r.masks->first);
        write_mask_pgm(out.file("mask_lung.pgm"), r.masks->second);
      }
      RunConfig analysis = c;
      write_spectrogram_pgm(out.file("mixture.pgm"), band_magnitude(analyze(mix, analysis).lps));
      write_spectrogram_pgm(out.file("heart.pgm"), band_magnitude(analyze(r.heart, analysis).lps));
      write_spectrogram_pgm(out.file("lung.pgm"), band_magnitude(analyze(r.lung, analysis).lps));
    }
    out.commit();
  }

  static void write_labels(const fs::path& path, const SeparationResult& r, const PeriodicCodeMatrix& pcm) {
    std::ofstream os(path, std::ios::trunc);
    os << "neuron_index,label,centroid_hz\n";
    for (std::size_t j = 0; j < r.assignment.labels.size(); ++j)
      os << j << ',' << role_name(r.assignment.role(j)) << ','
         << format_number(spectral_centroid(pcm.P.row(Eigen::Index(j)).transpose(), pcm.mod_freq_hz)) << '\n';
    if (!os) throw IoError("cannot write '" + path.string() + "'");
  }

  int run() const {
    const RunConfig c = flags.resolve();
    if (inputs.size() == 1) {
      run_one(inputs.front(), out_dir, c);
      return 0;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    int status = 0;
    auto worker = [&] {
      for (std::size_t i; (i = next++) < inputs.size();) {
        try {
          run_one(inputs[i], fs::path(out_dir) / fs::path(inputs[i]).stem(), c);
        } catch (const std::exception& e) {
          std::lock_guard lock(err_mu);
          std::cerr << "error: " << inputs[i] << ": " << e.what() << '\n';
          status = 1;
        }
      }
    };
    std::vector<std::thread> pool;
    for (int j = 0; j < std::min<int>(jobs, int(inputs.size())); ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return status;
  }
};

// ---------------------------------------------------------------------------
// eval

struct EvalCmd {
  std::vector<std::string> estimates;
  std::string ref_heart, ref_lung, out_dir = ".";
  bool trim = false;

  void attach(CLI::App* app) {
    app->add_option("--estimates", estimates, "Two estimated sources, any order")->required()->expected(2);
    app->add_option("--ref-heart", ref_heart, "Reference heart (target) WAV")->required();
    app->add_option("--ref-lung", ref_lung, "Reference lung (noise) WAV")->required();
    app->add_option("--out-dir", out_dir);
    app->add_flag("--trim-to-shortest", trim, "Cut all signals to the shortest length");
  }

  int run() const {
    std::array<Waveform, 4> w{load_audio(require_file(estimates[0])), load_audio(require_file(estimates[1])),
                              load_audio(require_file(ref_heart)), load_audio(require_file(ref_lung))};
    Eigen::Index len = w[0].size();
    for (const auto& x : w) len = std::min(len, x.size());
    for (const auto& x : w)
      if (x.size() != len && !trim)
        throw InvalidArgument("signal lengths differ (use --trim-to-shortest)");
    const std::array<vec, 2> est{w[0].samples.head(len), w[1].samples.head(len)};
    const std::array<vec, 2> refs{w[2].samples.head(len), w[3].samples.head(len)};
    const PairEvaluation ev = evaluate_pair(est, refs);

    OutputGuard out(out_dir);
    {
      std::ofstream os(out.file("scores.csv"), std::ios::trunc);
      os << "source,sdr_db,sir_db,sar_db\n";
      const char* names[2] = {"heart", "lung"};
      for (int i = 0; i < 2; ++i) {
        const auto& s = ev.scores[std::size_t(i)];
        os << names[i] << ',' << format_number(s.sdr) << ',' << format_number(s.sir) << ',' << format_number(s.sar)
           << '\n';
      }
      if (!os) throw IoError("cannot write scores.csv");
    }
    Manifest m{{"estimate_0", estimates[0]}, {"estimate_1", estimates[1]}, {"ref_heart", ref_heart},
               {"ref_lung", ref_lung},       {"samples", std::to_string(len)}, {"swapped", ev.swapped ? "true" : "false"},
               {"heart_estimate", estimates[ev.swapped ? 1 : 0]}, {"lung_estimate", estimates[ev.swapped ? 0 : 1]}};
    const char* names[2] = {"heart", "lung"};
    for (int i = 0; i < 2; ++i) {
      const auto& s = ev.scores[std::size_t(i)];
      m.emplace_back(std::string(names[i]) + ".sdr_db", format_number(s.sdr));
      m.emplace_back(std::string(names[i]) + ".sir_db", format_number(s.sir));
      m.emplace_back(std::string(names[i]) + ".sar_db", format_number(s.sar));
    }
    write_manifest(out.file("scores.txt"), m);
    out.commit();
    return 0;
  }
};

// ---------------------------------------------------------------------------
// synth

struct SynthCmd {
  std::string out_dir = ".";
  double duration = 30.0;
  std::optional<std::uint64_t> seed;
  SourceSpec heart = SourceSpec::heart();
  SourceSpec lung = SourceSpec::lung();

  void attach(CLI::App* app) {
    app->add_option("--out-dir", out_dir);
    app->add_option("--duration", duration, "Seconds (>= 3)");
    app->add_option("--seed", seed, "RNG seed (fallback: PULMO_SEED, then 17); lung uses seed + 1");
    app->add_option("--heart-rate", heart.rate_hz, "Burst rate in Hz");
    app->add_option("--heart-carrier", heart.carrier_hz, "Burst carrier in Hz");
    app->add_option("--heart-decay", heart.decay_s, "Burst decay constant in s");
    app->add_option("--lung-rate", lung.rate_hz, "Amplitude-modulation rate in Hz");
    app->add_option("--lung-lo", lung.band_lo_hz, "Noise band lower edge in Hz");
    app->add_option("--lung-hi", lung.band_hi_hz, "Noise band upper edge in Hz");
  }

  int run() const {
    std::uint64_t s = 17;
    if (const char* env = std::getenv("PULMO_SEED"); env && *env) s = std::strtoull(env, nullptr, 10);
    if (seed) s = *seed;
    SourceSpec h = heart, l = lung;
    h.duration_s = l.duration_s = duration;
    h.seed = s;
    l.seed = s + 1;
    try {
      validate(h);
      validate(l);
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
    OutputGuard out(out_dir);
    save_audio(generate(h), out.file("heart.wav"));
    save_audio(generate(l), out.file("lung.wav"));
    Manifest m;
    for (const auto& [name, spec] : {std::pair{"heart", &h}, std::pair{"lung", &l}}) {
      const std::string p = std::string(name) + ".";
      m.emplace_back(p + "kind", to_string(spec->kind));
      m.emplace_back(p + "rate_hz", format_number(spec->rate_hz));
      if (spec->kind == SourceKind::impulse_train_tone) {
        m.emplace_back(p + "carrier_hz", format_number(spec->carrier_hz));
        m.emplace_back(p + "decay_s", format_number(spec->decay_s));
      } else {
        m.emplace_back(p + "band_lo_hz", format_number(spec->band_lo_hz));
        m.emplace_back(p + "band_hi_hz", format_number(spec->band_hi_hz));
      }
      m.emplace_back(p + "duration_s", format_number(spec->duration_s));
      m.emplace_back(p + "sample_rate", std::to_string(spec->sample_rate));
      m.emplace_back(p + "seed", std::to_string(spec->seed));
    }
    write_manifest(out.file("manifest.txt"), m);
    out.commit();
    return 0;
  }
};

// ---------------------------------------------------------------------------
// inspect

struct InspectCmd {
  std::string input, out_dir = "inspect";
  ConfigFlags flags;

  void attach(CLI::App* app) {
    app->add_option("--input,-i", input, "Mixture WAV")->required();
    app->add_option("--out-dir,-o", out_dir);
    flags.attach(app);
  }

  int run() const {
    const RunConfig c = flags.resolve();
    if (c.method == Method::pc_nmf || c.method == Method::dc_nmf)
      throw UsageError("inspect needs a latent-producing method (pc-dae-c, pc-dae-f, dc-dae)");
    const Waveform mix = load_audio(require_file(input));
    const auto arch = c.method == Method::pc_dae_f ? nn::Architecture::dae_f : nn::Architecture::dae_c;
    const DaeAnalysis an = analyze_dae(mix, arch, c);
    const SeparationResult r =
        separate_from_analysis(an, c.method == Method::dc_dae ? Grouping::direct : Grouping::periodic, c);
    const Intermediates& im = *r.intermediates;

    std::vector<Eigen::Index> units;
    for (std::size_t j = 0; j < r.assignment.labels.size(); ++j)
      if (r.assignment.labels[j] != ClusterLabel::shared) units.push_back(Eigen::Index(j));
    const auto n_units = Eigen::Index(units.size());
    const Eigen::Index frames = im.mixture.frames();

    OutputGuard out(out_dir);
    std::vector<std::string> header{"time_s"};
    for (auto j : units) header.push_back("n" + std::to_string(j));
    mat traj(frames, n_units + 1);
    traj.col(0) = vec::LinSpaced(frames, 0.0, double(frames - 1)) / im.mixture.frame_rate_hz;
    for (Eigen::Index u = 0; u < n_units; ++u) traj.col(u + 1) = im.mixture.L.row(units[std::size_t(u)]).transpose();
    write_csv(out.file("trajectories.csv"), header, traj);

    header.front() = "hz";
    mat spectra(im.periodic.P.cols(), n_units + 1);
    spectra.col(0) = im.periodic.mod_freq_hz;
    for (Eigen::Index u = 0; u < n_units; ++u) spectra.col(u + 1) = im.periodic.P.row(units[std::size_t(u)]).transpose();
    write_csv(out.file("mfa.csv"), header, spectra);

    mat rows(n_units, frames);
    for (Eigen::Index u = 0; u < n_units; ++u) rows.row(u) = im.mixture.L.row(units[std::size_t(u)]);
    const mat coords = pca_scatter(rows);
    {
      std::ofstream os(out.file("pca.csv"), std::ios::trunc);
      os << "neuron_index,coord1,coord2,label\n";
      for (Eigen::Index u = 0; u < n_units; ++u)
        os << units[std::size_t(u)] << ',' << format_number(coords(u, 0)) << ',' << format_number(coords(u, 1)) << ','
           << role_name(r.assignment.role(std::size_t(units[std::size_t(u)]))) << '\n';
      if (!os) throw IoError("cannot write pca.csv");
    }
    SeparateCmd::write_labels(out.file("labels.csv"), r, im.periodic);
    write_spectrogram_pgm(out.file("mixture.pgm"), band_magnitude(an.front.lps));
    if (r.masks) {
      write_mask_pgm(out.file("mask_heart.pgm"), r.masks->first);
      write_mask_pgm(out.file("mask_lung.pgm"), r.masks->second);
    }
    Manifest m{{"input", input}};
    for (auto& kv : config_entries(c)) m.push_back(kv);
    m.emplace_back("informative_units", std::to_string(n_units));
    m.emplace_back("frames", std::to_string(frames));
    m.emplace_back("frame_rate_hz", format_number(im.mixture.frame_rate_hz));
    write_manifest(out.file("manifest.txt"), m);
    out.commit();
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blind heart/lung sound separation toolkit"};
  app.require_subcommand(1);
  MixCmd mix;
  SeparateCmd sep;
  EvalCmd ev;
  SynthCmd synth;
  InspectCmd inspect;
  auto* mix_app = app.add_subcommand("mix", "Mix a target and a noise recording at a given SNR");
  auto* sep_app = app.add_subcommand("separate", "Separate a mixture into heart and lung estimates");
  auto* eval_app = app.add_subcommand("eval", "Score two estimates against references (SDR/SIR/SAR)");
  auto* synth_app = app.add_subcommand("synth", "Write surrogate heart and lung recordings");
  auto* inspect_app = app.add_subcommand("inspect", "Dump latent trajectories, modulation spectra and PCA");
  mix.attach(mix_app);
  sep.attach(sep_app);
  ev.attach(eval_app);
  synth.attach(synth_app);
  inspect.attach(inspect_app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (mix_app->parsed()) return mix.run();
    if (sep_app->parsed()) return sep.run();
    if (eval_app->parsed()) return ev.run();
    if (synth_app->parsed()) return synth.run();
    if (inspect_app->parsed()) return inspect.run();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

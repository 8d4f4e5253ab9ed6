// Command-line front end for the alignment and decoding pipeline. One
// binary, six subcommands: synth, preprocess, align (train|apply), decode,
// evaluate, psd. Every command takes its settings from a TOML config file
// plus flag overrides, flags winning. Exit codes: 0 success, 2 config
// error, 3 data error, 4 numerical failure.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "ssvep/checkpoint.hpp"
#include "ssvep/epoch_io.hpp"
#include "ssvep/epochs.hpp"
#include "ssvep/errors.hpp"
#include "ssvep/evaluate.hpp"
#include "ssvep/filters.hpp"
#include "ssvep/log.hpp"
#include "ssvep/spectrum.hpp"
#include "ssvep/synth.hpp"
#include "ssvep/toml_lite.hpp"

namespace fs = std::filesystem;
using namespace ssvep;

namespace {

// ---------------------------------------------------------------------------
// Config section loaders
// ---------------------------------------------------------------------------

/// Reads [dan] keys (or top-level fallbacks) into a training config.
DanConfig load_dan_config(const TomlTable& t) {
  auto key = [&t](const std::string& k) {
    return t.has("dan." + k) ? "dan." + k : k;
  };
  DanConfig c;
  c.n_filters = static_cast<int>(t.get_int_or(key("n_filters"), 0));
  c.hidden_dim = static_cast<int>(t.get_int_or(key("hidden_dim"), 0));
  c.learning_rate = t.get_double_or(key("learning_rate"), c.learning_rate);
  c.batch_size = static_cast<int>(t.get_int_or(key("batch_size"), c.batch_size));
  c.pretrain_epochs =
      static_cast<int>(t.get_int_or(key("pretrain_epochs"), c.pretrain_epochs));
  c.finetune_epochs =
      static_cast<int>(t.get_int_or(key("finetune_epochs"), c.finetune_epochs));
  c.val_fraction = t.get_double_or(key("val_fraction"), c.val_fraction);
  c.seed = static_cast<std::uint64_t>(t.get_int_or(key("seed"), 0));
  c.use_tanh = t.get_bool_or(key("use_tanh"), true);
  return c;
}

/// Reads [decode] keys: filter-bank geometry for the decoder.
DecodeParams load_decode_params(const TomlTable& t) {
  DecodeParams d;
  d.n_bands = static_cast<int>(t.get_int_or("decode.n_bands", d.n_bands));
  d.base_low = t.get_double_or("decode.base_low", d.base_low);
  d.high_edge = t.get_double_or("decode.high_edge", d.high_edge);
  d.taps = static_cast<int>(t.get_int_or("decode.taps", d.taps));
  return d;
}

/// Notch -> decimate -> channel select -> window, the standing order for
/// turning a raw recording into decoder-ready epochs.
EpochSet preprocess_chain(EpochSet e, const DatasetManifest& m) {
  if (m.notch_hz > 0.0) e = apply_notch(e, m.notch_hz);
  if (m.decim_factor > 1) e = decimate(e, m.decim_factor);
  if (!m.channel_subset.empty()) e = select_channels(e, m.channel_subset);
  return extract_window(e, m.latency_s, m.window_s, m.onset_offset_s);
}

std::string json_double_matrix(const Eigen::MatrixXd& m, nlohmann::json& out) {
  out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return {};
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw DataError("IoFailure", "cannot open " + path + " for writing");
  out << text;
  out.flush();
  if (!out) throw DataError("IoFailure", "short write to " + path);
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthOpts {
  std::string config;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  bool dry_run = false;
};

int cmd_synth(const SynthOpts& o) {
  SynthConfig sc = load_synth_config(TomlTable::parse_file(o.config));
  if (o.seed) {
    sc.mixing_seed = derive_seed(*o.seed, 1);
    sc.noise_seed = derive_seed(*o.seed, 2);
  }
  if (o.dry_run) {
    std::printf("config ok: %d subjects, %d stimuli, %d trials/stimulus\n",
                sc.n_subjects, sc.n_stimuli, sc.n_trials_per_stim);
    return 0;
  }
  const SynthResult r = synth_generate(sc);
  fs::create_directories(o.out_dir);

  nlohmann::json truth;
  truth["fs"] = sc.fs;
  truth["window_s"] = sc.window_s;
  truth["snr_db"] = sc.snr_db;
  truth["n_harmonics"] = sc.n_harmonics;
  truth["freqs"] = sc.freqs;
  truth["phases"] = sc.phases;
  truth["mixing_seed"] = sc.mixing_seed;
  truth["noise_seed"] = sc.noise_seed;
  truth["subjects"] = nlohmann::json::array();
  for (std::size_t s = 0; s < r.subjects.size(); ++s) {
    const std::string path =
        o.out_dir + "/" + r.subjects[s].subject_id + ".epoc";
    save_epochs(r.subjects[s], path);
    log::info("wrote " + path);
    nlohmann::json entry;
    entry["id"] = r.subjects[s].subject_id;
    json_double_matrix(r.mixing[s], entry["mixing"]);
    truth["subjects"].push_back(std::move(entry));
  }
  write_text_file(o.out_dir + "/ground_truth.json", truth.dump(2) + "\n");
  std::printf("wrote %zu subjects and ground_truth.json to %s\n",
              r.subjects.size(), o.out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

struct PreprocessOpts {
  std::string config;
  std::string in_path;
  std::string out_path;
  bool dry_run = false;
};

int cmd_preprocess(const PreprocessOpts& o) {
  const DatasetManifest m = load_manifest_file(o.config);
  if (o.dry_run) {
    if (!fs::exists(o.in_path))
      throw DataError("MissingFile", o.in_path + " does not exist");
    std::printf("config ok: notch %.1f Hz, decim %d, %zu channels, %.2f s\n",
                m.notch_hz, m.decim_factor, m.channel_subset.size(),
                m.window_s);
    return 0;
  }
  EpochSet raw = load_epoc_file(o.in_path);
  if (m.fs_raw > 0.0 && std::abs(raw.fs - m.fs_raw) > 1e-9 * m.fs_raw)
    throw DataError("FormatViolation",
                    o.in_path + ": fs " + std::to_string(raw.fs) +
                        " does not match manifest fs_raw " +
                        std::to_string(m.fs_raw));
  const EpochSet out = preprocess_chain(std::move(raw), m);
  save_epochs(out, o.out_path);
  std::printf("wrote %s: %d trials, %d channels, %d samples at %.6g Hz\n",
              o.out_path.c_str(), out.n_trials(), out.n_channels(),
              out.n_samples(), out.fs);
  return 0;
}

// ---------------------------------------------------------------------------
// align train / apply
// ---------------------------------------------------------------------------

struct AlignTrainOpts {
  std::string config;
  std::string data_root;
  std::string target;
  std::vector<std::string> sources;
  std::string out_dir = ".";
  int n_calib = 2;
  std::optional<std::uint64_t> seed;
  bool dry_run = false;
};

int cmd_align_train(const AlignTrainOpts& o) {
  const TomlTable t = TomlTable::parse_file(o.config);
  const DatasetManifest m = load_manifest(t);
  DanConfig dan = load_dan_config(t);
  if (o.seed) dan.seed = *o.seed;
  if (o.n_calib < 2)
    throw ConfigError("CalibTooSmall", "--calib must be >= 2");

  std::vector<std::string> sources = o.sources;
  if (sources.empty()) {
    for (const auto& id : m.subject_ids)
      if (id != o.target) sources.push_back(id);
  }
  if (sources.empty())
    throw ConfigError("ConfigRange", "no source subjects resolved");
  for (const auto& id : sources)
    if (id == o.target)
      throw ConfigError("DuplicateSubject",
                        "target '" + o.target + "' listed among sources");
  if (o.dry_run) {
    std::printf("config ok: target %s, %zu sources, %d calibration trials\n",
                o.target.c_str(), sources.size(), o.n_calib);
    return 0;
  }

  const EpochSet target =
      preprocess_chain(load_epochs(o.data_root, m, o.target), m);
  auto [calib, rest] = split_calibration_test(target, o.n_calib);
  (void)rest;
  std::vector<EpochSet> source_sets;
  source_sets.reserve(sources.size());
  for (const auto& id : sources)
    source_sets.push_back(preprocess_chain(load_epochs(o.data_root, m, id), m));

  const PretrainResult res = pretrain_then_finetune(source_sets, calib, dan);
  fs::create_directories(o.out_dir);
  save_model(res.pretrained, o.out_dir + "/G0.danm");
  for (std::size_t k = 0; k < sources.size(); ++k)
    save_model(res.per_source[k],
               o.out_dir + "/G0_" + sources[k] + ".danm");
  std::printf("wrote %zu checkpoints to %s\n", sources.size() + 1,
              o.out_dir.c_str());
  return 0;
}

struct AlignApplyOpts {
  std::string checkpoint;
  std::string in_path;
  std::string out_path;
  std::string target_name = "target";
  bool dry_run = false;
};

int cmd_align_apply(const AlignApplyOpts& o) {
  if (o.dry_run) {
    for (const std::string& p : {o.checkpoint, o.in_path})
      if (!fs::exists(p)) throw DataError("MissingFile", p + " does not exist");
    std::printf("config ok: %s -> %s\n", o.in_path.c_str(),
                o.out_path.c_str());
    return 0;
  }
  const DanModel model = load_model(o.checkpoint);
  const EpochSet src = load_epoc_file(o.in_path);
  const EpochSet out = align_transform(model, src, o.target_name);
  save_epochs(out, o.out_path);
  std::printf("wrote %s: %d trials aligned to %s\n", o.out_path.c_str(),
              out.n_trials(), o.target_name.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// decode
// ---------------------------------------------------------------------------

struct DecodeOpts {
  std::string config;
  std::string data_root;
  std::string subject;
  int n_calib = 2;
  std::vector<std::string> pool_files;
  std::string out_path;
  bool dry_run = false;
};

int cmd_decode(const DecodeOpts& o) {
  const TomlTable t = TomlTable::parse_file(o.config);
  const DatasetManifest m = load_manifest(t);
  const DecodeParams d = load_decode_params(t);
  if (o.n_calib < 2)
    throw ConfigError("CalibTooSmall", "--calib must be >= 2");
  if (o.dry_run) {
    std::printf("config ok: subject %s, %d calibration trials, %d bands\n",
                o.subject.c_str(), o.n_calib, d.n_bands);
    return 0;
  }

  const EpochSet subject =
      preprocess_chain(load_epochs(o.data_root, m, o.subject), m);
  auto [calib, test] = split_calibration_test(subject, o.n_calib);
  EpochSet pool = calib;
  ensure_trial_ids(pool);
  for (const auto& path : o.pool_files)
    evaldetail::append_trials(pool, load_epoc_file(path));
  evaldetail::assert_fold_hygiene(pool, test);

  const auto bank =
      design_filterbank(pool.fs, d.n_bands, d.base_low, d.high_edge, d.taps);
  const TrcaModel model = trca_fit(pool, d.n_bands, bank);
  std::vector<int> pred;
  pred.reserve(test.trials.size());
  for (const auto& trial : test.trials)
    pred.push_back(trca_classify(trial, model, bank).first);
  const double acc = accuracy(pred, test.labels);

  int n_correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == test.labels[i]) ++n_correct;
  std::printf("accuracy %.6f (%d/%zu correct, pool %d trials)\n", acc,
              n_correct, pred.size(), pool.n_trials());

  if (!o.out_path.empty()) {
    nlohmann::json j;
    j["subject"] = o.subject;
    j["n_calib"] = o.n_calib;
    j["n_pool_trials"] = pool.n_trials();
    j["n_test_trials"] = static_cast<int>(test.trials.size());
    j["accuracy"] = acc;
    j["predictions"] = nlohmann::json::array();
    for (std::size_t i = 0; i < pred.size(); ++i)
      j["predictions"].push_back(
          {{"trial", test.trial_ids[i]}, {"truth", test.labels[i]},
           {"predicted", pred[i]}});
    write_text_file(o.out_path, j.dump(2) + "\n");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateOpts {
  std::string config;
  std::string out_dir = ".";
  std::string data_root;
  std::vector<std::string> schemes;
  std::vector<int> calib;
  std::vector<int> source_counts;
  std::optional<int> repeats;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string format = "both";
  bool dry_run = false;
};

/// Builds subject loaders either from a [synth] section (cohort generated
/// in memory) or from a [dataset] manifest rooted at data_root.
void resolve_cohort(const TomlTable& t, const std::string& data_root,
                    TaskSpec& task) {
  std::vector<std::string> target_ids, source_ids;
  if (t.has("task.targets")) target_ids = t.get_string_array("task.targets");
  if (t.has("task.sources")) source_ids = t.get_string_array("task.sources");

  if (t.has("synth.n_subjects") || t.has("n_subjects")) {
    const SynthConfig sc = load_synth_config(t);
    const SynthResult r = synth_generate(sc);
    std::vector<SubjectRef> all = subject_refs(r.subjects);
    auto pick = [&all](const std::vector<std::string>& ids) {
      std::vector<SubjectRef> out;
      for (const auto& id : ids) {
        bool found = false;
        for (const auto& ref : all)
          if (ref.id == id) {
            out.push_back(ref);
            found = true;
          }
        if (!found)
          throw ConfigError("SubjectUnknown",
                            "subject '" + id + "' not in the synthetic cohort");
      }
      return out;
    };
    task.targets = target_ids.empty() ? all : pick(target_ids);
    task.sources = pick(source_ids);
    return;
  }

  const DatasetManifest m = load_manifest(t);
  if (target_ids.empty()) target_ids = m.subject_ids;
  auto make_ref = [m, data_root](const std::string& id) {
    return SubjectRef{id, [m, data_root, id]() {
                        return preprocess_chain(load_epochs(data_root, m, id),
                                                m);
                      }};
  };
  for (const auto& id : target_ids) task.targets.push_back(make_ref(id));
  for (const auto& id : source_ids) task.sources.push_back(make_ref(id));
}

int cmd_evaluate(const EvaluateOpts& o) {
  fs::create_directories(o.out_dir);
  try {
    const TomlTable t = TomlTable::parse_file(o.config);

    TaskSpec task;
    task.name = t.get_string_or("task.name", "custom");
    task.n_calib = static_cast<int>(t.get_int_or("task.n_calib", 2));
    task.repeats = static_cast<int>(t.get_int_or("task.repeats", 10));
    task.seed = static_cast<std::uint64_t>(t.get_int_or("task.seed", 0));
    task.reshuffle_calibration =
        t.get_bool_or("task.reshuffle_calibration", false);
    task.n_source_subjects =
        static_cast<int>(t.get_int_or("task.n_source_subjects", 0));
    task.jobs = static_cast<int>(t.get_int_or("task.jobs", 1));

    std::vector<std::string> scheme_names =
        t.has("task.schemes") ? t.get_string_array("task.schemes")
                              : std::vector<std::string>{"baseline", "dan"};
    if (!o.schemes.empty()) scheme_names = o.schemes;
    std::vector<SchemeId> schemes;
    for (const auto& n : scheme_names) schemes.push_back(parse_scheme(n));

    if (o.repeats) task.repeats = *o.repeats;
    if (o.seed) task.seed = *o.seed;
    if (o.jobs) task.jobs = *o.jobs;

    std::vector<int> calib_values = o.calib;
    if (calib_values.empty() && t.has("task.calib_values")) {
      for (int v : t.get_int_array("task.calib_values"))
        calib_values.push_back(v);
    }
    std::vector<int> source_counts = o.source_counts;
    if (source_counts.empty() && t.has("task.source_counts")) {
      for (int v : t.get_int_array("task.source_counts"))
        source_counts.push_back(v);
    }
    if (calib_values.size() > 1 && source_counts.size() > 1)
      throw ConfigError("ConfigRange",
                        "choose one sweep: calibration sizes or source counts");
    if (calib_values.size() == 1) task.n_calib = calib_values[0];
    if (source_counts.size() == 1) task.n_source_subjects = source_counts[0];

    resolve_cohort(t, o.data_root, task);

    const DanConfig dan = load_dan_config(t);
    const DecodeParams decode = load_decode_params(t);

    if (o.dry_run) {
      TaskSpec check = task;
      if (calib_values.size() > 1)
        check.n_calib = *std::min_element(calib_values.begin(),
                                          calib_values.end());
      if (!source_counts.empty())
        check.n_source_subjects = *std::max_element(source_counts.begin(),
                                                    source_counts.end());
      validate_task(check, schemes);
      std::printf("config ok: %zu targets, %zu schemes, %d repeats\n",
                  task.targets.size(), schemes.size(), task.repeats);
      return 0;
    }

    EvaluationReport report;
    if (calib_values.size() > 1)
      report = sweep_calibration(task, schemes, calib_values, dan, decode);
    else if (source_counts.size() > 1)
      report = sweep_sources(task, schemes, source_counts, dan, decode);
    else
      report = run_loso(task, schemes, dan, decode);

    if (o.format != "jsonl")
      emit_report(report, o.out_dir + "/report.csv", ReportFormat::kCsv);
    if (o.format != "csv")
      emit_report(report, o.out_dir + "/report.jsonl",
                  ReportFormat::kJsonLines);
    write_run_manifest(report, o.out_dir + "/run_manifest.json");

    std::printf("cells %zu, failures %zu\n", report.cells.size(),
                report.failures.size());
    for (const auto& a : report.aggregates)
      std::printf("%-18s calib %-3d sources %-3d mean %.4f sd %.4f (n=%d)\n",
                  a.scheme.c_str(), a.n_calib, a.n_sources, a.mean, a.stddev,
                  a.n_cells);
    for (const auto& p : report.significance)
      std::printf("%s vs %-18s calib %-3d W=%.1f p=%.6g (n=%d%s)\n",
                  p.scheme.c_str(), p.versus.c_str(), p.n_calib, p.statistic,
                  p.p_value, p.n_subjects, p.exact ? ", exact" : "");
    return 0;
  } catch (const Error& e) {
    // machine-readable error record beside the (absent) reports
    nlohmann::json j{{"code", e.code()}, {"message", e.what()}};
    std::ofstream out(o.out_dir + "/error.json", std::ios::binary);
    if (out) out << j.dump(2) << '\n';
    throw;
  }
}

// ---------------------------------------------------------------------------
// psd
// ---------------------------------------------------------------------------

struct PsdOpts {
  std::string in_path;
  std::string channel;
  std::string out_path;
  std::optional<int> trial;
  std::optional<int> stimulus;
  int seg_len = 0;  // 0: whole window, one segment
  double overlap = 0.5;
  bool dry_run = false;
};

int cmd_psd(const PsdOpts& o) {
  if (o.dry_run) {
    if (!fs::exists(o.in_path))
      throw DataError("MissingFile", o.in_path + " does not exist");
    std::printf("config ok: channel %s of %s\n", o.channel.c_str(),
                o.in_path.c_str());
    return 0;
  }
  const EpochSet e = load_epoc_file(o.in_path);
  if (e.n_trials() == 0)
    throw DataError("SelectorOutOfRange", "file holds no trials");

  int channel = -1;
  for (std::size_t c = 0; c < e.channel_names.size(); ++c)
    if (e.channel_names[c] == o.channel) channel = static_cast<int>(c);
  if (channel < 0) {
    try {
      channel = std::stoi(o.channel);
    } catch (const std::exception&) {
      throw ConfigError("SelectorOutOfRange",
                        "channel '" + o.channel + "' is neither a known name "
                        "nor an index");
    }
  }
  if (channel < 0 || channel >= e.n_channels())
    throw ConfigError("SelectorOutOfRange",
                      "channel index " + std::to_string(channel) +
                          " outside [0, " + std::to_string(e.n_channels()) +
                          ")");
  if (o.trial && o.stimulus)
    throw ConfigError("SelectorOutOfRange",
                      "--trial and --stimulus are mutually exclusive");

  // one trial's row, or the coherent (time-domain) average across trials
  Eigen::VectorXd signal;
  if (o.trial) {
    if (*o.trial < 0 || *o.trial >= e.n_trials())
      throw ConfigError("SelectorOutOfRange",
                        "trial index " + std::to_string(*o.trial) +
                            " outside [0, " + std::to_string(e.n_trials()) +
                            ")");
    signal = e.trials[*o.trial].row(channel);
  } else {
    std::vector<int> picks;
    if (o.stimulus) {
      if (*o.stimulus < 0 || *o.stimulus >= e.n_stimuli())
        throw ConfigError("SelectorOutOfRange",
                          "stimulus index " + std::to_string(*o.stimulus) +
                              " outside [0, " +
                              std::to_string(e.n_stimuli()) + ")");
      picks = trials_for_stimulus(e, *o.stimulus);
      if (picks.empty())
        throw ConfigError("SelectorOutOfRange",
                          "no trials with stimulus " +
                              std::to_string(*o.stimulus));
    } else {
      picks.resize(e.n_trials());
      std::iota(picks.begin(), picks.end(), 0);
    }
    signal = Eigen::VectorXd::Zero(e.n_samples());
    for (int i : picks) signal += e.trials[i].row(channel).transpose();
    signal /= static_cast<double>(picks.size());
  }

  const int seg_len =
      o.seg_len > 0 ? o.seg_len : static_cast<int>(signal.size());
  const Spectrum spec = psd_welch(signal, e.fs, seg_len, o.overlap);

  std::string text = "freq_hz,power\n";
  char buf[80];
  for (Eigen::Index i = 0; i < spec.freqs.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", spec.freqs(i),
                  spec.power(i));
    text += buf;
  }
  write_text_file(o.out_path, text);
  Eigen::Index peak = 0;
  spec.power.maxCoeff(&peak);
  std::printf("wrote %s: %td bins, resolution %.6g Hz, peak at %.6g Hz\n",
              o.out_path.c_str(), spec.freqs.size(), spec.resolution,
              spec.freqs(peak));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SSVEP alignment and decoding toolkit"};
  app.require_subcommand(1);
  int rc = 0;

  SynthOpts synth_opts;
  auto* synth = app.add_subcommand(
      "synth", "Generate a synthetic multi-subject recording set");
  synth->add_option("--config", synth_opts.config, "TOML file with a [synth] section")
      ->required();
  synth->add_option("--out", synth_opts.out_dir, "Output directory");
  synth->add_option("--seed", synth_opts.seed,
                    "Override mixing and noise seeds from one master seed");
  synth->add_flag("--dry-run", synth_opts.dry_run,
                  "Validate the config and exit");
  synth->callback([&] { rc = cmd_synth(synth_opts); });

  PreprocessOpts pre_opts;
  auto* pre = app.add_subcommand(
      "preprocess", "Notch, decimate, select channels, and window epochs");
  pre->add_option("--config", pre_opts.config, "TOML file with a [dataset] section")
      ->required();
  pre->add_option("--in", pre_opts.in_path, "Input EPOC file")->required();
  pre->add_option("--out", pre_opts.out_path, "Output EPOC file")->required();
  pre->add_flag("--dry-run", pre_opts.dry_run, "Validate and exit");
  pre->callback([&] { rc = cmd_preprocess(pre_opts); });

  auto* align = app.add_subcommand(
      "align", "Train alignment networks or apply a trained one");
  align->require_subcommand(1);

  AlignTrainOpts at_opts;
  auto* at = align->add_subcommand(
      "train", "Two-phase training against a target's calibration trials");
  at->add_option("--config", at_opts.config,
                 "TOML file with [dataset] and [dan] sections")
      ->required();
  at->add_option("--data", at_opts.data_root, "Directory holding EPOC files");
  at->add_option("--target", at_opts.target, "Target subject id")->required();
  at->add_option("--sources", at_opts.sources,
                 "Source subject ids (default: all others in the manifest)")
      ->delimiter(',');
  at->add_option("--calib", at_opts.n_calib,
                 "Calibration trials per stimulus (>= 2)");
  at->add_option("--seed", at_opts.seed, "Override the training seed");
  at->add_option("--out", at_opts.out_dir, "Checkpoint output directory");
  at->add_flag("--dry-run", at_opts.dry_run, "Validate and exit");
  at->callback([&] { rc = cmd_align_train(at_opts); });

  AlignApplyOpts aa_opts;
  auto* aa = align->add_subcommand(
      "apply", "Transform one source recording with a trained checkpoint");
  aa->add_option("--checkpoint", aa_opts.checkpoint, "DANM checkpoint file")
      ->required();
  aa->add_option("--in", aa_opts.in_path, "Source EPOC file")->required();
  aa->add_option("--out", aa_opts.out_path, "Transformed EPOC file")
      ->required();
  aa->add_option("--target-name", aa_opts.target_name,
                 "Label recorded as the alignment destination");
  aa->add_flag("--dry-run", aa_opts.dry_run, "Validate and exit");
  aa->callback([&] { rc = cmd_align_apply(aa_opts); });

  DecodeOpts dec_opts;
  auto* dec = app.add_subcommand(
      "decode", "Calibrate a decoder on one subject and score held-out trials");
  dec->add_option("--config", dec_opts.config,
                  "TOML file with [dataset] and [decode] sections")
      ->required();
  dec->add_option("--data", dec_opts.data_root, "Directory holding EPOC files");
  dec->add_option("--subject", dec_opts.subject, "Subject id")->required();
  dec->add_option("--calib", dec_opts.n_calib,
                  "Calibration trials per stimulus (>= 2)");
  dec->add_option("--pool", dec_opts.pool_files,
                  "Extra EPOC files appended to the calibration pool")
      ->delimiter(',');
  dec->add_option("--out", dec_opts.out_path, "Optional JSON result file");
  dec->add_flag("--dry-run", dec_opts.dry_run, "Validate and exit");
  dec->callback([&] { rc = cmd_decode(dec_opts); });

  EvaluateOpts ev_opts;
  auto* ev = app.add_subcommand(
      "evaluate", "Leave-one-subject-out comparison of calibration schemes");
  ev->add_option("--config", ev_opts.config, "TOML task description")
      ->required();
  ev->add_option("--out", ev_opts.out_dir, "Report output directory");
  ev->add_option("--data", ev_opts.data_root, "Directory holding EPOC files");
  ev->add_option("--schemes", ev_opts.schemes,
                 "Schemes to compare (baseline, concat, lst, dan, dan_no_*)")
      ->delimiter(',');
  ev->add_option("--calib", ev_opts.calib,
                 "Calibration sizes; more than one value sweeps")
      ->delimiter(',');
  ev->add_option("--sources", ev_opts.source_counts,
                 "Source-subject counts; more than one value sweeps")
      ->delimiter(',');
  ev->add_option("--repeats", ev_opts.repeats, "Repeats per fold");
  ev->add_option("--seed", ev_opts.seed, "Master seed");
  ev->add_option("--jobs", ev_opts.jobs, "Parallel folds");
  ev->add_option("--format", ev_opts.format, "Cell table format")
      ->check(CLI::IsMember({"csv", "jsonl", "both"}));
  ev->add_flag("--dry-run", ev_opts.dry_run, "Validate the task and exit");
  ev->callback([&] { rc = cmd_evaluate(ev_opts); });

  PsdOpts psd_opts;
  auto* psd = app.add_subcommand(
      "psd", "Welch power spectrum of one channel, written as CSV");
  psd->add_option("--in", psd_opts.in_path, "EPOC file")->required();
  psd->add_option("--channel", psd_opts.channel,
                  "Channel name or zero-based index")
      ->required();
  psd->add_option("--out", psd_opts.out_path, "Output CSV file")->required();
  psd->add_option("--trial", psd_opts.trial, "Single trial index");
  psd->add_option("--stimulus", psd_opts.stimulus,
                  "Average trials of one stimulus");
  psd->add_option("--seg-len", psd_opts.seg_len,
                  "Welch segment length (default: whole window)");
  psd->add_option("--overlap", psd_opts.overlap,
                  "Segment overlap fraction in [0, 1)");
  psd->add_flag("--dry-run", psd_opts.dry_run, "Validate and exit");
  psd->callback([&] { rc = cmd_psd(psd_opts); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int cli_rc = app.exit(e);
    return cli_rc == 0 ? 0 : 2;
  } catch (const ssvep::Error& e) {
    ssvep::log::error(e.what());  // what() already carries the code prefix
    return e.exit_code();
  } catch (const std::exception& e) {
    ssvep::log::error(e.what());
    return 1;
  }
  return rc;
}

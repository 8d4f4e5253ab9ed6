#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ssvep/dan.hpp"
#include "ssvep/dan_train.hpp"
#include "ssvep/epochs.hpp"
#include "ssvep/errors.hpp"
#include "ssvep/filters.hpp"
#include "ssvep/log.hpp"
#include "ssvep/lst.hpp"
#include "ssvep/rng.hpp"
#include "ssvep/trca.hpp"
#include "ssvep/wilcoxon.hpp"

namespace ssvep {

/// Calibration schemes: what goes into the decoder's training pool besides
/// the target's own calibration trials. The dan_* variants switch off one
/// ingredient of the alignment network pipeline at a time.
enum class SchemeId {
  kBaseline,        // target calibration trials only
  kConcat,          // plus raw source trials
  kLst,             // plus least-squares-transformed source trials
  kDan,             // plus network-aligned source trials
  kDanNoStimIndep,  // one network per stimulus instead of a shared one
  kDanNoPretrain,   // per-source training from scratch, no pooled phase
  kDanNoFinetune,   // pooled phase only, shared model for every source
  kDanNoTanh,       // identity activation instead of tanh
};

inline const std::vector<SchemeId>& all_schemes() {
  static const std::vector<SchemeId> ids = {
      SchemeId::kBaseline,      SchemeId::kConcat,
      SchemeId::kLst,           SchemeId::kDan,
      SchemeId::kDanNoStimIndep, SchemeId::kDanNoPretrain,
      SchemeId::kDanNoFinetune, SchemeId::kDanNoTanh};
  return ids;
}

inline std::string scheme_name(SchemeId s) {
  switch (s) {
    case SchemeId::kBaseline: return "baseline";
    case SchemeId::kConcat: return "concat";
    case SchemeId::kLst: return "lst";
    case SchemeId::kDan: return "dan";
    case SchemeId::kDanNoStimIndep: return "dan_no_stim_indep";
    case SchemeId::kDanNoPretrain: return "dan_no_pretrain";
    case SchemeId::kDanNoFinetune: return "dan_no_finetune";
    case SchemeId::kDanNoTanh: return "dan_no_tanh";
  }
  throw ConfigError("UnknownScheme", "unhandled scheme id");
}

inline SchemeId parse_scheme(const std::string& name) {
  for (SchemeId s : all_schemes())
    if (scheme_name(s) == name) return s;
  throw ConfigError("UnknownScheme", "unknown scheme '" + name + "'");
}

inline bool scheme_uses_sources(SchemeId s) { return s != SchemeId::kBaseline; }

inline bool scheme_is_dan(SchemeId s) {
  switch (s) {
    case SchemeId::kDan:
    case SchemeId::kDanNoStimIndep:
    case SchemeId::kDanNoPretrain:
    case SchemeId::kDanNoFinetune:
    case SchemeId::kDanNoTanh:
      return true;
    default:
      return false;
  }
}

/// A subject the harness can materialize on demand. The loader throws on
/// failure; failures abort only the folds that need the subject.
struct SubjectRef {
  std::string id;
  std::function<EpochSet()> load;
};

/// Wraps already-loaded subjects for in-memory evaluation runs.
inline std::vector<SubjectRef> subject_refs(const std::vector<EpochSet>& sets) {
  std::vector<SubjectRef> refs;
  refs.reserve(sets.size());
  for (const auto& e : sets)
    refs.push_back(SubjectRef{e.subject_id, [e]() { return e; }});
  return refs;
}

struct TaskSpec {
  std::string name = "custom";
  std::vector<SubjectRef> targets;
  std::vector<SubjectRef> sources;  // empty: leave-one-out within targets
  int n_calib = 2;
  int repeats = 10;
  std::uint64_t seed = 0;
  // repeats re-randomize model initialization and validation splits; this
  // additionally re-randomizes which trials become calibration
  bool reshuffle_calibration = false;
  int n_source_subjects = 0;  // 0: use every available source
  int jobs = 1;
};

struct DecodeParams {
  int n_bands = 5;
  double base_low = 8.0;
  double high_edge = 88.0;
  int taps = 251;
};

struct EvalCell {
  std::string task;
  std::string scheme;
  std::string target_subject;
  int n_calib = 0;
  int n_sources = 0;
  int repeat = 0;
  double accuracy = 0.0;
  double seconds = 0.0;
};

struct FoldFailure {
  std::string task;
  std::string scheme;  // "*" when the whole fold never started
  std::string target_subject;
  int repeat = -1;
  std::string code;
  std::string message;
};

struct SchemeAggregate {
  std::string scheme;
  int n_calib = 0;
  int n_sources = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation over cells
  int n_cells = 0;
};

struct PairedTest {
  std::string scheme = "dan";
  std::string versus;
  int n_calib = 0;
  int n_sources = 0;
  double statistic = 0.0;
  double p_value = 1.0;
  int n_subjects = 0;
  bool exact = false;
};

struct EvaluationReport {
  std::string task_name;
  std::vector<EvalCell> cells;
  std::vector<FoldFailure> failures;
  std::vector<SchemeAggregate> aggregates;
  std::vector<PairedTest> significance;
  std::string config_echo;  // key=value lines, one per line
};

namespace evaldetail {

inline std::uint64_t subject_hash(const std::string& id) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : id) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

/// Appends another subject's trials to the pool. Shapes, sample rate, and
/// the stimulus table must agree; trial ids travel along so that provenance
/// checks can see through the pooling.
inline void append_trials(EpochSet& pool, const EpochSet& extra) {
  if (extra.fs != pool.fs)
    throw DataError("SampleRateMismatch",
                    "pool at fs " + std::to_string(pool.fs) + ", extra at " +
                        std::to_string(extra.fs));
  if (extra.n_channels() != pool.n_channels() ||
      extra.n_samples() != pool.n_samples())
    throw DataError("ShapeMismatch",
                    "pool trials are " + std::to_string(pool.n_channels()) +
                        "x" + std::to_string(pool.n_samples()) +
                        ", appended trials are " +
                        std::to_string(extra.n_channels()) + "x" +
                        std::to_string(extra.n_samples()));
  if (extra.stim_freqs != pool.stim_freqs ||
      extra.stim_phases != pool.stim_phases)
    throw DataError("StimulusMismatch",
                    "appended subject uses a different stimulus table");
  EpochSet tagged = extra;
  ensure_trial_ids(tagged);
  for (std::size_t i = 0; i < tagged.trials.size(); ++i) {
    pool.trials.push_back(tagged.trials[i]);
    pool.labels.push_back(tagged.labels[i]);
    pool.trial_ids.push_back(tagged.trial_ids[i]);
  }
}

/// Trains one alignment network per stimulus (sources sliced by label) and
/// reassembles each source's transformed trials in their original order.
inline std::vector<EpochSet> per_stimulus_alignment(
    const std::vector<const EpochSet*>& sources, const EpochSet& target_calib,
    const DanConfig& cfg) {
  std::vector<EpochSet> out(sources.size());
  for (std::size_t si = 0; si < sources.size(); ++si) {
    const EpochSet& src = *sources[si];
    EpochSet shell;
    shell.labels = src.labels;
    shell.stim_freqs = src.stim_freqs;
    shell.stim_phases = src.stim_phases;
    shell.fs = src.fs;
    shell.subject_id = src.subject_id + "->" + target_calib.subject_id;
    shell.channel_names = target_calib.channel_names;
    shell.declared_samples = src.n_samples();
    shell.trials.resize(src.trials.size());
    EpochSet tagged = src;
    ensure_trial_ids(tagged);
    for (const auto& id : tagged.trial_ids)
      shell.trial_ids.push_back(id + "->" + target_calib.subject_id);
    out[si] = std::move(shell);
  }

  for (int k = 0; k < target_calib.n_stimuli(); ++k) {
    std::vector<EpochSet> sources_k;
    std::vector<std::size_t> origin;            // source index
    std::vector<std::vector<int>> positions;    // trial indices within source
    for (std::size_t si = 0; si < sources.size(); ++si) {
      std::vector<int> idx = trials_for_stimulus(*sources[si], k);
      if (idx.empty()) continue;
      sources_k.push_back(subset_trials(*sources[si], idx));
      origin.push_back(si);
      positions.push_back(std::move(idx));
    }
    if (sources_k.empty()) continue;
    const EpochSet target_k =
        subset_trials(target_calib, trials_for_stimulus(target_calib, k));

    DanConfig cfg_k = cfg;
    cfg_k.seed = derive_seed(cfg.seed, 4000 + static_cast<std::uint64_t>(k));
    const PretrainResult res =
        pretrain_then_finetune(sources_k, target_k, cfg_k);
    for (std::size_t j = 0; j < sources_k.size(); ++j) {
      const EpochSet aligned =
          align_transform(res.per_source[j], sources_k[j],
                          target_calib.subject_id, target_calib.channel_names);
      EpochSet& dest = out[origin[j]];
      for (std::size_t t = 0; t < positions[j].size(); ++t)
        dest.trials[positions[j][t]] = aligned.trials[t];
    }
  }
  return out;
}

/// Guard against target test trials leaking into a training pool: every
/// pool trial id, stripped of its transform tags, must be absent from the
/// test set's ids.
inline void assert_fold_hygiene(const EpochSet& pool, const EpochSet& test) {
  std::set<std::string> test_ids(test.trial_ids.begin(), test.trial_ids.end());
  for (const auto& id : pool.trial_ids) {
    const std::string base = id.substr(0, id.find("->"));
    if (test_ids.count(base) || test_ids.count(id))
      throw DataError("FoldContamination",
                      "test trial '" + base + "' found in a training pool");
  }
}

}  // namespace evaldetail

struct SchemePool {
  EpochSet pool;
  bool dan_single_source_fallback = false;
  bool lst_rank_deficient = false;
};

/// Assembles the calibration pool one scheme sees: the target subject's
/// calibration trials plus, depending on the scheme, raw / least-squares
/// transformed / network-aligned source trials. `seed` drives all network
/// randomness for the dan lineage.
inline SchemePool build_scheme_pool(SchemeId scheme, const EpochSet& target_calib,
                                    const std::vector<const EpochSet*>& sources,
                                    DanConfig dan_config, std::uint64_t seed) {
  validate(target_calib);
  SchemePool out;
  EpochSet pool = target_calib;
  ensure_trial_ids(pool);
  if (scheme_uses_sources(scheme) && sources.empty())
    throw DataError("EmptyTrainSet", "scheme '" + scheme_name(scheme) +
                                         "' needs at least one source subject");
  switch (scheme) {
    case SchemeId::kBaseline:
      break;
    case SchemeId::kConcat:
      for (const EpochSet* s : sources) evaldetail::append_trials(pool, *s);
      break;
    case SchemeId::kLst:
      for (const EpochSet* s : sources) {
        const LstTransform t = lst_fit(*s, target_calib);
        out.lst_rank_deficient = out.lst_rank_deficient || t.rank_deficient;
        evaldetail::append_trials(
            pool, lst_transform(t, *s, target_calib.subject_id,
                                target_calib.channel_names));
      }
      break;
    default: {
      DanConfig cfg = dan_config;
      cfg.seed = seed;
      if (scheme == SchemeId::kDanNoTanh) cfg.use_tanh = false;
      if (scheme == SchemeId::kDanNoPretrain) cfg.pretrain_epochs = 0;
      if (scheme == SchemeId::kDanNoFinetune) cfg.finetune_epochs = 0;
      if (scheme == SchemeId::kDanNoStimIndep) {
        for (EpochSet& aligned :
             evaldetail::per_stimulus_alignment(sources, target_calib, cfg))
          evaldetail::append_trials(pool, aligned);
      } else {
        std::vector<EpochSet> src_copies;
        src_copies.reserve(sources.size());
        for (const EpochSet* s : sources) src_copies.push_back(*s);
        const PretrainResult res =
            pretrain_then_finetune(src_copies, target_calib, cfg);
        out.dan_single_source_fallback = res.single_source_fallback;
        for (std::size_t k = 0; k < src_copies.size(); ++k)
          evaldetail::append_trials(
              pool, align_transform(res.per_source[k], src_copies[k],
                                    target_calib.subject_id,
                                    target_calib.channel_names));
      }
      break;
    }
  }
  out.pool = std::move(pool);
  return out;
}

/// Convenience overload for callers holding subjects by value.
inline SchemePool build_scheme_pool(SchemeId scheme, const EpochSet& target_calib,
                                    const std::vector<EpochSet>& sources,
                                    const DanConfig& dan_config,
                                    std::uint64_t seed) {
  std::vector<const EpochSet*> ptrs;
  ptrs.reserve(sources.size());
  for (const auto& s : sources) ptrs.push_back(&s);
  return build_scheme_pool(scheme, target_calib, ptrs, dan_config, seed);
}

namespace evaldetail {

struct LoadedSubject {
  std::string id;
  EpochSet data;
  bool ok = false;
  std::string message;
};

inline std::vector<LoadedSubject> load_all(const std::vector<SubjectRef>& refs) {
  std::vector<LoadedSubject> out;
  out.reserve(refs.size());
  for (const auto& ref : refs) {
    LoadedSubject l;
    l.id = ref.id;
    try {
      l.data = ref.load();
      validate(l.data);
      ensure_trial_ids(l.data);
      l.ok = true;
    } catch (const Error& e) {
      l.message = e.what();  // what() already carries the code prefix
    } catch (const std::exception& e) {
      l.message = e.what();
    }
    if (!l.ok)
      log::warn("subject '" + ref.id + "' failed to load: " + l.message);
    out.push_back(std::move(l));
  }
  return out;
}

inline void check_unique_ids(const std::vector<SubjectRef>& refs,
                             const std::string& what) {
  std::set<std::string> seen;
  for (const auto& r : refs)
    if (!seen.insert(r.id).second)
      throw ConfigError("DuplicateSubject",
                        "duplicate " + what + " subject id '" + r.id + "'");
}

/// Aggregates and paired significance derived from the raw cells; reruns
/// whenever reports are merged so the two stay consistent.
inline void summarize(EvaluationReport& report,
                      const std::string& anchor = "dan") {
  report.aggregates.clear();
  report.significance.clear();

  using GroupKey = std::tuple<std::string, int, int>;  // scheme, calib, sources
  std::map<GroupKey, std::vector<double>> groups;
  for (const auto& c : report.cells)
    groups[{c.scheme, c.n_calib, c.n_sources}].push_back(c.accuracy);
  for (const auto& [key, accs] : groups) {
    SchemeAggregate agg;
    agg.scheme = std::get<0>(key);
    agg.n_calib = std::get<1>(key);
    agg.n_sources = std::get<2>(key);
    agg.n_cells = static_cast<int>(accs.size());
    double sum = 0.0;
    for (double a : accs) sum += a;
    agg.mean = sum / accs.size();
    double sq = 0.0;
    for (double a : accs) sq += (a - agg.mean) * (a - agg.mean);
    agg.stddev = accs.size() > 1 ? std::sqrt(sq / (accs.size() - 1)) : 0.0;
    report.aggregates.push_back(agg);
  }

  // paired tests on per-subject mean accuracy, anchor scheme vs the rest,
  // separately per (n_calib, n_sources) group
  using CellKey = std::tuple<int, int>;
  std::map<CellKey, std::map<std::string, std::map<std::string, std::pair<double, int>>>>
      per_subject;  // (calib, sources) -> scheme -> subject -> (sum, count)
  for (const auto& c : report.cells) {
    auto& slot = per_subject[{c.n_calib, c.n_sources}][c.scheme][c.target_subject];
    slot.first += c.accuracy;
    slot.second += 1;
  }
  for (const auto& [key, schemes] : per_subject) {
    auto anchor_it = schemes.find(anchor);
    if (anchor_it == schemes.end()) continue;
    for (const auto& [other, subj_means] : schemes) {
      if (other == anchor) continue;
      std::vector<double> a, b;
      for (const auto& [subject, sum_count] : anchor_it->second) {
        auto it = subj_means.find(subject);
        if (it == subj_means.end()) continue;
        a.push_back(sum_count.first / sum_count.second);
        b.push_back(it->second.first / it->second.second);
      }
      PairedTest pt;
      pt.scheme = anchor;
      pt.versus = other;
      pt.n_calib = std::get<0>(key);
      pt.n_sources = std::get<1>(key);
      pt.n_subjects = static_cast<int>(a.size());
      try {
        const WilcoxonResult w = wilcoxon_signed_rank(a, b);
        pt.statistic = w.statistic;
        pt.p_value = w.p_value;
        pt.exact = w.exact;
        report.significance.push_back(pt);
      } catch (const Error& e) {
        log::info("skipping significance " + anchor + " vs " + other + ": " +
                  e.what());
      }
    }
  }
}

}  // namespace evaldetail

/// Checks everything about a task that can be checked without loading
/// data: ranges, roster uniqueness, and source-count feasibility.
inline void validate_task(const TaskSpec& task,
                          const std::vector<SchemeId>& schemes) {
  if (schemes.empty())
    throw ConfigError("ConfigRange", "no schemes requested");
  if (task.targets.size() < 2)
    throw ConfigError("TooFewSubjects",
                      "leave-one-subject-out needs >= 2 target subjects");
  if (task.n_calib < 2)
    throw ConfigError("CalibTooSmall", "n_calib must be >= 2");
  if (task.repeats < 1)
    throw ConfigError("ConfigRange", "repeats must be >= 1");
  evaldetail::check_unique_ids(task.targets, "target");
  evaldetail::check_unique_ids(task.sources, "source");

  if (task.n_source_subjects > 0) {
    const std::vector<SubjectRef>& source_refs =
        task.sources.empty() ? task.targets : task.sources;
    for (const auto& t : task.targets) {
      int available = 0;
      for (const auto& s : source_refs)
        if (s.id != t.id) ++available;
      if (task.n_source_subjects > available)
        throw ConfigError("CountExceedsSources",
                          "requested " + std::to_string(task.n_source_subjects) +
                              " sources but only " + std::to_string(available) +
                              " are available for target '" + t.id + "'");
    }
  }
}

/// Leave-one-subject-out evaluation. Every target subject becomes the test
/// subject once; its first n_calib trials per stimulus calibrate, the rest
/// are decoded. Sources are the remaining subjects (or a separate roster),
/// pooled per scheme. Deterministic for a given task.seed: every random
/// stream is derived from (seed, subject id, repeat), so results do not
/// depend on scheduling or the jobs count. Failures abort only their fold
/// and are recorded on the report.
inline EvaluationReport run_loso(const TaskSpec& task,
                                 const std::vector<SchemeId>& schemes,
                                 const DanConfig& dan_config,
                                 const DecodeParams& decode) {
  validate_task(task, schemes);

  const bool self_sources = task.sources.empty();

  const std::vector<evaldetail::LoadedSubject> targets_loaded =
      evaldetail::load_all(task.targets);
  std::vector<evaldetail::LoadedSubject> sources_owned;
  if (!self_sources) sources_owned = evaldetail::load_all(task.sources);
  const std::vector<evaldetail::LoadedSubject>& sources_loaded =
      self_sources ? targets_loaded : sources_owned;

  struct FoldOutput {
    std::vector<EvalCell> cells;
    std::vector<FoldFailure> failures;
  };

  auto run_fold = [&](std::size_t ti) -> FoldOutput {
    FoldOutput out;
    const evaldetail::LoadedSubject& tgt = targets_loaded[ti];
    if (!tgt.ok) {
      out.failures.push_back({task.name, "*", tgt.id, -1, "SubjectLoadFailure",
                              tgt.message});
      return out;
    }

    std::vector<const EpochSet*> roster;
    bool source_load_failed = false;
    std::string source_fail_message;
    for (const auto& s : sources_loaded) {
      if (s.id == tgt.id) continue;
      if (!s.ok) {
        source_load_failed = true;
        source_fail_message = "source '" + s.id + "': " + s.message;
        continue;
      }
      roster.push_back(&s.data);
    }

    const std::uint64_t idh = evaldetail::subject_hash(tgt.id);

    std::pair<EpochSet, EpochSet> fixed_split;
    if (!task.reshuffle_calibration) {
      try {
        fixed_split = split_calibration_test(tgt.data, task.n_calib);
      } catch (const Error& e) {
        out.failures.push_back(
            {task.name, "*", tgt.id, -1, e.code(), e.what()});
        return out;
      }
    }

    for (int repeat = 0; repeat < task.repeats; ++repeat) {
      std::pair<EpochSet, EpochSet> split;
      if (task.reshuffle_calibration) {
        try {
          split = split_calibration_test(
              tgt.data, task.n_calib, SplitOrder::kSeededShuffle,
              derive_seed(task.seed, idh, static_cast<std::uint64_t>(repeat) + 1, 7));
        } catch (const Error& e) {
          out.failures.push_back(
              {task.name, "*", tgt.id, repeat, e.code(), e.what()});
          continue;
        }
      } else {
        split = fixed_split;
      }
      const EpochSet& calib = split.first;
      const EpochSet& test = split.second;

      std::vector<const EpochSet*> chosen = roster;
      if (task.n_source_subjects > 0 &&
          static_cast<std::size_t>(task.n_source_subjects) < roster.size()) {
        std::vector<int> order(roster.size());
        std::iota(order.begin(), order.end(), 0);
        Rng pick(derive_seed(task.seed, idh,
                             static_cast<std::uint64_t>(repeat) + 1, 11));
        pick.shuffle(order);
        order.resize(task.n_source_subjects);
        std::sort(order.begin(), order.end());
        chosen.clear();
        for (int i : order) chosen.push_back(roster[i]);
      }
      const std::uint64_t cell_seed =
          derive_seed(task.seed, idh, static_cast<std::uint64_t>(repeat) + 1);

      for (SchemeId scheme : schemes) {
        if (scheme_uses_sources(scheme)) {
          if (source_load_failed) {
            out.failures.push_back({task.name, scheme_name(scheme), tgt.id,
                                    repeat, "SubjectLoadFailure",
                                    source_fail_message});
            continue;
          }
          if (chosen.empty()) {
            out.failures.push_back({task.name, scheme_name(scheme), tgt.id,
                                    repeat, "EmptyTrainSet",
                                    "no source subjects available"});
            continue;
          }
        }
        const auto t0 = std::chrono::steady_clock::now();
        try {
          const SchemePool sp =
              build_scheme_pool(scheme, calib, chosen, dan_config, cell_seed);
          evaldetail::assert_fold_hygiene(sp.pool, test);
          const auto bank =
              design_filterbank(sp.pool.fs, decode.n_bands, decode.base_low,
                                decode.high_edge, decode.taps);
          const TrcaModel model = trca_fit(sp.pool, decode.n_bands, bank);
          std::vector<int> pred;
          pred.reserve(test.trials.size());
          for (const auto& trial : test.trials)
            pred.push_back(trca_classify(trial, model, bank).first);
          const double acc = accuracy(pred, test.labels);
          const double seconds =
              std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                            t0)
                  .count();
          out.cells.push_back({task.name, scheme_name(scheme), tgt.id,
                               task.n_calib,
                               static_cast<int>(chosen.size()), repeat, acc,
                               seconds});
        } catch (const Error& e) {
          out.failures.push_back({task.name, scheme_name(scheme), tgt.id,
                                  repeat, std::string(e.code()), e.what()});
        }
      }
    }
    return out;
  };

  std::vector<FoldOutput> outs(targets_loaded.size());
  const int jobs = std::max(1, task.jobs);
  if (jobs == 1 || outs.size() == 1) {
    for (std::size_t ti = 0; ti < outs.size(); ++ti) outs[ti] = run_fold(ti);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= outs.size()) break;
        outs[i] = run_fold(i);
      }
    };
    std::vector<std::future<void>> futures;
    const std::size_t n_workers =
        std::min<std::size_t>(static_cast<std::size_t>(jobs), outs.size());
    futures.reserve(n_workers);
    for (std::size_t j = 0; j < n_workers; ++j)
      futures.push_back(std::async(std::launch::async, worker));
    for (auto& f : futures) f.get();
  }

  EvaluationReport report;
  report.task_name = task.name;
  for (auto& fo : outs) {
    report.cells.insert(report.cells.end(), fo.cells.begin(), fo.cells.end());
    report.failures.insert(report.failures.end(), fo.failures.begin(),
                           fo.failures.end());
  }
  evaldetail::summarize(report);

  std::string echo;
  echo += "task=" + task.name + "\n";
  echo += "seed=" + std::to_string(task.seed) + "\n";
  echo += "n_calib=" + std::to_string(task.n_calib) + "\n";
  echo += "repeats=" + std::to_string(task.repeats) + "\n";
  echo += "reshuffle_calibration=" +
          std::string(task.reshuffle_calibration ? "true" : "false") + "\n";
  echo += "n_source_subjects=" + std::to_string(task.n_source_subjects) + "\n";
  std::string ids;
  for (const auto& t : task.targets) ids += (ids.empty() ? "" : ",") + t.id;
  echo += "targets=" + ids + "\n";
  ids.clear();
  for (const auto& s : task.sources) ids += (ids.empty() ? "" : ",") + s.id;
  echo += "sources=" + (self_sources ? std::string("(targets)") : ids) + "\n";
  ids.clear();
  for (SchemeId s : schemes) ids += (ids.empty() ? "" : ",") + scheme_name(s);
  echo += "schemes=" + ids + "\n";
  echo += "decode.n_bands=" + std::to_string(decode.n_bands) + "\n";
  echo += "decode.base_low=" + evaldetail::fmt_double(decode.base_low) + "\n";
  echo += "decode.high_edge=" + evaldetail::fmt_double(decode.high_edge) + "\n";
  echo += "decode.taps=" + std::to_string(decode.taps) + "\n";
  echo += "dan.learning_rate=" +
          evaldetail::fmt_double(dan_config.learning_rate) + "\n";
  echo += "dan.batch_size=" + std::to_string(dan_config.batch_size) + "\n";
  echo += "dan.pretrain_epochs=" + std::to_string(dan_config.pretrain_epochs) +
          "\n";
  echo += "dan.finetune_epochs=" + std::to_string(dan_config.finetune_epochs) +
          "\n";
  echo += "dan.val_fraction=" + evaldetail::fmt_double(dan_config.val_fraction) +
          "\n";
  echo += "dan.use_tanh=" + std::string(dan_config.use_tanh ? "true" : "false") +
          "\n";
  report.config_echo = echo;
  return report;
}

/// One run_loso per calibration size, merged into a single report whose
/// aggregates and significance are keyed by n_calib.
inline EvaluationReport sweep_calibration(TaskSpec task,
                                          const std::vector<SchemeId>& schemes,
                                          const std::vector<int>& calib_values,
                                          const DanConfig& dan_config,
                                          const DecodeParams& decode) {
  if (calib_values.empty())
    throw ConfigError("ConfigRange", "no calibration sizes requested");
  for (int v : calib_values)
    if (v < 2) throw ConfigError("CalibTooSmall", "n_calib must be >= 2");

  EvaluationReport merged;
  std::string values;
  for (std::size_t i = 0; i < calib_values.size(); ++i) {
    task.n_calib = calib_values[i];
    EvaluationReport sub = run_loso(task, schemes, dan_config, decode);
    if (i == 0) {
      merged.task_name = sub.task_name;
      merged.config_echo = sub.config_echo;
    }
    merged.cells.insert(merged.cells.end(), sub.cells.begin(), sub.cells.end());
    merged.failures.insert(merged.failures.end(), sub.failures.begin(),
                           sub.failures.end());
    values += (values.empty() ? "" : ",") + std::to_string(calib_values[i]);
  }
  evaldetail::summarize(merged);
  merged.config_echo += "sweep.n_calib_values=" + values + "\n";
  return merged;
}

/// One run_loso per source-subject count; each repeat samples its own
/// source subset. The target calibration size stays at the minimum of 2.
inline EvaluationReport sweep_sources(TaskSpec task,
                                      const std::vector<SchemeId>& schemes,
                                      const std::vector<int>& source_counts,
                                      const DanConfig& dan_config,
                                      const DecodeParams& decode) {
  if (source_counts.empty())
    throw ConfigError("ConfigRange", "no source counts requested");
  task.n_calib = 2;
  EvaluationReport merged;
  std::string values;
  for (std::size_t i = 0; i < source_counts.size(); ++i) {
    if (source_counts[i] < 1)
      throw ConfigError("ConfigRange", "source counts must be >= 1");
    task.n_source_subjects = source_counts[i];
    EvaluationReport sub = run_loso(task, schemes, dan_config, decode);
    if (i == 0) {
      merged.task_name = sub.task_name;
      merged.config_echo = sub.config_echo;
    }
    merged.cells.insert(merged.cells.end(), sub.cells.begin(), sub.cells.end());
    merged.failures.insert(merged.failures.end(), sub.failures.begin(),
                           sub.failures.end());
    values += (values.empty() ? "" : ",") + std::to_string(source_counts[i]);
  }
  evaldetail::summarize(merged);
  merged.config_echo += "sweep.source_counts=" + values + "\n";
  return merged;
}

/// Mean accuracy of one scheme over every cell in the report.
inline double scheme_mean_accuracy(const EvaluationReport& report,
                                   SchemeId scheme) {
  const std::string name = scheme_name(scheme);
  double sum = 0.0;
  int n = 0;
  for (const auto& c : report.cells)
    if (c.scheme == name) {
      sum += c.accuracy;
      ++n;
    }
  if (n == 0)
    throw DataError("Empty", "no cells for scheme '" + name + "'");
  return sum / n;
}

enum class ReportFormat { kCsv, kJsonLines };

/// Writes the per-cell table. CSV columns are fixed; JSON lines carry one
/// object per cell with the same fields. Accuracy is written with full
/// round-trip precision so reloaded aggregates match in-memory ones.
inline void emit_report(const EvaluationReport& report, const std::string& path,
                        ReportFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw DataError("IoFailure", "cannot open " + path + " for writing");
  if (format == ReportFormat::kCsv) {
    out << "task,scheme,target_subject,n_calib,n_sources,repeat,accuracy,"
           "seconds\n";
    char buf[64];
    for (const auto& c : report.cells) {
      std::snprintf(buf, sizeof buf, "%.17g", c.accuracy);
      out << c.task << ',' << c.scheme << ',' << c.target_subject << ','
          << c.n_calib << ',' << c.n_sources << ',' << c.repeat << ',' << buf;
      std::snprintf(buf, sizeof buf, "%.6f", c.seconds);
      out << ',' << buf << '\n';
    }
  } else {
    for (const auto& c : report.cells) {
      nlohmann::json j{{"task", c.task},
                       {"scheme", c.scheme},
                       {"target_subject", c.target_subject},
                       {"n_calib", c.n_calib},
                       {"n_sources", c.n_sources},
                       {"repeat", c.repeat},
                       {"accuracy", c.accuracy},
                       {"seconds", c.seconds}};
      out << j.dump() << '\n';
    }
  }
  out.flush();
  if (!out) throw DataError("IoFailure", "short write to " + path);
}

/// Reproducibility sidecar: the resolved configuration, aggregates,
/// significance tests, and failures as one JSON document.
inline void write_run_manifest(const EvaluationReport& report,
                               const std::string& path) {
  nlohmann::json j;
  j["task"] = report.task_name;
  j["n_cells"] = report.cells.size();
  nlohmann::json config = nlohmann::json::object();
  std::size_t start = 0;
  while (start < report.config_echo.size()) {
    std::size_t end = report.config_echo.find('\n', start);
    if (end == std::string::npos) end = report.config_echo.size();
    const std::string line = report.config_echo.substr(start, end - start);
    const std::size_t eq = line.find('=');
    if (eq != std::string::npos)
      config[line.substr(0, eq)] = line.substr(eq + 1);
    start = end + 1;
  }
  j["config"] = config;
  j["aggregates"] = nlohmann::json::array();
  for (const auto& a : report.aggregates)
    j["aggregates"].push_back({{"scheme", a.scheme},
                               {"n_calib", a.n_calib},
                               {"n_sources", a.n_sources},
                               {"mean", a.mean},
                               {"stddev", a.stddev},
                               {"n_cells", a.n_cells}});
  j["significance"] = nlohmann::json::array();
  for (const auto& p : report.significance)
    j["significance"].push_back({{"scheme", p.scheme},
                                 {"versus", p.versus},
                                 {"n_calib", p.n_calib},
                                 {"n_sources", p.n_sources},
                                 {"statistic", p.statistic},
                                 {"p_value", p.p_value},
                                 {"n_subjects", p.n_subjects},
                                 {"exact", p.exact}});
  j["failures"] = nlohmann::json::array();
  for (const auto& f : report.failures)
    j["failures"].push_back({{"task", f.task},
                             {"scheme", f.scheme},
                             {"target_subject", f.target_subject},
                             {"repeat", f.repeat},
                             {"code", f.code},
                             {"message", f.message}});
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw DataError("IoFailure", "cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  out.flush();
  if (!out) throw DataError("IoFailure", "short write to " + path);
}

}  // namespace ssvep

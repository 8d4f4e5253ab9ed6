#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "ssvep/dan.hpp"
#include "ssvep/epochs.hpp"
#include "ssvep/log.hpp"
#include "ssvep/rng.hpp"

namespace ssvep {

/// Builds the supervised training set for one source subject: every source
/// trial of stimulus k is paired with the target's stimulus-k template (the
/// mean of the target calibration trials). Pairs from all stimuli go into
/// one pool, but a pair never crosses stimuli.
inline std::vector<TrainPair> make_training_pairs(const EpochSet& source,
                                                  const EpochSet& target_calib) {
  validate(source);
  validate(target_calib);
  if (source.n_samples() != target_calib.n_samples())
    throw DataError("ShapeMismatch",
                    "source and target sample counts differ");

  std::set<int> source_stims(source.labels.begin(), source.labels.end());
  for (int k : source_stims) {
    int n_target = static_cast<int>(trials_for_stimulus(target_calib, k).size());
    if (n_target == 0)
      throw DataError("StimulusMismatch",
                      "target has no calibration trials for stimulus " +
                          std::to_string(k));
    if (n_target < 2)
      throw DataError("TargetTooFew",
                      "stimulus " + std::to_string(k) + " has " +
                          std::to_string(n_target) +
                          " target calibration trials, need >= 2");
  }

  std::vector<TrainPair> pairs;
  pairs.reserve(source.trials.size());
  for (std::size_t i = 0; i < source.trials.size(); ++i) {
    TrainPair p;
    p.x = source.trials[i];
    p.y = mean_trial(target_calib, source.labels[i]);
    p.stimulus = source.labels[i];
    pairs.push_back(std::move(p));
  }
  return pairs;
}

enum class SplitKind { kSubjectWise, kPairWise };

struct TrainHistory {
  std::vector<double> train_loss;  // mean per-pair loss, one entry per epoch
  std::vector<double> val_loss;    // entry 0 is the untrained model
  int best_epoch = 0;
};

struct TrainResult {
  DanModel model;  // snapshot with the lowest validation loss
  TrainHistory history;
};

namespace dandetail {

inline double validation_loss(const DanModel& m,
                              const std::vector<TrainPair>& pairs) {
  double acc = 0.0;
  for (const auto& p : pairs) acc += (dan_forward(m, p.x) - p.y).squaredNorm();
  return acc / static_cast<double>(pairs.size());
}

/// 8:2 index split. Subject-wise shuffles the distinct group ids and holds
/// out whole subjects; pair-wise shuffles the pairs directly. Both sides
/// are guaranteed non-empty or the split throws.
inline std::pair<std::vector<int>, std::vector<int>> split_indices(
    const std::vector<TrainPair>& pairs, SplitKind kind, double val_fraction,
    Rng& rng) {
  std::vector<int> train, val;
  if (kind == SplitKind::kSubjectWise) {
    std::set<int> group_set;
    for (const auto& p : pairs) group_set.insert(p.group);
    std::vector<int> groups(group_set.begin(), group_set.end());
    if (groups.size() < 2)
      throw DataError("EmptyTrainSet",
                      "subject-wise split needs >= 2 source subjects, got " +
                          std::to_string(groups.size()));
    rng.shuffle(groups);
    const int k = static_cast<int>(groups.size());
    int n_train = std::clamp(
        static_cast<int>(std::floor((1.0 - val_fraction) * k)), 1, k - 1);
    std::set<int> train_groups(groups.begin(), groups.begin() + n_train);
    for (int i = 0; i < static_cast<int>(pairs.size()); ++i)
      (train_groups.count(pairs[i].group) ? train : val).push_back(i);
  } else {
    std::vector<int> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    const int n = static_cast<int>(order.size());
    if (n < 2)
      throw DataError("EmptyTrainSet",
                      "pair-wise split needs >= 2 pairs, got " +
                          std::to_string(n));
    rng.shuffle(order);
    int n_train = std::clamp(
        static_cast<int>(std::floor((1.0 - val_fraction) * n)), 1, n - 1);
    train.assign(order.begin(), order.begin() + n_train);
    val.assign(order.begin() + n_train, order.end());
  }
  if (train.empty() || val.empty())
    throw DataError("EmptyTrainSet", "degenerate train/validation split");
  return {train, val};
}

}  // namespace dandetail

/// Mini-batch Adam training with an 8:2 validation split. Validation runs
/// in infer mode before any training (epoch 0) and after every epoch; the
/// returned model is the snapshot with the lowest validation loss, earliest
/// epoch winning ties. Deterministic given config.seed.
inline TrainResult train_phase(const DanModel& initial,
                               const std::vector<TrainPair>& pairs, int epochs,
                               SplitKind split, const DanConfig& config) {
  if (pairs.empty()) throw DataError("EmptyTrainSet", "no training pairs");
  if (epochs < 0) throw ConfigError("ConfigRange", "epochs must be >= 0");
  Rng rng(config.seed);
  auto [train_idx, val_idx] =
      dandetail::split_indices(pairs, split, config.val_fraction, rng);
  std::vector<TrainPair> val_pairs;
  val_pairs.reserve(val_idx.size());
  for (int i : val_idx) val_pairs.push_back(pairs[i]);

  TrainResult out;
  out.model = initial;
  out.history.val_loss.push_back(
      dandetail::validation_loss(initial, val_pairs));
  out.history.best_epoch = 0;
  double best_val = out.history.val_loss[0];

  DanModel cur = initial;
  AdamState adam = adam_init(cur);
  const int n_train = static_cast<int>(train_idx.size());
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    rng.shuffle(train_idx);
    double epoch_sq_sum = 0.0;
    for (int start = 0; start < n_train; start += config.batch_size) {
      const int len = std::min(config.batch_size, n_train - start);
      std::vector<TrainPair> batch;
      batch.reserve(len);
      for (int j = 0; j < len; ++j) batch.push_back(pairs[train_idx[start + j]]);
      DanBatchCache cache = dan_forward_batch(cur, batch);
      dan_update_running_stats(cur, cache);
      DanGrads grads = dan_backward(cur, cache, batch);
      // Aggregate the epoch loss before the step so it reflects the
      // parameters the gradients were taken at.
      Eigen::MatrixXd target(cur.config.n_out_channels,
                             cache.pred.cols());
      for (int j = 0; j < len; ++j)
        target.middleCols(static_cast<Eigen::Index>(j) * cur.config.n_samples,
                          cur.config.n_samples) = batch[j].y;
      epoch_sq_sum += (cache.pred - target).squaredNorm();
      adam_step(cur, adam, grads, config.learning_rate);
    }
    out.history.train_loss.push_back(epoch_sq_sum / n_train);
    const double val = dandetail::validation_loss(cur, val_pairs);
    out.history.val_loss.push_back(val);
    if (val < best_val) {
      best_val = val;
      out.model = cur;
      out.history.best_epoch = epoch;
    }
  }
  return out;
}

struct PretrainResult {
  DanModel pretrained;
  std::vector<DanModel> per_source;  // one fine-tuned model per source
  bool single_source_fallback = false;
};

namespace dandetail {
inline DanConfig resolve_dims(DanConfig c, const EpochSet& source,
                              const EpochSet& target_calib) {
  if (c.n_in_channels == 0) c.n_in_channels = source.n_channels();
  if (c.n_out_channels == 0) c.n_out_channels = target_calib.n_channels();
  if (c.n_samples == 0) c.n_samples = source.n_samples();
  return c;
}
}  // namespace dandetail

/// Two-phase training: one model pretrained on the pooled pairs of every
/// source subject (subject-wise validation split), then one fine-tuned copy
/// per source trained on that source's pairs alone (pair-wise split). With
/// a single source the pretrain phase is skipped and the source is trained
/// for the combined epoch budget; the fallback is reported on the result.
inline PretrainResult pretrain_then_finetune(const std::vector<EpochSet>& sources,
                                             const EpochSet& target_calib,
                                             const DanConfig& config) {
  if (sources.empty()) throw DataError("EmptyTrainSet", "no source subjects");
  DanConfig cfg = dandetail::resolve_dims(config, sources.front(), target_calib);
  validate_dan_config(cfg);

  std::vector<std::vector<TrainPair>> per_source_pairs(sources.size());
  std::vector<TrainPair> pooled;
  for (std::size_t k = 0; k < sources.size(); ++k) {
    per_source_pairs[k] = make_training_pairs(sources[k], target_calib);
    for (auto& p : per_source_pairs[k]) p.group = static_cast<int>(k);
    pooled.insert(pooled.end(), per_source_pairs[k].begin(),
                  per_source_pairs[k].end());
  }

  PretrainResult out;
  if (sources.size() == 1) {
    out.single_source_fallback = true;
    log::warn("single source subject: skipping pretrain, training " +
              std::to_string(cfg.pretrain_epochs + cfg.finetune_epochs) +
              " epochs on that source");
    TrainResult t =
        train_phase(dan_init(cfg), per_source_pairs[0],
                    cfg.pretrain_epochs + cfg.finetune_epochs,
                    SplitKind::kPairWise, cfg);
    out.pretrained = t.model;
    out.per_source.push_back(t.model);
    return out;
  }

  TrainResult pre = train_phase(dan_init(cfg), pooled, cfg.pretrain_epochs,
                                SplitKind::kSubjectWise, cfg);
  out.pretrained = pre.model;
  out.per_source.reserve(sources.size());
  for (std::size_t k = 0; k < sources.size(); ++k) {
    DanConfig fine_cfg = cfg;
    fine_cfg.seed = derive_seed(cfg.seed, k + 1);
    TrainResult t = train_phase(pre.model, per_source_pairs[k],
                                cfg.finetune_epochs, SplitKind::kPairWise,
                                fine_cfg);
    out.per_source.push_back(t.model);
  }
  return out;
}

/// Maps every trial of a source subject through the model in infer mode,
/// producing surrogate trials in the target's channel space. Stimulus
/// metadata is preserved; subject and trial ids are tagged with the arrow
/// so provenance survives pooling.
inline EpochSet align_transform(const DanModel& model, const EpochSet& source,
                                const std::string& target_label = "target",
                                std::vector<std::string> out_channel_names = {}) {
  validate(source);
  if (source.n_channels() != model.config.n_in_channels ||
      source.n_samples() != model.config.n_samples)
    throw DataError("ShapeMismatch",
                    "source shape " + std::to_string(source.n_channels()) +
                        "x" + std::to_string(source.n_samples()) +
                        " does not match model input " +
                        std::to_string(model.config.n_in_channels) + "x" +
                        std::to_string(model.config.n_samples));
  const int nco = model.config.n_out_channels;
  if (out_channel_names.empty()) {
    if (nco == source.n_channels())
      out_channel_names = source.channel_names;
    else
      for (int c = 0; c < nco; ++c)
        out_channel_names.push_back("ch" + std::to_string(c + 1));
  }
  if (static_cast<int>(out_channel_names.size()) != nco)
    throw DataError("ShapeMismatch", "output channel name count mismatch");

  EpochSet out;
  out.labels = source.labels;
  out.stim_freqs = source.stim_freqs;
  out.stim_phases = source.stim_phases;
  out.fs = source.fs;
  out.subject_id = source.subject_id + "->" + target_label;
  out.channel_names = std::move(out_channel_names);
  out.declared_samples = source.n_samples();
  out.trials.reserve(source.trials.size());
  for (const auto& t : source.trials) out.trials.push_back(dan_forward(model, t));
  EpochSet tagged_src = source;
  ensure_trial_ids(tagged_src);
  out.trial_ids.reserve(tagged_src.trial_ids.size());
  for (const auto& id : tagged_src.trial_ids)
    out.trial_ids.push_back(id + "->" + target_label);
  return out;
}

}  // namespace ssvep

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssvep/epochs.hpp"
#include "ssvep/errors.hpp"
#include "ssvep/toml_lite.hpp"

namespace ssvep {

// ---------------------------------------------------------------------------
// EPOC container: "EPOC" magic, u16 version, u32 n_trials/n_channels/
// n_samples, f64 fs, f32 samples (trial-major, channel-major), then a
// u32-length-prefixed JSON metadata block. All integers and floats are
// little-endian.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class ByteReader {
public:
  ByteReader(const std::string& bytes, const std::string& origin)
      : bytes_(bytes), origin_(origin) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(byte() | byte() << 8); }

  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  std::string raw(std::size_t n) {
    if (pos_ + n > bytes_.size())
      throw DataError("FormatViolation", origin_ + ": truncated file");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool exhausted() const { return pos_ == bytes_.size(); }

private:
  std::uint8_t byte() {
    if (pos_ >= bytes_.size())
      throw DataError("FormatViolation", origin_ + ": truncated file");
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline constexpr std::uint16_t kEpocVersion = 1;

/// Serialize to the EPOC byte layout. Deterministic: identical sets yield
/// identical bytes (JSON keys are emitted sorted).
inline std::string encode_epochs(const EpochSet& e) {
  validate(e);
  std::string out;
  out += "EPOC";
  detail::put_u16(out, kEpocVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(e.n_trials()));
  detail::put_u32(out, static_cast<std::uint32_t>(e.n_channels()));
  detail::put_u32(out, static_cast<std::uint32_t>(e.n_samples()));
  detail::put_f64(out, e.fs);
  for (const auto& trial : e.trials)
    for (int c = 0; c < trial.rows(); ++c)
      for (int s = 0; s < trial.cols(); ++s)
        detail::put_f32(out, static_cast<float>(trial(c, s)));
  nlohmann::json meta;
  meta["labels"] = e.labels;
  meta["stim_freqs"] = e.stim_freqs;
  meta["stim_phases"] = e.stim_phases;
  meta["channel_names"] = e.channel_names;
  meta["subject_id"] = e.subject_id;
  std::string meta_str = meta.dump();
  detail::put_u32(out, static_cast<std::uint32_t>(meta_str.size()));
  out += meta_str;
  return out;
}

inline EpochSet decode_epochs(const std::string& bytes,
                              const std::string& origin = "<bytes>") {
  detail::ByteReader r(bytes, origin);
  if (r.raw(4) != "EPOC")
    throw DataError("FormatViolation", origin + ": bad magic, expected EPOC");
  std::uint16_t version = r.u16();
  if (version != kEpocVersion)
    throw DataError("FormatViolation", origin + ": unsupported version " +
                                           std::to_string(version));
  const std::uint32_t n_trials = r.u32();
  const std::uint32_t n_channels = r.u32();
  const std::uint32_t n_samples = r.u32();
  EpochSet e;
  e.fs = r.f64();
  e.declared_samples = static_cast<int>(n_samples);
  e.trials.reserve(n_trials);
  for (std::uint32_t t = 0; t < n_trials; ++t) {
    Eigen::MatrixXd m(n_channels, n_samples);
    for (std::uint32_t c = 0; c < n_channels; ++c)
      for (std::uint32_t s = 0; s < n_samples; ++s)
        m(c, s) = static_cast<double>(r.f32());
    e.trials.push_back(std::move(m));
  }
  std::uint32_t meta_len = r.u32();
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.raw(meta_len));
  } catch (const nlohmann::json::exception& ex) {
    throw DataError("FormatViolation",
                    origin + ": metadata is not valid JSON: " + ex.what());
  }
  try {
    meta.at("labels").get_to(e.labels);
    meta.at("stim_freqs").get_to(e.stim_freqs);
    meta.at("stim_phases").get_to(e.stim_phases);
    meta.at("channel_names").get_to(e.channel_names);
    meta.at("subject_id").get_to(e.subject_id);
  } catch (const nlohmann::json::exception& ex) {
    throw DataError("FormatViolation",
                    origin + ": incomplete metadata: " + ex.what());
  }
  if (e.channel_names.size() != n_channels)
    throw DataError("FormatViolation",
                    origin + ": channel_names length does not match header");
  if (e.labels.size() != n_trials)
    throw DataError("FormatViolation",
                    origin + ": labels length does not match header");
  validate(e);
  return e;
}

inline void save_epochs(const EpochSet& e, const std::string& path) {
  std::string bytes = encode_epochs(e);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("IoFailure", "cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw DataError("IoFailure", "short write to " + path);
}

inline EpochSet load_epoc_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("MissingFile", "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return decode_epochs(bytes, path);
}

// ---------------------------------------------------------------------------
// Dataset manifests
// ---------------------------------------------------------------------------

struct DatasetManifest {
  std::vector<std::string> subject_ids;
  std::string path_template = "{subject}.epoc";
  double fs_raw = 0.0;
  double onset_offset_s = 0.0;  // pre-stimulus samples stored before onset
  double latency_s = 0.0;
  double window_s = 0.0;
  std::vector<std::string> channel_subset;
  double notch_hz = 0.0;  // 0 disables the notch
  int decim_factor = 1;
};

inline void validate_manifest(const DatasetManifest& m) {
  if (m.latency_s < 0.0)
    throw ConfigError("ConfigRange", "latency_s must be >= 0");
  if (m.window_s <= 0.0)
    throw ConfigError("ConfigRange", "window_s must be > 0");
  if (m.decim_factor < 1)
    throw ConfigError("InvalidFactor", "decim_factor must be >= 1");
  if (m.fs_raw <= 0.0)
    throw ConfigError("ConfigRange", "fs_raw must be > 0");
  if (std::fmod(m.fs_raw, static_cast<double>(m.decim_factor)) != 0.0)
    throw ConfigError("InvalidFactor",
                      "fs_raw must be divisible by decim_factor");
}

/// Reads manifest fields from `t`, under [dataset] when that section exists,
/// otherwise from top-level keys.
inline DatasetManifest load_manifest(const TomlTable& t) {
  auto key = [&t](const std::string& k) {
    return t.has("dataset." + k) ? "dataset." + k : k;
  };
  DatasetManifest m;
  if (t.has(key("subject_ids")))
    m.subject_ids = t.get_string_array(key("subject_ids"));
  m.path_template = t.get_string_or(key("path_template"), m.path_template);
  m.fs_raw = t.get_double(key("fs_raw"));
  m.onset_offset_s = t.get_double_or(key("onset_offset_s"), 0.0);
  m.latency_s = t.get_double_or(key("latency_s"), 0.0);
  m.window_s = t.get_double(key("window_s"));
  if (t.has(key("channel_subset")))
    m.channel_subset = t.get_string_array(key("channel_subset"));
  m.notch_hz = t.get_double_or(key("notch_hz"), 0.0);
  m.decim_factor = static_cast<int>(t.get_int_or(key("decim_factor"), 1));
  validate_manifest(m);
  return m;
}

inline DatasetManifest load_manifest_file(const std::string& path) {
  return load_manifest(TomlTable::parse_file(path));
}

inline std::string subject_file_name(const DatasetManifest& m,
                                     const std::string& subject) {
  std::string name = m.path_template;
  const std::string tag = "{subject}";
  auto pos = name.find(tag);
  if (pos == std::string::npos) return subject + ".epoc";
  name.replace(pos, tag.size(), subject);
  return name;
}

/// Loads one subject's raw recording from `root` using the manifest's path
/// template. The returned set is unpreprocessed, at fs_raw.
inline EpochSet load_epochs(const std::string& root, const DatasetManifest& m,
                            const std::string& subject) {
  if (std::find(m.subject_ids.begin(), m.subject_ids.end(), subject) ==
      m.subject_ids.end())
    throw DataError("SubjectUnknown",
                    "subject '" + subject + "' not listed in manifest");
  std::string path = root.empty() ? subject_file_name(m, subject)
                                  : root + "/" + subject_file_name(m, subject);
  EpochSet e = load_epoc_file(path);
  if (m.fs_raw > 0.0 && std::abs(e.fs - m.fs_raw) > 1e-9 * m.fs_raw)
    throw DataError("FormatViolation",
                    path + ": fs " + std::to_string(e.fs) +
                        " does not match manifest fs_raw " +
                        std::to_string(m.fs_raw));
  return e;
}

// ---------------------------------------------------------------------------
// Built-in dataset profiles
// ---------------------------------------------------------------------------

/// Manifest plus decoding defaults for one of the public recording setups.
struct DatasetProfile {
  std::string name;
  DatasetManifest manifest;
  std::vector<double> stim_freqs;
  std::vector<double> stim_phases;
  int n_banks = 1;
};

namespace detail {
inline std::vector<std::string> numbered_subjects(const std::string& prefix,
                                                  int count) {
  std::vector<std::string> ids;
  ids.reserve(count);
  for (int i = 1; i <= count; ++i) ids.push_back(prefix + std::to_string(i));
  return ids;
}

inline std::vector<double> arange(double start, double step, int count) {
  std::vector<double> v(count);
  for (int i = 0; i < count; ++i) v[i] = start + step * i;
  return v;
}
}  // namespace detail

/// 64-channel cue-guided speller recordings: 35 subjects, 40 stimuli at
/// 8.0..15.8 Hz step 0.2, phases k*0.5*pi, epochs starting at stimulus onset.
inline DatasetProfile dataset1_profile() {
  DatasetProfile p;
  p.name = "dataset1";
  p.manifest.subject_ids = detail::numbered_subjects("S", 35);
  p.manifest.fs_raw = 1000.0;
  p.manifest.onset_offset_s = 0.0;
  p.manifest.latency_s = 0.14;
  p.manifest.window_s = 1.5;
  p.manifest.channel_subset = occipital_channels();
  p.manifest.notch_hz = 50.0;
  p.manifest.decim_factor = 4;
  p.stim_freqs = detail::arange(8.0, 0.2, 40);
  p.stim_phases = detail::arange(0.0, 0.5 * std::numbers::pi, 40);
  p.n_banks = 5;
  return p;
}

/// Wearable 8-channel recordings: 102 subjects, 12 stimuli at 9.25..14.75 Hz
/// step 0.5, phases k*0.5*pi, epochs stored with 0.5 s before onset.
inline DatasetProfile dataset2_profile() {
  DatasetProfile p;
  p.name = "dataset2";
  p.manifest.subject_ids = detail::numbered_subjects("S", 102);
  p.manifest.fs_raw = 1000.0;
  p.manifest.onset_offset_s = 0.5;
  p.manifest.latency_s = 0.14;
  p.manifest.window_s = 1.5;
  p.manifest.channel_subset = occipital_channels();
  p.manifest.notch_hz = 50.0;
  p.manifest.decim_factor = 4;
  p.stim_freqs = detail::arange(9.25, 0.5, 12);
  p.stim_phases = detail::arange(0.0, 0.5 * std::numbers::pi, 12);
  p.n_banks = 3;
  return p;
}

}  // namespace ssvep

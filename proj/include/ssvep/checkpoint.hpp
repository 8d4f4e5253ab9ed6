#pragma once

#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>

#include "ssvep/dan.hpp"
#include "ssvep/epoch_io.hpp"

namespace ssvep {

inline constexpr std::uint16_t kDanmVersion = 1;

namespace detail {

/// FNV-1a over a byte range; guards checkpoints against silent corruption.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline void put_matrix(std::string& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) put_f64(out, m(i, j));
}

inline void put_vector(std::string& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(out, v(i));
}

inline Eigen::MatrixXd read_matrix(ByteReader& r, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = r.f64();
  return m;
}

inline Eigen::VectorXd read_vector(ByteReader& r, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = r.f64();
  return v;
}

}  // namespace detail

/// Checkpoint byte layout: "DANM" magic, u16 version, the config block
/// (dims and training hyperparameters), then every tensor as f64
/// little-endian column-major in the order W_s, b_s, bn_gamma, bn_beta,
/// bn_run_mean, bn_run_var, W_1, b_1, W_2, b_2, and finally an FNV-1a
/// checksum of all preceding bytes.
inline std::string encode_model(const DanModel& m) {
  validate_dan_config(m.config);
  std::string out;
  out += "DANM";
  detail::put_u16(out, kDanmVersion);
  const DanConfig& c = m.config;
  detail::put_u32(out, static_cast<std::uint32_t>(c.n_in_channels));
  detail::put_u32(out, static_cast<std::uint32_t>(c.n_filters));
  detail::put_u32(out, static_cast<std::uint32_t>(c.hidden_dim));
  detail::put_u32(out, static_cast<std::uint32_t>(c.n_out_channels));
  detail::put_u32(out, static_cast<std::uint32_t>(c.n_samples));
  detail::put_f64(out, c.learning_rate);
  detail::put_u32(out, static_cast<std::uint32_t>(c.batch_size));
  detail::put_u32(out, static_cast<std::uint32_t>(c.pretrain_epochs));
  detail::put_u32(out, static_cast<std::uint32_t>(c.finetune_epochs));
  detail::put_f64(out, c.val_fraction);
  detail::put_u64(out, c.seed);
  detail::put_f64(out, c.bn_eps);
  detail::put_f64(out, c.bn_momentum);
  out.push_back(c.use_tanh ? '\1' : '\0');
  detail::put_matrix(out, m.W_s);
  detail::put_vector(out, m.b_s);
  detail::put_vector(out, m.bn_gamma);
  detail::put_vector(out, m.bn_beta);
  detail::put_vector(out, m.bn_run_mean);
  detail::put_vector(out, m.bn_run_var);
  detail::put_matrix(out, m.W_1);
  detail::put_vector(out, m.b_1);
  detail::put_matrix(out, m.W_2);
  detail::put_vector(out, m.b_2);
  detail::put_u64(out, detail::fnv1a(out));
  return out;
}

inline DanModel decode_model(const std::string& bytes,
                             const std::string& origin) {
  if (bytes.size() < 14 || bytes.substr(0, 4) != "DANM")
    throw DataError("FormatViolation", origin + ": not a DANM checkpoint");
  // Verify integrity before interpreting anything so corruption anywhere in
  // the file reports as ChecksumMismatch, not as a downstream parse error.
  const std::string body = bytes.substr(0, bytes.size() - 8);
  {
    detail::ByteReader tail(bytes, origin);
    tail.raw(bytes.size() - 8);
    if (tail.u64() != detail::fnv1a(body))
      throw DataError("ChecksumMismatch", origin + ": checkpoint corrupt");
  }
  detail::ByteReader r(body, origin);
  r.raw(4);
  const std::uint16_t version = r.u16();
  if (version != kDanmVersion)
    throw DataError("FormatViolation", origin + ": unsupported version " +
                                           std::to_string(version));
  DanModel m;
  DanConfig& c = m.config;
  c.n_in_channels = static_cast<int>(r.u32());
  c.n_filters = static_cast<int>(r.u32());
  c.hidden_dim = static_cast<int>(r.u32());
  c.n_out_channels = static_cast<int>(r.u32());
  c.n_samples = static_cast<int>(r.u32());
  c.learning_rate = r.f64();
  c.batch_size = static_cast<int>(r.u32());
  c.pretrain_epochs = static_cast<int>(r.u32());
  c.finetune_epochs = static_cast<int>(r.u32());
  c.val_fraction = r.f64();
  c.seed = r.u64();
  c.bn_eps = r.f64();
  c.bn_momentum = r.f64();
  const std::string tanh_byte = r.raw(1);
  if (tanh_byte[0] != '\0' && tanh_byte[0] != '\1')
    throw DataError("FormatViolation", origin + ": bad activation flag");
  c.use_tanh = tanh_byte[0] == '\1';
  validate_dan_config(c);
  m.W_s = detail::read_matrix(r, c.nf(), c.n_in_channels);
  m.b_s = detail::read_vector(r, c.nf());
  m.bn_gamma = detail::read_vector(r, c.nf());
  m.bn_beta = detail::read_vector(r, c.nf());
  m.bn_run_mean = detail::read_vector(r, c.nf());
  m.bn_run_var = detail::read_vector(r, c.nf());
  m.W_1 = detail::read_matrix(r, c.hid(), c.nf());
  m.b_1 = detail::read_vector(r, c.hid());
  m.W_2 = detail::read_matrix(r, c.n_out_channels, c.hid());
  m.b_2 = detail::read_vector(r, c.n_out_channels);
  if (!r.exhausted())
    throw DataError("FormatViolation", origin + ": trailing bytes");
  return m;
}

inline void save_model(const DanModel& m, const std::string& path) {
  std::string bytes = encode_model(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("IoFailure", "cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw DataError("IoFailure", "short write to " + path);
}

inline DanModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("MissingFile", "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return decode_model(bytes, path);
}

}  // namespace ssvep

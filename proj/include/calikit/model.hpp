// Copyright 2026 The calikit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CALIKIT_MODEL_HPP_
#define CALIKIT_MODEL_HPP_

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "calikit/error.hpp"
#include "calikit/random.hpp"

namespace calikit {

/// Weights of the two-layer GCN held in one flat vector. W1 (d x h) occupies
/// the first d*h entries and W2 (h x C) the rest, both column-major, so the
/// matrix views alias the flat storage.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(std::size_t input_dim, std::size_t hidden_dim, std::size_t class_count)
      : d_(input_dim), h_(hidden_dim), c_(class_count),
        flat_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d_ * h_ + h_ * c_))) {}

  ModelParams(std::size_t input_dim, std::size_t hidden_dim, std::size_t class_count,
              Eigen::VectorXd flat)
      : d_(input_dim), h_(hidden_dim), c_(class_count), flat_(std::move(flat)) {
    if (static_cast<std::size_t>(flat_.size()) != d_ * h_ + h_ * c_) {
      throw ShapeError("flat parameter vector has length " + std::to_string(flat_.size()) +
                       ", expected " + std::to_string(d_ * h_ + h_ * c_));
    }
  }

  /// Glorot-uniform initialization, one layer after the other.
  static ModelParams glorot(std::size_t input_dim, std::size_t hidden_dim,
                            std::size_t class_count, Rng& rng) {
    ModelParams p(input_dim, hidden_dim, class_count);
    auto fill = [&rng](auto block, std::size_t fan_in, std::size_t fan_out) {
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (Eigen::Index k = 0; k < block.size(); ++k) block[k] = dist(rng);
    };
    fill(p.flat_.head(static_cast<Eigen::Index>(input_dim * hidden_dim)), input_dim,
         hidden_dim);
    fill(p.flat_.tail(static_cast<Eigen::Index>(hidden_dim * class_count)), hidden_dim,
         class_count);
    return p;
  }

  std::size_t input_dim() const { return d_; }
  std::size_t hidden_dim() const { return h_; }
  std::size_t class_count() const { return c_; }
  std::size_t size() const { return static_cast<std::size_t>(flat_.size()); }

  Eigen::VectorXd& flat() { return flat_; }
  const Eigen::VectorXd& flat() const { return flat_; }

  Eigen::Map<Eigen::MatrixXd> w1() { return {flat_.data(), rows(d_), rows(h_)}; }
  Eigen::Map<const Eigen::MatrixXd> w1() const { return {flat_.data(), rows(d_), rows(h_)}; }
  Eigen::Map<Eigen::MatrixXd> w2() {
    return {flat_.data() + d_ * h_, rows(h_), rows(c_)};
  }
  Eigen::Map<const Eigen::MatrixXd> w2() const {
    return {flat_.data() + d_ * h_, rows(h_), rows(c_)};
  }

  /// Same shape, flat vector shifted by `delta`.
  ModelParams shifted(const Eigen::VectorXd& delta) const {
    return ModelParams(d_, h_, c_, flat_ + delta);
  }

  bool all_finite() const { return flat_.allFinite(); }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.d_ == b.d_ && a.h_ == b.h_ && a.c_ == b.c_ &&
           std::memcmp(a.flat_.data(), b.flat_.data(), a.size() * sizeof(double)) == 0;
  }

 private:
  static Eigen::Index rows(std::size_t n) { return static_cast<Eigen::Index>(n); }

  std::size_t d_ = 0;
  std::size_t h_ = 0;
  std::size_t c_ = 0;
  Eigen::VectorXd flat_;
};

namespace detail {

inline std::uint64_t byteswap64(std::uint64_t x) {
  x = ((x & 0x00000000ffffffffull) << 32) | (x >> 32);
  x = ((x & 0x0000ffff0000ffffull) << 16) | ((x >> 16) & 0x0000ffff0000ffffull);
  x = ((x & 0x00ff00ff00ff00ffull) << 8) | ((x >> 8) & 0x00ff00ff00ff00ffull);
  return x;
}

/// Appends doubles as little-endian IEEE-754 binary64.
inline void write_f64_le(std::ostream& out, const double* data, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    auto bits = std::bit_cast<std::uint64_t>(data[k]);
    if constexpr (std::endian::native == std::endian::big) bits = byteswap64(bits);
    char buf[8];
    std::memcpy(buf, &bits, 8);
    out.write(buf, 8);
  }
}

inline void read_f64_le(std::istream& in, double* data, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    char buf[8];
    if (!in.read(buf, 8)) throw IoError("truncated binary payload");
    std::uint64_t bits = 0;
    std::memcpy(&bits, buf, 8);
    if constexpr (std::endian::native == std::endian::big) bits = byteswap64(bits);
    data[k] = std::bit_cast<double>(bits);
  }
}

}  // namespace detail

/// Checkpoint: one header line "calikit-params v1 d h C" followed by the flat
/// parameter vector as little-endian 64-bit floats.
inline void save_params(const ModelParams& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "calikit-params v1 " << p.input_dim() << ' ' << p.hidden_dim() << ' '
      << p.class_count() << '\n';
  detail::write_f64_le(out, p.flat().data(), p.size());
  if (!out) throw IoError("failed writing " + path.string());
}

inline ModelParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw IoError(path.string() + ": missing header");
  std::istringstream fields(header);
  std::string magic, version;
  std::size_t d = 0, h = 0, c = 0;
  if (!(fields >> magic >> version >> d >> h >> c) || magic != "calikit-params") {
    throw ParseError(path.string() + ": not a calikit checkpoint", 1);
  }
  if (version != "v1") throw ParseError(path.string() + ": unsupported version " + version, 1);
  Eigen::VectorXd flat(static_cast<Eigen::Index>(d * h + h * c));
  detail::read_f64_le(in, flat.data(), static_cast<std::size_t>(flat.size()));
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IoError(path.string() + ": trailing bytes after parameters");
  }
  return ModelParams(d, h, c, std::move(flat));
}

/// Throws CompatibilityError unless `p` fits a dataset with the given feature
/// dimension and class count.
inline void require_compatible(const ModelParams& p, std::size_t feature_dim,
                               std::size_t class_count) {
  if (p.input_dim() != feature_dim || p.class_count() != class_count) {
    throw CompatibilityError("checkpoint expects " + std::to_string(p.input_dim()) +
                             " features and " + std::to_string(p.class_count()) +
                             " classes; dataset has " + std::to_string(feature_dim) + " and " +
                             std::to_string(class_count));
  }
}

}  // namespace calikit

#endif  // CALIKIT_MODEL_HPP_

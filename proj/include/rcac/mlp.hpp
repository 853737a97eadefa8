#pragma once

// Small fully connected network with leaky-rectifier hidden layers and a
// linear output layer, with parameters stored in one flat vector.
//
// Layout of the flat parameter vector, layer by layer from the input:
//   W_l  (out_l x in_l, row-major)   followed by   b_l  (out_l)
// The "hidden block" is every layer but the last; the "output block" is the
// last layer's W and b. For a scalar head the output-layer gradient is
// [h; 1], where h is the activation of the last hidden layer (or the input
// itself when there are no hidden layers).

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rcac/mmdp.hpp"

namespace rcac {

class Mlp {
 public:
  Mlp() = default;
  /// All parameters zero. `sizes` = {input, hidden..., output}.
  explicit Mlp(std::vector<int> sizes, double slope = 0.01);
  /// Entries uniform in [-k, k] with k = 1/sqrt(fan-in) per layer.
  static Mlp uniform_init(std::vector<int> sizes, Rng& rng, double slope = 0.01);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  std::size_t n_layers() const { return sizes_.size() - 1; }
  double slope() const { return slope_; }

  Eigen::Index param_count() const { return params_.size(); }
  Eigen::Index hidden_count() const { return hidden_count_; }
  Eigen::Index output_count() const { return params_.size() - hidden_count_; }

  const Vec& params() const { return params_; }
  Vec& params() { return params_; }
  auto hidden_block() const { return params_.head(hidden_count_); }
  auto hidden_block() { return params_.head(hidden_count_); }
  auto output_block() const { return params_.tail(output_count()); }
  auto output_block() { return params_.tail(output_count()); }

  struct Cache {
    std::vector<Mat> pre;  // pre-activations of hidden layers
    std::vector<Mat> act;  // act[0] = input, act[l] = output of hidden layer l
  };

  Vec forward(const Vec& x) const;
  /// Columns of X are samples; result is output_dim x B.
  Mat forward_batch(const Mat& X) const;
  Mat forward_batch(const Mat& X, Cache& cache) const;

  /// Gradient of output `k` with respect to every parameter.
  Vec backward(const Vec& x, int k = 0) const;
  /// sum_b sum_k upstream(k, b) * d y_kb / d params, from a filled cache.
  Vec backward_batch(const Cache& cache, const Mat& upstream) const;
  /// Last hidden activations (rows) of a filled cache, one column per sample.
  const Mat& last_hidden(const Cache& cache) const { return cache.act.back(); }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    return a.sizes_ == b.sizes_ && a.slope_ == b.slope_ && a.params_ == b.params_;
  }

 private:
  Eigen::Index weight_offset(std::size_t layer) const { return offsets_[layer]; }
  Eigen::Index bias_offset(std::size_t layer) const {
    return offsets_[layer] + static_cast<Eigen::Index>(sizes_[layer + 1]) * sizes_[layer];
  }

  std::vector<int> sizes_;
  double slope_ = 0.01;
  Vec params_;
  std::vector<Eigen::Index> offsets_;
  Eigen::Index hidden_count_ = 0;
};

/// |grad of output-layer parameters|^2 for a scalar head: |h|^2 + 1 per column.
Vec output_gradient_norms(const Mlp& net, const Mlp::Cache& cache);

// ---------------------------------------------------------------------------
// Checkpoints
//
// Text header, one `key value...` entry per line, terminated by a line
// containing only `end`:
//   rcac-mlp 1
//   layers <n0> <n1> ... <nL>
//   slope <double>
//   seed <uint64>
//   count <number of parameters>
//   end
// followed immediately by `count` IEEE-754 binary64 values, little-endian, in
// the flat parameter layout described above.

void save_checkpoint(const Mlp& net, std::uint64_t seed, const std::filesystem::path& path);
struct Checkpoint {
  Mlp net;
  std::uint64_t seed = 0;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rcac

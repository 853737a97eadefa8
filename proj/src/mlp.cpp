#include "rcac/mlp.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "rcac/error.hpp"

namespace rcac {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

Mlp::Mlp(std::vector<int> sizes, double slope) : sizes_(std::move(sizes)), slope_(slope) {
  if (sizes_.size() < 2) throw InputError("network needs an input and an output size");
  for (int s : sizes_)
    if (s < 1) throw InputError("layer sizes must be positive");
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
    if (l + 2 == sizes_.size()) hidden_count_ = offsets_.back();
  }
  params_ = Vec::Zero(total);
}

Mlp Mlp::uniform_init(std::vector<int> sizes, Rng& rng, double slope) {
  Mlp net(std::move(sizes), slope);
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    const double k = 1.0 / std::sqrt(static_cast<double>(net.sizes_[l]));
    std::uniform_real_distribution<double> u(-k, k);
    const Eigen::Index begin = net.offsets_[l];
    const Eigen::Index end = l + 1 < net.n_layers() ? net.offsets_[l + 1] : net.params_.size();
    for (Eigen::Index p = begin; p < end; ++p) net.params_(p) = u(rng);
  }
  return net;
}

Mat Mlp::forward_batch(const Mat& X, Cache& cache) const {
  if (X.rows() != input_dim()) throw InputError("network input has wrong dimension");
  cache.pre.clear();
  cache.act.clear();
  cache.act.push_back(X);
  for (std::size_t l = 0; l < n_layers(); ++l) {
    Eigen::Map<const RowMat> W(params_.data() + weight_offset(l), sizes_[l + 1], sizes_[l]);
    Eigen::Map<const Vec> b(params_.data() + bias_offset(l), sizes_[l + 1]);
    Mat z = W * cache.act.back();
    z.colwise() += b;
    if (l + 1 == n_layers()) return z;
    Mat h = z.unaryExpr([s = slope_](double v) { return v > 0.0 ? v : s * v; });
    cache.pre.push_back(std::move(z));
    cache.act.push_back(std::move(h));
  }
  return {};  // unreachable: n_layers() >= 1
}

Mat Mlp::forward_batch(const Mat& X) const {
  Cache cache;
  return forward_batch(X, cache);
}

Vec Mlp::forward(const Vec& x) const {
  if (x.size() != input_dim()) throw InputError("network input has wrong dimension");
  return forward_batch(Mat(x)).col(0);
}

Vec Mlp::backward_batch(const Cache& cache, const Mat& upstream) const {
  if (upstream.rows() != output_dim() || upstream.cols() != cache.act.front().cols())
    throw InputError("upstream gradient has wrong shape");
  Vec grad = Vec::Zero(params_.size());
  Mat delta = upstream;
  for (std::size_t l = n_layers(); l-- > 0;) {
    Eigen::Map<RowMat> gW(grad.data() + weight_offset(l), sizes_[l + 1], sizes_[l]);
    Eigen::Map<Vec> gb(grad.data() + bias_offset(l), sizes_[l + 1]);
    gW.noalias() = delta * cache.act[l].transpose();
    gb = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::Map<const RowMat> W(params_.data() + weight_offset(l), sizes_[l + 1], sizes_[l]);
    Mat back = W.transpose() * delta;
    const Mat& z = cache.pre[l - 1];
    delta = back.binaryExpr(z, [s = slope_](double g, double v) { return v > 0.0 ? g : s * g; });
  }
  return grad;
}

Vec Mlp::backward(const Vec& x, int k) const {
  if (k < 0 || k >= output_dim()) throw InputError("output index out of range");
  Cache cache;
  forward_batch(Mat(x), cache);
  Mat up = Mat::Zero(output_dim(), 1);
  up(k, 0) = 1.0;
  return backward_batch(cache, up);
}

Vec output_gradient_norms(const Mlp& net, const Mlp::Cache& cache) {
  if (net.output_dim() != 1) throw InputError("output-gradient norm is defined for scalar heads");
  return (net.last_hidden(cache).colwise().squaredNorm().array() + 1.0).matrix().transpose();
}

// ---------------------------------------------------------------------------

void save_checkpoint(const Mlp& net, std::uint64_t seed, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << "rcac-mlp 1\nlayers";
  for (int s : net.sizes()) out << ' ' << s;
  std::ostringstream slope;
  slope.precision(17);
  slope << net.slope();
  out << "\nslope " << slope.str() << "\nseed " << seed << "\ncount " << net.param_count() << "\nend\n";
  for (Eigen::Index k = 0; k < net.param_count(); ++k) {
    auto bits = std::bit_cast<std::uint64_t>(net.params()(k));
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xFFu);
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "rcac-mlp 1") throw IoError("not an rcac-mlp checkpoint: " + path.string());
  std::vector<int> sizes;
  double slope = 0.01;
  std::uint64_t seed = 0;
  long long count = -1;
  while (std::getline(in, line) && line != "end") {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "layers") {
      for (int s; ls >> s;) sizes.push_back(s);
    } else if (key == "slope") {
      ls >> slope;
    } else if (key == "seed") {
      ls >> seed;
    } else if (key == "count") {
      ls >> count;
    } else {
      throw IoError("unknown checkpoint header key '" + key + "'");
    }
  }
  if (line != "end") throw IoError("truncated checkpoint header");
  Checkpoint ck{Mlp(sizes, slope), seed};
  if (count != ck.net.param_count()) throw IoError("checkpoint parameter count does not match layers");
  for (Eigen::Index k = 0; k < ck.net.param_count(); ++k) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw IoError("truncated checkpoint payload");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    ck.net.params()(k) = std::bit_cast<double>(bits);
  }
  return ck;
}

}  // namespace rcac

#include "spn/nn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "spn/error.hpp"
#include "spn/io.hpp"
#include "spn/random.hpp"

namespace spn::nn {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstRowMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using RowMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

std::size_t product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int s : shape) n *= static_cast<std::size_t>(s);
  return n;
}

struct BlockShape {
  int in_channels;
  int out_channels;
  int height;  // spatial size at the block input (= conv output)
  int width;
  bool pool;
};

std::vector<BlockShape> block_shapes(const NetworkConfig& c) {
  std::vector<BlockShape> out;
  int ch = 1;
  int h = c.input_height;
  int w = c.input_width;
  for (const auto& b : c.trunk) {
    out.push_back({ch, b.out_channels, h, w, b.pool});
    ch = b.out_channels;
    if (b.pool) {
      h /= 2;
      w /= 2;
    }
  }
  return out;
}

// Activations are stored as [channels, batch * height * width], column-major.
template <typename T>
void im2col(const Mat<T>& in, int channels, int batch, int h, int w, Mat<T>& cols) {
  const int hw = h * w;
  cols.resize(channels * 9, static_cast<Eigen::Index>(batch) * hw);
  for (int n = 0; n < batch; ++n) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Eigen::Index j = static_cast<Eigen::Index>(n) * hw + y * w + x;
        T* dst = cols.col(j).data();
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = x + kx - 1;
            const int k = ky * 3 + kx;
            if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
              for (int c = 0; c < channels; ++c) dst[c * 9 + k] = T(0);
            } else {
              const T* src = in.col(static_cast<Eigen::Index>(n) * hw + sy * w + sx).data();
              for (int c = 0; c < channels; ++c) dst[c * 9 + k] = src[c];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const Mat<T>& cols, int channels, int batch, int h, int w, Mat<T>& out) {
  const int hw = h * w;
  out.setZero(channels, static_cast<Eigen::Index>(batch) * hw);
  for (int n = 0; n < batch; ++n) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const T* src = cols.col(static_cast<Eigen::Index>(n) * hw + y * w + x).data();
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= w) continue;
            T* dst = out.col(static_cast<Eigen::Index>(n) * hw + sy * w + sx).data();
            const int k = ky * 3 + kx;
            for (int c = 0; c < channels; ++c) dst[c] += src[c * 9 + k];
          }
        }
      }
    }
  }
}

// 2x2 max-pool; `arg` records the winning input column (first maximum on ties).
template <typename T>
void maxpool(const Mat<T>& in, int channels, int batch, int h, int w, Mat<T>& out, std::vector<int>& arg) {
  const int oh = h / 2;
  const int ow = w / 2;
  const int hw = h * w;
  const int ohw = oh * ow;
  out.resize(channels, static_cast<Eigen::Index>(batch) * ohw);
  arg.resize(static_cast<std::size_t>(out.size()));
  for (int n = 0; n < batch; ++n) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const Eigen::Index oj = static_cast<Eigen::Index>(n) * ohw + y * ow + x;
        const int base = n * hw + 2 * y * w + 2 * x;
        const int cand[4] = {base, base + 1, base + w, base + w + 1};
        for (int c = 0; c < channels; ++c) {
          int best = cand[0];
          T v = in(c, best);
          for (int k = 1; k < 4; ++k) {
            if (in(c, cand[k]) > v) {
              v = in(c, cand[k]);
              best = cand[k];
            }
          }
          out(c, oj) = v;
          arg[static_cast<std::size_t>(oj) * channels + c] = best;
        }
      }
    }
  }
}

template <typename T>
void unpool(const Mat<T>& grad_out, const std::vector<int>& arg, int channels, Eigen::Index in_cols, Mat<T>& grad_in) {
  grad_in.setZero(channels, in_cols);
  for (Eigen::Index j = 0; j < grad_out.cols(); ++j) {
    for (int c = 0; c < channels; ++c) {
      grad_in(c, arg[static_cast<std::size_t>(j) * channels + c]) += grad_out(c, j);
    }
  }
}

template <typename T>
struct Workspace {
  int batch = 0;
  std::vector<Mat<T>> inputs;   // block inputs, inputs[0] is the image batch
  std::vector<Mat<T>> cols;
  std::vector<Mat<T>> relu;     // post-ReLU conv outputs (pre-pool)
  std::vector<std::vector<int>> pool_arg;
  Mat<T> trunk_out;
  Mat<T> features;              // [D, N]
  std::vector<Mat<T>> hidden;   // post-ReLU hidden activations
  Mat<T> logits;                // [classes, N]
  Mat<T> collapse;              // [1, N * h * w]
  Mat<T> depth;                 // [H * W, N]
};

}  // namespace

template <typename T>
Tensor<T>::Tensor(std::vector<int> s, T fill) : shape(std::move(s)), data(product(shape), fill) {}

int NetworkConfig::downsampling() const {
  int f = 1;
  for (const auto& b : trunk) {
    if (b.pool) f *= 2;
  }
  return f;
}

void NetworkConfig::validate() const {
  if (input_width <= 0 || input_height <= 0) throw Error(ErrorCode::InvalidConfig, "input size must be positive");
  if (trunk.empty()) throw Error(ErrorCode::InvalidConfig, "trunk needs at least one block");
  for (const auto& b : trunk) {
    if (b.out_channels <= 0) throw Error(ErrorCode::InvalidConfig, "conv channels must be positive");
  }
  for (int h : hidden) {
    if (h <= 0) throw Error(ErrorCode::InvalidConfig, "hidden width must be positive");
  }
  if (num_classes != kNumClasses) throw Error(ErrorCode::InvalidConfig, "classifier has 6 outputs");
  const int f = downsampling();
  if (input_width % f != 0 || input_height % f != 0) {
    throw Error(ErrorCode::InvalidConfig, "input size must be divisible by the trunk downsampling");
  }
}

nlohmann::json to_json(const NetworkConfig& c) {
  nlohmann::json trunk = nlohmann::json::array();
  for (const auto& b : c.trunk) trunk.push_back({{"out_channels", b.out_channels}, {"pool", b.pool}});
  return {{"input_width", c.input_width}, {"input_height", c.input_height}, {"trunk", trunk},
          {"hidden", c.hidden},           {"num_classes", c.num_classes},   {"aux_branch", c.aux_branch}};
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  try {
    c.input_width = j.value("input_width", c.input_width);
    c.input_height = j.value("input_height", c.input_height);
    if (j.contains("trunk")) {
      c.trunk.clear();
      for (const auto& b : j.at("trunk")) c.trunk.push_back({b.at("out_channels").get<int>(), b.value("pool", true)});
    }
    if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<int>>();
    c.num_classes = j.value("num_classes", c.num_classes);
    c.aux_branch = j.value("aux_branch", c.aux_branch);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("network config: ") + e.what());
  }
  c.validate();
  return c;
}

void LossConfig::validate() const {
  if (!(delta > 0.0)) throw Error(ErrorCode::NonPositiveDelta, "delta must be > 0");
  if (!(lambda_aux >= 0.0) || !std::isfinite(lambda_aux)) {
    throw Error(ErrorCode::InvalidConfig, "lambda_aux must be finite and >= 0");
  }
}

void TrainConfig::validate() const {
  if (batch_size <= 0) throw Error(ErrorCode::InvalidConfig, "batch_size must be positive");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::InvalidConfig, "momentum must be in [0,1)");
  if (max_epochs <= 0) throw Error(ErrorCode::InvalidConfig, "max_epochs must be positive");
  if (plateau_window <= 0) throw Error(ErrorCode::InvalidConfig, "plateau_window must be positive");
}

double huber(double x, double delta) {
  if (!(delta > 0.0)) throw Error(ErrorCode::NonPositiveDelta, "delta must be > 0");
  const double ax = std::abs(x);
  if (ax <= delta) return 0.5 * x * x;
  return delta * (ax - 0.5 * delta);
}

double huber_derivative(double x, double delta) {
  if (!(delta > 0.0)) throw Error(ErrorCode::NonPositiveDelta, "delta must be > 0");
  if (std::abs(x) <= delta) return x;
  return x > 0.0 ? delta : -delta;
}

double total_loss(double class_loss, double aux_loss, double lambda_aux) {
  return class_loss + lambda_aux * aux_loss;
}

template <typename T>
double masked_huber_loss(std::span<const T> prediction, const SparseDepthMap& target, double delta,
                         AuxReduction reduction) {
  if (!(delta > 0.0)) throw Error(ErrorCode::NonPositiveDelta, "delta must be > 0");
  if (prediction.size() != target.size()) throw Error(ErrorCode::ShapeMismatch, "prediction/target size");
  const auto& mask = target.mask();
  const auto& depth = target.depths();
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    sum += huber(static_cast<double>(prediction[i]) - depth[i], delta);
    ++count;
  }
  if (count == 0) throw Error(ErrorCode::EmptyMask, "target has no valid pixels");
  return reduction == AuxReduction::Mean ? sum / static_cast<double>(count) : sum;
}

template <typename T>
std::array<T, kNumClasses> softmax(std::span<const T> logits) {
  if (logits.size() != kNumClasses) throw Error(ErrorCode::ShapeMismatch, "softmax expects 6 logits");
  const T m = *std::max_element(logits.begin(), logits.end());
  std::array<T, kNumClasses> p{};
  T z = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

template <typename T>
int argmax(std::span<const T> logits) {
  int best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

// ---------------------------------------------------------------------------------------------

template <typename T>
void Network<T>::add_param(std::string name, std::vector<int> shape) {
  names_.push_back(std::move(name));
  params_.emplace_back(std::move(shape));
}

template <typename T>
Network<T>::Network(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto blocks = block_shapes(config_);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    add_param("conv" + std::to_string(i) + ".weight", {b.out_channels, b.in_channels, 3, 3});
    add_param("conv" + std::to_string(i) + ".bias", {b.out_channels});
  }
  const int f = config_.downsampling();
  int width = config_.trunk.back().out_channels * (config_.input_height / f) * (config_.input_width / f);
  for (std::size_t i = 0; i < config_.hidden.size(); ++i) {
    add_param("fc" + std::to_string(i) + ".weight", {config_.hidden[i], width});
    add_param("fc" + std::to_string(i) + ".bias", {config_.hidden[i]});
    width = config_.hidden[i];
  }
  add_param("logits.weight", {config_.num_classes, width});
  add_param("logits.bias", {config_.num_classes});
  aux_begin_ = params_.size();
  if (config_.aux_branch) {
    add_param("aux_collapse.weight", {1, config_.trunk.back().out_channels});
    add_param("aux_collapse.bias", {1});
    add_param("aux_upsample.weight", {f, f});
    add_param("aux_upsample.bias", {1});
  }
}

template <typename T>
Network<T>::Network(NetworkConfig config, std::uint64_t seed) : Network(std::move(config)) {
  Rng rng(seed);
  const std::size_t logits_weight = aux_begin_ - 2;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (p.shape.size() == 1 || names_[i] == "aux_collapse.bias" || names_[i] == "aux_upsample.bias") {
      continue;  // biases start at zero
    }
    std::size_t fan_in = 1;
    if (names_[i] == "aux_upsample.weight") {
      fan_in = 1;  // every output pixel sees exactly one input
    } else {
      for (std::size_t k = 1; k < p.shape.size(); ++k) fan_in *= static_cast<std::size_t>(p.shape[k]);
    }
    const bool feeds_relu = i < logits_weight;
    const double bound = std::sqrt((feeds_relu ? 6.0 : 3.0) / static_cast<double>(fan_in));
    for (auto& v : p.data) v = static_cast<T>(rng.uniform(-bound, bound));
  }
}

template <typename T>
std::vector<Tensor<T>> Network<T>::zeros_like() const {
  std::vector<Tensor<T>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.emplace_back(p.shape);
  return out;
}

namespace {

template <typename T>
void check_image(const NetworkConfig& c, const GrayImage& img) {
  if (img.width != c.input_width || img.height != c.input_height) {
    throw Error(ErrorCode::ShapeMismatch, "image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                              " does not match network input");
  }
}

template <typename T>
void run_forward(const NetworkConfig& cfg, const std::vector<Tensor<T>>& params, std::span<const Sample> batch,
                 Workspace<T>& ws) {
  const int n = static_cast<int>(batch.size());
  const int H = cfg.input_height;
  const int W = cfg.input_width;
  const auto blocks = block_shapes(cfg);
  ws.batch = n;
  ws.inputs.resize(blocks.size() + 1);
  ws.cols.resize(blocks.size());
  ws.relu.resize(blocks.size());
  ws.pool_arg.resize(blocks.size());

  Mat<T>& in0 = ws.inputs[0];
  in0.resize(1, static_cast<Eigen::Index>(n) * H * W);
  for (int s = 0; s < n; ++s) {
    const GrayImage* img = batch[static_cast<std::size_t>(s)].image;
    check_image<T>(cfg, *img);
    for (int i = 0; i < H * W; ++i) {
      in0(0, static_cast<Eigen::Index>(s) * H * W + i) = static_cast<T>(img->pixels[static_cast<std::size_t>(i)]) / T(255);
    }
  }

  std::size_t pi = 0;
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const auto& b = blocks[l];
    im2col<T>(ws.inputs[l], b.in_channels, n, b.height, b.width, ws.cols[l]);
    ConstRowMap<T> w(params[pi].data.data(), b.out_channels, b.in_channels * 9);
    ConstVecMap<T> bias(params[pi + 1].data.data(), b.out_channels);
    pi += 2;
    Mat<T>& z = ws.relu[l];
    z.noalias() = w * ws.cols[l];
    z.colwise() += bias;
    z = z.cwiseMax(T(0));
    if (b.pool) {
      maxpool<T>(z, b.out_channels, n, b.height, b.width, ws.inputs[l + 1], ws.pool_arg[l]);
    } else {
      ws.inputs[l + 1] = z;
    }
  }
  const Mat<T>& top = ws.inputs.back();
  const int channels = static_cast<int>(top.rows());
  const int hw = static_cast<int>(top.cols()) / n;

  ws.features.resize(static_cast<Eigen::Index>(channels) * hw, n);
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < channels; ++c) {
      for (int p = 0; p < hw; ++p) ws.features(c * hw + p, s) = top(c, static_cast<Eigen::Index>(s) * hw + p);
    }
  }

  ws.hidden.resize(cfg.hidden.size());
  const Mat<T>* x = &ws.features;
  for (std::size_t k = 0; k < cfg.hidden.size(); ++k) {
    ConstRowMap<T> w(params[pi].data.data(), cfg.hidden[k], x->rows());
    ConstVecMap<T> bias(params[pi + 1].data.data(), cfg.hidden[k]);
    pi += 2;
    ws.hidden[k].noalias() = w * (*x);
    ws.hidden[k].colwise() += bias;
    ws.hidden[k] = ws.hidden[k].cwiseMax(T(0));
    x = &ws.hidden[k];
  }
  {
    ConstRowMap<T> w(params[pi].data.data(), cfg.num_classes, x->rows());
    ConstVecMap<T> bias(params[pi + 1].data.data(), cfg.num_classes);
    pi += 2;
    ws.logits.noalias() = w * (*x);
    ws.logits.colwise() += bias;
  }

  if (cfg.aux_branch) {
    ConstRowMap<T> wc(params[pi].data.data(), 1, channels);
    const T bc = params[pi + 1].data[0];
    ws.collapse.noalias() = wc * top;
    ws.collapse.array() += bc;
    const int f = cfg.downsampling();
    const int ow = W / f;
    const T* k = params[pi + 2].data.data();
    const T bk = params[pi + 3].data[0];
    ws.depth.resize(static_cast<Eigen::Index>(H) * W, n);
    for (int s = 0; s < n; ++s) {
      for (int y = 0; y < H; ++y) {
        for (int xx = 0; xx < W; ++xx) {
          const T v = ws.collapse(0, static_cast<Eigen::Index>(s) * hw + (y / f) * ow + (xx / f));
          ws.depth(y * W + xx, s) = v * k[(y % f) * f + (xx % f)] + bk;
        }
      }
    }
  }
}

}  // namespace

template <typename T>
ForwardResult Network<T>::forward(const GrayImage& image) const {
  Sample s;
  s.image = &image;
  Workspace<T> ws;
  run_forward<T>(config_, params_, std::span<const Sample>(&s, 1), ws);
  ForwardResult r;
  for (Eigen::Index i = 0; i < ws.logits.rows(); ++i) r.logits.push_back(static_cast<double>(ws.logits(i, 0)));
  if (config_.aux_branch) {
    for (Eigen::Index i = 0; i < ws.depth.rows(); ++i) r.depth.push_back(static_cast<double>(ws.depth(i, 0)));
  }
  return r;
}

template <typename T>
LossBreakdown Network<T>::loss_and_gradients(std::span<const Sample> batch, const LossConfig& loss,
                                             std::vector<Tensor<T>>* grads) const {
  if (batch.empty()) throw Error(ErrorCode::EmptyDataset, "empty batch");
  loss.validate();
  const NetworkConfig& cfg = config_;
  Workspace<T> ws;
  run_forward<T>(cfg, params_, batch, ws);

  const int n = static_cast<int>(batch.size());
  const T inv_n = T(1) / static_cast<T>(n);
  const int H = cfg.input_height;
  const int W = cfg.input_width;
  const int C = cfg.num_classes;

  LossBreakdown out;
  Mat<T> dlogits(C, n);
  for (int s = 0; s < n; ++s) {
    const int label = batch[static_cast<std::size_t>(s)].label;
    if (label < 0 || label >= C) throw Error(ErrorCode::InvalidArgument, "label out of range");
    std::span<const T> col(ws.logits.col(s).data(), static_cast<std::size_t>(C));
    const auto p = softmax<T>(col);
    out.class_loss -= std::log(static_cast<double>(std::max(p[static_cast<std::size_t>(label)], std::numeric_limits<T>::min())));
    if (argmax<T>(col) == label) ++out.correct;
    for (int k = 0; k < C; ++k) dlogits(k, s) = (p[static_cast<std::size_t>(k)] - (k == label ? T(1) : T(0))) * inv_n;
  }
  out.class_loss /= n;

  // Depth branch: per-sample masked Huber, averaged over the batch. Samples without any valid
  // target pixel contribute zero.
  const bool aux_grad = cfg.aux_branch && loss.lambda_aux != 0.0 && grads != nullptr;
  Mat<T> dpred;
  if (cfg.aux_branch) {
    if (aux_grad) dpred.setZero(static_cast<Eigen::Index>(H) * W, n);
    double aux_sum = 0.0;
    for (int s = 0; s < n; ++s) {
      const SparseDepthMap* target = batch[static_cast<std::size_t>(s)].target;
      if (target == nullptr) continue;
      if (target->width() != W || target->height() != H) throw Error(ErrorCode::ShapeMismatch, "depth target size");
      const auto& mask = target->mask();
      const auto& depth = target->depths();
      const std::size_t valid = target->valid_count();
      if (valid == 0) continue;
      const double norm = loss.reduction == AuxReduction::Mean ? 1.0 / static_cast<double>(valid) : 1.0;
      double sample_loss = 0.0;
      for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        const double diff = static_cast<double>(ws.depth(static_cast<Eigen::Index>(i), s)) - depth[i];
        sample_loss += huber(diff, loss.delta);
        if (aux_grad) {
          dpred(static_cast<Eigen::Index>(i), s) =
              static_cast<T>(loss.lambda_aux * norm * huber_derivative(diff, loss.delta)) * inv_n;
        }
      }
      aux_sum += sample_loss * norm;
    }
    out.aux_loss = aux_sum / n;
  }
  out.total = total_loss(out.class_loss, out.aux_loss, cfg.aux_branch ? loss.lambda_aux : 0.0);

  if (grads == nullptr) return out;

  // ---- backward ----
  *grads = zeros_like();
  auto& g = *grads;
  const auto blocks = block_shapes(cfg);
  std::size_t pi = params_.size() - (cfg.aux_branch ? 4 : 0);

  // Head, last layer first.
  Mat<T> delta = dlogits;
  for (int k = static_cast<int>(cfg.hidden.size()); k >= 0; --k) {
    pi -= 2;
    const Mat<T>& x = k == 0 ? ws.features : ws.hidden[static_cast<std::size_t>(k - 1)];
    const int out_dim = static_cast<int>(delta.rows());
    RowMap<T> gw(g[pi].data.data(), out_dim, x.rows());
    gw.noalias() = delta * x.transpose();
    VecMap<T>(g[pi + 1].data.data(), out_dim) = delta.rowwise().sum();
    ConstRowMap<T> w(params_[pi].data.data(), out_dim, x.rows());
    Mat<T> dx = w.transpose() * delta;
    if (k > 0) dx = (x.array() > T(0)).select(dx, T(0));
    delta = std::move(dx);
  }

  const Mat<T>& top = ws.inputs.back();
  const int channels = static_cast<int>(top.rows());
  const int hw = static_cast<int>(top.cols()) / n;
  Mat<T> dtop(channels, top.cols());
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < channels; ++c) {
      for (int p = 0; p < hw; ++p) dtop(c, static_cast<Eigen::Index>(s) * hw + p) = delta(c * hw + p, s);
    }
  }

  if (aux_grad) {
    const std::size_t ai = params_.size() - 4;
    const int f = cfg.downsampling();
    const int ow = W / f;
    const T* kern = params_[ai + 2].data.data();
    T* gk = g[ai + 2].data.data();
    T gbk = 0;
    Mat<T> dcollapse = Mat<T>::Zero(1, top.cols());
    for (int s = 0; s < n; ++s) {
      for (int y = 0; y < H; ++y) {
        for (int xx = 0; xx < W; ++xx) {
          const T d = dpred(y * W + xx, s);
          if (d == T(0)) continue;
          const Eigen::Index j = static_cast<Eigen::Index>(s) * hw + (y / f) * ow + (xx / f);
          const int ki = (y % f) * f + (xx % f);
          gk[ki] += d * ws.collapse(0, j);
          gbk += d;
          dcollapse(0, j) += d * kern[ki];
        }
      }
    }
    g[ai + 3].data[0] = gbk;
    RowMap<T>(g[ai].data.data(), 1, channels).noalias() = dcollapse * top.transpose();
    g[ai + 1].data[0] = dcollapse.sum();
    ConstRowMap<T> wc(params_[ai].data.data(), 1, channels);
    dtop.noalias() += wc.transpose() * dcollapse;
  }

  // Trunk.
  Mat<T> dact = std::move(dtop);
  for (int l = static_cast<int>(blocks.size()) - 1; l >= 0; --l) {
    const auto& b = blocks[static_cast<std::size_t>(l)];
    pi -= 2;
    const Mat<T>& r = ws.relu[static_cast<std::size_t>(l)];
    Mat<T> dz;
    if (b.pool) {
      unpool<T>(dact, ws.pool_arg[static_cast<std::size_t>(l)], b.out_channels, r.cols(), dz);
    } else {
      dz = std::move(dact);
    }
    dz = (r.array() > T(0)).select(dz, T(0));
    const Mat<T>& cols = ws.cols[static_cast<std::size_t>(l)];
    RowMap<T>(g[pi].data.data(), b.out_channels, b.in_channels * 9).noalias() = dz * cols.transpose();
    VecMap<T>(g[pi + 1].data.data(), b.out_channels) = dz.rowwise().sum();
    if (l > 0) {
      ConstRowMap<T> w(params_[pi].data.data(), b.out_channels, b.in_channels * 9);
      Mat<T> dcols = w.transpose() * dz;
      col2im<T>(dcols, b.in_channels, n, b.height, b.width, dact);
    }
  }
  return out;
}

template <typename T>
void sgd_momentum_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads,
                       std::vector<Tensor<T>>& velocity, double learning_rate, double momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw Error(ErrorCode::ShapeMismatch, "parameter/gradient/velocity count");
  }
  const T lr = static_cast<T>(learning_rate);
  const T mu = static_cast<T>(momentum);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].data;
    const auto& g = grads[i].data;
    auto& v = velocity[i].data;
    if (params[i].shape != grads[i].shape || params[i].shape != velocity[i].shape) {
      throw Error(ErrorCode::ShapeMismatch, "tensor shape mismatch in SGD step");
    }
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = mu * v[k] + g[k];
      p[k] -= lr * v[k];
    }
  }
}

EvalResult evaluate_predictions(std::span<const int> predictions, std::span<const Sample> samples) {
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "no samples to evaluate");
  if (predictions.size() != samples.size()) throw Error(ErrorCode::ShapeMismatch, "prediction count");
  EvalResult r;
  std::vector<int> order;
  std::unordered_map<int, std::pair<int, int>> per_seq;  // correct, total
  int correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int truth = samples[i].label;
    const int pred = predictions[i];
    if (truth < 0 || truth >= kNumClasses || pred < 0 || pred >= kNumClasses) {
      throw Error(ErrorCode::InvalidArgument, "class index out of range");
    }
    r.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(pred)] += 1;
    auto [it, inserted] = per_seq.try_emplace(samples[i].sequence_id, 0, 0);
    if (inserted) order.push_back(samples[i].sequence_id);
    it->second.second += 1;
    if (truth == pred) {
      ++correct;
      it->second.first += 1;
    }
  }
  int seq_correct = 0;
  for (int id : order) {
    const auto& [c, t] = per_seq.at(id);
    if (sequence_correct(c, t)) ++seq_correct;
  }
  r.images = static_cast<int>(samples.size());
  r.sequences = static_cast<int>(order.size());
  r.image_accuracy = static_cast<double>(correct) / r.images;
  r.sequence_accuracy = static_cast<double>(seq_correct) / r.sequences;
  return r;
}

template <typename T>
std::vector<int> predict(const Network<T>& net, std::span<const Sample> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  constexpr std::size_t kChunk = 64;
  NetworkConfig cfg = net.config();
  for (std::size_t i = 0; i < samples.size(); i += kChunk) {
    const auto chunk = samples.subspan(i, std::min(kChunk, samples.size() - i));
    Workspace<T> ws;
    cfg.aux_branch = false;  // logits only
    run_forward<T>(cfg, net.params(), chunk, ws);
    for (Eigen::Index s = 0; s < ws.logits.cols(); ++s) {
      out.push_back(argmax<T>(std::span<const T>(ws.logits.col(s).data(), static_cast<std::size_t>(ws.logits.rows()))));
    }
  }
  return out;
}

template <typename T>
EvalResult evaluate(const Network<T>& net, std::span<const Sample> samples) {
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "no samples to evaluate");
  const auto preds = predict(net, samples);
  return evaluate_predictions(preds, samples);
}

template <typename T>
TrainResult<T> train(std::span<const Sample> train_set, std::span<const Sample> test_set,
                     const NetworkConfig& net_config, const LossConfig& loss, const TrainConfig& config) {
  if (train_set.empty()) throw Error(ErrorCode::EmptyDataset, "empty training set");
  config.validate();
  loss.validate();
  TrainResult<T> result{Network<T>(net_config, config.seed), {}};
  Network<T>& net = result.network;
  auto velocity = net.zeros_like();
  std::vector<Tensor<T>> grads;

  Rng order_rng(config.seed ^ 0x53485546464C45ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Sample> batch;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle(order.begin(), order.end(), order_rng);
    EpochMetrics m;
    m.epoch = epoch;
    int correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_set[order[i]]);
      const LossBreakdown lb = net.loss_and_gradients(batch, loss, &grads);
      sgd_momentum_step(net.params(), grads, velocity, config.learning_rate, config.momentum);
      const double w = static_cast<double>(batch.size());
      m.loss += lb.total * w;
      m.class_loss += lb.class_loss * w;
      m.aux_loss += lb.aux_loss * w;
      correct += lb.correct;
    }
    const double total = static_cast<double>(train_set.size());
    m.loss /= total;
    m.class_loss /= total;
    m.aux_loss /= total;
    m.train_accuracy = correct / total;
    if (!test_set.empty()) {
      const EvalResult ev = evaluate(net, test_set);
      m.test_image_accuracy = ev.image_accuracy;
      m.test_sequence_accuracy = ev.sequence_accuracy;
    }
    result.history.push_back(m);
    const auto& h = result.history;
    if (static_cast<int>(h.size()) > config.plateau_window) {
      const double before = h[h.size() - 1 - static_cast<std::size_t>(config.plateau_window)].loss;
      if (before - m.loss < config.plateau_tolerance) break;
    }
  }
  return result;
}

std::string metrics_csv(const std::vector<EpochMetrics>& history) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,loss,class_loss,aux_loss,train_acc,test_img_acc,test_seq_acc\n";
  for (const auto& m : history) {
    out << m.epoch << ',' << m.loss << ',' << m.class_loss << ',' << m.aux_loss << ',' << m.train_accuracy << ','
        << m.test_image_accuracy << ',' << m.test_sequence_accuracy << '\n';
  }
  return out.str();
}

// ---- checkpoints ----

namespace {

constexpr char kCheckpointMagic[4] = {'S', 'P', 'N', '1'};

}  // namespace

template <typename T>
std::vector<unsigned char> encode_checkpoint(const Network<T>& net) {
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    tensors.push_back({{"name", net.names()[i]}, {"shape", net.params()[i].shape}});
  }
  const std::string manifest = nlohmann::json{{"network", to_json(net.config())}, {"tensors", tensors}}.dump();

  std::vector<unsigned char> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  const auto len = static_cast<std::uint64_t>(manifest.size());
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((len >> (8 * i)) & 0xFFu));
  out.insert(out.end(), manifest.begin(), manifest.end());
  for (const auto& p : net.params()) {
    for (T v : p.data) {
      const auto bits = std::bit_cast<std::uint64_t>(static_cast<double>(v));
      for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xFFu));
    }
  }
  return out;
}

template <typename T>
Network<T> decode_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw Error(ErrorCode::MalformedFile, "missing SPN1 header");
  }
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[static_cast<std::size_t>(4 + i)]) << (8 * i);
  if (len > bytes.size() - 12) throw Error(ErrorCode::MalformedFile, "manifest length exceeds file");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedFile, std::string("checkpoint manifest: ") + e.what());
  }
  Network<T> net(network_config_from_json(manifest.at("network")));
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != net.params().size()) throw Error(ErrorCode::MalformedFile, "tensor count mismatch");
  std::size_t offset = 12 + static_cast<std::size_t>(len);
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& p = net.params()[i];
    if (tensors[i].at("name").get<std::string>() != net.names()[i] ||
        tensors[i].at("shape").get<std::vector<int>>() != p.shape) {
      throw Error(ErrorCode::MalformedFile, "tensor manifest does not match network layout");
    }
    if (bytes.size() - offset < 8 * p.data.size()) throw Error(ErrorCode::MalformedFile, "truncated tensor data");
    for (auto& v : p.data) {
      std::uint64_t bits = 0;
      for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[offset + static_cast<std::size_t>(k)]) << (8 * k);
      v = static_cast<T>(std::bit_cast<double>(bits));
      offset += 8;
    }
  }
  if (offset != bytes.size()) throw Error(ErrorCode::MalformedFile, "trailing bytes after tensors");
  return net;
}

template <typename T>
void save_checkpoint(const Network<T>& net, const std::string& path) {
  const auto bytes = encode_checkpoint(net);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot create " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path);
}

template <typename T>
Network<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint<T>(bytes);
}

#define SPN_INSTANTIATE(T)                                                                                     \
  template struct Tensor<T>;                                                                                   \
  template class Network<T>;                                                                                   \
  template double masked_huber_loss<T>(std::span<const T>, const SparseDepthMap&, double, AuxReduction);       \
  template std::array<T, kNumClasses> softmax<T>(std::span<const T>);                                          \
  template int argmax<T>(std::span<const T>);                                                                  \
  template void sgd_momentum_step<T>(std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&,                   \
                                     std::vector<Tensor<T>>&, double, double);                                 \
  template std::vector<int> predict<T>(const Network<T>&, std::span<const Sample>);                            \
  template EvalResult evaluate<T>(const Network<T>&, std::span<const Sample>);                                 \
  template TrainResult<T> train<T>(std::span<const Sample>, std::span<const Sample>, const NetworkConfig&,     \
                                   const LossConfig&, const TrainConfig&);                                     \
  template std::vector<unsigned char> encode_checkpoint<T>(const Network<T>&);                                 \
  template Network<T> decode_checkpoint<T>(const std::vector<unsigned char>&);                                 \
  template void save_checkpoint<T>(const Network<T>&, const std::string&);                                     \
  template Network<T> load_checkpoint<T>(const std::string&);

SPN_INSTANTIATE(float)
SPN_INSTANTIATE(double)

#undef SPN_INSTANTIATE

}  // namespace spn::nn

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "spn/reprojection.hpp"

namespace spn {

struct GrayImage;

namespace nn {

inline constexpr int kNumClasses = 6;

/// Dense row-major tensor.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T, Eigen::aligned_allocator<T>> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T(0));

  std::size_t size() const { return data.size(); }
};

struct ConvBlock {
  int out_channels = 16;
  bool pool = true;  // 2x2 max-pool after the ReLU
};

/// Conv trunk (3x3, stride 1, pad 1, ReLU) -> fully connected head -> 6 logits, plus the depth
/// branch: 1x1 conv to one channel, then a transposed conv with kernel = stride = the trunk's
/// downsampling factor, which restores the input resolution.
struct NetworkConfig {
  int input_width = 64;
  int input_height = 64;
  std::vector<ConvBlock> trunk = {{16, true}, {32, true}, {64, true}, {64, false}};
  std::vector<int> hidden = {64};
  int num_classes = kNumClasses;
  bool aux_branch = true;

  int downsampling() const;
  void validate() const;
};

nlohmann::json to_json(const NetworkConfig& c);
NetworkConfig network_config_from_json(const nlohmann::json& j);

enum class AuxReduction { Mean, Sum };

struct LossConfig {
  double delta = 0.1;
  double lambda_aux = 1e-2;
  AuxReduction reduction = AuxReduction::Mean;

  void validate() const;
};

// Scalar loss pieces.

/// 0.5 x^2 for |x| <= delta, delta (|x| - delta/2) otherwise. Throws NonPositiveDelta.
double huber(double x, double delta);
/// x for |x| <= delta, delta * sign(x) otherwise.
double huber_derivative(double x, double delta);
double total_loss(double class_loss, double aux_loss, double lambda_aux);

/// Mean (or sum) of huber(pred - target) over the valid target pixels. `prediction` is
/// row-major with the target's dimensions. Throws EmptyMask / ShapeMismatch.
template <typename T>
double masked_huber_loss(std::span<const T> prediction, const SparseDepthMap& target, double delta,
                         AuxReduction reduction = AuxReduction::Mean);

template <typename T>
std::array<T, kNumClasses> softmax(std::span<const T> logits);

/// Strict majority: more than half of the images correct.
constexpr bool sequence_correct(int correct, int total) { return 2 * correct > total; }

/// Index of the largest logit, lowest index on exact ties.
template <typename T>
int argmax(std::span<const T> logits);

struct Sample {
  const GrayImage* image = nullptr;
  const SparseDepthMap* target = nullptr;  // may be null when the aux branch is unused
  int label = 0;
  int sequence_id = 0;
};

struct LossBreakdown {
  double total = 0.0;
  double class_loss = 0.0;
  double aux_loss = 0.0;
  int correct = 0;
};

struct ForwardResult {
  std::vector<double> logits;      // num_classes
  std::vector<double> depth;       // input_height * input_width; empty without aux branch
};

template <typename T>
class Network {
 public:
  /// Fan-in scaled uniform initialization, zero biases. Parameters are drawn trunk first, then
  /// head, then the depth branch, so disabling the branch leaves the rest unchanged.
  Network(NetworkConfig config, std::uint64_t seed);
  /// Uninitialized parameters with the right shapes (for loading checkpoints).
  explicit Network(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }

  std::vector<Tensor<T>>& params() { return params_; }
  const std::vector<Tensor<T>>& params() const { return params_; }
  const std::vector<std::string>& names() const { return names_; }
  /// True for parameters of the depth branch.
  bool is_aux(std::size_t index) const { return index >= aux_begin_; }

  /// Single image forward pass. Throws ShapeMismatch.
  ForwardResult forward(const GrayImage& image) const;

  /// Mean-over-batch loss. When `grads` is non-null it receives d(total)/d(param) with the
  /// parameter shapes. With lambda_aux == 0 the depth branch gets no gradient at all.
  LossBreakdown loss_and_gradients(std::span<const Sample> batch, const LossConfig& loss,
                                   std::vector<Tensor<T>>* grads) const;

  std::vector<Tensor<T>> zeros_like() const;

 private:
  void add_param(std::string name, std::vector<int> shape);

  NetworkConfig config_;
  std::vector<Tensor<T>> params_;
  std::vector<std::string> names_;
  std::size_t aux_begin_ = 0;
};

/// Classical momentum: v <- momentum v + g; p <- p - lr v. Throws ShapeMismatch.
template <typename T>
void sgd_momentum_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads,
                       std::vector<Tensor<T>>& velocity, double learning_rate, double momentum);

struct EvalResult {
  double image_accuracy = 0.0;
  double sequence_accuracy = 0.0;
  std::array<std::array<int, kNumClasses>, kNumClasses> confusion{};  // [truth][prediction]
  int images = 0;
  int sequences = 0;
};

/// Groups images by sequence_id (first-appearance order). Throws EmptyDataset.
EvalResult evaluate_predictions(std::span<const int> predictions, std::span<const Sample> samples);

template <typename T>
std::vector<int> predict(const Network<T>& net, std::span<const Sample> samples);

template <typename T>
EvalResult evaluate(const Network<T>& net, std::span<const Sample> samples);

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int max_epochs = 30;
  std::uint64_t seed = 1;
  /// Stop once the epoch loss improved by less than this over `plateau_window` epochs.
  double plateau_tolerance = 1e-5;
  int plateau_window = 5;

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double class_loss = 0.0;
  double aux_loss = 0.0;
  double train_accuracy = 0.0;
  double test_image_accuracy = 0.0;
  double test_sequence_accuracy = 0.0;
};

template <typename T>
struct TrainResult {
  Network<T> network;
  std::vector<EpochMetrics> history;
};

/// Deterministic for a fixed seed: initialization and per-epoch shuffles come from `seed`.
/// `test` may be empty, in which case test metrics are reported as 0.
template <typename T>
TrainResult<T> train(std::span<const Sample> train_set, std::span<const Sample> test_set,
                     const NetworkConfig& net_config, const LossConfig& loss, const TrainConfig& config);

/// CSV `epoch,loss,class_loss,aux_loss,train_acc,test_img_acc,test_seq_acc`.
std::string metrics_csv(const std::vector<EpochMetrics>& history);

// SPN1 checkpoint: "SPN1", u64 manifest byte length, JSON manifest {network, tensors:[{name,
// shape}]}, then every tensor as little-endian f64 in manifest order.
template <typename T>
std::vector<unsigned char> encode_checkpoint(const Network<T>& net);
template <typename T>
Network<T> decode_checkpoint(const std::vector<unsigned char>& bytes);
template <typename T>
void save_checkpoint(const Network<T>& net, const std::string& path);
template <typename T>
Network<T> load_checkpoint(const std::string& path);

}  // namespace nn
}  // namespace spn

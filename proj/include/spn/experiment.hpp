#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spn/nn.hpp"
#include "spn/synth.hpp"

namespace spn {

enum class Precision { Float32, Float64 };

struct ExperimentConfig {
  synth::SynthConfig synth;
  ReprojectionVariant variant = ReprojectionVariant::PointsAndLines;
  nn::NetworkConfig network;
  nn::LossConfig loss;
  nn::TrainConfig train;
  Precision precision = Precision::Float32;
  std::filesystem::path output_dir = "experiment_out";

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Missing sections keep defaults. Throws ConfigError.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_json(const nn::TrainConfig& c);
nlohmann::json loss_config_json(const nn::LossConfig& c);

struct VariantRow {
  std::string variant;  // baseline, lines, points, points+lines
  double image_accuracy = 0.0;
  double sequence_accuracy = 0.0;
  int epochs = 0;
  double final_loss = 0.0;
};

struct ExperimentReport {
  std::vector<VariantRow> rows;
  nlohmann::json config;
  std::uint64_t seed = 0;
  double wall_clock_seconds = 0.0;

  nlohmann::json to_json() const;
};

/// Training samples pointing into `sequences`; targets come from `variant`.
std::vector<nn::Sample> make_samples(const std::vector<synth::SequenceSample>& sequences,
                                     std::optional<ReprojectionVariant> variant);

/// Outcome of one training run on an existing dataset.
struct TrainingOutcome {
  std::vector<nn::EpochMetrics> history;
  nn::EvalResult test;
  std::vector<unsigned char> checkpoint;
};

/// Trains one network. `variant` selects the depth targets; nullopt trains the aux-free network.
TrainingOutcome train_variant(const synth::Dataset& data, std::optional<ReprojectionVariant> variant,
                              const ExperimentConfig& config, const nn::LossConfig& loss);

/// Baseline (lambda_aux = 0) plus the three reprojection variants on one dataset with one
/// initialization seed. Writes <output_dir>/<row>/{checkpoint.spn,metrics.csv} and report.json
/// unless `persist` is false.
ExperimentReport run_experiment(const ExperimentConfig& config, bool persist = true);

/// Worker cap from SPN_THREADS (default 1).
int worker_threads();

}  // namespace spn

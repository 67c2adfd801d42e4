#include "spn/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "spn/error.hpp"

namespace spn {

namespace fs = std::filesystem;

namespace {

constexpr const char* kRowNames[4] = {"baseline", "lines", "points", "points+lines"};

std::optional<ReprojectionVariant> row_variant(int row) {
  switch (row) {
    case 1: return ReprojectionVariant::Lines;
    case 2: return ReprojectionVariant::Points;
    case 3: return ReprojectionVariant::PointsAndLines;
    default: return std::nullopt;
  }
}

nn::AuxReduction parse_reduction(const std::string& s) {
  if (s == "mean") return nn::AuxReduction::Mean;
  if (s == "sum") return nn::AuxReduction::Sum;
  throw Error(ErrorCode::ConfigError, "loss.reduction must be mean or sum");
}

}  // namespace

void ExperimentConfig::validate() const {
  synth.validate();
  network.validate();
  loss.validate();
  train.validate();
  if (network.input_width != synth.image_width || network.input_height != synth.image_height) {
    throw Error(ErrorCode::ConfigError, "network input size must match the synthetic image size");
  }
}

nlohmann::json train_config_json(const nn::TrainConfig& c) {
  return {{"batch_size", c.batch_size},         {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},             {"max_epochs", c.max_epochs},
          {"seed", c.seed},                     {"plateau_tolerance", c.plateau_tolerance},
          {"plateau_window", c.plateau_window}};
}

nlohmann::json loss_config_json(const nn::LossConfig& c) {
  return {{"delta", c.delta},
          {"lambda_aux", c.lambda_aux},
          {"reduction", c.reduction == nn::AuxReduction::Mean ? "mean" : "sum"}};
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"synth", synth::to_json(c.synth)},
          {"variant", std::string(to_string(c.variant))},
          {"network", nn::to_json(c.network)},
          {"loss", loss_config_json(c.loss)},
          {"train", train_config_json(c.train)},
          {"precision", c.precision == Precision::Float32 ? "float32" : "float64"},
          {"output_dir", c.output_dir.string()}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (!j.is_object()) throw Error(ErrorCode::ConfigError, "experiment config must be a JSON object");
    if (j.contains("synth")) c.synth = synth::synth_config_from_json(j.at("synth"));
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    c.network.input_width = c.synth.image_width;
    c.network.input_height = c.synth.image_height;
    if (j.contains("network")) {
      nlohmann::json net = j.at("network");
      if (!net.contains("input_width")) net["input_width"] = c.synth.image_width;
      if (!net.contains("input_height")) net["input_height"] = c.synth.image_height;
      c.network = nn::network_config_from_json(net);
    }
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      c.loss.delta = l.value("delta", c.loss.delta);
      c.loss.lambda_aux = l.value("lambda_aux", c.loss.lambda_aux);
      if (l.contains("reduction")) c.loss.reduction = parse_reduction(l.at("reduction").get<std::string>());
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
      c.train.momentum = t.value("momentum", c.train.momentum);
      c.train.max_epochs = t.value("max_epochs", c.train.max_epochs);
      c.train.seed = t.value("seed", c.train.seed);
      c.train.plateau_tolerance = t.value("plateau_tolerance", c.train.plateau_tolerance);
      c.train.plateau_window = t.value("plateau_window", c.train.plateau_window);
    }
    if (j.contains("precision")) {
      const auto p = j.at("precision").get<std::string>();
      if (p == "float32") {
        c.precision = Precision::Float32;
      } else if (p == "float64") {
        c.precision = Precision::Float64;
      } else {
        throw Error(ErrorCode::ConfigError, "precision must be float32 or float64");
      }
    }
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("experiment config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    throw Error(ErrorCode::ConfigError, e.what());
  }
  c.validate();
  return c;
}

nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"variant", r.variant},
                         {"image_accuracy", r.image_accuracy},
                         {"sequence_accuracy", r.sequence_accuracy},
                         {"epochs", r.epochs},
                         {"final_loss", r.final_loss}});
  }
  return {{"rows", rows_json}, {"config", config}, {"seed", seed}, {"wall_clock_seconds", wall_clock_seconds}};
}

std::vector<nn::Sample> make_samples(const std::vector<synth::SequenceSample>& sequences,
                                     std::optional<ReprojectionVariant> variant) {
  std::vector<nn::Sample> out;
  for (const auto& s : sequences) {
    for (std::size_t k = 0; k < s.frames.size(); ++k) {
      nn::Sample sample;
      sample.image = &s.frames[k];
      sample.target = variant ? &s.depth(*variant)[k] : nullptr;
      sample.label = s.label;
      sample.sequence_id = s.sequence_id;
      out.push_back(sample);
    }
  }
  return out;
}

namespace {

template <typename T>
TrainingOutcome train_typed(const std::vector<nn::Sample>& train_set, const std::vector<nn::Sample>& test_set,
                            const nn::NetworkConfig& net, const nn::LossConfig& loss, const nn::TrainConfig& cfg) {
  auto result = nn::train<T>(train_set, test_set, net, loss, cfg);
  TrainingOutcome out;
  out.history = std::move(result.history);
  out.test = nn::evaluate(result.network, std::span<const nn::Sample>(test_set));
  out.checkpoint = nn::encode_checkpoint(result.network);
  return out;
}

}  // namespace

TrainingOutcome train_variant(const synth::Dataset& data, std::optional<ReprojectionVariant> variant,
                              const ExperimentConfig& config, const nn::LossConfig& loss) {
  const auto train_set = make_samples(data.train, variant);
  const auto test_set = make_samples(data.test, variant);
  if (train_set.empty()) throw Error(ErrorCode::EmptyDataset, "training split is empty");
  if (test_set.empty()) throw Error(ErrorCode::EmptyDataset, "test split is empty");
  nn::NetworkConfig net = config.network;
  if (!variant) net.aux_branch = false;
  if (config.precision == Precision::Float64) return train_typed<double>(train_set, test_set, net, loss, config.train);
  return train_typed<float>(train_set, test_set, net, loss, config.train);
}

int worker_threads() {
  const char* env = std::getenv("SPN_THREADS");
  if (env == nullptr) return 1;
  const int n = std::atoi(env);
  return std::max(1, n);
}

ExperimentReport run_experiment(const ExperimentConfig& config, bool persist) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const synth::Dataset data = synth::generate_dataset(config.synth);

  std::vector<TrainingOutcome> outcomes(4);
  auto run_row = [&](int row) {
    nn::LossConfig loss = config.loss;
    auto variant = row_variant(row);
    if (!variant) {
      // Baseline: branch present, weight 0.
      loss.lambda_aux = 0.0;
      variant = ReprojectionVariant::PointsAndLines;
    }
    outcomes[static_cast<std::size_t>(row)] = train_variant(data, variant, config, loss);
  };

  const int workers = std::min(4, worker_threads());
  if (workers <= 1) {
    for (int row = 0; row < 4; ++row) run_row(row);
  } else {
    std::vector<std::exception_ptr> errors(4);
    for (int first = 0; first < 4; first += workers) {
      std::vector<std::thread> pool;
      for (int row = first; row < std::min(4, first + workers); ++row) {
        pool.emplace_back([&, row] {
          try {
            run_row(row);
          } catch (...) {
            errors[static_cast<std::size_t>(row)] = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  ExperimentReport report;
  report.config = to_json(config);
  report.seed = config.train.seed;
  for (int row = 0; row < 4; ++row) {
    const auto& o = outcomes[static_cast<std::size_t>(row)];
    report.rows.push_back({kRowNames[row], o.test.image_accuracy, o.test.sequence_accuracy,
                           static_cast<int>(o.history.size()), o.history.empty() ? 0.0 : o.history.back().loss});
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (persist) {
    fs::create_directories(config.output_dir);
    for (int row = 0; row < 4; ++row) {
      const auto& o = outcomes[static_cast<std::size_t>(row)];
      std::string dir_name = kRowNames[row];
      std::replace(dir_name.begin(), dir_name.end(), '+', '_');
      const fs::path dir = config.output_dir / dir_name;
      fs::create_directories(dir);
      std::ofstream ck(dir / "checkpoint.spn", std::ios::binary);
      ck.write(reinterpret_cast<const char*>(o.checkpoint.data()), static_cast<std::streamsize>(o.checkpoint.size()));
      std::ofstream(dir / "metrics.csv") << nn::metrics_csv(o.history);
    }
    write_json_file(report.to_json(), config.output_dir / "report.json");
  }
  return report;
}

}  // namespace spn

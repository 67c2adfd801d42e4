// spn: command-line front end for the sparse-depth-prior pipeline.
//
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "spn/alignment.hpp"
#include "spn/error.hpp"
#include "spn/experiment.hpp"
#include "spn/io.hpp"
#include "spn/nn.hpp"
#include "spn/reprojection.hpp"
#include "spn/scene_context.hpp"
#include "spn/synth.hpp"

namespace fs = std::filesystem;
using spn::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON configuration file");
  cmd->add_option("--seed", c.seed, "Seed override");
}

json load_config(const Common& c) {
  if (c.config.empty()) return json::object();
  return spn::read_json_file(c.config);
}

spn::AngleRangeDeg parse_range(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw CLI::ValidationError("--range", "expected start:end in degrees");
  try {
    return spn::AngleRangeDeg(std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1)));
  } catch (const std::invalid_argument&) {
    throw CLI::ValidationError("--range", "expected start:end in degrees");
  }
}

spn::GrayImage depth_preview(const spn::SparseDepthMap& map) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int v = 0; v < map.height(); ++v) {
    for (int u = 0; u < map.width(); ++u) {
      if (!map.valid(u, v)) continue;
      lo = std::min(lo, map.depth(u, v));
      hi = std::max(hi, map.depth(u, v));
    }
  }
  spn::GrayImage img(map.width(), map.height(), 0);
  const double span = hi > lo ? hi - lo : 1.0;
  for (int v = 0; v < map.height(); ++v) {
    for (int u = 0; u < map.width(); ++u) {
      if (!map.valid(u, v)) continue;
      // Brighter is farther; 0 is reserved for empty pixels.
      img.at(u, v) = static_cast<std::uint8_t>(std::lround(40.0 + 215.0 * (map.depth(u, v) - lo) / span));
    }
  }
  return img;
}

spn::ExperimentConfig experiment_config(const Common& common) {
  auto cfg = spn::experiment_config_from_json(load_config(common));
  if (common.seed) {
    cfg.train.seed = *common.seed;
    cfg.synth.seed = *common.seed;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse depth prior pipeline: synthesize, filter, align, reproject, train, evaluate"};
  app.require_subcommand(1);

  // synth
  Common synth_c;
  std::string synth_out;
  bool imbalanced = false;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_common(synth_cmd, synth_c);
  synth_cmd->add_option("--out", synth_out, "Dataset root")->required();
  synth_cmd->add_flag("--imbalanced", imbalanced, "Class ratio of the toll dataset");

  // filter-matches
  Common filter_c;
  std::string matches_in, matches_out, range_text, segments_for_range;
  double min_disp = 50.0;
  std::optional<double> auto_range;
  double bin_width = 1.0;
  bool flip = false;
  auto* filter_cmd = app.add_subcommand("filter-matches", "Static-camera and driving-direction match filter");
  add_common(filter_cmd, filter_c);
  filter_cmd->add_option("--matches", matches_in, "Input CSV ua,va,ub,vb")->required();
  filter_cmd->add_option("--out", matches_out, "Output CSV (stdout summary only if omitted)");
  filter_cmd->add_option("--min-disp", min_disp, "Minimum displacement d_p in pixels");
  auto* range_opt = filter_cmd->add_option("--range", range_text, "Valid angle range start:end (degrees)");
  auto* auto_opt = filter_cmd->add_option("--auto-range", auto_range, "Half width around the Hough angle");
  filter_cmd->add_option("--segments", segments_for_range, "Segments CSV for --auto-range");
  filter_cmd->add_option("--bin-width", bin_width, "Hough bin width in degrees");
  filter_cmd->add_flag("--flip", flip, "Use the opposite heading of the Hough axis");
  range_opt->excludes(auto_opt);

  // estimate-direction
  Common dir_c;
  std::string dir_segments;
  double dir_bin = 1.0;
  bool unweighted = false;
  auto* dir_cmd = app.add_subcommand("estimate-direction", "Dominant line orientation by Hough voting");
  add_common(dir_cmd, dir_c);
  dir_cmd->add_option("--segments", dir_segments, "Segments CSV ua,va,ub,vb")->required();
  dir_cmd->add_option("--bin-width", dir_bin, "Bin width in degrees (must divide 180)");
  dir_cmd->add_flag("--unweighted", unweighted, "One vote per segment instead of length weighting");

  // align
  Common align_c;
  std::string align_scene, align_out, align_mode = "camera";
  auto* align_cmd = app.add_subcommand("align", "Scale-align a reconstruction bundle");
  add_common(align_cmd, align_c);
  align_cmd->add_option("--scene", align_scene, "Scene bundle directory")->required();
  align_cmd->add_option("--out", align_out, "Output bundle directory")->required();
  align_cmd->add_option("--mode", align_mode, "camera (camera-P1 distance = 1) or line (line length = 1)")
      ->check(CLI::IsMember({"camera", "line"}));

  // reproject
  Common rep_c;
  std::string rep_scene, rep_variant = "both", rep_out, rep_png;
  int rep_frame = 0;
  auto* rep_cmd = app.add_subcommand("reproject", "Render a sparse depth map for one frame");
  add_common(rep_cmd, rep_c);
  rep_cmd->add_option("--scene", rep_scene, "Scene bundle directory")->required();
  rep_cmd->add_option("--variant", rep_variant, "points|lines|both")->check(CLI::IsMember({"points", "lines", "both"}));
  rep_cmd->add_option("--frame", rep_frame, "Camera index")->check(CLI::NonNegativeNumber);
  rep_cmd->add_option("--out", rep_out, "SDM1 output file")->required();
  rep_cmd->add_option("--png-preview", rep_png, "Normalized PNG preview");

  // train
  Common train_c;
  std::string train_data, train_out, train_variant = "both";
  std::optional<int> train_epochs;
  std::optional<double> train_lambda;
  auto* train_cmd = app.add_subcommand("train", "Train the classifier on a dataset directory");
  add_common(train_cmd, train_c);
  train_cmd->add_option("--data", train_data, "Dataset root written by synth")->required();
  train_cmd->add_option("--out", train_out, "Output directory")->required();
  train_cmd->add_option("--variant", train_variant, "points|lines|both|none")
      ->check(CLI::IsMember({"points", "lines", "both", "none"}));
  train_cmd->add_option("--epochs", train_epochs, "Maximum epochs");
  train_cmd->add_option("--lambda-aux", train_lambda, "Auxiliary loss weight");

  // eval
  Common eval_c;
  std::string eval_data, eval_ckpt, eval_split = "test";
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval_cmd, eval_c);
  eval_cmd->add_option("--data", eval_data, "Dataset root")->required();
  eval_cmd->add_option("--checkpoint", eval_ckpt, "SPN1 checkpoint")->required();
  eval_cmd->add_option("--split", eval_split, "train|test")->check(CLI::IsMember({"train", "test"}));

  // experiment
  Common exp_c;
  std::string exp_out;
  auto* exp_cmd = app.add_subcommand("experiment", "Baseline plus the three reprojection variants");
  add_common(exp_cmd, exp_c);
  exp_cmd->add_option("--out", exp_out, "Output directory (overrides output_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth_cmd) {
      json j = load_config(synth_c);
      if (j.contains("synth")) j = j.at("synth");
      auto cfg = spn::synth::synth_config_from_json(j);
      if (synth_c.seed) cfg.seed = *synth_c.seed;
      if (imbalanced) cfg.imbalanced = true;
      const auto data = spn::synth::generate_dataset(cfg);
      spn::synth::write_dataset(data, cfg, synth_out);
      std::cout << json{{"train_sequences", data.train.size()}, {"test_sequences", data.test.size()}}.dump() << '\n';
    } else if (*filter_cmd) {
      const json j = load_config(filter_c);
      if (filter_cmd->count("--min-disp") == 0) min_disp = j.value("min_disp", min_disp);
      spn::MatchFilterConfig cfg;
      cfg.min_displacement_px = min_disp;
      if (auto_range) {
        if (segments_for_range.empty()) throw CLI::RequiredError("--segments (needed by --auto-range)");
        double axis = spn::dominant_angle_hough(spn::read_segments_csv(segments_for_range), bin_width);
        if (flip) axis += 180.0;
        cfg.valid_range = spn::AngleRangeDeg::centered(axis, *auto_range);
      } else if (!range_text.empty()) {
        cfg.valid_range = parse_range(range_text);
      } else if (j.contains("range")) {
        cfg.valid_range = spn::AngleRangeDeg(j.at("range").at(0).get<double>(), j.at("range").at(1).get<double>());
      }
      const auto in = spn::read_matches_csv(matches_in);
      const auto kept = spn::filter_matches(in, cfg);
      if (!matches_out.empty()) spn::write_matches_csv(kept, matches_out);
      std::cout << json{{"input", in.size()},
                        {"kept", kept.size()},
                        {"range", {cfg.valid_range.start(), cfg.valid_range.end()}}}
                       .dump()
                << '\n';
    } else if (*dir_cmd) {
      const auto segs = spn::read_segments_csv(dir_segments);
      const double angle = spn::dominant_angle_hough(
          segs, dir_bin, unweighted ? spn::HoughWeighting::Unweighted : spn::HoughWeighting::Length);
      std::cout << json{{"angle_deg", angle}, {"segments", segs.size()}}.dump() << '\n';
    } else if (*align_cmd) {
      const auto scene = spn::read_scene_bundle(align_scene);
      spn::AlignOptions opts;
      opts.mode = align_mode == "line" ? spn::ScaleMode::LineLength : spn::ScaleMode::CameraToP1;
      const auto aligned = spn::align_to_world(scene.model, scene.cameras, scene.refline, opts);
      spn::SceneBundle out{aligned.model, aligned.cameras, scene.refline};
      out.refline.length = scene.refline.length * aligned.applied_scale;
      spn::write_scene_bundle(out, align_out);
      const auto& s = aligned.solution;
      std::cout << json{{"alpha", s.alpha_rad}, {"beta", s.beta_rad}, {"a", s.a},       {"d", s.d},
                        {"d1c", s.d1c},         {"d2c", s.d2c},       {"s", s.scale}, {"applied_scale", aligned.applied_scale}}
                       .dump()
                << '\n';
    } else if (*rep_cmd) {
      const auto scene = spn::read_scene_bundle(rep_scene);
      const auto aligned = spn::align_to_world(scene.model, scene.cameras, scene.refline);
      if (rep_frame >= static_cast<int>(aligned.cameras.size())) {
        throw CLI::ValidationError("--frame", "index exceeds camera count");
      }
      const auto map = spn::reproject(aligned.model, aligned.cameras[static_cast<std::size_t>(rep_frame)],
                                      spn::parse_variant(rep_variant));
      spn::write_depth_map(map, rep_out);
      if (!rep_png.empty()) spn::write_png(depth_preview(map), rep_png);
      std::cout << json{{"valid_pixels", map.valid_count()}, {"valid_fraction", map.valid_fraction()}}.dump() << '\n';
    } else if (*train_cmd) {
      auto cfg = experiment_config(train_c);
      if (train_epochs) cfg.train.max_epochs = *train_epochs;
      spn::nn::LossConfig loss = cfg.loss;
      if (train_lambda) loss.lambda_aux = *train_lambda;
      const auto data = spn::synth::read_dataset(train_data);
      std::optional<spn::ReprojectionVariant> variant;
      if (train_variant != "none") variant = spn::parse_variant(train_variant);
      const auto outcome = spn::train_variant(data, variant, cfg, loss);
      fs::create_directories(train_out);
      std::ofstream ck(fs::path(train_out) / "checkpoint.spn", std::ios::binary);
      ck.write(reinterpret_cast<const char*>(outcome.checkpoint.data()),
               static_cast<std::streamsize>(outcome.checkpoint.size()));
      std::ofstream(fs::path(train_out) / "metrics.csv") << spn::nn::metrics_csv(outcome.history);
      std::cout << json{{"epochs", outcome.history.size()},
                        {"image_accuracy", outcome.test.image_accuracy},
                        {"sequence_accuracy", outcome.test.sequence_accuracy}}
                       .dump()
                << '\n';
    } else if (*eval_cmd) {
      const auto data = spn::synth::read_dataset(eval_data);
      const auto net = spn::nn::load_checkpoint<double>(eval_ckpt);
      const auto samples = spn::make_samples(eval_split == "train" ? data.train : data.test, std::nullopt);
      const auto r = spn::nn::evaluate(net, std::span<const spn::nn::Sample>(samples));
      json confusion = json::array();
      for (const auto& row : r.confusion) confusion.push_back(row);
      std::cout << json{{"image_accuracy", r.image_accuracy},
                        {"sequence_accuracy", r.sequence_accuracy},
                        {"images", r.images},
                        {"sequences", r.sequences},
                        {"confusion", confusion}}
                       .dump()
                << '\n';
    } else if (*exp_cmd) {
      auto cfg = experiment_config(exp_c);
      if (!exp_out.empty()) cfg.output_dir = exp_out;
      const auto report = spn::run_experiment(cfg);
      std::cout << report.to_json().at("rows").dump(2) << '\n';
    }
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const spn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

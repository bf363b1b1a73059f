// retarget: train the reference network, run it over a clip, or resample a
// dataset for balanced wrist coverage.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "hiaer/retarget.hpp"

namespace rt = hiaer::retarget;

namespace {

hiaer::motion::MotionClip read_clip(const std::string& path) {
  if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
    std::ifstream in(path);
    if (!in) throw hiaer::ConfigError("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return hiaer::motion::clip_from_json(text);
  }
  return hiaer::motion::load_clip(path);
}

void write_json(const std::string& path, const nlohmann::json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream out(path);
  if (!out) throw hiaer::ConfigError("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Human-to-robot retargeting network tools"};
  app.require_subcommand(1);

  std::string descriptor = std::string(HIAER_DATA_DIR) + "/g1_descriptor.json";
  std::string weights;
  std::uint64_t seed = 0;
  app.add_option("--descriptor", descriptor, "Robot descriptor JSON");

  auto* train = app.add_subcommand("train", "Train on synthetic procedural data and write RTG1 weights");
  rt::TrainConfig tcfg;
  tcfg.epochs = 12;
  tcfg.learning_rate = 0.005;
  rt::SyntheticDataConfig dcfg;
  std::string loss_out;
  bool quiet = false;
  train->add_option("--weights", weights, "Output weights file")->required();
  train->add_option("--seed", seed, "RNG seed");
  train->add_option("--epochs", tcfg.epochs);
  train->add_option("--learning-rate", tcfg.learning_rate);
  train->add_option("--batch-size", tcfg.batch_size);
  train->add_option("--windows", dcfg.windows_per_style, "Planner windows per primitive and style");
  train->add_option("--loss-json", loss_out, "Write the loss history here");
  train->add_flag("--quiet", quiet);

  auto* run = app.add_subcommand("run", "Retarget a motion clip (.json or binary) to joint angles");
  std::string clip_path;
  std::string out_path;
  run->add_option("--weights", weights, "RTG1 weights file")->required();
  run->add_option("clip", clip_path, "Input clip")->required();
  run->add_option("-o,--out", out_path, "Output trajectory JSON (default stdout)");

  auto* resample = app.add_subcommand("resample", "Balance wrist-workspace coverage of a dataset");
  std::size_t grid_res = 8;
  std::size_t target = 0;
  std::string wrist = "right";
  std::vector<std::string> clips;
  resample->add_option("--weights", weights, "Retarget clips with these weights (else the reference mapping)");
  resample->add_option("--grid-res", grid_res, "Cells per axis");
  resample->add_option("--seed", seed, "RNG seed");
  resample->add_option("--target-size", target, "Frames to draw (default: dataset size)");
  resample->add_option("--wrist", wrist, "right | left | both")->check(CLI::IsMember({"right", "left", "both"}));
  resample->add_option("clips", clips, "Input clips (default: synthetic procedural dataset)");
  resample->add_option("-o,--out", out_path, "Report JSON (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto desc = rt::RobotDescriptor::load(descriptor);
    if (*train) {
      dcfg.rng_seed = seed;
      tcfg.rng_seed = seed;
      const auto pairs = rt::synthetic_pairs(desc, dcfg);
      if (!quiet) std::cerr << "training on " << pairs.size() << " synthetic pairs, " << tcfg.epochs << " epochs\n";
      const auto result = rt::train(pairs, tcfg);
      rt::save_weights(weights, result.net);
      const auto stand = rt::forward(result.net, hiaer::motion::stand_pose(), desc);
      if (!quiet) {
        std::cerr << "mse " << result.initial_mse << " -> " << result.final_mse() << ", stand residual "
                  << (stand - desc.defaults()).cwiseAbs().maxCoeff() << " rad\n";
      }
      if (!loss_out.empty()) {
        write_json(loss_out, {{"initial_mse", result.initial_mse}, {"epoch_mse", result.epoch_mse}});
      }
    } else if (*run) {
      const auto net = rt::load_weights(weights);
      write_json(out_path, rt::trajectory_to_json(rt::retarget_clip(net, read_clip(clip_path), desc), desc));
    } else if (*resample) {
      std::vector<rt::RobotTrajectory> dataset;
      if (clips.empty()) {
        rt::RobotTrajectory t;
        for (const auto& p : rt::synthetic_pairs(desc, {})) t.poses.push_back(p.target);
        dataset.push_back(std::move(t));
      } else {
        const auto net = weights.empty() ? std::optional<rt::RetargetNetwork>{} : rt::load_weights(weights);
        for (const auto& c : clips) {
          const auto clip = read_clip(c);
          if (net) {
            dataset.push_back(rt::retarget_clip(*net, clip, desc));
          } else {
            rt::RobotTrajectory t;
            t.fps = clip.fps;
            for (const auto& f : clip.frames) t.poses.push_back(rt::reference_mapping(f, desc));
            dataset.push_back(std::move(t));
          }
        }
      }
      std::size_t total = 0;
      for (const auto& t : dataset) total += t.size();
      const rt::WorkspaceGrid grid{desc.workspace, grid_res};
      const auto mode = wrist == "left" ? rt::WristMode::Left : wrist == "both" ? rt::WristMode::Both
                                                                                  : rt::WristMode::Right;
      const auto report = rt::resample_balanced(dataset, grid, target == 0 ? total : target, seed, desc, mode);
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
      write_json(out_path, {{"input_frames", total},
                            {"drawn", report.frames.size()},
                            {"source_index", report.source_index},
                            {"before", rt::occupancy_to_json(report.before, grid)},
                            {"after", rt::occupancy_to_json(report.after, grid)},
                            {"warnings", report.warnings}});
    }
  } catch (const hiaer::Error& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "posefuse/posefuse.hpp"

namespace {

using posefuse::io::json;

// Validation failures (bad files, bad arguments) exit with this code.
constexpr int kValidationExit = 2;

void emit(const json& j, const std::string& out) {
  const std::string text = posefuse::io::dump(j);
  if (out.empty() || out == "-") {
    std::fwrite(text.data(), 1, text.size(), stdout);
  } else {
    posefuse::io::write_text(out, text);
  }
}

void report_warnings(const posefuse::io::Warnings& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

posefuse::CodecConfig codec_from(const std::string& path) {
  if (path.empty()) return posefuse::io::build_codec(posefuse::CodecSettings{}, "codec");
  return posefuse::io::load_codec_config(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"posefuse: bin & delta pose codec, symmetry-aware distances and multi-view hypothesis voting.\n"
               "Set POSEFUSE_THREADS to cap worker threads (0 = all cores)."};
  app.require_subcommand(1);

  // sample-so3
  std::size_t n_bins = 60;
  std::string out;
  bool with_grids = false;
  std::string codec_path;
  auto* sample = app.add_subcommand("sample-so3", "Write a near-uniform SO(3) bin set to a tessellation file");
  sample->add_option("--n", n_bins, "Number of rotation bins")->required()->check(CLI::PositiveNumber);
  sample->add_option("--out", out, "Output file (default: stdout)");
  sample->add_flag("--with-grids", with_grids, "Also store the translation grids of --config");
  sample->add_option("--config", codec_path, "Codec config JSON supplying the translation grids");

  // build-table
  std::string bins_path, model_path;
  auto* build = app.add_subcommand("build-table", "Precompute the bin-to-bin rotation distance table for a model");
  build->add_option("--bins", bins_path, "Tessellation file from sample-so3")->required();
  build->add_option("--model", model_path, "Point cloud file ('xyz <m>' header)")->required();
  build->add_option("--out", out, "Output tessellation file with the table (default: stdout)");

  // generate-model
  std::string shape = "cylinder";
  double radius = 0.05, height = 0.2, width = 0.1, depth = 0.1;
  std::uint64_t blob_seed = 0;
  std::size_t points = 1000;
  auto* gen = app.add_subcommand("generate-model", "Sample a synthetic object surface to a point cloud file");
  gen->add_option("--shape", shape, "box, cylinder or blob")->check(CLI::IsMember({"box", "cylinder", "blob"}));
  gen->add_option("--radius", radius, "Cylinder or blob radius (m)");
  gen->add_option("--height", height, "Cylinder height or box y extent (m)");
  gen->add_option("--width", width, "Box x extent (m)");
  gen->add_option("--depth", depth, "Box z extent (m)");
  gen->add_option("--seed", blob_seed, "Blob seed");
  gen->add_option("--points", points, "Number of surface points");
  gen->add_option("--out", out, "Output point cloud (default: stdout)");

  // encode / decode
  std::string pose_path, code_path;
  auto* enc = app.add_subcommand("encode", "Encode a pose into a sparse bin & delta code");
  enc->add_option("--pose", pose_path, "Pose JSON {\"q\":[w,x,y,z],\"t\":[x,y,z]}")->required();
  enc->add_option("--config", codec_path, "Codec config JSON (default: built-in)");
  enc->add_option("--out", out, "Output code JSON (default: stdout)");
  auto* dec = app.add_subcommand("decode", "Decode a sparse bin & delta code to a pose");
  dec->add_option("--code", code_path, "Code JSON")->required();
  dec->add_option("--config", codec_path, "Codec config JSON (default: built-in)");
  dec->add_option("--out", out, "Output pose JSON (default: stdout)");

  // vote
  std::string views_path, table_path, backend_name, compare_name;
  double sigma = 0.02;
  std::size_t k = 3;
  bool exclude_same_view = false, timing = false;
  auto* vt = app.add_subcommand("vote", "Fuse a multi-view set of codes or hypotheses by voting");
  vt->add_option("--views", views_path, "ViewSet JSON")->required();
  vt->add_option("--model", model_path, "Point cloud file")->required();
  vt->add_option("--table", table_path, "Tessellation file with a distance table built from --model");
  vt->add_option("--sigma", sigma, "Voting threshold (m)")->check(CLI::PositiveNumber);
  vt->add_option("--k", k, "Top-k bins per subspace")->check(CLI::PositiveNumber);
  vt->add_flag("--exclude-same-view", exclude_same_view, "Only hypotheses from other views vote");
  vt->add_option("--config", codec_path, "Codec config JSON (default: built-in)");
  vt->add_option("--backend", backend_name, "exact, decoupled or table (default: table with --table, else exact)")
      ->check(CLI::IsMember({"exact", "decoupled", "table"}));
  vt->add_option("--compare", compare_name, "Also vote with this backend and report its winner")
      ->check(CLI::IsMember({"exact", "decoupled", "table"}));
  vt->add_flag("--timing", timing, "Include vote timing in the report (output is then not reproducible)");
  vt->add_option("--out", out, "Output report JSON (default: stdout)");

  // eval
  std::string pred_path, gt_path, curve_path;
  double tau_max = 0.1;
  std::size_t resolution = 100;
  auto* ev = app.add_subcommand("eval", "Score predicted poses against ground truth (add_s, mPCK)");
  ev->add_option("--pred", pred_path, "Predicted poses JSON")->required();
  ev->add_option("--gt", gt_path, "Ground-truth poses JSON")->required();
  ev->add_option("--model", model_path, "Point cloud file")->required();
  ev->add_option("--tau-max", tau_max, "Largest threshold of the accuracy curve (m)")->check(CLI::PositiveNumber);
  ev->add_option("--out-curve", curve_path, "Write the accuracy curve as CSV");
  ev->add_option("--resolution", resolution, "Number of curve intervals")->check(CLI::PositiveNumber);
  ev->add_option("--out", out, "Output summary JSON (default: stdout)");

  // simulate
  std::string config_path, csv_path;
  auto* sim = app.add_subcommand("simulate", "Run the single-view vs multi-view experiment");
  sim->add_option("--config", config_path, "Experiment config JSON (default: built-in)");
  sim->add_option("--out", out, "Output report JSON (default: stdout)");
  sim->add_option("--csv", csv_path, "Also write per-trial distances as CSV");

  // bench
  std::size_t dense_points = 10000;
  std::uint64_t bench_seed = 1;
  std::size_t repeats = 20;
  auto* bench = app.add_subcommand("bench", "Time table voting against exact voting on a dense model");
  bench->add_option("--config", config_path, "Experiment config JSON (default: built-in)");
  bench->add_option("--dense-points", dense_points, "Points in the exact-voting model")->check(CLI::PositiveNumber);
  bench->add_option("--seed", bench_seed, "Scene seed");
  bench->add_option("--repeats", repeats, "Table votes averaged per measurement")->check(CLI::PositiveNumber);
  bench->add_option("--out", out, "Output JSON (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidationExit;
  }

  namespace io = posefuse::io;
  try {
    io::Warnings warnings;
    if (*sample) {
      io::TessellationFile f;
      f.sampler_n = n_bins;
      f.bins = posefuse::sample_so3_uniform(n_bins);
      if (with_grids) f.grids = codec_from(codec_path).grids;
      emit(io::tessellation_to_json(f), out);
    } else if (*build) {
      io::TessellationFile f = io::load_tessellation(bins_path);
      const posefuse::ObjectModel model = io::load_point_cloud(model_path);
      f.table = posefuse::precompute_table(f.bins, model);
      emit(io::tessellation_to_json(f), out);
    } else if (*gen) {
      posefuse::ShapeSpec spec;
      if (shape == "box") spec = posefuse::BoxShape{width, height, depth};
      else if (shape == "cylinder") spec = posefuse::CylinderShape{radius, height};
      else spec = posefuse::BlobShape{blob_seed, radius};
      const auto model = posefuse::generate_model(spec, points);
      const std::string text = io::point_cloud_to_text(model.model.points());
      if (out.empty() || out == "-") std::fwrite(text.data(), 1, text.size(), stdout);
      else io::write_text(out, text);
    } else if (*enc) {
      const auto cfg = codec_from(codec_path);
      const auto poses = io::poses_from_json(io::load_json(pose_path), "", &warnings);
      if (poses.size() != 1) throw posefuse::Error(posefuse::ErrorKind::Parse, pose_path + ": expected exactly one pose");
      report_warnings(warnings);
      emit(io::code_to_json(posefuse::encode(poses.front(), cfg)), out);
    } else if (*dec) {
      const auto cfg = codec_from(codec_path);
      const auto code = io::code_from_json(io::load_json(code_path), cfg, "", &warnings);
      report_warnings(warnings);
      emit(io::pose_to_json(posefuse::decode(code, cfg)), out);
    } else if (*vt) {
      const auto cfg = codec_from(codec_path);
      const auto vs = io::viewset_from_json(io::load_json(views_path), cfg, &warnings);
      report_warnings(warnings);
      const posefuse::ObjectModel model = io::load_point_cloud(model_path);
      std::optional<io::TessellationFile> tess;
      if (!table_path.empty()) {
        tess = io::load_tessellation(table_path);
        io::table_for_model(*tess, model);
      }
      auto make = [&](const std::string& name) -> posefuse::VoteBackend {
        if (name == "exact") return posefuse::ExactBackend{&model};
        if (name == "decoupled") return posefuse::DecoupledBackend{&model};
        if (!tess) throw posefuse::Error(posefuse::ErrorKind::InvalidArgument, "--backend table needs --table");
        return posefuse::TableBackend{&*tess->table, &tess->bins};
      };
      if (backend_name.empty()) backend_name = tess ? "table" : "exact";
      posefuse::FuseOptions options;
      options.k = k;
      options.vote = {sigma, exclude_same_view};
      if (!compare_name.empty()) options.compare = make(compare_name);
      emit(io::fusion_report_to_json(posefuse::fuse(vs, cfg, options, make(backend_name)), timing), out);
    } else if (*ev) {
      const auto pred = io::poses_from_json(io::load_json(pred_path), "", &warnings);
      const auto gt = io::poses_from_json(io::load_json(gt_path), "", &warnings);
      report_warnings(warnings);
      if (pred.size() != gt.size()) {
        throw posefuse::Error(posefuse::ErrorKind::InvalidArgument,
                              "poses: --pred has " + std::to_string(pred.size()) + " poses but --gt has " + std::to_string(gt.size()));
      }
      const posefuse::ObjectModel model = io::load_point_cloud(model_path);
      std::vector<double> distances(pred.size());
      posefuse::parallel_for(pred.size(), [&](std::size_t i) { distances[i] = posefuse::add_s(pred[i], gt[i], model); });
      const auto curve = posefuse::mpck(distances, tau_max);
      if (!curve_path.empty()) io::write_text(curve_path, io::pck_curve_csv(curve, resolution));
      json summary = io::pck_summary_json(curve);
      summary["distances"] = distances;
      emit(summary, out);
    } else if (*sim) {
      const auto cfg = config_path.empty() ? posefuse::ExperimentConfig{} : io::load_experiment_config(config_path);
      const auto res = posefuse::prepare_resources(cfg);
      const auto reports = posefuse::run_seeds(cfg, res);
      if (!csv_path.empty()) io::write_text(csv_path, io::experiment_trials_csv(reports, cfg.top_k_max));
      emit(io::experiment_report_to_json(cfg, res, reports), out);
    } else if (*bench) {
      auto cfg = config_path.empty() ? posefuse::ExperimentConfig{} : io::load_experiment_config(config_path);
      cfg.backend = posefuse::BackendKind::Table;
      const auto res = posefuse::prepare_resources(cfg);
      const auto b = posefuse::benchmark_voting(cfg, res, dense_points, bench_seed, repeats);
      emit({{"hypotheses", b.hypotheses},
            {"dense_points", b.dense_points},
            {"table_bins", cfg.table_bins},
            {"table_seconds", b.table_seconds},
            {"exact_seconds", b.exact_seconds},
            {"speedup", b.speedup},
            {"same_winner", b.same_winner},
            {"table_build_seconds", res.table_seconds}},
           out);
    }
  } catch (const posefuse::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

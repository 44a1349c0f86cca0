#pragma once

// Command-line front end. Exit codes: 0 success, 1 invalid input
// (flags, files, data), 2 runtime failure.

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "weakstil/weakstil.hpp"

namespace weakstil::cli {

namespace detail {

struct DatasetFlags {
  std::string manifest;
  std::string bags;

  void add(CLI::App* app) {
    app->add_option("--manifest", manifest, "Label manifest CSV (patient_id,slide_id,stil_fraction,stratum)")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--bags", bags, "Directory holding <slide_id>.wksb bag files")
        ->required()
        ->check(CLI::ExistingDirectory);
  }

  std::vector<FeatureBag> load() const { return load_dataset(manifest, bags); }
};

struct TrainFlags {
  std::string head = "linear";
  std::size_t hidden = kDefaultHidden;
  double lr = 5e-3;
  double l2 = 1e-4;
  bool decoupled = false;
  int epochs = 50;
  std::optional<std::size_t> subsample;
  double threshold = 0.2;
  std::uint64_t seed = 0;

  void add(CLI::App* app, bool with_rates = true) {
    app->add_option("--head", head, "Head architecture: linear | two-linear | two-linear-tanh");
    app->add_option("--hidden", hidden, "Hidden width of the two-layer heads");
    if (with_rates) {
      app->add_option("--lr", lr, "Adam learning rate");
      app->add_option("--l2", l2, "L2 strength");
    }
    app->add_flag("--decoupled-l2", decoupled, "Apply L2 as decoupled weight decay instead of a gradient term");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--subsample", subsample, "Tiles drawn per bag per step (default: all tiles)");
    app->add_option("--threshold", threshold, "Binarization threshold for AUC (low iff label <= threshold)");
    app->add_option("--seed", seed, "Random seed");
  }

  TrainConfig config() const {
    TrainConfig c;
    const auto kind = parse_head_kind(head);
    if (!kind) throw ValidationError("unknown head '" + head + "'");
    c.head_kind = *kind;
    c.hidden = hidden;
    c.lr = lr;
    c.l2 = l2;
    c.l2_mode = decoupled ? L2Mode::Decoupled : L2Mode::Coupled;
    c.epochs = epochs;
    c.subsample = subsample;
    c.binarize_threshold = threshold;
    c.seed = seed;
    c.validate();
    return c;
  }
};

inline std::string to_text(const auto& writer) {
  std::ostringstream os;
  writer(os);
  return os.str();
}

inline void write_report_files(const fs::path& dir, const EvalReport& report, const std::string& stem = "") {
  write_file_atomic(dir / (stem + "predictions.csv"),
                    to_text([&](std::ostream& os) { write_predictions_csv(os, report.records); }));
  write_file_atomic(dir / (stem + "summary.csv"), to_text([&](std::ostream& os) { write_summary_csv(os, report); }));
}

inline void print_report(std::ostream& out, const std::string& title, const EvalReport& report) {
  out << title << ": n=" << report.records.size() << " auc=" << format_optional(report.auc, 4)
      << " r=" << format_optional(report.pearson_r, 4) << " r2=" << format_optional(report.r2, 4)
      << " mse=" << format_optional(report.mse, 6) << '\n';
}

inline SplitPlan plan_for(const std::string& plan_path, std::span<const FeatureBag> bags, std::size_t k,
                          std::uint64_t seed) {
  if (plan_path.empty()) return stratified_kfold(bags, k, seed);
  std::ifstream in(plan_path);
  if (!in) throw ValidationError("cannot open '" + plan_path + "'");
  return read_split_csv(in);
}

inline std::vector<std::pair<std::string, double>> parse_strata(const std::string& text) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& item : weakstil::detail::split_csv_line(text)) {
    const auto colon = item.rfind(':');
    double p = 0.0;
    if (colon == std::string::npos || !weakstil::detail::parse_double(item.substr(colon + 1), p))
      throw ValidationError("bad --strata entry '" + item + "' (expected name:proportion)");
    out.emplace_back(item.substr(0, colon), p);
  }
  return out;
}

}  // namespace detail

/// Parses argv and runs one subcommand.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weak-label multiple-instance sTIL regression"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with a planted head");
  SynthConfig sc;
  std::string synth_strata = "all:1";
  std::string synth_planted = "linear";
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--num-bags", sc.num_bags, "Number of bags (one patient each)");
  synth->add_option("--tiles-min", sc.tiles_min, "Minimum tiles per bag");
  synth->add_option("--tiles-max", sc.tiles_max, "Maximum tiles per bag");
  synth->add_option("--h-dim", sc.h_dim, "Feature dimension H");
  synth->add_option("--noise", sc.label_noise_sd, "Label noise standard deviation");
  synth->add_option("--nuisance", sc.nuisance_sd, "Per-bag nuisance shift standard deviation");
  synth->add_option("--strata", synth_strata, "Comma-separated name:proportion list");
  synth->add_option("--planted", synth_planted, "Planted head: linear | two-linear-tanh");
  synth->add_option("--seed", sc.seed, "Random seed");

  // split
  auto* split = app.add_subcommand("split", "Write a stratified, rotated k-fold split plan");
  std::string split_manifest, split_out;
  std::size_t split_k = 5;
  std::uint64_t split_seed = 0;
  split->add_option("--manifest", split_manifest, "Label manifest CSV")->required()->check(CLI::ExistingFile);
  split->add_option("--k", split_k, "Number of folds");
  split->add_option("--seed", split_seed, "Random seed");
  split->add_option("--out", split_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train one fold; writes model.wksm and train.log");
  detail::DatasetFlags train_data;
  detail::TrainFlags train_flags;
  std::string train_plan, train_out;
  std::size_t train_k = 5, train_fold_index = 0;
  train_data.add(train);
  train_flags.add(train);
  train->add_option("--plan", train_plan, "Pinned split plan CSV (default: derived from --seed)")
      ->check(CLI::ExistingFile);
  train->add_option("--k", train_k, "Number of folds when deriving a plan");
  train->add_option("--fold", train_fold_index, "Fold index to train");
  train->add_option("--out", train_out, "Output directory")->required();

  // cv
  auto* cv = app.add_subcommand("cv", "Run every fold; writes per-fold reports and a mean±std summary");
  detail::DatasetFlags cv_data;
  detail::TrainFlags cv_flags;
  std::string cv_plan, cv_out;
  std::size_t cv_k = 5, cv_jobs = 1;
  bool cv_sem = false;
  cv_data.add(cv);
  cv_flags.add(cv);
  cv->add_option("--plan", cv_plan, "Pinned split plan CSV (default: derived from --seed)")->check(CLI::ExistingFile);
  cv->add_option("--k", cv_k, "Number of folds when deriving a plan");
  cv->add_option("--jobs", cv_jobs, "Folds trained in parallel");
  cv->add_flag("--sem", cv_sem, "Report standard error of the mean instead of standard deviation");
  cv->add_option("--out", cv_out, "Output directory")->required();

  // grid
  auto* grid = app.add_subcommand("grid", "Learning-rate x L2 grid search over all folds");
  detail::DatasetFlags grid_data;
  detail::TrainFlags grid_flags;
  grid_flags.subsample = 500;
  GridSpec paper = GridSpec::paper(HeadKind::Linear);
  std::vector<double> grid_lrs = paper.learning_rates;
  std::vector<double> grid_regs = paper.regs;
  std::string grid_plan, grid_out;
  std::size_t grid_k = 5, grid_jobs = 1;
  grid_data.add(grid);
  grid_flags.add(grid, false);
  grid->add_option("--lrs", grid_lrs, "Learning rates, strictly decreasing")->delimiter(',');
  grid->add_option("--regs", grid_regs, "L2 strengths, strictly decreasing")->delimiter(',');
  grid->add_option("--plan", grid_plan, "Pinned split plan CSV (default: derived from --seed)")
      ->check(CLI::ExistingFile);
  grid->add_option("--k", grid_k, "Number of folds when deriving a plan");
  grid->add_option("--jobs", grid_jobs, "Work units trained in parallel");
  grid->add_option("--out", grid_out, "Output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  detail::DatasetFlags eval_data;
  std::string eval_model, eval_out;
  double eval_threshold = 0.2;
  eval_data.add(eval);
  eval->add_option("--model", eval_model, "Checkpoint (.wksm)")->required()->check(CLI::ExistingFile);
  eval->add_option("--threshold", eval_threshold, "Binarization threshold for AUC");
  eval->add_option("--out", eval_out, "Output directory")->required();

  // baseline
  auto* baseline = app.add_subcommand("baseline", "Evaluate detector counts as tumor-bed TIL fractions");
  std::string base_detections, base_manifest, base_out;
  double base_threshold = 0.2;
  TileGeometry geometry;
  baseline->add_option("--detections", base_detections, "CSV slide_id,num_tils,num_tb_tiles")
      ->required()
      ->check(CLI::ExistingFile);
  baseline->add_option("--manifest", base_manifest, "Label manifest CSV")->required()->check(CLI::ExistingFile);
  baseline->add_option("--threshold", base_threshold, "Binarization threshold for AUC");
  baseline->add_option("--tile-px", geometry.tile_px, "Tile side in pixels");
  baseline->add_option("--mpp", geometry.mpp, "Microns per pixel");
  baseline->add_option("--til-radius", geometry.til_radius_um, "Lymphocyte radius in microns");
  baseline->add_option("--out", base_out, "Output directory")->required();

  // heatmap
  auto* heatmap = app.add_subcommand("heatmap", "Render per-tile scores as PPM images");
  detail::DatasetFlags heat_data;
  std::string heat_model, heat_out;
  std::vector<std::string> heat_slides;
  std::size_t heat_scale = 1;
  heat_data.add(heatmap);
  heatmap->add_option("--model", heat_model, "Checkpoint (.wksm)")->required()->check(CLI::ExistingFile);
  heatmap->add_option("--slides", heat_slides, "Slide ids to render (default: all)")->delimiter(',');
  heatmap->add_option("--scale", heat_scale, "Pixels per tile side");
  heatmap->add_option("--out", heat_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      sc.strata = detail::parse_strata(synth_strata);
      const auto kind = parse_head_kind(synth_planted);
      if (!kind) throw ValidationError("unknown planted head '" + synth_planted + "'");
      sc.planted_kind = *kind;
      sc.validate();
      const SynthDataset ds = generate(sc);
      write_dataset(ds.bags, synth_out);
      write_checkpoint(ds.planted_head, fs::path(synth_out) / "planted.wksm");
      out << "wrote " << ds.bags.size() << " bags to " << synth_out << '\n';
    } else if (*split) {
      if (split_k < 3) throw ValidationError("k must be ≥ 3");
      std::vector<PatientStratum> patients;
      for (const auto& row : read_manifest(fs::path(split_manifest))) patients.push_back({row.patient_id, row.stratum});
      const SplitPlan plan = stratified_kfold(patients, split_k, split_seed);
      write_file_atomic(fs::path(split_out) / "split_plan.csv",
                        detail::to_text([&](std::ostream& os) { write_split_csv(os, plan); }));
      out << "wrote split plan for " << plan.patient_ids.size() << " patients\n";
    } else if (*train) {
      const TrainConfig cfg = train_flags.config();
      const auto bags = train_data.load();
      const SplitPlan plan = detail::plan_for(train_plan, bags, train_k, train_flags.seed);
      if (train_fold_index >= plan.k) throw ValidationError("--fold must be < " + std::to_string(plan.k));
      const FoldOutcome fold = run_fold(plan, train_fold_index, bags, cfg);
      const fs::path dir(train_out);
      write_checkpoint(fold.training.best_head, dir / "model.wksm");
      write_file_atomic(dir / "train.log", fold.log);
      detail::write_report_files(dir, fold.test, "test_");
      out << fold.log;
      out << "best epoch " << fold.training.best_epoch << " val_auc " << format_fixed(fold.training.best_val_auc, 4)
          << '\n';
      detail::print_report(out, "test", fold.test);
    } else if (*cv) {
      const TrainConfig cfg = cv_flags.config();
      const auto bags = cv_data.load();
      const SplitPlan plan = detail::plan_for(cv_plan, bags, cv_k, cv_flags.seed);
      const CrossValResult result = cross_validate(plan, bags, cfg, cv_jobs);
      const fs::path dir(cv_out);
      write_file_atomic(dir / "split_plan.csv", detail::to_text([&](std::ostream& os) { write_split_csv(os, plan); }));
      for (const auto& f : result.folds) {
        const fs::path fdir = dir / ("fold" + std::to_string(f.fold));
        write_checkpoint(f.training.best_head, fdir / "model.wksm");
        write_file_atomic(fdir / "train.log", f.log);
        detail::write_report_files(fdir, f.test);
        detail::print_report(out, "fold " + std::to_string(f.fold), f.test);
      }
      const auto pooled = result.pooled_predictions();
      write_file_atomic(dir / "predictions.csv",
                        detail::to_text([&](std::ostream& os) { write_predictions_csv(os, pooled); }));
      const std::string summary = detail::to_text([&](std::ostream& os) {
        write_cv_summary_csv(os, result, cv_sem ? Spread::StdError : Spread::StdDev);
      });
      write_file_atomic(dir / "summary.csv", summary);
      out << summary;
    } else if (*grid) {
      TrainConfig base = grid_flags.config();
      GridSpec spec;
      spec.learning_rates = grid_lrs;
      spec.regs = grid_regs;
      spec.base = base;
      spec.validate();
      const auto bags = grid_data.load();
      const SplitPlan plan = detail::plan_for(grid_plan, bags, grid_k, grid_flags.seed);
      const GridReport report = run_grid(spec, plan, bags, grid_jobs);
      const fs::path dir(grid_out);
      write_file_atomic(dir / "grid_report.csv", detail::to_text([&](std::ostream& os) { write_grid_csv(os, report); }));
      const std::string table = detail::to_text([&](std::ostream& os) { write_grid_table(os, report); });
      write_file_atomic(dir / "grid_report.txt", table);
      for (const auto& c : report.cells)
        for (const auto& e : c.errors) err << "cell lr=" << format_g(c.lr) << " reg=" << format_g(c.reg) << ": " << e << '\n';
      out << table;
    } else if (*eval) {
      const ModelHead head = read_checkpoint(eval_model);
      const auto bags = eval_data.load();
      const EvalReport report = evaluate(head, bags, eval_threshold);
      detail::write_report_files(eval_out, report);
      detail::print_report(out, "eval", report);
    } else if (*baseline) {
      if (!geometry.valid()) throw ValidationError("tile geometry values must be positive");
      const auto rows = read_manifest(fs::path(base_manifest));
      std::map<std::string, double> label_of;
      for (const auto& r : rows) label_of[r.slide_id] = r.label;
      std::vector<PredictionRecord> records;
      for (const auto& d : read_detections(fs::path(base_detections), geometry)) {
        const auto it = label_of.find(d.slide_id);
        if (it == label_of.end()) throw ValidationError("detections: slide '" + d.slide_id + "' not in manifest");
        const double estimate = tb_til_percent(d);
        if (estimate > 1.0)
          err << "warning: slide '" << d.slide_id << "' tbTIL% estimate " << format_fixed(estimate, 4)
              << " exceeds 1\n";
        records.push_back({d.slide_id, it->second, estimate});
      }
      if (records.empty()) throw ValidationError("detections: no rows");
      const EvalReport report = evaluate_records(std::move(records), base_threshold);
      detail::write_report_files(base_out, report);
      detail::print_report(out, "baseline", report);
    } else if (*heatmap) {
      if (heat_scale < 1) throw ValidationError("--scale must be ≥ 1");
      const ModelHead head = read_checkpoint(heat_model);
      const auto bags = heat_data.load();
      std::set<std::string> wanted(heat_slides.begin(), heat_slides.end());
      for (const auto& id : wanted) {
        bool found = false;
        for (const auto& b : bags) found = found || b.slide_id == id;
        if (!found) throw ValidationError("unknown slide '" + id + "'");
      }
      std::size_t written = 0;
      for (const auto& bag : bags) {
        if (!wanted.empty() && !wanted.count(bag.slide_id)) continue;
        const BagPrediction pred = forward(head, bag);
        write_ppm(render(bag, pred.tile_scores, heat_scale), fs::path(heat_out) / (bag.slide_id + ".ppm"));
        ++written;
      }
      out << "wrote " << written << " heatmaps\n";
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace weakstil::cli

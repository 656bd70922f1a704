// docbin-cli: train, apply and evaluate the two-level ViT binarizer and the
// classical baselines.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "docbin/ablation.hpp"
#include "docbin/baselines.hpp"
#include "docbin/checkpoint.hpp"
#include "docbin/config.hpp"
#include "docbin/dataset.hpp"
#include "docbin/errors.hpp"
#include "docbin/metrics.hpp"
#include "docbin/synth.hpp"
#include "docbin/tiling.hpp"
#include "docbin/training.hpp"

namespace fs = std::filesystem;
using namespace docbin;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

/// Options shared by every command that builds a RunConfig.
struct ConfigOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool no_attn_residual = false;
  std::string dataset;
  std::optional<int> year;
  std::string output;
  std::optional<int> epochs;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "INI-style run configuration")
        ->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "Override a config value: section.key=value")
        ->type_name("KEY=VALUE");
    cmd->add_option("--seed", seed, "Random seed (train.seed)");
    cmd->add_flag("--no-attn-residual", no_attn_residual,
                  "Drop the residual around the attention sub-block");
    cmd->add_option("--dataset", dataset, "Dataset root (paths.dataset_root)");
    cmd->add_option("--year", year, "Held-out year (run.held_out_year)");
    cmd->add_option("-o,--output", output, "Output directory (paths.output_dir)");
    cmd->add_option("--epochs", epochs, "Training epochs (train.epochs)");
  }

  RunConfig build() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("--set expects section.key=value, got '" + kv + "'");
      }
      set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.train.seed = *seed;
    if (no_attn_residual) cfg.model.attn_residual = false;
    if (!dataset.empty()) cfg.dataset_root = dataset;
    if (year) cfg.held_out_year = *year;
    if (!output.empty()) cfg.output_dir = output;
    if (epochs) cfg.train.epochs = *epochs;
    cfg.validate();
    return cfg;
  }
};

std::size_t tile_size(const ModelConfig& m) {
  if (m.height != m.width) {
    throw ConfigError("model.height and model.width must match for square tiling, got " +
                      std::to_string(m.height) + " and " + std::to_string(m.width));
  }
  return static_cast<std::size_t>(m.height);
}

void require_dataset(const RunConfig& cfg) {
  if (cfg.dataset_root.empty()) {
    throw ConfigError("paths.dataset_root is not set (use --dataset)");
  }
}

void require_year(const RunConfig& cfg) {
  if (cfg.held_out_year == 0) {
    throw ConfigError("run.held_out_year is not set (use --year)");
  }
}

std::vector<DocumentPair> year_pairs(const std::vector<DocumentPair>& corpus, int year) {
  std::vector<DocumentPair> out;
  for (const auto& p : corpus) {
    if (p.year == year) out.push_back(p);
  }
  if (out.empty()) throw DataError("no images for year " + std::to_string(year));
  return out;
}

GrayImage run_model(const TLViT<float>& model, const GrayImage& page) {
  TileSet tiles = tile(page, tile_size(model.config()));
  for (auto& t : tiles.tiles) t = model.predict(t);
  return untile(tiles);
}

TLViT<float> load_model(const fs::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  return TLViT<float>(ckpt.config, restore_params(ckpt, ckpt.config));
}

void print_progress(int epoch, int total, double loss) {
  std::cout << "epoch " << epoch << "/" << total << "  loss " << std::setprecision(6) << loss
            << std::endl;
}

/// Binarizes every pair, evaluates each and writes `<stem>.csv` plus a
/// printed table. Returns the mean report.
template <class Binarize>
MetricReport evaluate_pairs(const std::vector<DocumentPair>& pairs, Binarize&& binarize,
                            const fs::path& output_dir, const std::string& stem,
                            const std::string& title) {
  std::vector<MetricRow> rows(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const BinaryImage gt = threshold_image(pairs[i].ground_truth, 0.5);
    rows[i] = {pairs[i].id, pairs[i].year, evaluate_pair(binarize(pairs[i].degraded), gt)};
  }
  std::vector<MetricReport> reports;
  for (const auto& r : rows) reports.push_back(r.report);
  const MetricReport mean = mean_report(reports);
  fs::create_directories(output_dir);
  const fs::path csv = output_dir / (stem + ".csv");
  std::ofstream out(csv);
  if (!out) throw IoError("cannot write " + csv.string());
  write_metrics_csv(out, rows, mean);
  write_metrics_table(std::cout, rows, mean, title);
  std::cout << "metrics written to " << csv.string() << '\n';
  return mean;
}

// train

/// Lines of an `epoch,loss` log whose epoch is at most `epoch`.
std::vector<std::string> log_lines_through(const fs::path& path, int epoch) {
  std::vector<std::string> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    try {
      if (std::stoi(line.substr(0, comma)) <= epoch) out.push_back(line);
    } catch (const std::exception&) {
      throw DataError("malformed loss log line in " + path.string() + ": " + line);
    }
  }
  return out;
}

int cmd_train(const ConfigOptions& opts, const std::string& resume) {
  RunConfig cfg = opts.build();
  require_dataset(cfg);
  require_year(cfg);
  const auto corpus = enumerate_dataset(cfg.dataset_root);
  const auto [train, test] = leave_one_out_split(corpus, cfg.held_out_year);
  std::cout << "train pairs " << train.size() << ", held-out pairs " << test.size()
            << " (year " << cfg.held_out_year << ")\n";

  std::optional<Trainer> trainer;
  if (!resume.empty()) {
    trainer.emplace(load_checkpoint(resume), cfg.train);
  } else {
    trainer.emplace(cfg.model, cfg.train);
  }
  fs::create_directories(cfg.output_dir);
  const fs::path log_path = cfg.output_dir / "loss.csv";
  const std::vector<std::string> kept =
      resume.empty() ? std::vector<std::string>{} : log_lines_through(log_path, trainer->epoch());
  const auto samples = make_samples(train, tile_size(trainer->model_config()));
  std::cout << "training on " << samples.size() << " tiles of "
            << trainer->model_config().height << "x" << trainer->model_config().width << '\n';

  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError("cannot write " + log_path.string());
  for (const auto& line : kept) log << line << '\n';
  log << std::setprecision(17);
  trainer->fit(samples, cfg.output_dir / "checkpoints", [&](int epoch, double loss) {
    log << epoch << ',' << loss << '\n' << std::flush;
    print_progress(epoch, cfg.train.epochs, loss);
  });
  const fs::path final_path = cfg.output_dir / "model.ckpt";
  save_checkpoint(trainer->checkpoint(), final_path);
  std::cout << "checkpoint " << final_path.string() << ", loss log " << log_path.string()
            << '\n';
  return 0;
}

// binarize

int cmd_binarize(const std::string& checkpoint, const std::string& input,
                 const std::string& output, double threshold) {
  const TLViT<float> model = load_model(checkpoint);
  const GrayImage page = load_image(input);
  save_image(threshold_image(run_model(model, page), threshold), output);
  std::cout << "wrote " << output << '\n';
  return 0;
}

// baseline

BinaryImage apply_baseline(const std::string& method, const GrayImage& page, int window,
                           double k) {
  if (method == "otsu") return otsu(page);
  return sauvola(page, window, k);
}

int cmd_baseline(const std::string& method, const std::string& input, const std::string& output,
                 int window, double k) {
  const GrayImage page = load_image(input);
  save_image(apply_baseline(method, page, window, k), output);
  std::cout << "wrote " << output << '\n';
  return 0;
}

// eval

int cmd_eval(const ConfigOptions& opts, const std::string& checkpoint,
             const std::string& baseline, int window, double k) {
  const RunConfig cfg = opts.build();
  require_dataset(cfg);
  require_year(cfg);
  const auto pairs = year_pairs(enumerate_dataset(cfg.dataset_root), cfg.held_out_year);
  const std::string year = std::to_string(cfg.held_out_year);
  if (!baseline.empty()) {
    evaluate_pairs(
        pairs, [&](const GrayImage& page) { return apply_baseline(baseline, page, window, k); },
        cfg.output_dir, "metrics_" + baseline + "_" + year, baseline + " on " + year);
    return 0;
  }
  const fs::path ckpt = checkpoint.empty() ? cfg.checkpoint : fs::path(checkpoint);
  if (ckpt.empty()) throw ConfigError("eval needs --checkpoint or --baseline");
  const TLViT<float> model = load_model(ckpt);
  evaluate_pairs(
      pairs, [&](const GrayImage& page) { return threshold_image(run_model(model, page), 0.5); },
      cfg.output_dir, "metrics_model_" + year, "model on " + year);
  return 0;
}

// ablate

int cmd_ablate(const ConfigOptions& opts, const std::vector<std::string>& row_ids) {
  std::vector<AblationRow> rows;
  if (row_ids.empty()) {
    rows = ablation_rows();
  } else {
    for (const auto& id : row_ids) rows.push_back(ablation_row(id));
  }
  RunConfig cfg = opts.build();
  require_dataset(cfg);
  require_year(cfg);
  const auto corpus = enumerate_dataset(cfg.dataset_root);
  const auto [train, test] = leave_one_out_split(corpus, cfg.held_out_year);

  fs::create_directories(cfg.output_dir);
  const fs::path csv_path = cfg.output_dir / "ablation.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot write " + csv_path.string());
  csv << "row,patch,subpatch,dim,local_dim,global_layers,local_layers,parameters,epochs,"
         "final_loss,psnr,reported_psnr\n";

  std::ostringstream table;
  table << std::left << std::setw(4) << "Row" << std::right << std::setw(7) << "Patch"
        << std::setw(6) << "Sub" << std::setw(6) << "D" << std::setw(6) << "D'"
        << std::setw(5) << "G" << std::setw(5) << "L" << std::setw(12) << "Params"
        << std::setw(10) << "PSNR" << std::setw(10) << "Reported" << '\n';
  for (const auto& row : rows) {
    ModelConfig model = row.config();
    model.attn_residual = cfg.model.attn_residual;
    std::cout << "row " << row.id << ": training " << cfg.train.epochs << " epochs\n";
    Trainer trainer(model, cfg.train);
    const auto samples = make_samples(train, tile_size(model));
    trainer.fit(samples, {}, [&](int epoch, double loss) {
      print_progress(epoch, cfg.train.epochs, loss);
    });
    std::vector<MetricReport> reports;
    for (const auto& p : test) {
      const BinaryImage pred = threshold_image(run_model(trainer.model(), p.degraded), 0.5);
      reports.push_back(evaluate_pair(pred, threshold_image(p.ground_truth, 0.5)));
    }
    const MetricReport mean = mean_report(reports);
    const std::size_t params = parameter_count(model).total;
    const double final_loss =
        trainer.epoch_losses().empty() ? 0.0 : trainer.epoch_losses().back();
    csv << std::setprecision(10) << row.id << ',' << row.patch << ',' << row.subpatch << ','
        << row.dim << ',' << row.local_dim << ',' << row.global_layers << ','
        << row.local_layers << ',' << params << ',' << cfg.train.epochs << ',' << final_loss
        << ',' << mean.psnr << ',' << row.reported_psnr << '\n';
    table << std::left << std::setw(4) << row.id << std::right << std::setw(7) << row.patch
          << std::setw(6) << row.subpatch << std::setw(6) << row.dim << std::setw(6)
          << row.local_dim << std::setw(5) << row.global_layers << std::setw(5)
          << row.local_layers << std::setw(12) << params << std::fixed << std::setprecision(2)
          << std::setw(10) << mean.psnr << std::setw(10) << row.reported_psnr << '\n';
    table.unsetf(std::ios::fixed);
  }
  std::cout << "Ablation (held-out year " << cfg.held_out_year << ", " << cfg.train.epochs
            << " epochs per row)\n"
            << table.str() << "results written to " << csv_path.string() << '\n';
  return 0;
}

// synth

int cmd_synth(const std::string& output, const std::vector<int>& years, int per_year,
              std::uint64_t seed, int size) {
  if (per_year < 1) throw ConfigError("--per-year must be at least 1");
  if (size < 16) throw ConfigError("--size must be at least 16");
  SynthOptions o;
  o.height = static_cast<std::size_t>(size);
  o.width = static_cast<std::size_t>(size);
  write_synthetic_corpus(output, years, per_year, seed, o);
  std::cout << "wrote " << years.size() * static_cast<std::size_t>(per_year)
            << " synthetic pairs under " << output << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-level vision transformer for document image binarization"};
  app.require_subcommand(1);

  ConfigOptions train_opts;
  std::string resume;
  CLI::App* train = app.add_subcommand("train", "Leave-one-out training run");
  train_opts.attach(train);
  train->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);

  std::string checkpoint, input, output;
  double threshold = 0.5;
  CLI::App* binarize = app.add_subcommand("binarize", "Binarize one image with a checkpoint");
  binarize->add_option("--checkpoint", checkpoint, "Model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  binarize->add_option("-i,--input", input, "Degraded image (PNG or PGM)")
      ->required()
      ->check(CLI::ExistingFile);
  binarize->add_option("-o,--output", output, "Output image (.png or .pgm)")->required();
  binarize->add_option("--threshold", threshold, "Output threshold")->check(CLI::Range(0.0, 1.0));

  ConfigOptions eval_opts;
  std::string eval_ckpt, eval_baseline;
  int window = 25;
  double k = 0.2;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a held-out year");
  eval_opts.attach(eval);
  auto* eval_ckpt_opt = eval->add_option("--checkpoint", eval_ckpt, "Model checkpoint")
                            ->check(CLI::ExistingFile);
  eval->add_option("--baseline", eval_baseline, "Classical baseline instead of a model")
      ->check(CLI::IsMember({"otsu", "sauvola"}))
      ->excludes(eval_ckpt_opt);
  eval->add_option("--window", window, "Sauvola window (odd)");
  eval->add_option("--k", k, "Sauvola k");

  ConfigOptions ablate_opts;
  std::vector<std::string> rows;
  CLI::App* ablate = app.add_subcommand("ablate", "Train and score the ablation grid");
  ablate_opts.attach(ablate);
  ablate->add_option("--row", rows, "Row id(s) 1-5; default all");

  std::string method, base_in, base_out;
  int base_window = 25;
  double base_k = 0.2;
  CLI::App* baseline = app.add_subcommand("baseline", "Binarize one image with Otsu or Sauvola");
  baseline->add_option("--method", method, "otsu or sauvola")
      ->required()
      ->check(CLI::IsMember({"otsu", "sauvola"}));
  baseline->add_option("-i,--input", base_in, "Degraded image")
      ->required()
      ->check(CLI::ExistingFile);
  baseline->add_option("-o,--output", base_out, "Output image (.png or .pgm)")->required();
  baseline->add_option("--window", base_window, "Sauvola window (odd)");
  baseline->add_option("--k", base_k, "Sauvola k");

  std::string synth_out;
  std::vector<int> years{2009, 2010, 2011};
  int per_year = 2;
  std::uint64_t synth_seed = 1;
  int size = 256;
  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic degraded/ground-truth corpus");
  synth->add_option("-o,--output", synth_out, "Corpus root")->required();
  synth->add_option("--years", years, "Year directories to create");
  synth->add_option("--per-year", per_year, "Pairs per year");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--size", size, "Page height and width");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_opts, resume);
    if (*binarize) return cmd_binarize(checkpoint, input, output, threshold);
    if (*eval) return cmd_eval(eval_opts, eval_ckpt, eval_baseline, window, k);
    if (*ablate) return cmd_ablate(ablate_opts, rows);
    if (*baseline) return cmd_baseline(method, base_in, base_out, base_window, base_k);
    if (*synth) return cmd_synth(synth_out, years, per_year, synth_seed, size);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

// Copyright 2026 The cnnsens Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: train, sweep, predict, validate, defend, stats.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cnnsens/analysis.h"
#include "cnnsens/dataset.h"
#include "cnnsens/defenses.h"
#include "cnnsens/empirical.h"
#include "cnnsens/model.h"
#include "cnnsens/perturbation.h"
#include "text_format.h"

namespace {

using namespace cnnsens;

struct DatasetFlags {
  std::uint64_t seed = 1;
  int classes = 10;
  int per_class = 200;
  int size = 32;

  void add(CLI::App* app) {
    app->add_option("--dataset-seed", seed, "Synthetic dataset seed");
    app->add_option("--classes", classes, "Number of classes")->check(CLI::Range(2, 1000));
    app->add_option("--per-class", per_class, "Images per class (train + test)")
        ->check(CLI::Range(1, 1000000));
    app->add_option("--size", size, "Image side length in pixels")->check(CLI::Range(8, 4096));
  }

  LabeledDataset generate() const {
    SyntheticOptions o;
    o.seed = seed;
    o.num_classes = classes;
    o.per_class = per_class;
    o.image_size = size;
    return generate_synthetic_dataset(o);
  }
};

// "# cnnsens <command> --flag value ..." with every option, given or default.
std::string provenance(const CLI::App* sub) {
  std::ostringstream line;
  line << "# cnnsens " << sub->get_name();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_name() == "--help" || opt->get_lnames().empty()) continue;
    std::string value;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = opt->get_default_str();
    }
    line << " --" << opt->get_lnames().front();
    if (opt->get_type_size() != 0) line << ' ' << (value.empty() ? "\"\"" : value);
  }
  return line.str();
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

void finish_output(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PerturbationSpec spec_for_kind(const std::string& kind, double level) {
  const auto k = parse_kind(kind);
  if (!k) throw std::invalid_argument("unknown perturbation kind '" + kind + "'");
  if (*k == PerturbationKind::kCompose) {
    throw std::invalid_argument("compose is not accepted here; use a spec file");
  }
  PerturbationSpec spec = PerturbationSpec::of_kind(*k, level);
  validate(spec);
  return spec;
}

std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> levels;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      levels.push_back(v);
    } catch (const std::exception&) {
      throw std::invalid_argument("malformed level '" + item + "' in --levels");
    }
  }
  if (levels.empty()) throw std::invalid_argument("--levels is empty");
  return levels;
}

void run_train(const CLI::App* sub, const DatasetFlags& data, TrainConfig cfg,
               const std::string& out_path, std::string log_path) {
  if (log_path.empty()) log_path = out_path + ".log.csv";
  validate(cfg);
  // Fail on unwritable paths before spending time on training.
  open_output(out_path);
  std::ofstream log = open_output(log_path);
  const LabeledDataset ds = data.generate();
  ArchitectureConfig arch;
  arch.height = data.size;
  arch.width = data.size;
  arch.num_classes = data.classes;
  log << provenance(sub) << '\n' << "epoch,loss,train_acc,test_acc\n";
  const ModelParams trained = train(
      make_reference_model(arch, cfg.seed.base), ds.train, cfg,
      [&](const EpochStats& s, const ModelParams& p) {
        const double test_acc = ds.test.empty() ? 0.0 : evaluate_accuracy(p, ds.test, cfg.threads);
        log << s.epoch << ',' << detail::format_real(s.loss) << ','
            << detail::format_real(s.train_accuracy) << ',' << detail::format_real(test_acc)
            << '\n';
        std::fprintf(stderr, "epoch %d loss %.4f train_acc %.4f test_acc %.4f\n", s.epoch, s.loss,
                     s.train_accuracy, test_acc);
      });
  finish_output(log, log_path);
  save_model(trained, out_path);
}

const std::vector<Sample>& evaluation_split(const LabeledDataset& ds) {
  if (ds.test.empty()) throw std::invalid_argument("dataset has an empty test split");
  return ds.test;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensitivity of CNN classifiers to image perturbations"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  int threads = 1;
  auto add_threads = [&](CLI::App* sub) {
    sub->add_option("--threads", threads, "Worker threads (results do not depend on it)")
        ->check(CLI::Range(1, 256));
  };

  // train
  DatasetFlags train_data;
  TrainConfig train_cfg;
  std::uint64_t train_seed = 1;
  std::string train_out;
  std::string train_log;
  CLI::App* train_cmd = app.add_subcommand("train", "Generate the synthetic dataset and train a CNN");
  train_data.add(train_cmd);
  train_cmd->add_option("--epochs", train_cfg.epochs, "Training epochs");
  train_cmd->add_option("--lr", train_cfg.learning_rate, "Learning rate");
  train_cmd->add_option("--momentum", train_cfg.momentum, "SGD momentum");
  train_cmd->add_option("--batch", train_cfg.batch_size, "Minibatch size");
  train_cmd->add_option("--input-dropout", train_cfg.input_dropout_p,
                        "Probability of zeroing each input element during training");
  train_cmd->add_option("--seed", train_seed, "Initialization, shuffling and dropout seed");
  train_cmd->add_option("--out", train_out, "Model file to write")->required();
  train_cmd->add_option("--log", train_log, "Training log CSV (default: <out>.log.csv)");
  add_threads(train_cmd);

  // sweep
  DatasetFlags sweep_data;
  std::string sweep_model, sweep_spec_file, sweep_levels, sweep_out;
  int sweep_trials = kDefaultTrials;
  std::uint64_t sweep_seed = 1;
  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "Accuracy and label change probability per perturbation");
  sweep_cmd->add_option("--model", sweep_model, "Model file")->required();
  sweep_cmd->add_option("--spec-file", sweep_spec_file, "One perturbation spec per line")
      ->required();
  sweep_cmd->add_option("--levels", sweep_levels,
                        "Comma-separated levels; each spec with a level is expanded over them");
  sweep_cmd->add_option("--trials", sweep_trials, "Perturbed copies per image")
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--seed", sweep_seed, "Noise seed");
  sweep_cmd->add_option("--out", sweep_out, "CSV to write")->required();
  sweep_data.add(sweep_cmd);
  add_threads(sweep_cmd);

  // predict
  std::string predict_model, predict_image, predict_kind, predict_out;
  double predict_level = 0.0;
  CLI::App* predict_cmd =
      app.add_subcommand("predict", "Analytic sensitivity of one image from a single backward pass");
  predict_cmd->add_option("--model", predict_model, "Model file")->required();
  predict_cmd->add_option("--image", predict_image, "PPM (P6) or SNS1 tensor file")->required();
  predict_cmd->add_option("--kind", predict_kind, "gaussian_rgb, pepper or translation")
      ->required();
  predict_cmd->add_option("--level", predict_level, "sigma, or p for pepper")->required();
  predict_cmd->add_option("--out", predict_out, "Optional CSV to write");

  // validate
  DatasetFlags validate_data;
  std::string validate_model, validate_kind, validate_out;
  double validate_level = 1.0;
  int validate_trials = kDefaultTrials;
  std::uint64_t validate_seed = 1;
  CLI::App* validate_cmd =
      app.add_subcommand("validate", "Correlate analytic and Monte Carlo output deviation");
  validate_cmd->add_option("--model", validate_model, "Model file")->required();
  validate_data.add(validate_cmd);
  validate_cmd->add_option("--kind", validate_kind, "gaussian_rgb, pepper or translation")
      ->required();
  validate_cmd->add_option("--level", validate_level, "sigma, or p for pepper");
  validate_cmd->add_option("--trials", validate_trials, "Perturbed copies per image")
      ->check(CLI::Range(2, 1000000));
  validate_cmd->add_option("--seed", validate_seed, "Noise seed");
  validate_cmd->add_option("--out", validate_out, "Scatter CSV to write")->required();
  add_threads(validate_cmd);

  // defend
  DatasetFlags defend_data;
  std::string defend_model, defend_dropout_model, defend_kind, defend_levels, defend_out;
  int defend_trials = kDefaultTrials;
  std::uint64_t defend_seed = 1;
  CLI::App* defend_cmd = app.add_subcommand(
      "defend", "Compare no defense, Gaussian pre-filter, closing and a dropout-trained model");
  defend_cmd->add_option("--model", defend_model, "Plain model file")->required();
  defend_cmd->add_option("--dropout-model", defend_dropout_model,
                         "Model trained with --input-dropout")
      ->required();
  defend_cmd->add_option("--noise-kind", defend_kind, "Perturbation kind with a level")
      ->required();
  defend_cmd->add_option("--levels", defend_levels, "Comma-separated noise levels")->required();
  defend_cmd->add_option("--trials", defend_trials, "Perturbed copies per image")
      ->check(CLI::PositiveNumber);
  defend_cmd->add_option("--seed", defend_seed, "Noise seed");
  defend_cmd->add_option("--out", defend_out, "CSV to write")->required();
  defend_data.add(defend_cmd);
  add_threads(defend_cmd);

  // stats
  DatasetFlags stats_data;
  std::string stats_scatter, stats_out;
  std::size_t stats_k = 100;
  int stats_bins = kDefaultHueBins;
  CLI::App* stats_cmd = app.add_subcommand(
      "stats",
      "Hue entropy of the most and least sensitive images and a Wilcoxon rank sum test.\n"
      "Reference context: on CUB-200-2011 the least sensitive images had mean hue entropy\n"
      "6.12 and the most sensitive 5.51; those full-scale values are not reproducible on\n"
      "the synthetic dataset.");
  stats_cmd->add_option("--scatter-csv", stats_scatter, "Scatter CSV written by validate")
      ->required();
  stats_data.add(stats_cmd);
  stats_cmd->add_option("--k", stats_k, "Images per group");
  stats_cmd->add_option("--bins", stats_bins, "Hue histogram bins")->check(CLI::Range(2, 65536));
  stats_cmd->add_option("--out", stats_out, "CSV of image_id,entropy,sensitivity")->required();

  // export-image
  DatasetFlags export_data;
  std::size_t export_index = 0;
  std::string export_split = "test";
  std::string export_out;
  CLI::App* export_cmd =
      app.add_subcommand("export-image", "Write one dataset image as PPM or SNS1 tensor");
  export_data.add(export_cmd);
  export_cmd->add_option("--index", export_index, "Image index within the split");
  export_cmd->add_option("--split", export_split, "train or test")
      ->check(CLI::IsMember({"train", "test"}));
  export_cmd->add_option("--out", export_out, "Output file; .ppm selects PPM, else tensor")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "cnnsens: error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*train_cmd) {
      train_cfg.seed = Seed{train_seed};
      train_cfg.threads = threads;
      run_train(train_cmd, train_data, train_cfg, train_out, train_log);
    } else if (*sweep_cmd) {
      std::vector<PerturbationSpec> specs = parse_spec_file(read_text(sweep_spec_file));
      if (specs.empty()) throw std::invalid_argument(sweep_spec_file + " contains no specs");
      if (!sweep_levels.empty()) {
        const auto levels = parse_levels(sweep_levels);
        std::vector<PerturbationSpec> expanded;
        for (const auto& s : specs) {
          if (!has_level(s.kind)) {
            expanded.push_back(s);
            continue;
          }
          for (double l : levels) expanded.push_back(with_level(s, l));
        }
        specs = std::move(expanded);
      }
      for (const auto& s : specs) validate(s);
      const ModelParams model = load_model(sweep_model);
      std::ofstream out = open_output(sweep_out);
      const LabeledDataset ds = sweep_data.generate();
      const auto rows =
          sweep(model, evaluation_split(ds), specs, sweep_trials, Seed{sweep_seed}, threads);
      out << provenance(sweep_cmd) << '\n';
      write_sweep_csv(out, rows);
      finish_output(out, sweep_out);
    } else if (*predict_cmd) {
      const PerturbationSpec spec = spec_for_kind(predict_kind, predict_level);
      const ModelParams model = load_model(predict_model);
      const ImageTensor img = read_image(predict_image);
      const SensitivityScore score = analytic_sensitivity(model, img, spec);
      std::cout << "analytic_std " << detail::format_real(score.std) << '\n';
      if (!predict_out.empty()) {
        std::ofstream out = open_output(predict_out);
        out << provenance(predict_cmd) << '\n'
            << "kind,level,analytic_std,analytic_variance\n"
            << kind_name(spec.kind) << ',' << detail::format_real(predict_level) << ','
            << detail::format_real(score.std) << ',' << detail::format_real(score.variance)
            << '\n';
        finish_output(out, predict_out);
      }
    } else if (*validate_cmd) {
      const PerturbationSpec spec = spec_for_kind(validate_kind, validate_level);
      const ModelParams model = load_model(validate_model);
      std::ofstream out = open_output(validate_out);
      const LabeledDataset ds = validate_data.generate();
      const ValidationResult res = validate_prediction(model, evaluation_split(ds), spec,
                                                       validate_trials, Seed{validate_seed},
                                                       threads);
      out << provenance(validate_cmd) << '\n';
      write_records_csv(out, res.records);
      finish_output(out, validate_out);
      std::cout << "r " << detail::format_real(res.r) << '\n'
                << "r_variance " << detail::format_real(res.r_variance) << '\n';
    } else if (*defend_cmd) {
      const auto levels = parse_levels(defend_levels);
      const PerturbationSpec noise = spec_for_kind(defend_kind, 0.0);
      const ModelParams model = load_model(defend_model);
      const ModelParams dropout_model = load_model(defend_dropout_model);
      std::ofstream out = open_output(defend_out);
      const LabeledDataset ds = defend_data.generate();
      const auto rows = defense_sweep(model, dropout_model, evaluation_split(ds), noise, levels,
                                      defend_trials, Seed{defend_seed}, threads);
      out << provenance(defend_cmd) << '\n';
      write_defense_csv(out, rows);
      finish_output(out, defend_out);
    } else if (*stats_cmd) {
      std::ifstream scatter(stats_scatter);
      if (!scatter) throw std::runtime_error("cannot open " + stats_scatter);
      const auto records = read_records_csv(scatter);
      const LabeledDataset ds = stats_data.generate();
      const auto& split = evaluation_split(ds);
      if (stats_k > records.size()) {
        throw std::invalid_argument("--k " + std::to_string(stats_k) + " exceeds the " +
                                    std::to_string(records.size()) + " scatter records");
      }
      std::vector<EntropyRecord> rows;
      std::vector<double> entropy_by_id(split.size(), 0.0);
      for (const auto& r : records) {
        if (r.image_id < 0 || static_cast<std::size_t>(r.image_id) >= split.size()) {
          throw std::invalid_argument("scatter image_id " + std::to_string(r.image_id) +
                                      " is outside the test split; check dataset flags");
        }
        const Sample& s = split[static_cast<std::size_t>(r.image_id)];
        const double e = hue_entropy(s.image, s.foreground, stats_bins);
        entropy_by_id[static_cast<std::size_t>(r.image_id)] = e;
        rows.push_back(EntropyRecord{r.image_id, e, r.empirical_std});
      }
      const Ranking ranking = rank_by_sensitivity(records, stats_k);
      std::vector<double> least;
      std::vector<double> most;
      for (int id : ranking.bottom) least.push_back(entropy_by_id[static_cast<std::size_t>(id)]);
      for (int id : ranking.top) most.push_back(entropy_by_id[static_cast<std::size_t>(id)]);
      auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
      };
      const RankSumResult test = wilcoxon_rank_sum(least, most);
      std::ofstream out = open_output(stats_out);
      out << provenance(stats_cmd) << '\n';
      write_entropy_csv(out, rows);
      finish_output(out, stats_out);
      std::cout << "least_sensitive_mean_entropy " << detail::format_real(mean(least)) << '\n'
                << "most_sensitive_mean_entropy " << detail::format_real(mean(most)) << '\n'
                << "rank_sum " << detail::format_real(test.statistic) << '\n'
                << "z " << detail::format_real(test.z) << '\n'
                << "p " << detail::format_real(test.p) << '\n';
    } else if (*export_cmd) {
      const LabeledDataset ds = export_data.generate();
      const auto& split = export_split == "train" ? ds.train : ds.test;
      if (export_index >= split.size()) {
        throw std::invalid_argument("--index " + std::to_string(export_index) + " exceeds the " +
                                    export_split + " split of " + std::to_string(split.size()));
      }
      const ImageTensor& img = split[export_index].image;
      if (std::filesystem::path(export_out).extension() == ".ppm") {
        write_ppm(img, export_out);
      } else {
        write_tensor(img, export_out);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "cnnsens: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

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

#include "cnnsens/empirical.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "cnnsens/parallel.h"
#include "text_format.h"

namespace cnnsens {

namespace {

void require_trials(int trials, int minimum) {
  if (trials < minimum) {
    throw std::invalid_argument("need at least " + std::to_string(minimum) + " trials, got " +
                                std::to_string(trials));
  }
}

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Standard error of the mean; 0 for a single value.
double standard_error(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

// Mean squared change of the clean predicted class's score.
double mean_squared_change(const ModelParams& params, const ImageTensor& img,
                           const PerturbationSpec& spec, int trials, Seed seed) {
  const auto clean = forward(params, img);
  const std::size_t cls = static_cast<std::size_t>(argmax(clean));
  double sum = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto scores = forward(params, apply_perturbation(img, spec, seed, static_cast<std::uint64_t>(t)));
    const double d = scores[cls] - clean[cls];
    sum += d * d;
  }
  return sum / trials;
}

}  // namespace

Seed image_seed(Seed seed, std::size_t image_index) {
  return Seed{mix(seed.base, static_cast<std::uint64_t>(image_index))};
}

double label_change_probability(const ModelParams& params, const ImageTensor& img,
                                const PerturbationSpec& spec, int trials, Seed seed) {
  require_trials(trials, 1);
  const int clean = predict(params, img);
  int changed = 0;
  for (int t = 0; t < trials; ++t) {
    if (predict(params, apply_perturbation(img, spec, seed, static_cast<std::uint64_t>(t))) != clean) {
      ++changed;
    }
  }
  return static_cast<double>(changed) / trials;
}

SweepResult evaluate_spec(const ModelParams& params, std::span<const Sample> split,
                          const PerturbationSpec& spec, int trials, Seed seed, int threads,
                          const Preprocess& pre) {
  require_trials(trials, 1);
  if (split.empty()) throw std::invalid_argument("cannot sweep an empty split");
  validate(spec);
  // A deterministic transform gives the same image every trial.
  const int effective = is_stochastic(spec) ? trials : 1;
  SweepResult res;
  res.spec = spec;
  res.level = level_of(spec);
  res.trials = effective;
  res.per_image_accuracy.resize(split.size());
  res.per_image_label_change.resize(split.size());
  parallel_for(split.size(), threads, [&](std::size_t i) {
    const Sample& s = split[i];
    const int clean = predict(params, s.image);
    const Seed is = image_seed(seed, i);
    int correct = 0;
    int changed = 0;
    for (int t = 0; t < effective; ++t) {
      ImageTensor perturbed = apply_perturbation(s.image, spec, is, static_cast<std::uint64_t>(t));
      if (pre) perturbed = pre(perturbed);
      const int label = predict(params, perturbed);
      correct += label == s.label ? 1 : 0;
      changed += label != clean ? 1 : 0;
    }
    res.per_image_accuracy[i] = static_cast<double>(correct) / effective;
    res.per_image_label_change[i] = static_cast<double>(changed) / effective;
  });
  res.accuracy = mean(res.per_image_accuracy);
  res.label_change_prob = mean(res.per_image_label_change);
  res.accuracy_se = standard_error(res.per_image_accuracy);
  res.label_change_se = standard_error(res.per_image_label_change);
  return res;
}

std::vector<SweepResult> sweep(const ModelParams& params, std::span<const Sample> split,
                               std::span<const PerturbationSpec> specs, int trials, Seed seed,
                               int threads) {
  if (specs.empty()) throw std::invalid_argument("sweep needs at least one spec");
  std::vector<SweepResult> rows;
  rows.reserve(specs.size());
  for (const auto& spec : specs) {
    rows.push_back(evaluate_spec(params, split, spec, trials, seed, threads));
  }
  return rows;
}

double empirical_output_std(const ModelParams& params, const ImageTensor& img,
                            const PerturbationSpec& spec, int trials, Seed seed) {
  require_trials(trials, 2);
  return std::sqrt(mean_squared_change(params, img, spec, trials, seed));
}

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson inputs differ in length");
  if (a.size() < 2) throw std::invalid_argument("pearson needs at least two values");
  const double ma = mean(a);
  const double mb = mean(b);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw std::invalid_argument("pearson input has zero variance");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

bool has_analytic_predictor(const PerturbationSpec& spec, int channels) {
  switch (spec.kind) {
    case PerturbationKind::kGaussianRgb:
    case PerturbationKind::kTranslation:
      return true;
    case PerturbationKind::kPepper:
      return spec.pepper_mode == PepperMode::kPerPixel || channels == 1;
    default:
      return false;
  }
}

SensitivityScore analytic_sensitivity(const ModelParams& params, const ImageTensor& img,
                                      const PerturbationSpec& spec) {
  if (!has_analytic_predictor(spec, img.channels())) {
    throw std::invalid_argument("no analytic predictor for " + std::string(kind_name(spec.kind)) +
                                (spec.kind == PerturbationKind::kPepper ? " (per_channel mode)" : ""));
  }
  const auto scores = forward(params, img);
  const GradientMap grad = input_gradient(params, img, argmax(scores));
  switch (spec.kind) {
    case PerturbationKind::kGaussianRgb:
      return sensitivity_gaussian_rgb(grad, spec.sigma);
    case PerturbationKind::kPepper:
      return sensitivity_pepper(img, grad, spec.p);
    default:
      return sensitivity_translation(img, grad, spec.sigma);
  }
}

ValidationResult validate_prediction(const ModelParams& params, std::span<const Sample> split,
                                     const PerturbationSpec& spec, int trials, Seed seed,
                                     int threads) {
  require_trials(trials, 2);
  if (split.empty()) throw std::invalid_argument("cannot validate on an empty split");
  if (!has_analytic_predictor(spec, split.front().image.channels())) {
    throw std::invalid_argument("validate supports gaussian_rgb, pepper (per_pixel) and "
                                "translation, got " + std::string(kind_name(spec.kind)));
  }
  ValidationResult res;
  res.records.resize(split.size());
  std::vector<double> analytic_var(split.size());
  std::vector<double> empirical_var(split.size());
  parallel_for(split.size(), threads, [&](std::size_t i) {
    const ImageTensor& img = split[i].image;
    const SensitivityScore score = analytic_sensitivity(params, img, spec);
    const double msq = mean_squared_change(params, img, spec, trials, image_seed(seed, i));
    analytic_var[i] = score.variance;
    empirical_var[i] = msq;
    res.records[i] = SensitivityRecord{static_cast<int>(i), score.std, std::sqrt(msq), trials};
  });
  std::vector<double> a(split.size());
  std::vector<double> e(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) {
    a[i] = res.records[i].analytic_std;
    e[i] = res.records[i].empirical_std;
  }
  res.r = pearson_correlation(a, e);
  res.r_variance = pearson_correlation(analytic_var, empirical_var);
  return res;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepResult> rows) {
  out << "kind,level,trials,accuracy,label_change_prob\n";
  for (const auto& r : rows) {
    out << kind_name(r.spec.kind) << ',' << detail::format_real(r.level) << ',' << r.trials << ','
        << detail::format_real(r.accuracy) << ',' << detail::format_real(r.label_change_prob)
        << '\n';
  }
}

void write_records_csv(std::ostream& out, std::span<const SensitivityRecord> records) {
  out << "image_id,analytic_std,empirical_std\n";
  for (const auto& r : records) {
    out << r.image_id << ',' << detail::format_real(r.analytic_std) << ','
        << detail::format_real(r.empirical_std) << '\n';
  }
}

std::vector<SensitivityRecord> read_records_csv(std::istream& in) {
  std::vector<SensitivityRecord> records;
  std::string line;
  int line_no = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!seen_header) {
      if (line.rfind("image_id,analytic_std,empirical_std", 0) != 0) {
        throw std::runtime_error("scatter csv: missing header");
      }
      seen_header = true;
      continue;
    }
    std::istringstream fields(line);
    std::string id, analytic, empirical;
    if (!std::getline(fields, id, ',') || !std::getline(fields, analytic, ',') ||
        !std::getline(fields, empirical, ',')) {
      throw std::runtime_error("scatter csv: malformed line " + std::to_string(line_no));
    }
    try {
      records.push_back(
          SensitivityRecord{std::stoi(id), std::stod(analytic), std::stod(empirical), 0});
    } catch (const std::exception&) {
      throw std::runtime_error("scatter csv: malformed line " + std::to_string(line_no));
    }
  }
  return records;
}

}  // namespace cnnsens

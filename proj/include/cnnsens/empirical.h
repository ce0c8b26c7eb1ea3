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

#ifndef CNNSENS_EMPIRICAL_H_
#define CNNSENS_EMPIRICAL_H_

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "cnnsens/dataset.h"
#include "cnnsens/image.h"
#include "cnnsens/model.h"
#include "cnnsens/perturbation.h"
#include "cnnsens/sensitivity.h"

namespace cnnsens {

/// Matches the number of perturbed copies per image used for the scatter plots.
inline constexpr int kDefaultTrials = 10;

/// Optional test-time transform applied to the perturbed image before the
/// forward pass (e.g. a denoising filter). Empty means identity.
using Preprocess = std::function<ImageTensor(const ImageTensor&)>;

struct SweepResult {
  PerturbationSpec spec;
  double level = 0.0;
  double accuracy = 0.0;
  double label_change_prob = 0.0;
  int trials = 0;  // per image; 1 for deterministic transforms
  // Standard errors over images, and the per-image means behind them.
  double accuracy_se = 0.0;
  double label_change_se = 0.0;
  std::vector<double> per_image_accuracy;
  std::vector<double> per_image_label_change;
};

struct SensitivityRecord {
  int image_id = 0;
  double analytic_std = 0.0;
  double empirical_std = 0.0;
  int trials = 0;
};

struct ValidationResult {
  std::vector<SensitivityRecord> records;
  double r = 0.0;           // Pearson(analytic std, empirical std)
  double r_variance = 0.0;  // Pearson(analytic V, empirical mean squared change)
};

/// Per-image seed used by every dataset-level estimator: Seed{mix(seed.base, i)}.
Seed image_seed(Seed seed, std::size_t image_index);

/// Fraction of trials whose prediction differs from the clean prediction.
double label_change_probability(const ModelParams& params, const ImageTensor& img,
                                const PerturbationSpec& spec, int trials, Seed seed);

/// Accuracy and label change probability of one spec over a split. The clean
/// reference prediction is taken on the unprocessed image; `pre` only touches
/// the perturbed copies.
SweepResult evaluate_spec(const ModelParams& params, std::span<const Sample> split,
                          const PerturbationSpec& spec, int trials, Seed seed, int threads = 1,
                          const Preprocess& pre = {});

std::vector<SweepResult> sweep(const ModelParams& params, std::span<const Sample> split,
                               std::span<const PerturbationSpec> specs, int trials, Seed seed,
                               int threads = 1);

/// sqrt(mean_t (f(perturbed_t) - f(x))^2) where f is the clean predicted
/// class's pre-softmax score.
double empirical_output_std(const ModelParams& params, const ImageTensor& img,
                            const PerturbationSpec& spec, int trials, Seed seed);

/// Sample Pearson coefficient. Throws on length mismatch, fewer than two
/// values, or zero variance.
double pearson_correlation(std::span<const double> a, std::span<const double> b);

/// Analytic std for the supported kinds (gaussian_rgb, pepper per-pixel, translation).
SensitivityScore analytic_sensitivity(const ModelParams& params, const ImageTensor& img,
                                      const PerturbationSpec& spec);
bool has_analytic_predictor(const PerturbationSpec& spec, int channels);

/// Pairs analytic and Monte Carlo std per image and correlates them.
ValidationResult validate_prediction(const ModelParams& params, std::span<const Sample> split,
                                     const PerturbationSpec& spec, int trials, Seed seed,
                                     int threads = 1);

void write_sweep_csv(std::ostream& out, std::span<const SweepResult> rows);
void write_records_csv(std::ostream& out, std::span<const SensitivityRecord> records);
/// Reads `image_id,analytic_std,empirical_std` rows, skipping '#' lines and the header.
std::vector<SensitivityRecord> read_records_csv(std::istream& in);

}  // namespace cnnsens

#endif  // CNNSENS_EMPIRICAL_H_

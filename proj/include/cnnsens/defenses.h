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

#ifndef CNNSENS_DEFENSES_H_
#define CNNSENS_DEFENSES_H_

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cnnsens/dataset.h"
#include "cnnsens/image.h"
#include "cnnsens/model.h"
#include "cnnsens/perturbation.h"
#include "cnnsens/rng.h"

namespace cnnsens {

/// Sampled 2D Gaussian at integer offsets, renormalized to sum 1. Row-major,
/// size x size. Throws on even size, size < 3, or non-positive sigma.
std::vector<double> gaussian_kernel(int size, double sigma);

/// Per-channel convolution with gaussian_kernel(size, sigma), reflect padding.
ImageTensor gaussian_prefilter(const ImageTensor& img, int kernel_size, double sigma);

/// Grayscale dilation then erosion per channel with a square se_size x se_size
/// structuring element, reflect padding.
ImageTensor dilate(const ImageTensor& img, int se_size);
ImageTensor erode(const ImageTensor& img, int se_size);
ImageTensor morphological_closing(const ImageTensor& img, int se_size);

enum class DefenseStrategy { kNone, kGaussFilter, kClosing, kDropoutTrained };

inline constexpr DefenseStrategy kAllStrategies[] = {
    DefenseStrategy::kNone, DefenseStrategy::kGaussFilter, DefenseStrategy::kClosing,
    DefenseStrategy::kDropoutTrained};

std::string_view strategy_name(DefenseStrategy s);

struct DefenseRow {
  DefenseStrategy strategy = DefenseStrategy::kNone;
  PerturbationSpec spec;
  double level = 0.0;
  double accuracy = 0.0;
  double accuracy_se = 0.0;
  std::vector<double> per_image_accuracy;
};

/// Evaluates every strategy at every level of `noise` (its level replaced by
/// each entry of `levels`). All strategies see the same perturbed images for
/// a given (level, image, trial), so per-image differences are paired.
std::vector<DefenseRow> defense_sweep(const ModelParams& baseline, const ModelParams& dropout_model,
                                      std::span<const Sample> split, const PerturbationSpec& noise,
                                      std::span<const double> levels, int trials, Seed seed,
                                      int threads = 1);

/// Row with the given strategy and level; throws if absent.
const DefenseRow& find_row(std::span<const DefenseRow> rows, DefenseStrategy strategy,
                           double level);

/// Standard error of the mean per-image difference a - b.
double paired_standard_error(std::span<const double> a, std::span<const double> b);

void write_defense_csv(std::ostream& out, std::span<const DefenseRow> rows);

}  // namespace cnnsens

#endif  // CNNSENS_DEFENSES_H_

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

#ifndef CNNSENS_PERTURBATION_H_
#define CNNSENS_PERTURBATION_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cnnsens/image.h"
#include "cnnsens/rng.h"

namespace cnnsens {

enum class PerturbationKind {
  kGaussianRgb,
  kGaussianIntensity,
  kGlobalColorShift,
  kLocalColorShift,
  kGaussianSaturation,
  kPepper,
  kTranslation,
  kRotate90,
  kFlipUd,
  kFlipLr,
  kCompose,
};

enum class PepperMode {
  kPerPixel,    // one draw per pixel, all channels zeroed together
  kPerChannel,  // one draw per element
};

std::string_view kind_name(PerturbationKind kind);
std::optional<PerturbationKind> parse_kind(std::string_view name);
std::string_view pepper_mode_name(PepperMode mode);

/// One degradation g(x, eps). Only the fields relevant to `kind` are read.
struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::kGaussianRgb;
  double sigma = 0.0;  // pixel-value units, or pixels for translation
  double p = 0.0;
  PepperMode pepper_mode = PepperMode::kPerPixel;
  std::vector<PerturbationSpec> children;  // compose only, applied in order

  friend bool operator==(const PerturbationSpec&, const PerturbationSpec&) = default;

  static PerturbationSpec gaussian_rgb(double sigma);
  static PerturbationSpec pepper(double p, PepperMode mode = PepperMode::kPerPixel);
  static PerturbationSpec translation(double sigma);
  static PerturbationSpec of_kind(PerturbationKind kind, double level = 0.0);
  static PerturbationSpec compose(std::vector<PerturbationSpec> children);
};

/// Throws std::invalid_argument for negative or non-finite sigma, p outside
/// [0, 1], or children on a non-compose spec.
void validate(const PerturbationSpec& spec);

/// True for kinds that consume random draws (anything but the dihedral remaps,
/// and compose blocks made only of those).
bool is_stochastic(const PerturbationSpec& spec);
/// True if the kind takes a level (sigma or p).
bool has_level(PerturbationKind kind);
/// sigma, or p for pepper; 0 for kinds without a level.
double level_of(const PerturbationSpec& spec);
/// Copy of `spec` with its level replaced. Kinds without a level are returned unchanged.
PerturbationSpec with_level(const PerturbationSpec& spec, double level);

/// Plain-text block: `kind=<name> sigma=<real> p=<real> mode=<per_pixel|per_channel>`.
/// Compose children follow as bracketed blocks: `kind=compose [kind=...] [kind=...]`.
std::string format_spec(const PerturbationSpec& spec);
/// Parses one block. Keys may appear in any order; omitted keys take defaults.
PerturbationSpec parse_spec(std::string_view text);
/// One block per non-empty line; '#' starts a comment.
std::vector<PerturbationSpec> parse_spec_file(std::string_view text);

/// Applies `spec` with the noise stream keyed by seed.trial_key(trial).
/// Pure: identical arguments give bit-identical output.
ImageTensor apply_perturbation(const ImageTensor& img, const PerturbationSpec& spec, Seed seed,
                               std::uint64_t trial);
/// Same, keyed directly. Compose child i uses key mix(key, i).
ImageTensor apply_perturbation_keyed(const ImageTensor& img, const PerturbationSpec& spec,
                                     std::uint64_t key);

ImageTensor flip_lr(const ImageTensor& img);
ImageTensor flip_ud(const ImageTensor& img);
/// Clockwise quarter turn; an HxW image becomes WxH.
ImageTensor rotate90(const ImageTensor& img);

/// Shifts content by (dx, dy) pixels: out(y, x) = in(y - dy, x - dx), sampled
/// bilinearly with half-sample symmetric reflection outside the image.
ImageTensor translate_bilinear(const ImageTensor& img, double dx, double dy);

}  // namespace cnnsens

#endif  // CNNSENS_PERTURBATION_H_

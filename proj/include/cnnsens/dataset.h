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

#ifndef CNNSENS_DATASET_H_
#define CNNSENS_DATASET_H_

#include <cstdint>
#include <vector>

#include "cnnsens/image.h"

namespace cnnsens {

struct Sample {
  ImageTensor image;
  int label = 0;
  Mask foreground;  // exact object region from the generator
};

struct LabeledDataset {
  int num_classes = 0;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

struct SyntheticOptions {
  int num_classes = 10;
  int per_class = 200;
  int image_size = 32;
  /// Per class, the last per_class * test_fraction samples (rounded down) go to test.
  double test_fraction = 0.25;
  std::uint64_t seed = 1;
};

/// Fine-grained toy classes: a striped ellipse over low-saturation clutter.
/// Class c has base hue (c mod m) * 160 / m with m = ceil(K / 2), jittered by
/// up to +-6 hue units, and horizontal (c < m) or vertical intensity stripes.
/// Position, size, orientation, stripe period, phase and contrast, saturation
/// and background are random per sample; every channel carries +-3 uniform
/// jitter. Deterministic given the seed.
LabeledDataset generate_synthetic_dataset(const SyntheticOptions& options);

}  // namespace cnnsens

#endif  // CNNSENS_DATASET_H_

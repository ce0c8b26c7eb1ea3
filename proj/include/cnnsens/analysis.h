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

#ifndef CNNSENS_ANALYSIS_H_
#define CNNSENS_ANALYSIS_H_

#include <iosfwd>
#include <span>
#include <vector>

#include "cnnsens/empirical.h"
#include "cnnsens/image.h"

namespace cnnsens {

inline constexpr int kDefaultHueBins = 256;

/// Shannon entropy in bits of the hue histogram over the region. Bin of hue h
/// is floor(h * bins / 256) mod bins. Throws on an empty region, bins < 2, a
/// region that does not fit the image, or non-RGB input.
double hue_entropy(const ImageTensor& img, const Mask& region, int bins = kDefaultHueBins);
double hue_entropy(const ImageTensor& img, const BoundingBox& region, int bins = kDefaultHueBins);
/// Same, on hue values already extracted (each in [0, 256)).
double hue_entropy_of(std::span<const double> hues, int bins = kDefaultHueBins);

struct RankSumResult {
  double statistic = 0.0;  // sum of midranks of sample a in the pooled sample
  double z = 0.0;
  double p = 1.0;  // two-sided
};

/// Wilcoxon rank sum test, normal approximation with continuity and tie
/// correction. p = 1 when the pooled sample is constant.
RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b);

struct Ranking {
  std::vector<int> top;     // most sensitive first
  std::vector<int> bottom;  // least sensitive first
};

/// Orders by empirical_std (descending for top, ascending for bottom), ties by
/// image id ascending. Throws if k > records.size().
Ranking rank_by_sensitivity(std::span<const SensitivityRecord> records, std::size_t k);

struct EntropyRecord {
  int image_id = 0;
  double entropy = 0.0;
  double sensitivity = 0.0;
};

void write_entropy_csv(std::ostream& out, std::span<const EntropyRecord> rows);

}  // namespace cnnsens

#endif  // CNNSENS_ANALYSIS_H_

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

#include "cnnsens/analysis.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "text_format.h"

namespace cnnsens {

namespace {

int hue_bin(double h, int bins) {
  const int b = static_cast<int>(std::floor(h * bins / HsiImage::kHuePeriod));
  return ((b % bins) + bins) % bins;
}

void require_bins(int bins) {
  if (bins < 2) throw std::invalid_argument("hue entropy needs at least 2 bins");
}

double entropy_bits(std::span<const std::size_t> counts, std::size_t total) {
  double e = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double q = static_cast<double>(c) / static_cast<double>(total);
    e -= q * std::log2(q);
  }
  return std::max(e, 0.0);
}

}  // namespace

double hue_entropy_of(std::span<const double> hues, int bins) {
  require_bins(bins);
  if (hues.empty()) throw std::invalid_argument("hue entropy of an empty region");
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (double h : hues) ++counts[static_cast<std::size_t>(hue_bin(h, bins))];
  return entropy_bits(counts, hues.size());
}

double hue_entropy(const ImageTensor& img, const Mask& region, int bins) {
  require_bins(bins);
  if (region.height != img.height() || region.width != img.width()) {
    throw std::invalid_argument("mask does not match image shape " + to_string(img.shape()));
  }
  const HsiImage hsi = rgb_to_hsi(img);
  std::vector<double> hues;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (region.contains(y, x)) hues.push_back(hsi.hue(y, x));
    }
  }
  return hue_entropy_of(hues, bins);
}

double hue_entropy(const ImageTensor& img, const BoundingBox& region, int bins) {
  if (!region.fits(img.shape())) throw std::invalid_argument("bounding box outside image");
  Mask m{img.height(), img.width(),
         std::vector<std::uint8_t>(img.shape().pixels(), 0)};
  for (int y = region.y0; y < region.y0 + region.h; ++y) {
    for (int x = region.x0; x < region.x0 + region.w; ++x) {
      m.bits[static_cast<std::size_t>(y * img.width() + x)] = 1;
    }
  }
  return hue_entropy(img, m, bins);
}

RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("rank sum needs two nonempty samples");
  const std::size_t n = a.size() + b.size();
  std::vector<std::pair<double, bool>> pooled;  // (value, from a)
  pooled.reserve(n);
  for (double v : a) pooled.emplace_back(v, true);
  for (double v : b) pooled.emplace_back(v, false);
  std::stable_sort(pooled.begin(), pooled.end(),
                   [](const auto& l, const auto& r) { return l.first < r.first; });
  double w = 0.0;
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && pooled[j].first == pooled[i].first) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (pooled[k].second) w += midrank;
    }
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double nn = static_cast<double>(n);
  const double mean = na * (nn + 1.0) / 2.0;
  double var = na * nb / 12.0 * (nn + 1.0);
  if (n > 1) var -= na * nb / 12.0 * tie_term / (nn * (nn - 1.0));
  RankSumResult res;
  res.statistic = w;
  if (!(var > 0.0)) return res;
  const double dev = std::max(std::abs(w - mean) - 0.5, 0.0);
  res.z = std::copysign(dev / std::sqrt(var), w - mean);
  res.p = std::min(1.0, std::erfc(dev / std::sqrt(var) / std::sqrt(2.0)));
  return res;
}

Ranking rank_by_sensitivity(std::span<const SensitivityRecord> records, std::size_t k) {
  if (k > records.size()) {
    throw std::invalid_argument("k = " + std::to_string(k) + " exceeds " +
                                std::to_string(records.size()) + " records");
  }
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  auto by_id = [&](std::size_t l, std::size_t r) { return records[l].image_id < records[r].image_id; };
  std::vector<std::size_t> desc = order;
  std::sort(desc.begin(), desc.end(), [&](std::size_t l, std::size_t r) {
    if (records[l].empirical_std != records[r].empirical_std) {
      return records[l].empirical_std > records[r].empirical_std;
    }
    return by_id(l, r);
  });
  std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    if (records[l].empirical_std != records[r].empirical_std) {
      return records[l].empirical_std < records[r].empirical_std;
    }
    return by_id(l, r);
  });
  Ranking out;
  for (std::size_t i = 0; i < k; ++i) {
    out.top.push_back(records[desc[i]].image_id);
    out.bottom.push_back(records[order[i]].image_id);
  }
  return out;
}

void write_entropy_csv(std::ostream& out, std::span<const EntropyRecord> rows) {
  out << "image_id,entropy,sensitivity\n";
  for (const auto& r : rows) {
    out << r.image_id << ',' << detail::format_real(r.entropy) << ','
        << detail::format_real(r.sensitivity) << '\n';
  }
}

}  // namespace cnnsens

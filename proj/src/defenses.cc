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

#include "cnnsens/defenses.h"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "cnnsens/empirical.h"
#include "text_format.h"

namespace cnnsens {

namespace {

void require_odd(int size, const char* what) {
  if (size < 3 || size % 2 == 0) {
    throw std::invalid_argument(std::string(what) + " must be odd and at least 3, got " +
                                std::to_string(size));
  }
}

// 1D sampled Gaussian; the 2D kernel is its outer product.
std::vector<double> gaussian_1d(int size, double sigma) {
  const int r = size / 2;
  std::vector<double> k(static_cast<std::size_t>(size));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[static_cast<std::size_t>(i + r)];
  }
  for (double& v : k) v /= sum;
  return k;
}

template <typename Reduce>
ImageTensor separable_pass(const ImageTensor& img, int size, bool horizontal, Reduce reduce) {
  const int r = size / 2;
  const int h = img.height();
  const int w = img.width();
  const int c = img.channels();
  ImageTensor out(img.shape());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        out.at(y, x, ch) = reduce([&](int offset) {
          return horizontal ? img.at(y, reflect_index(x + offset, w), ch)
                            : img.at(reflect_index(y + offset, h), x, ch);
        }, r);
      }
    }
  }
  return out;
}

ImageTensor extremum_filter(const ImageTensor& img, int se_size, bool take_max) {
  require_odd(se_size, "structuring element size");
  auto reduce = [take_max](auto sample, int r) {
    float best = sample(-r);
    for (int o = -r + 1; o <= r; ++o) {
      const float v = sample(o);
      best = take_max ? std::max(best, v) : std::min(best, v);
    }
    return best;
  };
  // A square max/min filter is separable exactly.
  return separable_pass(separable_pass(img, se_size, true, reduce), se_size, false, reduce);
}

}  // namespace

std::vector<double> gaussian_kernel(int size, double sigma) {
  require_odd(size, "kernel size");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be positive");
  const auto k1 = gaussian_1d(size, sigma);
  std::vector<double> k(static_cast<std::size_t>(size * size));
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      k[static_cast<std::size_t>(i * size + j)] = k1[i] * k1[j];
      sum += k[static_cast<std::size_t>(i * size + j)];
    }
  }
  for (double& v : k) v /= sum;
  return k;
}

ImageTensor gaussian_prefilter(const ImageTensor& img, int kernel_size, double sigma) {
  const auto kernel = gaussian_kernel(kernel_size, sigma);
  const int r = kernel_size / 2;
  const int h = img.height();
  const int w = img.width();
  const int c = img.channels();
  ImageTensor out(img.shape());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy) {
          const int yy = reflect_index(y + dy, h);
          for (int dx = -r; dx <= r; ++dx) {
            acc += kernel[static_cast<std::size_t>((dy + r) * kernel_size + dx + r)] *
                   img.at(yy, reflect_index(x + dx, w), ch);
          }
        }
        out.at(y, x, ch) = static_cast<float>(std::clamp(acc, 0.0, 255.0));
      }
    }
  }
  return out;
}

ImageTensor dilate(const ImageTensor& img, int se_size) { return extremum_filter(img, se_size, true); }

ImageTensor erode(const ImageTensor& img, int se_size) { return extremum_filter(img, se_size, false); }

ImageTensor morphological_closing(const ImageTensor& img, int se_size) {
  return erode(dilate(img, se_size), se_size);
}

std::string_view strategy_name(DefenseStrategy s) {
  switch (s) {
    case DefenseStrategy::kNone: return "none";
    case DefenseStrategy::kGaussFilter: return "gauss_filter";
    case DefenseStrategy::kClosing: return "closing";
    case DefenseStrategy::kDropoutTrained: return "dropout";
  }
  return "unknown";
}

std::vector<DefenseRow> defense_sweep(const ModelParams& baseline, const ModelParams& dropout_model,
                                      std::span<const Sample> split, const PerturbationSpec& noise,
                                      std::span<const double> levels, int trials, Seed seed,
                                      int threads) {
  if (levels.empty()) throw std::invalid_argument("defense sweep needs at least one level");
  if (!has_level(noise.kind)) {
    throw std::invalid_argument("noise kind " + std::string(kind_name(noise.kind)) +
                                " has no strength level");
  }
  if (baseline.input != dropout_model.input ||
      baseline.num_classes() != dropout_model.num_classes()) {
    throw std::invalid_argument("baseline and dropout models have different architectures");
  }
  const Preprocess gauss = [](const ImageTensor& x) { return gaussian_prefilter(x, 3, 0.5); };
  const Preprocess closing = [](const ImageTensor& x) { return morphological_closing(x, 3); };
  std::vector<DefenseRow> rows;
  for (double level : levels) {
    const PerturbationSpec spec = with_level(noise, level);
    for (DefenseStrategy s : kAllStrategies) {
      const ModelParams& model = s == DefenseStrategy::kDropoutTrained ? dropout_model : baseline;
      const Preprocess& pre = s == DefenseStrategy::kGaussFilter ? gauss
                              : s == DefenseStrategy::kClosing   ? closing
                                                                 : Preprocess{};
      // Same seed for every strategy: common random numbers.
      SweepResult r = evaluate_spec(model, split, spec, trials, seed, threads, pre);
      rows.push_back(DefenseRow{s, spec, level, r.accuracy, r.accuracy_se,
                                std::move(r.per_image_accuracy)});
    }
  }
  return rows;
}

const DefenseRow& find_row(std::span<const DefenseRow> rows, DefenseStrategy strategy,
                           double level) {
  for (const auto& r : rows) {
    if (r.strategy == strategy && r.level == level) return r;
  }
  throw std::out_of_range("no defense row for " + std::string(strategy_name(strategy)) +
                          " at level " + detail::format_real(level));
}

double paired_standard_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("paired standard error needs equal lengths of at least 2");
  }
  const std::size_t n = a.size();
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m += a[i] - b[i];
  m /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) ss += (a[i] - b[i] - m) * (a[i] - b[i] - m);
  return std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
}

void write_defense_csv(std::ostream& out, std::span<const DefenseRow> rows) {
  out << "strategy,kind,level,accuracy\n";
  for (const auto& r : rows) {
    out << strategy_name(r.strategy) << ',' << kind_name(r.spec.kind) << ','
        << detail::format_real(r.level) << ',' << detail::format_real(r.accuracy) << '\n';
  }
}

}  // namespace cnnsens

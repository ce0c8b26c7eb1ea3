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

#include "cnnsens/dataset.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cnnsens/rng.h"

namespace cnnsens {

namespace {

constexpr double kLowest = 8.0;
constexpr double kHighest = 247.0;
constexpr double kJitter = 3.0;
// Class hues share part of the circle so neighbouring classes are close.
constexpr double kHueSpan = 160.0;

double uniform(NoiseStream& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

Rgb hsi_color(double h, double s, double i) {
  Rgb c = hsi_to_rgb(Hsi{h, s, i});
  c.r = std::clamp(c.r, kLowest, kHighest);
  c.g = std::clamp(c.g, kLowest, kHighest);
  c.b = std::clamp(c.b, kLowest, kHighest);
  return c;
}

// Independent per-channel jitter stands in for sensor noise. Without it flat
// regions give exactly tied max-pool inputs, where the network is not
// differentiable.
void put(ImageTensor& img, int y, int x, const Rgb& c, NoiseStream& rng) {
  float* p = img.pixel(y, x);
  p[0] = static_cast<float>(c.r + uniform(rng, -kJitter, kJitter));
  p[1] = static_cast<float>(c.g + uniform(rng, -kJitter, kJitter));
  p[2] = static_cast<float>(c.b + uniform(rng, -kJitter, kJitter));
}

Sample make_sample(int label, int num_classes, int size, NoiseStream& rng) {
  const int hues = (num_classes + 1) / 2;
  const double base_hue = (label % hues) * kHueSpan / hues;
  // The second class attribute is stripe orientation in image axes.
  const bool vertical_stripes = (label / hues) % 2 == 1;

  Sample s;
  s.label = label;
  s.image = ImageTensor(size, size, 3);
  s.foreground = Mask{size, size, std::vector<std::uint8_t>(static_cast<std::size_t>(size) * size, 0)};

  // Background: smooth low-saturation gradient plus a few clutter blobs.
  const double bg_hue = uniform(rng, 0.0, 256.0);
  const double bg_sat = uniform(rng, 0.0, 40.0);
  const double bg_level = uniform(rng, 70.0, 180.0);
  const double gx = uniform(rng, -1.5, 1.5);
  const double gy = uniform(rng, -1.5, 1.5);
  struct Blob {
    double cx, cy, r, hue, sat, level;
  };
  std::vector<Blob> blobs(3 + rng.below(3));
  for (Blob& b : blobs) {
    b = Blob{uniform(rng, 0.0, size), uniform(rng, 0.0, size), uniform(rng, 1.5, 0.18 * size),
             uniform(rng, 0.0, 256.0), uniform(rng, 0.0, 60.0), uniform(rng, 50.0, 200.0)};
  }

  // Foreground ellipse.
  const double cx = uniform(rng, 0.38, 0.62) * size;
  const double cy = uniform(rng, 0.38, 0.62) * size;
  const double major = uniform(rng, 0.16, 0.42) * size;
  const double minor = uniform(rng, 0.55, 0.8) * major;
  const double angle = uniform(rng, 0.0, std::numbers::pi);
  const double hue = base_hue + uniform(rng, -6.0, 6.0);
  const double sat = uniform(rng, 40.0, 200.0);
  const double level = uniform(rng, 110.0, 150.0);
  const double period = uniform(rng, 5.0, 8.0);
  const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double amplitude = uniform(rng, 10.0, 40.0);
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double px = x + 0.5;
      const double py = y + 0.5;
      const double u = (px - cx) * ca + (py - cy) * sa;
      const double v = -(px - cx) * sa + (py - cy) * ca;
      if ((u * u) / (major * major) + (v * v) / (minor * minor) <= 1.0) {
        const double along = vertical_stripes ? px : py;
        const double stripe =
            amplitude * std::sin(2.0 * std::numbers::pi * along / period + phase);
        put(s.image, y, x, hsi_color(hue, sat, level + stripe), rng);
        s.foreground.bits[static_cast<std::size_t>(y) * size + x] = 1;
        continue;
      }
      double bh = bg_hue;
      double bs = bg_sat;
      double bl = bg_level + gx * (x - size / 2.0) + gy * (y - size / 2.0);
      for (const Blob& b : blobs) {
        const double d2 = (px - b.cx) * (px - b.cx) + (py - b.cy) * (py - b.cy);
        if (d2 <= b.r * b.r) {
          bh = b.hue;
          bs = b.sat;
          bl = b.level;
        }
      }
      bl += uniform(rng, -6.0, 6.0);
      put(s.image, y, x, hsi_color(bh, bs, bl), rng);
    }
  }
  return s;
}

}  // namespace

LabeledDataset generate_synthetic_dataset(const SyntheticOptions& options) {
  if (options.num_classes < 2) throw std::invalid_argument("need at least 2 classes");
  if (options.per_class < 1) throw std::invalid_argument("per_class must be positive");
  if (options.image_size < 8) throw std::invalid_argument("image size must be at least 8");
  if (!(options.test_fraction >= 0.0 && options.test_fraction < 1.0)) {
    throw std::invalid_argument("test fraction must lie in [0, 1)");
  }
  LabeledDataset ds;
  ds.num_classes = options.num_classes;
  const int test_count = static_cast<int>(options.per_class * options.test_fraction);
  // Classes are interleaved so any prefix of either split is close to balanced.
  for (int i = 0; i < options.per_class; ++i) {
    for (int c = 0; c < options.num_classes; ++c) {
      const std::uint64_t id = static_cast<std::uint64_t>(c) * options.per_class + i;
      NoiseStream rng(mix(options.seed, id));
      Sample s = make_sample(c, options.num_classes, options.image_size, rng);
      if (i >= options.per_class - test_count) {
        ds.test.push_back(std::move(s));
      } else {
        ds.train.push_back(std::move(s));
      }
    }
  }
  return ds;
}

}  // namespace cnnsens

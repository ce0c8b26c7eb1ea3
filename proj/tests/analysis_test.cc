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

#include <cmath>
#include <sstream>

#include "gtest/gtest.h"
#include "oracles.h"

namespace cnnsens {
namespace {

ImageTensor two_colour_image() {
  // Left half pure red, right half pure green.
  ImageTensor img(4, 4, 3);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) img.at(y, x, x < 2 ? 0 : 1) = 200.0f;
  }
  return img;
}

TEST(HueEntropyTest, ConstantHueIsZero) {
  const ImageTensor img = two_colour_image();
  EXPECT_EQ(hue_entropy(img, BoundingBox{0, 0, 2, 4}), 0.0);
  const std::vector<double> same(50, 100.3);
  EXPECT_EQ(hue_entropy_of(same), 0.0);
}

TEST(HueEntropyTest, TwoEqualColoursGiveOneBit) {
  const ImageTensor img = two_colour_image();
  EXPECT_NEAR(hue_entropy(img, BoundingBox{0, 0, 4, 4}), 1.0, 1e-12);
  Mask m{4, 4, std::vector<std::uint8_t>(16, 0)};
  m.bits[0] = 1;  // red
  m.bits[3] = 1;  // green
  m.bits[7] = 1;  // green
  m.bits[15] = 1;  // green
  const double expected = -(0.25 * std::log2(0.25) + 0.75 * std::log2(0.75));
  EXPECT_NEAR(hue_entropy(img, m), expected, 1e-12);
}

TEST(HueEntropyTest, UniformHistogramHitsLogBins) {
  std::vector<double> hues;
  for (int i = 0; i < 256; ++i) hues.push_back(i + 0.5);
  EXPECT_NEAR(hue_entropy_of(hues), 8.0, 1e-12);
  EXPECT_NEAR(hue_entropy_of(hues, 16), 4.0, 1e-12);
}

TEST(HueEntropyTest, InvariantUnderWholeBinRotation) {
  NoiseStream rng(3);
  std::vector<double> hues(300);
  for (double& h : hues) h = 200.0 + 30.0 * rng.uniform();
  const double base = hue_entropy_of(hues, 64);
  for (int shift : {4, 60, 128}) {
    std::vector<double> rotated = hues;
    for (double& h : rotated) h = std::fmod(h + shift, 256.0);
    EXPECT_NEAR(hue_entropy_of(rotated, 64), base, 1e-12) << "shift " << shift;
  }
}

TEST(HueEntropyTest, RejectsBadRegions) {
  const ImageTensor img = two_colour_image();
  EXPECT_THROW(hue_entropy(img, Mask{4, 4, std::vector<std::uint8_t>(16, 0)}),
               std::invalid_argument);
  EXPECT_THROW(hue_entropy(img, BoundingBox{2, 2, 4, 4}), std::invalid_argument);
  EXPECT_THROW(hue_entropy(img, BoundingBox{0, 0, 2, 2}, 1), std::invalid_argument);
  EXPECT_THROW(hue_entropy(ImageTensor(4, 4, 1), BoundingBox{0, 0, 2, 2}), std::invalid_argument);
  EXPECT_THROW(hue_entropy_of(std::vector<double>{}), std::invalid_argument);
}

TEST(RankSumTest, SeparatedSamplesOfThree) {
  const std::vector<double> a{1, 2, 3};
  const std::vector<double> b{4, 5, 6};
  const RankSumResult r = wilcoxon_rank_sum(a, b);
  EXPECT_EQ(r.statistic, 6.0);
  // Mean 10.5, variance 5.25, continuity-corrected deviation 4.
  EXPECT_NEAR(r.z, -4.0 / std::sqrt(5.25), 1e-12);
  EXPECT_NEAR(r.p, std::erfc(4.0 / std::sqrt(5.25) / std::sqrt(2.0)), 1e-12);
  EXPECT_NEAR(oracle::rank_sum_exact_p(a, b), 0.1, 1e-15);
  EXPECT_NEAR(r.p, oracle::rank_sum_exact_p(a, b), 0.05);
}

TEST(RankSumTest, SymmetricInArguments) {
  const std::vector<double> a{0.3, 1.7, 2.2, 5.0, 0.1};
  const std::vector<double> b{1.1, 4.4, 6.0, 7.5};
  const RankSumResult ab = wilcoxon_rank_sum(a, b);
  const RankSumResult ba = wilcoxon_rank_sum(b, a);
  EXPECT_NEAR(ab.p, ba.p, 1e-15);
  EXPECT_NEAR(ab.z, -ba.z, 1e-15);
  EXPECT_EQ(ab.statistic + ba.statistic, 45.0);
}

TEST(RankSumTest, TiesUseMidranksAndCorrection) {
  const std::vector<double> a{1, 2, 2};
  const std::vector<double> b{2, 3, 3};
  const RankSumResult r = wilcoxon_rank_sum(a, b);
  // Pooled ranks: 1 -> 1, 2 -> 3 (x3), 3 -> 5.5 (x2).
  EXPECT_EQ(r.statistic, 7.0);
  // Tie groups of 3 and 2: variance 9/12 * (7 - (24 + 6) / 30) = 4.5.
  EXPECT_NEAR(r.z, -3.0 / std::sqrt(4.5), 1e-12);
  const std::vector<double> flat(4, 2.0);
  EXPECT_EQ(wilcoxon_rank_sum(flat, flat).p, 1.0);
}

TEST(RankSumTest, IdenticalAndShiftedSamples) {
  NoiseStream rng(8);
  std::vector<double> a(50);
  std::vector<double> b(50);
  for (double& v : a) v = rng.normal();
  for (double& v : b) v = 3.0 + rng.normal();
  EXPECT_LT(wilcoxon_rank_sum(a, b).p, 1e-6);
  EXPECT_GT(wilcoxon_rank_sum(a, a).p, 0.99);
  EXPECT_THROW(wilcoxon_rank_sum(a, std::vector<double>{}), std::invalid_argument);
}

TEST(RankingTest, OrdersAndBreaksTiesById) {
  const std::vector<SensitivityRecord> recs{
      {0, 0.0, 3.0, 1}, {1, 0.0, 1.0, 1}, {2, 0.0, 3.0, 1}, {3, 0.0, 0.5, 1}, {4, 0.0, 1.0, 1}};
  const Ranking r = rank_by_sensitivity(recs, 2);
  EXPECT_EQ(r.top, (std::vector<int>{0, 2}));
  EXPECT_EQ(r.bottom, (std::vector<int>{3, 1}));
  EXPECT_THROW(rank_by_sensitivity(recs, 6), std::invalid_argument);
}

TEST(EntropyCsvTest, Header) {
  std::stringstream ss;
  write_entropy_csv(ss, std::vector<EntropyRecord>{{3, 2.5, 0.25}});
  EXPECT_EQ(ss.str(), "image_id,entropy,sensitivity\n3,2.5,0.25\n");
}

}  // namespace
}  // namespace cnnsens

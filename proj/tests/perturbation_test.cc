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

#include <cmath>

#include "cnnsens/perturbation.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace cnnsens {
namespace {

const ImageTensor& sample_image() {
  static const ImageTensor img = testing::random_image(24, 20, 3, 99, 20.0, 235.0);
  return img;
}

TEST(PerturbationTest, ZeroSigmaIsIdentity) {
  const ImageTensor& img = sample_image();
  EXPECT_EQ(apply_perturbation(img, PerturbationSpec::gaussian_rgb(0.0), Seed{1}, 0), img);
  EXPECT_EQ(apply_perturbation(img, PerturbationSpec::translation(0.0), Seed{1}, 3), img);
}

TEST(PerturbationTest, PepperCertainHitZeroesEverything) {
  for (PepperMode mode : {PepperMode::kPerPixel, PepperMode::kPerChannel}) {
    const ImageTensor out =
        apply_perturbation(sample_image(), PerturbationSpec::pepper(1.0, mode), Seed{5}, 2);
    for (float v : out.storage()) EXPECT_EQ(v, 0.0f);
  }
}

TEST(PerturbationTest, PepperRateWithinBinomialBound) {
  const ImageTensor img(Shape{256, 256, 3}, 100.0f);
  const auto spec = PerturbationSpec::pepper(0.1);
  const ImageTensor out = apply_perturbation(img, spec, Seed{17}, 0);
  std::size_t zeroed = 0;
  for (int y = 0; y < 256; ++y) {
    for (int x = 0; x < 256; ++x) {
      const float* px = out.pixel(y, x);
      // Per-pixel mode zeroes all channels together.
      EXPECT_TRUE((px[0] == 0) == (px[1] == 0) && (px[1] == 0) == (px[2] == 0));
      zeroed += px[0] == 0.0f ? 1 : 0;
    }
  }
  const double n = 256.0 * 256.0;
  const double se = std::sqrt(0.1 * 0.9 / n);
  EXPECT_LT(std::abs(zeroed / n - 0.1), 3 * se);
  EXPECT_EQ(apply_perturbation(img, spec, Seed{17}, 0), out);
}

TEST(PerturbationTest, PepperModesAgreeOnSingleChannel) {
  const ImageTensor img = testing::random_image(16, 16, 1, 3, 1.0, 255.0);
  EXPECT_EQ(apply_perturbation(img, PerturbationSpec::pepper(0.3, PepperMode::kPerPixel), Seed{4}, 1),
            apply_perturbation(img, PerturbationSpec::pepper(0.3, PepperMode::kPerChannel), Seed{4}, 1));
}

TEST(PerturbationTest, DeterministicAndTrialDependent) {
  const ImageTensor& img = sample_image();
  for (auto kind : {PerturbationKind::kGaussianRgb, PerturbationKind::kGaussianIntensity,
                    PerturbationKind::kGlobalColorShift, PerturbationKind::kLocalColorShift,
                    PerturbationKind::kGaussianSaturation, PerturbationKind::kTranslation}) {
    const auto spec = PerturbationSpec::of_kind(kind, 3.0);
    const ImageTensor a = apply_perturbation(img, spec, Seed{8}, 4);
    EXPECT_EQ(apply_perturbation(img, spec, Seed{8}, 4), a) << kind_name(kind);
    EXPECT_NE(apply_perturbation(img, spec, Seed{8}, 5), a) << kind_name(kind);
    EXPECT_NE(apply_perturbation(img, spec, Seed{9}, 4), a) << kind_name(kind);
    for (float v : a.storage()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 255.0f);
    }
  }
}

TEST(PerturbationTest, TrialsAreUncorrelated) {
  const ImageTensor img(Shape{100, 100, 1}, 128.0f);
  const auto spec = PerturbationSpec::gaussian_rgb(10.0);
  const ImageTensor a = apply_perturbation(img, spec, Seed{21}, 0);
  const ImageTensor b = apply_perturbation(img, spec, Seed{21}, 1);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - 128.0, db = b[i] - 128.0;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  const double r = sab / std::sqrt(saa * sbb);
  EXPECT_LT(std::abs(r), 3.0 / std::sqrt(static_cast<double>(a.size())));
}

TEST(PerturbationTest, GaussianMeanConvergesToSource) {
  const ImageTensor img = testing::random_image(4, 4, 3, 12, 60.0, 190.0);
  const auto spec = PerturbationSpec::gaussian_rgb(8.0);
  const int trials = 4000;
  std::vector<double> sum(img.size(), 0.0);
  for (int t = 0; t < trials; ++t) {
    const ImageTensor out = apply_perturbation(img, spec, Seed{2}, static_cast<std::uint64_t>(t));
    for (std::size_t i = 0; i < img.size(); ++i) sum[i] += out[i];
  }
  const double se = 8.0 / std::sqrt(static_cast<double>(trials));
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(sum[i] / trials, img[i], 4 * se);
}

TEST(PerturbationTest, ClampsAtRangeEdges) {
  const ImageTensor img(Shape{8, 8, 3}, 250.0f);
  const ImageTensor out = apply_perturbation(img, PerturbationSpec::gaussian_rgb(50.0), Seed{1}, 0);
  bool saw_max = false;
  for (float v : out.storage()) {
    EXPECT_LE(v, 255.0f);
    saw_max |= v == 255.0f;
  }
  EXPECT_TRUE(saw_max);
}

TEST(PerturbationTest, GlobalColorShiftMovesEveryHueEqually) {
  ImageTensor img(4, 4, 3);
  NoiseStream rng(3);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      const Rgb c = hsi_to_rgb(Hsi{256.0 * rng.uniform(), 120.0, 120.0});
      img.at(y, x, 0) = static_cast<float>(c.r);
      img.at(y, x, 1) = static_cast<float>(c.g);
      img.at(y, x, 2) = static_cast<float>(c.b);
    }
  }
  const auto spec = PerturbationSpec::of_kind(PerturbationKind::kGlobalColorShift, 20.0);
  const HsiImage before = rgb_to_hsi(img);
  const HsiImage after = rgb_to_hsi(apply_perturbation(img, spec, Seed{6}, 0));
  const double shift = std::remainder(after.hue(0, 0) - before.hue(0, 0), 256.0);
  EXPECT_GT(std::abs(shift), 0.1);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      EXPECT_NEAR(std::remainder(after.hue(y, x) - before.hue(y, x) - shift, 256.0), 0.0, 0.05);
    }
  }
}

TEST(PerturbationTest, HsiKindsRejectGrayImages) {
  const ImageTensor gray(4, 4, 1);
  EXPECT_THROW(apply_perturbation(gray, PerturbationSpec::of_kind(PerturbationKind::kLocalColorShift, 1.0),
                                  Seed{1}, 0),
               std::invalid_argument);
}

TEST(PerturbationTest, InvalidParametersRejected) {
  EXPECT_THROW(PerturbationSpec::gaussian_rgb(-1.0), std::invalid_argument);
  EXPECT_THROW(PerturbationSpec::pepper(1.5), std::invalid_argument);
  PerturbationSpec bad = PerturbationSpec::gaussian_rgb(1.0);
  bad.children.push_back(PerturbationSpec::gaussian_rgb(1.0));
  EXPECT_THROW(validate(bad), std::invalid_argument);
}

TEST(GeometryTest, DihedralIdentities) {
  const ImageTensor img = testing::random_image(5, 7, 3, 1);
  EXPECT_EQ(flip_lr(flip_lr(img)), img);
  EXPECT_EQ(flip_ud(flip_ud(img)), img);
  EXPECT_EQ(rotate90(rotate90(rotate90(rotate90(img)))), img);
  EXPECT_EQ(flip_lr(rotate90(rotate90(img))), flip_ud(img));
  const ImageTensor r = rotate90(img);
  EXPECT_EQ(r.shape(), (Shape{7, 5, 3}));
  // Clockwise: the bottom-left corner moves to the top-left.
  EXPECT_EQ(r.at(0, 0, 1), img.at(4, 0, 1));
  EXPECT_EQ(flip_lr(img).at(2, 0, 2), img.at(2, 6, 2));
}

TEST(GeometryTest, ComposedFlipsAreNoOp) {
  const auto spec = PerturbationSpec::compose({PerturbationSpec::of_kind(PerturbationKind::kFlipLr),
                                               PerturbationSpec::of_kind(PerturbationKind::kFlipLr)});
  EXPECT_FALSE(is_stochastic(spec));
  EXPECT_EQ(apply_perturbation(sample_image(), spec, Seed{3}, 9), sample_image());
}

TEST(GeometryTest, IntegerTranslationShiftsContent) {
  const ImageTensor img = testing::random_image(6, 6, 1, 8);
  const ImageTensor out = translate_bilinear(img, 2.0, -1.0);
  EXPECT_EQ(out.at(3, 4, 0), img.at(4, 2, 0));
  // Reflection at the border: x = 0 samples in(-2) -> in(1).
  EXPECT_EQ(out.at(0, 0, 0), img.at(1, 1, 0));
  const ImageTensor half = translate_bilinear(img, 0.5, 0.0);
  EXPECT_NEAR(half.at(2, 3, 0), 0.5 * (img.at(2, 2, 0) + img.at(2, 3, 0)), 1e-4);
}

TEST(SpecFormatTest, RoundTrip) {
  const auto nested = PerturbationSpec::compose(
      {PerturbationSpec::gaussian_rgb(0.1), PerturbationSpec::pepper(0.05, PepperMode::kPerChannel),
       PerturbationSpec::compose({PerturbationSpec::of_kind(PerturbationKind::kRotate90)})});
  for (const auto& spec : {PerturbationSpec::gaussian_rgb(1.0 / 3.0), PerturbationSpec::translation(2.5),
                           nested}) {
    EXPECT_EQ(parse_spec(format_spec(spec)), spec) << format_spec(spec);
  }
}

TEST(SpecFormatTest, ParsesFilesAndDefaults) {
  const auto specs = parse_spec_file(
      "# grid\nkind=gaussian_rgb sigma=4\n\n  kind=pepper p=0.1 mode=per_channel  # hi\n"
      "kind=compose [kind=flip_lr] [kind=gaussian_rgb sigma=2]\n");
  ASSERT_EQ(specs.size(), 3u);
  EXPECT_EQ(specs[0], PerturbationSpec::gaussian_rgb(4.0));
  EXPECT_EQ(specs[1], PerturbationSpec::pepper(0.1, PepperMode::kPerChannel));
  EXPECT_EQ(specs[2].children.size(), 2u);
  EXPECT_EQ(level_of(specs[1]), 0.1);
  EXPECT_EQ(level_of(specs[2]), 0.0);
}

TEST(SpecFormatTest, RejectsMalformed) {
  EXPECT_THROW(parse_spec("kind=blur sigma=1"), std::invalid_argument);
  EXPECT_THROW(parse_spec("sigma=1"), std::invalid_argument);
  EXPECT_THROW(parse_spec("kind=gaussian_rgb sigma=abc"), std::invalid_argument);
  EXPECT_THROW(parse_spec("kind=gaussian_rgb colour=1"), std::invalid_argument);
  EXPECT_THROW(parse_spec("kind=compose [kind=flip_lr"), std::invalid_argument);
  EXPECT_THROW(parse_spec("kind=pepper p=2"), std::invalid_argument);
  try {
    parse_spec_file("kind=flip_lr\nkind=nope\n");
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

}  // namespace
}  // namespace cnnsens

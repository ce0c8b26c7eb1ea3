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

#include "cnnsens/sensitivity.h"

#include <cmath>

#include "cnnsens/model.h"
#include "cnnsens/perturbation.h"
#include "gtest/gtest.h"
#include "oracles.h"
#include "test_util.h"

namespace cnnsens {
namespace {

GradientMap random_gradient(Shape shape, std::uint64_t seed) {
  GradientMap g(shape);
  NoiseStream rng(seed);
  for (double& v : g.storage()) v = rng.normal();
  return g;
}

double squared_norm(const GradientMap& g) {
  double s = 0.0;
  for (double v : g.storage()) s += v * v;
  return s;
}

TEST(SensitivityTest, BernoulliMomentMatchesEnumeration) {
  for (double p : {0.0, 0.05, 0.3, 1.0}) {
    const Matrix m = bernoulli_second_moment(p, 6);
    const auto ref = oracle::bernoulli_moment_enumerated(p, 6);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(m(i, j), ref[i * 6 + j], 1e-15);
    }
  }
}

TEST(SensitivityTest, PepperMatchesExhaustiveExpectation) {
  for (int channels : {1, 3}) {
    for (double p : {0.05, 0.1, 0.3, 0.5}) {
      const ImageTensor img = testing::random_image(2, 4, channels, 17);
      const GradientMap f = random_gradient(img.shape(), 23);
      const double expected = oracle::pepper_expectation(img, f.storage(), p);
      const SensitivityScore s = sensitivity_pepper(img, f, p);
      EXPECT_NEAR(s.variance, expected, 1e-9 * expected) << "p=" << p << " c=" << channels;
      EXPECT_DOUBLE_EQ(s.std, std::sqrt(s.variance));
    }
  }
}

TEST(SensitivityTest, ClosedFormsAgreeWithGeneralForm) {
  NoiseStream rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 3 + static_cast<int>(rng.below(3));
    const int w = 3 + static_cast<int>(rng.below(3));
    const int c = rng.below(2) == 0 ? 1 : 3;
    const ImageTensor img = testing::random_image(h, w, c, 1000 + trial);
    const GradientMap f = random_gradient(img.shape(), 2000 + trial);
    const double p = rng.uniform();
    const double sigma = 0.1 + 5.0 * rng.uniform();
    const double tol = 1e-9;

    const double pepper_general =
        sensitivity_general(bernoulli_second_moment(p, img.shape().pixels()), pepper_jacobian(img),
                            f.storage())
            .variance;
    const double pepper = sensitivity_pepper(img, f, p).variance;
    EXPECT_NEAR(pepper, pepper_general, tol * std::max(1.0, pepper_general));

    Matrix scaled(img.size(), img.size());
    for (std::size_t i = 0; i < img.size(); ++i) scaled(i, i) = sigma * sigma;
    const double gauss_general =
        sensitivity_general(scaled, Matrix::identity(img.size()), f.storage()).variance;
    EXPECT_NEAR(sensitivity_gaussian_rgb(f, sigma).variance, gauss_general,
                tol * std::max(1.0, gauss_general));

    Matrix m2(2, 2);
    m2(0, 0) = m2(1, 1) = sigma * sigma;
    const double trans_general =
        sensitivity_general(m2, translation_jacobian(img), f.storage()).variance;
    EXPECT_NEAR(sensitivity_translation(img, f, sigma).variance, trans_general,
                tol * std::max(1.0, trans_general));
  }
}

TEST(SensitivityTest, GaussianIsSigmaTimesGradientNorm) {
  const GradientMap f = random_gradient(Shape{3, 3, 3}, 5);
  const double norm = std::sqrt(squared_norm(f));
  EXPECT_NEAR(sensitivity_gaussian_rgb(f, 2.5).std, 2.5 * norm, 1e-12);
  EXPECT_EQ(sensitivity_gaussian_rgb(f, 0.0).std, 0.0);
  EXPECT_NEAR(sensitivity_gaussian_rgb(f, 5.0).std, 2.0 * sensitivity_gaussian_rgb(f, 2.5).std,
              1e-12);
}

TEST(SensitivityTest, PepperEdgeLevels) {
  const ImageTensor img = testing::random_image(3, 3, 3, 8);
  const GradientMap f = random_gradient(img.shape(), 9);
  EXPECT_EQ(sensitivity_pepper(img, f, 0.0).variance, 0.0);
  // p = 1 blacks out every pixel: the change is exactly -F'x.
  double dot = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) dot += f[i] * img[i];
  EXPECT_NEAR(sensitivity_pepper(img, f, 1.0).variance, dot * dot, 1e-9 * dot * dot);
}

// Monte Carlo over real sub-pixel translations of a smooth image, scored by a
// linear model whose weights avoid the border.
TEST(SensitivityTest, TranslationMatchesMonteCarlo) {
  const int n = 12;
  ImageTensor img(n, n, 3);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = static_cast<float>(120.0 + 40.0 * std::sin(0.35 * x + 0.2 * y + c) +
                                             25.0 * std::cos(0.25 * y - 0.1 * x));
      }
    }
  }
  GradientMap f(img.shape());
  NoiseStream rng(31);
  for (int y = 3; y < n - 3; ++y) {
    for (int x = 3; x < n - 3; ++x) {
      for (int c = 0; c < 3; ++c) f.at(y, x, c) = rng.normal();
    }
  }
  const ModelParams linear = make_linear_model(img.shape(), f.storage(), {0.0});
  const double base = forward(linear, img)[0];
  const PerturbationSpec spec = PerturbationSpec::translation(0.25);
  const int trials = 100000;
  double sum = 0.0;
  for (int t = 0; t < trials; ++t) {
    const double d = forward(linear, apply_perturbation(img, spec, Seed{4}, t))[0] - base;
    sum += d * d;
  }
  const double predicted = sensitivity_translation(img, f, 0.25).variance;
  EXPECT_NEAR(sum / trials, predicted, 0.10 * predicted);
}

TEST(SensitivityTest, RejectsInvalidInput) {
  const ImageTensor img = testing::random_image(3, 3, 3, 1);
  const GradientMap f = random_gradient(img.shape(), 2);
  EXPECT_THROW(translation_jacobian(testing::random_image(2, 2, 3, 1)), std::invalid_argument);
  EXPECT_THROW(sensitivity_pepper(img, f, 1.5), std::invalid_argument);
  EXPECT_THROW(sensitivity_pepper(img, random_gradient(Shape{3, 4, 3}, 1), 0.1),
               std::invalid_argument);
  EXPECT_THROW(sensitivity_gaussian_rgb(f, -1.0), std::invalid_argument);
  EXPECT_THROW(sensitivity_translation(img, f, std::nan("")), std::invalid_argument);
  Matrix asym(2, 2);
  asym(0, 1) = 1.0;
  EXPECT_THROW(sensitivity_general(asym, translation_jacobian(img), f.storage()),
               std::invalid_argument);
  EXPECT_THROW(sensitivity_general(Matrix(3, 3), translation_jacobian(img), f.storage()),
               std::invalid_argument);
  EXPECT_THROW(sensitivity_general(Matrix(2, 3), translation_jacobian(img), f.storage()),
               std::invalid_argument);
}

}  // namespace
}  // namespace cnnsens

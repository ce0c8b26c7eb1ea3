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

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cnnsens {

namespace {

void require_same_shape(const ImageTensor& img, const GradientMap& grad) {
  if (img.shape() != grad.shape()) {
    throw std::invalid_argument("image " + to_string(img.shape()) + " and gradient " +
                                to_string(grad.shape()) + " differ in shape");
  }
}

void require_sigma(double sigma) {
  if (!std::isfinite(sigma) || sigma < 0.0) {
    throw std::invalid_argument("sigma must be finite and nonnegative");
  }
}

}  // namespace

SensitivityScore SensitivityScore::from_variance(double variance) {
  // Rounding can leave a mathematically nonnegative quantity at -1e-18.
  const double v = std::max(variance, 0.0);
  return SensitivityScore{v, std::sqrt(v)};
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

SensitivityScore sensitivity_general(const Matrix& second_moment, const Matrix& jacobian,
                                     std::span<const double> grad) {
  const std::size_t n = second_moment.rows();
  if (second_moment.cols() != n) throw std::invalid_argument("second moment must be square");
  if (jacobian.rows() != n) {
    throw std::invalid_argument("jacobian has " + std::to_string(jacobian.rows()) +
                                " rows, second moment is " + std::to_string(n) + "x" +
                                std::to_string(n));
  }
  if (jacobian.cols() != grad.size()) {
    throw std::invalid_argument("jacobian has " + std::to_string(jacobian.cols()) +
                                " columns, gradient has " + std::to_string(grad.size()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double a = second_moment(i, j);
      const double b = second_moment(j, i);
      if (std::abs(a - b) > 1e-12 * std::max({1.0, std::abs(a), std::abs(b)})) {
        throw std::invalid_argument("second moment matrix is not symmetric");
      }
    }
  }
  std::vector<double> u(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = jacobian.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * grad[c];
    u[r] = acc;
  }
  double v = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = second_moment.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * u[j];
    v += u[i] * acc;
  }
  return SensitivityScore::from_variance(v);
}

SensitivityScore sensitivity_gaussian_rgb(const GradientMap& grad, double sigma) {
  require_sigma(sigma);
  double sq = 0.0;
  for (double f : grad.storage()) sq += f * f;
  return SensitivityScore::from_variance(sigma * sigma * sq);
}

SensitivityScore sensitivity_pepper(const ImageTensor& img, const GradientMap& grad, double p) {
  require_same_shape(img, grad);
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in [0, 1]");
  const int c = img.channels();
  double sum_v = 0.0;
  double sum_v2 = 0.0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const float* px = img.pixel(y, x);
      const double* fx = grad.pixel(y, x);
      double v = 0.0;
      for (int ch = 0; ch < c; ++ch) v -= static_cast<double>(px[ch]) * fx[ch];
      sum_v += v;
      sum_v2 += v * v;
    }
  }
  return SensitivityScore::from_variance(p * p * sum_v * sum_v + p * (1.0 - p) * sum_v2);
}

SensitivityScore sensitivity_translation(const ImageTensor& img, const GradientMap& grad,
                                         double sigma) {
  require_same_shape(img, grad);
  require_sigma(sigma);
  const ImageGradients g = image_gradients(img);
  double ax = 0.0;
  double ay = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    ax += g.gx[i] * grad[i];
    ay += g.gy[i] * grad[i];
  }
  return SensitivityScore::from_variance(sigma * sigma * (ax * ax + ay * ay));
}

Matrix bernoulli_second_moment(double p, std::size_t d) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in [0, 1]");
  if (d == 0) throw std::invalid_argument("dimension must be positive");
  // p^2 e e' - p (p - 1) I; the diagonal simplifies to E[eps^2] = p.
  Matrix m(d, d, p * p);
  for (std::size_t i = 0; i < d; ++i) m(i, i) = p;
  return m;
}

Matrix pepper_jacobian(const ImageTensor& img) {
  Matrix g(img.shape().pixels(), img.size());
  const std::size_t c = static_cast<std::size_t>(img.channels());
  for (std::size_t k = 0; k < img.shape().pixels(); ++k) {
    for (std::size_t ch = 0; ch < c; ++ch) g(k, k * c + ch) = -static_cast<double>(img[k * c + ch]);
  }
  return g;
}

Matrix translation_jacobian(const ImageTensor& img) {
  const ImageGradients grads = image_gradients(img);
  Matrix g(2, img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    g(0, i) = grads.gx[i];
    g(1, i) = grads.gy[i];
  }
  return g;
}

}  // namespace cnnsens

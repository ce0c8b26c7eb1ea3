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

#ifndef CNNSENS_SENSITIVITY_H_
#define CNNSENS_SENSITIVITY_H_

#include <cstddef>
#include <span>
#include <vector>

#include "cnnsens/image.h"

namespace cnnsens {

/// Predicted expected squared output change E[(f(g(x, eps)) - f(x))^2]
/// under a first-order expansion, and its square root.
struct SensitivityScore {
  double variance = 0.0;
  double std = 0.0;

  static SensitivityScore from_variance(double variance);
};

/// Minimal dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  static Matrix identity(std::size_t n);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// V = tr(E[eps eps'] G F F' G') evaluated as the quadratic form u' M u with
/// u = G F. `second_moment` is N x N and must be symmetric, `jacobian` is
/// N x (C D), `grad` has C D elements in the image's (y, x, c) order.
SensitivityScore sensitivity_general(const Matrix& second_moment, const Matrix& jacobian,
                                     std::span<const double> grad);

/// V = sigma^2 ||F||^2.
SensitivityScore sensitivity_gaussian_rgb(const GradientMap& grad, double sigma);

/// Pepper noise with one Bernoulli(p) per pixel shared by all channels:
/// v_k = -sum_c x_kc F_kc, V = p^2 (sum_k v_k)^2 + p (1 - p) ||v||^2.
SensitivityScore sensitivity_pepper(const ImageTensor& img, const GradientMap& grad, double p);

/// V = sigma^2 ||G F||^2 where the rows of G are the x and y image gradients.
SensitivityScore sensitivity_translation(const ImageTensor& img, const GradientMap& grad,
                                         double sigma);

/// E[eps eps'] for D independent Bernoulli(p): p on the diagonal, p^2 elsewhere.
Matrix bernoulli_second_moment(double p, std::size_t d);

/// Perturbation Jacobians at eps = 0, columns in (y, x, c) element order.
/// Pepper: D x (C D), entry (k, element of pixel k) = -x. Translation: 2 x (C D).
Matrix pepper_jacobian(const ImageTensor& img);
Matrix translation_jacobian(const ImageTensor& img);

}  // namespace cnnsens

#endif  // CNNSENS_SENSITIVITY_H_

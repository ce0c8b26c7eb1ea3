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

#ifndef CNNSENS_IMAGE_H_
#define CNNSENS_IMAGE_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cnnsens {

/// Height, width and channel count of an interleaved (y, x, c) tensor.
struct Shape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t pixels() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  std::size_t elements() const { return pixels() * static_cast<std::size_t>(channels); }

  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& shape);

/// Dense row-major (y, x, c) tensor. Used for pixel data (float) as well as
/// activations and gradient maps (double).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{}) : shape_(shape) {
    if (shape.height <= 0 || shape.width <= 0 || shape.channels <= 0) {
      throw std::invalid_argument("tensor dimensions must be positive, got " + to_string(shape));
    }
    data_.assign(shape.elements(), fill);
  }
  Tensor(Shape shape, std::vector<T> data) : Tensor(shape) {
    if (data.size() != shape.elements()) {
      throw std::invalid_argument("tensor data length does not match shape " + to_string(shape));
    }
    data_ = std::move(data);
  }
  Tensor(int height, int width, int channels, T fill = T{})
      : Tensor(Shape{height, width, channels}, fill) {}

  const Shape& shape() const { return shape_; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  int channels() const { return shape_.channels; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(shape_.width) +
            static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(shape_.channels) +
           static_cast<std::size_t>(c);
  }
  T& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  const T& at(int y, int x, int c) const { return data_[index(y, x, c)]; }
  T* pixel(int y, int x) { return data_.data() + index(y, x, 0); }
  const T* pixel(int y, int x) const { return data_.data() + index(y, x, 0); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Pixel container: values on the 8-bit scale [0, 255], one or three channels.
using ImageTensor = Tensor<float>;
/// Derivative of a scalar output with respect to every input element.
using GradientMap = Tensor<double>;

/// Hue, saturation and intensity planes on the [0, 255] scale. Hue is
/// circular on [0, 256).
class HsiImage {
 public:
  static constexpr double kHuePeriod = 256.0;

  HsiImage() = default;
  explicit HsiImage(Tensor<float> planes);

  const Tensor<float>& planes() const { return planes_; }
  Tensor<float>& planes() { return planes_; }
  int height() const { return planes_.height(); }
  int width() const { return planes_.width(); }

  float hue(int y, int x) const { return planes_.at(y, x, 0); }
  float saturation(int y, int x) const { return planes_.at(y, x, 1); }
  float intensity(int y, int x) const { return planes_.at(y, x, 2); }

  void set_hue(int y, int x, double value);  // wraps modulo 256
  void set_saturation(int y, int x, double value);  // clamps
  void set_intensity(int y, int x, double value);  // clamps

 private:
  Tensor<float> planes_;
};

struct BoundingBox {
  int x0 = 0;
  int y0 = 0;
  int w = 1;
  int h = 1;

  bool fits(const Shape& shape) const;
};

/// Binary pixel mask, row-major, one byte per pixel.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  bool contains(int y, int x) const {
    return bits[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                static_cast<std::size_t>(x)] != 0;
  }
  std::size_t count() const;
};

struct ImageGradients {
  GradientMap gx;
  GradientMap gy;
};

inline constexpr double kPixelMin = 0.0;
inline constexpr double kPixelMax = 255.0;

double clamp_pixel(double v);
double wrap_hue(double h);

/// Single-pixel conversions; hue in [0, 256), saturation and intensity in [0, 255].
struct Hsi {
  double h = 0.0;
  double s = 0.0;
  double i = 0.0;
};
struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
};
Hsi rgb_to_hsi(const Rgb& rgb);
Rgb hsi_to_rgb(const Hsi& hsi);  // unclamped

HsiImage rgb_to_hsi(const ImageTensor& img);
ImageTensor hsi_to_rgb(const HsiImage& img);

/// Central differences in the interior, one-sided at the border.
ImageGradients image_gradients(const ImageTensor& img);

ImageTensor resize_bilinear(const ImageTensor& img, int new_height, int new_width);
ImageTensor crop(const ImageTensor& img, const BoundingBox& box);

/// Half-sample symmetric reflection of an index into [0, n): -1 -> 0, n -> n-1.
int reflect_index(int i, int n);

// File formats. PPM is binary "P6" with maxval 255. The tensor format is
// "SNS1" followed by height, width, channels as uint32 LE and the data as
// float32 LE in (y, x, c) order.
ImageTensor read_ppm(const std::filesystem::path& path);
void write_ppm(const ImageTensor& img, const std::filesystem::path& path);
ImageTensor read_tensor(const std::filesystem::path& path);
void write_tensor(const ImageTensor& img, const std::filesystem::path& path);

/// Loads either format, chosen by file magic.
ImageTensor read_image(const std::filesystem::path& path);

}  // namespace cnnsens

#endif  // CNNSENS_IMAGE_H_

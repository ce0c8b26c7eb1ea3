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

#include "cnnsens/image.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "binary_io.h"

namespace cnnsens {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << shape.height << "x" << shape.width << "x" << shape.channels;
  return os.str();
}

double clamp_pixel(double v) { return std::clamp(v, kPixelMin, kPixelMax); }

double wrap_hue(double h) {
  double w = std::fmod(h, HsiImage::kHuePeriod);
  if (w < 0.0) w += HsiImage::kHuePeriod;
  // fmod of a tiny negative value can round up to exactly the period.
  if (w >= HsiImage::kHuePeriod) w = 0.0;
  return w;
}

HsiImage::HsiImage(Tensor<float> planes) : planes_(std::move(planes)) {
  if (planes_.channels() != 3) {
    throw std::invalid_argument("HSI image needs exactly 3 planes");
  }
}

void HsiImage::set_hue(int y, int x, double value) {
  // Storing as float may round a value just below 256 up to 256.
  float h = static_cast<float>(wrap_hue(value));
  if (h >= static_cast<float>(kHuePeriod)) h = 0.0f;
  planes_.at(y, x, 0) = h;
}

void HsiImage::set_saturation(int y, int x, double value) {
  planes_.at(y, x, 1) = static_cast<float>(clamp_pixel(value));
}

void HsiImage::set_intensity(int y, int x, double value) {
  planes_.at(y, x, 2) = static_cast<float>(clamp_pixel(value));
}

bool BoundingBox::fits(const Shape& shape) const {
  return x0 >= 0 && y0 >= 0 && w > 0 && h > 0 && x0 + w <= shape.width &&
         y0 + h <= shape.height;
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(),
                                                [](std::uint8_t b) { return b != 0; }));
}

Hsi rgb_to_hsi(const Rgb& rgb) {
  const double mn = std::min({rgb.r, rgb.g, rgb.b});
  const double mx = std::max({rgb.r, rgb.g, rgb.b});
  Hsi out;
  out.i = (rgb.r + rgb.g + rgb.b) / 3.0;
  if (mx <= mn || out.i <= 0.0) {
    return out;  // achromatic: hue and saturation defined as 0
  }
  out.s = 255.0 * (1.0 - mn / out.i);
  double theta = std::atan2(std::numbers::sqrt3 * (rgb.g - rgb.b), 2.0 * rgb.r - rgb.g - rgb.b);
  if (theta < 0.0) theta += 2.0 * std::numbers::pi;
  out.h = wrap_hue(theta * HsiImage::kHuePeriod / (2.0 * std::numbers::pi));
  return out;
}

Rgb hsi_to_rgb(const Hsi& hsi) {
  const double s = hsi.s / 255.0;
  const double i = hsi.i;
  double deg = wrap_hue(hsi.h) * 360.0 / HsiImage::kHuePeriod;
  constexpr double kDeg = std::numbers::pi / 180.0;
  auto major = [&](double d) { return i * (1.0 + s * std::cos(d * kDeg) / std::cos((60.0 - d) * kDeg)); };
  const double minor = i * (1.0 - s);
  Rgb out;
  if (deg < 120.0) {
    out.b = minor;
    out.r = major(deg);
    out.g = 3.0 * i - (out.r + out.b);
  } else if (deg < 240.0) {
    deg -= 120.0;
    out.r = minor;
    out.g = major(deg);
    out.b = 3.0 * i - (out.r + out.g);
  } else {
    deg -= 240.0;
    out.g = minor;
    out.b = major(deg);
    out.r = 3.0 * i - (out.g + out.b);
  }
  return out;
}

HsiImage rgb_to_hsi(const ImageTensor& img) {
  if (img.channels() != 3) {
    throw std::invalid_argument("rgb_to_hsi requires a 3-channel image, got " +
                                to_string(img.shape()));
  }
  HsiImage out(Tensor<float>(img.shape()));
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const float* p = img.pixel(y, x);
      const Hsi hsi = rgb_to_hsi(Rgb{p[0], p[1], p[2]});
      out.set_hue(y, x, hsi.h);
      out.set_saturation(y, x, hsi.s);
      out.set_intensity(y, x, hsi.i);
    }
  }
  return out;
}

ImageTensor hsi_to_rgb(const HsiImage& img) {
  ImageTensor out(img.planes().shape());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const Rgb rgb = hsi_to_rgb(Hsi{img.hue(y, x), img.saturation(y, x), img.intensity(y, x)});
      float* p = out.pixel(y, x);
      p[0] = static_cast<float>(clamp_pixel(rgb.r));
      p[1] = static_cast<float>(clamp_pixel(rgb.g));
      p[2] = static_cast<float>(clamp_pixel(rgb.b));
    }
  }
  return out;
}

ImageGradients image_gradients(const ImageTensor& img) {
  const int h = img.height();
  const int w = img.width();
  const int c = img.channels();
  if (h < 3 || w < 3) {
    throw std::invalid_argument("image_gradients needs at least 3x3, got " +
                                to_string(img.shape()));
  }
  ImageGradients g{GradientMap(img.shape()), GradientMap(img.shape())};
  auto v = [&](int y, int x, int ch) { return static_cast<double>(img.at(y, x, ch)); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double gx;
        if (x == 0) {
          gx = v(y, 1, ch) - v(y, 0, ch);
        } else if (x == w - 1) {
          gx = v(y, w - 1, ch) - v(y, w - 2, ch);
        } else {
          gx = (v(y, x + 1, ch) - v(y, x - 1, ch)) / 2.0;
        }
        double gy;
        if (y == 0) {
          gy = v(1, x, ch) - v(0, x, ch);
        } else if (y == h - 1) {
          gy = v(h - 1, x, ch) - v(h - 2, x, ch);
        } else {
          gy = (v(y + 1, x, ch) - v(y - 1, x, ch)) / 2.0;
        }
        g.gx.at(y, x, ch) = gx;
        g.gy.at(y, x, ch) = gy;
      }
    }
  }
  return g;
}

ImageTensor resize_bilinear(const ImageTensor& img, int new_height, int new_width) {
  if (new_height <= 0 || new_width <= 0) {
    throw std::invalid_argument("resize target must be positive");
  }
  ImageTensor out(new_height, new_width, img.channels());
  const double sy = static_cast<double>(img.height()) / new_height;
  const double sx = static_cast<double>(img.width()) / new_width;
  for (int y = 0; y < new_height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < new_width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < img.channels(); ++c) {
        const double top = (1.0 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
        const double bottom = (1.0 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
        out.at(y, x, c) = static_cast<float>((1.0 - wy) * top + wy * bottom);
      }
    }
  }
  return out;
}

ImageTensor crop(const ImageTensor& img, const BoundingBox& box) {
  if (!box.fits(img.shape())) {
    throw std::invalid_argument("bounding box out of image bounds");
  }
  ImageTensor out(box.h, box.w, img.channels());
  for (int y = 0; y < box.h; ++y) {
    const float* src = img.pixel(box.y0 + y, box.x0);
    std::copy(src, src + static_cast<std::ptrdiff_t>(box.w) * img.channels(), out.pixel(y, 0));
  }
  return out;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

// Reads one PPM header token, skipping whitespace and '#' comments.
std::string ppm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty()) throw std::runtime_error("truncated PPM header");
  return tok;
}

int ppm_int(std::istream& in) {
  const std::string tok = ppm_token(in);
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(tok, &used);
  } catch (const std::exception&) {
    throw std::runtime_error("malformed PPM header field '" + tok + "'");
  }
  if (used != tok.size() || v <= 0) {
    throw std::runtime_error("malformed PPM header field '" + tok + "'");
  }
  return v;
}

}  // namespace

ImageTensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  if (ppm_token(in) != "P6") throw std::runtime_error(path.string() + ": not a binary P6 PPM");
  const int w = ppm_int(in);
  const int h = ppm_int(in);
  const int maxval = ppm_int(in);
  if (maxval != 255) {
    throw std::runtime_error(path.string() + ": unsupported PPM maxval " + std::to_string(maxval));
  }
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw std::runtime_error(path.string() + ": truncated PPM payload");
  }
  ImageTensor img(h, w, 3);
  std::transform(raw.begin(), raw.end(), img.storage().begin(),
                 [](unsigned char b) { return static_cast<float>(b); });
  return img;
}

void write_ppm(const ImageTensor& img, const std::filesystem::path& path) {
  if (img.channels() != 3) throw std::invalid_argument("PPM output needs 3 channels");
  std::ofstream out = open_out(path);
  out << "P6\n" << img.width() << " " << img.height() << "\n255\n";
  std::vector<char> raw(img.size());
  std::transform(img.storage().begin(), img.storage().end(), raw.begin(), [](float v) {
    // std::round rounds halves away from zero.
    return static_cast<char>(static_cast<unsigned char>(std::round(clamp_pixel(v))));
  });
  out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ImageTensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  const std::string what = "tensor file " + path.string();
  detail::expect_magic(in, "SNS1", what);
  const std::uint32_t h = detail::get_u32(in, what);
  const std::uint32_t w = detail::get_u32(in, what);
  const std::uint32_t c = detail::get_u32(in, what);
  if (h == 0 || w == 0 || (c != 1 && c != 3) || h > (1u << 16) || w > (1u << 16)) {
    throw std::runtime_error("malformed header in " + what);
  }
  ImageTensor img(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  for (float& v : img.storage()) v = detail::get_f32(in, what);
  return img;
}

void write_tensor(const ImageTensor& img, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out.write("SNS1", 4);
  detail::put_u32(out, static_cast<std::uint32_t>(img.height()));
  detail::put_u32(out, static_cast<std::uint32_t>(img.width()));
  detail::put_u32(out, static_cast<std::uint32_t>(img.channels()));
  for (float v : img.storage()) detail::put_f32(out, v);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ImageTensor read_image(const std::filesystem::path& path) {
  char magic[2] = {};
  {
    std::ifstream in = open_in(path);
    in.read(magic, 2);
  }
  if (magic[0] == 'P' && magic[1] == '6') return read_ppm(path);
  return read_tensor(path);
}

}  // namespace cnnsens

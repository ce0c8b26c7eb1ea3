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

#include "cnnsens/perturbation.h"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "text_format.h"

namespace cnnsens {

namespace {

constexpr std::array<std::pair<PerturbationKind, std::string_view>, 11> kKindNames = {{
    {PerturbationKind::kGaussianRgb, "gaussian_rgb"},
    {PerturbationKind::kGaussianIntensity, "gaussian_intensity"},
    {PerturbationKind::kGlobalColorShift, "global_color_shift"},
    {PerturbationKind::kLocalColorShift, "local_color_shift"},
    {PerturbationKind::kGaussianSaturation, "gaussian_saturation"},
    {PerturbationKind::kPepper, "pepper"},
    {PerturbationKind::kTranslation, "translation"},
    {PerturbationKind::kRotate90, "rotate90"},
    {PerturbationKind::kFlipUd, "flip_ud"},
    {PerturbationKind::kFlipLr, "flip_lr"},
    {PerturbationKind::kCompose, "compose"},
}};

bool needs_hsi(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::kGaussianIntensity:
    case PerturbationKind::kGlobalColorShift:
    case PerturbationKind::kLocalColorShift:
    case PerturbationKind::kGaussianSaturation:
      return true;
    default:
      return false;
  }
}

double parse_real(std::string_view text, std::string_view key) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw std::invalid_argument("bad value for " + std::string(key) + ": '" + std::string(text) +
                                "'");
  }
  return v;
}

std::vector<std::string_view> tokenize(std::string_view text) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    const char ch = text[i];
    if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
      ++i;
    } else if (ch == '[' || ch == ']') {
      tokens.push_back(text.substr(i, 1));
      ++i;
    } else {
      std::size_t j = i;
      while (j < text.size() && text[j] != ' ' && text[j] != '\t' && text[j] != '\r' &&
             text[j] != '\n' && text[j] != '[' && text[j] != ']') {
        ++j;
      }
      tokens.push_back(text.substr(i, j - i));
      i = j;
    }
  }
  return tokens;
}

PerturbationSpec parse_block(const std::vector<std::string_view>& tokens, std::size_t& pos) {
  PerturbationSpec spec;
  bool have_kind = false;
  while (pos < tokens.size() && tokens[pos] != "]") {
    const std::string_view tok = tokens[pos];
    if (tok == "[") {
      ++pos;
      spec.children.push_back(parse_block(tokens, pos));
      if (pos >= tokens.size() || tokens[pos] != "]") {
        throw std::invalid_argument("unbalanced '[' in perturbation spec");
      }
      ++pos;
      continue;
    }
    const std::size_t eq = tok.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("expected key=value, got '" + std::string(tok) + "'");
    }
    const std::string_view key = tok.substr(0, eq);
    const std::string_view value = tok.substr(eq + 1);
    if (key == "kind") {
      auto kind = parse_kind(value);
      if (!kind) throw std::invalid_argument("unknown perturbation kind '" + std::string(value) + "'");
      spec.kind = *kind;
      have_kind = true;
    } else if (key == "sigma") {
      spec.sigma = parse_real(value, key);
    } else if (key == "p") {
      spec.p = parse_real(value, key);
    } else if (key == "mode") {
      if (value == "per_pixel") {
        spec.pepper_mode = PepperMode::kPerPixel;
      } else if (value == "per_channel") {
        spec.pepper_mode = PepperMode::kPerChannel;
      } else {
        throw std::invalid_argument("unknown pepper mode '" + std::string(value) + "'");
      }
    } else {
      throw std::invalid_argument("unknown key '" + std::string(key) + "'");
    }
    ++pos;
  }
  if (!have_kind) throw std::invalid_argument("perturbation spec without kind=");
  validate(spec);
  return spec;
}

ImageTensor add_gaussian_rgb(const ImageTensor& img, double sigma, NoiseStream& rng) {
  ImageTensor out = img;
  if (sigma == 0.0) return out;
  for (float& v : out.storage()) {
    v = static_cast<float>(clamp_pixel(v + sigma * rng.normal()));
  }
  return out;
}

template <typename Fn>
ImageTensor in_hsi(const ImageTensor& img, Fn&& fn) {
  HsiImage hsi = rgb_to_hsi(img);
  for (int y = 0; y < hsi.height(); ++y) {
    for (int x = 0; x < hsi.width(); ++x) fn(hsi, y, x);
  }
  return hsi_to_rgb(hsi);
}

ImageTensor pepper(const ImageTensor& img, double p, PepperMode mode, NoiseStream& rng) {
  ImageTensor out = img;
  const int c = img.channels();
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      float* px = out.pixel(y, x);
      if (mode == PepperMode::kPerPixel) {
        if (rng.bernoulli(p)) std::fill(px, px + c, 0.0f);
      } else {
        for (int ch = 0; ch < c; ++ch) {
          if (rng.bernoulli(p)) px[ch] = 0.0f;
        }
      }
    }
  }
  return out;
}

}  // namespace

std::string_view kind_name(PerturbationKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<PerturbationKind> parse_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

std::string_view pepper_mode_name(PepperMode mode) {
  return mode == PepperMode::kPerPixel ? "per_pixel" : "per_channel";
}

PerturbationSpec PerturbationSpec::gaussian_rgb(double sigma) {
  return of_kind(PerturbationKind::kGaussianRgb, sigma);
}

PerturbationSpec PerturbationSpec::pepper(double p, PepperMode mode) {
  PerturbationSpec s = of_kind(PerturbationKind::kPepper, p);
  s.pepper_mode = mode;
  return s;
}

PerturbationSpec PerturbationSpec::translation(double sigma) {
  return of_kind(PerturbationKind::kTranslation, sigma);
}

PerturbationSpec PerturbationSpec::of_kind(PerturbationKind kind, double level) {
  PerturbationSpec s;
  s.kind = kind;
  s = with_level(s, level);
  validate(s);
  return s;
}

PerturbationSpec PerturbationSpec::compose(std::vector<PerturbationSpec> children) {
  PerturbationSpec s;
  s.kind = PerturbationKind::kCompose;
  s.children = std::move(children);
  validate(s);
  return s;
}

void validate(const PerturbationSpec& spec) {
  if (!std::isfinite(spec.sigma) || spec.sigma < 0.0) {
    throw std::invalid_argument("sigma must be finite and nonnegative");
  }
  if (!(spec.p >= 0.0 && spec.p <= 1.0)) {
    throw std::invalid_argument("p must lie in [0, 1]");
  }
  if (spec.kind != PerturbationKind::kCompose && !spec.children.empty()) {
    throw std::invalid_argument("only compose specs take children");
  }
  for (const auto& child : spec.children) validate(child);
}

bool is_stochastic(const PerturbationSpec& spec) {
  switch (spec.kind) {
    case PerturbationKind::kRotate90:
    case PerturbationKind::kFlipUd:
    case PerturbationKind::kFlipLr:
      return false;
    case PerturbationKind::kCompose:
      return std::any_of(spec.children.begin(), spec.children.end(),
                         [](const PerturbationSpec& c) { return is_stochastic(c); });
    default:
      return true;
  }
}

bool has_level(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::kRotate90:
    case PerturbationKind::kFlipUd:
    case PerturbationKind::kFlipLr:
    case PerturbationKind::kCompose:
      return false;
    default:
      return true;
  }
}

double level_of(const PerturbationSpec& spec) {
  if (!has_level(spec.kind)) return 0.0;
  return spec.kind == PerturbationKind::kPepper ? spec.p : spec.sigma;
}

PerturbationSpec with_level(const PerturbationSpec& spec, double level) {
  PerturbationSpec out = spec;
  if (!has_level(spec.kind)) return out;
  if (spec.kind == PerturbationKind::kPepper) {
    out.p = level;
  } else {
    out.sigma = level;
  }
  return out;
}

std::string format_spec(const PerturbationSpec& spec) {
  std::string out = "kind=" + std::string(kind_name(spec.kind)) +
                    " sigma=" + detail::format_real(spec.sigma) + " p=" + detail::format_real(spec.p) +
                    " mode=" + std::string(pepper_mode_name(spec.pepper_mode));
  for (const auto& child : spec.children) {
    out += " [" + format_spec(child) + "]";
  }
  return out;
}

PerturbationSpec parse_spec(std::string_view text) {
  const auto tokens = tokenize(text);
  std::size_t pos = 0;
  PerturbationSpec spec = parse_block(tokens, pos);
  if (pos != tokens.size()) {
    throw std::invalid_argument("trailing tokens in perturbation spec");
  }
  return spec;
}

std::vector<PerturbationSpec> parse_spec_file(std::string_view text) {
  std::vector<PerturbationSpec> specs;
  std::size_t start = 0;
  int line_no = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = text.substr(start, end - start);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
      try {
        specs.push_back(parse_spec(line));
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    start = end + 1;
  }
  return specs;
}

ImageTensor flip_lr(const ImageTensor& img) {
  ImageTensor out(img.shape());
  const int c = img.channels();
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      std::copy_n(img.pixel(y, img.width() - 1 - x), c, out.pixel(y, x));
    }
  }
  return out;
}

ImageTensor flip_ud(const ImageTensor& img) {
  ImageTensor out(img.shape());
  const std::size_t row = static_cast<std::size_t>(img.width()) * img.channels();
  for (int y = 0; y < img.height(); ++y) {
    std::copy_n(img.pixel(img.height() - 1 - y, 0), row, out.pixel(y, 0));
  }
  return out;
}

ImageTensor rotate90(const ImageTensor& img) {
  const int h = img.height();
  ImageTensor out(img.width(), h, img.channels());
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      std::copy_n(img.pixel(h - 1 - x, y), img.channels(), out.pixel(y, x));
    }
  }
  return out;
}

ImageTensor translate_bilinear(const ImageTensor& img, double dx, double dy) {
  ImageTensor out(img.shape());
  const int h = img.height();
  const int w = img.width();
  const int c = img.channels();
  // Source coordinate is (x - dx, y - dy); split into integer base and weight.
  const double fy0 = std::floor(-dy);
  const double fx0 = std::floor(-dx);
  const double wy = -dy - fy0;
  const double wx = -dx - fx0;
  const int oy = static_cast<int>(fy0);
  const int ox = static_cast<int>(fx0);
  for (int y = 0; y < h; ++y) {
    const int y0 = reflect_index(y + oy, h);
    const int y1 = reflect_index(y + oy + 1, h);
    for (int x = 0; x < w; ++x) {
      const int x0 = reflect_index(x + ox, w);
      const int x1 = reflect_index(x + ox + 1, w);
      const float* p00 = img.pixel(y0, x0);
      const float* p01 = img.pixel(y0, x1);
      const float* p10 = img.pixel(y1, x0);
      const float* p11 = img.pixel(y1, x1);
      float* dst = out.pixel(y, x);
      for (int ch = 0; ch < c; ++ch) {
        const double top = (1.0 - wx) * p00[ch] + wx * p01[ch];
        const double bottom = (1.0 - wx) * p10[ch] + wx * p11[ch];
        dst[ch] = static_cast<float>((1.0 - wy) * top + wy * bottom);
      }
    }
  }
  return out;
}

ImageTensor apply_perturbation(const ImageTensor& img, const PerturbationSpec& spec, Seed seed,
                               std::uint64_t trial) {
  return apply_perturbation_keyed(img, spec, seed.trial_key(trial));
}

ImageTensor apply_perturbation_keyed(const ImageTensor& img, const PerturbationSpec& spec,
                                     std::uint64_t key) {
  validate(spec);
  if (needs_hsi(spec.kind) && img.channels() != 3) {
    throw std::invalid_argument(std::string(kind_name(spec.kind)) +
                                " requires a 3-channel image");
  }
  NoiseStream rng(key);
  const double sigma = spec.sigma;
  switch (spec.kind) {
    case PerturbationKind::kGaussianRgb:
      return add_gaussian_rgb(img, sigma, rng);
    case PerturbationKind::kGaussianIntensity:
      return in_hsi(img, [&](HsiImage& hsi, int y, int x) {
        hsi.set_intensity(y, x, hsi.intensity(y, x) + sigma * rng.normal());
      });
    case PerturbationKind::kGlobalColorShift: {
      const double delta = sigma * rng.normal();
      return in_hsi(img, [&](HsiImage& hsi, int y, int x) {
        hsi.set_hue(y, x, hsi.hue(y, x) + delta);
      });
    }
    case PerturbationKind::kLocalColorShift:
      return in_hsi(img, [&](HsiImage& hsi, int y, int x) {
        hsi.set_hue(y, x, hsi.hue(y, x) + sigma * rng.normal());
      });
    case PerturbationKind::kGaussianSaturation:
      return in_hsi(img, [&](HsiImage& hsi, int y, int x) {
        hsi.set_saturation(y, x, hsi.saturation(y, x) + sigma * rng.normal());
      });
    case PerturbationKind::kPepper:
      return pepper(img, spec.p, spec.pepper_mode, rng);
    case PerturbationKind::kTranslation: {
      const double dx = sigma * rng.normal();
      const double dy = sigma * rng.normal();
      return translate_bilinear(img, dx, dy);
    }
    case PerturbationKind::kRotate90:
      return rotate90(img);
    case PerturbationKind::kFlipUd:
      return flip_ud(img);
    case PerturbationKind::kFlipLr:
      return flip_lr(img);
    case PerturbationKind::kCompose: {
      ImageTensor out = img;
      for (std::size_t i = 0; i < spec.children.size(); ++i) {
        out = apply_perturbation_keyed(out, spec.children[i], mix(key, i));
      }
      return out;
    }
  }
  throw std::logic_error("unhandled perturbation kind");
}

}  // namespace cnnsens

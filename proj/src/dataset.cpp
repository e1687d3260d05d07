/*
 * Copyright 2026 The cfdebug Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cfdebug/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cfdebug/errors.hpp"

namespace cfdebug {
namespace {

constexpr std::array<const char*, 10> kPatternNames{
    "0_hstripes", "1_vstripes", "2_diag_up", "3_diag_down", "4_checker",
    "5_ring",     "6_disk",     "7_plus",    "8_cross",     "9_frame"};

struct PatternParams {
  double cx, cy;     // shape centre
  double period;     // stripe period
  double phase;
  double radius;
  double thickness;
};

double band(double v, double half_width) {
  return std::abs(v) <= half_width ? 1.0 : 0.0;
}

// Intensity in [0, 1] of class `cls` at pixel (x, y).
double pattern(int cls, double x, double y, const PatternParams& p) {
  const double dx = x - p.cx, dy = y - p.cy;
  const double two_pi = 6.283185307179586;
  switch (cls) {
    case 0: return 0.5 + 0.5 * std::sin(two_pi * y / p.period + p.phase);
    case 1: return 0.5 + 0.5 * std::sin(two_pi * x / p.period + p.phase);
    case 2: return 0.5 + 0.5 * std::sin(two_pi * (x + y) / (p.period * 1.414) + p.phase);
    case 3: return 0.5 + 0.5 * std::sin(two_pi * (x - y) / (p.period * 1.414) + p.phase);
    case 4: {
      const int a = static_cast<int>(std::floor((x + p.phase) / (p.period / 2.0)));
      const int b = static_cast<int>(std::floor((y + p.phase) / (p.period / 2.0)));
      return ((a + b) & 1) ? 1.0 : 0.0;
    }
    case 5: return band(std::hypot(dx, dy) - p.radius, p.thickness / 2.0);
    case 6: return std::hypot(dx, dy) <= p.radius ? 1.0 : 0.0;
    case 7: return (band(dx, p.thickness / 2.0) * band(dy, p.radius) +
                    band(dy, p.thickness / 2.0) * band(dx, p.radius)) > 0.0 ? 1.0 : 0.0;
    case 8: return (band((dx - dy) / 1.414, p.thickness / 2.0) * band(dx + dy, p.radius * 1.414) +
                    band((dx + dy) / 1.414, p.thickness / 2.0) * band(dx - dy, p.radius * 1.414)) > 0.0 ? 1.0 : 0.0;
    case 9: {
      const double m = std::max(std::abs(dx), std::abs(dy));
      return band(m - p.radius, p.thickness / 2.0);
    }
    default: return 0.0;
  }
}

double quantize(double v) {
  return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

std::string read_token(std::istream& is) {
  std::string tok;
  while (is) {
    is >> tok;
    if (!tok.empty() && tok[0] == '#') {
      std::string rest;
      std::getline(is, rest);
      tok.clear();
      continue;
    }
    break;
  }
  return tok;
}

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed) {
  if (config.per_class < 1 || config.size < 8) throw UsageError("synthetic dataset needs per_class >= 1 and size >= 8");
  Dataset ds;
  ds.channels = 1;
  ds.height = ds.width = config.size;
  ds.class_names.assign(kPatternNames.begin(), kPatternNames.end());
  const int classes = static_cast<int>(kPatternNames.size());
  const double S = config.size;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw_params = [&]() {
    PatternParams p;
    p.cx = S / 2.0 - 0.5 + (unit(rng) - 0.5) * S * 0.35;
    p.cy = S / 2.0 - 0.5 + (unit(rng) - 0.5) * S * 0.35;
    p.period = S * (0.22 + 0.12 * unit(rng));
    p.phase = unit(rng) * 6.283185307179586;
    p.radius = S * (0.18 + 0.12 * unit(rng));
    p.thickness = 1.2 + 1.3 * unit(rng);
    return p;
  };

  const std::size_t plane = static_cast<std::size_t>(config.size) * config.size;
  ds.pixels.reserve(plane * classes * config.per_class);
  for (int i = 0; i < config.per_class; ++i) {
    for (int cls = 0; cls < classes; ++cls) {
      const PatternParams main = draw_params();
      const PatternParams other = draw_params();
      int distractor = static_cast<int>(unit(rng) * (classes - 1));
      if (distractor >= cls) ++distractor;
      const double contrast = config.min_contrast + (config.max_contrast - config.min_contrast) * unit(rng);
      const double background = 0.05 + 0.3 * unit(rng);
      const double alpha = config.distractor_alpha * unit(rng);
      for (int y = 0; y < config.size; ++y) {
        for (int x = 0; x < config.size; ++x) {
          double v = background + contrast * pattern(cls, x, y, main);
          v += alpha * contrast * pattern(distractor, x, y, other);
          v += config.noise * gauss(rng);
          ds.pixels.push_back(quantize(v));
        }
      }
      ds.labels.push_back(cls);
      ds.image_ids.push_back(fmt::format("{}/{:05d}.pgm", kPatternNames[cls], i));
    }
  }
  return ds;
}

std::vector<double> read_pgm(const std::filesystem::path& path, int& width, int& height) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(fmt::format("cannot open {}", path.string()));
  if (read_token(is) != "P5") throw FormatError(fmt::format("{} is not a binary PGM", path.string()));
  try {
    width = std::stoi(read_token(is));
    height = std::stoi(read_token(is));
    const int maxval = std::stoi(read_token(is));
    if (width < 1 || height < 1 || maxval != 255) throw FormatError("unsupported PGM header");
  } catch (const std::logic_error&) {
    throw FormatError(fmt::format("{} has a malformed PGM header", path.string()));
  }
  is.get();
  std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!is) throw FormatError(fmt::format("{} is truncated", path.string()));
  std::vector<double> pixels(raw.size());
  std::transform(raw.begin(), raw.end(), pixels.begin(), [](unsigned char c) { return c / 255.0; });
  return pixels;
}

void write_pgm(const std::filesystem::path& path, std::span<const double> pixels, int width, int height) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError(fmt::format("cannot write {}", path.string()));
  os << "P5\n" << width << " " << height << "\n255\n";
  for (double v : pixels) os.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
}

void write_ppm(const std::filesystem::path& path, std::span<const double> rgb, int width, int height) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError(fmt::format("cannot write {}", path.string()));
  os << "P6\n" << width << " " << height << "\n255\n";
  for (double v : rgb) os.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
}

Dataset load_image_dir(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw UsageError(fmt::format("dataset directory {} does not exist", root.string()));
  Dataset ds;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) ds.class_names.push_back(entry.path().filename().string());
  }
  std::sort(ds.class_names.begin(), ds.class_names.end());
  if (ds.class_names.empty()) throw UsageError(fmt::format("dataset {} has no class directories", root.string()));

  for (std::size_t cls = 0; cls < ds.class_names.size(); ++cls) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(root / ds.class_names[cls])) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::size_t loaded = 0;
    for (const auto& file : files) {
      int w = 0, h = 0;
      std::vector<double> px;
      try {
        px = read_pgm(file, w, h);
      } catch (const FormatError& e) {
        spdlog::warn("skipping unreadable image {}: {}", file.string(), e.what());
        continue;
      }
      if (ds.height == 0) {
        ds.height = h;
        ds.width = w;
      } else if (h != ds.height || w != ds.width) {
        spdlog::warn("skipping {}: size {}x{} differs from {}x{}", file.string(), w, h, ds.width, ds.height);
        continue;
      }
      ds.pixels.insert(ds.pixels.end(), px.begin(), px.end());
      ds.labels.push_back(static_cast<int>(cls));
      ds.image_ids.push_back(ds.class_names[cls] + "/" + file.filename().string());
      ++loaded;
    }
    if (loaded == 0) throw UsageError(fmt::format("class directory {} contains no readable images", ds.class_names[cls]));
  }
  return ds;
}

void write_image_dir(const Dataset& dataset, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (dataset.channels != 1) throw UsageError("only single-channel datasets can be written as PGM");
  for (const auto& name : dataset.class_names) fs::create_directories(root / name);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    write_pgm(root / dataset.image_ids[i], dataset.image(i), dataset.width, dataset.height);
  }
}

}  // namespace cfdebug

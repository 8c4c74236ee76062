#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "samae/common.hpp"
#include "samae/dataset.hpp"
#include "samae/masks.hpp"
#include "samae/morphable.hpp"

namespace samae::testing {

inline Mask random_mask(Rng& rng, int h, int w, double p = 0.5) {
  Mask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(y, x, rng.uniform() < p);
  return m;
}

inline Image random_image(Rng& rng, int c, int h, int w, double lo = 0.0, double hi = 1.0) {
  Image im(c, h, w);
  for (auto& v : im.data) v = static_cast<float>(rng.uniform(lo, hi));
  return im;
}

inline MorphableParams random_params(const MeshAsset& asset, Rng& rng, double spread = 1.0) {
  MorphableParams p = default_params(asset);
  for (auto& a : p.alpha) a = spread * rng.truncated_normal(2.5);
  for (auto& b : p.beta) b = spread * rng.truncated_normal(2.5);
  for (auto& g : p.gamma) g = spread * rng.truncated_normal(2.5);
  return p;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("samae_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Small in-memory synthetic dataset, cached per (n, resolution, seed).
const Dataset& small_dataset(int n, int resolution, std::uint64_t seed = 11);

inline std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace samae::testing

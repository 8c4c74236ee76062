#include "samae/common.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <limits>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace samae {

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::truncated_normal(double bound) {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= bound) return z;
  }
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw InvalidArgument("Rng::index: empty range");
  // Rejection sampling for an unbiased draw.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v = engine_();
  while (v >= limit) v = engine_();
  return static_cast<std::size_t>(v % n);
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::deserialize(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (!is) throw InvalidArgument("Rng::deserialize: malformed state");
}

namespace {

void skip_netpbm_whitespace(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

}  // namespace

void write_netpbm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3)
    throw InvalidArgument("write_netpbm: only 1 or 3 channels supported");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot open for writing: " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << "\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> bytes(image.plane() * image.channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        bytes[(static_cast<std::size_t>(y) * image.width + x) * image.channels + c] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IOError("write failed: " + path.string());
}

Image read_netpbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open for reading: " + path.string());
  std::string magic;
  in >> magic;
  int channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw IOError("not a binary PGM/PPM file: " + path.string());
  int w = 0, h = 0, maxval = 0;
  skip_netpbm_whitespace(in);
  in >> w;
  skip_netpbm_whitespace(in);
  in >> h;
  skip_netpbm_whitespace(in);
  in >> maxval;
  in.get();
  if (!in || w <= 0 || h <= 0 || maxval != 255) throw IOError("bad netpbm header: " + path.string());
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw IOError("truncated netpbm data: " + path.string());
  Image image(channels, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        image.at(c, y, x) = bytes[(static_cast<std::size_t>(y) * w + x) * channels + c] / 255.0f;
  return image;
}

Image to_signed_range(const Image& image) {
  Image out = image;
  for (float& v : out.data) v = 2.0f * v - 1.0f;
  return out;
}

Image to_unit_range(const Image& image) {
  Image out = image;
  for (float& v : out.data) v = 0.5f * (v + 1.0f);
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IOError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace diagnostics {
namespace {
std::atomic<std::uint64_t> g_mesh_scale_calls{0};
std::atomic<std::uint64_t> g_keypoint_calls{0};
}  // namespace

std::uint64_t random_mesh_scale_calls() { return g_mesh_scale_calls.load(); }
std::uint64_t keypoint_perturbation_calls() { return g_keypoint_calls.load(); }
void count_random_mesh_scale() { ++g_mesh_scale_calls; }
void count_keypoint_perturbation() { ++g_keypoint_calls; }
void reset_counters() {
  g_mesh_scale_calls = 0;
  g_keypoint_calls = 0;
}
}  // namespace diagnostics

}  // namespace samae

#include "samae/morphable.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>

namespace samae {

static_assert(std::endian::native == std::endian::little, "asset I/O assumes a little-endian host");

namespace {

constexpr double kBaseRadiusFraction = 0.3;  // template half-width in units of W at s = 0
constexpr double kScaleStep = 0.1;
constexpr double kFaceAspect = 1.25;        // template half-height / half-width
constexpr double kNeutralAlbedoGain = 4.0;  // gamma_neu = 4 * e_0
constexpr int kGridU = 39;                  // odd, so x = 0 is a vertex column
constexpr int kGridV = 40;

using Vec3 = std::array<double, 3>;

double gauss(double x, double y, double cx, double cy, double sx, double sy) {
  const double dx = (x - cx) / sx;
  const double dy = (y - cy) / sy;
  return std::exp(-0.5 * (dx * dx + dy * dy));
}

double gauss_pair(double x, double y, double cx, double cy, double sx, double sy) {
  return gauss(x, y, cx, cy, sx, sy) + gauss(x, y, -cx, cy, sx, sy);
}

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

/// Real SH basis up to band 2 (unnormalized; constants fold into delta).
std::array<double, kNumShLighting> sh_basis(const Vec3& n) {
  const double x = n[0], y = n[1], z = n[2];
  return {1.0, y, z, x, x * y, y * z, 3.0 * z * z - 1.0, x * z, x * x - y * y};
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

template <class Range>
bool all_finite(const Range& r) {
  return std::all_of(std::begin(r), std::end(r), [](double x) { return std::isfinite(x); });
}

// Top-left rule for edges of a triangle with positive orientation in
// y-down screen space: top edges run in +x, left edges run in -y.
bool is_top_left(double ax, double ay, double bx, double by) {
  const double dx = bx - ax;
  const double dy = by - ay;
  return dy < 0.0 || (dy == 0.0 && dx > 0.0);
}

double edge(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

struct Projected {
  std::vector<std::array<double, 2>> screen;
  std::vector<double> depth;
  std::vector<Vec3> normals;
};

Projected project(const MeshAsset& asset, const MorphableParams& params, int resolution) {
  const int nv = asset.num_vertices;
  std::vector<Vec3> pos(nv);
  for (int v = 0; v < nv; ++v) {
    for (int d = 0; d < 3; ++d) {
      const std::size_t row = static_cast<std::size_t>(3 * v + d);
      double p = asset.vertices[row];
      for (int k = 0; k < asset.k_alpha; ++k)
        p += static_cast<double>(asset.shape_basis[static_cast<std::size_t>(k) * 3 * nv + row]) * params.alpha[k];
      for (int k = 0; k < asset.k_beta; ++k)
        p += static_cast<double>(asset.expression_basis[static_cast<std::size_t>(k) * 3 * nv + row]) * params.beta[k];
      pos[v][d] = p;
    }
  }

  const double cp = std::cos(params.rotation[0]), sp = std::sin(params.rotation[0]);
  const double cy = std::cos(params.rotation[1]), sy = std::sin(params.rotation[1]);
  const double cr = std::cos(params.rotation[2]), sr = std::sin(params.rotation[2]);
  // R = Rz(roll) * Ry(yaw) * Rx(pitch)
  const double r[3][3] = {
      {cr * cy, cr * sy * sp - sr * cp, cr * sy * cp + sr * sp},
      {sr * cy, sr * sy * sp + cr * cp, sr * sy * cp - cr * sp},
      {-sy, cy * sp, cy * cp},
  };
  for (Vec3& p : pos) {
    const Vec3 q = p;
    for (int i = 0; i < 3; ++i) p[i] = r[i][0] * q[0] + r[i][1] * q[1] + r[i][2] * q[2];
  }

  Projected out;
  out.screen.resize(nv);
  out.depth.resize(nv);
  const double w = resolution;
  const double px_per_unit = kBaseRadiusFraction * w * (1.0 + kScaleStep * params.scale);
  for (int v = 0; v < nv; ++v) {
    out.screen[v] = {0.5 * w + 0.5 * w * params.translation[0] + px_per_unit * pos[v][0],
                     0.5 * w - 0.5 * w * params.translation[1] - px_per_unit * pos[v][1]};
    out.depth[v] = pos[v][2];
  }

  out.normals.assign(nv, Vec3{0.0, 0.0, 0.0});
  for (int t = 0; t < asset.num_triangles(); ++t) {
    const auto i0 = asset.triangles[3 * t], i1 = asset.triangles[3 * t + 1], i2 = asset.triangles[3 * t + 2];
    const Vec3 n = cross(sub(pos[i1], pos[i0]), sub(pos[i2], pos[i0]));
    for (auto i : {i0, i1, i2})
      for (int d = 0; d < 3; ++d) out.normals[i][d] += n[d];
  }
  for (Vec3& n : out.normals) {
    const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    if (len > 0.0)
      for (double& c : n) c /= len;
    else
      n = {0.0, 0.0, 1.0};
  }
  return out;
}

std::array<double, 3> vertex_albedo(const MeshAsset& asset, const MorphableParams& params, std::uint32_t v) {
  std::array<double, 3> rgb{};
  const std::size_t nrows = static_cast<std::size_t>(3) * asset.num_vertices;
  for (int c = 0; c < 3; ++c) {
    const std::size_t row = 3 * static_cast<std::size_t>(v) + c;
    double a = asset.albedo_mean[row];
    for (int k = 0; k < asset.k_gamma; ++k) {
      if (params.gamma[k] != 0.0) a += static_cast<double>(asset.albedo_basis[k * nrows + row]) * params.gamma[k];
    }
    rgb[c] = std::clamp(a, 0.0, 1.0);
  }
  return rgb;
}

struct Fragments {
  int resolution = 0;
  std::vector<std::int32_t> tri;
  std::vector<std::array<double, 3>> bary;
  std::vector<double> depth;
};

Fragments rasterize(const MeshAsset& asset, const Projected& proj, int resolution) {
  const std::size_t n = static_cast<std::size_t>(resolution) * resolution;
  Fragments f;
  f.resolution = resolution;
  f.tri.assign(n, -1);
  f.bary.assign(n, {0.0, 0.0, 0.0});
  f.depth.assign(n, -std::numeric_limits<double>::infinity());

  bool any_area = false;
  for (int t = 0; t < asset.num_triangles(); ++t) {
    std::array<std::uint32_t, 3> idx = {asset.triangles[3 * t], asset.triangles[3 * t + 1], asset.triangles[3 * t + 2]};
    auto a = proj.screen[idx[0]];
    auto b = proj.screen[idx[1]];
    auto c = proj.screen[idx[2]];
    double area = edge(a[0], a[1], b[0], b[1], c[0], c[1]);
    if (area == 0.0 || !std::isfinite(area)) continue;
    any_area = true;
    // Orientation-normalize; bary slots follow the swap.
    std::array<int, 3> slot = {0, 1, 2};
    if (area < 0.0) {
      std::swap(b, c);
      std::swap(slot[1], slot[2]);
      area = -area;
    }
    const double min_x = std::min({a[0], b[0], c[0]});
    const double max_x = std::max({a[0], b[0], c[0]});
    const double min_y = std::min({a[1], b[1], c[1]});
    const double max_y = std::max({a[1], b[1], c[1]});
    const int x0 = std::max(0, static_cast<int>(std::floor(min_x - 0.5)));
    const int x1 = std::min(resolution - 1, static_cast<int>(std::ceil(max_x - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
    const int y1 = std::min(resolution - 1, static_cast<int>(std::ceil(max_y - 0.5)));
    const bool tl_bc = is_top_left(b[0], b[1], c[0], c[1]);
    const bool tl_ca = is_top_left(c[0], c[1], a[0], a[1]);
    const bool tl_ab = is_top_left(a[0], a[1], b[0], b[1]);
    const std::array<double, 3> z = {proj.depth[idx[0]], proj.depth[idx[slot[1]]], proj.depth[idx[slot[2]]]};
    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5;
        const double w0 = edge(b[0], b[1], c[0], c[1], px, py);
        const double w1 = edge(c[0], c[1], a[0], a[1], px, py);
        const double w2 = edge(a[0], a[1], b[0], b[1], px, py);
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        if ((w0 == 0.0 && !tl_bc) || (w1 == 0.0 && !tl_ca) || (w2 == 0.0 && !tl_ab)) continue;
        const double l0 = w0 / area, l1 = w1 / area, l2 = w2 / area;
        const double d = l0 * z[0] + l1 * z[1] + l2 * z[2];
        const std::size_t p = static_cast<std::size_t>(y) * resolution + x;
        if (d > f.depth[p]) {
          f.depth[p] = d;
          f.tri[p] = t;
          std::array<double, 3> bc{};
          bc[0] = l0;
          bc[slot[1]] = l1;
          bc[slot[2]] = l2;
          f.bary[p] = bc;
        }
      }
    }
  }
  if (!any_area) throw DegenerateMesh("render: every projected triangle has zero area");
  return f;
}

/// Per-pixel (unnormalized) shading; channel count 1 (luminance) or 3.
std::vector<double> shade(const MeshAsset& asset, const MorphableParams& params, const Projected& proj,
                          const Fragments& frags, int channels) {
  const std::size_t n = frags.tri.size();
  std::vector<double> out(n * channels, 0.0);
  std::vector<std::array<double, 3>> albedo(asset.num_vertices);
  for (int v = 0; v < asset.num_vertices; ++v) albedo[v] = vertex_albedo(asset, params, static_cast<std::uint32_t>(v));
  for (std::size_t p = 0; p < n; ++p) {
    const int t = frags.tri[p];
    if (t < 0) continue;
    const auto& bc = frags.bary[p];
    Vec3 nrm{0.0, 0.0, 0.0};
    std::array<double, 3> rgb{0.0, 0.0, 0.0};
    for (int k = 0; k < 3; ++k) {
      const auto v = asset.triangles[3 * t + k];
      for (int d = 0; d < 3; ++d) {
        nrm[d] += bc[k] * proj.normals[v][d];
        rgb[d] += bc[k] * albedo[v][d];
      }
    }
    const double len = std::sqrt(nrm[0] * nrm[0] + nrm[1] * nrm[1] + nrm[2] * nrm[2]);
    if (len > 0.0)
      for (double& c : nrm) c /= len;
    const auto basis = sh_basis(nrm);
    double light = 0.0;
    for (int k = 0; k < kNumShLighting; ++k) light += params.delta[k] * basis[k];
    if (channels == 1) {
      out[p] = (0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]) * light;
    } else {
      for (int c = 0; c < 3; ++c) out[c * n + p] = rgb[c] * light;
    }
  }
  return out;
}

void check_sizes(const MeshAsset& asset, const MorphableParams& params) {
  if (static_cast<int>(params.alpha.size()) != asset.k_alpha || static_cast<int>(params.beta.size()) != asset.k_beta ||
      static_cast<int>(params.gamma.size()) != asset.k_gamma)
    throw ShapeMismatch("render: coefficient vector lengths do not match the asset bases");
}

}  // namespace

void validate(const MorphableParams& params) {
  if (!all_finite(params.alpha) || !all_finite(params.beta) || !all_finite(params.gamma) ||
      !all_finite(params.delta) || !all_finite(params.rotation) || !all_finite(params.translation) ||
      !std::isfinite(params.scale))
    throw InvalidArgument("MorphableParams: non-finite value");
  for (double a : params.rotation)
    if (std::abs(a) > std::numbers::pi) throw InvalidArgument("MorphableParams: |euler angle| > pi");
  if (1.0 + kScaleStep * params.scale <= 0.0) throw InvalidArgument("MorphableParams: non-positive face size");
}

void validate(const MeshAsset& asset) {
  const std::size_t rows = static_cast<std::size_t>(3) * asset.num_vertices;
  if (asset.num_vertices <= 0 || asset.vertices.size() != rows) throw CorruptAsset("asset: vertex array size");
  if (asset.triangles.size() % 3 != 0) throw CorruptAsset("asset: triangle array size");
  for (auto i : asset.triangles)
    if (i >= static_cast<std::uint32_t>(asset.num_vertices)) throw CorruptAsset("asset: triangle index out of range");
  if (asset.k_alpha < 0 || asset.shape_basis.size() != rows * asset.k_alpha) throw CorruptAsset("asset: shape basis");
  if (asset.k_beta < 0 || asset.expression_basis.size() != rows * asset.k_beta)
    throw CorruptAsset("asset: expression basis");
  if (asset.k_gamma < 1 || asset.albedo_basis.size() != rows * asset.k_gamma || asset.albedo_mean.size() != rows)
    throw CorruptAsset("asset: albedo model");
  for (auto i : asset.iris_vertices)
    if (i >= static_cast<std::uint32_t>(asset.num_vertices)) throw CorruptAsset("asset: iris index out of range");
  for (auto i : asset.landmark_vertices)
    if (i >= static_cast<std::uint32_t>(asset.num_vertices)) throw CorruptAsset("asset: landmark index out of range");
  if (asset.skin_labels.size() != static_cast<std::size_t>(asset.num_vertices)) throw CorruptAsset("asset: skin labels");
}

MeshAsset make_toy_asset() {
  MeshAsset a;
  a.num_vertices = kGridU * kGridV;
  a.k_alpha = a.k_beta = a.k_gamma = 8;
  const int nv = a.num_vertices;
  const std::size_t rows = static_cast<std::size_t>(3) * nv;
  a.vertices.resize(rows);
  a.shape_basis.assign(rows * a.k_alpha, 0.0f);
  a.expression_basis.assign(rows * a.k_beta, 0.0f);
  a.albedo_mean.resize(rows);
  a.albedo_basis.assign(rows * a.k_gamma, 0.0f);
  a.skin_labels.resize(nv);

  // (x, y) in the unit disk, per vertex; kept for basis construction.
  std::vector<std::array<double, 2>> uv(nv);
  for (int j = 0; j < kGridV; ++j) {
    for (int i = 0; i < kGridU; ++i) {
      const double u = -1.0 + 2.0 * i / (kGridU - 1);
      const double v = -1.0 + 2.0 * j / (kGridV - 1);
      // Square-to-disk map; mirror-symmetric in u.
      const double x = u * std::sqrt(1.0 - 0.5 * v * v);
      const double y = v * std::sqrt(1.0 - 0.5 * u * u);
      uv[j * kGridU + i] = {x, y};
    }
  }

  auto set3 = [&](std::vector<float>& dst, std::size_t col, int v, double dx, double dy, double dz) {
    dst[col * rows + 3 * v + 0] = static_cast<float>(dx);
    dst[col * rows + 3 * v + 1] = static_cast<float>(dy);
    dst[col * rows + 3 * v + 2] = static_cast<float>(dz);
  };

  for (int v = 0; v < nv; ++v) {
    const double x = uv[v][0];
    const double y = uv[v][1];
    const double env = std::sqrt(std::max(0.0, 1.0 - x * x - y * y));
    const double relief = 0.28 * gauss(x, y, 0.0, -0.05, 0.09, 0.22)     // nose ridge
                          + 0.08 * gauss(x, y, 0.0, -0.22, 0.08, 0.07)   // nose tip
                          - 0.10 * gauss_pair(x, y, 0.38, 0.28, 0.13, 0.09)  // eye sockets
                          + 0.05 * gauss_pair(x, y, 0.38, 0.45, 0.18, 0.05)  // brows
                          + 0.05 * gauss(x, y, 0.0, -0.5, 0.2, 0.07)     // lips
                          - 0.03 * gauss(x, y, 0.0, -0.5, 0.2, 0.015)    // mouth line
                          + 0.04 * gauss(x, y, 0.0, -0.82, 0.2, 0.1);    // chin
    a.vertices[3 * v + 0] = static_cast<float>(x);
    a.vertices[3 * v + 1] = static_cast<float>(kFaceAspect * y);
    a.vertices[3 * v + 2] = static_cast<float>(0.7 * env + env * relief);

    const bool eye = std::pow((std::abs(x) - 0.38) / 0.14, 2) + std::pow((y - 0.28) / 0.07, 2) <= 1.0;
    const bool mouth = std::pow(x / 0.2, 2) + std::pow((y + 0.5) / 0.06, 2) <= 1.0;
    a.skin_labels[v] = (eye || mouth) ? 0 : 1;

    std::array<double, 3> albedo = {0.86, 0.69, 0.58};
    if (eye) albedo = {0.94, 0.94, 0.92};
    if (mouth) albedo = {0.80, 0.52, 0.52};
    albedo[0] += 0.04 * gauss_pair(x, y, 0.5, -0.15, 0.15, 0.12);
    for (int c = 0; c < 3; ++c) a.albedo_mean[3 * v + c] = static_cast<float>(albedo[c]);

    const double sgn = x < 0.0 ? -1.0 : (x > 0.0 ? 1.0 : 0.0);
    const double cheeks = gauss_pair(x, y, 0.5, -0.1, 0.18, 0.15);
    const double ky = kFaceAspect;
    // Shape basis.
    set3(a.shape_basis, 0, v, 0.07 * x, 0.0, 0.0);
    set3(a.shape_basis, 1, v, 0.0, 0.07 * ky * y, 0.0);
    set3(a.shape_basis, 2, v, 0.10 * x * std::pow(std::max(0.0, -y), 2), 0.0, 0.0);
    set3(a.shape_basis, 3, v, 0.0, 0.08 * ky * std::pow(std::max(0.0, y), 2), 0.0);
    set3(a.shape_basis, 4, v, 0.04 * x * cheeks, 0.0, 0.06 * env * cheeks);
    set3(a.shape_basis, 5, v, 0.0, 0.0, 0.08 * env * gauss(x, y, 0.0, -0.05, 0.09, 0.22));
    set3(a.shape_basis, 6, v, 0.0, -0.08 * ky * std::pow(std::max(0.0, -y), 3), 0.0);
    set3(a.shape_basis, 7, v, 0.0, 0.0, 0.10 * env);
    // Expression basis.
    const double corners_l = gauss(x, y, -0.2, -0.5, 0.08, 0.06);
    const double corners_r = gauss(x, y, 0.2, -0.5, 0.08, 0.06);
    const double corners = corners_l + corners_r;
    const double lips = gauss(x, y, 0.0, -0.5, 0.25, 0.1);
    set3(a.expression_basis, 0, v, 0.0, -0.06 * gauss(x, y, 0.0, -0.68, 0.3, 0.15), 0.0);
    set3(a.expression_basis, 1, v, 0.03 * sgn * corners, 0.04 * corners, 0.0);
    set3(a.expression_basis, 2, v, 0.0, -0.04 * corners, 0.0);
    set3(a.expression_basis, 3, v, 0.0, 0.04 * gauss_pair(x, y, 0.38, 0.45, 0.2, 0.08), 0.0);
    set3(a.expression_basis, 4, v, 0.0, -0.02 * gauss_pair(x, y, 0.38, 0.45, 0.2, 0.08),
         -0.03 * gauss_pair(x, y, 0.38, 0.28, 0.13, 0.09));
    set3(a.expression_basis, 5, v, 0.0, 0.01 * cheeks, 0.04 * env * gauss_pair(x, y, 0.45, -0.2, 0.15, 0.12));
    set3(a.expression_basis, 6, v, -0.04 * x * lips, 0.0, 0.05 * gauss(x, y, 0.0, -0.5, 0.12, 0.08));
    set3(a.expression_basis, 7, v, 0.0, 0.05 * gauss(x, y, -0.38, 0.45, 0.2, 0.08), 0.0);
    // Albedo basis; column 0 reaches constant white at gamma_0 = 4 (exact:
    // every mean channel is >= 0.5, so 1 - mean is exact, and scaling by a
    // power of two is exact).
    for (int c = 0; c < 3; ++c) {
      const float mean = a.albedo_mean[3 * v + c];
      a.albedo_basis[0 * rows + 3 * v + c] = (1.0f - mean) / static_cast<float>(kNeutralAlbedoGain);
      a.albedo_basis[1 * rows + 3 * v + c] = -0.06f;
    }
    a.albedo_basis[2 * rows + 3 * v + 0] = 0.05f;
    a.albedo_basis[3 * rows + 3 * v + 1] = 0.04f;
    a.albedo_basis[4 * rows + 3 * v + 2] = 0.04f;
    a.albedo_basis[5 * rows + 3 * v + 0] = static_cast<float>(0.06 * cheeks);
    a.albedo_basis[6 * rows + 3 * v + 0] = static_cast<float>(0.06 * lips);
    a.albedo_basis[6 * rows + 3 * v + 1] = static_cast<float>(-0.04 * lips);
    a.albedo_basis[7 * rows + 3 * v + 0] = -0.02f;
    a.albedo_basis[7 * rows + 3 * v + 1] = -0.04f;
    a.albedo_basis[7 * rows + 3 * v + 2] = -0.06f;
  }

  // Two triangles per grid cell, diagonals mirrored across x = 0 so the mesh
  // is exactly symmetric. Counter-clockwise when viewed from +z.
  const int half = (kGridU - 1) / 2;
  for (int j = 0; j + 1 < kGridV; ++j) {
    for (int i = 0; i + 1 < kGridU; ++i) {
      const auto p00 = static_cast<std::uint32_t>(j * kGridU + i);
      const auto p10 = p00 + 1;
      const auto p01 = p00 + kGridU;
      const auto p11 = p01 + 1;
      if (i < half) {
        a.triangles.insert(a.triangles.end(), {p00, p10, p11, p00, p11, p01});
      } else {
        a.triangles.insert(a.triangles.end(), {p00, p10, p01, p10, p11, p01});
      }
    }
  }

  auto nearest = [&](double x, double y) {
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int v = 0; v < nv; ++v) {
      const double d = std::hypot(uv[v][0] - x, uv[v][1] - y);
      if (d < best_d) {
        best_d = d;
        best = static_cast<std::uint32_t>(v);
      }
    }
    return best;
  };
  // Mirror partner of a grid vertex: same row, column reflected.
  auto mirror = [&](std::uint32_t v) {
    const std::uint32_t row = v / kGridU, col = v % kGridU;
    return row * kGridU + (kGridU - 1 - col);
  };
  const std::uint32_t left_iris = nearest(-0.38, 0.28);
  a.iris_vertices = {left_iris, mirror(left_iris)};
  for (auto [x, y] : std::initializer_list<std::pair<double, double>>{
           {-0.38, 0.28}, {-0.55, 0.28}, {-0.38, 0.45}, {0.0, -0.22}, {-0.2, -0.5}, {-0.8, -0.4}}) {
    const auto v = nearest(x, y);
    a.landmark_vertices.push_back(v);
    a.landmark_vertices.push_back(mirror(v));
  }
  a.landmark_vertices.push_back(nearest(0.0, -0.9));
  validate(a);
  return a;
}

std::array<double, kNumShLighting> nominal_lighting() {
  return {0.75, 0.15, 0.35, 0.1, 0.0, 0.0, 0.05, 0.0, 0.0};
}

MorphableParams default_params(const MeshAsset& asset) {
  MorphableParams p;
  p.alpha.assign(asset.k_alpha, 0.0);
  p.beta.assign(asset.k_beta, 0.0);
  p.gamma.assign(asset.k_gamma, 0.0);
  p.delta = nominal_lighting();
  return p;
}

std::vector<double> neutral_albedo_coefficients(std::size_t k_gamma) {
  std::vector<double> g(k_gamma, 0.0);
  if (!g.empty()) g[0] = kNeutralAlbedoGain;
  return g;
}

MorphableParams neutralize_albedo(MorphableParams params) {
  params.gamma = neutral_albedo_coefficients(params.gamma.size());
  return params;
}

RenderOutput render(const MeshAsset& asset, const MorphableParams& params, const RenderOptions& options) {
  if (options.resolution < 8) throw InvalidArgument("render: resolution must be >= 8");
  check_sizes(asset, params);
  validate(params);
  const int res = options.resolution;
  const Projected proj = project(asset, params, res);
  const Fragments frags = rasterize(asset, proj, res);
  const int channels = options.color ? 3 : 1;
  const std::vector<double> shaded = shade(asset, params, proj, frags, channels);

  const std::size_t n = frags.tri.size();
  RenderOutput out;
  out.m_ras = Mask(res, res);
  out.depth.assign(n, std::numeric_limits<float>::infinity());
  out.triangle_ids = frags.tri;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < n; ++p) {
    if (frags.tri[p] < 0) continue;
    out.m_ras.set(static_cast<int>(p / res), static_cast<int>(p % res), true);
    out.depth[p] = static_cast<float>(frags.depth[p]);
    for (int c = 0; c < channels; ++c) {
      lo = std::min(lo, shaded[c * n + p]);
      hi = std::max(hi, shaded[c * n + p]);
    }
  }
  out.i_ras = Image(channels, res, res, 0.0f);
  const double range = hi - lo;
  const bool flat = !(range > 1e-12 * std::max(1.0, std::abs(hi)));
  for (std::size_t p = 0; p < n; ++p) {
    if (frags.tri[p] < 0) continue;
    for (int c = 0; c < channels; ++c) {
      const double v = flat ? 1.0 : (shaded[c * n + p] - lo) / range;
      out.i_ras.data[c * n + p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  for (auto v : asset.landmark_vertices) out.landmarks_px.push_back(proj.screen[v]);
  out.iris_px = {proj.screen[asset.iris_vertices[0]], proj.screen[asset.iris_vertices[1]]};
  return out;
}

Image shade_color(const MeshAsset& asset, const MorphableParams& params, const RenderOutput& raster) {
  check_sizes(asset, params);
  const int res = raster.m_ras.width();
  const Projected proj = project(asset, params, res);
  // Re-rasterize so barycentrics match exactly; rasterization is deterministic.
  const Fragments frags = rasterize(asset, proj, res);
  if (frags.tri != raster.triangle_ids) throw InvalidArgument("shade_color: raster was produced from other params");
  const std::vector<double> shaded = shade(asset, params, proj, frags, 3);
  Image out(3, res, res, 0.0f);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = static_cast<float>(std::clamp(shaded[i], 0.0, 1.0));
  return out;
}

Mask skin_mask_from_render(const MeshAsset& asset, const RenderOutput& raster) {
  const int res = raster.m_ras.width();
  Mask m(res, res);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const int t = raster.triangle_ids[static_cast<std::size_t>(y) * res + x];
      if (t < 0) continue;
      const bool skin = asset.skin_labels[asset.triangles[3 * t]] && asset.skin_labels[asset.triangles[3 * t + 1]] &&
                        asset.skin_labels[asset.triangles[3 * t + 2]];
      m.set(y, x, skin);
    }
  }
  return m;
}

Mask derive_mesh_mask(const RenderOutput& render_output) { return render_output.m_ras; }

// ---------------------------------------------------------------------------
// Asset container
// ---------------------------------------------------------------------------

namespace {

constexpr char kAssetMagic[4] = {'S', 'A', 'M', 'A'};
constexpr std::uint32_t kAssetVersion = 1;

enum class SectionType : std::uint8_t { F32 = 0, U32 = 1, U8 = 2 };

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CorruptAsset("asset: unexpected end of file");
  return v;
}

template <class T>
void put_section(std::ostream& out, const std::string& name, SectionType type, const std::vector<T>& data) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(type));
  put<std::uint64_t>(out, data.size());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(T)));
}

}  // namespace

void save_asset(const std::filesystem::path& path, const MeshAsset& asset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot open for writing: " + path.string());
  save_asset(out, asset);
  if (!out) throw IOError("write failed: " + path.string());
}

MeshAsset load_asset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open for reading: " + path.string());
  return load_asset(in);
}

void save_asset(std::ostream& out, const MeshAsset& asset) {
  validate(asset);
  out.write(kAssetMagic, 4);
  put<std::uint32_t>(out, kAssetVersion);
  put<std::uint32_t>(out, 10);
  put_section(out, "meta", SectionType::U32,
              std::vector<std::uint32_t>{static_cast<std::uint32_t>(asset.num_vertices),
                                         static_cast<std::uint32_t>(asset.k_alpha),
                                         static_cast<std::uint32_t>(asset.k_beta),
                                         static_cast<std::uint32_t>(asset.k_gamma)});
  put_section(out, "vertices", SectionType::F32, asset.vertices);
  put_section(out, "triangles", SectionType::U32, asset.triangles);
  put_section(out, "shape_basis", SectionType::F32, asset.shape_basis);
  put_section(out, "expression_basis", SectionType::F32, asset.expression_basis);
  put_section(out, "albedo_mean", SectionType::F32, asset.albedo_mean);
  put_section(out, "albedo_basis", SectionType::F32, asset.albedo_basis);
  put_section(out, "iris", SectionType::U32,
              std::vector<std::uint32_t>{asset.iris_vertices[0], asset.iris_vertices[1]});
  put_section(out, "landmarks", SectionType::U32, asset.landmark_vertices);
  put_section(out, "skin_labels", SectionType::U8, asset.skin_labels);
  if (!out) throw IOError("asset write failed");
}

MeshAsset load_asset(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kAssetMagic, 4) != 0) throw CorruptAsset("asset: bad magic");
  if (get<std::uint32_t>(in) != kAssetVersion) throw CorruptAsset("asset: unsupported version");
  const auto count = get<std::uint32_t>(in);

  MeshAsset a;
  bool have_meta = false;
  for (std::uint32_t s = 0; s < count; ++s) {
    const auto name_len = get<std::uint32_t>(in);
    if (name_len > 256) throw CorruptAsset("asset: section name too long");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto type = static_cast<SectionType>(get<std::uint8_t>(in));
    const auto n = get<std::uint64_t>(in);
    if (n > (std::uint64_t{1} << 32)) throw CorruptAsset("asset: section too large");
    auto read_vec = [&](auto& vec, SectionType expected) {
      if (type != expected) throw CorruptAsset("asset: section '" + name + "' has wrong element type");
      vec.resize(n);
      in.read(reinterpret_cast<char*>(vec.data()), static_cast<std::streamsize>(n * sizeof(vec[0])));
      if (!in) throw CorruptAsset("asset: truncated section '" + name + "'");
    };
    if (name == "meta") {
      std::vector<std::uint32_t> meta;
      read_vec(meta, SectionType::U32);
      if (meta.size() != 4) throw CorruptAsset("asset: meta section size");
      a.num_vertices = static_cast<int>(meta[0]);
      a.k_alpha = static_cast<int>(meta[1]);
      a.k_beta = static_cast<int>(meta[2]);
      a.k_gamma = static_cast<int>(meta[3]);
      have_meta = true;
    } else if (name == "vertices") {
      read_vec(a.vertices, SectionType::F32);
    } else if (name == "triangles") {
      read_vec(a.triangles, SectionType::U32);
    } else if (name == "shape_basis") {
      read_vec(a.shape_basis, SectionType::F32);
    } else if (name == "expression_basis") {
      read_vec(a.expression_basis, SectionType::F32);
    } else if (name == "albedo_mean") {
      read_vec(a.albedo_mean, SectionType::F32);
    } else if (name == "albedo_basis") {
      read_vec(a.albedo_basis, SectionType::F32);
    } else if (name == "iris") {
      std::vector<std::uint32_t> iris;
      read_vec(iris, SectionType::U32);
      if (iris.size() != 2) throw CorruptAsset("asset: iris section size");
      a.iris_vertices = {iris[0], iris[1]};
    } else if (name == "landmarks") {
      read_vec(a.landmark_vertices, SectionType::U32);
    } else if (name == "skin_labels") {
      read_vec(a.skin_labels, SectionType::U8);
    } else {
      // Unknown sections are skipped so newer writers stay readable.
      const std::size_t width = type == SectionType::U8 ? 1 : 4;
      in.seekg(static_cast<std::streamoff>(n * width), std::ios::cur);
      if (!in) throw CorruptAsset("asset: truncated unknown section");
    }
  }
  if (!have_meta) throw CorruptAsset("asset: missing meta section");
  validate(a);
  return a;
}

}  // namespace samae

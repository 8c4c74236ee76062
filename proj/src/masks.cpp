#include "samae/masks.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "samae/morphable.hpp"

namespace samae {

namespace {

void require_same_shape(const Mask& a, const Mask& b, const char* op) {
  if (a.height() != b.height() || a.width() != b.width())
    throw ShapeMismatch(std::string(op) + ": mask shapes differ");
}

template <class Fn>
Mask combine(const Mask& a, const Mask& b, Fn fn) {
  Mask out(a.height(), a.width());
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) out.set(y, x, fn(a.test(y, x), b.test(y, x)));
  return out;
}

}  // namespace

Mask::Mask(int height, int width, std::uint8_t fill)
    : height_(height), width_(width), bits_(static_cast<std::size_t>(height) * width, fill ? 1 : 0) {
  if (height < 0 || width < 0) throw InvalidArgument("Mask: negative size");
}

std::size_t Mask::area() const { return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1)); }

bool Mask::contains(const Mask& other) const {
  require_same_shape(*this, other, "Mask::contains");
  for (std::size_t i = 0; i < bits_.size(); ++i)
    if (other.bits_[i] && !bits_[i]) return false;
  return true;
}

Mask unite(const Mask& a, const Mask& b) {
  require_same_shape(a, b, "unite");
  return combine(a, b, [](bool p, bool q) { return p || q; });
}

Mask subtract(const Mask& a, const Mask& b) {
  require_same_shape(a, b, "subtract");
  return combine(a, b, [](bool p, bool q) { return p && !q; });
}

Mask final_mask_basic(const Mask& m_ras, const Mask& m_occ) { return subtract(m_ras, m_occ); }

std::pair<Mask, MorphableParams> perforation_confusion_train(const Mask& m_ras, const Mask& m_occ,
                                                             const MeshAsset& asset,
                                                             const MorphableParams& params,
                                                             const AlphaPool& pool, Rng& rng) {
  if (pool.empty()) throw EmptyPool("perforation_confusion_train: alpha pool is empty");
  require_same_shape(m_ras, m_occ, "perforation_confusion_train");
  MorphableParams v_rand = neutralize_albedo(params);
  v_rand.alpha = pool[rng.index(pool.size())];
  const RenderOutput rand_render = render(asset, v_rand, m_ras.width());
  const Mask m_rand = derive_mesh_mask(rand_render);
  return {subtract(unite(m_ras, m_rand), m_occ), std::move(v_rand)};
}

Mask perforation_mask_infer(const Mask& m_ras_tgt, const Mask& m_ras_swap, const Mask& m_occ) {
  require_same_shape(m_ras_tgt, m_ras_swap, "perforation_mask_infer");
  require_same_shape(m_ras_tgt, m_occ, "perforation_mask_infer");
  return subtract(unite(m_ras_tgt, m_ras_swap), m_occ);
}

Image masked_image(const Image& image, const Mask& m) {
  if (image.height != m.height() || image.width != m.width())
    throw ShapeMismatch("masked_image: image and mask shapes differ");
  Image out = image;
  for (int c = 0; c < image.channels; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x)
        if (m.test(y, x)) out.at(c, y, x) = 0.0f;
  return out;
}

Image mask_to_image(const Mask& m) {
  Image img(1, m.height(), m.width());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) img.at(0, y, x) = m.test(y, x) ? 1.0f : 0.0f;
  return img;
}

void write_mask(const std::filesystem::path& path, const Mask& m) { write_netpbm(path, mask_to_image(m)); }

Mask read_mask(const std::filesystem::path& path) {
  const Image img = read_netpbm(path);
  if (img.channels != 1) throw IOError("mask file must be single-channel: " + path.string());
  Mask m(img.height, img.width);
  // Pixel values are k/255; threshold at byte value 128.
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) m.set(y, x, img.at(0, y, x) * 255.0f >= 127.5f);
  return m;
}

}  // namespace samae

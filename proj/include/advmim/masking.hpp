// Masked-domain construction: patch occlusion patterns, token replacement for
// the transformer path and learnable-constant fill for the CNN path.
#pragma once

#include <vector>

#include "advmim/nn.hpp"
#include "advmim/tensor.hpp"

namespace advmim {

struct PatchMask {
  int grid_h = 0;
  int grid_w = 0;
  std::vector<std::uint8_t> masked;  // grid_h*grid_w booleans
  double ratio = 0.0;

  int size() const { return grid_h * grid_w; }
  bool is_masked(int p) const { return masked[static_cast<std::size_t>(p)] != 0; }
  bool is_masked(int i, int j) const { return is_masked(i * grid_w + j); }
  int masked_count() const {
    int n = 0;
    for (auto m : masked) n += m ? 1 : 0;
    return n;
  }
  bool any() const { return masked_count() > 0; }

  static PatchMask none(int gh, int gw) {
    PatchMask pm;
    pm.grid_h = gh;
    pm.grid_w = gw;
    pm.masked.assign(static_cast<std::size_t>(gh) * gw, 0);
    pm.ratio = 0.0;
    return pm;
  }
};

// Exactly round(ratio * G) patches masked, chosen uniformly without
// replacement; rounding is half-away-from-zero.
inline PatchMask sample_patch_mask(int grid_h, int grid_w, double ratio, std::uint64_t seed) {
  if (ratio < 0.0 || ratio > 1.0) throw ConfigError("mask ratio must lie in [0,1]");
  if (grid_h < 1 || grid_w < 1) throw ConfigError("mask grid dims must be >= 1");
  PatchMask pm = PatchMask::none(grid_h, grid_w);
  pm.ratio = ratio;
  int g = grid_h * grid_w;
  int k = round_half_away(ratio * g);
  Rng rng(seed);
  for (int idx : rng.choose(g, k)) pm.masked[static_cast<std::size_t>(idx)] = 1;
  return pm;
}

// Replace masked positions of a patch-embedding sequence with the shared mask
// token; positional embeddings are added for every position. Unmasked
// positions keep their own embedding, so the output is independent of the
// pixels under masked patches.
template <typename T>
inline Tensor<T> mask_tokens_embed(const Tensor<T>& patch_embeddings, const PatchMask& pm,
                                   const Tensor<T>& token, const Tensor<T>& pos_embed) {
  int n = patch_embeddings.dim(0), d = patch_embeddings.dim(1);
  if (n != pm.size()) throw ShapeError("sequence length does not match mask grid");
  if (token.numel() != static_cast<std::size_t>(d) || pos_embed.dim(1) != d ||
      pos_embed.dim(0) != n)
    throw ShapeError("embedding dims mismatch in mask_tokens_embed");
  Tensor<T> out({n, d});
  for (int i = 0; i < n; ++i) {
    const T* src = pm.is_masked(i) ? token.data() : patch_embeddings.data() + std::size_t(i) * d;
    const T* pe = pos_embed.data() + static_cast<std::size_t>(i) * d;
    T* dst = out.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) dst[j] = src[j] + pe[j];
  }
  return out;
}

// Pixel-fill masking for the CNN path: pixels inside masked patches are set to
// a learnable per-channel constant. Image layout HWC, patch_px pixels per grid
// cell along each axis.
template <typename T>
inline Tensor<T> mask_image_fill(const Tensor<T>& image, const PatchMask& pm,
                                 const Tensor<T>& fill, int patch_px) {
  int h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (h != pm.grid_h * patch_px || w != pm.grid_w * patch_px)
    throw ShapeError("image dims do not match mask grid");
  if (fill.numel() != static_cast<std::size_t>(c))
    throw ShapeError("fill channel count mismatch");
  Tensor<T> out = image;
  for (int gi = 0; gi < pm.grid_h; ++gi)
    for (int gj = 0; gj < pm.grid_w; ++gj) {
      if (!pm.is_masked(gi, gj)) continue;
      for (int i = gi * patch_px; i < (gi + 1) * patch_px; ++i)
        for (int j = gj * patch_px; j < (gj + 1) * patch_px; ++j)
          for (int ch = 0; ch < c; ++ch) out.at(i, j, ch) = fill[static_cast<std::size_t>(ch)];
    }
  return out;
}

// Gradient of a loss w.r.t. the fill values: sum of the output gradient over
// all masked pixels, per channel.
template <typename T>
inline void mask_image_fill_backward(const Tensor<T>& d_out, const PatchMask& pm, int patch_px,
                                     Tensor<T>& d_fill) {
  int c = d_out.dim(2);
  for (int gi = 0; gi < pm.grid_h; ++gi)
    for (int gj = 0; gj < pm.grid_w; ++gj) {
      if (!pm.is_masked(gi, gj)) continue;
      for (int i = gi * patch_px; i < (gi + 1) * patch_px; ++i)
        for (int j = gj * patch_px; j < (gj + 1) * patch_px; ++j)
          for (int ch = 0; ch < c; ++ch) d_fill[static_cast<std::size_t>(ch)] += d_out.at(i, j, ch);
    }
}

}  // namespace advmim

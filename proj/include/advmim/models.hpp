// Desk-scale stand-ins for the three networks: a patch-embedding transformer
// segmenter with mask-token support, a UNet-style convolutional segmenter with
// learnable masked-pixel fill, and a five-layer least-squares discriminator.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "advmim/masking.hpp"
#include "advmim/nn.hpp"
#include "advmim/tensor.hpp"

namespace advmim {

// Per-pixel class prediction. logits/probs are HWC (class-last).
template <typename T>
struct Prediction {
  Tensor<T> logits;  // (H, W, M)
  Tensor<T> probs;   // (H, W, M), softmax over class axis

  static Prediction from_logits(Tensor<T> lg) {
    Prediction p;
    int h = lg.dim(0), w = lg.dim(1), m = lg.dim(2);
    Tensor<T> flat = lg;
    flat.shape = {h * w, m};
    Tensor<T> pr = nn::softmax_rows(flat);
    pr.shape = {h, w, m};
    p.logits = std::move(lg);
    p.probs = std::move(pr);
    return p;
  }
};

// ---------------------------------------------------------------------------
// transformer segmenter

struct TransformerConfig {
  int patch = 8;
  int dim = 48;
  int blocks = 3;
  int heads = 4;
  int mlp_ratio = 4;
  int in_ch = 1;
  int classes = 4;
  int max_grid_h = 8;  // positional table covers the full (uncropped) image
  int max_grid_w = 8;
};

template <typename T>
class TransformerSegmenter {
 public:
  TransformerConfig cfg;

  TransformerSegmenter(const TransformerConfig& c, Rng& rng) : cfg(c) {
    int d = cfg.dim;
    patch_embed_.init("S.patch_embed", cfg.patch * cfg.patch * cfg.in_ch, d, rng, 0.02);
    pos_embed_.name = "S.pos_embed";
    pos_embed_.init_shape({cfg.max_grid_h * cfg.max_grid_w, d});
    pos_embed_.decay = false;
    for (auto& v : pos_embed_.w.v) v = static_cast<T>(rng.truncated_normal(0.02));
    mask_token_.name = "S.mask_token";
    mask_token_.init_shape({d});
    mask_token_.decay = false;
    for (auto& v : mask_token_.w.v) v = static_cast<T>(rng.truncated_normal(0.02));
    blocks_.resize(static_cast<std::size_t>(cfg.blocks));
    for (int b = 0; b < cfg.blocks; ++b) {
      auto& blk = blocks_[static_cast<std::size_t>(b)];
      std::string p = "S.block" + std::to_string(b);
      blk.ln1.init(p + ".ln1", d);
      blk.qkv.init(p + ".qkv", d, 3 * d, rng, 0.02);
      blk.proj.init(p + ".proj", d, d, rng, 0.02);
      blk.ln2.init(p + ".ln2", d);
      blk.fc1.init(p + ".fc1", d, d * cfg.mlp_ratio, rng, 0.02);
      blk.fc2.init(p + ".fc2", d * cfg.mlp_ratio, d, rng, 0.02);
    }
    ln_f_.init("S.ln_f", d);
    // zero init: untrained model outputs uniform probabilities
    decoder_.init("S.decoder", d, cfg.patch * cfg.patch * cfg.classes, rng, 0.0);
  }

  void params(nn::ParamList<T>& out) {
    patch_embed_.params(out);
    out.push_back(&pos_embed_);
    out.push_back(&mask_token_);
    for (auto& b : blocks_) {
      b.ln1.params(out);
      b.qkv.params(out);
      b.proj.params(out);
      b.ln2.params(out);
      b.fc1.params(out);
      b.fc2.params(out);
    }
    ln_f_.params(out);
    decoder_.params(out);
  }

  struct BlockCache {
    Tensor<T> x_in;
    typename nn::LayerNorm<T>::Cache ln1c;
    Tensor<T> ln1_out;
    Tensor<T> qkv;         // (n, 3d)
    Tensor<T> attn;        // (heads*n, n) softmax weights
    Tensor<T> attn_out;    // (n, d) concat of heads, input to proj
    Tensor<T> x_mid;       // after first residual
    typename nn::LayerNorm<T>::Cache ln2c;
    Tensor<T> ln2_out;
    Tensor<T> fc1_pre;     // (n, mlp)
    Tensor<T> fc1_act;
  };

  struct Cache {
    int gh = 0, gw = 0, row0 = 0, col0 = 0;
    std::optional<PatchMask> mask;
    Tensor<T> patches;       // (n, patch*patch*in_ch)
    Tensor<T> embed_premask; // patch_embed output before mask replacement
    Tensor<T> x0;            // token sequence entering block 0
    std::vector<BlockCache> blk;
    typename nn::LayerNorm<T>::Cache lnfc;
    Tensor<T> lnf_out;
  };

  // image: (H, W, C) with H, W divisible by patch. row0/col0 are the patch-grid
  // coordinates of the crop inside the full image (for absolute positions).
  Prediction<T> forward(const Tensor<T>& image, Cache& c,
                        const std::optional<PatchMask>& mask = std::nullopt, int row0 = 0,
                        int col0 = 0) const {
    int h = image.dim(0), w = image.dim(1), ch = image.dim(2);
    if (h % cfg.patch != 0 || w % cfg.patch != 0)
      throw ShapeError("image dims not divisible by patch size");
    if (ch != cfg.in_ch) throw ShapeError("channel mismatch");
    int gh = h / cfg.patch, gw = w / cfg.patch, n = gh * gw, d = cfg.dim;
    if (row0 + gh > cfg.max_grid_h || col0 + gw > cfg.max_grid_w)
      throw ShapeError("crop exceeds positional table");
    if (mask && (mask->grid_h != gh || mask->grid_w != gw))
      throw ShapeError("patch mask grid mismatch");
    c.gh = gh;
    c.gw = gw;
    c.row0 = row0;
    c.col0 = col0;
    c.mask = mask;
    // patchify
    int pp = cfg.patch * cfg.patch * ch;
    c.patches = Tensor<T>({n, pp});
    for (int gi = 0; gi < gh; ++gi)
      for (int gj = 0; gj < gw; ++gj) {
        T* dst = c.patches.data() + static_cast<std::size_t>(gi * gw + gj) * pp;
        int o = 0;
        for (int i = gi * cfg.patch; i < (gi + 1) * cfg.patch; ++i)
          for (int j = gj * cfg.patch; j < (gj + 1) * cfg.patch; ++j)
            for (int cc2 = 0; cc2 < ch; ++cc2) dst[o++] = image.at(i, j, cc2);
      }
    c.embed_premask = patch_embed_.forward(c.patches);
    // token replacement + positional embedding
    c.x0 = Tensor<T>({n, d});
    for (int p = 0; p < n; ++p) {
      bool m = mask && mask->is_masked(p);
      const T* src = m ? mask_token_.w.data() : c.embed_premask.data() + std::size_t(p) * d;
      const T* pe = pos_embed_.w.data() + static_cast<std::size_t>(pos_index(p, c)) * d;
      T* dst = c.x0.data() + static_cast<std::size_t>(p) * d;
      for (int j = 0; j < d; ++j) dst[j] = src[j] + pe[j];
    }
    c.blk.resize(static_cast<std::size_t>(cfg.blocks));
    Tensor<T> x = c.x0;
    for (int b = 0; b < cfg.blocks; ++b) x = block_forward(blocks_[std::size_t(b)], x, c.blk[std::size_t(b)]);
    c.lnf_out = ln_f_.forward(x, c.lnfc);
    Tensor<T> dec = decoder_.forward(c.lnf_out);  // (n, patch*patch*M)
    // un-patchify to (H, W, M)
    Tensor<T> logits({h, w, cfg.classes});
    for (int gi = 0; gi < gh; ++gi)
      for (int gj = 0; gj < gw; ++gj) {
        const T* src = dec.data() + static_cast<std::size_t>(gi * gw + gj) * cfg.patch *
                                        cfg.patch * cfg.classes;
        int o = 0;
        for (int i = gi * cfg.patch; i < (gi + 1) * cfg.patch; ++i)
          for (int j = gj * cfg.patch; j < (gj + 1) * cfg.patch; ++j)
            for (int m2 = 0; m2 < cfg.classes; ++m2) logits.at(i, j, m2) = src[o++];
      }
    return Prediction<T>::from_logits(std::move(logits));
  }

  // d_logits: (H, W, M); accumulates parameter gradients.
  void backward(const Tensor<T>& d_logits, Cache& c) {
    int gh = c.gh, gw = c.gw, n = gh * gw, d = cfg.dim;
    Tensor<T> ddec({n, cfg.patch * cfg.patch * cfg.classes});
    for (int gi = 0; gi < gh; ++gi)
      for (int gj = 0; gj < gw; ++gj) {
        T* dst = ddec.data() + static_cast<std::size_t>(gi * gw + gj) * cfg.patch * cfg.patch *
                                   cfg.classes;
        int o = 0;
        for (int i = gi * cfg.patch; i < (gi + 1) * cfg.patch; ++i)
          for (int j = gj * cfg.patch; j < (gj + 1) * cfg.patch; ++j)
            for (int m2 = 0; m2 < cfg.classes; ++m2) dst[o++] = d_logits.at(i, j, m2);
      }
    Tensor<T> dx = decoder_.backward(c.lnf_out, ddec);
    dx = ln_f_.backward(dx, c.lnfc);
    for (int b = cfg.blocks - 1; b >= 0; --b)
      dx = block_backward(blocks_[std::size_t(b)], dx, c.blk[std::size_t(b)]);
    // split into mask-token / patch-embed / positional gradients
    Tensor<T> dembed({n, d});
    for (int p = 0; p < n; ++p) {
      bool m = c.mask && c.mask->is_masked(p);
      const T* dxi = dx.data() + static_cast<std::size_t>(p) * d;
      T* pe_g = pos_embed_.g.data() + static_cast<std::size_t>(pos_index(p, c)) * d;
      T* de = dembed.data() + static_cast<std::size_t>(p) * d;
      for (int j = 0; j < d; ++j) {
        pe_g[j] += dxi[j];
        if (m) {
          mask_token_.g[static_cast<std::size_t>(j)] += dxi[j];
          de[j] = T(0);
        } else {
          de[j] = dxi[j];
        }
      }
    }
    patch_embed_.backward(c.patches, dembed);
  }

  nn::Param<T>* mask_token() { return &mask_token_; }

 private:
  using Param = nn::Param<T>;

  struct Block {
    nn::LayerNorm<T> ln1;
    nn::Linear<T> qkv;
    nn::Linear<T> proj;
    nn::LayerNorm<T> ln2;
    nn::Linear<T> fc1;
    nn::Linear<T> fc2;
  };

  int pos_index(int p, const Cache& c) const {
    int gi = p / c.gw, gj = p % c.gw;
    return (c.row0 + gi) * cfg.max_grid_w + (c.col0 + gj);
  }

  Tensor<T> block_forward(const Block& blk, const Tensor<T>& x, BlockCache& bc) const {
    int n = x.dim(0), d = cfg.dim, hs = cfg.heads, dh = d / hs;
    T scale = T(1) / std::sqrt(T(dh));
    bc.x_in = x;
    bc.ln1_out = blk.ln1.forward(x, bc.ln1c);
    bc.qkv = blk.qkv.forward(bc.ln1_out);
    bc.attn = Tensor<T>({hs * n, n});
    bc.attn_out = Tensor<T>({n, d});
    for (int hh = 0; hh < hs; ++hh) {
      // q,k,v for head hh live at column offsets hh*dh, d+hh*dh, 2d+hh*dh
      Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> q(n, dh), k(n, dh),
          v(n, dh);
      for (int i = 0; i < n; ++i) {
        const T* row = bc.qkv.data() + static_cast<std::size_t>(i) * 3 * d;
        for (int j = 0; j < dh; ++j) {
          q(i, j) = row[hh * dh + j];
          k(i, j) = row[d + hh * dh + j];
          v(i, j) = row[2 * d + hh * dh + j];
        }
      }
      Tensor<T> scores({n, n});
      scores.mat(n, n).noalias() = q * k.transpose() * scale;
      Tensor<T> a = nn::softmax_rows(scores);
      std::copy(a.v.begin(), a.v.end(), bc.attn.v.begin() + static_cast<std::size_t>(hh) * n * n);
      Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out =
          a.mat(n, n) * v;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < dh; ++j) bc.attn_out.at(i, hh * dh + j) = out(i, j);
    }
    Tensor<T> proj_out = blk.proj.forward(bc.attn_out);
    bc.x_mid = x;
    for (std::size_t i = 0; i < bc.x_mid.v.size(); ++i) bc.x_mid.v[i] += proj_out.v[i];
    bc.ln2_out = blk.ln2.forward(bc.x_mid, bc.ln2c);
    bc.fc1_pre = blk.fc1.forward(bc.ln2_out);
    bc.fc1_act = bc.fc1_pre;
    for (auto& vv : bc.fc1_act.v) vv = nn::gelu(vv);
    Tensor<T> mlp_out = blk.fc2.forward(bc.fc1_act);
    Tensor<T> y = bc.x_mid;
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += mlp_out.v[i];
    return y;
  }

  Tensor<T> block_backward(Block& blk, const Tensor<T>& dy, BlockCache& bc) {
    int n = dy.dim(0), d = cfg.dim, hs = cfg.heads, dh = d / hs;
    T scale = T(1) / std::sqrt(T(dh));
    // mlp branch
    Tensor<T> dmlp = blk.fc2.backward(bc.fc1_act, dy);
    for (std::size_t i = 0; i < dmlp.v.size(); ++i)
      dmlp.v[i] *= nn::gelu_grad(bc.fc1_pre.v[i]);
    Tensor<T> dln2 = blk.fc1.backward(bc.ln2_out, dmlp);
    Tensor<T> dx_mid = blk.ln2.backward(dln2, bc.ln2c);
    for (std::size_t i = 0; i < dx_mid.v.size(); ++i) dx_mid.v[i] += dy.v[i];
    // attention branch
    Tensor<T> dattn_out = blk.proj.backward(bc.attn_out, dx_mid);
    Tensor<T> dqkv({n, 3 * d});
    for (int hh = 0; hh < hs; ++hh) {
      Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> q(n, dh), k(n, dh),
          v(n, dh), dout(n, dh);
      for (int i = 0; i < n; ++i) {
        const T* row = bc.qkv.data() + static_cast<std::size_t>(i) * 3 * d;
        for (int j = 0; j < dh; ++j) {
          q(i, j) = row[hh * dh + j];
          k(i, j) = row[d + hh * dh + j];
          v(i, j) = row[2 * d + hh * dh + j];
          dout(i, j) = dattn_out.at(i, hh * dh + j);
        }
      }
      Tensor<T> a({n, n});
      std::copy(bc.attn.v.begin() + static_cast<std::size_t>(hh) * n * n,
                bc.attn.v.begin() + static_cast<std::size_t>(hh + 1) * n * n, a.v.begin());
      Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dv =
          a.mat(n, n).transpose() * dout;
      Tensor<T> da({n, n});
      da.mat(n, n).noalias() = dout * v.transpose();
      Tensor<T> ds = nn::softmax_rows_backward(a, da);
      Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dq =
          ds.mat(n, n) * k * scale;
      Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dk =
          ds.mat(n, n).transpose() * q * scale;
      for (int i = 0; i < n; ++i) {
        T* row = dqkv.data() + static_cast<std::size_t>(i) * 3 * d;
        for (int j = 0; j < dh; ++j) {
          row[hh * dh + j] = dq(i, j);
          row[d + hh * dh + j] = dk(i, j);
          row[2 * d + hh * dh + j] = dv(i, j);
        }
      }
    }
    Tensor<T> dln1 = blk.qkv.backward(bc.ln1_out, dqkv);
    Tensor<T> dx = blk.ln1.backward(dln1, bc.ln1c);
    for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += dx_mid.v[i];
    return dx;
  }

  nn::Linear<T> patch_embed_;
  Param pos_embed_;
  Param mask_token_;
  std::vector<Block> blocks_;
  nn::LayerNorm<T> ln_f_;
  nn::Linear<T> decoder_;
};

// ---------------------------------------------------------------------------
// CNN segmenter (3-level encoder-decoder with skips)

struct CnnConfig {
  int base = 8;
  int in_ch = 1;
  int classes = 4;
};

template <typename T>
class CnnSegmenter {
 public:
  CnnConfig cfg;

  CnnSegmenter(const CnnConfig& c, Rng& rng) : cfg(c) {
    int w = cfg.base;
    e1a_.init("C.e1a", cfg.in_ch, w, 3, 1, 1, rng);
    e1b_.init("C.e1b", w, w, 3, 1, 1, rng);
    e2a_.init("C.e2a", w, 2 * w, 3, 1, 1, rng);
    e2b_.init("C.e2b", 2 * w, 2 * w, 3, 1, 1, rng);
    e3a_.init("C.e3a", 2 * w, 4 * w, 3, 1, 1, rng);
    e3b_.init("C.e3b", 4 * w, 4 * w, 3, 1, 1, rng);
    ba_.init("C.ba", 4 * w, 8 * w, 3, 1, 1, rng);
    bb_.init("C.bb", 8 * w, 8 * w, 3, 1, 1, rng);
    u3_.init("C.u3", 8 * w, 4 * w, 3, 1, 1, rng);
    d3a_.init("C.d3a", 8 * w, 4 * w, 3, 1, 1, rng);
    u2_.init("C.u2", 4 * w, 2 * w, 3, 1, 1, rng);
    d2a_.init("C.d2a", 4 * w, 2 * w, 3, 1, 1, rng);
    u1_.init("C.u1", 2 * w, w, 3, 1, 1, rng);
    d1a_.init("C.d1a", 2 * w, w, 3, 1, 1, rng);
    // instance norm after every conv (the reference UNet is batch-normalized;
    // per-sample normalization keeps single-image forwards deterministic)
    n_e1a_.init("C.n_e1a", w);
    n_e1b_.init("C.n_e1b", w);
    n_e2a_.init("C.n_e2a", 2 * w);
    n_e2b_.init("C.n_e2b", 2 * w);
    n_e3a_.init("C.n_e3a", 4 * w);
    n_e3b_.init("C.n_e3b", 4 * w);
    n_ba_.init("C.n_ba", 8 * w);
    n_bb_.init("C.n_bb", 8 * w);
    n_u3_.init("C.n_u3", 4 * w);
    n_d3a_.init("C.n_d3a", 4 * w);
    n_u2_.init("C.n_u2", 2 * w);
    n_d2a_.init("C.n_d2a", 2 * w);
    n_u1_.init("C.n_u1", w);
    n_d1a_.init("C.n_d1a", w);
    head_.init("C.head", w, cfg.classes, 1, 1, 0, rng, /*zero_init=*/true);
    fill_.name = "C.mask_fill";
    fill_.init_shape({cfg.in_ch});
    fill_.decay = false;
    for (auto& v : fill_.w.v) v = T(0.5);
  }

  void params(nn::ParamList<T>& out) {
    for (auto* cv : convs()) cv->params(out);
    for (auto* in : norms()) in->params(out);
    out.push_back(&fill_);
  }

  nn::Param<T>* mask_fill() { return &fill_; }

  struct Cache {
    typename nn::Conv2d<T>::Cache e1a, e1b, e2a, e2b, e3a, e3b, ba, bb, u3, d3a, u2, d2a, u1,
        d1a, head;
    typename nn::InstanceNorm2d<T>::Cache n_e1a, n_e1b, n_e2a, n_e2b, n_e3a, n_e3b, n_ba, n_bb,
        n_u3, n_d3a, n_u2, n_d2a, n_u1, n_d1a;
    Tensor<T> e1a_pre, e1b_pre, e2a_pre, e2b_pre, e3a_pre, e3b_pre, ba_pre, bb_pre, u3_pre,
        d3a_pre, u2_pre, d2a_pre, u1_pre, d1a_pre;
    typename nn::MaxPool2<T>::Cache p1, p2, p3;
    int h = 0, w = 0;
  };

  // image: (H, W, C) HWC -> Prediction (H, W, M)
  Prediction<T> forward(const Tensor<T>& image, Cache& c) const {
    int h = image.dim(0), w = image.dim(1);
    c.h = h;
    c.w = w;
    Tensor<T> x = hwc_to_chw(image);
    auto act = [](nn::Conv2d<T> const& cv, const nn::InstanceNorm2d<T>& norm,
                  const Tensor<T>& in, typename nn::Conv2d<T>::Cache& cc,
                  typename nn::InstanceNorm2d<T>::Cache& nc, Tensor<T>& pre) {
      Tensor<T> y = norm.forward(cv.forward(in, cc), nc);
      pre = y;
      nn::relu_forward(y);
      return y;
    };
    Tensor<T> e1 = act(e1b_, n_e1b_, act(e1a_, n_e1a_, x, c.e1a, c.n_e1a, c.e1a_pre), c.e1b,
                       c.n_e1b, c.e1b_pre);
    Tensor<T> p1 = pool_.forward(e1, c.p1);
    Tensor<T> e2 = act(e2b_, n_e2b_, act(e2a_, n_e2a_, p1, c.e2a, c.n_e2a, c.e2a_pre), c.e2b,
                       c.n_e2b, c.e2b_pre);
    Tensor<T> p2 = pool_.forward(e2, c.p2);
    Tensor<T> b = act(bb_, n_bb_, act(ba_, n_ba_, p2, c.ba, c.n_ba, c.ba_pre), c.bb, c.n_bb,
                      c.bb_pre);
    Tensor<T> up2 = act(u2_, n_u2_, nn::upsample2_forward(b), c.u2, c.n_u2, c.u2_pre);
    Tensor<T> d2 = act(d2a_, n_d2a_, concat_c(up2, e2), c.d2a, c.n_d2a, c.d2a_pre);
    Tensor<T> up1 = act(u1_, n_u1_, nn::upsample2_forward(d2), c.u1, c.n_u1, c.u1_pre);
    Tensor<T> d1 = act(d1a_, n_d1a_, concat_c(up1, e1), c.d1a, c.n_d1a, c.d1a_pre);
    Tensor<T> logits_chw = head_.forward(d1, c.head);
    return Prediction<T>::from_logits(chw_to_hwc(logits_chw));
  }

  void backward(const Tensor<T>& d_logits, Cache& c) {
    Tensor<T> dl = hwc_to_chw(d_logits);
    Tensor<T> dd1 = head_.backward(dl, c.head);
    nn::relu_backward(c.d1a_pre, dd1);
    dd1 = n_d1a_.backward(dd1, c.n_d1a);
    Tensor<T> dcat1 = d1a_.backward(dd1, c.d1a);
    auto [dup1, de1_skip] = split_c(dcat1, cfg.base);
    nn::relu_backward(c.u1_pre, dup1);
    dup1 = n_u1_.backward(dup1, c.n_u1);
    Tensor<T> dd2 = nn::upsample2_backward(u1_.backward(dup1, c.u1));
    nn::relu_backward(c.d2a_pre, dd2);
    dd2 = n_d2a_.backward(dd2, c.n_d2a);
    Tensor<T> dcat2 = d2a_.backward(dd2, c.d2a);
    auto [dup2, de2_skip] = split_c(dcat2, 2 * cfg.base);
    nn::relu_backward(c.u2_pre, dup2);
    dup2 = n_u2_.backward(dup2, c.n_u2);
    Tensor<T> db = nn::upsample2_backward(u2_.backward(dup2, c.u2));
    nn::relu_backward(c.bb_pre, db);
    db = n_bb_.backward(db, c.n_bb);
    db = bb_.backward(db, c.bb);
    nn::relu_backward(c.ba_pre, db);
    db = n_ba_.backward(db, c.n_ba);
    Tensor<T> dp2 = ba_.backward(db, c.ba);
    Tensor<T> de2 = pool_.backward(dp2, c.p2);
    for (std::size_t i = 0; i < de2.v.size(); ++i) de2.v[i] += de2_skip.v[i];
    nn::relu_backward(c.e2b_pre, de2);
    de2 = n_e2b_.backward(de2, c.n_e2b);
    de2 = e2b_.backward(de2, c.e2b);
    nn::relu_backward(c.e2a_pre, de2);
    de2 = n_e2a_.backward(de2, c.n_e2a);
    Tensor<T> dp1 = e2a_.backward(de2, c.e2a);
    Tensor<T> de1 = pool_.backward(dp1, c.p1);
    for (std::size_t i = 0; i < de1.v.size(); ++i) de1.v[i] += de1_skip.v[i];
    nn::relu_backward(c.e1b_pre, de1);
    de1 = n_e1b_.backward(de1, c.n_e1b);
    de1 = e1b_.backward(de1, c.e1b);
    nn::relu_backward(c.e1a_pre, de1);
    de1 = n_e1a_.backward(de1, c.n_e1a);
    d_input_chw_ = e1a_.backward(de1, c.e1a);
  }

  // gradient w.r.t. the input image (HWC); valid after backward()
  Tensor<T> input_grad_hwc() const { return chw_to_hwc(d_input_chw_); }

  static Tensor<T> hwc_to_chw(const Tensor<T>& x) {
    int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Tensor<T> y({c, h, w});
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        for (int ch = 0; ch < c; ++ch) y.at(ch, i, j) = x.at(i, j, ch);
    return y;
  }
  static Tensor<T> chw_to_hwc(const Tensor<T>& x) {
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor<T> y({h, w, c});
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) y.at(i, j, ch) = x.at(ch, i, j);
    return y;
  }

 private:
  std::vector<nn::Conv2d<T>*> convs() {
    return {&e1a_, &e1b_, &e2a_, &e2b_, &ba_, &bb_, &u2_, &d2a_, &u1_, &d1a_, &head_};
  }

  std::vector<nn::InstanceNorm2d<T>*> norms() {
    return {&n_e1a_, &n_e1b_, &n_e2a_, &n_e2b_, &n_ba_,
            &n_bb_,  &n_u2_,  &n_d2a_, &n_u1_,  &n_d1a_};
  }

  static Tensor<T> concat_c(const Tensor<T>& a, const Tensor<T>& b) {
    int ca = a.dim(0), cb = b.dim(0), h = a.dim(1), w = a.dim(2);
    Tensor<T> y({ca + cb, h, w});
    std::copy(a.v.begin(), a.v.end(), y.v.begin());
    std::copy(b.v.begin(), b.v.end(), y.v.begin() + a.v.size());
    return y;
  }
  static std::pair<Tensor<T>, Tensor<T>> split_c(const Tensor<T>& x, int ca) {
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor<T> a({ca, h, w}), b({c - ca, h, w});
    std::copy(x.v.begin(), x.v.begin() + a.v.size(), a.v.begin());
    std::copy(x.v.begin() + a.v.size(), x.v.end(), b.v.begin());
    return {std::move(a), std::move(b)};
  }

  nn::Conv2d<T> e1a_, e1b_, e2a_, e2b_, ba_, bb_, u2_, d2a_, u1_, d1a_, head_;
  nn::InstanceNorm2d<T> n_e1a_, n_e1b_, n_e2a_, n_e2b_, n_ba_, n_bb_, n_u2_, n_d2a_, n_u1_,
      n_d1a_;
  nn::MaxPool2<T> pool_;
  nn::Param<T> fill_;
  Tensor<T> d_input_chw_;
};

// ---------------------------------------------------------------------------
// discriminator: five stride-2 convs -> global average -> scalar

struct DiscriminatorConfig {
  int in_ch = 4;  // number of classes M
  int base = 16;
};

template <typename T>
class Discriminator {
 public:
  DiscriminatorConfig cfg;

  Discriminator(const std::string& name, const DiscriminatorConfig& c, Rng& rng) : cfg(c) {
    // kernel 3 stride 2: output extent ceil(h/2) stays >= 1 for any input size
    int b = cfg.base;
    conv_[0].init(name + ".c0", cfg.in_ch, b, 3, 2, 1, rng);
    conv_[1].init(name + ".c1", b, 2 * b, 3, 2, 1, rng);
    conv_[2].init(name + ".c2", 2 * b, 4 * b, 3, 2, 1, rng);
    conv_[3].init(name + ".c3", 4 * b, 4 * b, 3, 2, 1, rng);
    conv_[4].init(name + ".c4", 4 * b, 1, 3, 2, 1, rng, /*zero_init=*/true);
  }

  void params(nn::ParamList<T>& out) {
    for (auto& cv : conv_) cv.params(out);
  }

  struct Cache {
    typename nn::Conv2d<T>::Cache cc[5];
    Tensor<T> pre[5];
    int h = 0, w = 0;
  };

  static constexpr T kSlope = T(0.2);

  // probs: (H, W, M) -> scalar
  T forward(const Tensor<T>& probs, Cache& c) const {
    if (!probs.all_finite()) throw NumericError("non-finite discriminator input");
    c.h = probs.dim(0);
    c.w = probs.dim(1);
    Tensor<T> x = CnnSegmenter<T>::hwc_to_chw(probs);
    for (int l = 0; l < 5; ++l) {
      x = conv_[l].forward(x, c.cc[l]);
      c.pre[l] = x;
      if (l < 4) nn::lrelu_forward(x, kSlope);
    }
    T sum = 0;
    for (auto& v : x.v) sum += v;
    return sum / T(x.v.size());
  }

  // d_scalar: dL/d(output). Accumulates parameter grads, returns dL/dprobs (HWC).
  Tensor<T> backward(T d_scalar, Cache& c) {
    int oh = c.cc[4].h, ow = c.cc[4].wd;
    oh = conv_[4].out_h(oh);
    ow = conv_[4].out_w(ow);
    Tensor<T> dx({1, oh, ow}, d_scalar / T(oh * ow));
    for (int l = 4; l >= 0; --l) {
      if (l < 4) nn::lrelu_backward(c.pre[l], dx, kSlope);
      dx = conv_[l].backward(dx, c.cc[l]);
    }
    return CnnSegmenter<T>::chw_to_hwc(dx);
  }

 private:
  nn::Conv2d<T> conv_[5];
};

}  // namespace advmim

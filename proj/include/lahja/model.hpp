#pragma once

// Desk-scale transformer encoder with masked-language-model pretraining and a
// CLS classification head, written directly against 64-bit dense matrices.
//
// Architecture: token embeddings + sinusoidal positional encodings, then L
// post-layer-norm blocks of {multi-head scaled dot-product attention,
// residual + layer norm, GELU feed-forward, residual + layer norm}. The MLM
// head is weight-tied to the embedding matrix plus an output bias; the
// classifier reads the CLS position. All gradients are hand-derived; AdamW
// applies decoupled weight decay to weight matrices only (biases and layer
// norms excluded). Checkpoints are versioned binary containers of named
// little-endian float64 tensors and round-trip bit-exactly.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lahja/digest.hpp"
#include "lahja/error.hpp"
#include "lahja/matrix.hpp"
#include "lahja/tokenizer.hpp"

namespace lahja::model {

using la::Mat;

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

// ---------------------------------------------------------------------------
// Deterministic RNG (splitmix64 stream)
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(uint64_t seed) : base_(seed) {}

  uint64_t next_u64() {
    return digest::splitmix64(base_ + 0x9E3779B97F4A7C15ULL * n_++);
  }
  double next_uniform() {  // [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }
  uint64_t next_below(uint64_t m) {  // [0, m)
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * m) >> 64);
  }
  double next_gaussian(double stddev) {
    const double u1 = 1.0 - next_uniform();  // (0, 1]
    const double u2 = next_uniform();
    return stddev * std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643 * u2);
  }

 private:
  uint64_t base_;
  uint64_t n_ = 0;
};

inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
  return digest::splitmix64(seed ^ digest::splitmix64(a ^ digest::splitmix64(b)));
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct EncoderConfig {
  size_t vocab = 0;
  size_t d_model = 16;
  size_t layers = 2;
  size_t heads = 2;
  size_t d_ff = 64;
  size_t max_seq_len = 128;
  size_t num_labels = 0;  // 0 = no classifier head

  static EncoderConfig desk(size_t vocab, size_t num_labels = 0) {
    return {vocab, 16, 2, 2, 64, 128, num_labels};
  }
  static EncoderConfig paper(size_t vocab, size_t num_labels = 0) {
    return {vocab, 768, 12, 12, 3072, 128, num_labels};
  }

  void validate() const {
    if (vocab <= tok::SubwordVocab::kNumSpecials)
      throw ConfigError("model: vocab must exceed the special-token count");
    if (d_model == 0 || layers == 0 || d_ff == 0 || max_seq_len < 2)
      throw ConfigError("model: d_model, layers, d_ff positive; max_seq_len >= 2");
    if (heads == 0 || d_model % heads != 0)
      throw ConfigError("model: d_model must be divisible by the head count");
    if (d_model % 2 != 0)
      throw ConfigError("model: d_model must be even for positional encoding");
  }

  // Core-architecture digest; num_labels is excluded so a pretrained
  // checkpoint loads into a classifier-headed encoder of the same trunk.
  uint64_t digest() const {
    std::string s = "v=" + std::to_string(vocab) +
                    ";d=" + std::to_string(d_model) +
                    ";L=" + std::to_string(layers) +
                    ";h=" + std::to_string(heads) +
                    ";f=" + std::to_string(d_ff) +
                    ";s=" + std::to_string(max_seq_len);
    return digest::fnv1a64(s);
  }
};

struct TrainingConfig {
  double mask_fraction = 0.15;
  size_t max_seq_len = 128;
  size_t batch_size = 8;  // desk default; paper uses 256 / 64
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double mask_prob = 0.8;    // of selected: MASK
  double random_prob = 0.1;  // of selected: random id; rest unchanged
  uint64_t steps = 0;        // pretraining target (absolute step count)
  uint64_t epochs = 3;       // fine-tuning passes
  uint64_t seed = 0;

  void validate() const {
    if (!(mask_fraction > 0.0) || mask_fraction > 1.0)
      throw ConfigError("train: mask_fraction must be in (0, 1]");
    if (max_seq_len < 2)
      throw ConfigError("train: max_seq_len must be >= 2");
    if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
    if (learning_rate < 0.0)
      throw ConfigError("train: learning_rate must be >= 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
      throw ConfigError("train: betas must be in [0, 1)");
    if (weight_decay < 0.0)
      throw ConfigError("train: weight_decay must be >= 0");
    if (mask_prob < 0.0 || random_prob < 0.0 ||
        mask_prob + random_prob > 1.0)
      throw ConfigError("train: corruption probabilities must be >= 0 and sum to <= 1");
  }
};

// ---------------------------------------------------------------------------
// Core operations
// ---------------------------------------------------------------------------

// PE[p][2i] = sin(p / 10000^(2i/d)), PE[p][2i+1] = cos(p / 10000^(2i/d))
inline Mat positional_encoding(size_t max_positions, size_t d) {
  if (d == 0 || d % 2 != 0)
    throw ConfigError("model: positional encoding dimension must be even");
  if (max_positions == 0)
    throw ConfigError("model: positional encoding needs >= 1 position");
  Mat pe(max_positions, d);
  for (size_t p = 0; p < max_positions; ++p) {
    for (size_t i = 0; i < d / 2; ++i) {
      const double denom =
          std::pow(10000.0, (2.0 * static_cast<double>(i)) / static_cast<double>(d));
      const double x = static_cast<double>(p) / denom;
      pe(p, 2 * i) = std::sin(x);
      pe(p, 2 * i + 1) = std::cos(x);
    }
  }
  return pe;
}

// Row-wise numerically stable softmax, in place.
inline void softmax_rows(Mat& m) {
  for (size_t r = 0; r < m.rows; ++r) {
    double hi = -std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < m.cols; ++c) hi = std::max(hi, m(r, c));
    double z = 0.0;
    for (size_t c = 0; c < m.cols; ++c) {
      m(r, c) = std::exp(m(r, c) - hi);
      z += m(r, c);
    }
    for (size_t c = 0; c < m.cols; ++c) m(r, c) /= z;
  }
}

// softmax(QKᵀ/√d_k)·V
inline Mat scaled_dot_attention(const Mat& Q, const Mat& K, const Mat& V,
                                Mat* probs_out = nullptr) {
  if (Q.cols != K.cols || Q.cols == 0)
    throw ValidationError("attention: Q and K must share a positive key dim");
  if (Q.rows != K.rows || K.rows != V.rows)
    throw ValidationError("attention: Q, K, V must have equal row counts");
  Mat s = la::matmul_a_bt(Q, K);
  const double scale = 1.0 / std::sqrt(static_cast<double>(Q.cols));
  for (double& x : s.a) x *= scale;
  softmax_rows(s);
  if (probs_out) *probs_out = s;
  return la::matmul(s, V);
}

struct MultiHeadParams {
  std::vector<Mat> wq, wk, wv;  // [d_model × d_head] per head
  Mat wo;                       // [d_model × d_model]
};

// Concat(head_1 … head_h)·W_O with head_i = Attention(X·W_Qi, X·W_Ki, X·W_Vi)
inline Mat multi_head_attention(const Mat& X, const MultiHeadParams& p) {
  const size_t h = p.wq.size();
  if (h == 0 || p.wk.size() != h || p.wv.size() != h)
    throw ConfigError("attention: need matching W_Q/W_K/W_V per head");
  if (X.cols % h != 0)
    throw ConfigError("attention: d_model must be divisible by head count");
  const size_t dh = X.cols / h;
  Mat concat(X.rows, X.cols);
  for (size_t i = 0; i < h; ++i) {
    if (p.wq[i].rows != X.cols || p.wq[i].cols != dh ||
        p.wk[i].rows != X.cols || p.wk[i].cols != dh ||
        p.wv[i].rows != X.cols || p.wv[i].cols != dh)
      throw ConfigError("attention: per-head projections must be d_model × d_model/h");
    const Mat head = scaled_dot_attention(
        la::matmul(X, p.wq[i]), la::matmul(X, p.wk[i]), la::matmul(X, p.wv[i]));
    for (size_t r = 0; r < X.rows; ++r)
      for (size_t c = 0; c < dh; ++c) concat(r, i * dh + c) = head(r, c);
  }
  if (p.wo.rows != X.cols || p.wo.cols != X.cols)
    throw ConfigError("attention: W_O must be d_model × d_model");
  return la::matmul(concat, p.wo);
}

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x / 1.4142135623730951));
}
inline double gelu_grad(double x) {
  const double phi_cdf = 0.5 * (1.0 + std::erf(x / 1.4142135623730951));
  const double phi_pdf =
      std::exp(-0.5 * x * x) / 2.5066282746310002;  // 1/√(2π)
  return phi_cdf + x * phi_pdf;
}

// ---------------------------------------------------------------------------
// Encoder parameters
// ---------------------------------------------------------------------------

struct Tensor {
  std::string name;
  Mat m;
  bool decay = false;  // participates in weight decay
};

class Encoder {
 public:
  Encoder(EncoderConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    pe_ = positional_encoding(cfg_.max_seq_len, cfg_.d_model);
    build(seed);
  }

  const EncoderConfig& config() const { return cfg_; }
  const Mat& pe() const { return pe_; }

  size_t tensor_count() const { return tensors_.size(); }
  Tensor& tensor(size_t i) { return tensors_[i]; }
  const Tensor& tensor(size_t i) const { return tensors_[i]; }

  Mat& param(std::string_view name) {
    return tensors_[index_of(name)].m;
  }
  const Mat& param(std::string_view name) const {
    return tensors_[index_of(name)].m;
  }
  size_t index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end())
      throw ValidationError("model: unknown tensor: " + std::string(name));
    return it->second;
  }
  bool has_param(std::string_view name) const {
    return index_.count(std::string(name)) != 0;
  }

  std::vector<Mat> zero_grads() const {
    std::vector<Mat> g;
    g.reserve(tensors_.size());
    for (const auto& t : tensors_) g.emplace_back(t.m.rows, t.m.cols);
    return g;
  }

 private:
  void add(const std::string& name, size_t r, size_t c, bool decay,
           int init /*0=zeros, 1=ones, 2=gaussian*/, Rng& rng) {
    Tensor t{name, Mat(r, c), decay};
    if (init == 1) {
      for (double& x : t.m.a) x = 1.0;
    } else if (init == 2) {
      for (double& x : t.m.a) x = rng.next_gaussian(0.02);
    }
    index_.emplace(name, tensors_.size());
    tensors_.push_back(std::move(t));
  }

  void build(uint64_t seed) {
    Rng rng(seed);
    const size_t d = cfg_.d_model;
    const size_t dh = d / cfg_.heads;
    add("embed", cfg_.vocab, d, true, 2, rng);
    add("mlm_bias", 1, cfg_.vocab, false, 0, rng);
    for (size_t l = 0; l < cfg_.layers; ++l) {
      const std::string p = "l" + std::to_string(l) + ".";
      for (size_t h = 0; h < cfg_.heads; ++h) {
        const std::string hs = std::to_string(h);
        add(p + "attn.q" + hs, d, dh, true, 2, rng);
        add(p + "attn.k" + hs, d, dh, true, 2, rng);
        add(p + "attn.v" + hs, d, dh, true, 2, rng);
      }
      add(p + "attn.out", d, d, true, 2, rng);
      add(p + "ln1.scale", 1, d, false, 1, rng);
      add(p + "ln1.shift", 1, d, false, 0, rng);
      add(p + "ffn.w1", d, cfg_.d_ff, true, 2, rng);
      add(p + "ffn.b1", 1, cfg_.d_ff, false, 0, rng);
      add(p + "ffn.w2", cfg_.d_ff, d, true, 2, rng);
      add(p + "ffn.b2", 1, d, false, 0, rng);
      add(p + "ln2.scale", 1, d, false, 1, rng);
      add(p + "ln2.shift", 1, d, false, 0, rng);
    }
    if (cfg_.num_labels > 0) {
      add("cls.weight", d, cfg_.num_labels, true, 2, rng);
      add("cls.bias", 1, cfg_.num_labels, false, 0, rng);
    }
  }

  EncoderConfig cfg_;
  Mat pe_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, size_t> index_;
};

// ---------------------------------------------------------------------------
// Forward pass (with cache for the backward pass)
// ---------------------------------------------------------------------------

namespace detail {

constexpr double kLnEps = 1e-12;

struct LnCache {
  Mat xhat;
  std::vector<double> inv;
};

struct LayerCache {
  Mat x_in;
  std::vector<Mat> q, k, v, p;  // per head
  Mat concat;
  Mat sum1;
  LnCache ln1;
  Mat x_mid;
  Mat z1;
  Mat g;
  Mat sum2;
  LnCache ln2;
  Mat x_out;
};

struct ForwardCache {
  std::vector<int> ids;
  Mat x0;
  std::vector<LayerCache> layers;
};

inline Mat layer_norm(const Mat& x, const Mat& scale, const Mat& shift,
                      LnCache& cache) {
  Mat y(x.rows, x.cols);
  cache.xhat = Mat(x.rows, x.cols);
  cache.inv.assign(x.rows, 0.0);
  const double n = static_cast<double>(x.cols);
  for (size_t r = 0; r < x.rows; ++r) {
    double mu = 0.0;
    for (size_t c = 0; c < x.cols; ++c) mu += x(r, c);
    mu /= n;
    double var = 0.0;
    for (size_t c = 0; c < x.cols; ++c) {
      const double d = x(r, c) - mu;
      var += d * d;
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    cache.inv[r] = inv;
    for (size_t c = 0; c < x.cols; ++c) {
      const double xh = (x(r, c) - mu) * inv;
      cache.xhat(r, c) = xh;
      y(r, c) = scale(0, c) * xh + shift(0, c);
    }
  }
  return y;
}

// dy → dx; accumulates dscale/dshift.
inline Mat layer_norm_backward(const Mat& dy, const LnCache& cache,
                               const Mat& scale, Mat& dscale, Mat& dshift) {
  Mat dx(dy.rows, dy.cols);
  const double n = static_cast<double>(dy.cols);
  for (size_t r = 0; r < dy.rows; ++r) {
    double m1 = 0.0, m2 = 0.0;
    for (size_t c = 0; c < dy.cols; ++c) {
      const double dxh = dy(r, c) * scale(0, c);
      m1 += dxh;
      m2 += dxh * cache.xhat(r, c);
      dscale(0, c) += dy(r, c) * cache.xhat(r, c);
      dshift(0, c) += dy(r, c);
    }
    m1 /= n;
    m2 /= n;
    for (size_t c = 0; c < dy.cols; ++c) {
      const double dxh = dy(r, c) * scale(0, c);
      dx(r, c) = cache.inv[r] * (dxh - m1 - cache.xhat(r, c) * m2);
    }
  }
  return dx;
}

inline std::vector<int> truncated(const std::vector<int>& ids, size_t max_len,
                                  bool* truncated_flag) {
  if (ids.size() <= max_len) {
    if (truncated_flag) *truncated_flag = false;
    return ids;
  }
  if (truncated_flag) *truncated_flag = true;
  return std::vector<int>(ids.begin(), ids.begin() + static_cast<long>(max_len));
}

inline Mat forward(const Encoder& enc, const std::vector<int>& ids_in,
                   ForwardCache* cache, bool* truncated_flag = nullptr) {
  const auto& cfg = enc.config();
  const std::vector<int> ids =
      truncated(ids_in, cfg.max_seq_len, truncated_flag);
  if (ids.empty()) throw ValidationError("model: empty token sequence");
  for (int id : ids) {
    if (id < 0 || static_cast<size_t>(id) >= cfg.vocab)
      throw ValidationError("model: token id out of range: " +
                            std::to_string(id));
  }
  const size_t n = ids.size();
  const size_t d = cfg.d_model;
  const Mat& embed = enc.param("embed");
  Mat x(n, d);
  for (size_t t = 0; t < n; ++t) {
    const size_t row = static_cast<size_t>(ids[t]);
    for (size_t c = 0; c < d; ++c)
      x(t, c) = embed(row, c) + enc.pe()(t, c);
  }
  if (cache) {
    cache->ids = ids;
    cache->x0 = x;
    cache->layers.assign(cfg.layers, {});
  }
  const size_t dh = d / cfg.heads;
  for (size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "l" + std::to_string(l) + ".";
    LayerCache local;
    LayerCache& lc = cache ? cache->layers[l] : local;
    lc.x_in = x;
    lc.q.resize(cfg.heads);
    lc.k.resize(cfg.heads);
    lc.v.resize(cfg.heads);
    lc.p.resize(cfg.heads);
    lc.concat = Mat(n, d);
    for (size_t h = 0; h < cfg.heads; ++h) {
      const std::string hs = std::to_string(h);
      lc.q[h] = la::matmul(x, enc.param(p + "attn.q" + hs));
      lc.k[h] = la::matmul(x, enc.param(p + "attn.k" + hs));
      lc.v[h] = la::matmul(x, enc.param(p + "attn.v" + hs));
      const Mat head = scaled_dot_attention(lc.q[h], lc.k[h], lc.v[h], &lc.p[h]);
      for (size_t r = 0; r < n; ++r)
        for (size_t c = 0; c < dh; ++c) lc.concat(r, h * dh + c) = head(r, c);
    }
    Mat attn = la::matmul(lc.concat, enc.param(p + "attn.out"));
    lc.sum1 = x;
    la::add_inplace(lc.sum1, attn);
    lc.x_mid = layer_norm(lc.sum1, enc.param(p + "ln1.scale"),
                          enc.param(p + "ln1.shift"), lc.ln1);
    lc.z1 = la::matmul(lc.x_mid, enc.param(p + "ffn.w1"));
    const Mat& b1 = enc.param(p + "ffn.b1");
    for (size_t r = 0; r < n; ++r)
      for (size_t c = 0; c < cfg.d_ff; ++c) lc.z1(r, c) += b1(0, c);
    lc.g = Mat(n, cfg.d_ff);
    for (size_t i = 0; i < lc.z1.a.size(); ++i) lc.g.a[i] = gelu(lc.z1.a[i]);
    Mat ffn = la::matmul(lc.g, enc.param(p + "ffn.w2"));
    const Mat& b2 = enc.param(p + "ffn.b2");
    for (size_t r = 0; r < n; ++r)
      for (size_t c = 0; c < d; ++c) ffn(r, c) += b2(0, c);
    lc.sum2 = lc.x_mid;
    la::add_inplace(lc.sum2, ffn);
    lc.x_out = layer_norm(lc.sum2, enc.param(p + "ln2.scale"),
                          enc.param(p + "ln2.shift"), lc.ln2);
    x = lc.x_out;
  }
  return x;
}

// Backward through the encoder stack given d(hidden); accumulates into grads.
inline void backward(const Encoder& enc, const ForwardCache& cache, Mat dx,
                     std::vector<Mat>& grads) {
  const auto& cfg = enc.config();
  const size_t n = cache.ids.size();
  const size_t d = cfg.d_model;
  const size_t dh = d / cfg.heads;
  for (size_t l = cfg.layers; l-- > 0;) {
    const std::string p = "l" + std::to_string(l) + ".";
    const LayerCache& lc = cache.layers[l];
    // ln2
    Mat dsum2 = layer_norm_backward(
        dx, lc.ln2, enc.param(p + "ln2.scale"),
        grads[enc.index_of(p + "ln2.scale")], grads[enc.index_of(p + "ln2.shift")]);
    // ffn: sum2 = x_mid + (gelu(x_mid·w1 + b1)·w2 + b2)
    Mat dg = la::matmul_a_bt(dsum2, enc.param(p + "ffn.w2"));
    la::add_inplace(grads[enc.index_of(p + "ffn.w2")],
                    la::matmul_at_b(lc.g, dsum2));
    {
      Mat& db2 = grads[enc.index_of(p + "ffn.b2")];
      for (size_t r = 0; r < n; ++r)
        for (size_t c = 0; c < d; ++c) db2(0, c) += dsum2(r, c);
    }
    Mat dz1(n, cfg.d_ff);
    for (size_t i = 0; i < dz1.a.size(); ++i)
      dz1.a[i] = dg.a[i] * gelu_grad(lc.z1.a[i]);
    Mat dx_mid = la::matmul_a_bt(dz1, enc.param(p + "ffn.w1"));
    la::add_inplace(grads[enc.index_of(p + "ffn.w1")],
                    la::matmul_at_b(lc.x_mid, dz1));
    {
      Mat& db1 = grads[enc.index_of(p + "ffn.b1")];
      for (size_t r = 0; r < n; ++r)
        for (size_t c = 0; c < cfg.d_ff; ++c) db1(0, c) += dz1(r, c);
    }
    la::add_inplace(dx_mid, dsum2);  // residual
    // ln1
    Mat dsum1 = layer_norm_backward(
        dx_mid, lc.ln1, enc.param(p + "ln1.scale"),
        grads[enc.index_of(p + "ln1.scale")], grads[enc.index_of(p + "ln1.shift")]);
    // attention: sum1 = x_in + concat·wo
    Mat dconcat = la::matmul_a_bt(dsum1, enc.param(p + "attn.out"));
    la::add_inplace(grads[enc.index_of(p + "attn.out")],
                    la::matmul_at_b(lc.concat, dsum1));
    Mat dx_in = dsum1;  // residual path
    for (size_t h = 0; h < cfg.heads; ++h) {
      const std::string hs = std::to_string(h);
      Mat dhead(n, dh);
      for (size_t r = 0; r < n; ++r)
        for (size_t c = 0; c < dh; ++c) dhead(r, c) = dconcat(r, h * dh + c);
      // head = P·V
      Mat dp = la::matmul_a_bt(dhead, lc.v[h]);
      Mat dv = la::matmul_at_b(lc.p[h], dhead);
      // softmax rows
      Mat ds(n, n);
      for (size_t r = 0; r < n; ++r) {
        double dot = 0.0;
        for (size_t c = 0; c < n; ++c) dot += dp(r, c) * lc.p[h](r, c);
        for (size_t c = 0; c < n; ++c)
          ds(r, c) = lc.p[h](r, c) * (dp(r, c) - dot);
      }
      const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
      for (double& x : ds.a) x *= scale;
      Mat dq = la::matmul(ds, lc.k[h]);
      Mat dk = la::matmul_at_b(ds, lc.q[h]);
      la::add_inplace(grads[enc.index_of(p + "attn.q" + hs)],
                      la::matmul_at_b(lc.x_in, dq));
      la::add_inplace(grads[enc.index_of(p + "attn.k" + hs)],
                      la::matmul_at_b(lc.x_in, dk));
      la::add_inplace(grads[enc.index_of(p + "attn.v" + hs)],
                      la::matmul_at_b(lc.x_in, dv));
      la::add_inplace(dx_in, la::matmul_a_bt(dq, enc.param(p + "attn.q" + hs)));
      la::add_inplace(dx_in, la::matmul_a_bt(dk, enc.param(p + "attn.k" + hs)));
      la::add_inplace(dx_in, la::matmul_a_bt(dv, enc.param(p + "attn.v" + hs)));
    }
    dx = std::move(dx_in);
  }
  // embeddings (positional table is a constant)
  Mat& dembed = grads[enc.index_of("embed")];
  for (size_t t = 0; t < n; ++t) {
    const size_t row = static_cast<size_t>(cache.ids[t]);
    for (size_t c = 0; c < d; ++c) dembed(row, c) += dx(t, c);
  }
}

}  // namespace detail

// Hidden states [seq × d_model]; overlong input is truncated to max_seq_len.
inline Mat encoder_forward(const Encoder& enc, const std::vector<int>& ids,
                           bool* truncated = nullptr) {
  return detail::forward(enc, ids, nullptr, truncated);
}

// ---------------------------------------------------------------------------
// MLM corruption and losses
// ---------------------------------------------------------------------------

struct MlmExample {
  std::vector<int> ids;     // corrupted input
  std::vector<int> labels;  // original id at selected positions, else -1
};

// Selects ceil(mask_fraction · maskable) positions uniformly without
// replacement; 80/10/10 (configurable) mask/random/keep. Returns nothing when
// the sequence has no maskable (non-special) position.
inline std::optional<MlmExample> mlm_corrupt(const std::vector<int>& ids,
                                             const TrainingConfig& cfg,
                                             uint64_t seed,
                                             size_t vocab_size) {
  cfg.validate();
  std::vector<size_t> maskable;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= tok::SubwordVocab::kNumSpecials) maskable.push_back(i);
  }
  if (maskable.empty()) return std::nullopt;
  const size_t k = static_cast<size_t>(std::ceil(
      cfg.mask_fraction * static_cast<double>(maskable.size()) - 1e-9));
  Rng rng(seed);
  for (size_t i = 0; i < k; ++i) {  // partial Fisher–Yates
    const size_t j = i + static_cast<size_t>(rng.next_below(maskable.size() - i));
    std::swap(maskable[i], maskable[j]);
  }
  std::vector<size_t> chosen(maskable.begin(),
                             maskable.begin() + static_cast<long>(k));
  std::sort(chosen.begin(), chosen.end());
  MlmExample ex;
  ex.ids = ids;
  ex.labels.assign(ids.size(), -1);
  const size_t first_real = tok::SubwordVocab::kNumSpecials;
  for (size_t pos : chosen) {
    ex.labels[pos] = ids[pos];
    const double u = rng.next_uniform();
    if (u < cfg.mask_prob) {
      ex.ids[pos] = tok::SubwordVocab::kMask;
    } else if (u < cfg.mask_prob + cfg.random_prob) {
      ex.ids[pos] = static_cast<int>(
          first_real + rng.next_below(vocab_size - first_real));
    }  // else keep original
  }
  return ex;
}

// Mean cross-entropy over labeled positions of softmax(hidden·embedᵀ + bias).
inline double mlm_loss(const Mat& hidden, const std::vector<int>& labels,
                       const Encoder& enc) {
  if (hidden.rows != labels.size())
    throw ValidationError("model: hidden/label length mismatch");
  const Mat& embed = enc.param("embed");
  const Mat& bias = enc.param("mlm_bias");
  double total = 0.0;
  size_t count = 0;
  for (size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] < 0) continue;
    if (static_cast<size_t>(labels[t]) >= enc.config().vocab)
      throw ValidationError("model: MLM label out of range");
    double hi = -std::numeric_limits<double>::infinity();
    std::vector<double> logits(enc.config().vocab);
    for (size_t v = 0; v < enc.config().vocab; ++v) {
      double s = bias(0, v);
      for (size_t c = 0; c < hidden.cols; ++c) s += hidden(t, c) * embed(v, c);
      logits[v] = s;
      hi = std::max(hi, s);
    }
    double z = 0.0;
    for (double s : logits) z += std::exp(s - hi);
    total += -(logits[static_cast<size_t>(labels[t])] - hi - std::log(z));
    ++count;
  }
  if (count == 0)
    throw ValidationError("model: MLM loss needs >= 1 labeled position");
  return total / static_cast<double>(count);
}

namespace detail {

// Shared MLM batch pass. When grads is non-null the full backward runs.
inline double mlm_batch(const Encoder& enc,
                        const std::vector<MlmExample>& batch,
                        std::vector<Mat>* grads) {
  if (batch.empty()) throw ValidationError("model: empty batch");
  const auto& cfg = enc.config();
  const Mat& embed = enc.param("embed");
  const Mat& bias = enc.param("mlm_bias");
  size_t total_labeled = 0;
  for (const auto& ex : batch) {
    if (ex.ids.size() != ex.labels.size())
      throw ValidationError("model: ids/labels length mismatch");
    for (size_t t = 0; t < std::min(ex.labels.size(), cfg.max_seq_len); ++t)
      if (ex.labels[t] >= 0) ++total_labeled;
  }
  if (total_labeled == 0)
    throw ValidationError("model: MLM batch has no labeled positions");
  double loss = 0.0;
  for (const auto& ex : batch) {
    ForwardCache cache;
    const Mat hidden = forward(enc, ex.ids, grads ? &cache : nullptr);
    const size_t n = hidden.rows;
    Mat dhidden(n, cfg.d_model);
    for (size_t t = 0; t < n; ++t) {
      if (ex.labels[t] < 0) continue;
      const size_t gold = static_cast<size_t>(ex.labels[t]);
      if (gold >= cfg.vocab)
        throw ValidationError("model: MLM label out of range");
      std::vector<double> logits(cfg.vocab);
      double hi = -std::numeric_limits<double>::infinity();
      for (size_t v = 0; v < cfg.vocab; ++v) {
        double s = bias(0, v);
        for (size_t c = 0; c < cfg.d_model; ++c)
          s += hidden(t, c) * embed(v, c);
        logits[v] = s;
        hi = std::max(hi, s);
      }
      double z = 0.0;
      for (double& s : logits) {
        s = std::exp(s - hi);
        z += s;
      }
      loss += -std::log(logits[gold] / z);
      if (grads) {
        const double inv = 1.0 / static_cast<double>(total_labeled);
        Mat& dembed = (*grads)[enc.index_of("embed")];
        Mat& dbias = (*grads)[enc.index_of("mlm_bias")];
        for (size_t v = 0; v < cfg.vocab; ++v) {
          const double dlogit =
              (logits[v] / z - (v == gold ? 1.0 : 0.0)) * inv;
          dbias(0, v) += dlogit;
          for (size_t c = 0; c < cfg.d_model; ++c) {
            dhidden(t, c) += dlogit * embed(v, c);
            dembed(v, c) += dlogit * hidden(t, c);
          }
        }
      }
    }
    if (grads) backward(enc, cache, std::move(dhidden), *grads);
  }
  return loss / static_cast<double>(total_labeled);
}

}  // namespace detail

inline double mlm_batch_loss(const Encoder& enc,
                             const std::vector<MlmExample>& batch) {
  return detail::mlm_batch(enc, batch, nullptr);
}

inline double mlm_batch_grad(const Encoder& enc,
                             const std::vector<MlmExample>& batch,
                             std::vector<Mat>& grads) {
  return detail::mlm_batch(enc, batch, &grads);
}

// ---------------------------------------------------------------------------
// Classification loss (CLS position)
// ---------------------------------------------------------------------------

struct ClsExample {
  std::vector<int> ids;
  int label = 0;
};

namespace detail {

inline double cls_batch(const Encoder& enc,
                        const std::vector<ClsExample>& batch,
                        std::vector<Mat>* grads) {
  if (batch.empty()) throw ValidationError("model: empty batch");
  const auto& cfg = enc.config();
  if (cfg.num_labels < 2)
    throw ConfigError("model: classifier needs >= 2 labels");
  const Mat& w = enc.param("cls.weight");
  const Mat& b = enc.param("cls.bias");
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    if (ex.label < 0 || static_cast<size_t>(ex.label) >= cfg.num_labels)
      throw ValidationError("model: class label out of range: " +
                            std::to_string(ex.label));
    ForwardCache cache;
    const Mat hidden = forward(enc, ex.ids, grads ? &cache : nullptr);
    std::vector<double> logits(cfg.num_labels);
    double hi = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < cfg.num_labels; ++j) {
      double s = b(0, j);
      for (size_t c = 0; c < cfg.d_model; ++c) s += hidden(0, c) * w(c, j);
      logits[j] = s;
      hi = std::max(hi, s);
    }
    double z = 0.0;
    for (double& s : logits) {
      s = std::exp(s - hi);
      z += s;
    }
    loss += -std::log(logits[static_cast<size_t>(ex.label)] / z);
    if (grads) {
      Mat dhidden(hidden.rows, cfg.d_model);
      Mat& dw = (*grads)[enc.index_of("cls.weight")];
      Mat& db = (*grads)[enc.index_of("cls.bias")];
      for (size_t j = 0; j < cfg.num_labels; ++j) {
        const double dlogit =
            (logits[j] / z -
             (j == static_cast<size_t>(ex.label) ? 1.0 : 0.0)) *
            inv;
        db(0, j) += dlogit;
        for (size_t c = 0; c < cfg.d_model; ++c) {
          dw(c, j) += dlogit * hidden(0, c);
          dhidden(0, c) += dlogit * w(c, j);
        }
      }
      backward(enc, cache, std::move(dhidden), *grads);
    }
  }
  return loss * inv;
}

}  // namespace detail

inline double cls_batch_loss(const Encoder& enc,
                             const std::vector<ClsExample>& batch) {
  return detail::cls_batch(enc, batch, nullptr);
}

inline double cls_batch_grad(const Encoder& enc,
                             const std::vector<ClsExample>& batch,
                             std::vector<Mat>& grads) {
  return detail::cls_batch(enc, batch, &grads);
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

class AdamW {
 public:
  explicit AdamW(const TrainingConfig& cfg)
      : lr_(cfg.learning_rate),
        beta1_(cfg.beta1),
        beta2_(cfg.beta2),
        wd_(cfg.weight_decay) {}

  uint64_t steps() const { return t_; }
  void set_steps(uint64_t t) { t_ = t; }

  std::vector<Mat>& m_state() { return m_; }
  std::vector<Mat>& v_state() { return v_; }
  const std::vector<Mat>& m_state() const { return m_; }
  const std::vector<Mat>& v_state() const { return v_; }

  void step(Encoder& enc, const std::vector<Mat>& grads) {
    ensure(enc);
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < enc.tensor_count(); ++i) {
      Tensor& tns = enc.tensor(i);
      const Mat& g = grads[i];
      Mat& m = m_[i];
      Mat& v = v_[i];
      for (size_t j = 0; j < tns.m.a.size(); ++j) {
        const double gj = g.a[j];
        m.a[j] = beta1_ * m.a[j] + (1.0 - beta1_) * gj;
        v.a[j] = beta2_ * v.a[j] + (1.0 - beta2_) * gj * gj;
        const double mhat = m.a[j] / bc1;
        const double vhat = v.a[j] / bc2;
        const double w = tns.m.a[j];
        tns.m.a[j] = w - lr_ * (mhat / (std::sqrt(vhat) + kEps) +
                                (tns.decay ? wd_ * w : 0.0));
      }
    }
  }

  void ensure(const Encoder& enc) {
    if (!m_.empty()) return;
    m_ = enc.zero_grads();
    v_ = enc.zero_grads();
  }

 private:
  static constexpr double kEps = 1e-8;
  double lr_, beta1_, beta2_, wd_;
  uint64_t t_ = 0;
  std::vector<Mat> m_, v_;
};

// One optimizer step on an MLM batch; returns the batch loss.
inline double train_step(Encoder& enc, AdamW& adam,
                         const std::vector<MlmExample>& batch) {
  auto grads = enc.zero_grads();
  const double loss = mlm_batch_grad(enc, batch, grads);
  if (!std::isfinite(loss))
    throw ValidationError("model: non-finite training loss");
  adam.step(enc, grads);
  return loss;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace detail {

constexpr char kMagic[8] = {'L', 'A', 'H', 'J', 'A', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw ValidationError("checkpoint: truncated file");
  return v;
}

inline void put_tensor(std::ostream& out, const std::string& name,
                       const Mat& m) {
  put<uint32_t>(out, static_cast<uint32_t>(name.size()));
  out.write(name.data(), static_cast<long>(name.size()));
  put<uint64_t>(out, m.rows);
  put<uint64_t>(out, m.cols);
  out.write(reinterpret_cast<const char*>(m.a.data()),
            static_cast<long>(m.a.size() * sizeof(double)));
}

}  // namespace detail

struct LoadedCheckpoint {
  uint64_t config_digest = 0;
  uint64_t vocab_digest = 0;
  uint64_t step = 0;
  std::vector<std::pair<std::string, Mat>> tensors;

  const Mat* find(std::string_view name) const {
    for (const auto& [n, m] : tensors)
      if (n == name) return &m;
    return nullptr;
  }
};

inline uint64_t vocab_digest(const tok::SubwordVocab& v) {
  std::ostringstream os;
  v.save(os);
  return digest::fnv1a64(os.str());
}

inline void save_checkpoint(std::ostream& out, const Encoder& enc,
                            const AdamW* adam, uint64_t step,
                            uint64_t vocab_digest_value) {
  out.write(detail::kMagic, 8);
  detail::put<uint32_t>(out, detail::kVersion);
  detail::put<uint64_t>(out, enc.config().digest());
  detail::put<uint64_t>(out, vocab_digest_value);
  detail::put<uint64_t>(out, step);
  const bool with_adam = adam && !adam->m_state().empty();
  const uint32_t count =
      static_cast<uint32_t>(enc.tensor_count() * (with_adam ? 3 : 1));
  detail::put<uint32_t>(out, count);
  for (size_t i = 0; i < enc.tensor_count(); ++i)
    detail::put_tensor(out, enc.tensor(i).name, enc.tensor(i).m);
  if (adam) {
    const auto& m = adam->m_state();
    const auto& v = adam->v_state();
    if (!m.empty()) {
      for (size_t i = 0; i < enc.tensor_count(); ++i)
        detail::put_tensor(out, "adam.m." + enc.tensor(i).name, m[i]);
      for (size_t i = 0; i < enc.tensor_count(); ++i)
        detail::put_tensor(out, "adam.v." + enc.tensor(i).name, v[i]);
    }
  }
  if (!out) throw IoError("checkpoint: write failed");
}

inline void save_checkpoint_file(const std::string& path, const Encoder& enc,
                                 const AdamW* adam, uint64_t step,
                                 uint64_t vocab_digest_value) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot write: " + path);
  save_checkpoint(out, enc, adam, step, vocab_digest_value);
}

inline LoadedCheckpoint load_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kMagic, 8) != 0)
    throw ValidationError("checkpoint: bad magic");
  const uint32_t version = detail::get<uint32_t>(in);
  if (version != detail::kVersion)
    throw ValidationError("checkpoint: unsupported version " +
                          std::to_string(version));
  LoadedCheckpoint ck;
  ck.config_digest = detail::get<uint64_t>(in);
  ck.vocab_digest = detail::get<uint64_t>(in);
  ck.step = detail::get<uint64_t>(in);
  const uint32_t count = detail::get<uint32_t>(in);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t len = detail::get<uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw ValidationError("checkpoint: truncated file");
    const uint64_t rows = detail::get<uint64_t>(in);
    const uint64_t cols = detail::get<uint64_t>(in);
    Mat m(rows, cols);
    in.read(reinterpret_cast<char*>(m.a.data()),
            static_cast<long>(m.a.size() * sizeof(double)));
    if (!in) throw ValidationError("checkpoint: truncated tensor " + name);
    ck.tensors.emplace_back(std::move(name), std::move(m));
  }
  return ck;
}

inline LoadedCheckpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot read: " + path);
  return load_checkpoint(in);
}

// Installs checkpoint tensors into the encoder (and optimizer state into
// adam, when present in both). Unknown model tensors in the checkpoint are
// an error; encoder tensors absent from the checkpoint (a fresh classifier
// head) keep their initialization.
inline void apply_checkpoint(Encoder& enc, AdamW* adam,
                             const LoadedCheckpoint& ck,
                             uint64_t expected_vocab_digest) {
  if (ck.config_digest != enc.config().digest())
    throw ConfigError("checkpoint: model configuration mismatch");
  if (ck.vocab_digest != expected_vocab_digest)
    throw ConfigError("checkpoint: vocabulary mismatch");
  if (adam) adam->ensure(enc);
  for (const auto& [name, m] : ck.tensors) {
    std::vector<Mat>* state = nullptr;
    std::string_view pname = name;
    if (pname.rfind("adam.m.", 0) == 0) {
      if (!adam) continue;
      state = &adam->m_state();
      pname.remove_prefix(7);
    } else if (pname.rfind("adam.v.", 0) == 0) {
      if (!adam) continue;
      state = &adam->v_state();
      pname.remove_prefix(7);
    }
    if (!enc.has_param(pname))
      throw ValidationError("checkpoint: unknown tensor " + name);
    const size_t idx = enc.index_of(pname);
    Mat& dst = state ? (*state)[idx] : enc.tensor(idx).m;
    if (dst.rows != m.rows || dst.cols != m.cols)
      throw ValidationError("checkpoint: shape mismatch for " + name);
    dst = m;
  }
  if (adam) adam->set_steps(ck.step);
}

// ---------------------------------------------------------------------------
// Pretraining
// ---------------------------------------------------------------------------

struct PretrainReport {
  uint64_t steps = 0;
  size_t chunks = 0;
  uint64_t skipped_sequences = 0;
  std::vector<double> loss_history;  // one entry per step
  double final_loss = std::numeric_limits<double>::quiet_NaN();
};

// Splits each document into windows of max_seq_len−2 ids wrapped in CLS/SEP.
inline std::vector<std::vector<int>> make_chunks(
    const std::vector<std::vector<int>>& docs, size_t max_seq_len) {
  if (max_seq_len < 2)
    throw ConfigError("model: max_seq_len must be >= 2");
  const size_t window = max_seq_len - 2;
  std::vector<std::vector<int>> chunks;
  for (const auto& doc : docs) {
    for (size_t off = 0; off < doc.size(); off += std::max<size_t>(window, 1)) {
      const size_t end = std::min(doc.size(), off + window);
      if (end == off) break;
      std::vector<int> chunk;
      chunk.reserve(end - off + 2);
      chunk.push_back(tok::SubwordVocab::kCls);
      chunk.insert(chunk.end(), doc.begin() + static_cast<long>(off),
                   doc.begin() + static_cast<long>(end));
      chunk.push_back(tok::SubwordVocab::kSep);
      chunks.push_back(std::move(chunk));
      if (window == 0) break;
    }
  }
  return chunks;
}

// Runs MLM training from the optimizer's current step up to cfg.steps.
// Restarting from a checkpoint at step k and continuing is bitwise identical
// to an uninterrupted run: every random choice is keyed by (seed, epoch) or
// (seed, step, position), never by consumed generator state.
inline PretrainReport pretrain(const std::vector<std::vector<int>>& docs,
                               Encoder& enc, AdamW& adam,
                               const TrainingConfig& cfg) {
  cfg.validate();
  const auto chunks = make_chunks(docs, cfg.max_seq_len);
  if (chunks.empty())
    throw ValidationError("model: tokenized corpus has no content");
  PretrainReport rep;
  rep.chunks = chunks.size();
  const size_t batches_per_epoch =
      (chunks.size() + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<size_t> order(chunks.size());
  uint64_t cached_epoch = ~0ULL;
  for (uint64_t step = adam.steps(); step < cfg.steps; ++step) {
    const uint64_t epoch = step / batches_per_epoch;
    const size_t slot = static_cast<size_t>(step % batches_per_epoch);
    if (epoch != cached_epoch) {
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng rng(mix_seed(cfg.seed, 0xE70C5ULL, epoch));
      for (size_t i = order.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng.next_below(i));
        std::swap(order[i - 1], order[j]);
      }
      cached_epoch = epoch;
    }
    std::vector<MlmExample> batch;
    const size_t lo = slot * cfg.batch_size;
    const size_t hi = std::min(chunks.size(), lo + cfg.batch_size);
    for (size_t i = lo; i < hi; ++i) {
      auto ex = mlm_corrupt(chunks[order[i]], cfg,
                            mix_seed(cfg.seed, step, i - lo),
                            enc.config().vocab);
      if (ex) {
        batch.push_back(std::move(*ex));
      } else {
        ++rep.skipped_sequences;
      }
    }
    double loss = std::numeric_limits<double>::quiet_NaN();
    if (!batch.empty()) {
      loss = train_step(enc, adam, batch);
    } else {
      adam.set_steps(adam.steps() + 1);  // step consumed, no update possible
    }
    rep.loss_history.push_back(loss);
    rep.final_loss = loss;
    ++rep.steps;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Fine-tuning and prediction
// ---------------------------------------------------------------------------

struct FinetuneReport {
  std::vector<double> epoch_loss;
  uint64_t steps = 0;
};

inline std::vector<int> classification_ids(std::string_view text,
                                           const tok::SubwordVocab& vocab,
                                           size_t max_seq_len) {
  std::vector<int> ids = tok::encode(text, vocab);
  if (ids.size() > max_seq_len - 2) ids.resize(max_seq_len - 2);
  std::vector<int> out;
  out.reserve(ids.size() + 2);
  out.push_back(tok::SubwordVocab::kCls);
  out.insert(out.end(), ids.begin(), ids.end());
  out.push_back(tok::SubwordVocab::kSep);
  return out;
}

inline FinetuneReport finetune(
    Encoder& enc, AdamW& adam,
    const std::vector<std::pair<std::string, int>>& rows,
    const tok::SubwordVocab& vocab, const TrainingConfig& cfg) {
  cfg.validate();
  if (enc.config().num_labels < 2)
    throw ConfigError("model: fine-tuning needs a classifier head with >= 2 labels");
  if (rows.empty()) throw ValidationError("model: empty training set");
  std::vector<ClsExample> examples;
  examples.reserve(rows.size());
  bool seen_second_class = false;
  for (const auto& [text, label] : rows) {
    if (label < 0 || static_cast<size_t>(label) >= enc.config().num_labels)
      throw ValidationError("model: label id out of range: " +
                            std::to_string(label));
    if (label != rows.front().second) seen_second_class = true;
    examples.push_back({classification_ids(text, vocab, cfg.max_seq_len), label});
  }
  if (!seen_second_class)
    throw ConfigError("model: training set contains a single class");
  FinetuneReport rep;
  std::vector<size_t> order(examples.size());
  for (uint64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(cfg.seed, 0xF17EULL, epoch));
    for (size_t i = order.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(rng.next_below(i));
      std::swap(order[i - 1], order[j]);
    }
    double epoch_total = 0.0;
    size_t batches = 0;
    for (size_t lo = 0; lo < examples.size(); lo += cfg.batch_size) {
      const size_t hi = std::min(examples.size(), lo + cfg.batch_size);
      std::vector<ClsExample> batch;
      batch.reserve(hi - lo);
      for (size_t i = lo; i < hi; ++i) batch.push_back(examples[order[i]]);
      auto grads = enc.zero_grads();
      const double loss = cls_batch_grad(enc, batch, grads);
      if (!std::isfinite(loss))
        throw ValidationError("model: non-finite fine-tuning loss");
      adam.step(enc, grads);
      epoch_total += loss;
      ++batches;
      ++rep.steps;
    }
    rep.epoch_loss.push_back(batches ? epoch_total / static_cast<double>(batches)
                                     : std::numeric_limits<double>::quiet_NaN());
  }
  return rep;
}

inline int predict(const Encoder& enc, std::string_view text,
                   const tok::SubwordVocab& vocab) {
  if (enc.config().num_labels < 2)
    throw ConfigError("model: prediction needs a classifier head");
  const auto ids =
      classification_ids(text, vocab, enc.config().max_seq_len);
  const Mat hidden = encoder_forward(enc, ids);
  const Mat& w = enc.param("cls.weight");
  const Mat& b = enc.param("cls.bias");
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < enc.config().num_labels; ++j) {
    double s = b(0, j);
    for (size_t c = 0; c < enc.config().d_model; ++c)
      s += hidden(0, c) * w(c, j);
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(j);
    }
  }
  return best;
}

}  // namespace lahja::model

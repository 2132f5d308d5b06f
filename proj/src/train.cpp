// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iolm/train.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "iolm/common.hpp"
#include "iolm/fastmath.hpp"
#include "iolm/tokenizer.hpp"

namespace iolm {

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

Matrix normal_matrix(int rows, int cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = static_cast<float>(stddev * rng.next_normal());
  return m;
}

// Copies head h columns out of a (T x heads*hd) matrix.
Matrix head_slice(const Matrix& m, int h, int hd) {
  Matrix out(m.rows, hd);
  for (int t = 0; t < m.rows; ++t)
    std::memcpy(out.row(t), m.row(t) + h * hd, sizeof(float) * hd);
  return out;
}

void head_add(Matrix& dst, const Matrix& part, int h, int hd) {
  for (int t = 0; t < part.rows; ++t) {
    float* d = dst.row(t) + h * hd;
    const float* s = part.row(t);
    for (int j = 0; j < hd; ++j) d[j] += s[j];
  }
}

}  // namespace

ToyModelParams ToyModelParams::init(const ModelConfig& config, Rng& rng) {
  config.validate();
  ToyModelParams p;
  p.config = config;
  const int d = config.d_model;
  const double base_std = 0.02;
  // Residual-output projections scaled down with depth, GPT-2 style.
  const double resid_std = base_std / std::sqrt(2.0 * config.n_layers);

  p.tok_embed = normal_matrix(config.vocab_size, d, base_std, rng);
  p.pos_embed = normal_matrix(config.max_seq_len, d, base_std, rng);
  p.layers.resize(config.n_layers);
  for (int l = 0; l < config.n_layers; ++l) {
    auto& lw = p.layers[l];
    const int kh = config.layer_heads(l) * config.head_dim();
    const int f = config.layer_ffn(l);
    lw.ln1_g = Matrix(1, d, std::vector<float>(d, 1.0f));
    lw.ln1_b = Matrix(1, d);
    lw.wq = normal_matrix(kh, d, base_std, rng);
    lw.wk = normal_matrix(kh, d, base_std, rng);
    lw.wv = normal_matrix(kh, d, base_std, rng);
    lw.wo = normal_matrix(d, kh, resid_std, rng);
    lw.ln2_g = Matrix(1, d, std::vector<float>(d, 1.0f));
    lw.ln2_b = Matrix(1, d);
    lw.w_in = normal_matrix(f, d, base_std, rng);
    lw.w_out = normal_matrix(d, f, resid_std, rng);
  }
  p.lnf_g = Matrix(1, d, std::vector<float>(d, 1.0f));
  p.lnf_b = Matrix(1, d);
  return p;
}

ToyModelParams ToyModelParams::zeros_like(const ToyModelParams& other) {
  ToyModelParams p;
  p.config = other.config;
  p.tok_embed = Matrix(other.tok_embed.rows, other.tok_embed.cols);
  p.pos_embed = Matrix(other.pos_embed.rows, other.pos_embed.cols);
  p.layers.resize(other.layers.size());
  for (size_t l = 0; l < other.layers.size(); ++l) {
    const auto& s = other.layers[l];
    auto& t = p.layers[l];
    t.ln1_g = Matrix(s.ln1_g.rows, s.ln1_g.cols);
    t.ln1_b = Matrix(s.ln1_b.rows, s.ln1_b.cols);
    t.wq = Matrix(s.wq.rows, s.wq.cols);
    t.wk = Matrix(s.wk.rows, s.wk.cols);
    t.wv = Matrix(s.wv.rows, s.wv.cols);
    t.wo = Matrix(s.wo.rows, s.wo.cols);
    t.ln2_g = Matrix(s.ln2_g.rows, s.ln2_g.cols);
    t.ln2_b = Matrix(s.ln2_b.rows, s.ln2_b.cols);
    t.w_in = Matrix(s.w_in.rows, s.w_in.cols);
    t.w_out = Matrix(s.w_out.rows, s.w_out.cols);
  }
  p.lnf_g = Matrix(other.lnf_g.rows, other.lnf_g.cols);
  p.lnf_b = Matrix(other.lnf_b.rows, other.lnf_b.cols);
  return p;
}

void ToyModelParams::for_each(const std::function<void(const std::string&, Matrix&)>& fn) {
  fn("tok_embed", tok_embed);
  fn("pos_embed", pos_embed);
  for (size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    fn(p + "attn_norm.gain", layers[l].ln1_g);
    fn(p + "attn_norm.bias", layers[l].ln1_b);
    fn(p + "attn.wq", layers[l].wq);
    fn(p + "attn.wk", layers[l].wk);
    fn(p + "attn.wv", layers[l].wv);
    fn(p + "attn.wo", layers[l].wo);
    fn(p + "ffn_norm.gain", layers[l].ln2_g);
    fn(p + "ffn_norm.bias", layers[l].ln2_b);
    fn(p + "ffn.w_in", layers[l].w_in);
    fn(p + "ffn.w_out", layers[l].w_out);
  }
  fn("final_norm.gain", lnf_g);
  fn("final_norm.bias", lnf_b);
}

void ToyModelParams::for_each(
    const std::function<void(const std::string&, const Matrix&)>& fn) const {
  const_cast<ToyModelParams*>(this)->for_each(
      [&fn](const std::string& name, Matrix& m) { fn(name, m); });
}

ModelBundle ToyModelParams::to_bundle() const {
  ModelBundle bundle;
  bundle.config = config;
  for_each([&bundle](const std::string& name, const Matrix& m) { bundle.append_dense(name, m); });
  bundle.validate();
  return bundle;
}

ToyModelParams ToyModelParams::from_bundle(const ModelBundle& bundle) {
  bundle.validate();
  ToyModelParams p;
  p.config = bundle.config;
  p.layers.resize(bundle.config.n_layers);
  p.for_each([&bundle](const std::string& name, Matrix& m) { m = bundle.decode_tensor(name); });
  return p;
}

TrainSequence build_train_sequence(const Example& example) {
  TrainSequence seq;
  seq.ids.push_back(Tokenizer::kBos);
  for (int id : Tokenizer::encode(example.prompt)) seq.ids.push_back(id);
  seq.loss_start = static_cast<int>(example.prompt.size());
  for (int id : Tokenizer::encode(example.completion)) seq.ids.push_back(id);
  seq.ids.push_back(Tokenizer::kEos);
  return seq;
}

// ---------------------------------------------------------------------------
// Loss-only forward, templated on the accumulation type. Kept independent of
// the backprop path below so the two cross-check each other in the gradient
// test.
// ---------------------------------------------------------------------------

template <typename Real>
std::pair<double, int> sequence_loss(const ToyModelParams& params, const TrainSequence& seq) {
  const ModelConfig& c = params.config;
  const int t_len = static_cast<int>(seq.ids.size());
  if (t_len > c.max_seq_len) throw SequenceTooLong("sequence_loss: sequence too long");
  const int d = c.d_model;
  const int hd = c.head_dim();
  const Real alpha = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(hd)));

  auto at = [](std::vector<Real>& buf, int row, int cols) { return buf.data() + static_cast<size_t>(row) * cols; };

  std::vector<Real> x(static_cast<size_t>(t_len) * d);
  for (int t = 0; t < t_len; ++t)
    for (int j = 0; j < d; ++j)
      x[static_cast<size_t>(t) * d + j] = static_cast<Real>(params.tok_embed.at(seq.ids[t], j)) +
                                          static_cast<Real>(params.pos_embed.at(t, j));

  auto layernorm = [&](const Real* in, const Matrix& gain, const Matrix& bias, Real* out, int n) {
    Real mean = 0;
    for (int j = 0; j < n; ++j) mean += in[j];
    mean /= n;
    Real var = 0;
    for (int j = 0; j < n; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= n;
    const Real inv = Real(1) / std::sqrt(var + Real(1e-5));
    for (int j = 0; j < n; ++j)
      out[j] = (in[j] - mean) * inv * static_cast<Real>(gain.data[j]) +
               static_cast<Real>(bias.data[j]);
  };
  auto project = [&](const std::vector<Real>& in, int in_dim, const Matrix& w,
                     std::vector<Real>& out) {
    // out (T x w.rows) = in (T x in_dim) * w^T
    for (int t = 0; t < t_len; ++t) {
      const Real* row = in.data() + static_cast<size_t>(t) * in_dim;
      Real* orow = out.data() + static_cast<size_t>(t) * w.rows;
      for (int o = 0; o < w.rows; ++o) {
        const float* wrow = w.row(o);
        Real acc = 0;
        for (int j = 0; j < in_dim; ++j) acc += row[j] * static_cast<Real>(wrow[j]);
        orow[o] = acc;
      }
    }
  };

  for (int l = 0; l < c.n_layers; ++l) {
    const auto& lw = params.layers[l];
    const int heads = c.layer_heads(l);
    const int kh = heads * hd;
    const int f = c.layer_ffn(l);

    std::vector<Real> h1(static_cast<size_t>(t_len) * d);
    for (int t = 0; t < t_len; ++t) layernorm(at(x, t, d), lw.ln1_g, lw.ln1_b, at(h1, t, d), d);
    std::vector<Real> q(static_cast<size_t>(t_len) * kh), k(q.size()), v(q.size());
    project(h1, d, lw.wq, q);
    project(h1, d, lw.wk, k);
    project(h1, d, lw.wv, v);

    std::vector<Real> z(static_cast<size_t>(t_len) * kh, Real(0));
    std::vector<Real> scores(t_len), probs(t_len);
    for (int h = 0; h < heads; ++h) {
      for (int t = 0; t < t_len; ++t) {
        const Real* qh = at(q, t, kh) + h * hd;
        Real maxv = 0;
        for (int s = 0; s <= t; ++s) {
          const Real* ks = at(k, s, kh) + h * hd;
          Real acc = 0;
          for (int j = 0; j < hd; ++j) acc += qh[j] * ks[j];
          scores[s] = acc * alpha;
          if (s == 0 || scores[s] > maxv) maxv = scores[s];
        }
        Real sum = 0;
        for (int s = 0; s <= t; ++s) {
          probs[s] = std::exp(scores[s] - maxv);
          sum += probs[s];
        }
        Real* zh = at(z, t, kh) + h * hd;
        for (int s = 0; s <= t; ++s) {
          const Real w = probs[s] / sum;
          const Real* vs = at(v, s, kh) + h * hd;
          for (int j = 0; j < hd; ++j) zh[j] += w * vs[j];
        }
      }
    }

    std::vector<Real> attn(static_cast<size_t>(t_len) * d);
    project(z, kh, lw.wo, attn);
    for (size_t i = 0; i < x.size(); ++i) x[i] += attn[i];

    std::vector<Real> h2(static_cast<size_t>(t_len) * d);
    for (int t = 0; t < t_len; ++t) layernorm(at(x, t, d), lw.ln2_g, lw.ln2_b, at(h2, t, d), d);
    std::vector<Real> gmid(static_cast<size_t>(t_len) * f);
    project(h2, d, lw.w_in, gmid);
    for (auto& gv : gmid) {
      const Real u = static_cast<Real>(kGeluC) * (gv + static_cast<Real>(kGeluA) * gv * gv * gv);
      gv = Real(0.5) * gv * (Real(1) + std::tanh(u));
    }
    std::vector<Real> ffn(static_cast<size_t>(t_len) * d);
    project(gmid, f, lw.w_out, ffn);
    for (size_t i = 0; i < x.size(); ++i) x[i] += ffn[i];
  }

  double loss_sum = 0.0;
  int count = 0;
  std::vector<Real> yrow(d), logits(c.vocab_size);
  for (int t = seq.loss_start; t + 1 < t_len; ++t) {
    layernorm(at(x, t, d), params.lnf_g, params.lnf_b, yrow.data(), d);
    for (int vtok = 0; vtok < c.vocab_size; ++vtok) {
      const float* emb = params.tok_embed.row(vtok);
      Real acc = 0;
      for (int j = 0; j < d; ++j) acc += yrow[j] * static_cast<Real>(emb[j]);
      logits[vtok] = acc;
    }
    Real maxv = logits[0];
    for (Real lv : logits) maxv = std::max(maxv, lv);
    Real sum = 0;
    for (Real lv : logits) sum += std::exp(lv - maxv);
    const int target = seq.ids[t + 1];
    loss_sum += static_cast<double>(std::log(sum) - (logits[target] - maxv));
    ++count;
  }
  return {loss_sum, count};
}

template std::pair<double, int> sequence_loss<float>(const ToyModelParams&, const TrainSequence&);
template std::pair<double, int> sequence_loss<double>(const ToyModelParams&, const TrainSequence&);

// ---------------------------------------------------------------------------
// f32 forward + backward
// ---------------------------------------------------------------------------

namespace {

struct LayerActs {
  Matrix xhat1, h1;      // T x d
  std::vector<float> r1;  // inv std per row
  Matrix q, k, v, z;     // T x kh
  std::vector<Matrix> att;  // per head, T x T row-causal probabilities
  Matrix xhat2, h2;
  std::vector<float> r2;
  Matrix gpre, gact;  // T x f
};

// y = xhat*g + b given stored xhat and inv-std r. Returns dx and accumulates
// parameter grads.
void layernorm_backward(const float* dy, const float* xhat, float r, const float* gain, int n,
                        float* dx_out, float* dgain, float* dbias) {
  float m1 = 0.0f, m2 = 0.0f;
  for (int j = 0; j < n; ++j) {
    const float dxh = dy[j] * gain[j];
    m1 += dxh;
    m2 += dxh * xhat[j];
    dgain[j] += dy[j] * xhat[j];
    dbias[j] += dy[j];
  }
  m1 /= static_cast<float>(n);
  m2 /= static_cast<float>(n);
  for (int j = 0; j < n; ++j) {
    const float dxh = dy[j] * gain[j];
    dx_out[j] = r * (dxh - m1 - xhat[j] * m2);
  }
}

void layernorm_forward_rows(const Matrix& in, const Matrix& gain, const Matrix& bias, Matrix& xhat,
                            std::vector<float>& r, Matrix& out) {
  const int n = in.cols;
  for (int t = 0; t < in.rows; ++t) {
    const float* row = in.row(t);
    float mean = 0.0f;
    for (int j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<float>(n);
    float var = 0.0f;
    for (int j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<float>(n);
    const float inv = 1.0f / std::sqrt(var + 1e-5f);
    r[t] = inv;
    float* xh = xhat.row(t);
    float* o = out.row(t);
    for (int j = 0; j < n; ++j) {
      xh[j] = (row[j] - mean) * inv;
      o[j] = xh[j] * gain.data[j] + bias.data[j];
    }
  }
}

}  // namespace

std::pair<double, int> sequence_loss_and_grad(const ToyModelParams& params,
                                              const TrainSequence& seq, double weight,
                                              ToyModelParams& grads) {
  const ModelConfig& c = params.config;
  const int t_len = static_cast<int>(seq.ids.size());
  if (t_len > c.max_seq_len) throw SequenceTooLong("sequence_loss_and_grad: sequence too long");
  const int d = c.d_model;
  const int hd = c.head_dim();
  const float alpha = 1.0f / std::sqrt(static_cast<float>(hd));

  // ---- forward, storing activations ----
  Matrix x(t_len, d);
  for (int t = 0; t < t_len; ++t) {
    const float* tok = params.tok_embed.row(seq.ids[t]);
    const float* pos = params.pos_embed.row(t);
    float* o = x.row(t);
    for (int j = 0; j < d; ++j) o[j] = tok[j] + pos[j];
  }

  std::vector<LayerActs> acts(c.n_layers);
  std::vector<Matrix> layer_inputs;  // x entering each layer (for residual bookkeeping)
  layer_inputs.reserve(c.n_layers);

  for (int l = 0; l < c.n_layers; ++l) {
    const auto& lw = params.layers[l];
    const int heads = c.layer_heads(l);
    const int kh = heads * hd;
    const int f = c.layer_ffn(l);
    auto& a = acts[l];
    layer_inputs.push_back(x);

    a.xhat1 = Matrix(t_len, d);
    a.h1 = Matrix(t_len, d);
    a.r1.resize(t_len);
    layernorm_forward_rows(x, lw.ln1_g, lw.ln1_b, a.xhat1, a.r1, a.h1);

    a.q = Matrix(t_len, kh);
    a.k = Matrix(t_len, kh);
    a.v = Matrix(t_len, kh);
    fastmath::gemm_bt(a.h1, lw.wq, a.q);
    fastmath::gemm_bt(a.h1, lw.wk, a.k);
    fastmath::gemm_bt(a.h1, lw.wv, a.v);

    a.z = Matrix(t_len, kh);
    a.att.assign(heads, Matrix(t_len, t_len));
    for (int h = 0; h < heads; ++h) {
      Matrix& att = a.att[h];
      for (int t = 0; t < t_len; ++t) {
        const float* qh = a.q.row(t) + h * hd;
        float maxv = 0.0f;
        float* arow = att.row(t);
        for (int s = 0; s <= t; ++s) {
          const float* ks = a.k.row(s) + h * hd;
          float acc = 0.0f;
          for (int j = 0; j < hd; ++j) acc += qh[j] * ks[j];
          arow[s] = acc * alpha;
          if (s == 0 || arow[s] > maxv) maxv = arow[s];
        }
        float sum = 0.0f;
        for (int s = 0; s <= t; ++s) {
          arow[s] = std::exp(arow[s] - maxv);
          sum += arow[s];
        }
        float* zh = a.z.row(t) + h * hd;
        for (int s = 0; s <= t; ++s) {
          arow[s] /= sum;
          const float* vs = a.v.row(s) + h * hd;
          for (int j = 0; j < hd; ++j) zh[j] += arow[s] * vs[j];
        }
      }
    }

    Matrix attn(t_len, d);
    fastmath::gemm_bt(a.z, lw.wo, attn);
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += attn.data[i];

    a.xhat2 = Matrix(t_len, d);
    a.h2 = Matrix(t_len, d);
    a.r2.resize(t_len);
    layernorm_forward_rows(x, lw.ln2_g, lw.ln2_b, a.xhat2, a.r2, a.h2);

    a.gpre = Matrix(t_len, f);
    fastmath::gemm_bt(a.h2, lw.w_in, a.gpre);
    a.gact = a.gpre;
    for (auto& gv : a.gact.data) {
      const float u = static_cast<float>(kGeluC) * (gv + static_cast<float>(kGeluA) * gv * gv * gv);
      gv = 0.5f * gv * (1.0f + std::tanh(u));
    }
    Matrix ffn(t_len, d);
    fastmath::gemm_bt(a.gact, lw.w_out, ffn);
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += ffn.data[i];
  }

  Matrix xhatf(t_len, d), yf(t_len, d);
  std::vector<float> rf(t_len);
  layernorm_forward_rows(x, params.lnf_g, params.lnf_b, xhatf, rf, yf);

  // ---- loss + logits gradients ----
  double loss_sum = 0.0;
  int count = 0;
  const float w = static_cast<float>(weight);
  Matrix dyf(t_len, d);
  std::vector<float> logits(c.vocab_size);
  for (int t = seq.loss_start; t + 1 < t_len; ++t) {
    const float* yrow = yf.row(t);
    for (int vtok = 0; vtok < c.vocab_size; ++vtok)
      logits[vtok] = fastmath::dot({yrow, static_cast<size_t>(d)},
                                   {params.tok_embed.row(vtok), static_cast<size_t>(d)});
    float maxv = logits[0];
    for (float lv : logits) maxv = std::max(maxv, lv);
    double sum = 0.0;
    for (float lv : logits) sum += std::exp(static_cast<double>(lv - maxv));
    const int target = seq.ids[t + 1];
    loss_sum += std::log(sum) - static_cast<double>(logits[target] - maxv);
    ++count;

    float* dyrow = dyf.row(t);
    for (int vtok = 0; vtok < c.vocab_size; ++vtok) {
      const float p = static_cast<float>(std::exp(static_cast<double>(logits[vtok] - maxv)) / sum);
      const float dl = w * (p - (vtok == target ? 1.0f : 0.0f));
      const float* emb = params.tok_embed.row(vtok);
      float* demb = grads.tok_embed.row(vtok);
      for (int j = 0; j < d; ++j) {
        dyrow[j] += dl * emb[j];
        demb[j] += dl * yrow[j];
      }
    }
  }

  // ---- backward ----
  Matrix dx(t_len, d);
  for (int t = 0; t < t_len; ++t)
    layernorm_backward(dyf.row(t), xhatf.row(t), rf[t], params.lnf_g.data.data(), d, dx.row(t),
                       grads.lnf_g.data.data(), grads.lnf_b.data.data());

  for (int l = c.n_layers - 1; l >= 0; --l) {
    const auto& lw = params.layers[l];
    auto& gw = grads.layers[l];
    const auto& a = acts[l];
    const int heads = c.layer_heads(l);
    const int kh = heads * hd;
    const int f = c.layer_ffn(l);

    // FFN block: x_out = x_mid + gelu(ln2(x_mid) W_in^T) W_out^T
    Matrix dg(t_len, f);
    fastmath::gemm(dx, lw.w_out, dg);  // dGact
    Matrix dwout(d, f);
    fastmath::gemm_at(dx, a.gact, dwout);
    for (size_t i = 0; i < dwout.data.size(); ++i) gw.w_out.data[i] += dwout.data[i];

    for (size_t i = 0; i < dg.data.size(); ++i) {
      const float gx = a.gpre.data[i];
      const float u = static_cast<float>(kGeluC) * (gx + static_cast<float>(kGeluA) * gx * gx * gx);
      const float th = std::tanh(u);
      const float du = static_cast<float>(kGeluC) * (1.0f + 3.0f * static_cast<float>(kGeluA) * gx * gx);
      const float dgelu = 0.5f * (1.0f + th) + 0.5f * gx * (1.0f - th * th) * du;
      dg.data[i] *= dgelu;
    }

    Matrix dh2(t_len, d);
    fastmath::gemm(dg, lw.w_in, dh2);
    Matrix dwin(f, d);
    fastmath::gemm_at(dg, a.h2, dwin);
    for (size_t i = 0; i < dwin.data.size(); ++i) gw.w_in.data[i] += dwin.data[i];

    for (int t = 0; t < t_len; ++t) {
      std::vector<float> dmid(d);
      layernorm_backward(dh2.row(t), a.xhat2.row(t), a.r2[t], lw.ln2_g.data.data(), d, dmid.data(),
                         gw.ln2_g.data.data(), gw.ln2_b.data.data());
      float* dxr = dx.row(t);
      for (int j = 0; j < d; ++j) dxr[j] += dmid[j];
    }

    // Attention block: x_mid = x_in + (heads) Wo^T
    Matrix dz(t_len, kh);
    fastmath::gemm(dx, lw.wo, dz);
    Matrix dwo(d, kh);
    fastmath::gemm_at(dx, a.z, dwo);
    for (size_t i = 0; i < dwo.data.size(); ++i) gw.wo.data[i] += dwo.data[i];

    Matrix dq(t_len, kh), dk(t_len, kh), dv(t_len, kh);
    for (int h = 0; h < heads; ++h) {
      Matrix dz_h = head_slice(dz, h, hd);
      Matrix v_h = head_slice(a.v, h, hd);
      Matrix q_h = head_slice(a.q, h, hd);
      Matrix k_h = head_slice(a.k, h, hd);
      const Matrix& att = a.att[h];

      Matrix datt(t_len, t_len);
      fastmath::gemm_bt(dz_h, v_h, datt);
      Matrix dv_h(t_len, hd);
      fastmath::gemm_at(att, dz_h, dv_h);

      Matrix ds(t_len, t_len);
      for (int t = 0; t < t_len; ++t) {
        const float* arow = att.row(t);
        const float* darow = datt.row(t);
        float dot = 0.0f;
        for (int s = 0; s <= t; ++s) dot += darow[s] * arow[s];
        float* dsrow = ds.row(t);
        for (int s = 0; s <= t; ++s) dsrow[s] = arow[s] * (darow[s] - dot);
      }

      Matrix dq_h(t_len, hd), dk_h(t_len, hd);
      fastmath::gemm(ds, k_h, dq_h);
      fastmath::gemm_at(ds, q_h, dk_h);
      for (auto& vv : dq_h.data) vv *= alpha;
      for (auto& vv : dk_h.data) vv *= alpha;

      head_add(dq, dq_h, h, hd);
      head_add(dk, dk_h, h, hd);
      head_add(dv, dv_h, h, hd);
    }

    Matrix dh1(t_len, d), tmp(t_len, d);
    fastmath::gemm(dq, lw.wq, dh1);
    fastmath::gemm(dk, lw.wk, tmp);
    for (size_t i = 0; i < dh1.data.size(); ++i) dh1.data[i] += tmp.data[i];
    fastmath::gemm(dv, lw.wv, tmp);
    for (size_t i = 0; i < dh1.data.size(); ++i) dh1.data[i] += tmp.data[i];

    Matrix dwq(kh, d);
    fastmath::gemm_at(dq, a.h1, dwq);
    for (size_t i = 0; i < dwq.data.size(); ++i) gw.wq.data[i] += dwq.data[i];
    fastmath::gemm_at(dk, a.h1, dwq);
    for (size_t i = 0; i < dwq.data.size(); ++i) gw.wk.data[i] += dwq.data[i];
    fastmath::gemm_at(dv, a.h1, dwq);
    for (size_t i = 0; i < dwq.data.size(); ++i) gw.wv.data[i] += dwq.data[i];

    for (int t = 0; t < t_len; ++t) {
      std::vector<float> din(d);
      layernorm_backward(dh1.row(t), a.xhat1.row(t), a.r1[t], lw.ln1_g.data.data(), d, din.data(),
                         gw.ln1_g.data.data(), gw.ln1_b.data.data());
      float* dxr = dx.row(t);
      for (int j = 0; j < d; ++j) dxr[j] += din[j];
    }
  }

  for (int t = 0; t < t_len; ++t) {
    const float* dxr = dx.row(t);
    float* dtok = grads.tok_embed.row(seq.ids[t]);
    float* dpos = grads.pos_embed.row(t);
    for (int j = 0; j < d; ++j) {
      dtok[j] += dxr[j];
      dpos[j] += dxr[j];
    }
  }

  return {loss_sum, count};
}

ModelBundle train_toy(const ModelConfig& config, const std::vector<TaskKind>& tasks, int steps,
                      Rng& rng, const TrainOptions& options, TrainLog* log) {
  if (tasks.empty()) throw ContractViolation("train_toy: task list must be non-empty");
  Rng init_rng = rng.fork(0x1817);
  Rng data_rng = rng.fork(0xDA7A);

  ToyModelParams params = ToyModelParams::init(config, init_rng);
  if (steps == 0) return params.to_bundle();

  ToyModelParams m_state = ToyModelParams::zeros_like(params);
  ToyModelParams v_state = ToyModelParams::zeros_like(params);
  ToyModelParams grads = ToyModelParams::zeros_like(params);

  for (int step = 1; step <= steps; ++step) {
    std::vector<TrainSequence> batch;
    for (int b = 0; b < options.batch_size; ++b) {
      const TaskKind kind = tasks[data_rng.next_below(tasks.size())];
      batch.push_back(build_train_sequence(make_training_example(kind, data_rng)));
    }
    grads.for_each([](const std::string&, Matrix& g) {
      std::memset(g.data.data(), 0, g.data.size() * sizeof(float));
    });

    // Per-example pooling: each example contributes equally regardless of
    // completion length, so short tasks are not drowned out by long ones.
    double loss = 0.0;
    for (const auto& seq : batch) {
      const int positions = static_cast<int>(seq.ids.size()) - seq.loss_start - 1;
      const double example_weight = 1.0 / (static_cast<double>(options.batch_size) * positions);
      const auto [ls, n] = sequence_loss_and_grad(params, seq, example_weight, grads);
      loss += ls / n / options.batch_size;
    }
    if (!std::isfinite(loss))
      throw TrainingDiverged("train_toy: loss became non-finite at step " + std::to_string(step));

    // Adam with bias correction.
    const float b1 = options.beta1;
    const float b2 = options.beta2;
    const float corr1 = 1.0f - std::pow(b1, static_cast<float>(step));
    const float corr2 = 1.0f - std::pow(b2, static_cast<float>(step));
    auto* ms = &m_state;
    auto* vs = &v_state;
    auto* gs = &grads;
    int tensor_idx = 0;
    std::vector<Matrix*> mlist, vlist, glist;
    ms->for_each([&mlist](const std::string&, Matrix& t) { mlist.push_back(&t); });
    vs->for_each([&vlist](const std::string&, Matrix& t) { vlist.push_back(&t); });
    gs->for_each([&glist](const std::string&, Matrix& t) { glist.push_back(&t); });
    params.for_each([&](const std::string&, Matrix& theta) {
      Matrix& m = *mlist[tensor_idx];
      Matrix& v = *vlist[tensor_idx];
      Matrix& g = *glist[tensor_idx];
      for (size_t i = 0; i < theta.data.size(); ++i) {
        m.data[i] = b1 * m.data[i] + (1.0f - b1) * g.data[i];
        v.data[i] = b2 * v.data[i] + (1.0f - b2) * g.data[i] * g.data[i];
        const float mhat = m.data[i] / corr1;
        const float vhat = v.data[i] / corr2;
        theta.data[i] -= options.lr * mhat / (std::sqrt(vhat) + options.eps);
      }
      ++tensor_idx;
    });

    if (log) log->curve.emplace_back(step, loss);
    if (options.progress && (step % options.log_every == 0 || step == steps))
      options.progress(step, loss);
    if (options.checkpoint && options.checkpoint_every > 0 &&
        (step % options.checkpoint_every == 0 || step == steps))
      options.checkpoint(step, params.to_bundle());
  }
  return params.to_bundle();
}

double exact_match_rate(const ModelRuntime& runtime, TaskKind kind, int n, Rng& rng,
                        int max_new_tokens) {
  if (n <= 0) throw ContractViolation("exact_match_rate: n must be positive");
  std::vector<std::string> prompts, expected;
  for (int i = 0; i < n; ++i) {
    Example ex = make_training_example(kind, rng);
    prompts.push_back(std::move(ex.prompt));
    expected.push_back(std::move(ex.completion));
  }
  FlopCounter fc;
  const auto outputs = runtime.batch_decode(prompts, max_new_tokens, fc);
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += outputs[i] == expected[i];
  return static_cast<double>(hits) / n;
}

}  // namespace iolm

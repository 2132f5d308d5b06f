// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iolm/runtime.hpp"

#include <cmath>
#include <cstring>

#include "iolm/common.hpp"
#include "iolm/tokenizer.hpp"

namespace iolm {

namespace {

// Ascending-k accumulation; must stay serial (see matmul contract).
float dot_strict(const float* a, const float* b, int n) {
  float acc = 0.0f;
  for (int k = 0; k < n; ++k) acc += a[k] * b[k];
  return acc;
}

}  // namespace

void CaptureSink::add_row(const std::string& point, std::span<const float> row) {
  auto& entry = points[point];
  if (entry.first == 0) entry.first = static_cast<int>(row.size());
  if (entry.first != static_cast<int>(row.size()))
    throw ContractViolation("CaptureSink: inconsistent row width at " + point);
  entry.second.insert(entry.second.end(), row.begin(), row.end());
}

int CaptureSink::sample_count(const std::string& point) const {
  auto it = points.find(point);
  if (it == points.end() || it->second.first == 0) return 0;
  return static_cast<int>(it->second.second.size()) / it->second.first;
}

Matrix CaptureSink::matrix(const std::string& point) const {
  auto it = points.find(point);
  if (it == points.end()) throw ContractViolation("CaptureSink: no capture point " + point);
  const int dim = it->second.first;
  const int samples = static_cast<int>(it->second.second.size()) / dim;
  return Matrix(samples, dim, it->second.second);
}

std::string capture_point_for(const std::string& tensor_name) {
  const size_t dot = tensor_name.rfind('.');
  const std::string prefix = tensor_name.substr(0, tensor_name.find(".attn.") != std::string::npos
                                                       ? tensor_name.find(".attn.")
                                                       : tensor_name.find(".ffn."));
  const std::string field = tensor_name.substr(dot + 1);
  if (field == "wq" || field == "wk" || field == "wv") return prefix + ".attn_in";
  if (field == "wo") return prefix + ".attn_out_in";
  if (field == "w_in") return prefix + ".ffn_in";
  if (field == "w_out") return prefix + ".ffn_mid";
  throw ContractViolation("capture_point_for: not a linear weight tensor: " + tensor_name);
}

ModelRuntime::ModelRuntime(const ModelBundle& bundle) {
  bundle.validate();
  config_ = bundle.config;
  bundle_hash_ = bundle.hash();
  inv_sqrt_head_dim_ = 1.0f / std::sqrt(static_cast<float>(config_.head_dim()));

  tok_embed_ = bundle.decode_tensor("tok_embed");
  tok_embed_t_ = transpose(tok_embed_);
  pos_embed_ = bundle.decode_tensor("pos_embed");
  lnf_gain_ = bundle.decode_tensor("final_norm.gain").data;
  lnf_bias_ = bundle.decode_tensor("final_norm.bias").data;

  layers_.resize(config_.n_layers);
  for (int l = 0; l < config_.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    auto& lw = layers_[l];
    lw.ln1_gain = bundle.decode_tensor(p + "attn_norm.gain").data;
    lw.ln1_bias = bundle.decode_tensor(p + "attn_norm.bias").data;
    lw.ln2_gain = bundle.decode_tensor(p + "ffn_norm.gain").data;
    lw.ln2_bias = bundle.decode_tensor(p + "ffn_norm.bias").data;
    lw.wq_t = transpose(bundle.decode_tensor(p + "attn.wq"));
    lw.wk_t = transpose(bundle.decode_tensor(p + "attn.wk"));
    lw.wv_t = transpose(bundle.decode_tensor(p + "attn.wv"));
    lw.wo_t = transpose(bundle.decode_tensor(p + "attn.wo"));
    lw.w_in_t = transpose(bundle.decode_tensor(p + "ffn.w_in"));
    lw.w_out_t = transpose(bundle.decode_tensor(p + "ffn.w_out"));
    lw.heads = config_.layer_heads(l);
    lw.ffn = config_.layer_ffn(l);
  }
}

ModelRuntime::SeqState ModelRuntime::make_state() const {
  SeqState s;
  s.k.reserve(config_.n_layers);
  s.v.reserve(config_.n_layers);
  for (int l = 0; l < config_.n_layers; ++l) {
    const int kh = layers_[l].heads * config_.head_dim();
    s.k.emplace_back(config_.max_seq_len, kh);
    s.v.emplace_back(config_.max_seq_len, kh);
  }
  s.valid.assign(config_.max_seq_len, 0);
  return s;
}

Matrix ModelRuntime::advance(std::span<AdvanceItem> items, FlopCounter& counter,
                             CaptureSink* capture) const {
  const int n = static_cast<int>(items.size());
  const int d = config_.d_model;
  const int hd = config_.head_dim();

  for (const auto& it : items) {
    if (it.pos >= config_.max_seq_len)
      throw SequenceTooLong("forward: sequence length " + std::to_string(it.pos + 1) +
                            " exceeds max_seq_len " + std::to_string(config_.max_seq_len));
    if (it.token < 0 || it.token >= config_.vocab_size)
      throw ContractViolation("forward: token id out of range");
  }

  // Flags must be visible before attention runs: positions in this chunk
  // attend to earlier positions of the same chunk.
  for (const auto& it : items) it.state->valid[it.pos] = it.valid;

  Matrix x(n, d);
  for (int i = 0; i < n; ++i) {
    const float* tok = tok_embed_.row(items[i].token);
    const float* pos = pos_embed_.row(items[i].pos);
    float* out = x.row(i);
    for (int j = 0; j < d; ++j) out[j] = tok[j] + pos[j];
  }

  std::vector<float> scores(config_.max_seq_len);
  for (int l = 0; l < config_.n_layers; ++l) {
    const auto& lw = layers_[l];
    const int kh = lw.heads * hd;
    const std::string point_prefix = "layers." + std::to_string(l) + ".";

    Matrix h1(n, d);
    for (int i = 0; i < n; ++i) {
      auto normed = layernorm_row(x.row_span(i), lw.ln1_gain, lw.ln1_bias);
      std::memcpy(h1.row(i), normed.data(), sizeof(float) * d);
      if (capture && items[i].valid) capture->add_row(point_prefix + "attn_in", normed);
    }

    Matrix q = matmul(h1, lw.wq_t, counter);
    Matrix k_new = matmul(h1, lw.wk_t, counter);
    Matrix v_new = matmul(h1, lw.wv_t, counter);
    for (int i = 0; i < n; ++i) {
      auto& st = *items[i].state;
      std::memcpy(st.k[l].row(items[i].pos), k_new.row(i), sizeof(float) * kh);
      std::memcpy(st.v[l].row(items[i].pos), v_new.row(i), sizeof(float) * kh);
    }

    Matrix z(n, kh);
    for (int i = 0; i < n; ++i) {
      if (!items[i].valid) continue;  // pad queries produce zero rows, never read
      const auto& st = *items[i].state;
      const int t = items[i].pos;
      const int span = t + 1;
      for (int h = 0; h < lw.heads; ++h) {
        const float* qh = q.row(i) + h * hd;
        for (int s = 0; s < span; ++s)
          scores[s] = dot_strict(qh, st.k[l].row(s) + h * hd, hd) * inv_sqrt_head_dim_;
        counter.add(static_cast<uint64_t>(span) * hd);
        auto probs = softmax_row({scores.data(), static_cast<size_t>(span)},
                                 {st.valid.data(), static_cast<size_t>(span)});
        float* zh = z.row(i) + h * hd;
        for (int s = 0; s < span; ++s) {
          const float w = probs[s];
          const float* vrow = st.v[l].row(s) + h * hd;
          for (int j = 0; j < hd; ++j) zh[j] += w * vrow[j];
        }
        counter.add(static_cast<uint64_t>(span) * hd);
      }
      if (capture) capture->add_row(point_prefix + "attn_out_in", z.row_span(i));
    }

    Matrix attn_out = matmul(z, lw.wo_t, counter);
    for (int i = 0; i < n; ++i) {
      float* xr = x.row(i);
      const float* ar = attn_out.row(i);
      for (int j = 0; j < d; ++j) xr[j] += ar[j];
    }

    Matrix h2(n, d);
    for (int i = 0; i < n; ++i) {
      auto normed = layernorm_row(x.row_span(i), lw.ln2_gain, lw.ln2_bias);
      std::memcpy(h2.row(i), normed.data(), sizeof(float) * d);
      if (capture && items[i].valid) capture->add_row(point_prefix + "ffn_in", normed);
    }
    Matrix g = matmul(h2, lw.w_in_t, counter);
    for (int i = 0; i < n; ++i) {
      gelu_inplace(g.row_span(i));
      if (capture && items[i].valid) capture->add_row(point_prefix + "ffn_mid", g.row_span(i));
    }
    Matrix f = matmul(g, lw.w_out_t, counter);
    for (int i = 0; i < n; ++i) {
      float* xr = x.row(i);
      const float* fr = f.row(i);
      for (int j = 0; j < d; ++j) xr[j] += fr[j];
    }
  }

  Matrix y(n, d);
  for (int i = 0; i < n; ++i) {
    auto normed = layernorm_row(x.row_span(i), lnf_gain_, lnf_bias_);
    std::memcpy(y.row(i), normed.data(), sizeof(float) * d);
  }

  for (auto& it : items)
    if (it.pos + 1 > it.state->len) it.state->len = it.pos + 1;
  return y;
}

Matrix ModelRuntime::logits_for(const Matrix& final_rows, FlopCounter& counter) const {
  return matmul(final_rows, tok_embed_t_, counter);
}

Matrix ModelRuntime::forward(std::span<const int> ids, std::span<const uint8_t> mask,
                             FlopCounter& counter, CaptureSink* capture) const {
  if (ids.empty()) throw ContractViolation("forward: empty sequence");
  if (!mask.empty() && mask.size() != ids.size())
    throw ContractViolation("forward: mask length mismatch");
  if (static_cast<int>(ids.size()) > config_.max_seq_len)
    throw SequenceTooLong("forward: sequence length " + std::to_string(ids.size()) +
                          " exceeds max_seq_len " + std::to_string(config_.max_seq_len));
  SeqState state = make_state();
  std::vector<AdvanceItem> items(ids.size());
  for (size_t i = 0; i < ids.size(); ++i)
    items[i] = {&state, ids[i], static_cast<int>(i),
                static_cast<uint8_t>(mask.empty() ? 1 : (mask[i] ? 1 : 0))};
  Matrix y = advance(items, counter, capture);
  return logits_for(y, counter);
}

std::string ModelRuntime::greedy_decode(std::string_view prompt, int max_new_tokens,
                                        FlopCounter& counter) const {
  const std::string p(prompt);
  auto outputs = batch_decode(std::span<const std::string>(&p, 1), max_new_tokens, counter);
  return outputs[0];
}

std::vector<std::string> ModelRuntime::batch_decode(std::span<const std::string> prompts,
                                                    int max_new_tokens,
                                                    FlopCounter& counter) const {
  if (prompts.empty()) throw ContractViolation("batch_decode: batch size must be >= 1");
  if (max_new_tokens < 0) throw ContractViolation("batch_decode: max_new_tokens must be >= 0");

  const int n = static_cast<int>(prompts.size());
  std::vector<std::string> outputs(n);
  if (max_new_tokens == 0) return outputs;

  struct Item {
    SeqState state;
    std::vector<float> last_logits;
    int emitted = 0;
    bool alive = true;
  };
  std::vector<std::unique_ptr<Item>> live(n);

  // Prefill each prompt separately (lengths differ), logits head on the
  // last position only.
  for (int i = 0; i < n; ++i) {
    std::vector<int> ids{Tokenizer::kBos};
    for (int id : Tokenizer::encode(prompts[i])) ids.push_back(id);
    if (static_cast<int>(ids.size()) > config_.max_seq_len)
      throw SequenceTooLong("batch_decode: prompt " + std::to_string(i) + " needs " +
                            std::to_string(ids.size()) + " tokens, max_seq_len is " +
                            std::to_string(config_.max_seq_len));
    live[i] = std::make_unique<Item>();
    live[i]->state = make_state();
    std::vector<AdvanceItem> items(ids.size());
    for (size_t t = 0; t < ids.size(); ++t)
      items[t] = {&live[i]->state, ids[t], static_cast<int>(t), 1};
    Matrix y = advance(items, counter, nullptr);
    Matrix last(1, config_.d_model, std::vector<float>(y.row(y.rows - 1), y.row(y.rows - 1) + config_.d_model));
    live[i]->last_logits = logits_for(last, counter).data;
  }

  // Lockstep generation: all still-alive items advance one position per
  // iteration through stacked matmuls.
  for (;;) {
    std::vector<int> step_idx;
    std::vector<AdvanceItem> items;
    for (int i = 0; i < n; ++i) {
      Item& it = *live[i];
      if (!it.alive) continue;
      const int next = argmax_row(it.last_logits);
      if (next == Tokenizer::kEos || it.emitted == max_new_tokens) {
        it.alive = false;
        continue;
      }
      if (next <= 127) outputs[i].push_back(static_cast<char>(next));
      ++it.emitted;
      if (it.state.len == config_.max_seq_len) {  // context full: stop here
        it.alive = false;
        continue;
      }
      step_idx.push_back(i);
      items.push_back({&it.state, next, it.state.len, 1});
    }
    if (items.empty()) break;
    Matrix y = advance(items, counter, nullptr);
    Matrix logits = logits_for(y, counter);
    for (size_t r = 0; r < step_idx.size(); ++r) {
      auto& dst = live[step_idx[r]]->last_logits;
      dst.assign(logits.row(static_cast<int>(r)), logits.row(static_cast<int>(r)) + logits.cols);
    }
  }
  return outputs;
}

uint64_t full_forward_flops(const ModelConfig& config, int seq_len) {
  const auto t = static_cast<uint64_t>(seq_len);
  const auto d = static_cast<uint64_t>(config.d_model);
  const auto hd = static_cast<uint64_t>(config.head_dim());
  uint64_t total = 0;
  for (int l = 0; l < config.n_layers; ++l) {
    const uint64_t kh = static_cast<uint64_t>(config.layer_heads(l)) * hd;
    const auto f = static_cast<uint64_t>(config.layer_ffn(l));
    total += 4 * t * d * kh;      // q, k, v, o projections
    total += kh * t * (t + 1);    // causal scores + value mixing
    total += 2 * t * d * f;       // ffn in / out
  }
  total += t * d * static_cast<uint64_t>(config.vocab_size);  // logits head, all rows
  return total;
}

uint64_t decode_flops(const ModelConfig& config, int prompt_len, int new_tokens) {
  const auto d = static_cast<uint64_t>(config.d_model);
  const auto hd = static_cast<uint64_t>(config.head_dim());
  const auto v = static_cast<uint64_t>(config.vocab_size);
  const uint64_t s0 = static_cast<uint64_t>(prompt_len) + 1;  // BOS + prompt
  if (new_tokens == 0) return 0;

  uint64_t total = 0;
  for (int l = 0; l < config.n_layers; ++l) {
    const uint64_t kh = static_cast<uint64_t>(config.layer_heads(l)) * hd;
    const auto f = static_cast<uint64_t>(config.layer_ffn(l));
    total += 4 * s0 * d * kh + kh * s0 * (s0 + 1) + 2 * s0 * d * f;  // prefill
    for (int i = 1; i <= new_tokens; ++i)
      total += 4 * d * kh + 2 * d * f + 2 * kh * (s0 + static_cast<uint64_t>(i));
  }
  total += d * v;                                        // head after prefill
  total += static_cast<uint64_t>(new_tokens) * d * v;    // head per step
  return total;
}

}  // namespace iolm

// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iolm/model.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "iolm/common.hpp"

namespace iolm {

namespace {

constexpr char kMagic[4] = {'I', 'O', 'L', 'M'};
constexpr uint16_t kFormatVersion = 1;

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

bool is_weight_tensor(const std::string& name) {
  return name.find(".attn.w") != std::string::npos || name.find(".ffn.w") != std::string::npos;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size <= 0 || d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 ||
      max_seq_len <= 0)
    throw ContractViolation("ModelConfig: all dimensions must be positive");
  if (d_model % n_heads != 0)
    throw ContractViolation("ModelConfig: d_model not divisible by n_heads");
  if (static_cast<int>(active_heads.size()) != n_layers ||
      static_cast<int>(active_ffn.size()) != n_layers)
    throw ContractViolation("ModelConfig: per-layer lists must have n_layers entries");
  for (int l = 0; l < n_layers; ++l) {
    if (active_heads[l].empty())
      throw ContractViolation("ModelConfig: layer " + std::to_string(l) + " has no active heads");
    int prev = -1;
    for (int h : active_heads[l]) {
      if (h <= prev || h >= n_heads)
        throw ContractViolation("ModelConfig: active head list must be ascending and in range");
      prev = h;
    }
    if (active_ffn[l] < 1 || active_ffn[l] > d_ff)
      throw ContractViolation("ModelConfig: active FFN count out of range");
  }
}

ModelConfig ModelConfig::dense(int d_model, int n_layers, int n_heads, int d_ff,
                               int max_seq_len) {
  ModelConfig c;
  c.d_model = d_model;
  c.n_layers = n_layers;
  c.n_heads = n_heads;
  c.d_ff = d_ff;
  c.max_seq_len = max_seq_len;
  c.active_heads.resize(n_layers);
  for (auto& hs : c.active_heads)
    for (int h = 0; h < n_heads; ++h) hs.push_back(h);
  c.active_ffn.assign(n_layers, d_ff);
  c.validate();
  return c;
}

uint64_t TensorRecord::payload_bytes(int rows, int cols, TensorEncoding enc) {
  const auto r = static_cast<uint64_t>(rows);
  const auto c = static_cast<uint64_t>(cols);
  switch (enc) {
    case TensorEncoding::dense_f32:
      return r * c * 4;
    case TensorEncoding::q8_perchannel:
      return r * c + r * 4;
    case TensorEncoding::q4_perchannel:
      return r * ((c + 1) / 2) + r * 4;
    case TensorEncoding::sparse24_q8: {
      const uint64_t groups = c / 4;
      return r * (c / 2) + r * ((groups + 1) / 2) + r * 4;
    }
  }
  throw UnknownEncoding("payload_bytes: unknown encoding tag");
}

std::vector<std::string> required_tensor_names(const ModelConfig& config) {
  std::vector<std::string> names = {"tok_embed", "pos_embed"};
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    for (const char* s : {"attn_norm.gain", "attn_norm.bias", "attn.wq", "attn.wk", "attn.wv",
                          "attn.wo", "ffn_norm.gain", "ffn_norm.bias", "ffn.w_in", "ffn.w_out"})
      names.push_back(p + s);
  }
  names.push_back("final_norm.gain");
  names.push_back("final_norm.bias");
  return names;
}

std::pair<int, int> tensor_shape(const ModelConfig& config, const std::string& name) {
  if (name == "tok_embed") return {config.vocab_size, config.d_model};
  if (name == "pos_embed") return {config.max_seq_len, config.d_model};
  if (name == "final_norm.gain" || name == "final_norm.bias") return {1, config.d_model};
  if (name.rfind("layers.", 0) == 0) {
    const size_t dot = name.find('.', 7);
    const int layer = std::stoi(name.substr(7, dot - 7));
    if (layer < 0 || layer >= config.n_layers)
      throw ContractViolation("tensor_shape: layer index out of range in " + name);
    const std::string field = name.substr(dot + 1);
    const int kh = config.layer_heads(layer) * config.head_dim();
    const int f = config.layer_ffn(layer);
    if (field == "attn_norm.gain" || field == "attn_norm.bias" || field == "ffn_norm.gain" ||
        field == "ffn_norm.bias")
      return {1, config.d_model};
    if (field == "attn.wq" || field == "attn.wk" || field == "attn.wv") return {kh, config.d_model};
    if (field == "attn.wo") return {config.d_model, kh};
    if (field == "ffn.w_in") return {f, config.d_model};
    if (field == "ffn.w_out") return {config.d_model, f};
  }
  throw ContractViolation("tensor_shape: unknown tensor name " + name);
}

const TensorRecord* ModelBundle::find_tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

const TensorRecord& ModelBundle::tensor(const std::string& name) const {
  const TensorRecord* t = find_tensor(name);
  if (!t) throw ContractViolation("ModelBundle: missing tensor " + name);
  return *t;
}

Matrix ModelBundle::decode_tensor(const TensorRecord& rec) const {
  if (rec.offset + rec.length > blob.size())
    throw TruncatedBlob("decode_tensor: payload extends past end of blob for " + rec.name);
  const uint8_t* p = blob.data() + rec.offset;
  const auto r = static_cast<size_t>(rec.rows);
  const auto c = static_cast<size_t>(rec.cols);
  std::vector<float> values(r * c, 0.0f);

  switch (rec.encoding) {
    case TensorEncoding::dense_f32: {
      std::memcpy(values.data(), p, r * c * 4);
      break;
    }
    case TensorEncoding::q8_perchannel: {
      const auto* codes = reinterpret_cast<const int8_t*>(p);
      const uint8_t* scale_bytes = p + r * c;
      for (size_t i = 0; i < r; ++i) {
        float scale;
        std::memcpy(&scale, scale_bytes + i * 4, 4);
        for (size_t j = 0; j < c; ++j)
          values[i * c + j] = static_cast<float>(codes[i * c + j]) * scale;
      }
      break;
    }
    case TensorEncoding::q4_perchannel: {
      const size_t row_bytes = (c + 1) / 2;
      const uint8_t* scale_bytes = p + r * row_bytes;
      for (size_t i = 0; i < r; ++i) {
        float scale;
        std::memcpy(&scale, scale_bytes + i * 4, 4);
        for (size_t j = 0; j < c; ++j) {
          const uint8_t byte = p[i * row_bytes + j / 2];
          const uint8_t nibble = (j % 2 == 0) ? (byte & 0x0f) : (byte >> 4);
          values[i * c + j] = static_cast<float>(static_cast<int>(nibble) - 8) * scale;
        }
      }
      break;
    }
    case TensorEncoding::sparse24_q8: {
      const size_t groups = c / 4;
      const size_t idx_row_bytes = (groups + 1) / 2;
      const auto* codes = reinterpret_cast<const int8_t*>(p);
      const uint8_t* idx_bytes = p + r * groups * 2;
      const uint8_t* scale_bytes = idx_bytes + r * idx_row_bytes;
      for (size_t i = 0; i < r; ++i) {
        float scale;
        std::memcpy(&scale, scale_bytes + i * 4, 4);
        for (size_t g = 0; g < groups; ++g) {
          const uint8_t byte = idx_bytes[i * idx_row_bytes + g / 2];
          const uint8_t nib = (g % 2 == 0) ? (byte & 0x0f) : (byte >> 4);
          const int pos0 = nib & 0x3;
          const int pos1 = (nib >> 2) & 0x3;
          const int8_t c0 = codes[(i * groups + g) * 2];
          const int8_t c1 = codes[(i * groups + g) * 2 + 1];
          values[i * c + g * 4 + pos0] = static_cast<float>(c0) * scale;
          values[i * c + g * 4 + pos1] = static_cast<float>(c1) * scale;
        }
      }
      break;
    }
    default:
      throw UnknownEncoding("decode_tensor: unknown encoding tag for " + rec.name);
  }
  return Matrix(rec.rows, rec.cols, std::move(values));
}

Matrix ModelBundle::decode_tensor(const std::string& name) const {
  return decode_tensor(tensor(name));
}

void ModelBundle::append_dense(const std::string& name, const Matrix& m) {
  TensorRecord rec{name, m.rows, m.cols, TensorEncoding::dense_f32, blob.size(),
                   TensorRecord::payload_bytes(m.rows, m.cols, TensorEncoding::dense_f32)};
  const auto* bytes = reinterpret_cast<const uint8_t*>(m.data.data());
  blob.insert(blob.end(), bytes, bytes + rec.length);
  tensors.push_back(std::move(rec));
}

void ModelBundle::append_q8(const std::string& name, int rows, int cols,
                            std::span<const int8_t> codes, std::span<const float> scales) {
  if (codes.size() != static_cast<size_t>(rows) * cols || scales.size() != static_cast<size_t>(rows))
    throw ContractViolation("append_q8: payload size mismatch for " + name);
  TensorRecord rec{name, rows, cols, TensorEncoding::q8_perchannel, blob.size(),
                   TensorRecord::payload_bytes(rows, cols, TensorEncoding::q8_perchannel)};
  const auto* cb = reinterpret_cast<const uint8_t*>(codes.data());
  blob.insert(blob.end(), cb, cb + codes.size());
  const auto* sb = reinterpret_cast<const uint8_t*>(scales.data());
  blob.insert(blob.end(), sb, sb + scales.size() * 4);
  tensors.push_back(std::move(rec));
}

void ModelBundle::append_q4(const std::string& name, int rows, int cols,
                            std::span<const int8_t> codes, std::span<const float> scales) {
  if (codes.size() != static_cast<size_t>(rows) * cols || scales.size() != static_cast<size_t>(rows))
    throw ContractViolation("append_q4: payload size mismatch for " + name);
  TensorRecord rec{name, rows, cols, TensorEncoding::q4_perchannel, blob.size(),
                   TensorRecord::payload_bytes(rows, cols, TensorEncoding::q4_perchannel)};
  const size_t row_bytes = (static_cast<size_t>(cols) + 1) / 2;
  for (int i = 0; i < rows; ++i) {
    std::vector<uint8_t> packed(row_bytes, 0);
    for (int j = 0; j < cols; ++j) {
      const int code = codes[static_cast<size_t>(i) * cols + j];
      if (code < -7 || code > 7)
        throw ContractViolation("append_q4: code out of 4-bit range for " + name);
      const auto nibble = static_cast<uint8_t>(code + 8);
      if (j % 2 == 0)
        packed[j / 2] |= nibble;
      else
        packed[j / 2] |= static_cast<uint8_t>(nibble << 4);
    }
    blob.insert(blob.end(), packed.begin(), packed.end());
  }
  const auto* sb = reinterpret_cast<const uint8_t*>(scales.data());
  blob.insert(blob.end(), sb, sb + scales.size() * 4);
  tensors.push_back(std::move(rec));
}

void ModelBundle::append_sparse24_q8(const std::string& name, int rows, int cols,
                                     std::span<const int8_t> codes,
                                     std::span<const uint8_t> positions,
                                     std::span<const float> scales) {
  if (cols % 4 != 0)
    throw PatternMismatch("append_sparse24_q8: cols not divisible by 4 for " + name);
  const size_t groups = static_cast<size_t>(cols) / 4;
  if (codes.size() != static_cast<size_t>(rows) * groups * 2 ||
      positions.size() != codes.size() || scales.size() != static_cast<size_t>(rows))
    throw ContractViolation("append_sparse24_q8: payload size mismatch for " + name);
  TensorRecord rec{name, rows, cols, TensorEncoding::sparse24_q8, blob.size(),
                   TensorRecord::payload_bytes(rows, cols, TensorEncoding::sparse24_q8)};
  const auto* cb = reinterpret_cast<const uint8_t*>(codes.data());
  blob.insert(blob.end(), cb, cb + codes.size());
  const size_t idx_row_bytes = (groups + 1) / 2;
  for (int i = 0; i < rows; ++i) {
    std::vector<uint8_t> packed(idx_row_bytes, 0);
    for (size_t g = 0; g < groups; ++g) {
      const uint8_t p0 = positions[(static_cast<size_t>(i) * groups + g) * 2];
      const uint8_t p1 = positions[(static_cast<size_t>(i) * groups + g) * 2 + 1];
      if (p0 > 3 || p1 > 3 || p0 >= p1)
        throw ContractViolation("append_sparse24_q8: positions must be ascending in [0,3]");
      const auto nib = static_cast<uint8_t>(p0 | (p1 << 2));
      if (g % 2 == 0)
        packed[g / 2] |= nib;
      else
        packed[g / 2] |= static_cast<uint8_t>(nib << 4);
    }
    blob.insert(blob.end(), packed.begin(), packed.end());
  }
  const auto* sb = reinterpret_cast<const uint8_t*>(scales.data());
  blob.insert(blob.end(), sb, sb + scales.size() * 4);
  tensors.push_back(std::move(rec));
}

void ModelBundle::validate() const {
  config.validate();
  for (const std::string& name : required_tensor_names(config)) {
    const TensorRecord* rec = find_tensor(name);
    if (!rec) throw ContractViolation("ModelBundle: missing tensor " + name);
    const auto [r, c] = tensor_shape(config, name);
    if (rec->rows != r || rec->cols != c)
      throw ContractViolation("ModelBundle: tensor " + name + " has shape " +
                              std::to_string(rec->rows) + "x" + std::to_string(rec->cols) +
                              ", expected " + std::to_string(r) + "x" + std::to_string(c));
    if (!is_weight_tensor(name) && rec->encoding != TensorEncoding::dense_f32)
      throw ContractViolation("ModelBundle: tensor " + name + " must be dense_f32");
    if (rec->length != TensorRecord::payload_bytes(rec->rows, rec->cols, rec->encoding))
      throw ContractViolation("ModelBundle: tensor " + name + " payload length mismatch");
    if (rec->offset + rec->length > blob.size())
      throw TruncatedBlob("ModelBundle: tensor " + name + " extends past end of blob");
  }
}

std::vector<uint8_t> serialize_bundle(const ModelBundle& bundle) {
  nlohmann::ordered_json header;
  nlohmann::ordered_json cfg;
  cfg["vocab_size"] = bundle.config.vocab_size;
  cfg["d_model"] = bundle.config.d_model;
  cfg["n_layers"] = bundle.config.n_layers;
  cfg["n_heads"] = bundle.config.n_heads;
  cfg["d_ff"] = bundle.config.d_ff;
  cfg["max_seq_len"] = bundle.config.max_seq_len;
  cfg["active_heads"] = bundle.config.active_heads;
  cfg["active_ffn"] = bundle.config.active_ffn;
  header["config"] = std::move(cfg);
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  for (const auto& t : bundle.tensors) {
    nlohmann::ordered_json rec;
    rec["name"] = t.name;
    rec["rows"] = t.rows;
    rec["cols"] = t.cols;
    rec["encoding"] = static_cast<int>(t.encoding);
    rec["offset"] = t.offset;
    rec["length"] = t.length;
    tensors.push_back(std::move(rec));
  }
  header["tensors"] = std::move(tensors);
  header["provenance"] = {{"recipe_id", bundle.recipe_id}, {"parent_hash", bundle.parent_hash}};

  const std::string header_str = header.dump();
  std::vector<uint8_t> out;
  out.reserve(10 + header_str.size() + bundle.blob.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u16(out, kFormatVersion);
  put_u32(out, static_cast<uint32_t>(header_str.size()));
  out.insert(out.end(), header_str.begin(), header_str.end());
  out.insert(out.end(), bundle.blob.begin(), bundle.blob.end());
  return out;
}

ModelBundle deserialize_bundle(std::span<const uint8_t> bytes) {
  if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CorruptHeader("bundle: bad magic");
  const uint16_t version = static_cast<uint16_t>(bytes[4]) | (static_cast<uint16_t>(bytes[5]) << 8);
  if (version != kFormatVersion)
    throw CorruptHeader("bundle: unsupported format version " + std::to_string(version));
  uint32_t header_len = 0;
  for (int i = 0; i < 4; ++i) header_len |= static_cast<uint32_t>(bytes[6 + i]) << (8 * i);
  if (10 + static_cast<size_t>(header_len) > bytes.size())
    throw CorruptHeader("bundle: header length exceeds file size");

  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(bytes.begin() + 10, bytes.begin() + 10 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptHeader(std::string("bundle: header is not valid JSON: ") + e.what());
  }

  ModelBundle bundle;
  try {
    const auto& cfg = header.at("config");
    bundle.config.vocab_size = cfg.at("vocab_size").get<int>();
    bundle.config.d_model = cfg.at("d_model").get<int>();
    bundle.config.n_layers = cfg.at("n_layers").get<int>();
    bundle.config.n_heads = cfg.at("n_heads").get<int>();
    bundle.config.d_ff = cfg.at("d_ff").get<int>();
    bundle.config.max_seq_len = cfg.at("max_seq_len").get<int>();
    bundle.config.active_heads = cfg.at("active_heads").get<std::vector<std::vector<int>>>();
    bundle.config.active_ffn = cfg.at("active_ffn").get<std::vector<int>>();
    for (const auto& t : header.at("tensors")) {
      TensorRecord rec;
      rec.name = t.at("name").get<std::string>();
      rec.rows = t.at("rows").get<int>();
      rec.cols = t.at("cols").get<int>();
      const int enc = t.at("encoding").get<int>();
      if (enc < 0 || enc > 3)
        throw UnknownEncoding("bundle: unknown encoding tag " + std::to_string(enc) +
                              " for tensor " + rec.name);
      rec.encoding = static_cast<TensorEncoding>(enc);
      rec.offset = t.at("offset").get<uint64_t>();
      rec.length = t.at("length").get<uint64_t>();
      bundle.tensors.push_back(std::move(rec));
    }
    const auto& prov = header.at("provenance");
    bundle.recipe_id = prov.at("recipe_id").get<std::string>();
    bundle.parent_hash = prov.at("parent_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptHeader(std::string("bundle: malformed header fields: ") + e.what());
  }

  bundle.blob.assign(bytes.begin() + 10 + header_len, bytes.end());
  for (const auto& t : bundle.tensors) {
    if (t.length != TensorRecord::payload_bytes(t.rows, t.cols, t.encoding))
      throw CorruptHeader("bundle: tensor " + t.name + " length inconsistent with shape");
    if (t.offset + t.length > bundle.blob.size())
      throw TruncatedBlob("bundle: tensor " + t.name + " extends past end of blob");
  }
  return bundle;
}

uint64_t ModelBundle::hash() const {
  const auto bytes = serialize_bundle(*this);
  return fnv1a64_bytes(bytes.data(), bytes.size());
}

std::string ModelBundle::hash_hex() const { return to_hex(hash()); }

void save_bundle(const ModelBundle& bundle, const std::string& path) {
  const auto bytes = serialize_bundle(bundle);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("save_bundle: cannot open " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("save_bundle: write failed for " + path);
}

ModelBundle load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_bundle: cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_bundle(bytes);
}

}  // namespace iolm

// Copyright 2026 The refseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Language-guided binary segmentation network.
//
//   image ──► strided conv stages ──► atrous pyramid (1x1, dilated 3x3 per
//             rate, image pooling) ──► 1x1 merge ──► visual map [F,h,w]
//   phrase ─► token + position embeddings ──► transformer ──► state at [CLS]
//             ──► linear projection to F
//   fused = visual ⊙ projection  (broadcast over space)
//   logits = bilinear_upsample(conv(fused) -> 2 maps)   (0: fg, 1: bg)

#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "refseg/autograd.hpp"
#include "refseg/error.hpp"
#include "refseg/mask.hpp"
#include "refseg/tensor.hpp"
#include "refseg/tokenizer.hpp"

namespace refseg {

enum class FusionMode { kMultiply, kAdd, kConcat };

inline std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::kMultiply: return "multiply";
    case FusionMode::kAdd: return "add";
    case FusionMode::kConcat: return "concat";
  }
  return "multiply";
}

inline FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "multiply") return FusionMode::kMultiply;
  if (s == "add") return FusionMode::kAdd;
  if (s == "concat") return FusionMode::kConcat;
  fail(ErrorCode::kConfigError, "unknown fusion_mode '" + s + "'");
}

struct ModelConfig {
  int image_channels = 3;
  std::vector<int> backbone_width{64, 128, 256};  // one stride-2 stage per entry
  int output_stride = 8;
  std::vector<int> aspp_rates{12, 24, 36};
  int fusion_dim = 256;
  int lang_dim = 768;
  int vocab_size = 1000;
  int max_tokens = 20;
  int lang_layers = 2;
  int lang_heads = 12;
  int ffn_dim = 0;  // 0 means 4 * lang_dim
  FusionMode fusion_mode = FusionMode::kMultiply;
  int decoder_kernel = 1;
  int num_output_maps = 2;

  int ffn() const { return ffn_dim > 0 ? ffn_dim : 4 * lang_dim; }

  /// Small configuration used by tests and the desk-scale demos.
  static ModelConfig toy() {
    ModelConfig c;
    c.backbone_width = {8, 16};
    c.output_stride = 4;
    c.aspp_rates = {1, 2, 3};
    c.fusion_dim = 16;
    c.lang_dim = 16;
    c.vocab_size = 32;
    c.max_tokens = 12;
    c.lang_layers = 1;
    c.lang_heads = 2;
    c.ffn_dim = 32;
    return c;
  }

  void validate() const {
    auto bad = [](const std::string& msg) { fail(ErrorCode::kConfigError, msg); };
    if (image_channels < 1) bad("image_channels must be positive");
    if (output_stride < 1 || (output_stride & (output_stride - 1)) != 0)
      bad("output_stride must be a power of two");
    int stages = 0;
    for (int s = output_stride; s > 1; s >>= 1) ++stages;
    if (static_cast<int>(backbone_width.size()) != stages)
      bad("backbone_width needs log2(output_stride) = " + std::to_string(stages) + " entries");
    for (int w : backbone_width)
      if (w < 1) bad("backbone widths must be positive");
    for (int r : aspp_rates)
      if (r < 1) bad("aspp rates must be positive");
    if (fusion_dim < 1 || lang_dim < 1) bad("fusion_dim and lang_dim must be positive");
    if (lang_heads < 1 || lang_dim % lang_heads != 0) bad("lang_heads must divide lang_dim");
    if (lang_layers < 0) bad("lang_layers must be non-negative");
    if (vocab_size <= special_tokens::kCount) bad("vocab_size must exceed the special tokens");
    if (max_tokens < 2) bad("max_tokens must be at least 2");
    if (decoder_kernel < 1 || decoder_kernel % 2 == 0) bad("decoder_kernel must be odd");
    if (num_output_maps != 2) bad("num_output_maps is fixed at 2");
  }
};

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["image_channels"] = c.image_channels;
  j["backbone_width"] = c.backbone_width;
  j["output_stride"] = c.output_stride;
  j["aspp_rates"] = c.aspp_rates;
  j["fusion_dim"] = c.fusion_dim;
  j["lang_dim"] = c.lang_dim;
  j["vocab_size"] = c.vocab_size;
  j["max_tokens"] = c.max_tokens;
  j["lang_layers"] = c.lang_layers;
  j["lang_heads"] = c.lang_heads;
  j["ffn_dim"] = c.ffn_dim;
  j["fusion_mode"] = to_string(c.fusion_mode);
  j["decoder_kernel"] = c.decoder_kernel;
  j["num_output_maps"] = c.num_output_maps;
  return j;
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c = {}) {
  if (!j.is_object()) fail(ErrorCode::kConfigError, "model config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "image_channels") c.image_channels = value.get<int>();
      else if (key == "backbone_width") c.backbone_width = value.get<std::vector<int>>();
      else if (key == "output_stride") c.output_stride = value.get<int>();
      else if (key == "aspp_rates") c.aspp_rates = value.get<std::vector<int>>();
      else if (key == "fusion_dim") c.fusion_dim = value.get<int>();
      else if (key == "lang_dim") c.lang_dim = value.get<int>();
      else if (key == "vocab_size") c.vocab_size = value.get<int>();
      else if (key == "max_tokens") c.max_tokens = value.get<int>();
      else if (key == "lang_layers") c.lang_layers = value.get<int>();
      else if (key == "lang_heads") c.lang_heads = value.get<int>();
      else if (key == "ffn_dim") c.ffn_dim = value.get<int>();
      else if (key == "fusion_mode") c.fusion_mode = fusion_mode_from_string(value.get<std::string>());
      else if (key == "decoder_kernel") c.decoder_kernel = value.get<int>();
      else if (key == "num_output_maps") c.num_output_maps = value.get<int>();
      else fail(ErrorCode::kConfigError, "unknown model config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfigError, std::string("bad model config value: ") + e.what());
  }
  c.validate();
  return c;
}

/// All learnable weights, addressed by dotted names. The prefix names the
/// sub-network: visual., language., fusion., decoder.
struct ModelParams {
  ModelConfig config;
  std::map<std::string, Tensor> weights;

  const Tensor& at(const std::string& name) const {
    auto it = weights.find(name);
    if (it == weights.end()) fail(ErrorCode::kShapeError, "missing weight " + name);
    return it->second;
  }
};

inline bool is_language_weight(const std::string& name) { return name.rfind("language.", 0) == 0; }

/// Name -> shape for every weight the configuration requires.
inline std::map<std::string, Shape> expected_shapes(const ModelConfig& c) {
  std::map<std::string, Shape> s;
  auto conv = [&](const std::string& n, int out, int in, int k) {
    s[n + ".weight"] = {out, in, k, k};
    s[n + ".bias"] = {out};
  };
  auto lin = [&](const std::string& n, int in, int out) {
    s[n + ".weight"] = {in, out};
    s[n + ".bias"] = {out};
  };
  auto ln = [&](const std::string& n, int d) {
    s[n + ".gamma"] = {d};
    s[n + ".beta"] = {d};
  };
  int in = c.image_channels;
  for (std::size_t i = 0; i < c.backbone_width.size(); ++i) {
    const std::string stage = "visual.stage" + std::to_string(i);
    conv(stage + ".down", c.backbone_width[i], in, 3);
    conv(stage + ".refine", c.backbone_width[i], c.backbone_width[i], 3);
    in = c.backbone_width[i];
  }
  const int f = c.fusion_dim;
  conv("visual.aspp.point", f, in, 1);
  for (std::size_t i = 0; i < c.aspp_rates.size(); ++i)
    conv("visual.aspp.atrous" + std::to_string(i), f, in, 3);
  conv("visual.aspp.pool", f, in, 1);
  conv("visual.aspp.merge", f, f * static_cast<int>(c.aspp_rates.size() + 2), 1);

  const int d = c.lang_dim;
  s["language.tok_embed"] = {c.vocab_size, d};
  s["language.pos_embed"] = {c.max_tokens, d};
  ln("language.embed_ln", d);
  for (int l = 0; l < c.lang_layers; ++l) {
    const std::string p = "language.layer" + std::to_string(l);
    for (const char* m : {".query", ".key", ".value", ".attn_out"}) lin(p + m, d, d);
    ln(p + ".ln1", d);
    lin(p + ".ffn_in", d, c.ffn());
    lin(p + ".ffn_out", c.ffn(), d);
    ln(p + ".ln2", d);
  }
  lin("language.mlm_head", d, c.vocab_size);

  lin("fusion.proj", d, f);
  if (c.fusion_mode == FusionMode::kConcat) conv("fusion.concat", f, 2 * f, 1);
  conv("decoder", c.num_output_maps, f, c.decoder_kernel);
  return s;
}

inline ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.config = config;
  for (const auto& [name, shape] : expected_shapes(config)) {
    const bool is_bias = name.ends_with(".bias") || name.ends_with(".beta");
    Tensor t(shape);
    if (name.ends_with(".gamma")) {
      t = Tensor(shape, 1.0);
    } else if (name == "fusion.proj.bias") {
      t = Tensor(shape, 1.0);  // starts as an identity gate on the visual map
    } else if (is_bias) {
      t = Tensor(shape, 0.0);
    } else if (name.rfind("language.mlm_head", 0) == 0) {
      t = normal_tensor(shape, 0.02, rng);  // near-uniform token distribution at init
    } else if (name == "language.tok_embed" || name == "language.pos_embed") {
      t = normal_tensor(shape, 1.0, rng);
    } else if (shape.size() == 4) {
      const int fan_in = shape[1] * shape[2] * shape[3];
      t = normal_tensor(shape, std::sqrt(2.0 / fan_in), rng);
    } else {
      t = normal_tensor(shape, 1.0 / std::sqrt(static_cast<double>(shape[0])), rng);
    }
    p.weights.emplace(name, std::move(t));
  }
  return p;
}

/// Checks that params hold exactly the weights their config calls for.
inline void validate_params(const ModelParams& p) {
  const auto shapes = expected_shapes(p.config);
  for (const auto& [name, shape] : shapes) {
    auto it = p.weights.find(name);
    if (it == p.weights.end()) fail(ErrorCode::kShapeError, "missing weight " + name);
    if (it->second.shape != shape) {
      fail(ErrorCode::kShapeError, name + " has shape " + shape_str(it->second.shape) +
                                       ", config requires " + shape_str(shape));
    }
  }
  for (const auto& [name, t] : p.weights)
    if (!shapes.count(name)) fail(ErrorCode::kShapeError, "unexpected weight " + name);
}

// ------------------------------------------------------------ graph building

/// Weights lifted into graph leaves for one forward pass.
class BoundParams {
 public:
  BoundParams(const ModelParams& p, const std::function<bool(const std::string&)>& trainable)
      : config_(p.config) {
    for (const auto& [name, t] : p.weights) vars_.emplace(name, ag::leaf(t, trainable(name)));
  }
  explicit BoundParams(const ModelParams& p)
      : BoundParams(p, [](const std::string&) { return false; }) {}

  const ag::Var& operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) fail(ErrorCode::kShapeError, "missing weight " + name);
    return it->second;
  }
  const ModelConfig& config() const { return config_; }
  const std::map<std::string, ag::Var>& vars() const { return vars_; }

 private:
  ModelConfig config_;
  std::map<std::string, ag::Var> vars_;
};

namespace graph {

inline ag::Var conv(const BoundParams& w, const std::string& name, const ag::Var& x,
                    ag::ConvSpec spec = {}) {
  return ag::conv2d(x, w[name + ".weight"], w[name + ".bias"], spec);
}

inline ag::Var linear(const BoundParams& w, const std::string& name, const ag::Var& x) {
  return ag::linear(x, w[name + ".weight"], w[name + ".bias"]);
}

inline ag::Var layer_norm(const BoundParams& w, const std::string& name, const ag::Var& x) {
  return ag::layer_norm_rows(x, w[name + ".gamma"], w[name + ".beta"]);
}

/// Strided stages: [C,H,W] -> [backbone_width.back(), H/s, W/s].
inline ag::Var backbone(const BoundParams& w, const ag::Var& image) {
  const auto& c = w.config();
  const auto& shape = image.shape();
  if (shape.size() != 3 || shape[0] != c.image_channels) {
    fail(ErrorCode::kShapeError, "image must be [" + std::to_string(c.image_channels) +
                                     ",H,W], got " + shape_str(shape));
  }
  if (shape[1] % c.output_stride != 0 || shape[2] % c.output_stride != 0) {
    fail(ErrorCode::kShapeError, "image " + std::to_string(shape[1]) + "x" +
                                     std::to_string(shape[2]) + " not divisible by output stride " +
                                     std::to_string(c.output_stride));
  }
  ag::Var x = image;
  for (std::size_t i = 0; i < c.backbone_width.size(); ++i) {
    const std::string stage = "visual.stage" + std::to_string(i);
    x = ag::relu(conv(w, stage + ".down", x, {2, 1, 1}));
    x = ag::relu(conv(w, stage + ".refine", x, {1, 1, 1}));
  }
  return x;
}

/// One dilated 3x3 branch of the atrous pyramid.
inline ag::Var atrous_branch(const BoundParams& w, const ag::Var& features, std::size_t index) {
  const int rate = w.config().aspp_rates.at(index);
  return ag::relu(
      conv(w, "visual.aspp.atrous" + std::to_string(index), features, {1, rate, rate}));
}

inline ag::Var aspp(const BoundParams& w, const ag::Var& features) {
  const auto& c = w.config();
  const int h = features.shape()[1], wd = features.shape()[2];
  std::vector<ag::Var> branches;
  branches.push_back(ag::relu(conv(w, "visual.aspp.point", features)));
  for (std::size_t i = 0; i < c.aspp_rates.size(); ++i) branches.push_back(atrous_branch(w, features, i));
  const int in = features.shape()[0];
  ag::Var pooled = ag::reshape(ag::global_avg_pool(features), {in, 1, 1});
  pooled = ag::relu(conv(w, "visual.aspp.pool", pooled));
  branches.push_back(ag::broadcast_spatial(ag::reshape(pooled, {c.fusion_dim}), h, wd));
  return ag::relu(conv(w, "visual.aspp.merge", ag::concat_channels(branches)));
}

inline ag::Var encode_image(const BoundParams& w, const ag::Var& image) {
  return aspp(w, backbone(w, image));
}

/// All token states [T, lang_dim].
inline ag::Var token_states(const BoundParams& w, const TokenSeq& tokens) {
  const auto& c = w.config();
  validate_tokens(tokens, c.vocab_size, c.max_tokens);
  const int t = static_cast<int>(tokens.size());
  const int d = c.lang_dim;
  const int heads = c.lang_heads;
  const int dh = d / heads;
  ag::Var h = ag::add(ag::embedding(w["language.tok_embed"], tokens.ids),
                      ag::slice_rows(w["language.pos_embed"], 0, t));
  h = layer_norm(w, "language.embed_ln", h);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int l = 0; l < c.lang_layers; ++l) {
    const std::string p = "language.layer" + std::to_string(l);
    const ag::Var q = linear(w, p + ".query", h);
    const ag::Var k = linear(w, p + ".key", h);
    const ag::Var v = linear(w, p + ".value", h);
    std::vector<ag::Var> ctx;
    for (int hd = 0; hd < heads; ++hd) {
      const ag::Var qh = ag::slice_cols(q, hd * dh, dh);
      const ag::Var kh = ag::slice_cols(k, hd * dh, dh);
      const ag::Var vh = ag::slice_cols(v, hd * dh, dh);
      const ag::Var att = ag::softmax_rows(ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_sqrt));
      ctx.push_back(ag::matmul(att, vh));
    }
    const ag::Var attn = linear(w, p + ".attn_out", ag::concat_cols(ctx));
    h = layer_norm(w, p + ".ln1", ag::add(h, attn));
    const ag::Var ff = linear(w, p + ".ffn_out", ag::gelu(linear(w, p + ".ffn_in", h)));
    h = layer_norm(w, p + ".ln2", ag::add(h, ff));
  }
  return h;
}

/// The state at the leading summary token, [lang_dim].
inline ag::Var encode_phrase(const BoundParams& w, const TokenSeq& tokens) {
  return ag::reshape(ag::slice_rows(token_states(w, tokens), 0, 1), {w.config().lang_dim});
}

inline ag::Var project_phrase(const BoundParams& w, const ag::Var& phrase) {
  const int d = w.config().lang_dim;
  if (phrase.shape() != Shape{d}) {
    fail(ErrorCode::kShapeError, "phrase embedding " + shape_str(phrase.shape()) +
                                     " does not match lang_dim " + std::to_string(d));
  }
  return ag::reshape(linear(w, "fusion.proj", ag::reshape(phrase, {1, d})), {w.config().fusion_dim});
}

/// Combines a visual map with an already-projected phrase vector.
inline ag::Var combine(const BoundParams& w, const ag::Var& visual, const ag::Var& projected) {
  const auto& c = w.config();
  if (visual.shape().size() != 3 || visual.shape()[0] != c.fusion_dim) {
    fail(ErrorCode::kShapeError, "visual map " + shape_str(visual.shape()) +
                                     " does not have fusion_dim channels");
  }
  switch (c.fusion_mode) {
    case FusionMode::kMultiply: return ag::scale_channels(visual, projected);
    case FusionMode::kAdd: return ag::add_channels(visual, projected);
    case FusionMode::kConcat: {
      const ag::Var tiled = ag::broadcast_spatial(projected, visual.shape()[1], visual.shape()[2]);
      return conv(w, "fusion.concat", ag::concat_channels({visual, tiled}));
    }
  }
  return visual;
}

inline ag::Var fuse(const BoundParams& w, const ag::Var& visual, const ag::Var& phrase) {
  return combine(w, visual, project_phrase(w, phrase));
}

inline ag::Var decode_mask(const BoundParams& w, const ag::Var& fused, int height, int width) {
  const auto& c = w.config();
  if (fused.shape().size() != 3 || fused.shape()[0] != c.fusion_dim) {
    fail(ErrorCode::kShapeError, "fused map " + shape_str(fused.shape()) + " has wrong channels");
  }
  if (height != fused.shape()[1] * c.output_stride || width != fused.shape()[2] * c.output_stride) {
    fail(ErrorCode::kShapeError, "target " + std::to_string(height) + "x" + std::to_string(width) +
                                     " is not output_stride times the fused map " +
                                     shape_str(fused.shape()));
  }
  const int pad = (c.decoder_kernel - 1) / 2;
  return ag::upsample_bilinear(conv(w, "decoder", fused, {1, 1, pad}), height, width);
}

inline ag::Var forward(const BoundParams& w, const ag::Var& image, const TokenSeq& tokens) {
  const ag::Var visual = encode_image(w, image);
  const ag::Var fused = fuse(w, visual, encode_phrase(w, tokens));
  return decode_mask(w, fused, image.shape()[1], image.shape()[2]);
}

}  // namespace graph

// ----------------------------------------------------------- value-level API

inline Tensor encode_image(const ModelParams& p, const Tensor& image) {
  return graph::encode_image(BoundParams(p), ag::constant(image)).value();
}

inline std::vector<double> encode_phrase(const ModelParams& p, const TokenSeq& tokens) {
  return graph::encode_phrase(BoundParams(p), tokens).value().data;
}

inline Tensor fuse(const ModelParams& p, const Tensor& visual, const std::vector<double>& phrase) {
  const BoundParams w(p);
  return graph::fuse(w, ag::constant(visual),
                     ag::constant(Tensor({static_cast<int>(phrase.size())}, phrase)))
      .value();
}

/// The phrase's fusion_dim projection (what multiplies the visual map).
inline std::vector<double> project_phrase(const ModelParams& p, const std::vector<double>& phrase) {
  const BoundParams w(p);
  return graph::project_phrase(w, ag::constant(Tensor({static_cast<int>(phrase.size())}, phrase)))
      .value()
      .data;
}

inline Tensor decode_mask(const ModelParams& p, const Tensor& fused, int height, int width) {
  return graph::decode_mask(BoundParams(p), ag::constant(fused), height, width).value();
}

/// Logits [2,H,W]; channel 0 foreground, channel 1 background.
inline Tensor forward(const ModelParams& p, const Tensor& image, const TokenSeq& tokens) {
  return graph::forward(BoundParams(p), ag::constant(image), tokens).value();
}

/// Visual encoder straight into the decoder, skipping the language path.
inline Tensor forward_without_fusion(const ModelParams& p, const Tensor& image) {
  const BoundParams w(p);
  const ag::Var visual = graph::encode_image(w, ag::constant(image));
  return graph::decode_mask(w, visual, image.dim(1), image.dim(2)).value();
}

inline std::vector<Tensor> forward_batch(const ModelParams& p, std::span<const Tensor> images,
                                         std::span<const TokenSeq> tokens) {
  if (images.size() != tokens.size()) fail(ErrorCode::kLengthMismatch, "batch images vs phrases");
  const BoundParams w(p);
  std::vector<Tensor> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i)
    out.push_back(graph::forward(w, ag::constant(images[i]), tokens[i]).value());
  return out;
}

inline double segmentation_loss(const Tensor& logits, const Mask& gt) {
  return ag::pixel_cross_entropy(ag::constant(logits), gt).value()[0];
}

/// Foreground where its map is strictly larger; ties go to background.
inline Mask logits_to_mask(const Tensor& logits) {
  if (logits.rank() != 3 || logits.dim(0) != 2)
    fail(ErrorCode::kShapeError, "logits must be [2,H,W], got " + shape_str(logits.shape));
  const int h = logits.dim(1), w = logits.dim(2);
  Mask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (logits.at(0, y, x) > logits.at(1, y, x)) m.set(y, x);
  return m;
}

inline Mask predict(const ModelParams& p, const Tensor& image, const TokenSeq& tokens) {
  return logits_to_mask(forward(p, image, tokens));
}

}  // namespace refseg

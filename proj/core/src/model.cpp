#include "lano/model.hpp"

#include <array>
#include <cmath>
#include <string>

#include "lano/error.hpp"
#include "lano/ops.hpp"
#include "lano/rng.hpp"

namespace lano {

std::string_view to_string(DecodeVariant v) { return v == DecodeVariant::reuse ? "reuse" : "recalc"; }

std::string_view to_string(TokenMixer m) {
  switch (m) {
    case TokenMixer::attention: return "attention";
    case TokenMixer::mlp: return "mlp";
    case TokenMixer::none: return "none";
  }
  return "unknown";
}

DecodeVariant parse_decode_variant(std::string_view text) {
  if (text == "reuse" || text == "lano") return DecodeVariant::reuse;
  if (text == "recalc" || text == "lano-s") return DecodeVariant::recalc;
  throw ValueError("unknown decode variant '" + std::string(text) + "'");
}

TokenMixer parse_token_mixer(std::string_view text) {
  if (text == "attention" || text == "attn") return TokenMixer::attention;
  if (text == "mlp") return TokenMixer::mlp;
  if (text == "none") return TokenMixer::none;
  throw ValueError("unknown token mixer '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValueError("model config: " + m); };
  if (layers < 1) fail("layers must be >= 1");
  if (channels < 1 || heads < 1) fail("channels and heads must be >= 1");
  if (channels % heads != 0) {
    fail("channels " + std::to_string(channels) + " not divisible by heads " + std::to_string(heads));
  }
  if (latent_tokens < 1) fail("latent_tokens must be >= 1");
  if (!(temperature > 0.0)) fail("temperature must be > 0");
  if (!(epsilon >= 0.0)) fail("epsilon must be >= 0");
  if (pconv_kernel < 1 || pconv_kernel % 2 == 0) fail("pconv_kernel must be odd");
  if (history < 1) fail("history must be >= 1");
  if (physical_channels < 1) fail("physical_channels must be >= 1");
  if (mlp_ratio < 1) fail("mlp_ratio must be >= 1");
}

KeyValue ModelConfig::to_keyvalue() const {
  KeyValue kv;
  kv.set("layers", static_cast<std::uint64_t>(layers));
  kv.set("channels", static_cast<std::uint64_t>(channels));
  kv.set("heads", static_cast<std::uint64_t>(heads));
  kv.set("latent_tokens", static_cast<std::uint64_t>(latent_tokens));
  kv.set("temperature", temperature);
  kv.set("epsilon", epsilon);
  kv.set("pconv_kernel", static_cast<std::uint64_t>(pconv_kernel));
  kv.set("history", static_cast<std::uint64_t>(history));
  kv.set("physical_channels", static_cast<std::uint64_t>(physical_channels));
  kv.set("mlp_ratio", static_cast<std::uint64_t>(mlp_ratio));
  kv.set("variant", std::string(to_string(variant)));
  kv.set("token_mixer", std::string(to_string(token_mixer)));
  kv.set("boundary_first", boundary_first);
  return kv;
}

ModelConfig ModelConfig::from_keyvalue(const KeyValue& kv) {
  ModelConfig c;
  c.layers = kv.get_uint("layers");
  c.channels = kv.get_uint("channels");
  c.heads = kv.get_uint("heads");
  c.latent_tokens = kv.get_uint("latent_tokens");
  c.temperature = kv.get_double("temperature");
  c.epsilon = kv.get_double("epsilon");
  c.pconv_kernel = kv.get_uint("pconv_kernel");
  c.history = kv.get_uint("history");
  c.physical_channels = kv.get_uint("physical_channels");
  c.mlp_ratio = kv.get_uint("mlp_ratio");
  c.variant = parse_decode_variant(kv.get("variant"));
  c.token_mixer = parse_token_mixer(kv.get("token_mixer"));
  c.boundary_first = kv.get_bool("boundary_first");
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

namespace {

template <typename T>
using Field = std::pair<const char*, Tensor<T> LayerParams<T>::*>;

template <typename T>
const std::array<Field<T>, 27>& layer_fields() {
  using L = LayerParams<T>;
  static const std::array<Field<T>, 27> fields{{
      {"ln1_gamma", &L::ln1_gamma}, {"ln1_beta", &L::ln1_beta},
      {"slice_w1", &L::slice_w1},   {"slice_b1", &L::slice_b1},
      {"slice_w2", &L::slice_w2},   {"slice_b2", &L::slice_b2},
      {"pconv_w", &L::pconv_w},     {"pconv_b", &L::pconv_b},
      {"attn_q", &L::attn_q},       {"attn_k", &L::attn_k},
      {"attn_v", &L::attn_v},       {"mix_w1", &L::mix_w1},
      {"mix_b1", &L::mix_b1},       {"mix_w2", &L::mix_w2},
      {"mix_b2", &L::mix_b2},       {"pos_w1", &L::pos_w1},
      {"pos_b1", &L::pos_b1},       {"pos_w2", &L::pos_w2},
      {"pos_b2", &L::pos_b2},       {"merge_w", &L::merge_w},
      {"merge_b", &L::merge_b},     {"ln2_gamma", &L::ln2_gamma},
      {"ln2_beta", &L::ln2_beta},   {"mlp_w1", &L::mlp_w1},
      {"mlp_b1", &L::mlp_b1},       {"mlp_w2", &L::mlp_w2},
      {"mlp_b2", &L::mlp_b2},
  }};
  return fields;
}

template <typename T, typename P, typename F>
void visit_params(P& params, F&& f) {
  f(std::string("embed_w"), params.embed_w);
  f(std::string("embed_b"), params.embed_b);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& layer = params.layers[l];
    const std::string prefix = "layers." + std::to_string(l) + ".";
    for (const auto& [name, member] : layer_fields<T>()) f(prefix + name, layer.*member);
  }
  f(std::string("out_w"), params.out_w);
  f(std::string("out_b"), params.out_b);
}

template <typename T>
Tensor<T> uniform_tensor(Rng& rng, Shape shape, double bound) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
Tensor<T> uniform_range(Rng& rng, Shape shape, double lo, double hi) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
Tensor<T> mask_tensor(const std::vector<T>& mask, Shape shape) {
  return Tensor<T>(std::move(shape), mask);
}

}  // namespace

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> ModelParams<T>::named() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  visit_params<T>(*this, [&](const std::string& name, Tensor<T>& t) {
    if (t.defined()) out.emplace_back(name, &t);
  });
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> ModelParams<T>::named() const {
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  visit_params<T>(*this, [&](const std::string& name, const Tensor<T>& t) {
    if (t.defined()) out.emplace_back(name, &t);
  });
  return out;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += t->numel();
  return n;
}

template <typename T>
void ModelParams<T>::set_requires_grad(bool flag) {
  for (auto& [name, t] : named()) t->set_requires_grad(flag);
}

template <typename T>
void ModelParams<T>::zero_grad() {
  for (auto& [name, t] : named()) t->zero_grad();
}

template <typename T>
ModelParams<T> ModelParams<T>::clone() const {
  return cast_params<T, T>(*this);
}

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& src) {
  ModelParams<To> dst;
  auto convert = [](const Tensor<From>& t) {
    if (!t.defined()) return Tensor<To>();
    std::vector<To> v(t.values().begin(), t.values().end());
    Tensor<To> out(t.shape(), std::move(v));
    out.set_requires_grad(t.requires_grad());
    return out;
  };
  dst.embed_w = convert(src.embed_w);
  dst.embed_b = convert(src.embed_b);
  dst.out_w = convert(src.out_w);
  dst.out_b = convert(src.out_b);
  dst.layers.resize(src.layers.size());
  for (std::size_t l = 0; l < src.layers.size(); ++l) {
    const auto& ff = layer_fields<From>();
    const auto& ft = layer_fields<To>();
    for (std::size_t i = 0; i < ff.size(); ++i) dst.layers[l].*(ft[i].second) = convert(src.layers[l].*(ff[i].second));
  }
  return dst;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& c, std::uint64_t seed, const InitOptions& options) {
  c.validate();
  Rng rng(seed);
  const std::size_t H = c.heads, Ch = c.head_channels(), L = c.latent_tokens, C = c.channels;
  const std::size_t k = c.pconv_kernel, R = c.mlp_ratio * C;
  const double kk = static_cast<double>(k * k);
  auto fan = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };

  ModelParams<T> p;
  p.embed_w = uniform_tensor<T>(rng, {c.input_width(), C}, fan(c.input_width()));
  p.embed_b = uniform_tensor<T>(rng, {C}, fan(c.input_width()));
  p.layers.resize(c.layers);
  for (auto& layer : p.layers) {
    if (options.randomize_all) {
      layer.ln1_gamma = uniform_range<T>(rng, {C}, 0.5, 1.5);
      layer.ln1_beta = uniform_tensor<T>(rng, {C}, 0.1);
    } else {
      layer.ln1_gamma = Tensor<T>::ones({C});
      layer.ln1_beta = Tensor<T>::zeros({C});
    }
    layer.slice_w1 = uniform_tensor<T>(rng, {H, Ch, Ch}, fan(Ch));
    layer.slice_b1 = uniform_tensor<T>(rng, {H, 1, Ch}, fan(Ch));
    layer.slice_w2 = uniform_tensor<T>(rng, {H, Ch, L}, fan(Ch));
    layer.slice_b2 = uniform_tensor<T>(rng, {H, 1, L}, fan(Ch));
    if (c.boundary_first) {
      if (options.randomize_all) {
        layer.pconv_w = uniform_range<T>(rng, {H * L, 1, k, k}, 0.5 / kk, 1.5 / kk);
        layer.pconv_b = uniform_range<T>(rng, {H * L}, 0.0, 0.05);
      } else {
        layer.pconv_w = Tensor<T>({H * L, 1, k, k}, static_cast<T>(1.0 / kk));
        layer.pconv_b = Tensor<T>::zeros({H * L});
      }
    }
    if (c.token_mixer == TokenMixer::attention) {
      layer.attn_q = uniform_tensor<T>(rng, {H, Ch, Ch}, fan(Ch));
      layer.attn_k = uniform_tensor<T>(rng, {H, Ch, Ch}, fan(Ch));
      layer.attn_v = uniform_tensor<T>(rng, {H, Ch, Ch}, fan(Ch));
    } else if (c.token_mixer == TokenMixer::mlp) {
      layer.mix_w1 = uniform_tensor<T>(rng, {H, L, L}, fan(L));
      layer.mix_b1 = uniform_tensor<T>(rng, {H, L, 1}, fan(L));
      layer.mix_w2 = uniform_tensor<T>(rng, {H, L, L}, fan(L));
      layer.mix_b2 = uniform_tensor<T>(rng, {H, L, 1}, fan(L));
    }
    if (c.variant == DecodeVariant::recalc) {
      layer.pos_w1 = uniform_tensor<T>(rng, {H, 2, Ch}, fan(2));
      layer.pos_b1 = uniform_tensor<T>(rng, {H, 1, Ch}, fan(2));
      layer.pos_w2 = uniform_tensor<T>(rng, {H, Ch, L}, fan(Ch));
      layer.pos_b2 = uniform_tensor<T>(rng, {H, 1, L}, fan(Ch));
    }
    if (options.randomize_all) {
      layer.merge_w = uniform_tensor<T>(rng, {C, C}, fan(C));
      layer.merge_b = uniform_tensor<T>(rng, {C}, fan(C));
      layer.ln2_gamma = uniform_range<T>(rng, {C}, 0.5, 1.5);
      layer.ln2_beta = uniform_tensor<T>(rng, {C}, 0.1);
    } else {
      layer.merge_w = Tensor<T>::zeros({C, C});
      layer.merge_b = Tensor<T>::zeros({C});
      layer.ln2_gamma = Tensor<T>::ones({C});
      layer.ln2_beta = Tensor<T>::zeros({C});
    }
    layer.mlp_w1 = uniform_tensor<T>(rng, {C, R}, fan(C));
    layer.mlp_b1 = uniform_tensor<T>(rng, {R}, fan(C));
    layer.mlp_w2 = uniform_tensor<T>(rng, {R, C}, fan(R));
    layer.mlp_b2 = uniform_tensor<T>(rng, {C}, fan(R));
  }
  p.out_w = uniform_tensor<T>(rng, {C, c.physical_channels}, fan(C));
  p.out_b = uniform_tensor<T>(rng, {c.physical_channels}, fan(C));
  return p;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> grid_coords(std::size_t height, std::size_t width) {
  Tensor<T> c({height * width, 2});
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      c[2 * (y * width + x)] = static_cast<T>(static_cast<double>(x) / static_cast<double>(width));
      c[2 * (y * width + x) + 1] = static_cast<T>(static_cast<double>(y) / static_cast<double>(height));
    }
  }
  return c;
}

template <typename T>
Tensor<T> temporal_aggregate(const Tensor<T>& coords, const Tensor<T>& frames, const ModelParams<T>& params,
                             const ModelConfig& config) {
  if (frames.rank() != 3 || frames.dim(0) != config.history || frames.dim(2) != config.physical_channels) {
    throw ShapeError("temporal_aggregate: frames " + shape_string(frames.shape()) + " do not match history " +
                     std::to_string(config.history) + " x N x " + std::to_string(config.physical_channels));
  }
  const std::size_t N = frames.dim(1);
  auto x = reshape(permute(frames, {1, 0, 2}), {N, config.history * config.physical_channels});
  return linear(concat<T>({coords, x}, 1), params.embed_w, params.embed_b);
}

template <typename T>
Encoded<T> phca_encode(const Tensor<T>& y_heads, const std::vector<T>& mask, const LayerParams<T>& layer,
                       const ModelConfig& config) {
  const std::size_t N = y_heads.dim(1);
  if (mask.size() != N) {
    throw ShapeError("phca_encode: mask of " + std::to_string(mask.size()) + " points vs features " +
                     shape_string(y_heads.shape()));
  }
  bool any = false;
  for (T m : mask) any = any || m != T(0);
  if (!any) throw ValueError("phca_encode: no observed point to aggregate");

  auto h = gelu(matmul(y_heads, layer.slice_w1) + layer.slice_b1);
  auto logits = matmul(h, layer.slice_w2) + layer.slice_b2;
  Encoded<T> e;
  e.slice_pre = softmax(scale(logits, static_cast<T>(1.0 / config.temperature)), 2);
  e.slice = e.slice_pre * mask_tensor(mask, {1, N, 1});
  auto colsum = transpose(sum(e.slice, 1, true), 1, 2);  // [H,L,1]
  e.tokens = matmul(e.slice, y_heads, true, false) / add_scalar(colsum, static_cast<T>(config.epsilon));
  return e;
}

template <typename T>
Propagated<T> pconv_propagate(const Tensor<T>& slice, const std::vector<T>& mask, std::size_t height,
                              std::size_t width, const LayerParams<T>& layer, const ModelConfig& config) {
  const std::size_t H = slice.dim(0), N = slice.dim(1), L = slice.dim(2);
  if (N != height * width || mask.size() != N) {
    throw ShapeError("pconv_propagate: slice " + shape_string(slice.shape()) + " vs grid " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  const std::size_t k = config.pconv_kernel;
  const long r = static_cast<long>(k / 2);
  const auto Hl = static_cast<long>(height), Wl = static_cast<long>(width);

  // Window counts of observed cells; zero padding counts as unobserved.
  std::vector<T> ratio(N), next(N);
  for (long y = 0; y < Hl; ++y) {
    for (long x = 0; x < Wl; ++x) {
      std::size_t count = 0;
      for (long dy = -r; dy <= r; ++dy) {
        for (long dx = -r; dx <= r; ++dx) {
          const long yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < Hl && xx >= 0 && xx < Wl && mask[static_cast<std::size_t>(yy * Wl + xx)] != T(0)) ++count;
        }
      }
      const auto i = static_cast<std::size_t>(y * Wl + x);
      ratio[i] = count ? static_cast<T>(static_cast<double>(k * k) / static_cast<double>(count)) : T(0);
      next[i] = count ? T(1) : T(0);
    }
  }

  auto grid = reshape(permute(slice, {0, 2, 1}), {H * L, height, width});
  auto conv = conv2d(grid, layer.pconv_w, Tensor<T>(), H * L, k / 2);
  auto out = conv * mask_tensor(ratio, {1, height, width}) +
             reshape(layer.pconv_b, {H * L, 1, 1}) * mask_tensor(next, {1, height, width});
  Propagated<T> p;
  p.slice = permute(reshape(out, {H, L, N}), {0, 2, 1});
  p.mask = std::move(next);
  return p;
}

template <typename T>
Tensor<T> token_mix(const Tensor<T>& tokens, const LayerParams<T>& layer, const ModelConfig& config) {
  switch (config.token_mixer) {
    case TokenMixer::none: return tokens;
    case TokenMixer::attention: {
      auto q = matmul(tokens, layer.attn_q);
      auto k = matmul(tokens, layer.attn_k);
      auto v = matmul(tokens, layer.attn_v);
      const T s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(config.head_channels())));
      auto a = softmax(scale(matmul(q, k, false, true), s), 2);
      return matmul(a, v);
    }
    case TokenMixer::mlp: {
      auto h = gelu(matmul(layer.mix_w1, tokens, true, false) + layer.mix_b1);
      return matmul(layer.mix_w2, h, true, false) + layer.mix_b2;
    }
  }
  return tokens;
}

template <typename T>
Tensor<T> decode_weights(const Tensor<T>& propagated, const std::vector<T>& mask_next, const Tensor<T>& coords,
                         const LayerParams<T>& layer, const ModelConfig& config) {
  const std::size_t N = mask_next.size();
  const auto m = mask_tensor(mask_next, {1, N, 1});
  Tensor<T> d = propagated * m;
  if (config.variant == DecodeVariant::recalc) {
    auto h = gelu(matmul(coords, layer.pos_w1) + layer.pos_b1);
    auto logits = matmul(h, layer.pos_w2) + layer.pos_b2;
    d = softmax(scale(logits, static_cast<T>(1.0 / config.temperature)), 2) * m;
  }
  if (config.corrupt_decode_normalization) return d;
  std::vector<T> hole(N);
  for (std::size_t i = 0; i < N; ++i) hole[i] = T(1) - mask_next[i] + static_cast<T>(1e-12);
  return d / (sum(abs(d), 2, true) + mask_tensor(hole, {1, N, 1}));
}

template <typename T>
Tensor<T> phca_decode(const Tensor<T>& mixed, const Tensor<T>& propagated, const std::vector<T>& mask_next,
                      const Tensor<T>& coords, const LayerParams<T>& layer, const ModelConfig& config,
                      Tensor<T>* decode_map) {
  auto w = decode_weights(propagated, mask_next, coords, layer, config);
  if (decode_map) *decode_map = w;
  const std::size_t N = mask_next.size();
  auto y = reshape(permute(matmul(w, mixed), {1, 0, 2}), {N, config.channels});
  return linear(y, layer.merge_w, layer.merge_b);
}

template <typename T>
LayerOutput<T> latent_operator_layer(const Tensor<T>& y, const std::vector<T>& mask, const Tensor<T>& coords,
                                     std::size_t height, std::size_t width, const LayerParams<T>& layer,
                                     const ModelConfig& config, LayerTrace<T>* trace) {
  const std::size_t N = y.dim(0), H = config.heads, Ch = config.head_channels();
  auto x = layer_norm(y, layer.ln1_gamma, layer.ln1_beta);
  auto yh = permute(reshape(x, {N, H, Ch}), {1, 0, 2});
  auto enc = phca_encode(yh, mask, layer, config);

  Propagated<T> prop;
  if (config.boundary_first) {
    prop = pconv_propagate(enc.slice, mask, height, width, layer, config);
  } else {
    prop.slice = enc.slice;
    prop.mask = mask;
  }
  auto mixed = token_mix(enc.tokens, layer, config);
  Tensor<T> dmap;
  auto branch = phca_decode(mixed, prop.slice, prop.mask, coords, layer, config, &dmap);
  auto yhat = branch + y;
  auto out = yhat + linear(gelu(linear(layer_norm(yhat, layer.ln2_gamma, layer.ln2_beta), layer.mlp_w1,
                                       layer.mlp_b1)),
                           layer.mlp_w2, layer.mlp_b2);
  if (trace) {
    trace->mask_in = mask;
    trace->mask_out = prop.mask;
    trace->slice_pre = enc.slice_pre;
    trace->slice = enc.slice;
    trace->tokens = enc.tokens;
    trace->propagated = prop.slice;
    trace->mixed = mixed;
    trace->decode_map = dmap;
    trace->branch = branch;
    trace->residual = yhat;
    trace->output = out;
  }
  return {out, std::move(prop.mask)};
}

template <typename T>
Tensor<T> lano_forward(std::size_t height, std::size_t width, const std::vector<T>& frames,
                       const std::vector<std::uint8_t>& mask, const ModelParams<T>& params,
                       const ModelConfig& config, ForwardTrace<T>* trace) {
  const std::size_t N = height * width, Cp = config.physical_channels, Th = config.history;
  if (mask.size() != N) {
    throw ShapeError("lano_forward: mask of " + std::to_string(mask.size()) + " points for a " +
                     std::to_string(height) + "x" + std::to_string(width) + " grid");
  }
  if (frames.size() != Th * N * Cp) {
    throw ShapeError("lano_forward: " + std::to_string(frames.size()) + " input values, expected history " +
                     std::to_string(Th) + " x " + std::to_string(N) + " x " + std::to_string(Cp));
  }
  if (params.layers.size() != config.layers) {
    throw ValueError("lano_forward: parameters hold " + std::to_string(params.layers.size()) +
                     " layers, config expects " + std::to_string(config.layers));
  }
  std::vector<T> m(N);
  for (std::size_t i = 0; i < N; ++i) m[i] = mask[i] ? T(1) : T(0);
  std::vector<T> masked(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) masked[i] = mask[(i / Cp) % N] ? frames[i] : T(0);

  const auto coords = grid_coords<T>(height, width);
  auto y = temporal_aggregate(coords, Tensor<T>({Th, N, Cp}, std::move(masked)), params, config);
  if (trace) {
    trace->embedding = y;
    trace->layers.assign(config.layers, {});
  }
  for (std::size_t l = 0; l < config.layers; ++l) {
    auto out = latent_operator_layer(y, m, coords, height, width, params.layers[l], config,
                                     trace ? &trace->layers[l] : nullptr);
    y = std::move(out.y);
    m = std::move(out.mask);
  }
  return linear(y, params.out_w, params.out_b);
}

#define LANO_MODEL_INSTANTIATE(T)                                                                        \
  template struct ModelParams<T>;                                                                        \
  template ModelParams<T> init_params<T>(const ModelConfig&, std::uint64_t, const InitOptions&);         \
  template Tensor<T> grid_coords<T>(std::size_t, std::size_t);                                           \
  template Tensor<T> temporal_aggregate<T>(const Tensor<T>&, const Tensor<T>&, const ModelParams<T>&,    \
                                           const ModelConfig&);                                          \
  template Encoded<T> phca_encode<T>(const Tensor<T>&, const std::vector<T>&, const LayerParams<T>&,     \
                                     const ModelConfig&);                                                \
  template Propagated<T> pconv_propagate<T>(const Tensor<T>&, const std::vector<T>&, std::size_t,        \
                                            std::size_t, const LayerParams<T>&, const ModelConfig&);     \
  template Tensor<T> token_mix<T>(const Tensor<T>&, const LayerParams<T>&, const ModelConfig&);          \
  template Tensor<T> decode_weights<T>(const Tensor<T>&, const std::vector<T>&, const Tensor<T>&,        \
                                       const LayerParams<T>&, const ModelConfig&);                       \
  template Tensor<T> phca_decode<T>(const Tensor<T>&, const Tensor<T>&, const std::vector<T>&,           \
                                    const Tensor<T>&, const LayerParams<T>&, const ModelConfig&,         \
                                    Tensor<T>*);                                                         \
  template LayerOutput<T> latent_operator_layer<T>(const Tensor<T>&, const std::vector<T>&,              \
                                                   const Tensor<T>&, std::size_t, std::size_t,           \
                                                   const LayerParams<T>&, const ModelConfig&,            \
                                                   LayerTrace<T>*);                                      \
  template Tensor<T> lano_forward<T>(std::size_t, std::size_t, const std::vector<T>&,                    \
                                     const std::vector<std::uint8_t>&, const ModelParams<T>&,            \
                                     const ModelConfig&, ForwardTrace<T>*);

LANO_MODEL_INSTANTIATE(float)
LANO_MODEL_INSTANTIATE(double)

template ModelParams<float> cast_params<float, float>(const ModelParams<float>&);
template ModelParams<double> cast_params<double, double>(const ModelParams<double>&);
template ModelParams<double> cast_params<double, float>(const ModelParams<float>&);
template ModelParams<float> cast_params<float, double>(const ModelParams<double>&);

}  // namespace lano

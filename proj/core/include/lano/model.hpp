#pragma once

// LANO network: temporal aggregation embedding, stacked latent operator
// layers (encode -> partial-convolution propagation -> token mixing ->
// decode), and a linear output projection.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lano/keyvalue.hpp"
#include "lano/tensor.hpp"

namespace lano {

enum class DecodeVariant : std::uint8_t { reuse = 0, recalc = 1 };
enum class TokenMixer : std::uint8_t { attention = 0, mlp = 1, none = 2 };

std::string_view to_string(DecodeVariant v);
std::string_view to_string(TokenMixer m);
DecodeVariant parse_decode_variant(std::string_view text);  // "reuse"/"lano", "recalc"/"lano-s"
TokenMixer parse_token_mixer(std::string_view text);

struct ModelConfig {
  std::size_t layers = 8;          // D
  std::size_t channels = 64;       // C
  std::size_t heads = 8;           // C_h = C / heads
  std::size_t latent_tokens = 32;  // L
  double temperature = 0.5;        // tau
  double epsilon = 1e-6;
  std::size_t pconv_kernel = 3;
  std::size_t history = 10;            // T
  std::size_t physical_channels = 1;   // C_phys
  std::size_t mlp_ratio = 2;           // block MLP hidden width = mlp_ratio * C
  DecodeVariant variant = DecodeVariant::reuse;
  TokenMixer token_mixer = TokenMixer::attention;
  bool boundary_first = true;

  // Test hook, never serialized: skips the decode-map normalization.
  bool corrupt_decode_normalization = false;

  std::size_t head_channels() const { return channels / heads; }
  std::size_t input_width() const { return 2 + history * physical_channels; }
  /// Throws ValueError on inconsistent values.
  void validate() const;
  KeyValue to_keyvalue() const;
  static ModelConfig from_keyvalue(const KeyValue& kv);
};

template <typename T>
struct LayerParams {
  Tensor<T> ln1_gamma, ln1_beta;                           // [C]
  Tensor<T> slice_w1, slice_b1, slice_w2, slice_b2;        // [H,Ch,Ch] [H,1,Ch] [H,Ch,L] [H,1,L]
  Tensor<T> pconv_w, pconv_b;                              // [H*L,1,k,k] [H*L]
  Tensor<T> attn_q, attn_k, attn_v;                        // [H,Ch,Ch] (attention mixer)
  Tensor<T> mix_w1, mix_b1, mix_w2, mix_b2;                // [H,L,L] [H,L,1] (mlp mixer)
  Tensor<T> pos_w1, pos_b1, pos_w2, pos_b2;                // [H,2,Ch] [H,1,Ch] [H,Ch,L] [H,1,L] (recalc)
  Tensor<T> merge_w, merge_b;                              // [C,C] [C]
  Tensor<T> ln2_gamma, ln2_beta;                           // [C]
  Tensor<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2;                // [C,rC] [rC] [rC,C] [C]
};

template <typename T>
struct ModelParams {
  Tensor<T> embed_w, embed_b;  // [2 + T*C_phys, C] [C]
  std::vector<LayerParams<T>> layers;
  Tensor<T> out_w, out_b;      // [C, C_phys] [C_phys]

  /// Every parameter present for the config, in declaration order, with a
  /// dotted name ("layers.3.pconv_w"). Unused tensors are left undefined and
  /// not listed.
  std::vector<std::pair<std::string, Tensor<T>*>> named();
  std::vector<std::pair<std::string, const Tensor<T>*>> named() const;
  std::size_t parameter_count() const;
  void set_requires_grad(bool flag);
  void zero_grad();
  ModelParams clone() const;
};

struct InitOptions {
  /// Also randomize the partial-convolution kernels/biases and the merge
  /// projection, which otherwise start as averaging kernels and zero.
  bool randomize_all = false;
};

template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed, const InitOptions& options = {});

/// Element-wise precision conversion with identical names and shapes.
template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& params);

/// Per-layer intermediate values.
template <typename T>
struct LayerTrace {
  std::vector<T> mask_in;    // M_cur [N]
  std::vector<T> mask_out;   // M_next [N]
  Tensor<T> slice_pre;       // softmax before masking [H,N,L]
  Tensor<T> slice;           // S [H,N,L]
  Tensor<T> tokens;          // Z [H,L,Ch]
  Tensor<T> propagated;      // S_next [H,N,L]
  Tensor<T> mixed;           // Z' [H,L,Ch]
  Tensor<T> decode_map;      // row-normalized decode weights [H,N,L]
  Tensor<T> branch;          // merged decoder output [N,C]
  Tensor<T> residual;        // Y_hat [N,C]
  Tensor<T> output;          // Y^l [N,C]
};

template <typename T>
struct ForwardTrace {
  Tensor<T> embedding;  // Y^0
  std::vector<LayerTrace<T>> layers;
};

/// Y^0 = Linear(concat(coords, x^1..x^T)). coords [N,2], frames [T,N,C_phys]
/// (already masked).
template <typename T>
Tensor<T> temporal_aggregate(const Tensor<T>& coords, const Tensor<T>& frames, const ModelParams<T>& params,
                             const ModelConfig& config);

template <typename T>
struct Encoded {
  Tensor<T> slice_pre;  // [H,N,L]
  Tensor<T> slice;      // [H,N,L], zero rows where unobserved
  Tensor<T> tokens;     // [H,L,Ch]
};

/// Y_h [H,N,Ch], mask [N] with at least one observed point.
template <typename T>
Encoded<T> phca_encode(const Tensor<T>& y_heads, const std::vector<T>& mask, const LayerParams<T>& layer,
                       const ModelConfig& config);

template <typename T>
struct Propagated {
  Tensor<T> slice;        // [H,N,L]
  std::vector<T> mask;    // [N]
};

/// Partial convolution of S laid out as H*L channels on the grid.
template <typename T>
Propagated<T> pconv_propagate(const Tensor<T>& slice, const std::vector<T>& mask, std::size_t height,
                              std::size_t width, const LayerParams<T>& layer, const ModelConfig& config);

template <typename T>
Tensor<T> token_mix(const Tensor<T>& tokens, const LayerParams<T>& layer, const ModelConfig& config);

/// Decode weights: the propagated map (reuse) or a positional map (recalc),
/// masked by M_next and normalized by the L1 norm of each row over tokens.
template <typename T>
Tensor<T> decode_weights(const Tensor<T>& propagated, const std::vector<T>& mask_next, const Tensor<T>& coords,
                         const LayerParams<T>& layer, const ModelConfig& config);

/// Returns the merged decoder output [N,C] and optionally the decode map.
template <typename T>
Tensor<T> phca_decode(const Tensor<T>& mixed, const Tensor<T>& propagated, const std::vector<T>& mask_next,
                      const Tensor<T>& coords, const LayerParams<T>& layer, const ModelConfig& config,
                      Tensor<T>* decode_map = nullptr);

template <typename T>
struct LayerOutput {
  Tensor<T> y;
  std::vector<T> mask;
};

template <typename T>
LayerOutput<T> latent_operator_layer(const Tensor<T>& y, const std::vector<T>& mask, const Tensor<T>& coords,
                                     std::size_t height, std::size_t width, const LayerParams<T>& layer,
                                     const ModelConfig& config, LayerTrace<T>* trace = nullptr);

/// Next-frame prediction [N, C_phys] on the whole grid. `frames` holds the T
/// history frames as (t, y, x, c); values at unobserved cells are ignored.
template <typename T>
Tensor<T> lano_forward(std::size_t height, std::size_t width, const std::vector<T>& frames,
                       const std::vector<std::uint8_t>& mask, const ModelParams<T>& params,
                       const ModelConfig& config, ForwardTrace<T>* trace = nullptr);

/// Grid coordinates [N,2] in [0,1).
template <typename T>
Tensor<T> grid_coords(std::size_t height, std::size_t width);

}  // namespace lano

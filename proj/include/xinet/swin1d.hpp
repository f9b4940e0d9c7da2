#pragma once

#include "xinet/tensor.hpp"

namespace xinet::swin {

// Linear layer y = x.W (+ b); an undefined bias tensor means no bias.
struct LinearParams {
  ad::Tensor weight;
  ad::Tensor bias;
};

ad::Tensor linear(const ad::Tensor& x, const LinearParams& p);

struct LayerNormParams {
  ad::Tensor gamma;
  ad::Tensor beta;
};

// Windowed multi-head self-attention along the token axis. The relative
// position bias table has one row per offset in [-(M-1), M-1], one column
// per head.
struct WindowAttnParams {
  LinearParams qkv;       // [D, 3D]
  LinearParams out_proj;  // [D, D]
  ad::Tensor rel_bias;    // [2M-1, heads]
  int64_t window = 0;
  int heads = 1;
};

struct MlpParams {
  LinearParams fc1;  // [D, 4D]
  LinearParams fc2;  // [4D, D]
};

struct SwinBlockParams {
  LayerNormParams norm1;
  WindowAttnParams attn;
  LayerNormParams norm2;
  MlpParams mlp;
  int64_t shift = 0;  // 0 for W-MSA blocks, window/2 for SW-MSA blocks
};

// [B, L, C] -> [B, L/P, D]: non-overlapping runs of P positions flattened to
// P*C raw values and linearly embedded.
ad::Tensor patch_partition(const ad::Tensor& x, int64_t patch, const LinearParams& embed);

// [B, N, D] -> [B*N/M, M, D] and back.
ad::Tensor window_partition(const ad::Tensor& t, int64_t window);
ad::Tensor window_reverse(const ad::Tensor& windows, int64_t batch);

// Token i moves to (i - s) mod N; negative s undoes the shift.
ad::Tensor cyclic_shift(const ad::Tensor& t, int64_t s);

// Additive mask [nW, heads, M, M]: -1e9 between tokens whose pre-shift
// segments differ inside a wrapped window, 0 elsewhere (all zero when s=0).
ad::Tensor attention_mask(int64_t n_tokens, int64_t window, int64_t shift, int heads);

// Shift -> window -> multi-head attention with relative position bias and
// mask -> unshift. Shape preserving.
ad::Tensor window_msa(const ad::Tensor& t, const WindowAttnParams& p, int64_t shift);

// norm -> (S)W-MSA -> residual -> norm -> MLP(GELU, ratio 4) -> residual.
ad::Tensor swin_block(const ad::Tensor& t, const SwinBlockParams& p);

// [B, N, D] -> [B, N/2, 2D]: concatenated token pairs, layer norm, 2D->2D.
ad::Tensor patch_merge(const ad::Tensor& t, const LayerNormParams& norm,
                       const LinearParams& proj);

// [B, N, D] -> [B, 2N, D/2]: linear D->D, each token split in two.
ad::Tensor patch_expand(const ad::Tensor& t, const LinearParams& proj);

// [B, N, D] -> [B, N*P, 1]: linear D->P, unfolded to the sample axis.
ad::Tensor final_patch_expand(const ad::Tensor& t, int64_t patch, const LinearParams& proj);

}  // namespace xinet::swin

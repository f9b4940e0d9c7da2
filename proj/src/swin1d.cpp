#include "xinet/swin1d.hpp"

#include <cmath>

#include "xinet/errors.hpp"

namespace xinet::swin {

using ad::Shape;
using ad::Tensor;

namespace {

constexpr double kMaskValue = -1e9;

// Segment id of a post-shift position: [0, N-M) the untouched body,
// [N-M, N-s) the original tail sharing the last window, [N-s, N) the
// wrapped-around head.
int segment_id(int64_t pos, int64_t n, int64_t window, int64_t shift) {
  if (pos < n - window) return 0;
  if (pos < n - shift) return 1;
  return 2;
}

}  // namespace

Tensor linear(const Tensor& x, const LinearParams& p) {
  Tensor y = ad::matmul(x, p.weight);
  if (p.bias.defined()) y = ad::add(y, p.bias);
  return y;
}

Tensor patch_partition(const Tensor& x, int64_t patch, const LinearParams& embed) {
  if (x.rank() != 3) throw UsageError("patch_partition: expected [B, L, C] input");
  const int64_t B = x.dim(0), L = x.dim(1), C = x.dim(2);
  if (patch < 1 || L % patch != 0)
    throw UsageError(strformat("patch_partition: length %lld not divisible by patch %lld",
                               static_cast<long long>(L), static_cast<long long>(patch)));
  Tensor tokens = ad::reshape(x, {B, L / patch, patch * C});
  return linear(tokens, embed);
}

Tensor window_partition(const Tensor& t, int64_t window) {
  if (t.rank() != 3) throw UsageError("window_partition: expected [B, N, D] input");
  const int64_t B = t.dim(0), N = t.dim(1), D = t.dim(2);
  if (window < 1 || N % window != 0)
    throw UsageError(strformat("window_partition: %lld tokens not divisible by window %lld",
                               static_cast<long long>(N), static_cast<long long>(window)));
  return ad::reshape(t, {B * (N / window), window, D});
}

Tensor window_reverse(const Tensor& windows, int64_t batch) {
  if (windows.rank() != 3) throw UsageError("window_reverse: expected [B*nW, M, D] input");
  const int64_t rows = windows.dim(0), M = windows.dim(1), D = windows.dim(2);
  if (batch < 1 || rows % batch != 0)
    throw UsageError("window_reverse: window count not divisible by batch");
  return ad::reshape(windows, {batch, (rows / batch) * M, D});
}

Tensor cyclic_shift(const Tensor& t, int64_t s) {
  if (t.rank() != 3) throw UsageError("cyclic_shift: expected [B, N, D] input");
  if (s == 0) return t;
  return ad::roll(t, -s, 1);
}

Tensor attention_mask(int64_t n_tokens, int64_t window, int64_t shift, int heads) {
  if (window < 1 || n_tokens % window != 0 || shift < 0 || shift >= window)
    throw UsageError(strformat("attention_mask: invalid N=%lld, M=%lld, s=%lld",
                               static_cast<long long>(n_tokens),
                               static_cast<long long>(window), static_cast<long long>(shift)));
  const int64_t n_windows = n_tokens / window;
  std::vector<double> vals(n_windows * heads * window * window, 0.0);
  for (int64_t w = 0; w < n_windows; ++w) {
    for (int64_t i = 0; i < window; ++i) {
      const int id_i = segment_id(w * window + i, n_tokens, window, shift);
      for (int64_t j = 0; j < window; ++j) {
        const int id_j = segment_id(w * window + j, n_tokens, window, shift);
        if (id_i != id_j) {
          for (int h = 0; h < heads; ++h)
            vals[((w * heads + h) * window + i) * window + j] = kMaskValue;
        }
      }
    }
  }
  return Tensor::from({n_windows, heads, window, window}, std::move(vals));
}

Tensor window_msa(const Tensor& t, const WindowAttnParams& p, int64_t shift) {
  if (t.rank() != 3) throw UsageError("window_msa: expected [B, N, D] input");
  const int64_t B = t.dim(0), N = t.dim(1), D = t.dim(2);
  const int64_t M = p.window;
  const int heads = p.heads;
  if (M < 1 || N % M != 0)
    throw UsageError(strformat("window_msa: %lld tokens not divisible by window %lld",
                               static_cast<long long>(N), static_cast<long long>(M)));
  if (heads < 1 || D % heads != 0)
    throw UsageError(strformat("window_msa: dim %lld not divisible by %d heads",
                               static_cast<long long>(D), heads));
  if (shift < 0 || shift >= M)
    throw UsageError("window_msa: shift must lie in [0, window)");
  if (p.qkv.weight.shape() != Shape{D, 3 * D} || p.out_proj.weight.shape() != Shape{D, D})
    throw UsageError("window_msa: projection shapes do not match token dim");
  if (p.rel_bias.shape() != Shape{2 * M - 1, heads})
    throw UsageError("window_msa: relative bias table must be [2M-1, heads]");
  const int64_t dh = D / heads;
  const int64_t nW = N / M;

  Tensor x = shift > 0 ? cyclic_shift(t, shift) : t;
  Tensor qkv = linear(x, p.qkv);  // [B, N, 3D]

  auto split_heads = [&](int64_t lo) {
    Tensor part = ad::slice(qkv, 2, lo * D, (lo + 1) * D);
    part = ad::reshape(part, {B, nW, M, heads, dh});
    return ad::transpose(part, 2, 3);  // [B, nW, heads, M, dh]
  };
  Tensor q = split_heads(0);
  Tensor k = split_heads(1);
  Tensor v = split_heads(2);

  Tensor scores = ad::matmul(q, ad::transpose(k, 3, 4));  // [B, nW, heads, M, M]
  scores = ad::mul_scalar(scores, 1.0 / std::sqrt(static_cast<double>(dh)));

  // Bias table -> [heads, M, M] lookup, realized as a constant one-hot
  // selection so the table stays a differentiable leaf.
  std::vector<double> sel(M * M * (2 * M - 1), 0.0);
  for (int64_t i = 0; i < M; ++i)
    for (int64_t j = 0; j < M; ++j) sel[(i * M + j) * (2 * M - 1) + (j - i + M - 1)] = 1.0;
  Tensor bias = ad::matmul(Tensor::from({M * M, 2 * M - 1}, std::move(sel)), p.rel_bias);
  bias = ad::reshape(bias, {M, M, heads});
  bias = ad::transpose(ad::transpose(bias, 1, 2), 0, 1);  // [heads, M, M]
  scores = ad::add(scores, bias);

  if (shift > 0) scores = ad::add(scores, attention_mask(N, M, shift, heads));

  Tensor attn = ad::softmax(scores, -1);
  Tensor ctx = ad::matmul(attn, v);             // [B, nW, heads, M, dh]
  ctx = ad::transpose(ctx, 2, 3);               // [B, nW, M, heads, dh]
  ctx = ad::reshape(ctx, {B, N, D});
  Tensor out = linear(ctx, p.out_proj);
  return shift > 0 ? cyclic_shift(out, -shift) : out;
}

Tensor swin_block(const Tensor& t, const SwinBlockParams& p) {
  Tensor x = ad::add(t, window_msa(ad::layer_norm(t, p.norm1.gamma, p.norm1.beta), p.attn,
                                   p.shift));
  Tensor h = ad::layer_norm(x, p.norm2.gamma, p.norm2.beta);
  h = linear(ad::gelu(linear(h, p.mlp.fc1)), p.mlp.fc2);
  return ad::add(x, h);
}

Tensor patch_merge(const Tensor& t, const LayerNormParams& norm, const LinearParams& proj) {
  if (t.rank() != 3) throw UsageError("patch_merge: expected [B, N, D] input");
  const int64_t B = t.dim(0), N = t.dim(1), D = t.dim(2);
  if (N % 2 != 0)
    throw UsageError(strformat("patch_merge: odd token count %lld", static_cast<long long>(N)));
  Tensor pairs = ad::reshape(t, {B, N / 2, 2 * D});
  return linear(ad::layer_norm(pairs, norm.gamma, norm.beta), proj);
}

Tensor patch_expand(const Tensor& t, const LinearParams& proj) {
  if (t.rank() != 3) throw UsageError("patch_expand: expected [B, N, D] input");
  const int64_t B = t.dim(0), N = t.dim(1), D = t.dim(2);
  if (D % 2 != 0)
    throw UsageError(strformat("patch_expand: odd feature dim %lld", static_cast<long long>(D)));
  Tensor y = linear(t, proj);  // [B, N, D]
  return ad::reshape(y, {B, 2 * N, D / 2});
}

Tensor final_patch_expand(const Tensor& t, int64_t patch, const LinearParams& proj) {
  if (t.rank() != 3) throw UsageError("final_patch_expand: expected [B, N, D] input");
  const int64_t B = t.dim(0), N = t.dim(1);
  Tensor y = linear(t, proj);  // [B, N, P]
  return ad::reshape(y, {B, N * patch, 1});
}

}  // namespace xinet::swin

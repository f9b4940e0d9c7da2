#include "xinet/swin1d.hpp"

#include <cmath>
#include <cstring>

#include "doctest.h"
#include "testutil.hpp"
#include "xinet/errors.hpp"
#include "xinet/rng.hpp"

using namespace xinet;
using ad::Shape;
using ad::Tensor;
using testutil::random_values;
using testutil::weighted_sum;

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  auto v = random_values(ad::shape_numel(shape), rng, -scale, scale);
  return Tensor::from(std::move(shape), std::move(v));
}

swin::WindowAttnParams rand_attn(int64_t D, int64_t M, int heads, Rng& rng) {
  swin::WindowAttnParams p;
  p.qkv = {rand_tensor({D, 3 * D}, rng, 0.5), rand_tensor({3 * D}, rng, 0.2)};
  p.out_proj = {rand_tensor({D, D}, rng, 0.5), rand_tensor({D}, rng, 0.2)};
  p.rel_bias = rand_tensor({2 * M - 1, heads}, rng, 0.2);
  p.window = M;
  p.heads = heads;
  return p;
}

swin::SwinBlockParams rand_block(int64_t D, int64_t M, int heads, int64_t shift, Rng& rng) {
  swin::SwinBlockParams p;
  p.norm1 = {Tensor::full({D}, 1.0), Tensor::full({D}, 0.0)};
  p.norm2 = {Tensor::full({D}, 1.0), Tensor::full({D}, 0.0)};
  p.attn = rand_attn(D, M, heads, rng);
  p.mlp.fc1 = {rand_tensor({D, 4 * D}, rng, 0.4), rand_tensor({4 * D}, rng, 0.2)};
  p.mlp.fc2 = {rand_tensor({4 * D, D}, rng, 0.4), rand_tensor({D}, rng, 0.2)};
  p.shift = shift;
  return p;
}

}  // namespace

TEST_CASE("patch_partition embeds P*C raw values per token") {
  Rng rng(1);
  swin::LinearParams embed1{rand_tensor({4, 5}, rng), rand_tensor({5}, rng)};
  Tensor x1 = rand_tensor({2, 8, 1}, rng);
  Tensor t1 = swin::patch_partition(x1, 4, embed1);
  CHECK(t1.shape() == Shape{2, 2, 5});

  swin::LinearParams embed2{rand_tensor({8, 5}, rng), rand_tensor({5}, rng)};
  Tensor x2 = rand_tensor({2, 8, 2}, rng);
  Tensor t2 = swin::patch_partition(x2, 4, embed2);
  CHECK(t2.shape() == Shape{2, 2, 5});

  Tensor zeros = Tensor::zeros({1, 8, 2});
  Tensor tz = swin::patch_partition(zeros, 4, embed2);
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t d = 0; d < 5; ++d)
      CHECK(tz.at({0, n, d}) == embed2.bias.values()[d]);

  CHECK_THROWS_AS(swin::patch_partition(x1, 3, embed1), UsageError);
}

TEST_CASE("window partition and reverse are exact inverses") {
  Rng rng(2);
  Tensor t = rand_tensor({3, 8, 5}, rng);
  Tensor w = swin::window_partition(t, 4);
  CHECK(w.shape() == Shape{6, 4, 5});
  Tensor back = swin::window_reverse(w, 3);
  CHECK(back.shape() == t.shape());
  CHECK(back.values() == t.values());

  Tensor single = swin::window_partition(t, 8);
  CHECK(single.shape() == Shape{3, 8, 5});
  CHECK(single.values() == t.values());

  CHECK_THROWS_AS(swin::window_partition(t, 3), UsageError);
}

TEST_CASE("cyclic shift moves token i to (i - s) mod N") {
  Tensor t = Tensor::from({1, 4, 1}, {1, 2, 3, 4});
  CHECK(swin::cyclic_shift(t, 0).values() == t.values());
  CHECK(swin::cyclic_shift(t, 1).values() == std::vector<double>{2, 3, 4, 1});

  Rng rng(3);
  Tensor r = rand_tensor({2, 16, 3}, rng);
  Tensor round = swin::cyclic_shift(swin::cyclic_shift(r, 5), -5);
  CHECK(round.values() == r.values());
}

TEST_CASE("attention mask blocks cross-segment pairs") {
  Tensor zero_mask = swin::attention_mask(8, 4, 0, 2);
  for (double v : zero_mask.values()) CHECK(v == 0.0);

  // N=8, M=4, s=2: window 0 open; window 1 holds tail (ids 1,1) then wrapped
  // head (ids 2,2), so the off-diagonal 2x2 blocks are masked.
  Tensor mask = swin::attention_mask(8, 4, 2, 1);
  REQUIRE(mask.shape() == Shape{2, 1, 4, 4});
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 4; ++j) {
      CHECK(mask.at({0, 0, i, j}) == 0.0);
      const bool cross = (i < 2) != (j < 2);
      CHECK(mask.at({1, 0, i, j}) == (cross ? -1e9 : 0.0));
    }

  // Post-softmax leakage across masked pairs is negligible.
  Rng rng(4);
  Tensor scores = rand_tensor({2, 1, 4, 4}, rng, 20.0);
  Tensor attn = ad::softmax(ad::add(scores, mask), -1);
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 4; ++j)
      if ((i < 2) != (j < 2)) CHECK(attn.at({1, 0, i, j}) < 1e-6);
}

TEST_CASE("shifted attention isolates wrapped tokens end to end") {
  Rng rng(5);
  const int64_t N = 16, M = 4, s = 2, D = 8;
  swin::WindowAttnParams p = rand_attn(D, M, 2, rng);
  Tensor t = rand_tensor({1, N, D}, rng);

  auto bumped = t.values();
  for (int64_t d = 0; d < D; ++d) bumped[d] += 10.0;  // token 0: wrapped head
  Tensor t2 = Tensor::from({1, N, D}, bumped);

  Tensor out1 = swin::window_msa(t, p, s);
  Tensor out2 = swin::window_msa(t2, p, s);
  // Only the wrapped head (original tokens 0..s-1) may change.
  for (int64_t n = s; n < N; ++n)
    for (int64_t d = 0; d < D; ++d)
      CHECK(out1.at({0, n, d}) == doctest::Approx(out2.at({0, n, d})).epsilon(1e-12));
  double head_delta = 0.0;
  for (int64_t n = 0; n < s; ++n)
    for (int64_t d = 0; d < D; ++d) head_delta += std::fabs(out1.at({0, n, d}) - out2.at({0, n, d}));
  CHECK(head_delta > 1e-6);
}

TEST_CASE("single-token windows reduce attention to projections") {
  Rng rng(6);
  const int64_t D = 2;
  swin::WindowAttnParams p = rand_attn(D, 1, 1, rng);
  Tensor x = rand_tensor({1, 3, D}, rng);
  Tensor out = swin::window_msa(x, p, 0);

  const auto& wq = p.qkv.weight.values();   // [D, 3D], v block = cols 2D..3D
  const auto& bq = p.qkv.bias.values();
  const auto& wo = p.out_proj.weight.values();
  const auto& bo = p.out_proj.bias.values();
  for (int64_t n = 0; n < 3; ++n) {
    double v0 = bq[4], v1 = bq[5];
    for (int64_t i = 0; i < D; ++i) {
      v0 += x.at({0, n, i}) * wq[i * 6 + 4];
      v1 += x.at({0, n, i}) * wq[i * 6 + 5];
    }
    for (int64_t d = 0; d < D; ++d) {
      const double expected = v0 * wo[0 * 2 + d] + v1 * wo[1 * 2 + d] + bo[d];
      CHECK(out.at({0, n, d}) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("window attention is batch equivariant and translation consistent") {
  Rng rng(7);
  const int64_t N = 8, M = 4, D = 4;
  swin::WindowAttnParams p = rand_attn(D, M, 2, rng);

  Tensor batch = rand_tensor({2, N, D}, rng);
  Tensor swapped = ad::concat({ad::slice(batch, 0, 1, 2), ad::slice(batch, 0, 0, 1)}, 0);
  Tensor out = swin::window_msa(batch, p, 2);
  Tensor out_swapped = swin::window_msa(swapped, p, 2);
  for (int64_t n = 0; n < N; ++n)
    for (int64_t d = 0; d < D; ++d) {
      CHECK(out.at({0, n, d}) == out_swapped.at({1, n, d}));
      CHECK(out.at({1, n, d}) == out_swapped.at({0, n, d}));
    }

  // Rolling the input by a whole window rolls unshifted attention output.
  Tensor x = rand_tensor({1, N, D}, rng);
  Tensor rolled = ad::roll(x, M, 1);
  Tensor y = swin::window_msa(x, p, 0);
  Tensor y_rolled = swin::window_msa(rolled, p, 0);
  Tensor expected = ad::roll(y, M, 1);
  CHECK(y_rolled.values() == expected.values());
}

TEST_CASE("window_msa gradients match finite differences") {
  Rng rng(8);
  const int64_t N = 8, M = 4, D = 8;
  const int heads = 2;
  std::vector<Shape> shapes = {{1, N, D}, {D, 3 * D}, {3 * D}, {D, D}, {D}, {2 * M - 1, heads}};
  std::vector<std::vector<double>> values;
  for (auto& s : shapes) values.push_back(random_values(ad::shape_numel(s), rng, -0.5, 0.5));
  auto wts = random_values(N * D, rng);

  testutil::check_gradients(
      [&](const std::vector<Tensor>& xs) {
        swin::WindowAttnParams p;
        p.qkv = {xs[1], xs[2]};
        p.out_proj = {xs[3], xs[4]};
        p.rel_bias = xs[5];
        p.window = M;
        p.heads = heads;
        return weighted_sum(swin::window_msa(xs[0], p, 2), wts);
      },
      shapes, values);
}

TEST_CASE("swin block preserves shape and falls back to identity") {
  Rng rng(9);
  const int64_t N = 8, M = 4, D = 4;
  swin::SwinBlockParams p = rand_block(D, M, 1, 2, rng);
  Tensor x = rand_tensor({2, N, D}, rng);
  CHECK(swin::swin_block(x, p).shape() == x.shape());

  swin::SwinBlockParams ident = p;
  ident.attn.out_proj = {Tensor::zeros({D, D}), Tensor::zeros({D})};
  ident.mlp.fc2 = {Tensor::zeros({4 * D, D}), Tensor::zeros({D})};
  Tensor y = swin::swin_block(x, ident);
  CHECK(y.values() == x.values());
}

TEST_CASE("swin block gradients match finite differences") {
  Rng rng(10);
  const int64_t N = 8, M = 4, D = 4;
  std::vector<Shape> shapes = {
      {1, N, D},                      // input
      {D}, {D},                       // norm1
      {D, 3 * D}, {3 * D},            // qkv
      {D, D}, {D},                    // out proj
      {2 * M - 1, 1},                 // rel bias
      {D}, {D},                       // norm2
      {D, 4 * D}, {4 * D},            // fc1
      {4 * D, D}, {D},                // fc2
  };
  std::vector<std::vector<double>> values;
  for (auto& s : shapes) values.push_back(random_values(ad::shape_numel(s), rng, -0.5, 0.5));
  values[1] = std::vector<double>(D, 1.0);  // gammas near 1 keep the norm well-conditioned
  values[8] = std::vector<double>(D, 1.0);
  auto wts = random_values(N * D, rng);

  testutil::check_gradients(
      [&](const std::vector<Tensor>& xs) {
        swin::SwinBlockParams p;
        p.norm1 = {xs[1], xs[2]};
        p.attn.qkv = {xs[3], xs[4]};
        p.attn.out_proj = {xs[5], xs[6]};
        p.attn.rel_bias = xs[7];
        p.attn.window = M;
        p.attn.heads = 1;
        p.norm2 = {xs[8], xs[9]};
        p.mlp.fc1 = {xs[10], xs[11]};
        p.mlp.fc2 = {xs[12], xs[13]};
        p.shift = 2;
        return weighted_sum(swin::swin_block(xs[0], p), wts);
      },
      shapes, values);
}

TEST_CASE("patch merge and expand shape laws") {
  Rng rng(11);
  Tensor t = rand_tensor({2, 4, 3}, rng);
  swin::LayerNormParams norm{Tensor::full({6}, 1.0), Tensor::full({6}, 0.0)};
  swin::LinearParams proj{rand_tensor({6, 6}, rng), {}};
  Tensor merged = swin::patch_merge(t, norm, proj);
  CHECK(merged.shape() == Shape{2, 2, 6});

  // Identity projection leaves layer-normed concatenated pairs.
  std::vector<double> eye(36, 0.0);
  for (int i = 0; i < 6; ++i) eye[i * 6 + i] = 1.0;
  swin::LinearParams id_proj{Tensor::from({6, 6}, eye), {}};
  Tensor m = swin::patch_merge(t, norm, id_proj);
  Tensor pairs = ad::reshape(t, {2, 2, 6});
  Tensor ln = ad::layer_norm(pairs, norm.gamma, norm.beta);
  for (size_t i = 0; i < m.values().size(); ++i)
    CHECK(m.values()[i] == doctest::Approx(ln.values()[i]).epsilon(1e-12));

  swin::LinearParams expand_proj{rand_tensor({6, 6}, rng), {}};
  Tensor expanded = swin::patch_expand(merged, expand_proj);
  CHECK(expanded.shape() == Shape{2, 4, 3});
  CHECK(expanded.shape() == t.shape());

  Tensor odd = rand_tensor({1, 3, 4}, rng);
  CHECK_THROWS_AS(swin::patch_merge(odd, norm, proj), UsageError);
  Tensor odd_dim = rand_tensor({1, 4, 3}, rng);
  CHECK_THROWS_AS(swin::patch_expand(odd_dim, expand_proj), UsageError);
}

TEST_CASE("merge/expand/final-expand gradients match finite differences") {
  Rng rng(12);

  auto wts6 = random_values(2 * 6, rng);
  testutil::check_gradients(
      [&](const std::vector<Tensor>& xs) {
        swin::LayerNormParams norm{xs[1], xs[2]};
        swin::LinearParams proj{xs[3], {}};
        return weighted_sum(swin::patch_merge(xs[0], norm, proj), wts6);
      },
      {{1, 4, 3}, {6}, {6}, {6, 6}},
      {random_values(12, rng), std::vector<double>(6, 1.0), random_values(6, rng),
       random_values(36, rng)});

  auto wts_expand = random_values(4 * 3, rng);
  testutil::check_gradients(
      [&](const std::vector<Tensor>& xs) {
        swin::LinearParams proj{xs[1], {}};
        return weighted_sum(swin::patch_expand(xs[0], proj), wts_expand);
      },
      {{1, 2, 6}, {6, 6}}, {random_values(12, rng), random_values(36, rng)});

  auto wts_final = random_values(8, rng);
  testutil::check_gradients(
      [&](const std::vector<Tensor>& xs) {
        swin::LinearParams proj{xs[1], xs[2]};
        return weighted_sum(swin::final_patch_expand(xs[0], 4, proj), wts_final);
      },
      {{1, 2, 8}, {8, 4}, {4}},
      {random_values(16, rng), random_values(32, rng), random_values(4, rng)});
}

TEST_CASE("final patch expand reconstructs the sample axis") {
  Rng rng(13);
  Tensor t = rand_tensor({3, 2, 8}, rng);
  swin::LinearParams proj{rand_tensor({8, 4}, rng), rand_tensor({4}, rng)};
  Tensor out = swin::final_patch_expand(t, 4, proj);
  CHECK(out.shape() == Shape{3, 8, 1});

  swin::LinearParams zero{Tensor::zeros({8, 4}), Tensor::zeros({4})};
  Tensor zeroed = swin::final_patch_expand(t, 4, zero);
  for (double v : zeroed.values()) CHECK(v == 0.0);
}

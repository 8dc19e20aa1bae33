/* Copyright 2026 The bigraph Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "test_support.hpp"

namespace bigraph {
namespace {

using namespace kernels;

Tensor random_tensor(std::mt19937_64& rng, Shape shape, float scale = 1.0f) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<float> u(-scale, scale);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Scalar objective L = sum(out * probe) as a double.
double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

// Central differences of L(x) = f(x) . probe with respect to every element of x.
Tensor finite_diff(Tensor& x, const Tensor& probe, const std::function<Tensor()>& f, float eps = 1e-3f) {
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float keep = x[i];
    x[i] = keep + eps;
    const double up = dot(f(), probe);
    x[i] = keep - eps;
    const double down = dot(f(), probe);
    x[i] = keep;
    g[i] = static_cast<float>((up - down) / (2.0 * eps));
  }
  return g;
}

TEST(FcForward, ScalarOracle) {
  Tensor x({1, 2}, {1, 2}), w({2, 1}, {3, 4}), b({1}, {1}), y({1, 1});
  fc_forward(x, w, b, y);
  EXPECT_EQ(y[0], 12.0f);
}

TEST(FcForward, MatchesTripleLoop) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 4, d = 1 + rng() % 5, m = 1 + rng() % 4;
    auto x = random_tensor(rng, {n, d}), w = random_tensor(rng, {d, m}), b = random_tensor(rng, {m});
    Tensor y({n, m});
    fc_forward(x, w, b, y);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        double acc = b[j];
        for (std::size_t k = 0; k < d; ++k) acc += static_cast<double>(x[i * d + k]) * w[k * m + j];
        EXPECT_NEAR(y[i * m + j], acc, 1e-5);
      }
    }
  }
}

TEST(FcForward, IdentityAndZero) {
  Tensor x({2, 2}, {1, -2, 3, 4}), eye({2, 2}, {1, 0, 0, 1}), zero_b({2}), y({2, 2});
  fc_forward(x, eye, zero_b, y);
  EXPECT_TRUE(y.bitwise_equal(x));
  Tensor zx({3, 2}), b({2}, {5, -1}), y2({3, 2});
  fc_forward(zx, eye, b, y2);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(y2[i * 2], 5.0f);
    EXPECT_EQ(y2[i * 2 + 1], -1.0f);
  }
}

TEST(FcForward, ShapeMismatch) {
  Tensor x({2, 3}), w({4, 2}), b({2}), y({2, 2});
  EXPECT_THROW(fc_forward(x, w, b, y), KernelError);
}

TEST(FcForward, NonFiniteIsKernelError) {
  Tensor x({1, 1}, {std::numeric_limits<float>::infinity()}), w({1, 1}, {1}), b({1}), y({1, 1});
  EXPECT_THROW(fc_forward(x, w, b, y), KernelError);
}

TEST(FcBackward, ScalarChainRule) {
  Tensor x({1, 1}, {2}), w({1, 1}, {3}), dy({1, 1}, {5}), dx({1, 1}), dw({1, 1}), db({1});
  fc_backward(x, w, dy, dx, dw, db);
  EXPECT_EQ(dx[0], 15.0f);
  EXPECT_EQ(dw[0], 10.0f);
  EXPECT_EQ(db[0], 5.0f);
}

TEST(FcBackward, ZeroUpstreamGivesZero) {
  std::mt19937_64 rng(2);
  auto x = random_tensor(rng, {3, 4}), w = random_tensor(rng, {4, 2});
  Tensor dy({3, 2}), dx({3, 4}), dw({4, 2}), db({2});
  fc_backward(x, w, dy, dx, dw, db);
  for (const auto* t : {&dx, &dw, &db}) {
    for (float v : t->data()) EXPECT_EQ(v, 0.0f);
  }
}

TEST(FcBackward, SplitKernelsEqualFused) {
  std::mt19937_64 rng(3);
  auto x = random_tensor(rng, {3, 4}), w = random_tensor(rng, {4, 2}), dy = random_tensor(rng, {3, 2});
  Tensor dx({3, 4}), dw({4, 2}), db({2}), dx2({3, 4}), dw2({4, 2}), db2({2});
  fc_backward(x, w, dy, dx, dw, db);
  fc_backward_data(w, dy, dx2);
  fc_backward_weight(x, dy, dw2);
  fc_backward_bias(dy, db2);
  EXPECT_TRUE(dx.bitwise_equal(dx2));
  EXPECT_TRUE(dw.bitwise_equal(dw2));
  EXPECT_TRUE(db.bitwise_equal(db2));
}

TEST(FcBackward, FiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 4, d = 1 + rng() % 4, m = 1 + rng() % 3;
    auto x = random_tensor(rng, {n, d}), w = random_tensor(rng, {d, m}), b = random_tensor(rng, {m});
    auto probe = random_tensor(rng, {n, m});
    Tensor dx({n, d}), dw({d, m}), db({m});
    fc_backward(x, w, probe, dx, dw, db);
    auto fwd = [&] {
      Tensor y({n, m});
      fc_forward(x, w, b, y);
      return y;
    };
    EXPECT_LT(testing::norm_rel_diff(finite_diff(x, probe, fwd), dx), 1e-3);
    EXPECT_LT(testing::norm_rel_diff(finite_diff(w, probe, fwd), dw), 1e-3);
    EXPECT_LT(testing::norm_rel_diff(finite_diff(b, probe, fwd), db), 1e-3);
  }
}

// Second, independently written direct convolution.
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t K = w.dim(0), R = w.dim(2), S = w.dim(3);
  const std::size_t OH = (H + 2 * pad - R) / stride + 1, OW = (W + 2 * pad - S) / stride + 1;
  Tensor y({N, K, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow) {
          double acc = b[k];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t r = 0; r < R; ++r)
              for (std::size_t s = 0; s < S; ++s) {
                const long ih = static_cast<long>(oh * stride + r) - static_cast<long>(pad);
                const long iw = static_cast<long>(ow * stride + s) - static_cast<long>(pad);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W)) continue;
                acc += static_cast<double>(x[((n * C + c) * H + ih) * W + iw]) * w[((k * C + c) * R + r) * S + s];
              }
          y[((n * K + k) * OH + oh) * OW + ow] = static_cast<float>(acc);
        }
  return y;
}

TEST(Conv, AllOnes) {
  Tensor x({1, 1, 3, 3}, 1.0f), w({1, 1, 3, 3}, 1.0f), b({1}), y({1, 1, 1, 1});
  conv2d_forward(x, w, b, y, {1, 0});
  EXPECT_EQ(y[0], 9.0f);
}

TEST(Conv, DeltaKernelIsIdentity) {
  std::mt19937_64 rng(5);
  auto x = random_tensor(rng, {1, 1, 4, 5});
  Tensor w({1, 1, 3, 3}), b({1}), y({1, 1, 4, 5});
  w[4] = 1.0f;
  conv2d_forward(x, w, b, y, {1, 1});
  EXPECT_TRUE(y.bitwise_equal(x));
}

TEST(Conv, MatchesIndependentOracle) {
  std::mt19937_64 rng(6);
  auto x = random_tensor(rng, {2, 2, 5, 5}), w = random_tensor(rng, {3, 2, 3, 3}), b = random_tensor(rng, {3});
  for (std::size_t stride : {1, 2}) {
    for (std::size_t pad : {0, 1}) {
      const std::size_t o = (5 + 2 * pad - 3) / stride + 1;
      Tensor y({2, 3, o, o});
      conv2d_forward(x, w, b, y, {stride, pad});
      const auto ref = conv_oracle(x, w, b, stride, pad);
      for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-5);
    }
  }
}

TEST(Conv, NonIntegralOutputRejected) {
  EXPECT_THROW(conv_out_dim(6, 3, {2, 0}), KernelError);
  EXPECT_THROW(conv_out_dim(2, 3, {1, 0}), KernelError);
  EXPECT_EQ(conv_out_dim(5, 3, {2, 0}), 2u);
}

TEST(Conv, ScalarBackward) {
  Tensor x({1, 1, 1, 1}, {2}), w({1, 1, 1, 1}, {3}), dy({1, 1, 1, 1}, {5});
  Tensor dx(x.shape()), dw(w.shape()), db({1});
  conv2d_backward(x, w, dy, dx, dw, db, {1, 0});
  EXPECT_EQ(dx[0], 15.0f);
  EXPECT_EQ(dw[0], 10.0f);
  EXPECT_EQ(db[0], 5.0f);
}

TEST(Conv, FiniteDifferences) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 2, c = 1 + rng() % 3, h = 3 + rng() % 4, k = 1 + rng() % 3;
    const std::size_t r = 1 + 2 * (rng() % 2);
    const ConvParams p{1 + rng() % 2, rng() % 2};
    std::size_t oh = 0;
    try {
      oh = conv_out_dim(h, r, p);
    } catch (const KernelError&) {
      --trial;
      continue;
    }
    auto x = random_tensor(rng, {n, c, h, h}), w = random_tensor(rng, {k, c, r, r}), b = random_tensor(rng, {k});
    auto probe = random_tensor(rng, {n, k, oh, oh});
    Tensor dx(x.shape()), dw(w.shape()), db(b.shape());
    conv2d_backward(x, w, probe, dx, dw, db, p);
    auto fwd = [&] {
      Tensor y({n, k, oh, oh});
      conv2d_forward(x, w, b, y, p);
      return y;
    };
    EXPECT_LT(testing::norm_rel_diff(finite_diff(x, probe, fwd), dx), 1e-2);
    EXPECT_LT(testing::norm_rel_diff(finite_diff(w, probe, fwd), dw), 1e-2);
    EXPECT_LT(testing::norm_rel_diff(finite_diff(b, probe, fwd), db), 1e-2);
  }
}

TEST(Relu, DefinitionAndTieRule) {
  Tensor x({3}, {-1, 0, 2}), y({3}), dy({3}, 5.0f), dx({3});
  relu_forward(x, y);
  EXPECT_EQ(std::vector<float>(y.data().begin(), y.data().end()), (std::vector<float>{0, 0, 2}));
  relu_backward(x, dy, dx);
  EXPECT_EQ(std::vector<float>(dx.data().begin(), dx.data().end()), (std::vector<float>{0, 0, 5}));
}

TEST(Relu, FiniteDifferencesAwayFromKink) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor(rng, {2, 5});
    for (auto& v : x.data()) {
      if (std::abs(v) < 0.05f) v = 0.5f;
    }
    auto probe = random_tensor(rng, {2, 5});
    Tensor dx(x.shape());
    relu_backward(x, probe, dx);
    auto fwd = [&] {
      Tensor y(x.shape());
      relu_forward(x, y);
      return y;
    };
    EXPECT_LT(testing::norm_rel_diff(finite_diff(x, probe, fwd), dx), 1e-3);
  }
}

TEST(SoftmaxXent, UniformLogits) {
  Tensor logits({2, 4}), labels({2}, {0, 3}), loss({1}), d({2, 4});
  softmax_xent(logits, labels, loss, d);
  EXPECT_NEAR(loss[0], std::log(4.0), 1e-6);
}

TEST(SoftmaxXent, BruteForceOracle) {
  Tensor logits({1, 2}, {0.0f, static_cast<float>(std::log(3.0))}), labels({1}, {1}), loss({1}), d({1, 2});
  softmax_xent(logits, labels, loss, d);
  EXPECT_NEAR(loss[0], -std::log(0.75), 1e-6);
  EXPECT_NEAR(d[0], 0.25, 1e-6);
  EXPECT_NEAR(d[1], -0.25, 1e-6);
}

TEST(SoftmaxXent, Properties) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 5, k = 2 + rng() % 5;
    auto logits = random_tensor(rng, {n, k}, 10.0f);
    Tensor labels({n}), loss({1}), d({n, k});
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<float>(rng() % k);
    softmax_xent(logits, labels, loss, d);
    EXPECT_GE(loss[0], 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < k; ++j) row += d[i * k + j];
      EXPECT_NEAR(row, 0.0, 1e-6);
    }
  }
}

TEST(SoftmaxXent, FiniteDifferences) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 4, k = 2 + rng() % 4;
    auto logits = random_tensor(rng, {n, k}, 2.0f);
    Tensor labels({n});
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<float>(rng() % k);
    Tensor loss({1}), d({n, k});
    softmax_xent(logits, labels, loss, d);
    Tensor probe({1}, 1.0f);
    auto fwd = [&] {
      Tensor l({1}), g({n, k});
      softmax_xent(logits, labels, l, g);
      return l;
    };
    EXPECT_LT(testing::norm_rel_diff(finite_diff(logits, probe, fwd), d), 1e-3);
  }
}

TEST(SoftmaxXent, LabelOutOfRange) {
  Tensor logits({1, 3}), loss({1}), d({1, 3});
  Tensor bad({1}, {3}), neg({1}, {-1}), frac({1}, {0.5f});
  EXPECT_THROW(softmax_xent(logits, bad, loss, d), KernelError);
  EXPECT_THROW(softmax_xent(logits, neg, loss, d), KernelError);
  EXPECT_THROW(softmax_xent(logits, frac, loss, d), KernelError);
}

TEST(SgdUpdate, Formula) {
  Tensor w({1}, {1.0f}), g({1}, {0.5f}), out({1});
  sgd_update(w, g, 0.1f, out);
  EXPECT_FLOAT_EQ(out[0], 0.95f);
  sgd_update(w, g, 0.0f, out);
  EXPECT_EQ(out[0], 1.0f);
  Tensor zero({1});
  sgd_update(w, zero, 0.3f, out);
  EXPECT_EQ(out[0], 1.0f);
  Tensor wrong({2});
  EXPECT_THROW(sgd_update(w, wrong, 0.1f, out), KernelError);
}

TEST(Aggregate, MeanSumIdentity) {
  Tensor a({1}, {1}), b({1}, {3}), out({1});
  const Tensor* parts[] = {&a, &b};
  aggregate(parts, AggregateMode::kMean, out);
  EXPECT_EQ(out[0], 2.0f);
  const Tensor* one[] = {&a};
  aggregate(one, AggregateMode::kMean, out);
  EXPECT_EQ(out[0], 1.0f);
  std::mt19937_64 rng(11);
  auto t = random_tensor(rng, {7});
  Tensor sum({7}), mean({7});
  const Tensor* same[] = {&t, &t, &t, &t};
  aggregate(same, AggregateMode::kSum, sum);
  aggregate(same, AggregateMode::kMean, mean);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_FLOAT_EQ(sum[i], 4.0f * t[i]);
  EXPECT_TRUE(mean.bitwise_equal(t));
  Tensor other({2});
  const Tensor* bad[] = {&a, &other};
  EXPECT_THROW(aggregate(bad, AggregateMode::kSum, out), KernelError);
}

TEST(Swap, ExchangesHandles) {
  Tensor a({2}, {1, 2}), b({2}, {3, 4});
  const void* ha = a.storage_id();
  const void* hb = b.storage_id();
  swap_storage(a, b);
  EXPECT_EQ(a[0], 3.0f);
  EXPECT_EQ(b[1], 2.0f);
  EXPECT_EQ(a.storage_id(), hb);
  EXPECT_EQ(b.storage_id(), ha);
  swap_storage(a, b);
  EXPECT_EQ(a.storage_id(), ha);
  EXPECT_EQ(a[0], 1.0f);
  Tensor c({3});
  EXPECT_THROW(swap_storage(a, c), KernelError);
}

TEST(Copy, NoAliasing) {
  Tensor src({3}, {1, 2, 3}), dst({3});
  kernels::copy(src, dst);
  EXPECT_TRUE(dst.bitwise_equal(src));
  src[0] = 9.0f;
  EXPECT_EQ(dst[0], 1.0f);
}

// Every builtin kernel run through the registry writes only its outputs.
TEST(Registry, KernelsArePureOutsideOutputs) {
  std::mt19937_64 rng(12);
  const auto reg = builtin_registry();
  BiGraph g;
  const Location loc{"h", -1};
  auto add = [&](const std::string& n, Shape s) { g.add_tensor(n, std::move(s), loc); };
  add("x", {2, 3}); add("w", {3, 4}); add("b", {4}); add("y", {2, 4});
  add("dy", {2, 4}); add("dx", {2, 3}); add("dw", {3, 4}); add("db", {4});
  add("lab", {2}); add("loss", {1}); add("dl", {2, 4}); add("wn", {3, 4});
  g.add_op("fwd", std::string(kinds::kFcForward), {"x", "w", "b"}, {"y"}, loc);
  g.add_op("bwd", std::string(kinds::kFcBackward), {"x", "w", "dy"}, {"dx", "dw", "db"}, loc);
  g.add_op("xent", std::string(kinds::kSoftmaxXent), {"y", "lab"}, {"loss", "dl"}, loc);
  g.add_op("upd", std::string(kinds::kSgdUpdate), {"w", "dw"}, {"wn"}, loc, 0, {{"lr", 0.5}});
  TensorStore store;
  for (const auto& t : g.tensors()) store.set(t.name, random_tensor(rng, t.shape));
  store.at("lab")[0] = 1;
  store.at("lab")[1] = 3;
  for (const auto& o : g.operators()) {
    std::vector<Tensor*> in, out;
    for (auto id : o.inputs) in.push_back(&store.at(g.tensor(id).name));
    for (auto id : o.outputs) out.push_back(&store.at(g.tensor(id).name));
    std::map<std::string, Tensor> before;
    for (const auto& [name, t] : store) before.emplace(name, t);
    (*reg.find(o.kind))(KernelContext{o, in, out, 0});
    std::set<std::string> outs;
    for (auto id : o.outputs) outs.insert(g.tensor(id).name);
    for (const auto& [name, t] : store) {
      if (!outs.contains(name)) EXPECT_TRUE(t.bitwise_equal(before.at(name))) << o.name << " touched " << name;
    }
  }
}

TEST(TensorDump, RoundTripAndHeader) {
  Tensor t({2, 1}, {1.0f, -2.5f});
  std::stringstream ss;
  write_tensor(ss, t);
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 4u + 8u + 8u);
  EXPECT_EQ(bytes[0], 2);
  EXPECT_EQ(bytes[4], 2);
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[15]), 0x3f);
  const auto back = read_tensor(ss);
  EXPECT_TRUE(back.bitwise_equal(t));
  std::stringstream truncated(bytes.substr(0, 10));
  EXPECT_THROW(read_tensor(truncated), KernelError);
}

}  // namespace
}  // namespace bigraph

#include "doctest.h"

#include <cmath>

#include "promo/nn/network.hpp"
#include "promo/nn/optim.hpp"

using namespace promo;
using namespace promo::nn;

namespace {

Tensor<double> random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Tensor<double> t({r, c});
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

double gelu_ref(double x) { return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x))); }

}  // namespace

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor<float>({2, 3}, std::vector<float>(5)), ShapeError);
  Tensor<float> t({2, 3}, 1.0f);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(t.reshaped({4}), ShapeError);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
}

TEST_CASE("linear layer with identity weights passes input through") {
  NetworkSpec spec{3, {{LayerKind::linear, 3, 3}}};
  Network<float> net(spec, 1);
  auto& w = net.parameters().get("layer0.weight");
  w.value.fill(0.0f);
  for (int i = 0; i < 3; ++i) w.value.at(i, i) = 1.0f;
  net.parameters().get("layer0.bias").value.fill(0.0f);
  Tensor<float> v({1, 3}, std::vector<float>{0.5f, -2.0f, 7.0f});
  CHECK(forward(net, v, false, 0).output == v);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(3);
  Tape<double> tape;
  Var s = tape.softmax_rows(tape.constant(random_matrix(5, 7, rng)));
  for (std::size_t r = 0; r < 5; ++r) {
    double total = 0;
    for (double v : tape.value(s).row(r)) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("two-layer network matches a hand-composed matmul/GELU chain") {
  NetworkSpec spec{4, {{LayerKind::linear, 4, 5}, {LayerKind::gelu}, {LayerKind::linear, 5, 2}}};
  Network<double> net(spec, 11);
  Rng rng(5);
  Tensor<double> x = random_matrix(3, 4, rng);
  const auto out = forward(net, x, false, 0).output;
  const auto& w1 = net.parameters().get("layer0.weight").value;
  const auto& b1 = net.parameters().get("layer0.bias").value;
  const auto& w2 = net.parameters().get("layer2.weight").value;
  const auto& b2 = net.parameters().get("layer2.bias").value;
  for (std::size_t r = 0; r < 3; ++r) {
    double hidden[5];
    for (std::size_t j = 0; j < 5; ++j) {
      double s = b1[j];
      for (std::size_t i = 0; i < 4; ++i) s += x.at(r, i) * w1.at(i, j);
      hidden[j] = gelu_ref(s);
    }
    for (std::size_t k = 0; k < 2; ++k) {
      double s = b2[k];
      for (std::size_t j = 0; j < 5; ++j) s += hidden[j] * w2.at(j, k);
      CHECK(std::abs(out.at(r, k) - s) < 1e-6);
    }
  }
}

TEST_CASE("gradient of sum(linear(v)) has outer-product structure") {
  NetworkSpec spec{3, {{LayerKind::linear, 3, 2}}};
  Network<double> net(spec, 2);
  Tensor<double> v({1, 3}, std::vector<double>{1.5, -0.5, 2.0});
  auto fwd = forward(net, v, false, 0);
  auto grads = backward(net, fwd, Tensor<double>({1, 2}, 1.0));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(grads[0].at(i, j) == v[i]);
  CHECK(grads[1][0] == 1.0);
}

TEST_CASE("layer norm gradient at symmetric input is zero") {
  Tape<double> tape;
  Var x = tape.input(Tensor<double>({1, 6}, 0.7));
  Var y = tape.layer_norm(x, tape.constant(Tensor<double>({6}, 1.0)), tape.constant(Tensor<double>({6}, 0.0)));
  tape.backward(tape.sum(y));
  const auto g = tape.grad(x);
  for (double v : g.values()) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("tape is single use and validates gradient shape") {
  Tape<double> tape;
  Var x = tape.input(Tensor<double>({2}, 1.0));
  Var s = tape.sum(tape.exp(x));
  CHECK_THROWS_AS(tape.backward(tape.exp(x), Tensor<double>({3})), ShapeError);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), DomainError);
}

TEST_CASE("non-finite activations are rejected") {
  Tape<double> tape;
  Var x = tape.constant(Tensor<double>({1}, 1000.0));
  CHECK_THROWS_AS(tape.exp(x), NumericError);
}

TEST_CASE("GRU cell matches reference values") {
  // weights in [in, 3H] layout, gate order r, z, n
  Tape<double> tape;
  Var x = tape.constant(Tensor<double>({1, 2}, std::vector<double>{0.5, -1.0}));
  Var h = tape.constant(Tensor<double>({1, 2}, std::vector<double>{0.25, -0.75}));
  const double wih[6][2] = {{0.1, -0.2}, {0.3, 0.4}, {-0.5, 0.6}, {0.7, -0.8}, {0.9, 0.1}, {-0.3, 0.2}};
  const double whh[6][2] = {{0.2, 0.1}, {-0.4, 0.3}, {0.5, -0.6}, {0.1, 0.2}, {-0.7, 0.8}, {0.3, -0.1}};
  Tensor<double> wx({2, 6}), wh({2, 6});
  for (int g = 0; g < 6; ++g)
    for (int i = 0; i < 2; ++i) {
      wx.at(i, g) = wih[g][i];
      wh.at(i, g) = whh[g][i];
    }
  Var out = tape.gru_cell(x, h, tape.constant(wx), tape.constant(wh),
                          tape.constant(Tensor<double>({6}, std::vector<double>{0.01, -0.02, 0.03, 0.04, -0.05, 0.06})),
                          tape.constant(Tensor<double>({6}, std::vector<double>{0.1, 0.2, -0.1, -0.2, 0.3, 0.05})));
  CHECK(tape.value(out)[0] == doctest::Approx(0.11716149289932778).epsilon(1e-12));
  CHECK(tape.value(out)[1] == doctest::Approx(-0.5889588510941253).epsilon(1e-12));
}

TEST_CASE("attention primitive") {
  SUBCASE("hand-computed 2-query 3-key case") {
    Tape<double> tape;
    Var q = tape.constant(Tensor<double>({2, 2}, std::vector<double>{1, 0, 0, 1}));
    Var k = tape.constant(Tensor<double>({3, 2}, std::vector<double>{1, 0, 0, 1, 1, 1}));
    Var v = tape.constant(Tensor<double>({3, 2}, std::vector<double>{1, 2, 3, 4, 5, 6}));
    const auto& o = tape.value(tape.attention(q, k, v, AttentionLayout::single(2, 3), 1));
    CHECK(o[0] == doctest::Approx(3.0));
    CHECK(o[1] == doctest::Approx(4.0));
    CHECK(o[2] == doctest::Approx(3.4066725560787154).epsilon(1e-12));
    CHECK(o[3] == doctest::Approx(4.406672556078716).epsilon(1e-12));
  }
  SUBCASE("single key returns the projected value") {
    Rng rng(4);
    ParameterStore<double> store;
    MultiHeadAttention<double> mha(store, "a", 4, 2, rng);
    Tape<double> tape;
    Var mem = tape.constant(random_matrix(1, 4, rng));
    Var out = mha(tape, tape.constant(random_matrix(3, 4, rng)), mem, AttentionLayout::single(3, 1));
    for (std::size_t r = 1; r < 3; ++r)
      for (std::size_t c = 0; c < 4; ++c) CHECK(tape.value(out).at(r, c) == doctest::Approx(tape.value(out).at(0, c)));
  }
  SUBCASE("masked keys get zero weight and all-masked is an error") {
    Tape<double> tape;
    Var q = tape.constant(Tensor<double>({1, 2}, std::vector<double>{1, 0}));
    Var k = tape.constant(Tensor<double>({2, 2}, std::vector<double>{1, 0, 5, 5}));
    Var v = tape.constant(Tensor<double>({2, 2}, std::vector<double>{1, 1, 9, 9}));
    AttentionLayout layout = AttentionLayout::single(1, 2);
    layout.key_mask = {0, 1};
    CHECK(tape.value(tape.attention(q, k, v, layout, 1))[0] == doctest::Approx(1.0));
    layout.key_mask = {1, 1};
    CHECK_THROWS_AS(tape.attention(q, k, v, layout, 1), DomainError);
    CHECK_THROWS_AS(tape.attention(q, k, v, AttentionLayout::single(1, 2), 3), ShapeError);
  }
}

TEST_CASE("gradient check") {
  SUBCASE("linear only") {
    Network<double> net(NetworkSpec{3, {{LayerKind::linear, 3, 4}, {LayerKind::linear, 4, 2}}}, 7);
    Rng rng(1);
    CHECK(gradient_check(net, random_matrix(5, 3, rng), 9) < 1e-6);
  }
  SUBCASE("attention, layer norm and GELU") {
    Network<double> net(NetworkSpec{4,
                                    {{LayerKind::linear, 4, 8},
                                     {LayerKind::layer_norm},
                                     {LayerKind::attention, 0, 0, 2},
                                     {LayerKind::gelu},
                                     {LayerKind::linear, 8, 3}}},
                        7);
    Rng rng(2);
    CHECK(gradient_check(net, random_matrix(5, 4, rng), 10) < 1e-3);
  }
  SUBCASE("corrupted gradient is detected") {
    Network<double> net(NetworkSpec{3, {{LayerKind::linear, 3, 4}, {LayerKind::gelu}, {LayerKind::linear, 4, 2}}}, 7);
    Rng rng(1);
    auto tamper = [](std::vector<Tensor<double>>& g) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < g[0].size(); ++i)
        if (std::abs(g[0][i]) > std::abs(g[0][best])) best = i;
      g[0][best] *= 2.0;
    };
    CHECK(gradient_check(net, random_matrix(5, 3, rng), 9, false, tamper) > 0.3);
  }
  SUBCASE("every layer kind over several seeds") {
    const std::vector<NetworkSpec> specs = {
        {3, {{LayerKind::linear, 3, 4}}},
        {4, {{LayerKind::linear, 4, 4}, {LayerKind::layer_norm}, {LayerKind::linear, 4, 2}}},
        {3, {{LayerKind::linear, 3, 4}, {LayerKind::gelu}, {LayerKind::linear, 4, 2}}},
        {4, {{LayerKind::linear, 4, 4}, {LayerKind::attention, 0, 0, 2}}},
        {3, {{LayerKind::bigru, 0, 6}, {LayerKind::linear, 6, 2}}},
        {1, {{LayerKind::embedding, 5, 3}, {LayerKind::linear, 3, 2}}},
        {3, {{LayerKind::linear, 3, 3}, {LayerKind::gelu}, {LayerKind::residual_add, 0, 0, 1, 0.0, -1}}},
        {3, {{LayerKind::linear, 3, 4}, {LayerKind::dropout, 0, 0, 1, 0.3}, {LayerKind::linear, 4, 2}}},
    };
    for (std::size_t s = 0; s < specs.size(); ++s) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Network<double> net(specs[s], seed);
        Rng rng(derive_seed(seed, {s}));
        Tensor<double> x = random_matrix(4, specs[s].input_dim, rng);
        if (specs[s].layers[0].kind == LayerKind::embedding)
          for (auto& v : x.values()) v = static_cast<double>(rng.integer(0, 4));
        INFO("spec " << s << " seed " << seed);
        CHECK(gradient_check(net, x, seed, true) < 1e-3);
      }
    }
  }
}

TEST_CASE("dropout masks depend only on the seed") {
  Network<float> net(NetworkSpec{4, {{LayerKind::linear, 4, 16}, {LayerKind::dropout, 0, 0, 1, 0.5}}}, 3);
  Tensor<float> x({2, 4}, 1.0f);
  CHECK(forward(net, x, true, 42).output == forward(net, x, true, 42).output);
  CHECK(!(forward(net, x, true, 42).output == forward(net, x, true, 43).output));
  CHECK(forward(net, x, false, 42).output == forward(net, x, false, 43).output);
}

TEST_CASE("network spec validation") {
  CHECK_THROWS_AS((NetworkSpec{3, {{LayerKind::linear, 4, 2}}}.widths()), ShapeError);
  CHECK_THROWS_AS((NetworkSpec{6, {{LayerKind::attention, 0, 0, 4}}}.widths()), ShapeError);
  CHECK(NetworkSpec{3, {{LayerKind::linear, 3, 5}, {LayerKind::gelu}}}.output_dim() == 5);
  Network<float> net(NetworkSpec{3, {{LayerKind::linear, 3, 5}}}, 0);
  CHECK_THROWS_AS(forward(net, Tensor<float>({1, 4}), false, 0), ShapeError);
}

TEST_CASE("AdamW") {
  ParameterStore<double> store;
  auto& p = store.add("p", Tensor<double>::scalar(1.0));
  SUBCASE("zero gradient and zero decay leave parameters unchanged") {
    AdamWState<double> st(store, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
    for (int i = 0; i < 3; ++i) adamw_step(store, st);
    CHECK(p.value[0] == 1.0);
  }
  SUBCASE("single unit step") {
    AdamWState<double> st(store, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
    p.grad[0] = 1.0;
    adamw_step(store, st);
    CHECK(p.value[0] == doctest::Approx(0.9).epsilon(1e-7));
  }
  SUBCASE("decay only") {
    AdamWState<double> st(store, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.01});
    adamw_step(store, st);
    CHECK(p.value[0] == doctest::Approx(0.999).epsilon(1e-12));
  }
  SUBCASE("non-finite gradient") {
    AdamWState<double> st(store, AdamWConfig{});
    p.grad[0] = std::nan("");
    CHECK_THROWS_AS(adamw_step(store, st), NumericError);
  }
}

TEST_CASE("sinusoidal embedding") {
  const auto e0 = sinusoidal_embedding<double>(0, 16);
  for (std::size_t i = 0; i < 16; i += 2) {
    CHECK(e0[i] == 0.0);
    CHECK(e0[i + 1] == 1.0);
  }
  for (int t : {1, 17, 999}) {
    const auto e = sinusoidal_embedding<double>(t, 32);
    for (double v : e.values()) CHECK(std::abs(v) <= 1.0);
  }
  const auto e3 = sinusoidal_embedding<double>(3, 64), e4 = sinusoidal_embedding<double>(4, 64);
  double d = 0;
  for (std::size_t i = 0; i < 64; ++i) d += (e3[i] - e4[i]) * (e3[i] - e4[i]);
  CHECK(std::sqrt(d) == doctest::Approx(1.4718480481224778).epsilon(1e-12));
  CHECK_THROWS_AS(sinusoidal_embedding<double>(1, 7), DomainError);
}

TEST_CASE("ragged bi-GRU equals per-sequence evaluation") {
  Rng rng(8);
  ParameterStore<double> store;
  BiGRU<double> gru(store, "g", 3, 4, rng);
  Tensor<double> x = random_matrix(7, 3, rng);
  Tape<double> tape;
  const auto batched = tape.value(gru(tape, tape.constant(x), {0, 3, 7}));
  Tape<double> t1;
  Tensor<double> a({3, 3}, std::vector<double>(x.data(), x.data() + 9));
  Tensor<double> b({4, 3}, std::vector<double>(x.data() + 9, x.data() + 21));
  const auto ya = t1.value(gru(t1, t1.constant(a), {0, 3}));
  const auto yb = t1.value(gru(t1, t1.constant(b), {0, 4}));
  for (std::size_t i = 0; i < ya.size(); ++i) CHECK(batched[i] == doctest::Approx(ya[i]).epsilon(1e-12));
  for (std::size_t i = 0; i < yb.size(); ++i) CHECK(batched[ya.size() + i] == doctest::Approx(yb[i]).epsilon(1e-12));
}

TEST_CASE("ragged attention gradients match finite differences") {
  Rng rng(12);
  const Tensor<double> q0 = random_matrix(5, 4, rng), k0 = random_matrix(6, 4, rng), v0 = random_matrix(6, 4, rng);
  const Tensor<double> w = random_matrix(5, 4, rng);
  AttentionLayout layout{{0, 2, 5}, {0, 4, 6}, {0, 1, 0, 0, 0, 0}};
  auto loss = [&](const Tensor<double>& q, const Tensor<double>& k, const Tensor<double>& v) {
    Tape<double> t;
    const auto& o = t.value(t.attention(t.constant(q), t.constant(k), t.constant(v), layout, 2));
    double s = 0;
    for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * w[i];
    return s;
  };
  Tape<double> tape;
  Var q = tape.input(q0), k = tape.input(k0), v = tape.input(v0);
  tape.backward(tape.attention(q, k, v, layout, 2), w);
  const Tensor<double>* bases[3] = {&q0, &k0, &v0};
  const Var vars[3] = {q, k, v};
  for (int which = 0; which < 3; ++which) {
    const Tensor<double> g = tape.grad(vars[which]);
    for (std::size_t i = 0; i < bases[which]->size(); ++i) {
      Tensor<double> qs[3] = {q0, k0, v0};
      qs[which][i] += 1e-5;
      const double up = loss(qs[0], qs[1], qs[2]);
      qs[which][i] -= 2e-5;
      const double dn = loss(qs[0], qs[1], qs[2]);
      CHECK(g[i] == doctest::Approx((up - dn) / 2e-5).epsilon(1e-6));
    }
  }
}

#include <doctest.h>

#include <cmath>
#include <functional>

#include "pcbct/errors.hpp"
#include "pcbct/nn/adam.hpp"
#include "pcbct/nn/checkpoint.hpp"
#include "pcbct/nn/layers.hpp"
#include "pcbct/nn/ops.hpp"

using namespace pcbct;
using namespace pcbct::nn;

namespace {

Tensor random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  Tensor t(s);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

// Reduces any output to a scalar through a fixed random projection so every
// output element contributes to the checked gradient.
Var project(const Var& y, const Tensor& weights) {
  return sum_squared_error(y, constant(weights), 0.5);
}

// Central-difference check of d loss / d input for every element of `inputs`.
void check_gradients(const std::vector<Var>& inputs, const std::function<Var()>& loss_fn, double tol = 1e-6) {
  for (const Var& in : inputs) in->grad = Tensor(in->shape());
  backward(loss_fn());
  const double h = 1e-6;
  for (const Var& in : inputs) {
    const Tensor analytic = in->grad;
    for (std::size_t i = 0; i < in->value.numel(); ++i) {
      const double saved = in->value[i];
      in->value[i] = saved + h;
      const double up = loss_fn()->value[0];
      in->value[i] = saved - h;
      const double down = loss_fn()->value[0];
      in->value[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double denom = std::max(1.0, std::abs(numeric));
      CHECK(std::abs(numeric - analytic[i]) / denom < tol);
    }
  }
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("conv2d matches a direct loop") {
    Rng rng = make_rng(1);
    const Tensor x = random_tensor({2, 3, 7, 6}, rng);
    const Tensor w = random_tensor({4, 3, 3, 3}, rng);
    const Tensor b = random_tensor({4, 1, 1, 1}, rng);
    for (int stride : {1, 2}) {
      const Var y = conv2d(constant(x), constant(w), constant(b), stride, 1);
      const int oh = (7 + 2 - 3) / stride + 1, ow = (6 + 2 - 3) / stride + 1;
      REQUIRE(y->shape() == Shape{2, 4, oh, ow});
      for (int n = 0; n < 2; ++n)
        for (int co = 0; co < 4; ++co)
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              double s = b[co];
              for (int ci = 0; ci < 3; ++ci)
                for (int ky = 0; ky < 3; ++ky)
                  for (int kx = 0; kx < 3; ++kx) {
                    const int iy = oy * stride + ky - 1, ix = ox * stride + kx - 1;
                    if (iy < 0 || iy >= 7 || ix < 0 || ix >= 6) continue;
                    s += w.at(co, ci, ky, kx) * x.at(n, ci, iy, ix);
                  }
              CHECK(y->value.at(n, co, oy, ox) == doctest::Approx(s).epsilon(1e-12));
            }
    }
  }

  TEST_CASE("gradients: conv2d") {
    Rng rng = make_rng(2);
    for (int stride : {1, 2}) {
      const Var x = parameter(random_tensor({2, 2, 5, 6}, rng));
      const Var w = parameter(random_tensor({3, 2, 3, 3}, rng));
      const Var b = parameter(random_tensor({3, 1, 1, 1}, rng));
      const Tensor proj = random_tensor(conv2d(x, w, b, stride, 1)->shape(), rng);
      check_gradients({x, w, b}, [&] { return project(conv2d(x, w, b, stride, 1), proj); });
    }
    const Var x = parameter(random_tensor({1, 3, 4, 4}, rng));
    const Var w = parameter(random_tensor({2, 3, 1, 1}, rng));
    const Tensor proj = random_tensor({1, 2, 4, 4}, rng);
    check_gradients({x, w}, [&] { return project(conv2d(x, w, nullptr, 1, 0), proj); });
  }

  TEST_CASE("gradients: elementwise and shape ops") {
    Rng rng = make_rng(3);
    const Var a = parameter(random_tensor({2, 2, 3, 3}, rng));
    const Var b = parameter(random_tensor({2, 2, 3, 3}, rng));
    const Var v = parameter(random_tensor({2, 2, 1, 1}, rng));
    const Tensor p = random_tensor({2, 2, 3, 3}, rng);
    const Tensor p4 = random_tensor({2, 4, 3, 3}, rng);
    const Tensor pu = random_tensor({2, 2, 6, 6}, rng);
    check_gradients({a, b}, [&] { return project(add(a, b), p); });
    check_gradients({a, b}, [&] { return project(sub(a, b), p); });
    check_gradients({a}, [&] { return project(scale(a, -1.7), p); });
    check_gradients({a, v}, [&] { return project(add_channelwise(a, v), p); });
    check_gradients({a, b}, [&] { return project(concat_channels(a, b), p4); });
    check_gradients({a}, [&] { return project(silu(a), p); });
    check_gradients({a}, [&] { return project(sigmoid(a), p); });
    check_gradients({a}, [&] { return project(upsample_nearest2x(a), pu); });
    check_gradients({a, b}, [&] { return sum_squared_error(a, b, 0.3); });
  }

  TEST_CASE("gradients: group norm and linear") {
    Rng rng = make_rng(4);
    const Var x = parameter(random_tensor({2, 4, 3, 3}, rng, 2.0));
    const Var g = parameter(random_tensor({4, 1, 1, 1}, rng));
    const Var be = parameter(random_tensor({4, 1, 1, 1}, rng));
    const Tensor p = random_tensor({2, 4, 3, 3}, rng);
    check_gradients({x, g, be}, [&] { return project(group_norm(x, g, be, 2), p); }, 1e-5);

    const Var in = parameter(random_tensor({3, 5, 1, 1}, rng));
    const Var w = parameter(random_tensor({4, 5, 1, 1}, rng));
    const Var bias = parameter(random_tensor({4, 1, 1, 1}, rng));
    const Tensor pl = random_tensor({3, 4, 1, 1}, rng);
    check_gradients({in, w, bias}, [&] { return project(linear(in, w, bias), pl); });
  }

  TEST_CASE("group norm output is normalized") {
    Rng rng = make_rng(5);
    const Var x = constant(random_tensor({1, 4, 5, 5}, rng, 3.0));
    const Var y = group_norm(x, constant(Tensor({4, 1, 1, 1}, 1.0)), constant(Tensor({4, 1, 1, 1}, 0.0)), 2);
    for (int g = 0; g < 2; ++g) {
      double m = 0, s = 0;
      for (int c = 2 * g; c < 2 * g + 2; ++c)
        for (int i = 0; i < 25; ++i) m += y->value[c * 25 + i];
      m /= 50;
      for (int c = 2 * g; c < 2 * g + 2; ++c)
        for (int i = 0; i < 25; ++i) s += std::pow(y->value[c * 25 + i] - m, 2);
      CHECK(std::abs(m) < 1e-9);
      CHECK(s / 50 == doctest::Approx(1.0).epsilon(1e-3));
    }
  }

  TEST_CASE("straight-through passes the gradient unchanged") {
    Rng rng = make_rng(6);
    const Var x = parameter(random_tensor({1, 2, 2, 2}, rng));
    const Tensor r = random_tensor({1, 2, 2, 2}, rng);
    const Var y = straight_through(x, r);
    for (std::size_t i = 0; i < r.numel(); ++i) CHECK(y->value[i] == r[i]);
    x->grad = Tensor(x->shape());
    backward(sum_squared_error(y, constant(Tensor({1, 2, 2, 2}, 0.0)), 0.5));
    for (std::size_t i = 0; i < r.numel(); ++i) CHECK(x->grad[i] == doctest::Approx(r[i]));
  }

  TEST_CASE("no-grad mode records nothing") {
    const Var w = parameter(Tensor({1, 1, 1, 1}, 2.0));
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    const Var y = scale(w, 3.0);
    CHECK(y->inputs.empty());
  }

  TEST_CASE("adam minimizes a quadratic and clips") {
    const Var w = parameter(Tensor({1, 3, 1, 1}, std::vector<double>{3.0, -2.0, 1.0}));
    Adam adam({w}, {.learning_rate = 0.05});
    for (int i = 0; i < 600; ++i) {
      adam.zero_grad();
      backward(sum_squared_error(w, constant(Tensor({1, 3, 1, 1}, 0.5))));
      adam.step();
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(w->value[i] == doctest::Approx(0.5).epsilon(0.02));

    const Var u = parameter(Tensor({1, 1, 1, 1}, 100.0));
    Adam clipped({u}, {.learning_rate = 0.1, .clip_norm = 1.0});
    clipped.zero_grad();
    backward(sum_squared_error(u, constant(Tensor({1, 1, 1, 1}, 0.0))));
    CHECK(clipped.step() == doctest::Approx(200.0));
    CHECK(u->value[0] == doctest::Approx(99.9).epsilon(1e-6));
  }

  TEST_CASE("checkpoint round trip") {
    Rng rng = make_rng(7);
    ParameterStore store;
    Conv2d conv(store, "conv", 2, 3, 3, 1, 1, rng);
    Linear lin(store, "lin", 4, 2, rng);
    store.round_to_float();
    const Checkpoint ckpt = capture(store, "test", R"({"a":1})");
    const std::vector<char> bytes = encode_checkpoint(ckpt);

    ParameterStore other;
    Rng rng2 = make_rng(8);
    Conv2d conv2(other, "conv", 2, 3, 3, 1, 1, rng2);
    Linear lin2(other, "lin", 4, 2, rng2);
    restore(other, ckpt);
    for (std::size_t i = 0; i < store.all().size(); ++i) {
      const Tensor& a = store.all()[i].var->value;
      const Tensor& b = other.all()[i].var->value;
      for (std::size_t j = 0; j < a.numel(); ++j) CHECK(a[j] == b[j]);
    }
    CHECK_THROWS_AS(ckpt.tensor("missing"), Error);

    ParameterStore wrong;
    Conv2d conv3(wrong, "conv", 2, 4, 3, 1, 1, rng2);
    CHECK_THROWS(restore(wrong, ckpt));
  }

  TEST_CASE("ops reject mismatched shapes") {
    const Var a = constant(Tensor({1, 2, 3, 3}));
    const Var b = constant(Tensor({1, 2, 3, 4}));
    CHECK_THROWS_AS(add(a, b), ParameterError);
    CHECK_THROWS_AS(sum_squared_error(a, b), ParameterError);
    CHECK_THROWS_AS(conv2d(a, constant(Tensor({1, 3, 3, 3})), nullptr, 1, 1), ParameterError);
    CHECK(group_count(48, 8) == 8);
    CHECK(group_count(12, 8) == 6);
  }
}

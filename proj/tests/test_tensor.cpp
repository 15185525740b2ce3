/*
 * Copyright 2026 The vgsum Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "test_support.hpp"
#include "vgsum/grad_check.hpp"
#include "vgsum/tensor_io.hpp"

using namespace vgsum;
using vgsum::testing::random_matrix;

namespace {

Tensor mat(Index r, Index c, std::initializer_list<double> v) { return Tensor::from_values({r, c}, v); }

}  // namespace

TEST_CASE("matmul worked examples") {
  const Tensor eye = mat(2, 2, {1, 0, 0, 1});
  const Tensor b = mat(2, 2, {5, 6, 7, 8});
  CHECK(matmul(eye, b).value() == b.value());
  CHECK(matmul(mat(1, 2, {1, 2}), mat(2, 1, {3, 4})).item() == 11.0);

  Rng rng(1);
  const Tensor any = Tensor(random_matrix(rng, 3, 4));
  const Tensor z = matmul(Tensor::zeros({2, 3}), any);
  CHECK(z.shape() == Shape{2, 4});
  CHECK(z.value().isZero(0));
}

TEST_CASE("matmul rejects mismatched inner extents and names both shapes") {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul is associative on random 4x4 chains") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a(random_matrix(rng, 4, 4)), b(random_matrix(rng, 4, 4)), c(random_matrix(rng, 4, 4));
    const RowMatrix<double> left = matmul(matmul(a, b), c).value();
    const RowMatrix<double> right = matmul(a, matmul(b, c)).value();
    CHECK((left - right).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("softmax worked examples") {
  const Tensor u = softmax(mat(1, 4, {0, 0, 0, 0}));
  for (Index i = 0; i < 4; ++i) CHECK(u.at(i) == doctest::Approx(0.25).epsilon(1e-15));
  const Tensor s = softmax(mat(1, 2, {0, std::log(3.0)}));
  CHECK(std::abs(s.at(0) - 0.25) < 1e-15);
  CHECK(std::abs(s.at(1) - 0.75) < 1e-15);
}

TEST_CASE("softmax rows are a distribution and shift invariant") {
  Rng rng(3);
  std::uniform_real_distribution<double> shift(-50, 50);
  for (int trial = 0; trial < 100; ++trial) {
    const RowMatrix<double> x = random_matrix(rng, 3, 7, 4.0);
    const RowMatrix<double> y = softmax(Tensor(x)).value();
    CHECK(y.minCoeff() >= 0.0);
    CHECK((y.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
    const RowMatrix<double> shifted = softmax(Tensor(RowMatrix<double>(x.array() + shift(rng)))).value();
    CHECK((shifted - y).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("softmax along the first axis normalizes columns") {
  const Tensor y = softmax(mat(2, 2, {0, 1, std::log(3.0), 1}), 0);
  CHECK(std::abs(y.value()(0, 0) - 0.25) < 1e-15);
  CHECK(std::abs(y.value()(1, 0) - 0.75) < 1e-15);
  CHECK(std::abs(y.value()(0, 1) - 0.5) < 1e-15);
  CHECK_THROWS_AS(softmax(mat(1, 2, {0, 0}), 2), ShapeError);
}

TEST_CASE("masked softmax zeroes excluded entries and empty rows") {
  Mask keep(2, 3);
  keep << true, false, true, false, false, false;
  const Tensor y = masked_softmax(mat(2, 3, {0, 100, std::log(3.0), 1, 2, 3}), keep);
  CHECK(y.value()(0, 1) == 0.0);
  CHECK(std::abs(y.value()(0, 0) - 0.25) < 1e-15);
  CHECK(y.value().row(1).isZero(0));
}

TEST_CASE("layer_norm worked examples") {
  const Tensor one = Tensor::ones({2});
  const Tensor zero = Tensor::zeros({2});
  const Tensor y = layer_norm(mat(1, 2, {1, 3}), one, zero, 1e-12);
  CHECK(std::abs(y.at(0) + 1.0) < 1e-9);
  CHECK(std::abs(y.at(1) - 1.0) < 1e-9);

  const Tensor c = layer_norm(mat(1, 3, {4, 4, 4}), Tensor::ones({3}), Tensor::zeros({3}));
  CHECK(c.value().isZero(0));

  const Tensor bias = Tensor::from_values({3}, {0.5, -1, 2});
  const Tensor b = layer_norm(mat(2, 3, {1, 2, 7, -3, 0, 9}), Tensor::zeros({3}), bias);
  for (Index r = 0; r < 2; ++r)
    for (Index k = 0; k < 3; ++k) CHECK(b.value()(r, k) == bias.at(k));

  CHECK_THROWS_AS(layer_norm(mat(1, 3, {1, 2, 3}), one, zero), ShapeError);
}

TEST_CASE("pointwise ops") {
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  CHECK(gelu(Tensor::scalar(0.0)).item() == 0.0);
  const double x = 0.7;
  const double want = 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
  CHECK(std::abs(gelu(Tensor::scalar(x)).item() - want) < 1e-15);
  CHECK(sigmoid(Tensor::scalar(-800.0)).item() >= 0.0);

  const Tensor c = concat(Tensor::zeros({4, 2}), Tensor::ones({4, 3}));
  CHECK(c.shape() == Shape{4, 5});
  CHECK_THROWS_AS(concat(Tensor::zeros({4, 2}), Tensor::ones({3, 3})), ShapeError);
  CHECK_THROWS_AS(add(Tensor::zeros({2, 2}), Tensor::zeros({3, 2})), ShapeError);
  CHECK(add(Tensor::ones({2, 3}), Tensor::from_values({3}, {1, 2, 3})).value()(1, 2) == 4.0);
  CHECK(mul(mat(1, 2, {2, 3}), mat(1, 2, {4, 5})).value() == mat(1, 2, {8, 15}).value());
}

TEST_CASE("non-finite results are hard errors") {
  CHECK_THROWS_AS(scale(Tensor::scalar(1e308), 1e10), NumericError);
  RowMatrix<double> bad(1, 1);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(Tensor{bad}, NumericError);
}

TEST_CASE("backward worked examples") {
  Tensor x = Tensor::scalar(3.0).set_requires_grad(true);
  backward(mul(x, x));
  CHECK(x.grad()(0, 0) == 6.0);

  Tensor p = Tensor::scalar(1.5).set_requires_grad(true);
  Tensor q = Tensor::scalar(2.0).set_requires_grad(true);
  backward(mul(q, q));
  CHECK(p.grad()(0, 0) == 0.0);

  // Leaf gradients accumulate until cleared.
  backward(mul(x, x));
  CHECK(x.grad()(0, 0) == 12.0);
  x.zero_grad();
  backward(mul(x, x));
  CHECK(x.grad()(0, 0) == 6.0);

  CHECK_THROWS_AS(backward(Tensor::ones({2, 2}).set_requires_grad(true)), ContractError);
}

TEST_CASE("no-grad guard suppresses graph recording") {
  Tensor x = Tensor::scalar(2.0).set_requires_grad(true);
  {
    NoGradGuard guard;
    CHECK_FALSE(mul(x, x).requires_grad());
  }
  CHECK(mul(x, x).requires_grad());
}

TEST_CASE("grad_check oracle examples") {
  Rng rng(4);
  const RowMatrix<double> a = random_matrix(rng, 3, 3);
  const RowMatrix<double> sym = a * a.transpose();
  Tensor v = Tensor(random_matrix(rng, 1, 3));
  const Tensor s(sym);
  const auto quad = [&] { return sum(mul(matmul(v, s), v)); };
  CHECK(grad_check<double>(quad, {v}).max_error < 1e-6);

  Tensor c = Tensor(random_matrix(rng, 2, 2));
  const auto constant = [&] { return Tensor::scalar(4.0); };
  const GradReport r = grad_check<double>(constant, {c});
  CHECK(r.max_error == 0.0);

  Tensor w = Tensor::scalar(1.0);
  const auto blowup = [&] {
    return w.value()(0, 0) > 1.00001 ? Tensor(RowMatrix<double>::Constant(1, 1, 1e308)) * 1e10 : sum(w);
  };
  CHECK_THROWS_AS(grad_check<double>(blowup, {w}), NumericError);
}

TEST_CASE("five-point stencil cancels the quadratic truncation term") {
  // f = x^4 at x = 1: central differences give 4 + 4 eps^2, five-point is exact for quartics.
  Tensor x = Tensor::scalar(1.0);
  const auto quartic = [&] { return sum(mul(mul(x, x), mul(x, x))); };
  const double central = grad_check<double>(quartic, {x}, 1e-2).max_error;
  CHECK(std::abs(central - 1e-4 / 1.0001) < 1e-9);
  CHECK(grad_check<double>(quartic, {x}, 1e-2, Stencil::FivePoint).max_error < 1e-10);
}

TEST_CASE("matmul gradients match finite differences") {
  Rng rng(5);
  Tensor a(random_matrix(rng, 3, 4)), b(random_matrix(rng, 4, 2));
  const RowMatrix<double> w = random_matrix(rng, 3, 2);
  const auto f = [&] { return vgsum::testing::readout(matmul(a, b), w); };
  CHECK(grad_check<double>(f, {a, b}).max_error < 1e-6);
}

TEST_CASE("tensor container round-trips bit-exactly") {
  Rng rng(6);
  TensorMap m;
  m["a"] = Tensor(random_matrix(rng, 3, 5));
  m["b.c"] = Tensor(Shape{2, 3, 4}, random_matrix(rng, 6, 4));
  const auto path = std::filesystem::temp_directory_path() / "vgsum_tensor_io_test.bin";
  save_tensors(path, m);
  const TensorMap back = load_tensors(path);
  REQUIRE(back.size() == 2);
  CHECK(back.at("a").value() == m["a"].value());
  CHECK(back.at("b.c").shape() == Shape{2, 3, 4});
  CHECK(back.at("b.c").value() == m["b.c"].value());
  std::filesystem::remove(path);

  std::stringstream junk("not a tensor file");
  CHECK_THROWS_AS(read_tensor(junk), InputError);
}

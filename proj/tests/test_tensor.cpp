#include "doctest.h"

#include <cmath>

#include "siammcvae/tensor.hpp"
#include "testers.hpp"

using namespace siammcvae;
using testers::fd_check;
using testers::random_tensor;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("matmul identity and hand arithmetic") {
  Tensor eye = Tensor::constant({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::constant({2, 2}, {1, 2, 3, 4});
  Tensor r = matmul(eye, m);
  CHECK(r.values() == m.values());

  Tensor a = Tensor::constant({1, 2}, {1, 2});
  Tensor b = Tensor::constant({2, 1}, {3, 4});
  CHECK(matmul(a, b).value() == 11.0);

  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("matmul gradient vs finite differences") {
  Rng rng(42);
  double err = fd_check({{5, 4}, {4, 3}},
                        [](Tape&, const std::vector<Tensor>& in) {
                          return frobenius_sq(matmul(in[0], in[1]));
                        },
                        rng);
  CHECK(err < 1e-6);
}

TEST_CASE("matmul transposed variants match plain matmul and pass fd") {
  Rng rng(7);
  Tensor a = random_tensor({4, 6}, rng);
  Tensor b = random_tensor({5, 6}, rng);
  Tensor via_nt = matmul_nt(a, b);
  Tensor via_plain = matmul(a, transpose(b));
  for (int64_t i = 0; i < via_nt.size(); ++i)
    CHECK(via_nt.values()[i] == doctest::Approx(via_plain.values()[i]).epsilon(1e-14));

  double err = fd_check({{4, 6}, {5, 6}},
                        [](Tape&, const std::vector<Tensor>& in) {
                          return frobenius_sq(matmul_nt(in[0], in[1]));
                        },
                        rng);
  CHECK(err < 1e-5);
  err = fd_check({{6, 4}, {6, 5}},
                 [](Tape&, const std::vector<Tensor>& in) {
                   return frobenius_sq(matmul_tn(in[0], in[1]));
                 },
                 rng);
  CHECK(err < 1e-5);
}

TEST_CASE("layernorm collapses constant rows to bias") {
  Tensor x = Tensor::constant({1, 3}, {5, 5, 5});
  Tensor g = Tensor::full({3}, 1.0);
  Tensor b = Tensor::zeros({3});
  Tensor y = layernorm(x, g, b);
  for (double v : y.values()) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("layernorm leaves a normalized row nearly fixed") {
  Tensor x = Tensor::constant({1, 2}, {1, -1});
  Tensor y = layernorm(x, Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-12);
  CHECK(y.at({0, 0}) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(y.at({0, 1}) == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("layernorm output row mean equals the bias") {
  Rng rng(3);
  Tensor x = random_tensor({3, 8}, rng);
  Tensor y = layernorm(x, Tensor::full({8}, 1.0), Tensor::full({8}, 0.3));
  for (int r = 0; r < 3; ++r) {
    double m = 0;
    for (int j = 0; j < 8; ++j) m += y.at({r, j});
    CHECK(m / 8 == doctest::Approx(0.3).epsilon(1e-12));
  }
}

TEST_CASE("layernorm gradient") {
  Rng rng(11);
  double err = fd_check({{3, 8}, {8}, {8}},
                        [](Tape&, const std::vector<Tensor>& in) {
                          return frobenius_sq(layernorm(in[0], in[1], in[2]));
                        },
                        rng);
  CHECK(err < 1e-5);
}

TEST_CASE("softmax rows sum to one and handle large inputs") {
  Tensor x = Tensor::constant({2}, {0, 0});
  Tensor y = softmax_lastdim(x);
  CHECK(y.values()[0] == doctest::Approx(0.5).epsilon(1e-15));

  Tensor big = softmax_lastdim(Tensor::constant({2}, {1000, 0}));
  CHECK(big.values()[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(big.values()[1] == doctest::Approx(0.0).epsilon(1e-12));

  Rng rng(5);
  Tensor r = softmax_lastdim(random_tensor({4, 7}, rng, -3, 3));
  for (int i = 0; i < 4; ++i) {
    double s = 0;
    for (int j = 0; j < 7; ++j) s += r.at({i, j});
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("softmax gradient") {
  Rng rng(13);
  double err = fd_check({{2, 5}, {2, 5}},
                        [](Tape&, const std::vector<Tensor>& in) {
                          // weight the outputs to get a non-symmetric pullback
                          return sum(hadamard(softmax_lastdim(in[0]), in[1]));
                        },
                        rng);
  CHECK(err < 1e-6);
}

TEST_CASE("elementwise examples") {
  CHECK(gelu(Tensor::scalar(0.0)).value() == 0.0);
  CHECK(frobenius_sq(Tensor::constant({1, 2}, {3, 4})).value() == 25.0);
  CHECK(sum(Tensor::constant({3}, {1, 2, 3})).value() == 6.0);
  CHECK(mean(Tensor::constant({4}, {1, 2, 3, 6})).value() == 3.0);
}

TEST_CASE("every differentiable op passes the finite-difference oracle") {
  Rng rng(101);
  auto check = [&](const char* name, std::vector<Shape> shapes,
                   std::function<Tensor(Tape&, const std::vector<Tensor>&)> f,
                   double lo = -1.0, double hi = 1.0) {
    double err = fd_check(shapes, f, rng, 1e-5, lo, hi);
    INFO("op: " << name);
    CHECK(err < 1e-5);
  };

  check("add", {{3, 4}, {3, 4}}, [](Tape&, const std::vector<Tensor>& in) {
    return frobenius_sq(add(in[0], in[1]));
  });
  check("sub", {{3, 4}, {3, 4}}, [](Tape&, const std::vector<Tensor>& in) {
    return frobenius_sq(sub(in[0], in[1]));
  });
  check("hadamard", {{3, 4}, {3, 4}}, [](Tape&, const std::vector<Tensor>& in) {
    return frobenius_sq(hadamard(in[0], in[1]));
  });
  check("scale", {{3, 4}}, [](Tape&, const std::vector<Tensor>& in) {
    return frobenius_sq(scale(in[0], -1.7));
  });
  check("add_scalar", {{3, 4}}, [](Tape&, const std::vector<Tensor>& in) {
    return frobenius_sq(add_scalar(in[0], 0.7));
  });
  check("div_scalar", {{3, 4}}, [](Tape&, const std::vector<Tensor>& in) {
    return frobenius_sq(div_scalar(in[0], 3.0));
  });
  check("add_rowvec", {{3, 4}, {4}}, [](Tape&, const std::vector<Tensor>& in) {
    return frobenius_sq(add_rowvec(in[0], in[1]));
  });
  check("gelu", {{3, 4}}, [](Tape&, const std::vector<Tensor>& in) {
    return frobenius_sq(gelu(in[0]));
  });
  check("transpose", {{3, 4}}, [](Tape&, const std::vector<Tensor>& in) {
    return frobenius_sq(matmul(transpose(in[0]), in[0]));
  });
  check("concat_cols", {{3, 2}, {3, 4}}, [](Tape&, const std::vector<Tensor>& in) {
    return frobenius_sq(concat_cols(in[0], in[1]));
  });
  check("concat_rows", {{2, 4}, {3, 4}}, [](Tape&, const std::vector<Tensor>& in) {
    return frobenius_sq(concat_rows(in[0], in[1]));
  });
  check("slice_rows", {{5, 4}}, [](Tape&, const std::vector<Tensor>& in) {
    return frobenius_sq(slice_rows(in[0], 1, 4));
  });
  check("slice_cols", {{5, 4}}, [](Tape&, const std::vector<Tensor>& in) {
    return frobenius_sq(slice_cols(in[0], 1, 3));
  });
  check("reshape", {{3, 4}}, [](Tape&, const std::vector<Tensor>& in) {
    return frobenius_sq(matmul(reshape(in[0], {4, 3}), in[0]));
  });
  check("sum", {{3, 4}}, [](Tape&, const std::vector<Tensor>& in) {
    Tensor s = sum(in[0]);
    return hadamard(s, s);
  });
  check("mean", {{3, 4}}, [](Tape&, const std::vector<Tensor>& in) {
    Tensor m = mean(in[0]);
    return hadamard(m, m);
  });
  check("frobenius_sq", {{3, 4}}, [](Tape&, const std::vector<Tensor>& in) {
    return frobenius_sq(in[0]);
  });
  check("exp", {{3, 4}}, [](Tape&, const std::vector<Tensor>& in) {
    return frobenius_sq(exp(in[0]));
  });
  check("log", {{3, 4}}, [](Tape&, const std::vector<Tensor>& in) {
    return frobenius_sq(log(in[0]));
  }, 0.5, 1.5);
  check("layernorm", {{3, 4}, {4}, {4}}, [](Tape&, const std::vector<Tensor>& in) {
    return frobenius_sq(layernorm(in[0], in[1], in[2]));
  });
  check("softmax", {{3, 4}, {3, 4}}, [](Tape&, const std::vector<Tensor>& in) {
    return sum(hadamard(softmax_lastdim(in[0]), in[1]));
  });
}

TEST_CASE("backward of sum gives all-ones; frobenius_sq gives 2x") {
  Tape tape;
  Tensor x = tape.leaf({2, 3}, {1, -2, 3, 0.5, 4, -1});
  tape.backward(sum(x));
  for (double g : tape.grad(x)) CHECK(g == 1.0);

  Tape tape2;
  Tensor y = tape2.leaf({2, 2}, {1, -2, 3, 0.5});
  tape2.backward(frobenius_sq(y));
  const auto& g = tape2.grad(y);
  CHECK(g[0] == 2.0);
  CHECK(g[1] == -4.0);
  CHECK(g[2] == 6.0);
  CHECK(g[3] == 1.0);
}

TEST_CASE("fan-out accumulates the sum of both path gradients") {
  // f(x) = sum(x*x) + 3*sum(x) on a 3-node graph; df/dx = 2x + 3
  Tape tape;
  Tensor x = tape.leaf({3}, {1, -2, 0.5});
  Tensor loss = add(sum(hadamard(x, x)), scale(sum(x), 3.0));
  tape.backward(loss);
  const auto& g = tape.grad(x);
  CHECK(g[0] == doctest::Approx(2 * 1 + 3));
  CHECK(g[1] == doctest::Approx(2 * -2 + 3));
  CHECK(g[2] == doctest::Approx(2 * 0.5 + 3));
}

TEST_CASE("backward contract violations") {
  Tape tape;
  Tensor x = tape.leaf({2}, {1, 2});
  CHECK_THROWS_AS(tape.backward(x), ContractError);  // non-scalar
  Tensor loss = sum(x);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), ContractError);  // twice without new forward

  Tape empty;
  Tensor c = Tensor::scalar(1.0);
  CHECK_THROWS_AS(backward(c), ContractError);  // constants have no tape
}

TEST_CASE("unused leaves report zero gradients") {
  Tape tape;
  Tensor x = tape.leaf({2}, {1, 2});
  Tensor y = tape.leaf({2}, {3, 4});
  tape.backward(sum(x));
  for (double g : tape.grad(y)) CHECK(g == 0.0);
}

TEST_CASE("non-finite values abort with the op name") {
  CHECK_THROWS_AS(Tensor::constant({1}, {std::nan("")}), NumericError);
  Tensor z = Tensor::zeros({2});
  try {
    Tensor l = log(z);  // log(0) = -inf
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
}

TEST_CASE("identical inputs produce bit-identical forward values") {
  Rng rng1(99), rng2(99);
  Tensor a1 = random_tensor({6, 6}, rng1);
  Tensor a2 = random_tensor({6, 6}, rng2);
  Tensor r1 = softmax_lastdim(matmul(a1, gelu(a1)));
  Tensor r2 = softmax_lastdim(matmul(a2, gelu(a2)));
  CHECK(r1.values() == r2.values());
}

TEST_CASE("ops on constants stay off-tape; mixed ops record") {
  Tensor a = Tensor::constant({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::constant({2, 2}, {1, 0, 0, 1});
  CHECK_FALSE(matmul(a, b).on_tape());

  Tape tape;
  Tensor leaf = tape.leaf({2, 2}, {1, 1, 1, 1});
  Tensor mixed = matmul(a, leaf);
  CHECK(mixed.on_tape());
  tape.backward(sum(mixed));
  const auto& g = tape.grad(leaf);
  // column sums of a
  CHECK(g[0] == 4.0);
  CHECK(g[2] == 6.0);
}

TEST_SUITE_END();

#include <cmath>
#include <set>

#include "doctest.h"
#include "shapnn/matrix.hpp"
#include "shapnn/rng.hpp"

using namespace shapnn;

TEST_CASE("rng is deterministic and in range") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("rng below is unbiased over small range") {
  Rng rng(7);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) ++counts[rng.index(5)];
  for (int c : counts) {
    CHECK(c > 9500);
    CHECK(c < 10500);
  }
}

TEST_CASE("rng normal has sane first moments") {
  Rng rng(3);
  double sum = 0.0, ss = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double v = rng.normal();
    sum += v;
    ss += v * v;
  }
  double mean = sum / n;
  double var = ss / n - mean * mean;
  CHECK(std::fabs(mean) < 0.02);
  CHECK(std::fabs(var - 1.0) < 0.03);
}

TEST_CASE("rng choose returns distinct indices") {
  Rng rng(11);
  auto picked = rng.choose(10, 4);
  CHECK(picked.size() == 4);
  std::set<std::size_t> s(picked.begin(), picked.end());
  CHECK(s.size() == 4);
  for (auto v : s) CHECK(v < 10);
}

TEST_CASE("rng fork gives independent reproducible streams") {
  Rng base(5);
  Rng f1 = base.fork(1), f1b = base.fork(1), f2 = base.fork(2);
  CHECK(f1.uniform() == f1b.uniform());
  CHECK(f1.uniform() != f2.uniform());
}

TEST_CASE("matmul matches hand computation") {
  Matrix A(2, 3), B(3, 2);
  // A = [[1,2,3],[4,5,6]], B = [[7,8],[9,10],[11,12]]
  for (int i = 0; i < 6; ++i) A.a[i] = i + 1;
  for (int i = 0; i < 6; ++i) B.a[i] = i + 7;
  Matrix C = matmul(A, B);
  CHECK(C(0, 0) == doctest::Approx(58));
  CHECK(C(0, 1) == doctest::Approx(64));
  CHECK(C(1, 0) == doctest::Approx(139));
  CHECK(C(1, 1) == doctest::Approx(154));

  Matrix Ct = matmul_tn(A, A);  // 3x3 = A^T A
  CHECK(Ct(0, 0) == doctest::Approx(17));
  CHECK(Ct(2, 2) == doctest::Approx(45));

  Matrix Cn = matmul_nt(A, A);  // 2x2 = A A^T
  CHECK(Cn(0, 0) == doctest::Approx(14));
  CHECK(Cn(0, 1) == doctest::Approx(32));
  CHECK(Cn(1, 1) == doctest::Approx(77));
}

TEST_CASE("matmul rejects mismatched shapes") {
  Matrix A(2, 3), B(2, 2);
  CHECK_THROWS_AS(matmul(A, B), std::invalid_argument);
}

TEST_CASE("solve_linear solves and flags singular systems") {
  Matrix A(3, 3);
  double av[9] = {2, 1, -1, -3, -1, 2, -2, 1, 2};
  std::copy(av, av + 9, A.a.begin());
  std::vector<double> b{8, -11, -3};
  auto x = solve_linear(A, b);  // known solution (2, 3, -1)
  CHECK(x[0] == doctest::Approx(2.0));
  CHECK(x[1] == doctest::Approx(3.0));
  CHECK(x[2] == doctest::Approx(-1.0));

  Matrix S(2, 2);
  S(0, 0) = 1.0;
  S(0, 1) = 2.0;
  S(1, 0) = 2.0;
  S(1, 1) = 4.0;
  CHECK_THROWS_AS(solve_linear(S, {1.0, 2.0}), std::runtime_error);
}

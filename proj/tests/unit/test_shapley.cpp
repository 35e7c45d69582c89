#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "shapnn/shapley.hpp"

using namespace shapnn;
using namespace shapnn::shapley;

namespace {

std::size_t mask_size(const SubsetMask& m) {
  std::size_t s = 0;
  for (auto b : m) s += b;
  return s;
}

// Glove game on three players: 0 and 1 hold left gloves, 2 the right one;
// a coalition is worth 1 when it can form a pair.
ValueFunction glove_game() {
  ValueFunction v;
  v.n_players = 3;
  v.eval = [](const SubsetMask& s) {
    double worth = s[2] && (s[0] || s[1]) ? 1.0 : 0.0;
    return std::vector<double>{worth};
  };
  return v;
}

ValueFunction additive_game(const std::vector<double>& c) {
  ValueFunction v;
  v.n_players = c.size();
  v.eval = [c](const SubsetMask& s) {
    double total = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i)
      if (s[i]) total += c[i];
    return std::vector<double>{total};
  };
  return v;
}

// Random transferable-utility game as a lookup table over coalitions.
ValueFunction random_game(std::size_t n, Rng& rng) {
  std::vector<double> table(1u << n);
  for (double& x : table) x = rng.uniform(-1.0, 1.0);
  table[0] = 0.0;
  ValueFunction v;
  v.n_players = n;
  v.eval = [table, n](const SubsetMask& s) {
    std::uint32_t bits = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (s[i]) bits |= 1u << i;
    return std::vector<double>{table[bits]};
  };
  return v;
}

}  // namespace

TEST_CASE("kernel weights match closed forms for small n") {
  CHECK(kernel_weight(2, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(kernel_normalizer(2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(kernel_weight(3, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(kernel_weight(3, 2) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(kernel_normalizer(3) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(kernel_weight(4, 1) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(kernel_weight(4, 2) == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(kernel_weight(4, 3) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(kernel_normalizer(4) == doctest::Approx(2.75).epsilon(1e-15));
  CHECK_THROWS_AS(kernel_weight(3, 0), std::invalid_argument);
  CHECK_THROWS_AS(kernel_weight(3, 3), std::invalid_argument);
}

TEST_CASE("sample_subset only emits proper nonempty coalitions") {
  Rng rng(1);
  for (std::size_t n = 2; n <= 8; ++n)
    for (int rep = 0; rep < 200; ++rep) {
      SubsetMask m = sample_subset(n, rng);
      REQUIRE(m.size() == n);
      std::size_t s = mask_size(m);
      CHECK(s >= 1);
      CHECK(s <= n - 1);
    }
  CHECK_THROWS_AS(sample_subset(1, rng), std::invalid_argument);
}

TEST_CASE("sample_subset follows the Shapley kernel distribution") {
  // n=4: 14 proper coalitions; expected mass w(|S|)/Z with Z=2.75. A chi-square
  // goodness-of-fit at alpha=0.01 has 13 degrees of freedom.
  const std::size_t n = 4;
  const std::size_t draws = 40000;
  Rng rng(7);
  std::map<std::uint32_t, std::size_t> counts;
  for (std::size_t d = 0; d < draws; ++d) {
    SubsetMask m = sample_subset(n, rng);
    std::uint32_t bits = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (m[i]) bits |= 1u << i;
    counts[bits]++;
  }
  double z = kernel_normalizer(n);
  double chi2 = 0.0;
  std::size_t cells = 0;
  for (std::uint32_t bits = 1; bits < (1u << n) - 1u; ++bits) {
    std::size_t s = static_cast<std::size_t>(__builtin_popcount(bits));
    double expected = draws * kernel_weight(n, s) / z;
    double observed = static_cast<double>(counts[bits]);
    chi2 += (observed - expected) * (observed - expected) / expected;
    cells++;
  }
  REQUIRE(cells == 14);
  CHECK(chi2 < 27.68824961045705);  // chi-square 0.99 quantile, df=13
}

TEST_CASE("exact_shapley solves the glove game") {
  Matrix phi = exact_shapley(glove_game());
  REQUIRE(phi.rows == 3);
  CHECK(phi(0, 0) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(phi(1, 0) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(phi(2, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("exact_shapley recovers additive games exactly") {
  Rng rng(3);
  std::vector<double> c{1.5, -2.0, 0.25, 3.75, -0.5};
  Matrix phi = exact_shapley(additive_game(c));
  for (std::size_t i = 0; i < c.size(); ++i)
    CHECK(phi(i, 0) == doctest::Approx(c[i]).epsilon(1e-12));
}

TEST_CASE("exact_shapley splits symmetric games equally") {
  // v(S) = |S|^2 on three players: total 9 shared as (3,3,3).
  ValueFunction v;
  v.n_players = 3;
  v.eval = [](const SubsetMask& s) {
    double k = static_cast<double>(s[0] + s[1] + s[2]);
    return std::vector<double>{k * k};
  };
  Matrix phi = exact_shapley(v);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(phi(i, 0) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("exact_shapley handles multi-output games column-wise") {
  ValueFunction v;
  v.n_players = 3;
  v.n_outputs = 2;
  v.eval = [](const SubsetMask& s) {
    double glove = s[2] && (s[0] || s[1]) ? 1.0 : 0.0;
    double additive = 2.0 * s[0] - 1.0 * s[1] + 0.5 * s[2];
    return std::vector<double>{glove, additive};
  };
  Matrix phi = exact_shapley(v);
  CHECK(phi(2, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(phi(0, 1) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(phi(1, 1) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(phi(2, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("exact_shapley rejects oversized and malformed games") {
  ValueFunction v;
  v.n_players = 21;
  v.eval = [](const SubsetMask&) { return std::vector<double>{0.0}; };
  CHECK_THROWS_AS(exact_shapley(v), std::invalid_argument);
  ValueFunction empty;
  empty.n_players = 3;
  CHECK_THROWS_AS(exact_shapley(empty), std::invalid_argument);
}

TEST_CASE("Shapley axioms hold on randomized games") {
  Rng rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    std::size_t n = 3 + rng.index(4);

    // Efficiency on an arbitrary game.
    ValueFunction u = random_game(n, rng);
    Matrix phi = exact_shapley(u);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += phi(i, 0);
    double vn = u.eval(SubsetMask(n, 1))[0];
    CHECK(total == doctest::Approx(vn).epsilon(1e-9));

    // Symmetry: symmetrize players 0 and 1 by averaging over the swap.
    ValueFunction sym;
    sym.n_players = n;
    sym.eval = [u](const SubsetMask& s) {
      SubsetMask t = s;
      std::swap(t[0], t[1]);
      return std::vector<double>{u.eval(s)[0] + u.eval(t)[0]};
    };
    Matrix phi_sym = exact_shapley(sym);
    CHECK(phi_sym(0, 0) == doctest::Approx(phi_sym(1, 0)).epsilon(1e-9));

    // Dummy: player n-1 contributes a fixed amount c to every coalition.
    double c = rng.uniform(-2.0, 2.0);
    ValueFunction dummy;
    dummy.n_players = n;
    dummy.eval = [u, c, n](const SubsetMask& s) {
      SubsetMask t = s;
      t[n - 1] = 0;
      return std::vector<double>{u.eval(t)[0] + (s[n - 1] ? c : 0.0)};
    };
    Matrix phi_dummy = exact_shapley(dummy);
    CHECK(phi_dummy(n - 1, 0) == doctest::Approx(c).epsilon(1e-9));

    // Linearity: phi(a*u + b*w) = a*phi(u) + b*phi(w).
    ValueFunction w = random_game(n, rng);
    double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
    ValueFunction combo;
    combo.n_players = n;
    combo.eval = [u, w, a, b](const SubsetMask& s) {
      return std::vector<double>{a * u.eval(s)[0] + b * w.eval(s)[0]};
    };
    Matrix phi_u = exact_shapley(u);
    Matrix phi_w = exact_shapley(w);
    Matrix phi_combo = exact_shapley(combo);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(phi_combo(i, 0) ==
            doctest::Approx(a * phi_u(i, 0) + b * phi_w(i, 0)).epsilon(1e-9));
  }
}

TEST_CASE("exhaustive kernel_shap reproduces exact Shapley values") {
  Rng rng(13);
  for (int rep = 0; rep < 8; ++rep) {
    std::size_t n = 2 + rng.index(7);
    ValueFunction v = random_game(n, rng);
    Matrix exact = exact_shapley(v);
    KernelShapConfig cfg;
    cfg.exhaustive = true;
    Matrix approx = kernel_shap(v, cfg);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(std::fabs(approx(i, 0) - exact(i, 0)) <= 1e-6);
  }
}

TEST_CASE("sampled kernel_shap is deterministic and converges with budget") {
  Rng rng(17);
  ValueFunction v = random_game(6, rng);
  Matrix exact = exact_shapley(v);
  KernelShapConfig cfg;
  cfg.budget = 4096;
  cfg.seed = 5;
  Matrix a = kernel_shap(v, cfg);
  Matrix b = kernel_shap(v, cfg);
  for (std::size_t i = 0; i < 6; ++i) CHECK(a(i, 0) == b(i, 0));
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(std::fabs(a(i, 0) - exact(i, 0)) < 0.15);
  // Sampled attributions always satisfy efficiency by construction.
  double total = 0.0;
  for (std::size_t i = 0; i < 6; ++i) total += a(i, 0);
  double vn = v.eval(SubsetMask(6, 1))[0];
  CHECK(total == doctest::Approx(vn).epsilon(1e-9));
}

TEST_CASE("kernel_shap handles the single-player game") {
  ValueFunction v;
  v.n_players = 1;
  v.eval = [](const SubsetMask& s) {
    return std::vector<double>{s[0] ? 4.0 : 1.0};
  };
  Matrix phi = kernel_shap(v, KernelShapConfig{});
  CHECK(phi(0, 0) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("efficient_normalize enforces the efficiency identity") {
  Rng rng(19);
  for (int rep = 0; rep < 50; ++rep) {
    std::size_t n = 2 + rng.index(10);
    std::size_t k = 1 + rng.index(4);
    Matrix phi(n, k);
    for (double& x : phi.a) x = rng.uniform(-3.0, 3.0);
    std::vector<double> v_full(k), v_empty(k);
    for (std::size_t j = 0; j < k; ++j) {
      v_full[j] = rng.uniform(-2.0, 2.0);
      v_empty[j] = rng.uniform(-2.0, 2.0);
    }
    Matrix eff = efficient_normalize(phi, v_full, v_empty);
    for (std::size_t j = 0; j < k; ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += eff(i, j);
      CHECK(std::fabs(sum - (v_full[j] - v_empty[j])) <= 1e-9);
      // The correction is a uniform shift: pairwise gaps are preserved.
      CHECK(eff(1, j) - eff(0, j) ==
            doctest::Approx(phi(1, j) - phi(0, j)).epsilon(1e-12));
    }
    // Applying it twice changes nothing.
    Matrix twice = efficient_normalize(eff, v_full, v_empty);
    for (std::size_t i = 0; i < twice.a.size(); ++i)
      CHECK(twice.a[i] == doctest::Approx(eff.a[i]).epsilon(1e-12));
  }
}

TEST_CASE("fastshap_loss on the glove game with exact attributions") {
  ValueFunction v = glove_game();
  Matrix phi(3, 1);
  phi(0, 0) = 1.0 / 6.0;
  phi(1, 0) = 1.0 / 6.0;
  phi(2, 0) = 2.0 / 3.0;
  std::vector<SubsetMask> subsets;
  std::vector<std::vector<double>> values;
  for (std::uint32_t bits = 1; bits < 7u; ++bits) {
    SubsetMask m(3, 0);
    for (std::size_t i = 0; i < 3; ++i)
      if (bits & (1u << i)) m[i] = 1;
    subsets.push_back(m);
    values.push_back(v.eval(m));
  }
  double loss = fastshap_loss(phi, subsets, values, {0.0}, 0);
  CHECK(loss == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("fastshap_loss vanishes on additive games with true attributions") {
  std::vector<double> c{0.5, -1.5, 2.0, 1.0};
  ValueFunction v = additive_game(c);
  Matrix phi(4, 1);
  for (std::size_t i = 0; i < 4; ++i) phi(i, 0) = c[i];
  Rng rng(23);
  std::vector<SubsetMask> subsets;
  std::vector<std::vector<double>> values;
  for (int m = 0; m < 16; ++m) {
    subsets.push_back(sample_subset(4, rng));
    values.push_back(v.eval(subsets.back()));
  }
  CHECK(fastshap_loss(phi, subsets, values, {0.0}, 0) <= 1e-24);
}

TEST_CASE("fastshap_loss_grad matches finite differences") {
  Rng rng(29);
  ValueFunction v = random_game(5, rng);
  Matrix phi(5, 1);
  for (double& x : phi.a) x = rng.uniform(-1.0, 1.0);
  std::vector<SubsetMask> subsets;
  std::vector<std::vector<double>> values;
  for (int m = 0; m < 12; ++m) {
    subsets.push_back(sample_subset(5, rng));
    values.push_back(v.eval(subsets.back()));
  }
  std::vector<double> v_empty = v.eval(SubsetMask(5, 0));
  Matrix grad(5, 1);
  fastshap_loss_grad(phi, subsets, values, v_empty, 0, 1.0, grad);
  const double eps = 1e-6;
  for (std::size_t i = 0; i < 5; ++i) {
    Matrix hi = phi, lo = phi;
    hi(i, 0) += eps;
    lo(i, 0) -= eps;
    double numeric = (fastshap_loss(hi, subsets, values, v_empty, 0) -
                      fastshap_loss(lo, subsets, values, v_empty, 0)) /
                     (2.0 * eps);
    CHECK(grad(i, 0) == doctest::Approx(numeric).epsilon(1e-6));
  }
}

TEST_CASE("fastshap_loss validates its inputs") {
  Matrix phi(3, 1);
  CHECK_THROWS_AS(fastshap_loss(phi, {}, {}, {0.0}, 0), std::invalid_argument);
  std::vector<SubsetMask> subsets{SubsetMask(3, 1)};
  std::vector<std::vector<double>> values{{1.0}, {2.0}};
  CHECK_THROWS_AS(fastshap_loss(phi, subsets, values, {0.0}, 0),
                  std::invalid_argument);
  std::vector<std::vector<double>> one{{1.0}};
  CHECK_THROWS_AS(fastshap_loss(phi, subsets, one, {0.0}, 5),
                  std::invalid_argument);
}

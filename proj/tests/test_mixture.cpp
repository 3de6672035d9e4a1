#include <doctest.h>

#include <cmath>
#include <random>

#include "mowst/confidence.hpp"
#include "mowst/error.hpp"
#include "mowst/mixture.hpp"

using namespace mowst;

namespace {

Tensor random_probs(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  Tensor t = Tensor::zeros(n, k);
  for (std::size_t v = 0; v < n; ++v) {
    const auto p = random_simplex_point(k, rng);
    for (std::size_t j = 0; j < k; ++j) t(v, j) = p[j];
  }
  return t;
}

std::vector<std::size_t> random_labels(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, k - 1);
  std::vector<std::size_t> y(n);
  for (auto& v : y) v = d(rng);
  return y;
}

double ce(double p) { return -std::log(std::max(p, kLogFloor)); }

}  // namespace

TEST_CASE("single node by hand") {
  const Tensor p = Tensor::matrix(1, 2, {0.9, 0.1});
  const Tensor q = Tensor::matrix(1, 2, {0.6, 0.4});
  const std::vector<double> c{0.5};
  const std::vector<std::size_t> y{0};
  const double loss = mowst_loss(p, q, c, y);
  const double star = mowst_star_loss(p, q, c, y);
  CHECK(loss == doctest::Approx(0.5 * -std::log(0.9) + 0.5 * -std::log(0.6)).epsilon(1e-15));
  CHECK(loss == doctest::Approx(0.308094).epsilon(1e-6));
  CHECK(star == doctest::Approx(-std::log(0.75)).epsilon(1e-15));
  CHECK(star == doctest::Approx(0.287682).epsilon(1e-6));
  CHECK(star <= loss);
  const auto e = infer_expected(p, q, c);
  CHECK(e.combined(0, 0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(e.predicted[0] == 0);
}

TEST_CASE("confidence at the boundary collapses both losses") {
  std::mt19937_64 rng(1);
  const Tensor p = random_probs(20, 3, rng);
  const Tensor q = random_probs(20, 3, rng);
  const auto y = random_labels(20, 3, rng);
  double weak = 0.0, strong = 0.0;
  for (std::size_t v = 0; v < 20; ++v) {
    weak += ce(p(v, y[v]));
    strong += ce(q(v, y[v]));
  }
  const std::vector<double> zeros(20, 0.0), ones(20, 1.0);
  CHECK(mowst_loss(p, q, zeros, y) == doctest::Approx(strong / 20).epsilon(1e-14));
  CHECK(mowst_loss(p, q, ones, y) == doctest::Approx(weak / 20).epsilon(1e-14));
  CHECK(mowst_star_loss(p, q, zeros, y) == mowst_loss(p, q, zeros, y));
  CHECK(mowst_star_loss(p, q, ones, y) == mowst_loss(p, q, ones, y));
}

TEST_CASE("star loss never exceeds the expected loss") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + t % 7, k = 2 + t % 4;
    const Tensor p = random_probs(n, k, rng);
    const Tensor q = random_probs(n, k, rng);
    std::vector<double> c(n);
    for (double& x : c) x = u(rng);
    const auto y = random_labels(n, k, rng);
    CHECK(mowst_star_loss(p, q, c, y) <= mowst_loss(p, q, c, y) + 1e-12);
  }
}

TEST_CASE("inputs are validated") {
  const Tensor p = Tensor::matrix(1, 2, {0.9, 0.1});
  const Tensor bad = Tensor::matrix(1, 2, {0.9, 0.3});
  const std::vector<std::size_t> y{0};
  CHECK_THROWS_AS(mowst_loss(bad, p, std::vector<double>{0.5}, y), DomainError);
  CHECK_THROWS_AS(mowst_loss(p, p, std::vector<double>{1.5}, y), DomainError);
  CHECK_THROWS_AS(mowst_star_loss(p, p, std::vector<double>{0.5}, std::vector<std::size_t>{2}), DomainError);
}

TEST_CASE("multi-expert recursion") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = 9;
  std::vector<Tensor> probs{random_probs(n, 3, rng), random_probs(n, 3, rng), random_probs(n, 3, rng)};
  const auto y = random_labels(n, 3, rng);
  std::vector<double> c1(n), c2(n);
  for (std::size_t v = 0; v < n; ++v) {
    c1[v] = u(rng);
    c2[v] = u(rng);
  }

  SUBCASE("two experts are bit identical to the mixture loss") {
    const std::vector<std::vector<double>> cs{c1};
    CHECK(multi_expert_loss(std::span(probs.data(), 2), cs, y) == mowst_loss(probs[0], probs[1], c1, y));
  }
  SUBCASE("a silent first expert drops out") {
    const std::vector<std::vector<double>> cs{std::vector<double>(n, 0.0), c2};
    CHECK(multi_expert_loss(probs, cs, y) == doctest::Approx(mowst_loss(probs[1], probs[2], c2, y)).epsilon(1e-14));
  }
  SUBCASE("half and half gives weights 1/2, 1/4, 1/4") {
    const std::vector<std::vector<double>> cs{std::vector<double>(n, 0.5), std::vector<double>(n, 0.5)};
    const auto w = multi_expert_weights(cs, 3, n);
    for (const auto& row : w) CHECK(row == std::vector<double>{0.5, 0.25, 0.25});
    double expanded = 0.0;
    for (std::size_t v = 0; v < n; ++v)
      expanded += 0.5 * ce(probs[0](v, y[v])) + 0.25 * ce(probs[1](v, y[v])) + 0.25 * ce(probs[2](v, y[v]));
    CHECK(multi_expert_loss(probs, cs, y) == doctest::Approx(expanded / n).epsilon(1e-14));
  }
  SUBCASE("weights are normalized") {
    const std::vector<std::vector<double>> cs{c1, c2};
    for (const auto& row : multi_expert_weights(cs, 3, n)) {
      double s = 0.0;
      for (double w : row) {
        CHECK(w >= 0.0);
        s += w;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
  SUBCASE("missing confidence row") {
    const std::vector<std::vector<double>> cs{c1};
    CHECK_THROWS_AS(multi_expert_loss(probs, cs, y), ConfigError);
  }
}

TEST_CASE("stochastic gate") {
  std::mt19937_64 rng(4);
  const std::size_t n = 50;
  const Tensor p = random_probs(n, 3, rng);
  const Tensor q = random_probs(n, 3, rng);
  CHECK(infer_stochastic(p, q, std::vector<double>(n, 1.0), 5).weak_fired == std::vector<bool>(n, true));
  CHECK(infer_stochastic(p, q, std::vector<double>(n, 0.0), 5).weak_fired == std::vector<bool>(n, false));
  const auto a = infer_stochastic(p, q, std::vector<double>(n, 0.4), 9);
  const auto b = infer_stochastic(p, q, std::vector<double>(n, 0.4), 9);
  CHECK(a.predicted == b.predicted);
  CHECK(a.weak_fired == b.weak_fired);
  for (std::size_t v = 0; v < n; ++v) CHECK(a.predicted[v] == argmax((a.weak_fired[v] ? p : q).row(v)));

  // One node at c = 0.8 over 10^4 seeded draws.
  const Tensor p1 = Tensor::matrix(1, 2, {0.9, 0.1});
  const Tensor q1 = Tensor::matrix(1, 2, {0.2, 0.8});
  std::size_t fired = 0;
  for (std::uint64_t s = 0; s < 10000; ++s) fired += infer_stochastic(p1, q1, std::vector<double>{0.8}, s).weak_fired[0];
  CHECK(std::abs(fired / 10000.0 - 0.8) <= 0.02);
}

TEST_CASE("expected inference") {
  const Tensor p = Tensor::matrix(1, 2, {1.0, 0.0});
  const Tensor q = Tensor::matrix(1, 2, {0.0, 1.0});
  const auto tie = infer_expected(p, q, std::vector<double>{0.5});
  CHECK(tie.combined(0, 0) == 0.5);
  CHECK(tie.predicted[0] == 0);
  CHECK(infer_expected(p, q, std::vector<double>{1.0}).combined == p);
  CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
}

TEST_CASE("tape losses match the direct ones and their gradients") {
  std::mt19937_64 rng(5);
  const std::size_t n = 6, k = 3;
  Tensor zp = Tensor::zeros(n, k), zq = Tensor::zeros(n, k);
  for (double& x : zp.values()) x = std::normal_distribution<double>()(rng);
  for (double& x : zq.values()) x = std::normal_distribution<double>()(rng);
  const auto y = random_labels(n, k, rng);
  std::vector<std::size_t> nodes{0, 2, 3, 5};
  const Tensor targets = target_matrix(y, k, nodes);
  const ConfidenceSpec spec{Dispersion::variance, CappedLinearG{3.0}};

  for (bool star : {false, true}) {
    auto expr = [&](Tape& t, std::span<const Var> in) {
      const Var p = t.softmax_rows(in[0]);
      const Var q = t.softmax_rows(in[1]);
      const Var c = record_confidence(t, p, spec, {});
      return star ? record_mowst_star_loss(t, p, q, c, targets) : record_mowst_loss(t, p, q, c, targets);
    };
    const Tensor value = evaluate(expr, std::vector<Tensor>{zp, zq});
    auto softmax = [](const Tensor& z) {
      return evaluate([](Tape& t, std::span<const Var> v) { return t.softmax_rows(v[0]); }, std::vector<Tensor>{z});
    };
    const Tensor p = softmax(zp), q = softmax(zq);
    const auto c = confidences(p, spec);
    // Direct loss over the selected nodes only.
    Tensor ps = Tensor::zeros(nodes.size(), k), qs = Tensor::zeros(nodes.size(), k);
    std::vector<double> cs;
    std::vector<std::size_t> ys;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        ps(i, j) = p(nodes[i], j);
        qs(i, j) = q(nodes[i], j);
      }
      cs.push_back(c[nodes[i]]);
      ys.push_back(y[nodes[i]]);
    }
    const double direct = star ? mowst_star_loss(ps, qs, cs, ys) : mowst_loss(ps, qs, cs, ys);
    CHECK(value.item() == doctest::Approx(direct).epsilon(1e-13));
    CHECK(check_gradient(expr, std::vector<Tensor>{zp, zq}, 1e-5) < 1e-4);
  }
}

TEST_CASE("stochastic draws average to the expected loss") {
  std::mt19937_64 rng(6);
  const std::size_t n = 40;
  const Tensor p = random_probs(n, 3, rng);
  const Tensor q = random_probs(n, 3, rng);
  const auto y = random_labels(n, 3, rng);
  std::vector<double> c(n);
  for (double& x : c) x = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const std::size_t trials = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto draw = infer_stochastic(p, q, c, t);
    double l = 0.0;
    for (std::size_t v = 0; v < n; ++v) l += ce((draw.weak_fired[v] ? p : q)(v, y[v]));
    l /= n;
    sum += l;
    sum_sq += l * l;
  }
  const double mean = sum / trials;
  const double se = std::sqrt((sum_sq / trials - mean * mean) / trials);
  CHECK(std::abs(mean - mowst_loss(p, q, c, y)) <= 3.0 * se);
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mowst/confidence.hpp"
#include "mowst/error.hpp"

using namespace mowst;

namespace {

std::vector<ConfidenceSpec> fixed_specs() {
  std::vector<ConfidenceSpec> specs;
  for (Dispersion d : {Dispersion::variance, Dispersion::neg_entropy}) {
    specs.push_back({d, StepG{0.0}});
    specs.push_back({d, StepG{0.1}});
    specs.push_back({d, TwoLevelG{0.08, 0.1}});
    specs.push_back({d, CappedLinearG{4.0}});
  }
  return specs;
}

// Reference dispersions, written out directly.
double variance_oracle(std::span<const double> p) {
  const double u = 1.0 / static_cast<double>(p.size());
  double s = 0.0;
  for (double x : p) s += (x - u) * (x - u);
  return s;
}

double neg_entropy_oracle(std::span<const double> p) {
  double s = std::log(static_cast<double>(p.size()));
  for (double x : p)
    if (x > 0.0) s += x * std::log(x);
  return s;
}

}  // namespace

TEST_CASE("dispersion values") {
  CHECK(dispersion(std::vector<double>{0.5, 0.5}, Dispersion::variance) == 0.0);
  CHECK(dispersion(std::vector<double>{0.7, 0.3}, Dispersion::variance) == doctest::Approx(0.08).epsilon(1e-15));
  CHECK(dispersion(std::vector<double>{1.0, 0.0}, Dispersion::neg_entropy) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-11));
  CHECK(dispersion(std::vector<double>{0.25, 0.25, 0.25, 0.25}, Dispersion::neg_entropy) == 0.0);
  CHECK(dispersion(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}, Dispersion::neg_entropy) == 0.0);

  std::mt19937_64 rng(1);
  for (int t = 0; t < 500; ++t) {
    const auto p = random_simplex_point(2 + t % 5, rng);
    CHECK(dispersion(p, Dispersion::variance) == doctest::Approx(variance_oracle(p)).epsilon(1e-12));
    CHECK(dispersion(p, Dispersion::neg_entropy) == doctest::Approx(neg_entropy_oracle(p)).epsilon(1e-10));
    CHECK(dispersion(p, Dispersion::variance) > 0.0);
    CHECK(dispersion(p, Dispersion::neg_entropy) > 0.0);
  }
}

TEST_CASE("off-simplex input is rejected") {
  CHECK_THROWS_AS(dispersion(std::vector<double>{0.7, 0.4}, Dispersion::variance), DomainError);
  CHECK_THROWS_AS(dispersion(std::vector<double>{1.2, -0.2}, Dispersion::neg_entropy), DomainError);
  CHECK_NOTHROW(dispersion(std::vector<double>{0.7, 0.3 + 5e-10}, Dispersion::variance));
}

TEST_CASE("fixed shapes") {
  const ConfidenceSpec step{Dispersion::variance, StepG{0.0}};
  CHECK(confidence(std::vector<double>{0.6, 0.4}, step) == 1.0);
  const ConfidenceSpec two{Dispersion::variance, TwoLevelG{0.08, 0.1}};
  CHECK(confidence(std::vector<double>{0.7, 0.3}, two) == 1.0);
  CHECK(confidence(std::vector<double>{0.6, 0.4}, two) == 0.1);
  const ConfidenceSpec lin{Dispersion::variance, CappedLinearG{4.0}};
  CHECK(confidence(std::vector<double>{0.6, 0.4}, lin) == doctest::Approx(4.0 * 0.02).epsilon(1e-14));
  CHECK(confidence(std::vector<double>{1.0, 0.0}, lin) == 1.0);
  for (const auto& spec : fixed_specs()) {
    CHECK(confidence(std::vector<double>{0.5, 0.5}, spec) == 0.0);
    CHECK(confidence(std::vector<double>{0.2, 0.2, 0.2, 0.2, 0.2}, spec) == 0.0);
  }
}

TEST_CASE("fixed shapes are monotone with g(0) = 0") {
  for (const auto& spec : fixed_specs()) {
    CAPTURE(describe(spec));
    CHECK(g_value(spec, 0.0) == 0.0);
    double prev = 0.0;
    const double top = std::log(3.0);
    for (int i = 0; i <= 10000; ++i) {
      const double g = g_value(spec, top * i / 10000.0);
      CHECK(g >= prev);
      CHECK(g <= 1.0);
      prev = g;
    }
  }
}

TEST_CASE("permutation and mirror invariance") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    auto p = random_simplex_point(4, rng);
    auto q = p;
    std::shuffle(q.begin(), q.end(), rng);
    for (Dispersion d : {Dispersion::variance, Dispersion::neg_entropy})
      CHECK(dispersion(p, d) == doctest::Approx(dispersion(q, d)).epsilon(1e-14));
    const double a = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const std::vector<double> x{a, 1.0 - a}, y{1.0 - a, a};
    for (const auto& spec : fixed_specs()) CHECK(confidence(x, spec) == doctest::Approx(confidence(y, spec)));
  }
}

TEST_CASE("quasiconvexity of fixed specs") {
  for (const auto& spec : fixed_specs()) {
    CAPTURE(describe(spec));
    CHECK(quasiconvexity_witness_search(spec, 2, 10000, 3) <= 1e-12);
    CHECK(quasiconvexity_witness_search(spec, 3, 10000, 4) <= 1e-12);
  }
  // Opposite vertices: the midpoint is uniform.
  const std::vector<double> a{1.0, 0.0}, b{0.0, 1.0}, mid{0.5, 0.5};
  CHECK(dispersion(mid, Dispersion::variance) == 0.0);
  CHECK(dispersion(a, Dispersion::variance) == 0.5);
  CHECK(dispersion(b, Dispersion::variance) == 0.5);
}

TEST_CASE("non-monotone learnable g is not quasiconvex") {
  LearnableG g = init_learnable_g(2, 1);
  g.w_var = Tensor::matrix(1, 2, {40.0, 40.0});
  g.w_ent = Tensor::matrix(1, 2, {0.0, 0.0});
  g.b1 = Tensor::matrix(1, 2, {0.0, -1.0});
  g.w2 = Tensor::matrix(2, 1, {12.0, -30.0});
  g.b2 = Tensor::matrix(1, 1, {-3.0});
  const ConfidenceSpec spec{Dispersion::variance, g};
  CHECK(quasiconvexity_witness_search(spec, 2, 2000, 5) > 0.1);
}

TEST_CASE("learnable g is not anchored at zero dispersion") {
  const ConfidenceSpec spec{Dispersion::variance, init_learnable_g(8, 3)};
  const double c = confidence(std::vector<double>{0.5, 0.5}, spec);
  CHECK(c > 0.0);
  CHECK(c < 1.0);
}

TEST_CASE("spec validation and serialization") {
  CHECK_THROWS_AS(validate_spec({Dispersion::variance, StepG{-0.1}}), ConfigError);
  CHECK_THROWS_AS(validate_spec({Dispersion::variance, TwoLevelG{0.1, 1.0}}), ConfigError);
  CHECK_THROWS_AS(validate_spec({Dispersion::variance, TwoLevelG{0.0, 0.5}}), ConfigError);
  CHECK_THROWS_AS(validate_spec({Dispersion::variance, CappedLinearG{0.0}}), ConfigError);
  auto specs = fixed_specs();
  specs.push_back({Dispersion::neg_entropy, init_learnable_g(4, 9)});
  for (const auto& spec : specs) {
    const ConfidenceSpec back = spec_from_json(spec_to_json(spec));
    CHECK(describe(back) == describe(spec));
    const std::vector<double> p{0.65, 0.35};
    CHECK(confidence(p, back) == confidence(p, spec));
  }
  CHECK_THROWS_AS(spec_from_json(R"({"dispersion": "variance", "g": "bogus"})"), ConfigError);
}

TEST_CASE("tape confidence matches the scalar path and its gradient") {
  std::mt19937_64 rng(6);
  Tensor logits = Tensor::zeros(5, 3);
  for (double& x : logits.values()) x = std::normal_distribution<double>()(rng);
  std::vector<ConfidenceSpec> specs{{Dispersion::variance, CappedLinearG{2.0}},
                                    {Dispersion::neg_entropy, CappedLinearG{1.0}},
                                    {Dispersion::variance, init_learnable_g(4, 2)}};
  for (const auto& spec : specs) {
    CAPTURE(describe(spec));
    Tape tape;
    const Var z = tape.leaf(logits);
    const auto gp = bind_g_parameters(tape, spec, false);
    const Var c = record_confidence(tape, tape.softmax_rows(z), spec, gp);
    const Tensor probs = evaluate([](Tape& t, std::span<const Var> v) { return t.softmax_rows(v[0]); },
                                  std::vector<Tensor>{logits});
    const auto ref = confidences(probs, spec);
    for (std::size_t v = 0; v < 5; ++v) CHECK(tape.value(c).values()[v] == doctest::Approx(ref[v]).epsilon(1e-12));
    auto expr = [&](Tape& t, std::span<const Var> in) {
      const auto params = bind_g_parameters(t, spec, false);
      return t.sum(record_confidence(t, t.softmax_rows(in[0]), spec, params));
    };
    CHECK(check_gradient(expr, std::vector<Tensor>{logits}, 1e-5) < 1e-4);
  }
}

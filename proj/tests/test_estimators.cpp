#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "smcgen/estimators.hpp"
#include "smcgen/instances.hpp"

using namespace smcgen;

namespace {

MethodConfig config_for(const Instance& inst, Method m, std::size_t n) {
  MethodConfig c;
  c.method = m;
  c.efficient = inst.efficient;
  c.expensive = inst.expensive;
  c.particles = single_sample_method(m) ? 1 : n;
  c.max_steps = inst.max_tokens + 1;
  return c;
}

std::vector<double> run_values(const Instance& inst, Method m, std::size_t n, std::uint64_t first, std::size_t runs) {
  std::vector<double> out;
  const auto c = config_for(inst, m, n);
  for (std::size_t i = 0; i < runs; ++i) out.push_back(run_quality_value(run(c, *inst.lm, first + i)));
  return out;
}

double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace

TEST_SUITE("estimators") {
  TEST_CASE("targets per method") {
    CHECK(method_target(Method::FullSMC) == QualityTarget::Global);
    CHECK(method_target(Method::GrammarOnlyIS) == QualityTarget::Efficient);
    CHECK(method_target(Method::SampleRerank) == QualityTarget::Rerank);
    CHECK(single_sample_method(Method::LocalDecoding));
    CHECK_FALSE(single_sample_method(Method::FullIS));
  }

  TEST_CASE("local decoding on ab-ba has no gap") {
    const auto inst = make_instance("ab-ba");
    for (double v : run_values(inst, Method::LocalDecoding, 1, 0, 20))
      CHECK(v == doctest::Approx(std::log(2.0 / 27.0)));
  }

  TEST_CASE("trivial potentials give a zero estimate") {
    const auto inst = make_instance("unconstrained");
    for (Method m : {Method::LocalDecoding, Method::BaseLM, Method::FullIS, Method::FullSMC})
      for (double v : run_values(inst, m, 5, 0, 10)) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
  }

  TEST_CASE("full importance sampling on ab-ba is exact") {
    const auto inst = make_instance("ab-ba");
    for (double v : run_values(inst, Method::FullIS, 4, 0, 10)) CHECK(v == doctest::Approx(std::log(2.0 / 27.0)));
  }

  TEST_CASE("one-particle importance sampling equals local decoding on the same seed") {
    const auto inst = make_instance("nested-parens");
    const auto is = run_values(inst, Method::FullIS, 1, 100, 30);
    const auto ld = run_values(inst, Method::LocalDecoding, 1, 100, 30);
    for (std::size_t i = 0; i < is.size(); ++i) {
      if (is[i] == kNegInf) {
        CHECK(ld[i] == kNegInf);
      } else {
        CHECK(is[i] == doctest::Approx(ld[i]).epsilon(1e-9));
      }
    }
    const std::vector<double> one = {-1.25};
    CHECK(k_particle_is_value(one) == -1.25);
  }

  TEST_CASE("rejection correction identities") {
    const std::vector<double> vals = {-1.0, -2.0, -3.0, -4.0};
    const std::vector<char> half = {1, 0, 1, 0};
    const auto r = rejection_quality(vals, half, "m", "t");
    CHECK(r.log_acceptance == doctest::Approx(std::log(0.5)));
    CHECK(r.corrected.point == doctest::Approx(std::log(0.5) - 2.0));
    REQUIRE(r.corrected_samples.size() == 2);
    CHECK(r.corrected_samples[1] == doctest::Approx(std::log(0.5) - 3.0));

    const std::vector<char> all = {1, 1, 1, 1};
    const auto full = rejection_quality(vals, all, "m", "t");
    CHECK(full.corrected.point == full.accepted_estimate.point);
    CHECK(full.corrected.std_error == doctest::Approx(full.accepted_estimate.std_error));

    const std::vector<char> none = {0, 0, 0, 0};
    const auto zero = rejection_quality(vals, none, "m", "t");
    CHECK(zero.corrected.point == kNegInf);
    CHECK_FALSE(zero.diagnostic.empty());
  }

  TEST_CASE("base LM acceptance matches the constraint mass") {
    const auto inst = make_instance("ab-ba");
    const std::size_t runs = 4000;
    const auto rq = rejection_quality(config_for(inst, Method::BaseLM, 1), *inst.lm, 0, runs);
    const double z = 2.0 / 27.0;
    CHECK(std::abs(rq.acceptance_rate - z) < 4.0 * std::sqrt(z * (1 - z) / runs));
    CHECK(rq.accepted_estimate.point == doctest::Approx(0.0));
    CHECK(rq.corrected.point == doctest::Approx(rq.log_acceptance));
  }

  TEST_CASE("welch test agrees with a direct computation") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> n1(0.0, 1.0), n2(0.3, 2.0);
    std::vector<double> a(60), b(45);
    for (auto& x : a) x = n1(gen);
    for (auto& x : b) x = n2(gen);
    const auto rep = compare_methods(a, b);
    const auto ref = oracle::welch_direct(a, b);
    CHECK(rep.t == doctest::Approx(ref.t).epsilon(1e-10));
    CHECK(rep.df == doctest::Approx(ref.df).epsilon(1e-10));
    CHECK(std::abs(rep.p_value - ref.p) < 1e-6);

    const std::vector<double> same(40, 1.5);
    const auto id = compare_methods(same, same);
    CHECK(id.identical);
    CHECK(id.p_value == 1.0);
    CHECK(id.band == "ns");

    std::vector<double> lo(40), hi(40);
    for (std::size_t i = 0; i < 40; ++i) {
      lo[i] = n1(gen);
      hi[i] = 10.0 + n1(gen);
    }
    CHECK(compare_methods(lo, hi).band == "***");
    CHECK_THROWS_AS(compare_methods(std::vector<double>(10, 0.0), lo), Error);
  }

  TEST_CASE("a-star evidence is close to the truth at 200 particles") {
    const auto inst = make_instance("a-star");
    for (Method m : {Method::FullIS, Method::FullSMC}) {
      const auto v = run_values(inst, m, 200, 0, 10);
      std::vector<double> w(v.begin(), v.end());
      CHECK(std::abs(log_mean_exp(w) - std::log(0.5)) < 0.05);
    }
  }

  TEST_CASE("more particles do not lower the estimate") {
    const auto inst = make_instance("nested-parens");
    const double few = mean(run_values(inst, Method::FullIS, 5, 0, 100));
    const double many = mean(run_values(inst, Method::FullIS, 50, 0, 100));
    CHECK(many >= few - 0.01);
  }

  TEST_CASE("the evidence estimate is unbiased") {
    const auto inst = make_instance("a-star");
    const auto v = run_values(inst, Method::FullSMC, 5, 0, 3000);
    double s = 0.0, ss = 0.0;
    for (double x : v) {
      s += std::exp(x);
      ss += std::exp(2 * x);
    }
    const double n = static_cast<double>(v.size());
    const double m = s / n;
    const double se = std::sqrt((ss / n - m * m) / n);
    CHECK(std::abs(m - 0.5) <= 4 * se + 1e-9);
  }
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "casft/diffusion.hpp"

using namespace casft;

TEST_CASE("linear schedule: hand-computed cumulative products") {
  const auto s = make_schedule(2, ScheduleKind::linear, 0.1, 0.2);
  CHECK(s.beta[0] == Catch::Approx(0.1).margin(1e-15));
  CHECK(s.beta[1] == Catch::Approx(0.2).margin(1e-15));
  CHECK(s.alpha_bar[0] == Catch::Approx(0.9).margin(1e-15));
  CHECK(s.alpha_bar[1] == Catch::Approx(0.72).margin(1e-15));  // 0.9 * 0.8
  CHECK(s.abar(0) == 1.0);
}

TEST_CASE("vanishing betas leave the signal uncorrupted") {
  const auto s = make_schedule(50, ScheduleKind::linear, 1e-9, 1e-8);
  CHECK(s.alpha_bar[49] > 1.0 - 1e-6);
}

TEST_CASE("the reference 1000-step schedule ends almost fully corrupted") {
  const auto s = make_schedule(1000, ScheduleKind::linear, 1e-4, 0.02);
  CHECK(s.alpha_bar[999] < 5e-5);
  CHECK(s.alpha_bar[999] > 0.0);
}

TEST_CASE("schedule validation") {
  CHECK_THROWS_AS(make_schedule(1, ScheduleKind::linear, 0.1, 0.2), CasftError);
  CHECK_THROWS_AS(make_schedule(10, ScheduleKind::linear, 0.0, 0.2), CasftError);
  CHECK_THROWS_AS(make_schedule(10, ScheduleKind::linear, 0.3, 0.2), CasftError);
  CHECK_THROWS_AS(make_schedule(10, ScheduleKind::linear, 0.1, 1.0), CasftError);
  CHECK_THROWS_AS(schedule_kind_from_string("triangular"), CasftError);
}

TEST_CASE("alpha_bar is strictly decreasing across the studied step counts", "[property]") {
  for (int K : {500, 1000, 1500}) {
    for (auto kind : {ScheduleKind::linear, ScheduleKind::cosine}) {
      const auto s = make_schedule(K, kind);
      for (int k = 1; k < K; ++k) CHECK(s.alpha_bar[k] < s.alpha_bar[k - 1]);
      for (int k = 0; k < K; ++k) {
        CHECK(s.beta[k] > 0.0);
        CHECK(s.beta[k] < 1.0);
      }
    }
  }
}

TEST_CASE("forward diffusion: noiseless draw scales by sqrt(alpha_bar)") {
  const auto s = make_schedule(2, ScheduleKind::linear, 0.1, 0.2);
  Vec y0(3);
  y0 << 1.0, -2.0, 0.5;
  const Vec yk = forward_diffuse(y0, 2, Vec::Zero(3), s);
  for (int i = 0; i < 3; ++i)
    CHECK(yk[i] == Catch::Approx(std::sqrt(0.72) * y0[i]).margin(1e-12));
  CHECK(std::sqrt(0.72) == Catch::Approx(0.848528137423857).margin(1e-12));

  const auto gentle = make_schedule(50, ScheduleKind::linear, 1e-9, 1e-8);
  Vec eps(3);
  eps << 0.3, 0.3, 0.3;
  const Vec near = forward_diffuse(y0, 50, eps, gentle);
  CHECK((near - y0).cwiseAbs().maxCoeff() < 1e-3);

  CHECK_THROWS_AS(forward_diffuse(y0, 0, eps, s), CasftError);
  CHECK_THROWS_AS(forward_diffuse(y0, 3, eps, s), CasftError);
}

TEST_CASE("forward marginals match Gaussian moments over 1e5 draws", "[statistical]") {
  const auto s = make_schedule(100, ScheduleKind::linear, 1e-3, 0.05);
  const int k = 60;
  const double ab = s.abar(k);
  Vec y0(2);
  y0 << 2.0, -1.0;
  Rng rng(424242);
  const int n = 100000;
  Vec mean = Vec::Zero(2), m2 = Vec::Zero(2);
  for (int i = 0; i < n; ++i) {
    Vec eps(2);
    eps << rng.normal(), rng.normal();
    const Vec yk = forward_diffuse(y0, k, eps, s);
    mean += yk;
    m2 += yk.cwiseProduct(yk);
  }
  mean /= n;
  m2 /= n;
  const Vec var = m2 - mean.cwiseProduct(mean);
  const double se_mean = std::sqrt((1.0 - ab) / n);
  const double se_var = (1.0 - ab) * std::sqrt(2.0 / n);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(mean[i] - std::sqrt(ab) * y0[i]) < 3.0 * se_mean);
    CHECK(std::abs(var[i] - (1.0 - ab)) < 3.0 * se_var);
  }
}

namespace {

Denoiser make_denoiser(nn::ParamStore& ps, int l, int cond, std::uint64_t seed) {
  Rng rng(seed);
  return Denoiser(ps, l, cond, 16, 3, 8, rng);
}

}  // namespace

TEST_CASE("denoiser is deterministic and honours the shape contract") {
  for (int l : {4, 8, 16}) {
    nn::ParamStore ps;
    Denoiser den = make_denoiser(ps, l, 3, 77);
    ad::NoGradGuard ng;
    Mat yk = Mat::Random(1, l);
    Mat cond = Mat::Random(1, 3);
    const Mat a = den(ad::Var::constant(yk), 5, ad::Var::constant(cond)).val();
    const Mat b = den(ad::Var::constant(yk), 5, ad::Var::constant(cond)).val();
    CHECK(a == b);
    CHECK(a.rows() == 1);
    CHECK(a.cols() == l);
  }
}

TEST_CASE("zero-weight denoiser outputs its bias vector") {
  nn::ParamStore ps;
  Denoiser den = make_denoiser(ps, 4, 2, 78);
  for (std::size_t i = 0; i < ps.size(); ++i) ps.var(i).mutable_val().setZero();
  den.layers.back().b.mutable_val() << 1.5, -2.0, 0.25, 3.0;
  ad::NoGradGuard ng;
  const Mat out =
      den(ad::Var::constant(Mat::Random(1, 4)), 9, ad::Var::constant(Mat::Random(1, 2))).val();
  CHECK(out(0, 0) == 1.5);
  CHECK(out(0, 1) == -2.0);
  CHECK(out(0, 2) == 0.25);
  CHECK(out(0, 3) == 3.0);
}

TEST_CASE("training loss vanishes for an oracle denoiser") {
  // with Y0 = 0 the noised input is sqrt(1 - abar) eps, so the oracle can
  // reconstruct eps exactly
  const auto s = make_schedule(40, ScheduleKind::linear, 1e-3, 0.1);
  const Vec y0 = Vec::Zero(5);
  auto oracle = [&s](const ad::Var& yk, int k, const ad::Var&) {
    return ad::smul(yk, 1.0 / std::sqrt(1.0 - s.abar(k)));
  };
  Rng rng(11);
  for (int i = 0; i < 20; ++i) {
    const double loss =
        diffusion_train_loss(oracle, y0, ad::Var::constant(Mat::Zero(1, 1)), s, rng).scalar();
    CHECK(loss < 1e-20);
  }
}

TEST_CASE("zero denoiser gives expected loss equal to the dimension", "[statistical]") {
  const auto s = make_schedule(40, ScheduleKind::linear, 1e-3, 0.1);
  const int l = 6;
  auto zero = [l](const ad::Var&, int, const ad::Var&) {
    return ad::Var::constant(Mat::Zero(1, l));
  };
  Rng rng(13);
  const int n = 2000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double loss =
        diffusion_train_loss(zero, Vec::Zero(l), ad::Var::constant(Mat::Zero(1, 1)), s, rng)
            .scalar();
    CHECK(loss >= 0.0);
    acc += loss;
  }
  const double se = std::sqrt(2.0 * l / static_cast<double>(n));
  CHECK(std::abs(acc / n - l) < 3.0 * se);
}

TEST_CASE("ddim sampling is bit-identical under a fixed seed") {
  const auto s = make_schedule(60, ScheduleKind::linear, 1e-3, 0.05);
  auto den = [](const Vec& yk, int) { return Vec(0.3 * yk); };
  const Vec a = ddim_sample(den, s, 12, 999, 0.0, nullptr, 5);
  const Vec b = ddim_sample(den, s, 12, 999, 0.0, nullptr, 5);
  CHECK(a == b);
  const Vec c = ddim_sample(den, s, 12, 1000, 0.0, nullptr, 5);
  CHECK(a != c);
}

TEST_CASE("oracle denoiser recovers the target at every ddim step") {
  const auto s = make_schedule(200, ScheduleKind::linear, 1e-4, 0.05);
  Vec target(4);
  target << 1.0, -0.5, 2.0, 0.25;
  auto oracle = [&](const Vec& yk, int k) {
    return Vec((yk - std::sqrt(s.abar(k)) * target) / std::sqrt(1.0 - s.abar(k)));
  };
  std::vector<Vec> trace;
  const Vec out = ddim_sample(oracle, s, 25, 7, 0.0, &trace, 4);
  REQUIRE(trace.size() == 25);
  for (const Vec& x0 : trace) CHECK((x0 - target).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((out - target).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("ddim sub-schedule: S = K runs the full trajectory, S > K errors") {
  const auto s = make_schedule(30, ScheduleKind::linear, 1e-3, 0.05);
  int calls = 0;
  auto den = [&calls](const Vec& yk, int) {
    ++calls;
    return Vec(0.1 * yk);
  };
  const Vec full = ddim_sample(den, s, 30, 5, 0.0, nullptr, 3);
  CHECK(calls == 30);
  calls = 0;
  const Vec half = ddim_sample(den, s, 15, 5, 0.0, nullptr, 3);
  CHECK(calls == 15);
  INFO("S=K vs S=K/2 deviation: " << (full - half).norm());
  CHECK(full.allFinite());
  CHECK(half.allFinite());
  CHECK_THROWS_AS(ddim_sample(den, s, 31, 5, 0.0, nullptr, 3), CasftError);
}

TEST_CASE("ddim call counter tracks sampler invocations") {
  const auto s = make_schedule(10, ScheduleKind::linear, 1e-3, 0.05);
  auto den = [](const Vec& yk, int) { return yk; };
  const auto before = ddim_call_counter().load();
  ddim_sample(den, s, 4, 1, 0.0, nullptr, 2);
  ddim_sample(den, s, 4, 2, 0.0, nullptr, 2);
  CHECK(ddim_call_counter().load() - before == 2);
}

TEST_CASE("trend normalization round-trips integer targets", "[property]") {
  Rng rng(3131);
  std::vector<std::vector<long>> targets;
  for (int i = 0; i < 60; ++i) {
    std::vector<long> y(5);
    for (auto& v : y) v = static_cast<long>(rng.below(500));
    targets.push_back(y);
  }
  TrendNormalizer norm;
  norm.fit(targets);
  for (const auto& y : targets) {
    const Vec back = norm.denormalize(norm.normalize(y));
    for (int i = 0; i < 5; ++i) {
      CHECK(back[i] == Catch::Approx(static_cast<double>(y[i])).margin(1e-9));
      CHECK(std::llround(back[i]) == y[i]);
    }
  }
}

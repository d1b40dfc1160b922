#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "aio/degrade.hpp"
#include "aio/errors.hpp"
#include "aio/guidance.hpp"
#include "aio/imgtensor.hpp"
#include "aio/losses.hpp"
#include "test_util.hpp"

using namespace aio;
using namespace aio::loss;

namespace {
ad::Tensor sim(double v) { return ad::Tensor::scalar(v); }
}  // namespace

TEST_CASE("quality gap: uniform 2/3, softmax arithmetic, vanishing limit") {
  CHECK(quality_gap_from_similarities({sim(0.3), sim(0.3), sim(0.3)}).item() ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  const double expected = 1.0 - std::exp(2.0) / (std::exp(2.0) + std::exp(1.0) + 1.0);
  CHECK(expected == doctest::Approx(0.33476).epsilon(1e-4));
  CHECK(quality_gap_from_similarities({sim(2), sim(1), sim(0)}).item() ==
        doctest::Approx(expected).epsilon(1e-12));

  CHECK(quality_gap_from_similarities({sim(60), sim(0), sim(0)}).item() ==
        doctest::Approx(0.0).epsilon(1e-12));

  // strictly decreasing in the excellent similarity
  double prev = 1.0;
  for (double s = -1.0; s <= 1.01; s += 0.25) {
    const double v = quality_gap_from_similarities({sim(s), sim(0.2), sim(-0.1)}).item();
    CHECK(v < prev);
    CHECK(v > 0.0);
    CHECK(v < 1.0);
    prev = v;
  }
}

TEST_CASE("clip-aware loss requires frozen prompts and differentiates") {
  enc::VisionLanguageBackend vl(enc::BackendMode::Toy, 3);
  auto prompts = perceive::init_prompts(perceive::InitMode::PartialRandom, 5, vl);
  auto x = testutil::random_tensor({3, 16, 16}, 7, 0.2);
  CHECK_THROWS_AS((void)clip_aware_loss(x, prompts, vl), ContractError);

  prompts.freeze();
  auto l = clip_aware_loss(x, prompts, vl);
  CHECK(l.item() > 0.0);
  CHECK(l.item() < 1.0);

  const double err =
      testutil::fd_check([&] { return clip_aware_loss(x, prompts, vl); }, {x}, 10);
  CHECK(err < 1e-4);

  // uniform similarities through equal prompt matrices
  auto uniform = perceive::init_prompts(perceive::InitMode::Random, 5, vl);
  uniform.mediocre.values() = uniform.terrible.values();
  uniform.excellent.values() = uniform.terrible.values();
  uniform.freeze();
  CHECK(clip_aware_loss(x, uniform, vl).item() ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("negative weight: hard/very-hard branches and the >= tie") {
  DifficultyState s;
  s.avg_psnr = 28.0;
  CHECK(negative_weight(s, 27.5) == 1.25);
  CHECK(negative_weight(s, 28.0) == 1.25);  // tie goes to the hard branch
  s.avg_psnr = 25.0;
  CHECK(negative_weight(s, 30.0) == 0.75);

  // codomain is exactly {0.75, 1.25}
  for (double nq : {0.0, 10.0, 25.0, 25.0001, 60.0}) {
    const double w = negative_weight(s, nq);
    CHECK((w == 0.75 || w == 1.25));
  }
}

TEST_CASE("tap weight ladder") {
  CHECK(DifficultyState::kTapWeights[0] == doctest::Approx(1.0 / 12));
  CHECK(DifficultyState::kTapWeights[1] == doctest::Approx(1.0 / 6));
  CHECK(DifficultyState::kTapWeights[2] == doctest::Approx(1.0 / 3));
  CHECK(DifficultyState::kTapWeights[3] == 1.0);
}

TEST_CASE("dpl: single-negative substitution case equals 1") {
  // one tap active (xi=1 on tap 4), easy distance 1, one negative with
  // weight 1 and distance 1, numerator 2 -> 2/(1+1) = 1
  std::array<ad::Tensor, 4> num{sim(0), sim(0), sim(0), sim(2)};
  std::array<ad::Tensor, 4> easy{sim(1), sim(1), sim(1), sim(1)};
  std::vector<std::array<ad::Tensor, 4>> negs{{sim(1), sim(1), sim(1), sim(1)}};
  const auto l = dpl_combine(num, easy, negs, {1.0}, 1.0, nullptr);
  CHECK(l.item() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("dpl: restored == clean gives exactly zero") {
  enc::PerceptualBackend perc(enc::BackendMode::Toy, 9);
  const auto clean = degrade::procedural_clean(32, 32, 11);
  const auto degraded = degrade::synth_noise(clean, 25.0, 13);

  NegativeBank bank;
  bank.easy = degraded;
  bank.non_easy.push_back({blend(degraded, clean, 0.5), 25.0, "dial"});

  DifficultyState state;
  const auto l = dpl_loss(to_chw(clean), clean, bank, state, perc);
  CHECK(l.item() == 0.0);
}

TEST_CASE("dpl: epsilon guard on degenerate denominators") {
  std::array<ad::Tensor, 4> num{sim(1), sim(1), sim(1), sim(1)};
  std::array<ad::Tensor, 4> easy{sim(0), sim(0), sim(0), sim(0)};
  DplStats stats;
  const auto l = dpl_combine(num, easy, {}, {}, 2.0, &stats);
  CHECK(stats.eps_guards == 4);
  CHECK(std::isfinite(l.item()));
}

TEST_CASE("dpl gradient w.r.t. the restored image") {
  enc::PerceptualBackend perc(enc::BackendMode::Toy, 15);
  const auto clean = degrade::procedural_clean(16, 16, 17);
  const auto degraded = degrade::synth_noise(clean, 30.0, 19);
  NegativeBank bank;
  bank.easy = degraded;
  bank.non_easy.push_back({blend(degraded, clean, 0.5), 24.0, "dial"});
  DifficultyState state;
  state.avg_psnr = 25.0;

  auto restored = testutil::random_tensor({3, 16, 16}, 21, 0.1);
  for (auto& v : restored.values()) v = 0.5 + v;
  const double err = testutil::fd_check(
      [&] { return dpl_loss(restored, clean, bank, state, perc); }, {restored}, 10);
  CHECK(err < 1e-4);
}

TEST_CASE("contrastive loss: closed forms and monotonicity") {
  auto unit = [](std::uint64_t seed) {
    return ad::l2_normalize(testutil::random_tensor({128}, seed));
  };
  const auto anchor = unit(23);

  // identical anchor/positive (S=1), one orthogonal-ish negative via
  // constructed similarity: use explicit codes for exact values
  // S+=1, S-=0, tau=1 -> log(1 + e^-1)
  std::vector<double> a(128, 0.0), p(128, 0.0), n(128, 0.0);
  a[0] = 1.0;
  p[0] = 1.0;
  n[1] = 1.0;
  const auto ta = ad::Tensor::from({128}, a);
  const auto tp = ad::Tensor::from({128}, p);
  const auto tn = ad::Tensor::from({128}, std::move(n));
  CHECK(contrastive_degradation_loss(ta, tp, {tn}, 1.0).item() ==
        doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));

  // symmetric case: positive and negative equally similar -> ln 2
  CHECK(contrastive_degradation_loss(ta, tp, {tp}, 0.07).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // strictly decreasing as the positive similarity grows
  double prev = 1e9;
  for (double s : {-0.5, 0.0, 0.5, 0.9}) {
    std::vector<double> pv(128, 0.0);
    pv[0] = s;
    pv[1] = std::sqrt(1.0 - s * s);
    const auto tpos = ad::Tensor::from({128}, std::move(pv));
    const double v = contrastive_degradation_loss(ta, tpos, {tn}, 0.5).item();
    CHECK(v < prev);
    prev = v;
  }

  CHECK_THROWS_AS((void)contrastive_degradation_loss(ta, tp, {}, 1.0), ContractError);
  CHECK_THROWS_AS((void)contrastive_degradation_loss(ta, tp, {tn}, 0.0), ParamError);
}

TEST_CASE("contrastive loss gradient through the degradation encoder") {
  nn::ParamStore ps(25);
  guide::DegradationEncoder cfe(ps, "cfe");
  auto a = testutil::random_tensor({3, 32, 32}, 27, 0.2);
  auto b = testutil::random_tensor({3, 32, 32}, 28, 0.2);
  auto c = testutil::random_tensor({3, 32, 32}, 29, 0.2);

  const double err = testutil::fd_check(
      [&] {
        return contrastive_degradation_loss(cfe.encode(a), cfe.encode(b),
                                            {cfe.encode(c)}, 0.07);
      },
      {a, ps.get("cfe.fc2.weight")}, 6);
  CHECK(err < 1e-4);
}

TEST_CASE("rec loss: identity, offset, brute-force oracle, gradient") {
  auto x = testutil::random_tensor({3, 8, 8}, 31, 0.3);
  CHECK(rec_loss(x, x).item() == 0.0);

  auto shifted = ad::add_scalar(x, 0.1);
  CHECK(rec_loss(ad::detach(shifted), x).item() == doctest::Approx(0.1).epsilon(1e-12));

  auto y = testutil::random_tensor({3, 8, 8}, 32, 0.3);
  double oracle = 0;
  for (int i = 0; i < x.numel(); ++i)
    oracle += std::fabs(x.values()[i] - y.values()[i]);
  oracle /= x.numel();
  CHECK(rec_loss(x, y).item() == doctest::Approx(oracle).epsilon(1e-12));

  const double err = testutil::fd_check([&] { return rec_loss(x, y); }, {x}, 10);
  CHECK(err < 1e-4);
}

TEST_CASE("total loss: weighted combination") {
  LossWeights w;  // defaults 0.1 / 0.05 / 0.1
  const auto t = total_loss(sim(1.0), sim(0.5), sim(0.6), sim(0.2), w);
  CHECK(t.item() == doctest::Approx(1.10).epsilon(1e-12));

  CHECK(total_loss(sim(0), sim(0), sim(0), sim(0), w).item() == 0.0);

  // linear in each component
  const double base = total_loss(sim(1), sim(1), sim(1), sim(1), w).item();
  CHECK(total_loss(sim(2), sim(1), sim(1), sim(1), w).item() - base ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(total_loss(sim(1), sim(2), sim(1), sim(1), w).item() - base ==
        doctest::Approx(0.1).epsilon(1e-12));
  CHECK(total_loss(sim(1), sim(1), sim(2), sim(1), w).item() - base ==
        doctest::Approx(0.05).epsilon(1e-12));
  CHECK(total_loss(sim(1), sim(1), sim(1), sim(2), w).item() - base ==
        doctest::Approx(0.1).epsilon(1e-12));
}

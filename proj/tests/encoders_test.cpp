#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "aio/checkpoint.hpp"
#include "aio/degrade.hpp"
#include "aio/encoders.hpp"
#include "aio/errors.hpp"
#include "aio/imgtensor.hpp"
#include "test_util.hpp"

using namespace aio;
using enc::BackendMode;

TEST_CASE("vision-language backend: shapes, determinism, frozen") {
  enc::VisionLanguageBackend vl(BackendMode::Toy, 3);
  const auto img = degrade::procedural_clean(48, 40, 5);

  const auto e1 = vl.encode_image(img);
  REQUIRE(e1.shape() == ad::Shape{512});

  enc::VisionLanguageBackend vl2(BackendMode::Toy, 3);
  const auto e2 = vl2.encode_image(img);
  CHECK(e1.values() == e2.values());  // same seed, identical embeddings

  enc::VisionLanguageBackend vl3(BackendMode::Toy, 4);
  CHECK(vl3.encode_image(img).values() != e1.values());

  for (const auto& [name, p] : vl.params().entries())
    CHECK_FALSE(p.requires_grad());

  const auto tokens = testutil::random_tensor({16, 512}, 9, 0.02);
  const auto t = vl.encode_text_tokens(tokens);
  REQUIRE(t.shape() == ad::Shape{512});

  const auto va = vl.vocab_embedding("excellent");
  const auto vb = vl.vocab_embedding("excellent");
  CHECK(va.values() == vb.values());
  CHECK(va.values() != vl.vocab_embedding("terrible").values());
}

TEST_CASE("encode_image is differentiable w.r.t. input pixels") {
  enc::VisionLanguageBackend vl(BackendMode::Toy, 11);
  auto x = testutil::random_tensor({3, 24, 24}, 13, 0.3);
  for (auto& v : x.values()) v = 0.5 + 0.3 * std::tanh(v);
  const auto coeff = testutil::random_tensor({512}, 14);

  const double err = testutil::fd_check(
      [&] { return ad::dot(vl.encode_image(x), coeff); }, {x}, 12);
  CHECK(err < 1e-4);
}

TEST_CASE("no gradient reaches frozen backend parameters") {
  enc::VisionLanguageBackend vl(BackendMode::Toy, 17);
  auto x = testutil::random_tensor({3, 16, 16}, 18, 0.2);
  x.set_requires_grad(true);
  auto loss = ad::mean_all(ad::square(vl.encode_image(x)));
  ad::backward(loss);
  for (const auto& [name, p] : vl.params().entries()) {
    double norm = 0;
    for (double g : const_cast<ad::Tensor&>(p).grad()) norm += g * g;
    CHECK(norm == 0.0);
  }
}

TEST_CASE("semantic backend: four 768-d levels, deterministic, distinct taps") {
  enc::SemanticBackend sem(BackendMode::Toy, 21);
  const auto img = degrade::procedural_clean(64, 64, 23);
  const auto f = sem.encode(img);
  for (const auto& level : f.levels) REQUIRE(level.shape() == ad::Shape{768});

  const auto f2 = sem.encode(img);
  for (int i = 0; i < 4; ++i) CHECK(f.levels[i].values() == f2.levels[i].values());

  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      CHECK(f.levels[i].values() != f.levels[j].values());
}

TEST_CASE("perceptual backend: tap count and non-increasing spatial size") {
  enc::PerceptualBackend perc(BackendMode::Toy, 31);
  const auto img = degrade::procedural_clean(64, 48, 33);
  const auto taps = perc.encode(to_chw(img));
  REQUIRE(taps.size() == 4);
  for (size_t i = 1; i < taps.size(); ++i) {
    CHECK(taps[i].dim(1) <= taps[i - 1].dim(1));
    CHECK(taps[i].dim(2) <= taps[i - 1].dim(2));
  }

  // identical inputs give zero feature distance at every tap
  const auto taps2 = perc.encode(to_chw(img));
  for (int i = 0; i < 4; ++i) {
    const auto d = ad::mean_all(ad::abs_(ad::sub(taps[i], taps2[i])));
    CHECK(d.item() == 0.0);
  }

  auto tiny = ad::Tensor::zeros({3, 4, 4});
  CHECK_THROWS_AS((void)perc.encode(tiny), ContractError);
}

TEST_CASE("pretrained mode: missing weights fails, exported weights load") {
  CHECK_THROWS_AS(enc::VisionLanguageBackend(BackendMode::Pretrained, 3),
                  DependencyError);
  CHECK_THROWS_AS(enc::VisionLanguageBackend(BackendMode::Pretrained, 3,
                                             std::string("missing_file.ckpt")),
                  DependencyError);

  // export a toy backend's weights, reload them in pretrained mode
  enc::SemanticBackend toy(BackendMode::Toy, 41);
  ckpt::Archive a;
  a.meta["kind"] = "backend";
  for (const auto& [name, t] : toy.params().entries()) a.put(name, t);
  const std::string path = "encoders_test_weights.ckpt";
  ckpt::save_archive(a, path);

  enc::SemanticBackend loaded(BackendMode::Pretrained, 999, path);
  const auto img = degrade::procedural_clean(32, 32, 43);
  const auto fa = toy.encode(img);
  const auto fb = loaded.encode(img);
  for (int i = 0; i < 4; ++i) CHECK(fa.levels[i].values() == fb.levels[i].values());
  std::remove(path.c_str());
}

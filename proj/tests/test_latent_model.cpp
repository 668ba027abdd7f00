#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "latentslam/latent_model.hpp"
#include "latentslam/rng.hpp"
#include "test_support.hpp"

using namespace latentslam;
using namespace testsupport;

namespace {

ModelParams zero_params(const ModelArch& arch) {
  ModelParams p = ModelParams::init(arch, 0);
  std::fill(p.values.begin(), p.values.end(), 0.0);
  return p;
}

void set_segment(ModelParams& p, const std::string& name, double value) {
  const auto& seg = p.layout.find(name);
  for (size_t i = 0; i < seg.size; ++i) p.values[seg.offset + i] = value;
}

}  // namespace

TEST_CASE("kl_gaussian closed-form anchors") {
  const GaussianLatent q1({1.0}, {1.0});
  const GaussianLatent p1({0.0}, {1.0});
  CHECK(kl_gaussian(q1, q1) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(kl_gaussian(q1, p1) == doctest::Approx(0.5).epsilon(1e-12));

  const GaussianLatent q2({0.0}, {2.0});
  const GaussianLatent p2({0.0}, {1.0});
  CHECK(kl_gaussian(q2, p2) == doctest::Approx(0.5 * (4.0 - 1.0 - std::log(4.0))).epsilon(1e-12));

  CHECK_THROWS_AS(kl_gaussian(GaussianLatent({0.0}, {1.0}), GaussianLatent({0.0, 0.0}, {1.0, 1.0})),
                  std::invalid_argument);
}

TEST_CASE("kl_gaussian non-negativity over random pairs") {
  std::mt19937_64 gen(11);
  for (int i = 0; i < 20000; ++i) {
    const int d = 1 + static_cast<int>(gen() % 8);
    std::vector<double> mq(d), sq(d), mp(d), sp(d);
    for (int k = 0; k < d; ++k) {
      mq[k] = uniform_range(gen, -5, 5);
      mp[k] = uniform_range(gen, -5, 5);
      sq[k] = uniform_range(gen, 0.01, 4.0);
      sp[k] = uniform_range(gen, 0.01, 4.0);
    }
    const double kl = kl_gaussian(GaussianLatent(mq, sq), GaussianLatent(mp, sp));
    CHECK(kl >= -1e-12);
  }
}

TEST_CASE("kl is zero iff equal") {
  const GaussianLatent q({0.3, -0.7}, {0.5, 1.5});
  CHECK(kl_gaussian(q, q) <= 1e-9);
  const GaussianLatent p({0.3, -0.699}, {0.5, 1.5});
  CHECK(kl_gaussian(q, p) > 1e-9);
}

TEST_CASE("reconstruction_loss formula") {
  const Observation o1(ImageShape{1, 1, 1}, {1.0});
  const Observation o0(ImageShape{1, 1, 1}, {0.0});
  CHECK(reconstruction_loss(o1, o1) == 0.0);
  CHECK(reconstruction_loss(o1, o0) == doctest::Approx(0.5).epsilon(1e-15));

  // brute-force elementwise oracle on a random pair
  const Observation a = random_obs(ImageShape{5, 4, 3}, 100);
  const Observation b = random_obs(ImageShape{5, 4, 3}, 101);
  double expect = 0.0;
  for (size_t i = 0; i < a.pixels.size(); ++i) {
    expect += 0.5 * (a.pixels[i] - b.pixels[i]) * (a.pixels[i] - b.pixels[i]);
  }
  CHECK(reconstruction_loss(a, b) == doctest::Approx(expect).epsilon(1e-12));
  CHECK_THROWS_AS(reconstruction_loss(a, random_obs(ImageShape{4, 5, 3}, 2)), std::invalid_argument);
}

TEST_CASE("prior_predict zero weights with unit-stddev bias") {
  const ModelArch arch = tiny_arch();
  ModelParams p = zero_params(arch);
  set_segment(p, "prior.prestd.b", unit_stddev_bias(arch.std_floor));

  const auto g = prior_predict(LatentSample::zeros(arch.latent_dim), Action({0.0}), p);
  for (int i = 0; i < arch.latent_dim; ++i) {
    CHECK(g.mean[i] == 0.0);
    CHECK(g.stddev[i] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("prior_predict determinism and dimension checks") {
  const ModelArch arch = tiny_arch();
  const ModelParams p = ModelParams::init(arch, 3);
  const LatentSample s(random_latent(arch.latent_dim, 5));
  const Action a = random_action(arch.action_dim, 6);
  const auto g1 = prior_predict(s, a, p);
  const auto g2 = prior_predict(s, a, p);
  CHECK(g1.mean == g2.mean);      // bitwise
  CHECK(g1.stddev == g2.stddev);
  CHECK_THROWS_AS(prior_predict(LatentSample::zeros(arch.latent_dim + 1), a, p), std::invalid_argument);
  CHECK_THROWS_AS(prior_predict(s, Action({0.0, 0.0}), p), std::invalid_argument);
}

TEST_CASE("prior matches reference evaluator") {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    const ModelArch arch = small_arch();
    const ModelParams p = ModelParams::init(arch, seed);
    const auto s = random_latent(arch.latent_dim, seed + 10);
    const Action a = random_action(arch.action_dim, seed + 20);
    const auto got = prior_predict(LatentSample(s), a, p);
    const auto want = ref::prior(p, s, a.controls);
    for (int i = 0; i < arch.latent_dim; ++i) {
      CHECK(got.mean[i] == doctest::Approx(want.mean[i]).epsilon(1e-12));
      CHECK(got.stddev[i] == doctest::Approx(want.stddev[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("posterior matches reference evaluator") {
  for (uint64_t seed : {4ull, 5ull, 6ull}) {
    const ModelArch arch = small_arch();
    const ModelParams p = ModelParams::init(arch, seed);
    const auto s = random_latent(arch.latent_dim, seed + 10);
    const Action a = random_action(arch.action_dim, seed + 20);
    const Observation o = random_obs(arch.obs, seed + 30);
    const auto got = posterior_infer(LatentSample(s), a, o, p);
    const auto want = ref::posterior(p, s, a.controls, o);
    for (int i = 0; i < arch.latent_dim; ++i) {
      CHECK(got.mean[i] == doctest::Approx(want.mean[i]).epsilon(1e-12));
      CHECK(got.stddev[i] == doctest::Approx(want.stddev[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("posterior numerical continuity under pixel perturbation") {
  const ModelArch arch = small_arch();
  const ModelParams p = ModelParams::init(arch, 9);
  const auto s = random_latent(arch.latent_dim, 10);
  const Action a = random_action(arch.action_dim, 11);
  Observation o = random_obs(arch.obs, 12);
  const auto base = posterior_infer(LatentSample(s), a, o, p);
  for (double eps : {1e-6, 1e-4, 1e-2}) {
    Observation o2 = o;
    o2.pixels[0] = std::clamp(o2.pixels[0] + eps, 0.0, 1.0);
    const auto g = posterior_infer(LatentSample(s), a, o2, p);
    double diff = 0.0;
    for (int i = 0; i < arch.latent_dim; ++i) diff = std::max(diff, std::abs(g.mean[i] - base.mean[i]));
    CHECK(std::isfinite(diff));
    CHECK(diff < 100.0 * eps + 1e-12);  // bounded response to a bounded perturbation
  }
}

TEST_CASE("likelihood_reconstruct shape and zero-weight sigmoid") {
  const ModelArch arch = small_arch();
  ModelParams p = zero_params(arch);
  const Observation img = likelihood_reconstruct(LatentSample::zeros(arch.latent_dim), p);
  CHECK(img.shape == arch.obs);
  for (double v : img.pixels) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));

  const ModelParams pr = ModelParams::init(arch, 77);
  const auto sample = random_latent(arch.latent_dim, 78);
  const Observation got = likelihood_reconstruct(LatentSample(sample), pr);
  const auto want_chw = ref::decode(pr, sample);
  // compare via the CHW-ordered reference
  int i = 0;
  for (int c = 0; c < arch.obs.channels; ++c) {
    for (int y = 0; y < arch.obs.height; ++y) {
      for (int x = 0; x < arch.obs.width; ++x) {
        CHECK(got.at(y, x, c) == doctest::Approx(want_chw[i++]).epsilon(1e-12));
      }
    }
  }
  CHECK_THROWS_AS(likelihood_reconstruct(LatentSample::zeros(arch.latent_dim + 2), pr),
                  std::invalid_argument);
}

TEST_CASE("free_energy vanishes when posterior==prior and reconstruction is exact") {
  // zero weights make posterior and prior identical at every step; a constant
  // 0.5 observation matches the zero-weight decoder exactly
  const ModelArch arch = tiny_arch();
  const ModelParams p = zero_params(arch);
  FrameSequence seq(3);
  for (int t = 0; t < 3; ++t) {
    seq[t].t = t;
    seq[t].observation =
        Observation(arch.obs, std::vector<double>(static_cast<size_t>(arch.obs.pixel_count()), 0.5));
    seq[t].action = Action({0.25});
  }
  CHECK(free_energy({seq}, p, 13) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("free_energy terms compose additively") {
  // one step with KL term 0.5 and reconstruction term 2.0 sums to 2.5
  const double kl = kl_gaussian(GaussianLatent({1.0}, {1.0}), GaussianLatent({0.0}, {1.0}));
  const Observation oa(ImageShape{2, 2, 1}, {1.0, 1.0, 1.0, 1.0});
  const Observation ob(ImageShape{2, 2, 1}, {0.0, 0.0, 0.0, 0.0});
  CHECK(kl + reconstruction_loss(oa, ob) == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("free_energy matches the sequence-unrolled reference") {
  const ModelArch arch = tiny_arch();
  for (uint64_t seed : {21ull, 22ull}) {
    const ModelParams p = ModelParams::init(arch, seed);
    std::vector<FrameSequence> batch{random_sequence(arch, 3, seed + 1), random_sequence(arch, 3, seed + 2)};
    const double got = free_energy(batch, p, 99);
    const double want = ref::free_energy_unrolled(batch, p, 99);
    CHECK(got == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("free_energy is non-negative and rejects empty input") {
  const ModelArch arch = tiny_arch();
  const ModelParams p = ModelParams::init(arch, 31);
  std::vector<FrameSequence> batch{random_sequence(arch, 4, 77)};
  CHECK(free_energy(batch, p, 5) >= 0.0);
  CHECK_THROWS_AS(free_energy({}, p, 5), std::invalid_argument);
  CHECK_THROWS_AS(free_energy({FrameSequence{}}, p, 5), std::invalid_argument);
}

TEST_CASE("free_energy mean is invariant under batch duplication") {
  const ModelArch arch = tiny_arch();
  const ModelParams p = ModelParams::init(arch, 41);
  std::vector<FrameSequence> batch{random_sequence(arch, 3, 1), random_sequence(arch, 3, 2)};
  std::vector<FrameSequence> doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());
  CHECK(free_energy(batch, p, 7) == doctest::Approx(free_energy(doubled, p, 7)).epsilon(1e-12));

  FreeEnergyBreakdown l1, l2;
  const auto g1 = grad_free_energy(batch, p, 7, 1.0, &l1);
  const auto g2 = grad_free_energy(doubled, p, 7, 1.0, &l2);
  double max_rel = 0.0;
  for (size_t i = 0; i < g1.size(); ++i) {
    max_rel = std::max(max_rel, std::abs(g1[i] - g2[i]) / (1.0 + std::abs(g1[i])));
  }
  CHECK(max_rel < 1e-12);
}

TEST_CASE("encode equals the posterior mean and is pure") {
  const ModelArch arch = small_arch();
  const ModelParams p = ModelParams::init(arch, 55);
  const LatentSample prev(random_latent(arch.latent_dim, 56));
  const Action a = random_action(arch.action_dim, 57);
  const Observation o = random_obs(arch.obs, 58);
  const LatentSample s1 = encode(prev, a, o, p);
  const LatentSample s2 = encode(prev, a, o, p);
  CHECK(s1.values == s2.values);
  CHECK(s1.values == posterior_infer(prev, a, o, p).mean);
}

TEST_CASE("stddev outputs are strictly positive for random inputs") {
  const ModelArch arch = small_arch();
  std::mt19937_64 gen(60);
  for (int i = 0; i < 20; ++i) {
    const ModelParams p = ModelParams::init(arch, gen());
    const auto g = posterior_infer(LatentSample(random_latent(arch.latent_dim, gen())),
                                   random_action(arch.action_dim, gen()), random_obs(arch.obs, gen()), p);
    for (double s : g.stddev) CHECK(s >= arch.std_floor);
    const auto gp = prior_predict(LatentSample(random_latent(arch.latent_dim, gen())),
                                  random_action(arch.action_dim, gen()), p);
    for (double s : gp.stddev) CHECK(s >= arch.std_floor);
  }
}

TEST_CASE("checkpoint round trip") {
  const ModelArch arch = small_arch();
  const ModelParams p = ModelParams::init(arch, 71);
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.seed = 9;
  const auto path = std::filesystem::temp_directory_path() / "latentslam_test_ckpt.bin";
  save_checkpoint(path, p, cfg, 1.25);
  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.params.arch == arch);
  CHECK(ck.params.values == p.values);  // bitwise via CBOR doubles
  CHECK(ck.config.epochs == 12);
  CHECK(ck.config.seed == 9);
  CHECK(ck.final_loss == 1.25);
  std::filesystem::remove(path);

  CHECK_THROWS(load_checkpoint(std::filesystem::temp_directory_path() / "does_not_exist.bin"));
}

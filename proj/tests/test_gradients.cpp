#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "latentslam/latent_model.hpp"
#include "latentslam/rng.hpp"
#include "test_support.hpp"

using namespace latentslam;
using namespace testsupport;

namespace {

struct FdReport {
  double max_rel = 0.0;
  size_t worst_index = 0;
};

FdReport check_against_fd(const std::vector<FrameSequence>& batch, const ModelParams& params,
                          uint64_t seed) {
  const auto grad = grad_free_energy(batch, params, seed);
  const double h = 1e-4;
  FdReport rep;
  for (size_t i = 0; i < params.values.size(); ++i) {
    ModelParams plus = params;
    plus.values[i] += h;
    ModelParams minus = params;
    minus.values[i] -= h;
    const double fd = (free_energy(batch, plus, seed) - free_energy(batch, minus, seed)) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
    const double rel = std::abs(grad[i] - fd) / denom;
    if (rel > rep.max_rel) {
      rep.max_rel = rel;
      rep.worst_index = i;
    }
  }
  return rep;
}

}  // namespace

TEST_CASE("tiny model stays under 500 parameters") {
  const ModelArch arch = tiny_arch();
  const ModelParams p = ModelParams::init(arch, 0);
  CHECK(p.layout.total <= 500);
}

TEST_CASE("analytic gradient matches central finite differences on 10 seeds") {
  const ModelArch arch = tiny_arch();
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const ModelParams p = ModelParams::init(arch, mix_seed(seed, 1));
    std::vector<FrameSequence> batch{random_sequence(arch, 3, mix_seed(seed, 2))};
    const FdReport rep = check_against_fd(batch, p, mix_seed(seed, 3));
    INFO("seed ", seed, " worst index ", rep.worst_index);
    CHECK(rep.max_rel < 1e-3);
  }
}

TEST_CASE("gradient of weights on dead inputs is exactly zero") {
  // all-zero actions never excite the action columns of the first layers
  const ModelArch arch = tiny_arch();
  const ModelParams p = ModelParams::init(arch, 5);
  FrameSequence seq = random_sequence(arch, 3, 6);
  for (auto& f : seq) f.action = Action(std::vector<double>(arch.action_dim, 0.0));
  const auto grad = grad_free_energy({seq}, p, 9);

  const auto& enc_fc0 = p.layout.find("enc.fc0.w");
  const int enc_in = arch.flat_dim() + arch.latent_dim + arch.action_dim;
  for (int row = 0; row < arch.hidden; ++row) {
    for (int col = enc_in - arch.action_dim; col < enc_in; ++col) {
      CHECK(grad[enc_fc0.offset + static_cast<size_t>(row) * enc_in + col] == 0.0);
    }
  }
  const auto& prior_fc0 = p.layout.find("prior.fc0.w");
  const int prior_in = arch.latent_dim + arch.action_dim;
  for (int row = 0; row < arch.hidden; ++row) {
    for (int col = prior_in - arch.action_dim; col < prior_in; ++col) {
      CHECK(grad[prior_fc0.offset + static_cast<size_t>(row) * prior_in + col] == 0.0);
    }
  }
}

TEST_CASE("gradient is deterministic and thread-count independent") {
  const ModelArch arch = tiny_arch();
  const ModelParams p = ModelParams::init(arch, 8);
  std::vector<FrameSequence> batch;
  for (int i = 0; i < 5; ++i) batch.push_back(random_sequence(arch, 3, 100 + i));
  const auto g1 = grad_free_energy(batch, p, 3, 1.0, nullptr, 1);
  const auto g2 = grad_free_energy(batch, p, 3, 1.0, nullptr, 4);
  CHECK(g1 == g2);  // bitwise: fixed summation order
}

TEST_CASE("training reduces the loss on a toy dataset and is reproducible") {
  ModelArch arch;
  arch.latent_dim = 4;
  arch.action_dim = 2;
  arch.obs = ImageShape{16, 16, 1};
  arch.conv_channels = {4, 8};
  arch.hidden = 16;

  // toy dataset: 16 sequences of length 8
  std::vector<FrameSequence> dataset;
  for (int i = 0; i < 16; ++i) dataset.push_back(random_sequence(arch, 8, 500 + i));

  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 8;
  cfg.sequence_length = 8;
  cfg.seed = 4;
  cfg.threads = 2;

  const TrainResult r1 = train(dataset, arch, cfg);
  REQUIRE(r1.log.size() == 50);
  CHECK(r1.log.back().free_energy < r1.log.front().free_energy);

  const TrainResult r2 = train(dataset, arch, cfg);
  for (size_t i = 0; i < r1.log.size(); ++i) {
    CHECK(r1.log[i].free_energy == r2.log[i].free_energy);  // bitwise reproducible
  }
  CHECK(r1.params.values == r2.params.values);
}

TEST_CASE("zero-epoch training returns the initialization") {
  const ModelArch arch = tiny_arch();
  std::vector<FrameSequence> dataset{random_sequence(arch, 4, 1)};
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 2;
  const ModelParams init = ModelParams::init(arch, 123);
  const TrainResult r = train(dataset, arch, cfg, &init, 0);
  CHECK(r.params.values == init.values);
  CHECK(r.log.empty());
}

TEST_CASE("resume produces an identical continuation") {
  const ModelArch arch = tiny_arch();
  std::vector<FrameSequence> dataset;
  for (int i = 0; i < 4; ++i) dataset.push_back(random_sequence(arch, 4, 40 + i));
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.sequence_length = 4;
  cfg.seed = 5;
  const TrainResult base = train(dataset, arch, cfg);
  const TrainResult c1 = train(dataset, arch, cfg, &base.params, cfg.epochs);
  const TrainResult c2 = train(dataset, arch, cfg, &base.params, cfg.epochs);
  CHECK(c1.params.values == c2.params.values);
  REQUIRE(c1.log.size() == 3);
  CHECK(c1.log.front().epoch == 3);  // absolute epoch indices continue
  for (size_t i = 0; i < c1.log.size(); ++i) CHECK(c1.log[i].free_energy == c2.log[i].free_energy);
}

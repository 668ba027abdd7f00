#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "latentslam/frame.hpp"
#include "latentslam/nn.hpp"

namespace latentslam {

/// Diagonal-Gaussian belief over the latent state.
struct GaussianLatent {
  std::vector<double> mean;
  std::vector<double> stddev;

  GaussianLatent() = default;
  GaussianLatent(std::vector<double> m, std::vector<double> s);
  int dim() const { return static_cast<int>(mean.size()); }
};

struct LatentSample {
  std::vector<double> values;

  LatentSample() = default;
  explicit LatentSample(std::vector<double> v);
  static LatentSample zeros(int dim) { return LatentSample(std::vector<double>(dim, 0.0)); }
  int dim() const { return static_cast<int>(values.size()); }
};

/// All network weights as one flat vector plus the layout describing it.
struct ModelParams {
  ModelArch arch;
  nn::ParamLayout layout;
  std::vector<double> values;

  static ModelParams init(const ModelArch& arch, uint64_t seed);
};

struct TrainConfig {
  int epochs = 500;
  double learning_rate = 1e-4;
  int batch_size = 16;
  int sequence_length = 8;
  uint64_t seed = 0;
  double kl_weight = 1.0;
  int threads = 0;  // 0 = hardware concurrency

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double free_energy = 0.0;
  double kl_term = 0.0;
  double recon_term = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
};

// --- generative model blocks -------------------------------------------------

GaussianLatent prior_predict(const LatentSample& prev, const Action& action, const ModelParams& params);
GaussianLatent posterior_infer(const LatentSample& prev, const Action& action, const Observation& obs,
                               const ModelParams& params);
Observation likelihood_reconstruct(const LatentSample& sample, const ModelParams& params);

/// Inference-time encoding: the posterior mean, no sampling.
LatentSample encode(const LatentSample& prev, const Action& action, const Observation& obs,
                    const ModelParams& params);

// --- objective ----------------------------------------------------------------

/// Closed-form KL between diagonal Gaussians, >= 0.
double kl_gaussian(const GaussianLatent& q, const GaussianLatent& p);

/// Half sum of squared pixel errors (unit-variance Gaussian likelihood,
/// additive constants dropped).
double reconstruction_loss(const Observation& obs, const Observation& recon);

struct FreeEnergyBreakdown {
  double total = 0.0;
  double kl = 0.0;
  double recon = 0.0;
};

/// The noise realization used by free_energy: eps[t][d] drawn t-major from a
/// Box-Muller stream over mt19937_64(mix_seed(seed, 0x5e9ce0ff)). The stream
/// depends only on (seed, t, d) and is shared by every sequence in a batch,
/// so a sequence's loss contribution does not depend on its batch position.
std::vector<std::vector<double>> reparameterization_noise(uint64_t seed, int steps, int latent_dim);

/// Mean over the batch of the per-sequence summed KL + reconstruction terms.
FreeEnergyBreakdown free_energy_terms(const std::vector<FrameSequence>& batch, const ModelParams& params,
                                      uint64_t seed, double kl_weight = 1.0);
double free_energy(const std::vector<FrameSequence>& batch, const ModelParams& params, uint64_t seed);

/// Exact reverse-mode gradient of free_energy under the same noise realization.
std::vector<double> grad_free_energy(const std::vector<FrameSequence>& batch, const ModelParams& params,
                                     uint64_t seed, double kl_weight = 1.0,
                                     FreeEnergyBreakdown* loss_out = nullptr, int threads = 1);

/// Adam training loop. Deterministic given config.seed (fixed gradient
/// summation order regardless of thread count). Throws TrainDivergence when
/// the loss goes non-finite.
TrainResult train(const std::vector<FrameSequence>& dataset, const ModelArch& arch, const TrainConfig& config,
                  const ModelParams* resume_from = nullptr, int start_epoch = 0,
                  void (*progress)(const EpochLog&) = nullptr);

class TrainDivergence : public std::runtime_error {
 public:
  TrainDivergence(int epoch, const std::string& what) : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

// --- checkpointing --------------------------------------------------------------

/// CBOR container: format tag, version, architecture, training config echo,
/// final loss, and the flat weight vector in layout order.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const TrainConfig& config,
                     double final_loss);

struct Checkpoint {
  ModelParams params;
  TrainConfig config;
  double final_loss = 0.0;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Training log CSV: epoch, free_energy, kl_term, recon_term.
void save_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

}  // namespace latentslam

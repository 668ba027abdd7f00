#include "latentslam/latent_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <thread>

#include "json.hpp"
#include "latentslam/rng.hpp"

namespace latentslam {

using nn::Mat;
using nn::Vec;

GaussianLatent::GaussianLatent(std::vector<double> m, std::vector<double> s)
    : mean(std::move(m)), stddev(std::move(s)) {
  if (mean.size() != stddev.size()) throw std::invalid_argument("GaussianLatent: dimension mismatch");
  for (double v : stddev) {
    if (!(v > 0.0)) throw std::invalid_argument("GaussianLatent: stddev must be strictly positive");
  }
}

LatentSample::LatentSample(std::vector<double> v) : values(std::move(v)) {
  for (double x : values) {
    if (!std::isfinite(x)) throw std::invalid_argument("LatentSample: non-finite entry");
  }
}

ModelParams ModelParams::init(const ModelArch& arch, uint64_t seed) {
  ModelParams p;
  p.arch = arch;
  p.layout = nn::make_layout(arch);
  p.values = nn::init_params(arch, p.layout, seed);
  return p;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (sequence_length < 1) throw std::invalid_argument("TrainConfig: sequence_length must be >= 1");
  if (kl_weight < 0.0) throw std::invalid_argument("TrainConfig: kl_weight must be >= 0");
  if (threads < 0) throw std::invalid_argument("TrainConfig: threads must be >= 0");
}

namespace {

Vec to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> from_vec(const Vec& v) { return {v.data(), v.data() + v.size()}; }

void check_sample(const LatentSample& s, const ModelArch& arch) {
  if (s.dim() != arch.latent_dim) throw std::invalid_argument("latent sample dimension mismatch");
}

void check_action(const Action& a, const ModelArch& arch) {
  if (a.dim() != arch.action_dim) throw std::invalid_argument("action dimension mismatch");
}

void check_obs(const Observation& o, const ModelArch& arch) {
  if (!(o.shape == arch.obs)) throw std::invalid_argument("observation shape mismatch");
}

GaussianLatent head_to_gaussian(const nn::GaussHead& h) {
  return GaussianLatent(from_vec(h.mean), from_vec(h.stddev));
}

Mat make_noise(uint64_t seed, int max_t, int dim) {
  const auto table = reparameterization_noise(seed, max_t, dim);
  Mat eps(dim, max_t);
  for (int t = 0; t < max_t; ++t) {
    for (int d = 0; d < dim; ++d) eps(d, t) = table[t][d];
  }
  return eps;
}

struct SeqTerms {
  double kl = 0.0;
  double recon = 0.0;
};

/// Forward through one sequence, keeping caches for backward when requested.
struct SeqPass {
  std::vector<nn::PriorCache> prior;
  std::vector<nn::PosteriorCache> post;
  std::vector<nn::DecoderCache> dec;
  std::vector<Vec> samples;
  std::vector<Mat> targets;

  SeqTerms forward(const nn::Model& model, const double* w, const FrameSequence& seq, const Mat& eps,
                   bool keep) {
    const ModelArch& arch = model.arch();
    const int T = static_cast<int>(seq.size());
    if (keep) {
      prior.resize(T);
      post.resize(T);
      dec.resize(T);
      samples.resize(T);
      targets.resize(T);
    }
    SeqTerms terms;
    Vec s_prev = Vec::Zero(arch.latent_dim);
    nn::PriorCache pc;
    nn::PosteriorCache qc;
    nn::DecoderCache dcc;
    for (int t = 0; t < T; ++t) {
      const FrameRecord& f = seq[t];
      check_obs(f.observation, arch);
      check_action(f.action, arch);
      const Vec a = to_vec(f.action.controls);
      Mat target = nn::obs_to_tensor(f.observation);
      nn::PriorCache& p = keep ? prior[t] : pc;
      nn::PosteriorCache& q = keep ? post[t] : qc;
      nn::DecoderCache& d = keep ? dec[t] : dcc;
      model.prior_forward(w, s_prev, a, p);
      model.posterior_forward(w, s_prev, a, target, q);
      Vec s = q.head.mean + q.head.stddev.cwiseProduct(eps.col(t));
      model.decoder_forward(w, s, d);

      for (int i = 0; i < arch.latent_dim; ++i) {
        const double uq = q.head.mean[i], sq = q.head.stddev[i];
        const double up = p.head.mean[i], sp = p.head.stddev[i];
        const double du = uq - up;
        terms.kl += std::log(sp / sq) + (sq * sq + du * du) / (2.0 * sp * sp) - 0.5;
      }
      terms.recon += 0.5 * (d.image - target).squaredNorm();

      if (keep) {
        samples[t] = s;
        targets[t] = std::move(target);
      }
      s_prev = std::move(s);
    }
    return terms;
  }

  /// Reverse pass; scale multiplies every loss term (1/batch), kl_weight the KL part.
  void backward(const nn::Model& model, const double* w, const Mat& eps, double scale, double kl_weight,
                double* grad) const {
    const ModelArch& arch = model.arch();
    const int T = static_cast<int>(samples.size());
    const int D = arch.latent_dim;
    Vec ds_next = Vec::Zero(D);
    for (int t = T - 1; t >= 0; --t) {
      Mat dimage = scale * (dec[t].image - targets[t]);
      Vec ds = model.decoder_backward(w, dec[t], dimage, grad) + ds_next;

      const nn::GaussHead& q = post[t].head;
      const nn::GaussHead& p = prior[t].head;
      Vec dmu_q(D), dsd_q(D), dmu_p(D), dsd_p(D);
      const double kw = scale * kl_weight;
      for (int i = 0; i < D; ++i) {
        const double du = q.mean[i] - p.mean[i];
        const double sq = q.stddev[i], sp = p.stddev[i];
        const double inv_sp2 = 1.0 / (sp * sp);
        dmu_q[i] = kw * du * inv_sp2 + ds[i];
        dmu_p[i] = -kw * du * inv_sp2;
        dsd_q[i] = kw * (-1.0 / sq + sq * inv_sp2) + ds[i] * eps(i, t);
        dsd_p[i] = kw * (1.0 / sp - (sq * sq + du * du) * inv_sp2 / sp);
      }
      Vec ds_prev = model.posterior_backward(w, post[t], dmu_q, dsd_q, grad);
      ds_prev += model.prior_backward(w, prior[t], dmu_p, dsd_p, grad);
      ds_next = std::move(ds_prev);
    }
  }
};

void check_batch(const std::vector<FrameSequence>& batch) {
  if (batch.empty()) throw std::invalid_argument("free_energy: empty batch");
  for (const auto& seq : batch) {
    if (seq.empty()) throw std::invalid_argument("free_energy: empty sequence in batch");
  }
}

int max_length(const std::vector<FrameSequence>& batch) {
  size_t m = 0;
  for (const auto& s : batch) m = std::max(m, s.size());
  return static_cast<int>(m);
}

/// Runs fn(i) for i in [0, n) on up to nthreads workers. Static round-robin
/// assignment; caller must make jobs independent.
void parallel_for(int n, int nthreads, const std::function<void(int)>& fn) {
  nthreads = std::max(1, std::min(nthreads, n));
  if (nthreads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  std::exception_ptr err;
  std::mutex err_mu;
  for (int k = 0; k < nthreads; ++k) {
    pool.emplace_back([&, k] {
      try {
        for (int i = k; i < n; i += nthreads) fn(i);
      } catch (...) {
        std::scoped_lock lk(err_mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace

GaussianLatent prior_predict(const LatentSample& prev, const Action& action, const ModelParams& params) {
  check_sample(prev, params.arch);
  check_action(action, params.arch);
  nn::Model model(params.arch, params.layout);
  nn::PriorCache cache;
  model.prior_forward(params.values.data(), to_vec(prev.values), to_vec(action.controls), cache);
  return head_to_gaussian(cache.head);
}

GaussianLatent posterior_infer(const LatentSample& prev, const Action& action, const Observation& obs,
                               const ModelParams& params) {
  check_sample(prev, params.arch);
  check_action(action, params.arch);
  check_obs(obs, params.arch);
  nn::Model model(params.arch, params.layout);
  nn::PosteriorCache cache;
  model.posterior_forward(params.values.data(), to_vec(prev.values), to_vec(action.controls),
                          nn::obs_to_tensor(obs), cache);
  return head_to_gaussian(cache.head);
}

Observation likelihood_reconstruct(const LatentSample& sample, const ModelParams& params) {
  check_sample(sample, params.arch);
  nn::Model model(params.arch, params.layout);
  nn::DecoderCache cache;
  model.decoder_forward(params.values.data(), to_vec(sample.values), cache);
  return nn::tensor_to_obs(cache.image, params.arch.obs);
}

LatentSample encode(const LatentSample& prev, const Action& action, const Observation& obs,
                    const ModelParams& params) {
  return LatentSample(posterior_infer(prev, action, obs, params).mean);
}

double kl_gaussian(const GaussianLatent& q, const GaussianLatent& p) {
  if (q.dim() != p.dim()) throw std::invalid_argument("kl_gaussian: dimension mismatch");
  double kl = 0.0;
  for (int i = 0; i < q.dim(); ++i) {
    const double sq = q.stddev[i], sp = p.stddev[i];
    if (!(sq > 0.0) || !(sp > 0.0)) throw std::invalid_argument("kl_gaussian: non-positive stddev");
    const double du = q.mean[i] - p.mean[i];
    kl += std::log(sp / sq) + (sq * sq + du * du) / (2.0 * sp * sp) - 0.5;
  }
  return kl;
}

double reconstruction_loss(const Observation& obs, const Observation& recon) {
  if (!(obs.shape == recon.shape)) throw std::invalid_argument("reconstruction_loss: shape mismatch");
  double sum = 0.0;
  for (size_t i = 0; i < obs.pixels.size(); ++i) {
    const double d = obs.pixels[i] - recon.pixels[i];
    sum += d * d;
  }
  return 0.5 * sum;
}

std::vector<std::vector<double>> reparameterization_noise(uint64_t seed, int steps, int latent_dim) {
  NormalSource src(mix_seed(seed, 0x5e9ce0ffULL));
  std::vector<std::vector<double>> eps(static_cast<size_t>(steps),
                                       std::vector<double>(static_cast<size_t>(latent_dim)));
  for (int t = 0; t < steps; ++t) {
    for (int d = 0; d < latent_dim; ++d) eps[t][d] = src.next();
  }
  return eps;
}

FreeEnergyBreakdown free_energy_terms(const std::vector<FrameSequence>& batch, const ModelParams& params,
                                      uint64_t seed, double kl_weight) {
  check_batch(batch);
  nn::Model model(params.arch, params.layout);
  const Mat eps = make_noise(seed, max_length(batch), params.arch.latent_dim);
  FreeEnergyBreakdown out;
  for (const auto& seq : batch) {
    SeqPass pass;
    SeqTerms t = pass.forward(model, params.values.data(), seq, eps, false);
    out.kl += t.kl;
    out.recon += t.recon;
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  out.kl *= inv_b;
  out.recon *= inv_b;
  out.total = kl_weight * out.kl + out.recon;
  return out;
}

double free_energy(const std::vector<FrameSequence>& batch, const ModelParams& params, uint64_t seed) {
  return free_energy_terms(batch, params, seed).total;
}

std::vector<double> grad_free_energy(const std::vector<FrameSequence>& batch, const ModelParams& params,
                                     uint64_t seed, double kl_weight, FreeEnergyBreakdown* loss_out,
                                     int threads) {
  check_batch(batch);
  nn::Model model(params.arch, params.layout);
  const int B = static_cast<int>(batch.size());
  const Mat eps = make_noise(seed, max_length(batch), params.arch.latent_dim);
  const double scale = 1.0 / static_cast<double>(B);

  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, threads);

  std::vector<double> grad(params.layout.total, 0.0);
  std::vector<SeqTerms> terms(B);

  const int chunk = std::min(threads, B);
  std::vector<std::vector<double>> bufs(chunk);
  for (int start = 0; start < B; start += chunk) {
    const int n = std::min(chunk, B - start);
    parallel_for(n, threads, [&](int j) {
      bufs[j].assign(params.layout.total, 0.0);
      SeqPass pass;
      terms[start + j] = pass.forward(model, params.values.data(), batch[start + j], eps, true);
      pass.backward(model, params.values.data(), eps, scale, kl_weight, bufs[j].data());
    });
    // fixed summation order: strictly increasing sequence index
    for (int j = 0; j < n; ++j) {
      const double* src = bufs[j].data();
      double* dst = grad.data();
      for (size_t i = 0; i < grad.size(); ++i) dst[i] += src[i];
    }
  }

  if (loss_out) {
    FreeEnergyBreakdown b;
    for (const auto& t : terms) {
      b.kl += t.kl;
      b.recon += t.recon;
    }
    b.kl *= scale;
    b.recon *= scale;
    b.total = kl_weight * b.kl + b.recon;
    *loss_out = b;
  }
  return grad;
}

TrainResult train(const std::vector<FrameSequence>& dataset, const ModelArch& arch, const TrainConfig& config,
                  const ModelParams* resume_from, int start_epoch, void (*progress)(const EpochLog&)) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

  // chop the dataset into training windows; short sequences are kept whole
  std::vector<FrameSequence> windows;
  for (const auto& seq : dataset) {
    if (seq.empty()) continue;
    const int T = static_cast<int>(seq.size());
    const int L = config.sequence_length;
    if (T <= L) {
      windows.push_back(seq);
      continue;
    }
    for (int s = 0; s + L <= T; s += L) {
      windows.emplace_back(seq.begin() + s, seq.begin() + s + L);
    }
  }
  if (windows.empty()) throw std::invalid_argument("train: dataset has no usable frames");

  TrainResult result;
  result.params = resume_from ? *resume_from : ModelParams::init(arch, mix_seed(config.seed, 0x171ULL));
  if (resume_from && !(resume_from->arch == arch)) {
    throw std::invalid_argument("train: resume checkpoint architecture mismatch");
  }

  const size_t n = result.params.layout.total;
  std::vector<double> m(n, 0.0), v(n, 0.0);
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  int64_t step = 0;

  std::vector<int> order(windows.size());
  std::iota(order.begin(), order.end(), 0);

  for (int e = 0; e < config.epochs; ++e) {
    const int epoch = start_epoch + e;
    std::mt19937_64 shuffle_rng(mix_seed(config.seed, 0x50f1eULL, static_cast<uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double ep_kl = 0.0, ep_recon = 0.0;
    size_t ep_count = 0;
    int batch_index = 0;
    for (size_t pos = 0; pos < order.size(); pos += config.batch_size, ++batch_index) {
      const size_t end = std::min(order.size(), pos + config.batch_size);
      std::vector<FrameSequence> batch;
      batch.reserve(end - pos);
      for (size_t i = pos; i < end; ++i) batch.push_back(windows[order[i]]);

      const uint64_t noise_seed =
          mix_seed(config.seed, static_cast<uint64_t>(epoch) * 0x10001ULL + batch_index, 0xba7c4ULL);
      FreeEnergyBreakdown loss;
      std::vector<double> grad =
          grad_free_energy(batch, result.params, noise_seed, config.kl_weight, &loss, config.threads);
      if (!std::isfinite(loss.total)) {
        throw TrainDivergence(epoch, "train: non-finite loss at epoch " + std::to_string(epoch));
      }

      ++step;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      double* w = result.params.values.data();
      for (size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        w[i] -= config.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + adam_eps);
      }

      ep_kl += loss.kl * static_cast<double>(batch.size());
      ep_recon += loss.recon * static_cast<double>(batch.size());
      ep_count += batch.size();
    }

    EpochLog log;
    log.epoch = epoch;
    log.kl_term = ep_kl / static_cast<double>(ep_count);
    log.recon_term = ep_recon / static_cast<double>(ep_count);
    log.free_energy = config.kl_weight * log.kl_term + log.recon_term;
    result.log.push_back(log);
    if (progress) progress(log);
  }
  return result;
}

// --- checkpoint io ---------------------------------------------------------------

namespace {

using nlohmann::json;

json arch_to_json(const ModelArch& a) {
  return json{{"latent_dim", a.latent_dim}, {"action_dim", a.action_dim},   {"obs_height", a.obs.height},
              {"obs_width", a.obs.width},   {"obs_channels", a.obs.channels}, {"conv_channels", a.conv_channels},
              {"hidden", a.hidden},         {"std_floor", a.std_floor}};
}

ModelArch arch_from_json(const json& j) {
  ModelArch a;
  a.latent_dim = j.at("latent_dim").get<int>();
  a.action_dim = j.at("action_dim").get<int>();
  a.obs.height = j.at("obs_height").get<int>();
  a.obs.width = j.at("obs_width").get<int>();
  a.obs.channels = j.at("obs_channels").get<int>();
  a.conv_channels = j.at("conv_channels").get<std::vector<int>>();
  a.hidden = j.at("hidden").get<int>();
  a.std_floor = j.at("std_floor").get<double>();
  return a;
}

json config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"sequence_length", c.sequence_length},
              {"seed", c.seed},
              {"kl_weight", c.kl_weight}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.sequence_length = j.at("sequence_length").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  c.kl_weight = j.at("kl_weight").get<double>();
  return c;
}

constexpr int kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const TrainConfig& config,
                     double final_loss) {
  json layout = json::array();
  for (const auto& seg : params.layout.segments) {
    layout.push_back(json{{"name", seg.name}, {"offset", seg.offset}, {"size", seg.size}});
  }
  json doc{{"format", "latentslam-checkpoint"},
           {"version", kCheckpointVersion},
           {"arch", arch_to_json(params.arch)},
           {"layout", layout},
           {"train_config", config_to_json(config)},
           {"final_loss", final_loss},
           {"weights", params.values}};
  std::vector<uint8_t> bytes = json::to_cbor(doc);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json doc;
  try {
    doc = json::from_cbor(bytes);
  } catch (const json::exception& e) {
    throw std::runtime_error("load_checkpoint: malformed file " + path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "latentslam-checkpoint") {
    throw std::runtime_error("load_checkpoint: not a checkpoint file: " + path.string());
  }
  if (doc.value("version", -1) != kCheckpointVersion) {
    throw std::runtime_error("load_checkpoint: unsupported version in " + path.string());
  }
  Checkpoint ck;
  ck.params.arch = arch_from_json(doc.at("arch"));
  ck.params.layout = nn::make_layout(ck.params.arch);
  ck.params.values = doc.at("weights").get<std::vector<double>>();
  if (ck.params.values.size() != ck.params.layout.total) {
    throw std::runtime_error("load_checkpoint: weight count does not match architecture");
  }
  ck.config = config_from_json(doc.at("train_config"));
  ck.final_loss = doc.at("final_loss").get<double>();
  return ck;
}

void save_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_training_log: cannot open " + path.string());
  out << "epoch,free_energy,kl_term,recon_term\n";
  out.precision(17);
  for (const auto& e : log) {
    out << e.epoch << ',' << e.free_energy << ',' << e.kl_term << ',' << e.recon_term << '\n';
  }
}

}  // namespace latentslam

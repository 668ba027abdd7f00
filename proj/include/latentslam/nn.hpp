#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "latentslam/frame.hpp"

namespace latentslam {

/// Shape of the generative model. The paper fixes only the block structure;
/// channel counts and hidden width are configurable so that tiny test models
/// and the full 64x64x3 model share one code path.
struct ModelArch {
  int latent_dim = 32;
  int action_dim = 4;
  ImageShape obs{64, 64, 3};
  std::vector<int> conv_channels{32, 64, 128, 256};
  int hidden = 256;
  double std_floor = 1e-4;

  static constexpr int kKernel = 4;
  static constexpr int kStride = 2;
  static constexpr int kPad = 1;

  int levels() const { return static_cast<int>(conv_channels.size()); }
  int feat_h() const { return obs.height >> levels(); }
  int feat_w() const { return obs.width >> levels(); }
  int flat_dim() const { return conv_channels.back() * feat_h() * feat_w(); }

  void validate() const;
  bool operator==(const ModelArch&) const = default;
};

namespace nn {

/// Named segments inside one flat parameter vector. Segment order is the
/// documented checkpoint weight order.
struct ParamLayout {
  struct Segment {
    std::string name;
    size_t offset = 0;
    size_t size = 0;
    size_t fan_in = 0;  // 0 for biases
  };

  std::vector<Segment> segments;
  size_t total = 0;

  size_t add(const std::string& name, size_t size, size_t fan_in = 0);
  const Segment& find(const std::string& name) const;
};

/// Builds the full parameter layout for an architecture. Weight matrices are
/// row-major [out x in]; conv weights are [out_c x in_c*k*k]; deconv weights
/// are [in_c x out_c*k*k]. Feature flattening is channel-major (CHW).
ParamLayout make_layout(const ModelArch& arch);

/// Fan-in scaled uniform init, biases zero. Deterministic in seed.
std::vector<double> init_params(const ModelArch& arch, const ParamLayout& layout, uint64_t seed);

using Mat = Eigen::MatrixXd;  // conv feature maps are [channels x pixels]
using Vec = Eigen::VectorXd;

struct ConvGeom {
  int in_c, in_h, in_w;
  int out_c, out_h, out_w;
  int k, stride, pad;
};

ConvGeom conv_geom(int in_c, int in_h, int in_w, int out_c, int k, int stride, int pad);

/// cols is [(in_c*k*k) x (out_h*out_w)]; zero padding.
void im2col(const Mat& img, const ConvGeom& g, Mat& cols);
/// Scatter-add transpose of im2col; img must be pre-sized [in_c x in_h*in_w].
void col2im_add(const Mat& cols, const ConvGeom& g, Mat& img);

double softplus(double x);
double softplus_grad(double x);
double relu(double x);
double sigmoid(double x);

/// Output of the prior / posterior heads before packaging into GaussianLatent.
struct GaussHead {
  Vec mean;
  Vec stddev;
  Vec prestd;  // pre-softplus cache for backward
};

/// Per-step forward caches. All tensors kept so backward needs no recompute.
struct PosteriorCache {
  std::vector<Mat> conv_in;    // input to each conv level (level 0: the image)
  std::vector<Mat> conv_cols;  // im2col buffers
  std::vector<Mat> conv_pre;   // pre-ReLU conv outputs
  Vec joined;                  // [flat ; s_prev ; action]
  Vec fc0_pre, fc0_act, fc1_pre, fc1_act;
  GaussHead head;
};

struct PriorCache {
  Vec joined;  // [s_prev ; action]
  Vec fc0_pre, fc0_act, fc1_pre, fc1_act;
  GaussHead head;
};

struct DecoderCache {
  Vec sample;
  Vec fc_pre, fc_act;
  std::vector<Mat> de_in;    // input to each deconv level
  std::vector<Mat> de_cols;
  std::vector<Mat> de_pre;   // pre-activation outputs
  Mat image;                 // sigmoid output, [obs_c x H*W]
};

/// Stateless evaluators over a flat weight vector. `grad`, when non-null,
/// must have layout.total entries; backward accumulates into it.
class Model {
 public:
  Model(const ModelArch& arch, const ParamLayout& layout);

  void posterior_forward(const double* w, const Vec& s_prev, const Vec& action, const Mat& obs,
                         PosteriorCache& cache) const;
  /// Returns gradient w.r.t. s_prev.
  Vec posterior_backward(const double* w, const PosteriorCache& cache, const Vec& dmean, const Vec& dstd,
                         double* grad) const;

  void prior_forward(const double* w, const Vec& s_prev, const Vec& action, PriorCache& cache) const;
  Vec prior_backward(const double* w, const PriorCache& cache, const Vec& dmean, const Vec& dstd,
                     double* grad) const;

  void decoder_forward(const double* w, const Vec& sample, DecoderCache& cache) const;
  /// dimage is d(loss)/d(sigmoid output); returns gradient w.r.t. the sample.
  Vec decoder_backward(const double* w, const DecoderCache& cache, const Mat& dimage, double* grad) const;

  const ModelArch& arch() const { return arch_; }

 private:
  ModelArch arch_;
  const ParamLayout* layout_;
  // cached segment offsets
  struct Seg { size_t w, b; };
  std::vector<Seg> enc_conv_, dec_deconv_;
  Seg enc_fc0_{}, enc_fc1_{}, enc_mean_{}, enc_prestd_{};
  Seg prior_fc0_{}, prior_fc1_{}, prior_mean_{}, prior_prestd_{};
  Seg dec_fc_{};
  std::vector<ConvGeom> enc_geom_, dec_geom_;  // dec_geom_ is the equivalent forward-conv geometry
};

/// Channel-last Observation -> [C x H*W] channel-major matrix.
Mat obs_to_tensor(const Observation& obs);
Observation tensor_to_obs(const Mat& img, const ImageShape& shape);

}  // namespace nn
}  // namespace latentslam

#include "latentslam/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "latentslam/rng.hpp"

namespace latentslam {

void ModelArch::validate() const {
  if (latent_dim < 1) throw std::invalid_argument("ModelArch: latent_dim must be >= 1");
  if (action_dim < 0) throw std::invalid_argument("ModelArch: action_dim must be >= 0");
  if (hidden < 1) throw std::invalid_argument("ModelArch: hidden must be >= 1");
  if (conv_channels.empty()) throw std::invalid_argument("ModelArch: need at least one conv level");
  if (std_floor <= 0.0) throw std::invalid_argument("ModelArch: std_floor must be > 0");
  int h = obs.height, w = obs.width;
  for (size_t i = 0; i < conv_channels.size(); ++i) {
    if (conv_channels[i] < 1) throw std::invalid_argument("ModelArch: conv channels must be >= 1");
    if (h % 2 != 0 || w % 2 != 0) {
      throw std::invalid_argument("ModelArch: observation size must halve at every conv level");
    }
    h /= 2;
    w /= 2;
  }
  if (h < 1 || w < 1) throw std::invalid_argument("ModelArch: too many conv levels for observation size");
}

namespace nn {

size_t ParamLayout::add(const std::string& name, size_t size, size_t fan_in) {
  segments.push_back({name, total, size, fan_in});
  total += size;
  return segments.back().offset;
}

const ParamLayout::Segment& ParamLayout::find(const std::string& name) const {
  for (const auto& s : segments) {
    if (s.name == name) return s;
  }
  throw std::out_of_range("ParamLayout: no segment named " + name);
}

ParamLayout make_layout(const ModelArch& arch) {
  arch.validate();
  const int k2 = ModelArch::kKernel * ModelArch::kKernel;
  ParamLayout lay;

  int in_c = arch.obs.channels;
  for (int i = 0; i < arch.levels(); ++i) {
    const int out_c = arch.conv_channels[i];
    const size_t fan = static_cast<size_t>(in_c) * k2;
    lay.add("enc.conv" + std::to_string(i) + ".w", static_cast<size_t>(out_c) * fan, fan);
    lay.add("enc.conv" + std::to_string(i) + ".b", out_c);
    in_c = out_c;
  }
  const int joined = arch.flat_dim() + arch.latent_dim + arch.action_dim;
  lay.add("enc.fc0.w", static_cast<size_t>(arch.hidden) * joined, joined);
  lay.add("enc.fc0.b", arch.hidden);
  lay.add("enc.fc1.w", static_cast<size_t>(arch.hidden) * arch.hidden, arch.hidden);
  lay.add("enc.fc1.b", arch.hidden);
  lay.add("enc.mean.w", static_cast<size_t>(arch.latent_dim) * arch.hidden, arch.hidden);
  lay.add("enc.mean.b", arch.latent_dim);
  lay.add("enc.prestd.w", static_cast<size_t>(arch.latent_dim) * arch.hidden, arch.hidden);
  lay.add("enc.prestd.b", arch.latent_dim);

  const int sa = arch.latent_dim + arch.action_dim;
  lay.add("prior.fc0.w", static_cast<size_t>(arch.hidden) * sa, sa);
  lay.add("prior.fc0.b", arch.hidden);
  lay.add("prior.fc1.w", static_cast<size_t>(arch.hidden) * arch.hidden, arch.hidden);
  lay.add("prior.fc1.b", arch.hidden);
  lay.add("prior.mean.w", static_cast<size_t>(arch.latent_dim) * arch.hidden, arch.hidden);
  lay.add("prior.mean.b", arch.latent_dim);
  lay.add("prior.prestd.w", static_cast<size_t>(arch.latent_dim) * arch.hidden, arch.hidden);
  lay.add("prior.prestd.b", arch.latent_dim);

  lay.add("dec.fc.w", static_cast<size_t>(arch.flat_dim()) * arch.latent_dim, arch.latent_dim);
  lay.add("dec.fc.b", arch.flat_dim());
  // deconv chain: last conv channels back down to the image channels
  std::vector<int> rev(arch.conv_channels.rbegin(), arch.conv_channels.rend());
  rev.push_back(arch.obs.channels);
  for (size_t i = 0; i + 1 < rev.size(); ++i) {
    const size_t fan = static_cast<size_t>(rev[i]) * k2 / (ModelArch::kStride * ModelArch::kStride);
    lay.add("dec.deconv" + std::to_string(i) + ".w", static_cast<size_t>(rev[i]) * rev[i + 1] * k2, fan);
    lay.add("dec.deconv" + std::to_string(i) + ".b", rev[i + 1]);
  }
  return lay;
}

std::vector<double> init_params(const ModelArch& arch, const ParamLayout& layout, uint64_t seed) {
  arch.validate();
  std::vector<double> w(layout.total, 0.0);
  std::mt19937_64 gen(mix_seed(seed, 0x1a7e57u));
  for (const auto& seg : layout.segments) {
    if (seg.fan_in == 0) continue;  // bias
    const double bound = 1.0 / std::sqrt(static_cast<double>(seg.fan_in));
    for (size_t i = 0; i < seg.size; ++i) {
      w[seg.offset + i] = uniform_range(gen, -bound, bound);
    }
  }
  return w;
}

ConvGeom conv_geom(int in_c, int in_h, int in_w, int out_c, int k, int stride, int pad) {
  ConvGeom g;
  g.in_c = in_c;
  g.in_h = in_h;
  g.in_w = in_w;
  g.out_c = out_c;
  g.out_h = (in_h + 2 * pad - k) / stride + 1;
  g.out_w = (in_w + 2 * pad - k) / stride + 1;
  g.k = k;
  g.stride = stride;
  g.pad = pad;
  return g;
}

void im2col(const Mat& img, const ConvGeom& g, Mat& cols) {
  const int kk = g.k * g.k;
  cols.setZero(g.in_c * kk, g.out_h * g.out_w);
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      const int pix = oy * g.out_w + ox;
      for (int c = 0; c < g.in_c; ++c) {
        for (int ky = 0; ky < g.k; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int kx = 0; kx < g.k; ++kx) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.in_w) continue;
            cols((c * g.k + ky) * g.k + kx, pix) = img(c, iy * g.in_w + ix);
          }
        }
      }
    }
  }
}

void col2im_add(const Mat& cols, const ConvGeom& g, Mat& img) {
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      const int pix = oy * g.out_w + ox;
      for (int c = 0; c < g.in_c; ++c) {
        for (int ky = 0; ky < g.k; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int kx = 0; kx < g.k; ++kx) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.in_w) continue;
            img(c, iy * g.in_w + ix) += cols((c * g.k + ky) * g.k + kx, pix);
          }
        }
      }
    }
  }
}

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double softplus_grad(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double relu(double x) { return x > 0.0 ? x : 0.0; }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWMap = Eigen::Map<const RowMat>;
using WMap = Eigen::Map<RowMat>;
using ConstVMap = Eigen::Map<const Vec>;
using VMap = Eigen::Map<Vec>;

ConstWMap wmap(const double* w, size_t off, int rows, int cols) { return ConstWMap(w + off, rows, cols); }
WMap wmap(double* w, size_t off, int rows, int cols) { return WMap(w + off, rows, cols); }
ConstVMap vmap(const double* w, size_t off, int n) { return ConstVMap(w + off, n); }
VMap vmap(double* w, size_t off, int n) { return VMap(w + off, n); }

Vec dense_forward(const double* w, size_t woff, size_t boff, int out, int in, const Vec& x) {
  Vec y = wmap(w, woff, out, in) * x + vmap(w, boff, out);
  return y;
}

void relu_inplace(Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = relu(v[i]);
}

Vec relu_back(const Vec& pre, const Vec& dact) {
  Vec d = dact;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (pre[i] <= 0.0) d[i] = 0.0;
  }
  return d;
}

}  // namespace

Model::Model(const ModelArch& arch, const ParamLayout& layout) : arch_(arch), layout_(&layout) {
  const int k = ModelArch::kKernel, s = ModelArch::kStride, p = ModelArch::kPad;
  int in_c = arch.obs.channels, h = arch.obs.height, w = arch.obs.width;
  for (int i = 0; i < arch.levels(); ++i) {
    const int out_c = arch.conv_channels[i];
    enc_geom_.push_back(conv_geom(in_c, h, w, out_c, k, s, p));
    enc_conv_.push_back({layout.find("enc.conv" + std::to_string(i) + ".w").offset,
                         layout.find("enc.conv" + std::to_string(i) + ".b").offset});
    in_c = out_c;
    h /= 2;
    w /= 2;
  }
  enc_fc0_ = {layout.find("enc.fc0.w").offset, layout.find("enc.fc0.b").offset};
  enc_fc1_ = {layout.find("enc.fc1.w").offset, layout.find("enc.fc1.b").offset};
  enc_mean_ = {layout.find("enc.mean.w").offset, layout.find("enc.mean.b").offset};
  enc_prestd_ = {layout.find("enc.prestd.w").offset, layout.find("enc.prestd.b").offset};
  prior_fc0_ = {layout.find("prior.fc0.w").offset, layout.find("prior.fc0.b").offset};
  prior_fc1_ = {layout.find("prior.fc1.w").offset, layout.find("prior.fc1.b").offset};
  prior_mean_ = {layout.find("prior.mean.w").offset, layout.find("prior.mean.b").offset};
  prior_prestd_ = {layout.find("prior.prestd.w").offset, layout.find("prior.prestd.b").offset};
  dec_fc_ = {layout.find("dec.fc.w").offset, layout.find("dec.fc.b").offset};

  std::vector<int> rev(arch.conv_channels.rbegin(), arch.conv_channels.rend());
  rev.push_back(arch.obs.channels);
  h = arch.feat_h();
  w = arch.feat_w();
  for (size_t i = 0; i + 1 < rev.size(); ++i) {
    // equivalent forward-conv geometry: deconv output -> deconv input
    dec_geom_.push_back(conv_geom(rev[i + 1], h * 2, w * 2, rev[i], k, s, p));
    dec_deconv_.push_back({layout.find("dec.deconv" + std::to_string(i) + ".w").offset,
                           layout.find("dec.deconv" + std::to_string(i) + ".b").offset});
    h *= 2;
    w *= 2;
  }
}

namespace {

/// Shared MLP trunk + gaussian head, used by both prior and posterior.
void head_forward(const double* w, int hidden, int latent, double std_floor, const Vec& joined, size_t fc0w,
                  size_t fc0b, size_t fc1w, size_t fc1b, size_t mw, size_t mb, size_t sw, size_t sb,
                  Vec& fc0_pre, Vec& fc0_act, Vec& fc1_pre, Vec& fc1_act, GaussHead& head) {
  const int in = static_cast<int>(joined.size());
  fc0_pre = dense_forward(w, fc0w, fc0b, hidden, in, joined);
  fc0_act = fc0_pre;
  relu_inplace(fc0_act);
  fc1_pre = dense_forward(w, fc1w, fc1b, hidden, hidden, fc0_act);
  fc1_act = fc1_pre;
  relu_inplace(fc1_act);
  head.mean = dense_forward(w, mw, mb, latent, hidden, fc1_act);
  head.prestd = dense_forward(w, sw, sb, latent, hidden, fc1_act);
  head.stddev.resize(latent);
  for (int i = 0; i < latent; ++i) head.stddev[i] = softplus(head.prestd[i]) + std_floor;
}

/// Backward through the gaussian head + trunk; returns d(joined).
Vec head_backward(const double* w, int hidden, int latent, const Vec& joined, size_t fc0w, size_t fc0b,
                  size_t fc1w, size_t fc1b, size_t mw, size_t mb, size_t sw, size_t sb, const Vec& fc0_pre,
                  const Vec& fc0_act, const Vec& fc1_pre, const Vec& fc1_act, const GaussHead& head,
                  const Vec& dmean, const Vec& dstd, double* grad) {
  const int in = static_cast<int>(joined.size());
  Vec dprestd(latent);
  for (int i = 0; i < latent; ++i) dprestd[i] = dstd[i] * softplus_grad(head.prestd[i]);

  if (grad) {
    wmap(grad, mw, latent, hidden).noalias() += dmean * fc1_act.transpose();
    vmap(grad, mb, latent) += dmean;
    wmap(grad, sw, latent, hidden).noalias() += dprestd * fc1_act.transpose();
    vmap(grad, sb, latent) += dprestd;
  }
  Vec dfc1_act = wmap(w, mw, latent, hidden).transpose() * dmean +
                 wmap(w, sw, latent, hidden).transpose() * dprestd;
  Vec dfc1_pre = relu_back(fc1_pre, dfc1_act);
  if (grad) {
    wmap(grad, fc1w, hidden, hidden).noalias() += dfc1_pre * fc0_act.transpose();
    vmap(grad, fc1b, hidden) += dfc1_pre;
  }
  Vec dfc0_act = wmap(w, fc1w, hidden, hidden).transpose() * dfc1_pre;
  Vec dfc0_pre = relu_back(fc0_pre, dfc0_act);
  if (grad) {
    wmap(grad, fc0w, hidden, in).noalias() += dfc0_pre * joined.transpose();
    vmap(grad, fc0b, hidden) += dfc0_pre;
  }
  return wmap(w, fc0w, hidden, in).transpose() * dfc0_pre;
}

}  // namespace

void Model::posterior_forward(const double* w, const Vec& s_prev, const Vec& action, const Mat& obs,
                              PosteriorCache& cache) const {
  const int levels = arch_.levels();
  cache.conv_in.resize(levels);
  cache.conv_cols.resize(levels);
  cache.conv_pre.resize(levels);
  Mat x = obs;
  for (int i = 0; i < levels; ++i) {
    const ConvGeom& g = enc_geom_[i];
    cache.conv_in[i] = x;
    im2col(x, g, cache.conv_cols[i]);
    const int kk = g.in_c * g.k * g.k;
    Mat pre = wmap(w, enc_conv_[i].w, g.out_c, kk) * cache.conv_cols[i];
    pre.colwise() += vmap(w, enc_conv_[i].b, g.out_c);
    cache.conv_pre[i] = pre;
    x = pre.unaryExpr([](double v) { return relu(v); });
  }
  // CHW flatten: channel-major, pixel fastest within a channel
  const int flat = arch_.flat_dim();
  Vec joined(flat + arch_.latent_dim + arch_.action_dim);
  const int npix = static_cast<int>(x.cols());
  for (int c = 0; c < x.rows(); ++c) {
    for (int p = 0; p < npix; ++p) joined[c * npix + p] = x(c, p);
  }
  joined.segment(flat, arch_.latent_dim) = s_prev;
  joined.segment(flat + arch_.latent_dim, arch_.action_dim) = action;
  cache.joined = joined;
  head_forward(w, arch_.hidden, arch_.latent_dim, arch_.std_floor, joined, enc_fc0_.w, enc_fc0_.b,
               enc_fc1_.w, enc_fc1_.b, enc_mean_.w, enc_mean_.b, enc_prestd_.w, enc_prestd_.b,
               cache.fc0_pre, cache.fc0_act, cache.fc1_pre, cache.fc1_act, cache.head);
}

Vec Model::posterior_backward(const double* w, const PosteriorCache& cache, const Vec& dmean,
                              const Vec& dstd, double* grad) const {
  Vec djoined = head_backward(w, arch_.hidden, arch_.latent_dim, cache.joined, enc_fc0_.w, enc_fc0_.b,
                              enc_fc1_.w, enc_fc1_.b, enc_mean_.w, enc_mean_.b, enc_prestd_.w,
                              enc_prestd_.b, cache.fc0_pre, cache.fc0_act, cache.fc1_pre, cache.fc1_act,
                              cache.head, dmean, dstd, grad);
  const int flat = arch_.flat_dim();
  Vec ds_prev = djoined.segment(flat, arch_.latent_dim);

  const int levels = arch_.levels();
  // unflatten into the last conv activation gradient
  const ConvGeom& gl = enc_geom_[levels - 1];
  Mat dact(gl.out_c, gl.out_h * gl.out_w);
  for (int c = 0; c < dact.rows(); ++c) {
    for (int p = 0; p < dact.cols(); ++p) dact(c, p) = djoined[c * static_cast<int>(dact.cols()) + p];
  }
  for (int i = levels - 1; i >= 0; --i) {
    const ConvGeom& g = enc_geom_[i];
    const int kk = g.in_c * g.k * g.k;
    Mat dpre = dact;
    for (int c = 0; c < dpre.rows(); ++c) {
      for (int p = 0; p < dpre.cols(); ++p) {
        if (cache.conv_pre[i](c, p) <= 0.0) dpre(c, p) = 0.0;
      }
    }
    if (grad) {
      wmap(grad, enc_conv_[i].w, g.out_c, kk).noalias() += dpre * cache.conv_cols[i].transpose();
      vmap(grad, enc_conv_[i].b, g.out_c) += dpre.rowwise().sum();
    }
    if (i > 0) {
      Mat dcols = wmap(w, enc_conv_[i].w, g.out_c, kk).transpose() * dpre;
      Mat dx = Mat::Zero(g.in_c, g.in_h * g.in_w);
      col2im_add(dcols, g, dx);
      dact = dx;
    }
  }
  return ds_prev;
}

void Model::prior_forward(const double* w, const Vec& s_prev, const Vec& action, PriorCache& cache) const {
  Vec joined(arch_.latent_dim + arch_.action_dim);
  joined.segment(0, arch_.latent_dim) = s_prev;
  joined.segment(arch_.latent_dim, arch_.action_dim) = action;
  cache.joined = joined;
  head_forward(w, arch_.hidden, arch_.latent_dim, arch_.std_floor, joined, prior_fc0_.w, prior_fc0_.b,
               prior_fc1_.w, prior_fc1_.b, prior_mean_.w, prior_mean_.b, prior_prestd_.w, prior_prestd_.b,
               cache.fc0_pre, cache.fc0_act, cache.fc1_pre, cache.fc1_act, cache.head);
}

Vec Model::prior_backward(const double* w, const PriorCache& cache, const Vec& dmean, const Vec& dstd,
                          double* grad) const {
  Vec djoined = head_backward(w, arch_.hidden, arch_.latent_dim, cache.joined, prior_fc0_.w, prior_fc0_.b,
                              prior_fc1_.w, prior_fc1_.b, prior_mean_.w, prior_mean_.b, prior_prestd_.w,
                              prior_prestd_.b, cache.fc0_pre, cache.fc0_act, cache.fc1_pre, cache.fc1_act,
                              cache.head, dmean, dstd, grad);
  return djoined.segment(0, arch_.latent_dim);
}

void Model::decoder_forward(const double* w, const Vec& sample, DecoderCache& cache) const {
  const int flat = arch_.flat_dim();
  cache.sample = sample;
  cache.fc_pre = dense_forward(w, dec_fc_.w, dec_fc_.b, flat, arch_.latent_dim, sample);
  cache.fc_act = cache.fc_pre;
  relu_inplace(cache.fc_act);

  const int levels = static_cast<int>(dec_geom_.size());
  cache.de_in.resize(levels);
  cache.de_cols.resize(levels);
  cache.de_pre.resize(levels);

  // unflatten fc output into [c_last x feat_pixels]
  Mat x(arch_.conv_channels.back(), arch_.feat_h() * arch_.feat_w());
  for (int c = 0; c < x.rows(); ++c) {
    for (int p = 0; p < x.cols(); ++p) x(c, p) = cache.fc_act[c * static_cast<int>(x.cols()) + p];
  }
  for (int i = 0; i < levels; ++i) {
    const ConvGeom& g = dec_geom_[i];  // g.out_c == deconv input channels, g.in_c == output channels
    cache.de_in[i] = x;
    const int ockk = g.in_c * g.k * g.k;
    cache.de_cols[i].noalias() = wmap(w, dec_deconv_[i].w, g.out_c, ockk).transpose() * x;
    Mat y = Mat::Zero(g.in_c, g.in_h * g.in_w);
    col2im_add(cache.de_cols[i], g, y);
    y.colwise() += vmap(w, dec_deconv_[i].b, g.in_c);
    cache.de_pre[i] = y;
    if (i + 1 < levels) {
      x = y.unaryExpr([](double v) { return relu(v); });
    } else {
      cache.image = y.unaryExpr([](double v) { return sigmoid(v); });
    }
  }
}

Vec Model::decoder_backward(const double* w, const DecoderCache& cache, const Mat& dimage,
                            double* grad) const {
  const int levels = static_cast<int>(dec_geom_.size());
  // sigmoid backward on the output level
  Mat dy = dimage.cwiseProduct(cache.image.unaryExpr([](double s) { return s * (1.0 - s); }));
  for (int i = levels - 1; i >= 0; --i) {
    const ConvGeom& g = dec_geom_[i];
    const int ockk = g.in_c * g.k * g.k;
    if (i < levels - 1) {
      // dy arrives as gradient of relu(pre)
      for (int c = 0; c < dy.rows(); ++c) {
        for (int p = 0; p < dy.cols(); ++p) {
          if (cache.de_pre[i](c, p) <= 0.0) dy(c, p) = 0.0;
        }
      }
    }
    Mat dcols;
    im2col(dy, g, dcols);
    if (grad) {
      wmap(grad, dec_deconv_[i].w, g.out_c, ockk).noalias() += cache.de_in[i] * dcols.transpose();
      vmap(grad, dec_deconv_[i].b, g.in_c) += dy.rowwise().sum();
    }
    dy = wmap(w, dec_deconv_[i].w, g.out_c, ockk) * dcols;
  }
  // dy is now the gradient of the unflattened fc activation
  const int flat = arch_.flat_dim();
  Vec dfc_act(flat);
  for (int c = 0; c < dy.rows(); ++c) {
    for (int p = 0; p < dy.cols(); ++p) dfc_act[c * static_cast<int>(dy.cols()) + p] = dy(c, p);
  }
  Vec dfc_pre = relu_back(cache.fc_pre, dfc_act);
  if (grad) {
    wmap(grad, dec_fc_.w, flat, arch_.latent_dim).noalias() += dfc_pre * cache.sample.transpose();
    vmap(grad, dec_fc_.b, flat) += dfc_pre;
  }
  return wmap(w, dec_fc_.w, flat, arch_.latent_dim).transpose() * dfc_pre;
}

Mat obs_to_tensor(const Observation& obs) {
  const int c = obs.shape.channels, npix = obs.shape.height * obs.shape.width;
  Mat m(c, npix);
  for (int p = 0; p < npix; ++p) {
    for (int ch = 0; ch < c; ++ch) m(ch, p) = obs.pixels[static_cast<size_t>(p) * c + ch];
  }
  return m;
}

Observation tensor_to_obs(const Mat& img, const ImageShape& shape) {
  std::vector<double> px(static_cast<size_t>(shape.pixel_count()));
  const int c = shape.channels, npix = shape.height * shape.width;
  for (int p = 0; p < npix; ++p) {
    for (int ch = 0; ch < c; ++ch) px[static_cast<size_t>(p) * c + ch] = std::clamp(img(ch, p), 0.0, 1.0);
  }
  return Observation(shape, std::move(px));
}

}  // namespace nn
}  // namespace latentslam

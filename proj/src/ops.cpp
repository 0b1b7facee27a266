// Copyright 2026 The DGNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace dgnet::ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs) {
  for (const Tensor<T>* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

[[noreturn]] void mismatch(const std::string& op, const std::string& what, std::size_t got,
                           std::size_t expected) {
  throw ShapeError(op + ": " + what + " is " + std::to_string(got) + ", expected " +
                   std::to_string(expected));
}

void require_rank(const std::string& op, const std::string& name, const Shape& shape,
                  std::size_t rank) {
  if (shape.size() != rank) {
    throw ShapeError(op + ": " + name + " must have rank " + std::to_string(rank) + ", got " +
                     shape_string(shape));
  }
}

struct ConvGeometry {
  std::size_t batch, in_ch, height, width;
  std::size_t out_ch, k, stride, pad;
  std::size_t out_h, out_w;

  std::size_t patch() const { return in_ch * k * k; }
  std::size_t out_plane() const { return out_h * out_w; }
  bool direct() const { return k == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col) {
  const std::size_t plane = g.out_plane();
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((c * g.k + ky) * g.k + kx) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.height) &&
                                ix < static_cast<long>(g.width);
            row[oy * g.out_w + ox] =
                inside ? image[(c * g.height + iy) * g.width + ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* image) {
  const std::size_t plane = g.out_plane();
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((c * g.k + ky) * g.k + kx) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
            image[(c * g.height + iy) * g.width + ix] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& kernel,
                 std::size_t stride, std::size_t padding) {
  const std::string op = "conv2d";
  require_rank(op, "input", input.shape(), 4);
  require_rank(op, "kernel", kernel.shape(), 4);
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (kernel.dim(2) != kernel.dim(3)) mismatch(op, "kernel width", kernel.dim(3), kernel.dim(2));
  if (kernel.dim(1) != input.dim(1)) mismatch(op, "kernel input channels (dim 1)", kernel.dim(1),
                                              input.dim(1));

  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3),
                 kernel.dim(0), kernel.dim(2), stride, padding, 0, 0};
  if (g.height + 2 * g.pad < g.k || g.width + 2 * g.pad < g.k) {
    throw ShapeError("conv2d: kernel extent " + std::to_string(g.k) +
                     " exceeds padded input " + shape_string(input.shape()));
  }
  g.out_h = (g.height + 2 * g.pad - g.k) / g.stride + 1;
  g.out_w = (g.width + 2 * g.pad - g.k) / g.stride + 1;

  Tensor<T> out(Shape{g.batch, g.out_ch, g.out_h, g.out_w});
  const std::size_t in_sample = g.in_ch * g.height * g.width;
  const std::size_t out_sample = g.out_ch * g.out_plane();

  Eigen::Map<const RowMat<T>> kmat(kernel.data().data(), g.out_ch, g.patch());
  std::vector<T> col(g.direct() ? 0 : g.patch() * g.out_plane());
  for (std::size_t b = 0; b < g.batch; ++b) {
    const T* image = input.data().data() + b * in_sample;
    const T* colp = image;
    if (!g.direct()) {
      im2col(image, g, col.data());
      colp = col.data();
    }
    Eigen::Map<const RowMat<T>> cmat(colp, g.patch(), g.out_plane());
    Eigen::Map<RowMat<T>> omat(out.mutable_data().data() + b * out_sample, g.out_ch,
                               g.out_plane());
    omat.noalias() = kmat * cmat;
  }

  if (tape.recording() && any_requires_grad({&input, &kernel})) {
    out.set_requires_grad(true);
    tape.record("conv2d", out, [input, kernel, out, g, in_sample, out_sample]() mutable {
      std::span<const T> gout = out.grad();
      Eigen::Map<const RowMat<T>> kmat(kernel.data().data(), g.out_ch, g.patch());
      std::vector<T> col(g.direct() ? 0 : g.patch() * g.out_plane());
      std::vector<T> dcol(g.patch() * g.out_plane());
      for (std::size_t b = 0; b < g.batch; ++b) {
        Eigen::Map<const RowMat<T>> gmat(gout.data() + b * out_sample, g.out_ch,
                                         g.out_plane());
        if (kernel.requires_grad()) {
          const T* image = input.data().data() + b * in_sample;
          const T* colp = image;
          if (!g.direct()) {
            im2col(image, g, col.data());
            colp = col.data();
          }
          Eigen::Map<const RowMat<T>> cmat(colp, g.patch(), g.out_plane());
          Eigen::Map<RowMat<T>> dk(kernel.grad_accumulator().data(), g.out_ch, g.patch());
          dk.noalias() += gmat * cmat.transpose();
        }
        if (input.requires_grad()) {
          T* dimage = input.grad_accumulator().data() + b * in_sample;
          if (g.direct()) {
            Eigen::Map<RowMat<T>> dmat(dimage, g.patch(), g.out_plane());
            dmat.noalias() += kmat.transpose() * gmat;
          } else {
            Eigen::Map<RowMat<T>> dmat(dcol.data(), g.patch(), g.out_plane());
            dmat.noalias() = kmat.transpose() * gmat;
            col2im_add(dcol.data(), g, dimage);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_channel_bias(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& bias) {
  const std::string op = "add_channel_bias";
  require_rank(op, "input", input.shape(), 4);
  require_rank(op, "bias", bias.shape(), 1);
  if (bias.dim(0) != input.dim(1)) mismatch(op, "bias length", bias.dim(0), input.dim(1));
  const std::size_t batch = input.dim(0), channels = input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);

  Tensor<T> out(input.shape());
  auto o = out.mutable_data();
  auto x = input.data();
  auto bv = bias.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) o[base + p] = x[base + p] + bv[c];
    }
  }

  if (tape.recording() && any_requires_grad({&input, &bias})) {
    out.set_requires_grad(true);
    tape.record(op, out, [input, bias, out, batch, channels, plane]() mutable {
      auto g = out.grad();
      if (input.requires_grad()) {
        auto dx = input.grad_accumulator();
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto db = bias.grad_accumulator();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (b * channels + c) * plane;
            T acc = 0;
            for (std::size_t p = 0; p < plane; ++p) acc += g[base + p];
            db[c] += acc;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> group_norm(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& gamma,
                     const Tensor<T>& beta, std::size_t groups, double eps) {
  const std::string op = "group_norm";
  require_rank(op, "input", input.shape(), 4);
  require_rank(op, "gamma", gamma.shape(), 1);
  require_rank(op, "beta", beta.shape(), 1);
  const std::size_t batch = input.dim(0), channels = input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);
  if (gamma.dim(0) != channels) mismatch(op, "gamma length", gamma.dim(0), channels);
  if (beta.dim(0) != channels) mismatch(op, "beta length", beta.dim(0), channels);
  if (groups == 0 || channels % groups != 0) {
    throw ShapeError(op + ": " + std::to_string(channels) + " channels do not split into " +
                     std::to_string(groups) + " groups");
  }
  const std::size_t per_group = channels / groups;
  const std::size_t span = per_group * plane;

  Tensor<T> out(input.shape());
  std::vector<T> normed(input.numel());
  std::vector<T> rstd(batch * groups);
  auto o = out.mutable_data();
  auto x = input.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t base = (b * channels + g * per_group) * plane;
      double mean = 0.0;
      for (std::size_t i = 0; i < span; ++i) mean += x[base + i];
      mean /= static_cast<double>(span);
      double var = 0.0;
      for (std::size_t i = 0; i < span; ++i) var += (x[base + i] - mean) * (x[base + i] - mean);
      var /= static_cast<double>(span);
      const double r = 1.0 / std::sqrt(var + eps);
      rstd[b * groups + g] = static_cast<T>(r);
      for (std::size_t i = 0; i < span; ++i) {
        const std::size_t c = g * per_group + i / plane;
        const T n = static_cast<T>((x[base + i] - mean) * r);
        normed[base + i] = n;
        o[base + i] = gv[c] * n + bv[c];
      }
    }
  }

  if (tape.recording() && any_requires_grad({&input, &gamma, &beta})) {
    out.set_requires_grad(true);
    tape.record(op, out, [input, gamma, beta, out, normed = std::move(normed), rstd = std::move(rstd),
                          batch, channels, groups, per_group, plane, span]() mutable {
      auto g = out.grad();
      auto gv = gamma.data();
      if (gamma.requires_grad() || beta.requires_grad()) {
        std::vector<T> dgamma(channels, T(0)), dbeta(channels, T(0));
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (b * channels + c) * plane;
            for (std::size_t p = 0; p < plane; ++p) {
              dgamma[c] += g[base + p] * normed[base + p];
              dbeta[c] += g[base + p];
            }
          }
        }
        if (gamma.requires_grad()) {
          auto d = gamma.grad_accumulator();
          for (std::size_t c = 0; c < channels; ++c) d[c] += dgamma[c];
        }
        if (beta.requires_grad()) {
          auto d = beta.grad_accumulator();
          for (std::size_t c = 0; c < channels; ++c) d[c] += dbeta[c];
        }
      }
      if (!input.requires_grad()) return;
      // dx = rstd * (dn - mean(dn) - n * mean(dn * n)) with dn = g * gamma.
      auto dx = input.grad_accumulator();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t grp = 0; grp < groups; ++grp) {
          const std::size_t base = (b * channels + grp * per_group) * plane;
          double mean_dn = 0.0, mean_dn_n = 0.0;
          for (std::size_t i = 0; i < span; ++i) {
            const double dn = g[base + i] * gv[grp * per_group + i / plane];
            mean_dn += dn;
            mean_dn_n += dn * normed[base + i];
          }
          mean_dn /= static_cast<double>(span);
          mean_dn_n /= static_cast<double>(span);
          const double r = rstd[b * groups + grp];
          for (std::size_t i = 0; i < span; ++i) {
            const double dn = g[base + i] * gv[grp * per_group + i / plane];
            dx[base + i] += static_cast<T>(r * (dn - mean_dn - normed[base + i] * mean_dn_n));
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(Tape<T>& tape, const Tensor<T>& input) {
  require_rank("global_avg_pool", "input", input.shape(), 4);
  const std::size_t batch = input.dim(0), channels = input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);
  const T inv = T(1) / static_cast<T>(plane);

  Tensor<T> out(Shape{batch, channels});
  auto x = input.data();
  auto o = out.mutable_data();
  for (std::size_t bc = 0; bc < batch * channels; ++bc) {
    T acc = 0;
    for (std::size_t p = 0; p < plane; ++p) acc += x[bc * plane + p];
    o[bc] = acc * inv;
  }

  if (tape.recording() && any_requires_grad({&input})) {
    out.set_requires_grad(true);
    tape.record("global_avg_pool", out, [input, out, batch, channels, plane, inv]() mutable {
      auto g = out.grad();
      auto dx = input.grad_accumulator();
      for (std::size_t bc = 0; bc < batch * channels; ++bc) {
        const T share = g[bc] * inv;
        for (std::size_t p = 0; p < plane; ++p) dx[bc * plane + p] += share;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> fully_connected(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight,
                          const Tensor<T>& bias) {
  const std::string op = "fully_connected";
  require_rank(op, "input", input.shape(), 2);
  require_rank(op, "weight", weight.shape(), 2);
  require_rank(op, "bias", bias.shape(), 1);
  if (weight.dim(0) != input.dim(1)) mismatch(op, "weight rows (dim 0)", weight.dim(0),
                                              input.dim(1));
  if (bias.dim(0) != weight.dim(1)) mismatch(op, "bias length", bias.dim(0), weight.dim(1));
  const std::size_t batch = input.dim(0), n_in = input.dim(1), n_out = weight.dim(1);

  Tensor<T> out(Shape{batch, n_out});
  auto x = input.data();
  auto w = weight.data();
  auto bv = bias.data();
  auto o = out.mutable_data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < n_out; ++j) {
      T acc = 0;
      for (std::size_t i = 0; i < n_in; ++i) acc += x[b * n_in + i] * w[i * n_out + j];
      o[b * n_out + j] = acc + bv[j];
    }
  }

  if (tape.recording() && any_requires_grad({&input, &weight, &bias})) {
    out.set_requires_grad(true);
    tape.record(op, out, [input, weight, bias, out, batch, n_in, n_out]() mutable {
      auto g = out.grad();
      auto x = input.data();
      auto w = weight.data();
      if (input.requires_grad()) {
        auto dx = input.grad_accumulator();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t i = 0; i < n_in; ++i) {
            T acc = 0;
            for (std::size_t j = 0; j < n_out; ++j) acc += g[b * n_out + j] * w[i * n_out + j];
            dx[b * n_in + i] += acc;
          }
        }
      }
      if (weight.requires_grad()) {
        auto dw = weight.grad_accumulator();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t i = 0; i < n_in; ++i) {
            const T xi = x[b * n_in + i];
            for (std::size_t j = 0; j < n_out; ++j) dw[i * n_out + j] += xi * g[b * n_out + j];
          }
        }
      }
      if (bias.requires_grad()) {
        auto db = bias.grad_accumulator();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t j = 0; j < n_out; ++j) db[j] += g[b * n_out + j];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> elementwise(Tape<T>& tape, const Tensor<T>& input, Activation kind) {
  Tensor<T> out(input.shape());
  auto x = input.data();
  auto o = out.mutable_data();
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < x.size(); ++i) o[i] = x[i] < T(0) ? T(0) : x[i];  // NaN passes through
  } else {
    const T lo = std::numeric_limits<T>::min();
    const T hi = std::nextafter(T(1), T(0));
    for (std::size_t i = 0; i < x.size(); ++i) {
      T s;
      if (x[i] >= T(0)) {
        s = T(1) / (T(1) + std::exp(-x[i]));
      } else {
        const T e = std::exp(x[i]);
        s = e / (T(1) + e);
      }
      o[i] = std::clamp(s, lo, hi);
    }
  }

  if (tape.recording() && any_requires_grad({&input})) {
    out.set_requires_grad(true);
    const char* name = kind == Activation::relu ? "relu" : "sigmoid";
    tape.record(name, out, [input, out, kind]() mutable {
      auto g = out.grad();
      auto x = input.data();
      auto y = out.data();
      auto dx = input.grad_accumulator();
      if (kind == Activation::relu) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (x[i] > T(0)) dx[i] += g[i];
        }
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * y[i] * (T(1) - y[i]);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> cross_entropy_smoothed(Tape<T>& tape, const Tensor<T>& logits,
                                 std::span<const int> labels, double smoothing) {
  const std::string op = "cross_entropy_smoothed";
  require_rank(op, "logits", logits.shape(), 2);
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) mismatch(op, "label count", labels.size(), batch);
  if (!(smoothing >= 0.0 && smoothing < 1.0)) {
    throw std::invalid_argument(op + ": smoothing must lie in [0,1)");
  }
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= classes) {
      throw std::out_of_range(op + ": label " + std::to_string(labels[b]) + " at sample " +
                              std::to_string(b) + " outside [0," + std::to_string(classes) +
                              ")");
    }
  }

  const T off = static_cast<T>(smoothing / static_cast<double>(classes));
  const T on = static_cast<T>(1.0 - smoothing) + off;
  std::vector<T> probs(batch * classes);
  auto z = logits.data();
  T total = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const T* row = z.data() + b * classes;
    const T peak = *std::max_element(row, row + classes);
    T norm = 0;
    for (std::size_t k = 0; k < classes; ++k) norm += std::exp(row[k] - peak);
    const T log_norm = std::log(norm) + peak;
    T loss = 0;
    for (std::size_t k = 0; k < classes; ++k) {
      const T logp = row[k] - log_norm;
      probs[b * classes + k] = std::exp(logp);
      const T target = static_cast<std::size_t>(labels[b]) == k ? on : off;
      loss -= target * logp;
    }
    total += loss;
  }
  Tensor<T> out = Tensor<T>::scalar(total / static_cast<T>(batch));

  if (tape.recording() && any_requires_grad({&logits})) {
    out.set_requires_grad(true);
    std::vector<int> owned(labels.begin(), labels.end());
    tape.record(op, out,
                [logits, out, probs = std::move(probs), owned = std::move(owned), batch, classes,
                 on, off]() mutable {
                  const T g = out.grad()[0] / static_cast<T>(batch);
                  auto dz = logits.grad_accumulator();
                  for (std::size_t b = 0; b < batch; ++b) {
                    for (std::size_t k = 0; k < classes; ++k) {
                      const T target = static_cast<std::size_t>(owned[b]) == k ? on : off;
                      dz[b * classes + k] += g * (probs[b * classes + k] - target);
                    }
                  }
                });
  }
  return out;
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()) + " differ");
  }
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.data()[i] + b.data()[i];
  if (tape.recording() && any_requires_grad({&a, &b})) {
    out.set_requires_grad(true);
    tape.record("add", out, [a, b, out]() mutable {
      auto g = out.grad();
      for (const Tensor<T>* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto d = t->grad_accumulator();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& input, T factor) {
  Tensor<T> out(input.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = input.data()[i] * factor;
  if (tape.recording() && any_requires_grad({&input})) {
    out.set_requires_grad(true);
    tape.record("scale", out, [input, out, factor]() mutable {
      auto g = out.grad();
      auto d = input.grad_accumulator();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * factor;
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& input, Shape shape) {
  if (shape_numel(shape) != input.numel()) {
    throw ShapeError("reshape: cannot view " + shape_string(input.shape()) + " as " +
                     shape_string(shape));
  }
  Tensor<T> out(std::move(shape), std::vector<T>(input.data().begin(), input.data().end()));
  if (tape.recording() && any_requires_grad({&input})) {
    out.set_requires_grad(true);
    tape.record("reshape", out, [input, out]() mutable {
      auto g = out.grad();
      auto d = input.grad_accumulator();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& input) {
  T acc = 0;
  for (T v : input.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (tape.recording() && any_requires_grad({&input})) {
    out.set_requires_grad(true);
    tape.record("sum", out, [input, out]() mutable {
      const T g = out.grad()[0];
      for (T& d : input.grad_accumulator()) d += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& input) {
  return scale(tape, sum(tape, input), T(1) / static_cast<T>(input.numel()));
}

template <typename T>
Tensor<T> weighted_sum(Tape<T>& tape, std::span<const Tensor<T>> inputs,
                       const Tensor<T>& weights) {
  const std::string op = "weighted_sum";
  require_rank(op, "weights", weights.shape(), 2);
  if (weights.dim(1) != inputs.size()) mismatch(op, "weight columns", weights.dim(1),
                                                inputs.size());
  const Tensor<T>* first = nullptr;
  for (const auto& t : inputs) {
    if (t.defined()) {
      first = &t;
      break;
    }
  }
  if (first == nullptr) throw std::invalid_argument(op + ": no defined input");
  const Shape shape = first->shape();
  for (const auto& t : inputs) {
    if (t.defined() && t.shape() != shape) {
      throw ShapeError(op + ": input shape " + shape_string(t.shape()) + " differs from " +
                       shape_string(shape));
    }
  }
  const std::size_t batch = shape[0];
  const std::size_t per_sample = shape_numel(shape) / batch;
  const std::size_t wrows = weights.dim(0);
  if (wrows != 1 && wrows != batch) mismatch(op, "weight rows", wrows, batch);
  const std::size_t n = inputs.size();

  Tensor<T> out(shape);
  auto o = out.mutable_data();
  auto w = weights.data();
  for (std::size_t b = 0; b < batch; ++b) {
    T* dst = o.data() + b * per_sample;
    const T* wrow = w.data() + (wrows == 1 ? 0 : b) * n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!inputs[i].defined()) continue;
      const T* src = inputs[i].data().data() + b * per_sample;
      const T wi = wrow[i];
      for (std::size_t p = 0; p < per_sample; ++p) dst[p] += wi * src[p];
    }
  }

  bool needs_grad = weights.requires_grad();
  for (const auto& t : inputs) needs_grad = needs_grad || (t.defined() && t.requires_grad());
  if (tape.recording() && needs_grad) {
    out.set_requires_grad(true);
    std::vector<Tensor<T>> held(inputs.begin(), inputs.end());
    tape.record(op, out, [held, weights, out, batch, per_sample, wrows, n]() mutable {
      auto g = out.grad();
      auto w = weights.data();
      for (std::size_t i = 0; i < n; ++i) {
        const Tensor<T>& x = held[i];
        if (!x.defined()) continue;
        if (x.requires_grad()) {
          auto dx = x.grad_accumulator();
          for (std::size_t b = 0; b < batch; ++b) {
            const T wi = w[(wrows == 1 ? 0 : b) * n + i];
            for (std::size_t p = 0; p < per_sample; ++p) {
              dx[b * per_sample + p] += wi * g[b * per_sample + p];
            }
          }
        }
        if (weights.requires_grad()) {
          auto dw = weights.grad_accumulator();
          auto xv = x.data();
          for (std::size_t b = 0; b < batch; ++b) {
            T acc = 0;
            for (std::size_t p = 0; p < per_sample; ++p) {
              acc += g[b * per_sample + p] * xv[b * per_sample + p];
            }
            dw[(wrows == 1 ? 0 : b) * n + i] += acc;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> gather_columns(Tape<T>& tape, std::span<const std::optional<ColumnRef<T>>> columns,
                         std::size_t batch) {
  const std::string op = "gather_columns";
  const std::size_t n = columns.size();
  if (n == 0) throw ShapeError(op + ": at least one column required");
  bool needs_grad = false;
  for (const auto& ref : columns) {
    if (!ref) continue;
    require_rank(op, "source", ref->source.shape(), 2);
    const std::size_t rows = ref->source.dim(0);
    if (rows != 1 && rows != batch) mismatch(op, "source rows", rows, batch);
    if (ref->column >= ref->source.dim(1)) mismatch(op, "column index", ref->column,
                                                    ref->source.dim(1));
    needs_grad = needs_grad || ref->source.requires_grad();
  }

  Tensor<T> out(Shape{batch, n});
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    if (!columns[i]) continue;
    const auto& ref = *columns[i];
    const std::size_t rows = ref.source.dim(0), width = ref.source.dim(1);
    for (std::size_t b = 0; b < batch; ++b) {
      o[b * n + i] = ref.source.data()[(rows == 1 ? 0 : b) * width + ref.column];
    }
  }

  if (tape.recording() && needs_grad) {
    out.set_requires_grad(true);
    std::vector<std::optional<ColumnRef<T>>> held(columns.begin(), columns.end());
    tape.record(op, out, [held, out, batch, n]() mutable {
      auto g = out.grad();
      for (std::size_t i = 0; i < n; ++i) {
        if (!held[i] || !held[i]->source.requires_grad()) continue;
        auto& ref = *held[i];
        const std::size_t rows = ref.source.dim(0), width = ref.source.dim(1);
        auto d = ref.source.grad_accumulator();
        for (std::size_t b = 0; b < batch; ++b) {
          d[(rows == 1 ? 0 : b) * width + ref.column] += g[b * n + i];
        }
      }
    });
  }
  return out;
}

#define DGNET_INSTANTIATE_OPS(T)                                                             \
  template Tensor<T> conv2d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,       \
                            std::size_t);                                                     \
  template Tensor<T> add_channel_bias(Tape<T>&, const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> group_norm(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                std::size_t, double);                                        \
  template Tensor<T> global_avg_pool(Tape<T>&, const Tensor<T>&);                            \
  template Tensor<T> fully_connected(Tape<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                     const Tensor<T>&);                                       \
  template Tensor<T> elementwise(Tape<T>&, const Tensor<T>&, Activation);                    \
  template Tensor<T> cross_entropy_smoothed(Tape<T>&, const Tensor<T>&, std::span<const int>, \
                                            double);                                          \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);                                   \
  template Tensor<T> reshape(Tape<T>&, const Tensor<T>&, Shape);                             \
  template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                        \
  template Tensor<T> mean(Tape<T>&, const Tensor<T>&);                                       \
  template Tensor<T> weighted_sum(Tape<T>&, std::span<const Tensor<T>>, const Tensor<T>&);   \
  template Tensor<T> gather_columns(Tape<T>&, std::span<const std::optional<ColumnRef<T>>>,  \
                                    std::size_t);

DGNET_INSTANTIATE_OPS(float)
DGNET_INSTANTIATE_OPS(double)

#undef DGNET_INSTANTIATE_OPS

}  // namespace dgnet::ops

// SPDX-License-Identifier: Apache-2.0
#include "cfmimo/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "cfmimo/errors.hpp"

namespace cfmimo::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidInput(what);
}

void require_same_shape(const Tape& tape, Var a, Var b, const char* op) {
  require(tape.shape(a) == tape.shape(b), std::string(op) + ": shape mismatch " + shape_string(tape.shape(a)) +
                                              " vs " + shape_string(tape.shape(b)));
}

// Adds `scale * upstream` elementwise into x's gradient, if x needs one.
void accumulate(Tape& tape, Var x, const Buffer& upstream, double factor = 1.0) {
  if (!tape.requires_grad(x)) return;
  auto& g = tape.grad_buffer(x);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * upstream[i];
}

template <typename Fn>
Var unary_elementwise(Tape& tape, Var x, Fn forward, std::function<double(double, double)> derivative) {
  const Tensor& in = tape.value(x);
  Tensor out(in.shape);
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  return tape.record(std::move(out), {x}, [x, derivative](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(x)) return;
    const auto& up = t.grad_of(self);
    const auto& xv = t.value(x).data;
    const auto& yv = t.value_of(self).data;
    auto& g = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up[i] * derivative(xv[i], yv[i]);
  });
}

}  // namespace

Var affine(Tape& tape, Var x, Var w, Var b) {
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(w);
  const Tensor& bv = tape.value(b);
  require(xv.rank() == 2 && wv.rank() == 2 && bv.rank() == 1, "affine: expects x[R,in], w[in,out], b[out]");
  const auto rows = xv.dim(0), in = xv.dim(1), out = wv.dim(1);
  require(wv.dim(0) == in && bv.dim(0) == out,
          "affine: incompatible shapes " + shape_string(xv.shape) + " " + shape_string(wv.shape));
  Tensor y({rows, out});
  {
    MapMat ym(y.data.data(), rows, out);
    ym.noalias() = ConstMapMat(xv.data.data(), rows, in) * ConstMapMat(wv.data.data(), in, out);
    ym.rowwise() += ConstMapVec(bv.data.data(), out).transpose();
  }
  return tape.record(std::move(y), {x, w, b}, [x, w, b, rows, in, out](Tape& t, std::uint32_t self) {
    const ConstMapMat up(t.grad_of(self).data(), rows, out);
    if (t.requires_grad(x)) {
      MapMat gx(t.grad_buffer(x).data(), rows, in);
      gx.noalias() += up * ConstMapMat(t.value(w).data.data(), in, out).transpose();
    }
    if (t.requires_grad(w)) {
      MapMat gw(t.grad_buffer(w).data(), in, out);
      gw.noalias() += ConstMapMat(t.value(x).data.data(), rows, in).transpose() * up;
    }
    if (t.requires_grad(b)) {
      MapVec gb(t.grad_buffer(b).data(), out);
      gb += up.colwise().sum().transpose();
    }
  });
}

Var leaky_relu(Tape& tape, Var x, double slope) {
  return unary_elementwise(
      tape, x, [slope](double v) { return v >= 0.0 ? v : slope * v; },
      [slope](double v, double) { return v >= 0.0 ? 1.0 : slope; });
}

Var relu(Tape& tape, Var x) {
  return unary_elementwise(
      tape, x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var neighbor_max(Tape& tape, Var x, std::size_t group) {
  const Tensor& xv = tape.value(x);
  require(xv.rank() == 2 && group > 0 && xv.dim(0) % group == 0, "neighbor_max: rows must be a multiple of group");
  const auto rows = xv.dim(0), feat = xv.dim(1);
  const auto groups = rows / group;
  Tensor y({rows, feat}, 0.0);
  // source row of each output element; rows == "no neighbor"
  std::vector<std::uint32_t> source(rows * feat, static_cast<std::uint32_t>(rows));
  if (group > 1) {
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t k = 0; k < group; ++k) {
        const std::size_t r = g * group + k;
        for (std::size_t f = 0; f < feat; ++f) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t arg = rows;
          for (std::size_t kp = 0; kp < group; ++kp) {
            if (kp == k) continue;
            const std::size_t rp = g * group + kp;
            const double v = xv.data[rp * feat + f];
            if (arg == rows || v > best) {
              best = v;
              arg = rp;
            }
          }
          y.data[r * feat + f] = best;
          source[r * feat + f] = static_cast<std::uint32_t>(arg);
        }
      }
    }
  }
  return tape.record(std::move(y), {x}, [x, feat, rows, source = std::move(source)](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(x)) return;
    const auto& up = t.grad_of(self);
    auto& g = t.grad_buffer(x);
    for (std::size_t e = 0; e < source.size(); ++e) {
      if (source[e] == rows) continue;
      g[source[e] * feat + e % feat] += up[e];
    }
  });
}

Var concat_features(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  require(av.rank() == 2 && bv.rank() == 2 && av.dim(0) == bv.dim(0), "concat_features: row mismatch");
  const auto rows = av.dim(0), fa = av.dim(1), fb = bv.dim(1);
  Tensor y({rows, fa + fb});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data.begin() + r * fa, fa, y.data.begin() + r * (fa + fb));
    std::copy_n(bv.data.begin() + r * fb, fb, y.data.begin() + r * (fa + fb) + fa);
  }
  return tape.record(std::move(y), {a, b}, [a, b, rows, fa, fb](Tape& t, std::uint32_t self) {
    const auto& up = t.grad_of(self);
    if (t.requires_grad(a)) {
      auto& g = t.grad_buffer(a);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t f = 0; f < fa; ++f) g[r * fa + f] += up[r * (fa + fb) + f];
    }
    if (t.requires_grad(b)) {
      auto& g = t.grad_buffer(b);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t f = 0; f < fb; ++f) g[r * fb + f] += up[r * (fa + fb) + fa + f];
    }
  });
}

Var conv2d_valid(Tape& tape, Var x, Var filters, Var bias) {
  const Tensor& xv = tape.value(x);
  const Tensor& fv = tape.value(filters);
  const Tensor& bv = tape.value(bias);
  require(xv.rank() == 4 && fv.rank() == 4 && bv.rank() == 1, "conv2d_valid: expects x[B,C,H,W], f[O,C,kh,kw], b[O]");
  const auto batch = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const auto cout = fv.dim(0), kh = fv.dim(2), kw = fv.dim(3);
  require(fv.dim(1) == cin && bv.dim(0) == cout, "conv2d_valid: channel mismatch");
  require(kh <= h && kw <= w, "conv2d_valid: filter " + shape_string(fv.shape) + " larger than input " +
                                  shape_string(xv.shape));
  const auto oh = h - kh + 1, ow = w - kw + 1;
  Tensor y({batch, cout, oh, ow});
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < cout; ++o) {
      double* out = &y.data[((n * cout + o) * oh) * ow];
      std::fill_n(out, oh * ow, bv.data[o]);
      for (std::size_t c = 0; c < cin; ++c) {
        const double* in = &xv.data[((n * cin + c) * h) * w];
        const double* f = &fv.data[((o * cin + c) * kh) * kw];
        for (std::size_t r = 0; r < kh; ++r)
          for (std::size_t s = 0; s < kw; ++s) {
            const double fw = f[r * kw + s];
            for (std::size_t i = 0; i < oh; ++i)
              for (std::size_t j = 0; j < ow; ++j) out[i * ow + j] += fw * in[(i + r) * w + j + s];
          }
      }
    }
  }
  return tape.record(std::move(y), {x, filters, bias},
                     [=](Tape& t, std::uint32_t self) {
                       const auto& up = t.grad_of(self);
                       const auto& xd = t.value(x).data;
                       const auto& fd = t.value(filters).data;
                       const bool gx_on = t.requires_grad(x), gf_on = t.requires_grad(filters);
                       double* gx = gx_on ? t.grad_buffer(x).data() : nullptr;
                       double* gf = gf_on ? t.grad_buffer(filters).data() : nullptr;
                       if (t.requires_grad(bias)) {
                         auto& gb = t.grad_buffer(bias);
                         for (std::size_t n = 0; n < batch; ++n)
                           for (std::size_t o = 0; o < cout; ++o)
                             for (std::size_t e = 0; e < oh * ow; ++e) gb[o] += up[(n * cout + o) * oh * ow + e];
                       }
                       for (std::size_t n = 0; n < batch; ++n) {
                         for (std::size_t o = 0; o < cout; ++o) {
                           const double* u = &up[((n * cout + o) * oh) * ow];
                           for (std::size_t c = 0; c < cin; ++c) {
                             const std::size_t in_off = ((n * cin + c) * h) * w;
                             const std::size_t f_off = ((o * cin + c) * kh) * kw;
                             for (std::size_t r = 0; r < kh; ++r)
                               for (std::size_t s = 0; s < kw; ++s) {
                                 double acc = 0.0;
                                 const double fw = fd[f_off + r * kw + s];
                                 for (std::size_t i = 0; i < oh; ++i)
                                   for (std::size_t j = 0; j < ow; ++j) {
                                     const double ug = u[i * ow + j];
                                     const std::size_t idx = in_off + (i + r) * w + j + s;
                                     acc += ug * xd[idx];
                                     if (gx_on) gx[idx] += ug * fw;
                                   }
                                 if (gf_on) gf[f_off + r * kw + s] += acc;
                               }
                           }
                         }
                       }
                     });
}

Var max_pool2x2(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  require(xv.rank() == 4, "max_pool2x2: expects [B,C,H,W]");
  const auto batch = xv.dim(0), ch = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t wh = std::min<std::size_t>(2, h), ww = std::min<std::size_t>(2, w);
  require(wh > 0 && ww > 0, "max_pool2x2: empty input");
  const auto oh = h / wh, ow = w / ww;
  Tensor y({batch, ch, oh, ow});
  std::vector<std::size_t> source(y.size());
  for (std::size_t p = 0; p < batch * ch; ++p) {
    const std::size_t in_off = p * h * w;
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t arg = in_off + (i * wh) * w + j * ww;
        double best = xv.data[arg];
        for (std::size_t r = 0; r < wh; ++r)
          for (std::size_t s = 0; s < ww; ++s) {
            const std::size_t idx = in_off + (i * wh + r) * w + j * ww + s;
            if (xv.data[idx] > best) {
              best = xv.data[idx];
              arg = idx;
            }
          }
        const std::size_t o = (p * oh + i) * ow + j;
        y.data[o] = best;
        source[o] = arg;
      }
  }
  return tape.record(std::move(y), {x}, [x, source = std::move(source)](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(x)) return;
    const auto& up = t.grad_of(self);
    auto& g = t.grad_buffer(x);
    for (std::size_t o = 0; o < source.size(); ++o) g[source[o]] += up[o];
  });
}

Var reshape(Tape& tape, Var x, Shape shape) {
  const Tensor& xv = tape.value(x);
  require(shape_size(shape) == xv.size(),
          "reshape: " + shape_string(xv.shape) + " cannot become " + shape_string(shape));
  Tensor y(std::move(shape), xv.data);
  return tape.record(std::move(y), {x}, [x](Tape& t, std::uint32_t self) { accumulate(t, x, t.grad_of(self)); });
}

Var flatten(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  require(xv.rank() >= 1, "flatten: scalar input");
  const auto batch = xv.dim(0);
  return reshape(tape, x, {batch, batch == 0 ? 0 : xv.size() / batch});
}

Var softmax_cross_entropy(Tape& tape, Var logits, std::span<const int> labels) {
  const Tensor& zv = tape.value(logits);
  require(zv.rank() == 2 && zv.dim(0) == labels.size() && zv.dim(0) > 0,
          "softmax_cross_entropy: expects logits [B,J] and B labels");
  const auto batch = zv.dim(0), classes = zv.dim(1);
  std::vector<double> probs = softmax_rows(zv);
  std::vector<int> lab(labels.begin(), labels.end());
  double loss = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    require(lab[n] >= 0 && static_cast<std::size_t>(lab[n]) < classes, "softmax_cross_entropy: label out of range");
    const double* z = &zv.data[n * classes];
    const double zmax = *std::max_element(z, z + classes);
    double s = 0.0;
    for (std::size_t j = 0; j < classes; ++j) s += std::exp(z[j] - zmax);
    loss += zmax + std::log(s) - z[lab[n]];
  }
  Tensor y({}, std::vector<double>{loss / static_cast<double>(batch)});
  return tape.record(std::move(y), {logits},
                     [logits, batch, classes, probs = std::move(probs), lab = std::move(lab)](Tape& t,
                                                                                             std::uint32_t self) {
                       if (!t.requires_grad(logits)) return;
                       const double up = t.grad_of(self)[0] / static_cast<double>(batch);
                       auto& g = t.grad_buffer(logits);
                       for (std::size_t n = 0; n < batch; ++n)
                         for (std::size_t j = 0; j < classes; ++j) {
                           const double onehot = static_cast<int>(j) == lab[n] ? 1.0 : 0.0;
                           g[n * classes + j] += up * (probs[n * classes + j] - onehot);
                         }
                     });
}

std::vector<double> softmax_rows(const Tensor& logits) {
  require(logits.rank() == 2, "softmax_rows: expects [B,J]");
  const auto batch = logits.dim(0), classes = logits.dim(1);
  std::vector<double> p(logits.size());
  for (std::size_t n = 0; n < batch; ++n) {
    const double* z = &logits.data[n * classes];
    const double zmax = *std::max_element(z, z + classes);
    double s = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      p[n * classes + j] = std::exp(z[j] - zmax);
      s += p[n * classes + j];
    }
    for (std::size_t j = 0; j < classes; ++j) p[n * classes + j] /= s;
  }
  return p;
}

Var frobenius_normalize(Tape& tape, Var x, std::size_t group, double scale) {
  const Tensor& xv = tape.value(x);
  require(xv.rank() == 2 && group > 0 && xv.dim(0) % group == 0,
          "frobenius_normalize: rows must be a multiple of group");
  const auto block = group * xv.dim(1);
  const auto groups = xv.dim(0) / group;
  std::vector<double> norms(groups);
  Tensor y(xv.shape);
  for (std::size_t g = 0; g < groups; ++g) {
    double ss = 0.0;
    for (std::size_t e = 0; e < block; ++e) ss += xv.data[g * block + e] * xv.data[g * block + e];
    const double n = std::sqrt(ss);
    if (!(n > 0.0) || !std::isfinite(n)) throw NumericalError("frobenius_normalize: zero or non-finite norm");
    norms[g] = n;
    for (std::size_t e = 0; e < block; ++e) y.data[g * block + e] = scale * xv.data[g * block + e] / n;
  }
  return tape.record(std::move(y), {x},
                     [x, block, groups, scale, norms = std::move(norms)](Tape& t, std::uint32_t self) {
                       if (!t.requires_grad(x)) return;
                       const auto& up = t.grad_of(self);
                       const auto& xd = t.value(x).data;
                       auto& gx = t.grad_buffer(x);
                       for (std::size_t g = 0; g < groups; ++g) {
                         const double n = norms[g];
                         double dot = 0.0;  // u . up with u = x / n
                         for (std::size_t e = 0; e < block; ++e) dot += xd[g * block + e] * up[g * block + e];
                         dot /= n;
                         for (std::size_t e = 0; e < block; ++e) {
                           const double u = xd[g * block + e] / n;
                           gx[g * block + e] += scale / n * (up[g * block + e] - u * dot);
                         }
                       }
                     });
}

Var complex_multiply(Tape& tape, Var a, Var b) {
  require_same_shape(tape, a, b, "complex_multiply");
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  require(av.rank() >= 1 && av.shape.back() == 2, "complex_multiply: trailing axis must be 2");
  Tensor y(av.shape);
  for (std::size_t p = 0; p < av.size(); p += 2) {
    const double ar = av[p], ai = av[p + 1], br = bv[p], bi = bv[p + 1];
    y[p] = ar * br - ai * bi;
    y[p + 1] = ar * bi + ai * br;
  }
  return tape.record(std::move(y), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const auto& up = t.grad_of(self);
    const auto& ad = t.value(a).data;
    const auto& bd = t.value(b).data;
    if (t.requires_grad(a)) {
      auto& g = t.grad_buffer(a);
      for (std::size_t p = 0; p < g.size(); p += 2) {
        g[p] += up[p] * bd[p] + up[p + 1] * bd[p + 1];
        g[p + 1] += -up[p] * bd[p + 1] + up[p + 1] * bd[p];
      }
    }
    if (t.requires_grad(b)) {
      auto& g = t.grad_buffer(b);
      for (std::size_t p = 0; p < g.size(); p += 2) {
        g[p] += up[p] * ad[p] + up[p + 1] * ad[p + 1];
        g[p + 1] += -up[p] * ad[p + 1] + up[p + 1] * ad[p];
      }
    }
  });
}

Var complex_inner(Tape& tape, Var h, Var w, std::size_t group) {
  require_same_shape(tape, h, w, "complex_inner");
  const Tensor& hv = tape.value(h);
  const Tensor& wv = tape.value(w);
  require(hv.rank() == 2 && hv.dim(1) % 2 == 0 && group > 0 && hv.dim(0) % group == 0,
          "complex_inner: expects [G*group, 2M]");
  const auto m = hv.dim(1) / 2, width = hv.dim(1);
  const auto groups = hv.dim(0) / group;
  Tensor y({groups, group, group, 2});
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t k = 0; k < group; ++k) {
      const double* hr = &hv.data[(g * group + k) * width];
      const double* hi = hr + m;
      for (std::size_t kp = 0; kp < group; ++kp) {
        const double* wr = &wv.data[(g * group + kp) * width];
        const double* wi = wr + m;
        double re = 0.0, im = 0.0;
        for (std::size_t e = 0; e < m; ++e) {
          re += hr[e] * wr[e] + hi[e] * wi[e];
          im += hr[e] * wi[e] - hi[e] * wr[e];
        }
        const std::size_t o = ((g * group + k) * group + kp) * 2;
        y.data[o] = re;
        y.data[o + 1] = im;
      }
    }
  return tape.record(std::move(y), {h, w}, [h, w, group, groups, m, width](Tape& t, std::uint32_t self) {
    const auto& up = t.grad_of(self);
    const auto& hd = t.value(h).data;
    const auto& wd = t.value(w).data;
    const bool gh_on = t.requires_grad(h), gw_on = t.requires_grad(w);
    double* gh = gh_on ? t.grad_buffer(h).data() : nullptr;
    double* gw = gw_on ? t.grad_buffer(w).data() : nullptr;
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t k = 0; k < group; ++k) {
        const std::size_t hrow = (g * group + k) * width;
        for (std::size_t kp = 0; kp < group; ++kp) {
          const std::size_t wrow = (g * group + kp) * width;
          const std::size_t o = ((g * group + k) * group + kp) * 2;
          const double a = up[o], b = up[o + 1];
          for (std::size_t e = 0; e < m; ++e) {
            const double hr = hd[hrow + e], hi = hd[hrow + m + e];
            const double wr = wd[wrow + e], wi = wd[wrow + m + e];
            if (gw_on) {
              gw[wrow + e] += a * hr - b * hi;
              gw[wrow + m + e] += a * hi + b * hr;
            }
            if (gh_on) {
              gh[hrow + e] += a * wr + b * wi;
              gh[hrow + m + e] += a * wi - b * wr;
            }
          }
        }
      }
  });
}

Var modulus_squared(Tape& tape, Var z) {
  const Tensor& zv = tape.value(z);
  require(zv.rank() >= 1 && zv.shape.back() == 2, "modulus_squared: trailing axis must be 2");
  Shape out_shape(zv.shape.begin(), zv.shape.end() - 1);
  Tensor y(out_shape);
  for (std::size_t p = 0; p < y.size(); ++p) y[p] = zv[2 * p] * zv[2 * p] + zv[2 * p + 1] * zv[2 * p + 1];
  return tape.record(std::move(y), {z}, [z](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(z)) return;
    const auto& up = t.grad_of(self);
    const auto& zd = t.value(z).data;
    auto& g = t.grad_buffer(z);
    for (std::size_t p = 0; p < up.size(); ++p) {
      g[2 * p] += 2.0 * zd[2 * p] * up[p];
      g[2 * p + 1] += 2.0 * zd[2 * p + 1] * up[p];
    }
  });
}

Var log2_1p(Tape& tape, Var x) {
  for (double v : tape.value(x).data) {
    if (!(v >= 0.0)) throw InvalidInput("log2_1p: negative or NaN argument");
  }
  constexpr double inv_ln2 = 1.0 / std::numbers::ln2;
  return unary_elementwise(
      tape, x, [](double v) { return std::log1p(v) * inv_ln2; },
      [](double v, double) { return inv_ln2 / (1.0 + v); });
}

Var sum(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  double s = 0.0;
  for (double v : xv.data) s += v;
  return tape.record(Tensor({}, std::vector<double>{s}), {x}, [x](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(x)) return;
    const double up = t.grad_of(self)[0];
    for (auto& g : t.grad_buffer(x)) g += up;
  });
}

Var mean(Tape& tape, Var x) {
  const auto n = tape.value(x).size();
  require(n > 0, "mean: empty tensor");
  return scale(tape, sum(tape, x), 1.0 / static_cast<double>(n));
}

Var sum_last(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  require(xv.rank() >= 1, "sum_last: scalar input");
  const auto n = xv.shape.back();
  Shape out_shape(xv.shape.begin(), xv.shape.end() - 1);
  Tensor y(out_shape);
  for (std::size_t p = 0; p < y.size(); ++p) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += xv[p * n + j];
    y[p] = s;
  }
  return tape.record(std::move(y), {x}, [x, n](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(x)) return;
    const auto& up = t.grad_of(self);
    auto& g = t.grad_buffer(x);
    for (std::size_t p = 0; p < up.size(); ++p)
      for (std::size_t j = 0; j < n; ++j) g[p * n + j] += up[p];
  });
}

Var diagonal(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  require(xv.rank() >= 2 && xv.shape[xv.rank() - 1] == xv.shape[xv.rank() - 2], "diagonal: expects [..., n, n]");
  const auto n = xv.shape.back();
  Shape out_shape(xv.shape.begin(), xv.shape.end() - 1);
  Tensor y(out_shape);
  const auto blocks = y.size() / n;
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t j = 0; j < n; ++j) y[b * n + j] = xv[(b * n + j) * n + j];
  return tape.record(std::move(y), {x}, [x, n, blocks](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(x)) return;
    const auto& up = t.grad_of(self);
    auto& g = t.grad_buffer(x);
    for (std::size_t b = 0; b < blocks; ++b)
      for (std::size_t j = 0; j < n; ++j) g[(b * n + j) * n + j] += up[b * n + j];
  });
}

Var broadcast_last(Tape& tape, Var x, std::size_t n) {
  const Tensor& xv = tape.value(x);
  Shape out_shape = xv.shape;
  out_shape.push_back(n);
  Tensor y(out_shape);
  for (std::size_t p = 0; p < xv.size(); ++p)
    for (std::size_t j = 0; j < n; ++j) y[p * n + j] = xv[p];
  return tape.record(std::move(y), {x}, [x, n](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(x)) return;
    const auto& up = t.grad_of(self);
    auto& g = t.grad_buffer(x);
    for (std::size_t p = 0; p < g.size(); ++p)
      for (std::size_t j = 0; j < n; ++j) g[p] += up[p * n + j];
  });
}

Var add(Tape& tape, Var a, Var b) {
  require_same_shape(tape, a, b, "add");
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  Tensor y(av.shape);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  return tape.record(std::move(y), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    accumulate(t, a, t.grad_of(self));
    accumulate(t, b, t.grad_of(self));
  });
}

Var sub(Tape& tape, Var a, Var b) {
  require_same_shape(tape, a, b, "sub");
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  Tensor y(av.shape);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  return tape.record(std::move(y), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    accumulate(t, a, t.grad_of(self));
    accumulate(t, b, t.grad_of(self), -1.0);
  });
}

Var mul(Tape& tape, Var a, Var b) {
  require_same_shape(tape, a, b, "mul");
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  Tensor y(av.shape);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return tape.record(std::move(y), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const auto& up = t.grad_of(self);
    if (t.requires_grad(a)) {
      const auto& bd = t.value(b).data;
      auto& g = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += up[i] * bd[i];
    }
    if (t.requires_grad(b)) {
      const auto& ad = t.value(a).data;
      auto& g = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += up[i] * ad[i];
    }
  });
}

Var div(Tape& tape, Var a, Var b) {
  require_same_shape(tape, a, b, "div");
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  Tensor y(av.shape);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] / bv[i];
  return tape.record(std::move(y), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const auto& up = t.grad_of(self);
    const auto& bd = t.value(b).data;
    if (t.requires_grad(a)) {
      auto& g = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += up[i] / bd[i];
    }
    if (t.requires_grad(b)) {
      const auto& ad = t.value(a).data;
      auto& g = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= up[i] * ad[i] / (bd[i] * bd[i]);
    }
  });
}

Var scale(Tape& tape, Var x, double factor) {
  const Tensor& xv = tape.value(x);
  Tensor y(xv.shape);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = factor * xv[i];
  return tape.record(std::move(y), {x},
                     [x, factor](Tape& t, std::uint32_t self) { accumulate(t, x, t.grad_of(self), factor); });
}

Var add_scalar(Tape& tape, Var x, double c) {
  const Tensor& xv = tape.value(x);
  Tensor y(xv.shape);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] + c;
  return tape.record(std::move(y), {x}, [x](Tape& t, std::uint32_t self) { accumulate(t, x, t.grad_of(self)); });
}

}  // namespace cfmimo::ad

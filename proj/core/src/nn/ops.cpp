#include "pcbct/nn/ops.hpp"

#include <cmath>

// Small products would otherwise take Eigen's coefficient-wise path, whose
// reductions peel according to pointer alignment and so are not bit-stable
// across allocations.
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#include <Eigen/Core>

#include "pcbct/errors.hpp"

namespace pcbct::nn {
namespace {

using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

void require(bool ok, const char* msg) {
  if (!ok) throw ParameterError(msg);
}

struct ConvGeometry {
  int cin, h, w, k, stride, pad, ho, wo;
  int rows() const { return cin * k * k; }
  int cols() const { return ho * wo; }
};

void im2col(const Scalar* x, const ConvGeometry& g, Scalar* col) {
  for (int c = 0; c < g.cin; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        Scalar* dst = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * g.cols();
        const Scalar* src = x + static_cast<std::size_t>(c) * g.h * g.w;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          Scalar* d = dst + static_cast<std::size_t>(oy) * g.wo;
          if (iy < 0 || iy >= g.h) {
            for (int ox = 0; ox < g.wo; ++ox) d[ox] = 0.0;
            continue;
          }
          const Scalar* s = src + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            d[ox] = (ix >= 0 && ix < g.w) ? s[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const Scalar* col, const ConvGeometry& g, Scalar* x) {
  for (int c = 0; c < g.cin; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const Scalar* src = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * g.cols();
        Scalar* dst = x + static_cast<std::size_t>(c) * g.h * g.w;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const Scalar* s = src + static_cast<std::size_t>(oy) * g.wo;
          Scalar* d = dst + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) d[ix] += s[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Shape xs = x->shape();
  const Shape ws = weight->shape();
  require(ws.h == ws.w, "conv2d: kernel must be square");
  require(xs.c == ws.c, "conv2d: input channels do not match weight");
  require(stride >= 1 && pad >= 0, "conv2d: invalid stride or padding");
  if (bias) require(bias->value.numel() == static_cast<std::size_t>(ws.n), "conv2d: bias size mismatch");
  ConvGeometry g{xs.c, xs.h, xs.w, ws.h, stride, pad, 0, 0};
  g.ho = (xs.h + 2 * pad - g.k) / stride + 1;
  g.wo = (xs.w + 2 * pad - g.k) / stride + 1;
  require(g.ho > 0 && g.wo > 0, "conv2d: output would be empty");
  const int cout = ws.n;
  const bool direct = g.k == 1 && stride == 1 && pad == 0;

  Tensor out(Shape{xs.n, cout, g.ho, g.wo});
  const std::size_t col_size = static_cast<std::size_t>(g.rows()) * g.cols();
  const bool recording = grad_enabled() && (x->requires_grad || weight->requires_grad || (bias && bias->requires_grad));
  auto cols = std::make_shared<std::vector<Scalar>>(direct ? 0 : (recording ? xs.n : 1) * col_size);

  ConstMatMap wmat(weight->value.data(), cout, g.rows());
  for (int n = 0; n < xs.n; ++n) {
    const Scalar* colp = x->value.sample(n);
    if (!direct) {
      Scalar* dst = cols->data() + (recording ? static_cast<std::size_t>(n) * col_size : 0);
      im2col(x->value.sample(n), g, dst);
      colp = dst;
    }
    MatMap o(out.sample(n), cout, g.cols());
    o.noalias() = wmat * ConstMatMap(colp, g.rows(), g.cols());
    if (bias) {
      for (int c = 0; c < cout; ++c) o.row(c).array() += bias->value[c];
    }
  }

  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(bias);
  return make_result(std::move(out), std::move(inputs), [g, cout, direct, col_size, cols](Node& self) {
    const Var& xin = self.inputs[0];
    const Var& w = self.inputs[1];
    const int n_batch = xin->shape().n;
    ConstMatMap wmat(w->value.data(), cout, g.rows());
    std::vector<Scalar> dcol(direct ? 0 : col_size);
    for (int n = 0; n < n_batch; ++n) {
      ConstMatMap go(self.grad.sample(n), cout, g.cols());
      const Scalar* colp = direct ? xin->value.sample(n) : cols->data() + static_cast<std::size_t>(n) * col_size;
      if (w->requires_grad) {
        MatMap gw(w->grad_buffer().data(), cout, g.rows());
        gw.noalias() += go * ConstMatMap(colp, g.rows(), g.cols()).transpose();
      }
      if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
        Tensor& gb = self.inputs[2]->grad_buffer();
        for (int c = 0; c < cout; ++c) {
          const Scalar* row = self.grad.sample(n) + static_cast<std::size_t>(c) * g.cols();
          Scalar acc = 0.0;
          for (int i = 0; i < g.cols(); ++i) acc += row[i];
          gb[c] += acc;
        }
      }
      if (xin->requires_grad) {
        if (direct) {
          MatMap gx(xin->grad_buffer().sample(n), g.rows(), g.cols());
          gx.noalias() += wmat.transpose() * go;
        } else {
          MatMap dc(dcol.data(), g.rows(), g.cols());
          dc.noalias() = wmat.transpose() * go;
          col2im_add(dcol.data(), g, xin->grad_buffer().sample(n));
        }
      }
    }
  });
}

Var upsample_nearest2x(const Var& x) {
  const Shape s = x->shape();
  Tensor out(Shape{s.n, s.c, s.h * 2, s.w * 2});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < 2 * s.h; ++y)
        for (int xx = 0; xx < 2 * s.w; ++xx) out.at(n, c, y, xx) = x->value.at(n, c, y / 2, xx / 2);
  return make_result(std::move(out), {x}, [](Node& self) {
    const Var& in = self.inputs[0];
    const Shape s = in->shape();
    Tensor& g = in->grad_buffer();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < 2 * s.h; ++y)
          for (int xx = 0; xx < 2 * s.w; ++xx) g.at(n, c, y / 2, xx / 2) += self.grad.at(n, c, y, xx);
  });
}

Var add(const Var& a, const Var& b) {
  require(a->shape() == b->shape(), "add: shape mismatch");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (const Var& in : self.inputs) {
      if (!in->requires_grad) continue;
      Tensor& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require(a->shape() == b->shape(), "sub: shape mismatch");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (self.inputs[0]->requires_grad) {
      Tensor& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
    if (self.inputs[1]->requires_grad) {
      Tensor& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var scale(const Var& x, Scalar factor) {
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= factor;
  return make_result(std::move(out), {x}, [factor](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += factor * self.grad[i];
  });
}

Var add_channelwise(const Var& x, const Var& v) {
  const Shape s = x->shape();
  require(v->shape() == (Shape{s.n, s.c, 1, 1}), "add_channelwise: vector must be (N, C, 1, 1)");
  Tensor out = x->value;
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      Scalar* p = out.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      const Scalar add = v->value[static_cast<std::size_t>(n) * s.c + c];
      for (std::size_t i = 0; i < plane; ++i) p[i] += add;
    }
  return make_result(std::move(out), {x, v}, [](Node& self) {
    const Shape s = self.shape();
    const std::size_t plane = s.plane();
    if (self.inputs[0]->requires_grad) {
      Tensor& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
    if (self.inputs[1]->requires_grad) {
      Tensor& g = self.inputs[1]->grad_buffer();
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          const Scalar* p = self.grad.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
          Scalar acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) acc += p[i];
          g[static_cast<std::size_t>(n) * s.c + c] += acc;
        }
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Shape sa = a->shape();
  const Shape sb = b->shape();
  require(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w, "concat_channels: spatial shape mismatch");
  Tensor out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t na = a->value.sample_size();
  const std::size_t nb = b->value.sample_size();
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a->value.sample(n), na, out.sample(n));
    std::copy_n(b->value.sample(n), nb, out.sample(n) + na);
  }
  return make_result(std::move(out), {a, b}, [na, nb](Node& self) {
    const int batch = self.shape().n;
    for (int k = 0; k < 2; ++k) {
      const Var& in = self.inputs[k];
      if (!in->requires_grad) continue;
      Tensor& g = in->grad_buffer();
      const std::size_t len = k == 0 ? na : nb;
      const std::size_t off = k == 0 ? 0 : na;
      for (int n = 0; n < batch; ++n) {
        const Scalar* src = self.grad.sample(n) + off;
        Scalar* dst = g.sample(n);
        for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
      }
    }
  });
}

Var silu(const Var& x) {
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const Scalar v = out[i];
    out[i] = v / (1.0 + std::exp(-v));
  }
  return make_result(std::move(out), {x}, [](Node& self) {
    const Var& in = self.inputs[0];
    Tensor& g = in->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const Scalar v = in->value[i];
      const Scalar s = 1.0 / (1.0 + std::exp(-v));
      g[i] += self.grad[i] * s * (1.0 + v * (1.0 - s));
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const Scalar s = self.value[i];
      g[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, Scalar eps) {
  const Shape s = x->shape();
  require(groups >= 1 && s.c % groups == 0, "group_norm: channels not divisible by groups");
  require(gamma->value.numel() == static_cast<std::size_t>(s.c) && beta->value.numel() == static_cast<std::size_t>(s.c),
          "group_norm: affine parameter size mismatch");
  const int cg = s.c / groups;
  const std::size_t plane = s.plane();
  const std::size_t m = static_cast<std::size_t>(cg) * plane;

  auto xhat = std::make_shared<Tensor>(s);
  auto inv_std = std::make_shared<std::vector<Scalar>>(static_cast<std::size_t>(s.n) * groups);
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int gi = 0; gi < groups; ++gi) {
      const std::size_t off = (static_cast<std::size_t>(n) * s.c + static_cast<std::size_t>(gi) * cg) * plane;
      const Scalar* p = x->value.data() + off;
      Scalar mean = 0.0;
      for (std::size_t i = 0; i < m; ++i) mean += p[i];
      mean /= static_cast<Scalar>(m);
      Scalar var = 0.0;
      for (std::size_t i = 0; i < m; ++i) var += (p[i] - mean) * (p[i] - mean);
      var /= static_cast<Scalar>(m);
      const Scalar is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[static_cast<std::size_t>(n) * groups + gi] = is;
      for (std::size_t i = 0; i < m; ++i) {
        const int c = gi * cg + static_cast<int>(i / plane);
        const Scalar xh = (p[i] - mean) * is;
        (*xhat)[off + i] = xh;
        out[off + i] = xh * gamma->value[c] + beta->value[c];
      }
    }
  }
  return make_result(std::move(out), {x, gamma, beta}, [groups, cg, plane, m, xhat, inv_std](Node& self) {
    const Shape s = self.shape();
    const Var& xin = self.inputs[0];
    const Var& gm = self.inputs[1];
    const Var& bt = self.inputs[2];
    for (int n = 0; n < s.n; ++n) {
      for (int gi = 0; gi < groups; ++gi) {
        const std::size_t off = (static_cast<std::size_t>(n) * s.c + static_cast<std::size_t>(gi) * cg) * plane;
        Scalar sum_dxh = 0.0;
        Scalar sum_dxh_xh = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const int c = gi * cg + static_cast<int>(i / plane);
          const Scalar dy = self.grad[off + i];
          const Scalar xh = (*xhat)[off + i];
          if (gm->requires_grad) gm->grad_buffer()[c] += dy * xh;
          if (bt->requires_grad) bt->grad_buffer()[c] += dy;
          const Scalar dxh = dy * gm->value[c];
          sum_dxh += dxh;
          sum_dxh_xh += dxh * xh;
        }
        if (!xin->requires_grad) continue;
        Tensor& gx = xin->grad_buffer();
        const Scalar is = (*inv_std)[static_cast<std::size_t>(n) * groups + gi];
        const Scalar inv_m = 1.0 / static_cast<Scalar>(m);
        for (std::size_t i = 0; i < m; ++i) {
          const int c = gi * cg + static_cast<int>(i / plane);
          const Scalar dxh = self.grad[off + i] * gm->value[c];
          gx[off + i] += is * (dxh - inv_m * sum_dxh - (*xhat)[off + i] * inv_m * sum_dxh_xh);
        }
      }
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Shape xs = x->shape();
  const Shape ws = weight->shape();
  const int din = xs.c * xs.h * xs.w;
  require(ws.c * ws.h * ws.w == din, "linear: input width does not match weight");
  const int dout = ws.n;
  Tensor out(Shape{xs.n, dout, 1, 1});
  ConstMatMap xm(x->value.data(), xs.n, din);
  ConstMatMap wm(weight->value.data(), dout, din);
  MatMap om(out.data(), xs.n, dout);
  om.noalias() = xm * wm.transpose();
  if (bias)
    for (int n = 0; n < xs.n; ++n)
      for (int j = 0; j < dout; ++j) om(n, j) += bias->value[j];
  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(bias);
  return make_result(std::move(out), std::move(inputs), [din, dout](Node& self) {
    const Var& xin = self.inputs[0];
    const Var& w = self.inputs[1];
    const int batch = xin->shape().n;
    ConstMatMap go(self.grad.data(), batch, dout);
    if (xin->requires_grad) {
      MatMap gx(xin->grad_buffer().data(), batch, din);
      gx.noalias() += go * ConstMatMap(w->value.data(), dout, din);
    }
    if (w->requires_grad) {
      MatMap gw(w->grad_buffer().data(), dout, din);
      gw.noalias() += go.transpose() * ConstMatMap(xin->value.data(), batch, din);
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      Tensor& gb = self.inputs[2]->grad_buffer();
      for (int j = 0; j < dout; ++j) {
        Scalar acc = 0.0;
        for (int i = 0; i < batch; ++i) acc += go(i, j);
        gb[j] += acc;
      }
    }
  });
}

Var sum_squared_error(const Var& a, const Var& b, Scalar factor) {
  require(a->shape() == b->shape(), "sum_squared_error: shape mismatch");
  Scalar acc = 0.0;
  for (std::size_t i = 0; i < a->value.numel(); ++i) {
    const Scalar d = a->value[i] - b->value[i];
    acc += d * d;
  }
  return make_result(Tensor(Shape{1, 1, 1, 1}, factor * acc), {a, b}, [factor](Node& self) {
    const Var& pa = self.inputs[0];
    const Var& pb = self.inputs[1];
    const Scalar g = self.grad[0] * 2.0 * factor;
    for (std::size_t i = 0; i < pa->value.numel(); ++i) {
      const Scalar d = g * (pa->value[i] - pb->value[i]);
      if (pa->requires_grad) pa->grad_buffer()[i] += d;
      if (pb->requires_grad) pb->grad_buffer()[i] -= d;
    }
  });
}

Var straight_through(const Var& x, const Tensor& replacement) {
  require(x->shape() == replacement.shape(), "straight_through: shape mismatch");
  return make_result(replacement, {x}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

}  // namespace pcbct::nn

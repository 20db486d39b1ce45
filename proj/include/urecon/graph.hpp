#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstring>
#include <functional>
#include <variant>
#include <vector>

#include "urecon/errors.hpp"
#include "urecon/fft.hpp"
#include "urecon/tensor.hpp"

// Reverse-mode automatic differentiation over dense double tensors.
// Define-by-run: every operation appends a node and evaluates immediately;
// backward walks the tape in exact reverse append order. Complex images are
// carried as [2,H,W] tensors (real plane, imaginary plane).

namespace urecon::ad {

using NodeId = int;
constexpr NodeId kNoNode = -1;

enum class Op {
  Leaf,
  Add,
  Sub,
  Mul,      // elementwise
  CMul,     // complex Hadamard on [2,H,W]
  Scale,    // constant scalar multiple
  SMul,     // scalar node * tensor node
  Div,      // scalar / scalar
  DivSafe,  // scalar / scalar with 0/0 -> 0 (converged CG iterations)
  Sqrt,
  Softplus,
  Abs,
  Relu,
  Dot,     // sum(x*y) -> scalar
  SumAll,  // sum(x) -> scalar
  Concat,  // channel concatenation of [C_i,H,W]
  Conv2d,  // same-padded stride-1 cross-correlation
  AvgPool2,
  Upsample2,
  FftBitrev,  // bit-reversal permutation along one axis (involution)
  FftStage,   // one radix-2 butterfly stage along one axis
};

struct ConvSpec {
  std::size_t c_in = 0, c_out = 0, kh = 0, kw = 0, h = 0, w = 0;
};

struct FftSpec {
  bool cols = false;   // transform along height instead of width
  std::size_t m = 0;   // butterfly half-block (FftStage only)
  int sign = -1;       // -1 forward, +1 inverse
};

struct Node {
  Op op = Op::Leaf;
  std::vector<NodeId> in;
  Tensor val;
  bool needs_grad = false;
  std::variant<std::monostate, double, ConvSpec, FftSpec> aux;
};

namespace detail {

using MatRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

// col is [c_in*kh*kw, h*w] row-major, one row per (c,dy,dx).
inline void im2col(const double* x, const ConvSpec& s, double* col) {
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(s.kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(s.kw / 2);
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(s.h);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(s.w);
  double* out = col;
  for (std::size_t c = 0; c < s.c_in; ++c) {
    const double* plane = x + c * s.h * s.w;
    for (std::size_t dy = 0; dy < s.kh; ++dy) {
      for (std::size_t dx = 0; dx < s.kw; ++dx) {
        const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(dy) - ph;
        const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - pw;
        for (std::ptrdiff_t y = 0; y < h; ++y) {
          const std::ptrdiff_t sy = y + oy;
          if (sy < 0 || sy >= h) {
            std::memset(out, 0, sizeof(double) * s.w);
            out += w;
            continue;
          }
          const double* src = plane + sy * w;
          for (std::ptrdiff_t x2 = 0; x2 < w; ++x2) {
            const std::ptrdiff_t sx = x2 + ox;
            *out++ = (sx < 0 || sx >= w) ? 0.0 : src[sx];
          }
        }
      }
    }
  }
}

// Scatter-add transpose of im2col.
inline void col2im_add(const double* col, const ConvSpec& s, double* gx) {
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(s.kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(s.kw / 2);
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(s.h);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(s.w);
  const double* in = col;
  for (std::size_t c = 0; c < s.c_in; ++c) {
    double* plane = gx + c * s.h * s.w;
    for (std::size_t dy = 0; dy < s.kh; ++dy) {
      for (std::size_t dx = 0; dx < s.kw; ++dx) {
        const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(dy) - ph;
        const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - pw;
        for (std::ptrdiff_t y = 0; y < h; ++y) {
          const std::ptrdiff_t sy = y + oy;
          if (sy < 0 || sy >= h) {
            in += w;
            continue;
          }
          double* dst = plane + sy * w;
          for (std::ptrdiff_t x2 = 0; x2 < w; ++x2) {
            const std::ptrdiff_t sx = x2 + ox;
            if (sx >= 0 && sx < w) dst[sx] += in[x2];
          }
          in += w;
        }
      }
    }
  }
}

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace detail

class Graph {
 public:
  const Tensor& val(NodeId id) const { return nodes_[id].val; }
  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(NodeId id) const { return nodes_[id].needs_grad; }

  NodeId leaf(Tensor t) {
    Node n;
    n.op = Op::Leaf;
    n.needs_grad = t.requires_grad;
    n.val = std::move(t);
    return push(std::move(n), /*check=*/true);
  }

  NodeId constant(Tensor t) {
    t.requires_grad = false;
    return leaf(std::move(t));
  }

  NodeId add(NodeId a, NodeId b) { return binary(Op::Add, a, b); }
  NodeId sub(NodeId a, NodeId b) { return binary(Op::Sub, a, b); }
  NodeId mul(NodeId a, NodeId b) { return binary(Op::Mul, a, b); }

  NodeId cmul(NodeId a, NodeId b) {
    require_complex(a, "cmul");
    require_complex(b, "cmul");
    if (!val(a).same_shape(val(b)))
      throw ShapeError("cmul shape mismatch " + shape_str(val(a).shape) +
                       " vs " + shape_str(val(b).shape));
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    Tensor out(x.shape);
    const std::size_t n = x.size() / 2;
    const double *ar = x.ptr(), *ai = x.ptr() + n;
    const double *br = y.ptr(), *bi = y.ptr() + n;
    double *or_ = out.ptr(), *oi = out.ptr() + n;
    for (std::size_t i = 0; i < n; ++i) {
      or_[i] = ar[i] * br[i] - ai[i] * bi[i];
      oi[i] = ar[i] * bi[i] + ai[i] * br[i];
    }
    return push(make(Op::CMul, {a, b}, std::move(out)));
  }

  NodeId scale(NodeId a, double c) {
    Tensor out(val(a).shape);
    const Tensor& x = val(a);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = c * x[i];
    Node n = make(Op::Scale, {a}, std::move(out));
    n.aux = c;
    return push(std::move(n));
  }

  NodeId smul(NodeId s, NodeId x) {
    require_scalar(s, "smul");
    const double sv = val(s)[0];
    Tensor out(val(x).shape);
    const Tensor& xv = val(x);
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = sv * xv[i];
    return push(make(Op::SMul, {s, x}, std::move(out)));
  }

  NodeId div(NodeId a, NodeId b, bool safe = false) {
    require_scalar(a, "div");
    require_scalar(b, "div");
    const double num = val(a)[0], den = val(b)[0];
    Tensor out({1});
    if (safe && num == 0.0 && den == 0.0)
      out[0] = 0.0;
    else
      out[0] = num / den;
    return push(make(safe ? Op::DivSafe : Op::Div, {a, b}, std::move(out)));
  }

  NodeId sqrt_(NodeId a) {
    Tensor out(val(a).shape);
    const Tensor& x = val(a);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::sqrt(x[i]);
    return push(make(Op::Sqrt, {a}, std::move(out)));
  }

  NodeId softplus(NodeId a) {
    Tensor out(val(a).shape);
    const Tensor& x = val(a);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = detail::softplus(x[i]);
    return push(make(Op::Softplus, {a}, std::move(out)));
  }

  NodeId abs_(NodeId a) {
    Tensor out(val(a).shape);
    const Tensor& x = val(a);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::fabs(x[i]);
    return push(make(Op::Abs, {a}, std::move(out)));
  }

  NodeId relu(NodeId a) {
    Tensor out(val(a).shape);
    const Tensor& x = val(a);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    return push(make(Op::Relu, {a}, std::move(out)));
  }

  NodeId dot(NodeId a, NodeId b) {
    if (!val(a).same_shape(val(b)))
      throw ShapeError("dot shape mismatch");
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
    Tensor out({1});
    out[0] = acc;
    return push(make(Op::Dot, {a, b}, std::move(out)));
  }

  NodeId sum_all(NodeId a) {
    const Tensor& x = val(a);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
    Tensor out({1});
    out[0] = acc;
    return push(make(Op::SumAll, {a}, std::move(out)));
  }

  NodeId concat(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ContractError("concat needs at least one input");
    const auto& first = val(parts[0]).shape;
    if (first.size() != 3) throw ShapeError("concat expects [C,H,W] inputs");
    std::size_t c_total = 0;
    for (NodeId p : parts) {
      const auto& s = val(p).shape;
      if (s.size() != 3 || s[1] != first[1] || s[2] != first[2])
        throw ShapeError("concat spatial shape mismatch");
      c_total += s[0];
    }
    Tensor out({c_total, first[1], first[2]});
    std::size_t off = 0;
    for (NodeId p : parts) {
      const Tensor& x = val(p);
      std::memcpy(out.ptr() + off, x.ptr(), sizeof(double) * x.size());
      off += x.size();
    }
    return push(make(Op::Concat, parts, std::move(out)));
  }

  // Same-padded stride-1 cross-correlation. x [C_in,H,W], k [C_out,C_in,kh,kw],
  // bias [C_out] or kNoNode.
  NodeId conv2d(NodeId x, NodeId k, NodeId bias = kNoNode) {
    const auto& xs = val(x).shape;
    const auto& ks = val(k).shape;
    if (xs.size() != 3 || ks.size() != 4)
      throw ShapeError("conv2d expects x [C,H,W] and k [Co,Ci,kh,kw]");
    if (ks[1] != xs[0])
      throw ShapeError("conv2d channel mismatch: input has " +
                       std::to_string(xs[0]) + ", kernel expects " +
                       std::to_string(ks[1]));
    if (ks[2] % 2 == 0 || ks[3] % 2 == 0)
      throw ContractError("conv2d kernel dims must be odd");
    ConvSpec s{ks[1], ks[0], ks[2], ks[3], xs[1], xs[2]};
    if (bias != kNoNode && val(bias).size() != s.c_out)
      throw ShapeError("conv2d bias size mismatch");

    const std::size_t hw = s.h * s.w;
    const std::size_t kk = s.c_in * s.kh * s.kw;
    Tensor out({s.c_out, s.h, s.w});
    detail::MapRM om(out.ptr(), static_cast<Eigen::Index>(s.c_out),
                     static_cast<Eigen::Index>(hw));
    detail::CMapRM km(val(k).ptr(), static_cast<Eigen::Index>(s.c_out),
                      static_cast<Eigen::Index>(kk));
    if (s.kh == 1 && s.kw == 1) {
      detail::CMapRM xm(val(x).ptr(), static_cast<Eigen::Index>(s.c_in),
                        static_cast<Eigen::Index>(hw));
      om.noalias() = km * xm;
    } else {
      std::vector<double> col(kk * hw);
      detail::im2col(val(x).ptr(), s, col.data());
      detail::CMapRM cm(col.data(), static_cast<Eigen::Index>(kk),
                        static_cast<Eigen::Index>(hw));
      om.noalias() = km * cm;
    }
    if (bias != kNoNode) {
      const Tensor& b = val(bias);
      for (std::size_t c = 0; c < s.c_out; ++c) {
        double* p = out.ptr() + c * hw;
        for (std::size_t i = 0; i < hw; ++i) p[i] += b[c];
      }
    }
    std::vector<NodeId> in{x, k};
    if (bias != kNoNode) in.push_back(bias);
    Node n = make(Op::Conv2d, in, std::move(out));
    n.aux = s;
    return push(std::move(n));
  }

  NodeId avgpool2(NodeId a) {
    const auto& s = val(a).shape;
    if (s.size() != 3 || s[1] % 2 || s[2] % 2)
      throw ContractError("avgpool2 needs [C,H,W] with even H, W");
    const std::size_t c = s[0], h = s[1], w = s[2];
    Tensor out({c, h / 2, w / 2});
    const Tensor& x = val(a);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h / 2; ++y)
        for (std::size_t xx = 0; xx < w / 2; ++xx) {
          const double* p = x.ptr() + (ch * h + 2 * y) * w + 2 * xx;
          out[(ch * (h / 2) + y) * (w / 2) + xx] =
              0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
        }
    return push(make(Op::AvgPool2, {a}, std::move(out)));
  }

  NodeId upsample2(NodeId a) {
    const auto& s = val(a).shape;
    if (s.size() != 3) throw ShapeError("upsample2 expects [C,H,W]");
    const std::size_t c = s[0], h = s[1], w = s[2];
    Tensor out({c, 2 * h, 2 * w});
    const Tensor& x = val(a);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx) {
          const double v = x[(ch * h + y) * w + xx];
          double* p = out.ptr() + (ch * 2 * h + 2 * y) * 2 * w + 2 * xx;
          p[0] = p[1] = p[2 * w] = p[2 * w + 1] = v;
        }
    return push(make(Op::Upsample2, {a}, std::move(out)));
  }

  NodeId fft_bitrev(NodeId a, bool cols) {
    require_complex(a, "fft_bitrev");
    Tensor out = val(a);
    const auto& s = out.shape;
    double* re = out.ptr();
    double* im = out.ptr() + s[1] * s[2];
    if (cols)
      fft::bitrev_cols(re, im, s[1], s[2]);
    else
      fft::bitrev_rows(re, im, s[1], s[2]);
    Node n = make(Op::FftBitrev, {a}, std::move(out));
    n.aux = FftSpec{cols, 0, 0};
    return push(std::move(n));
  }

  NodeId fft_stage(NodeId a, bool cols, std::size_t m, int sign) {
    require_complex(a, "fft_stage");
    Tensor out = val(a);
    const auto& s = out.shape;
    double* re = out.ptr();
    double* im = out.ptr() + s[1] * s[2];
    if (cols)
      fft::stage_cols(re, im, s[1], s[2], m, sign);
    else
      fft::stage_rows(re, im, s[1], s[2], m, sign);
    Node n = make(Op::FftStage, {a}, std::move(out));
    n.aux = FftSpec{cols, m, sign};
    return push(std::move(n));
  }

  // Orthonormal 2-D FFT of a [2,H,W] node, every butterfly stage recorded.
  NodeId fft2(NodeId a, int sign) {
    const auto& s = val(a).shape;
    require_complex(a, "fft2");
    const std::size_t h = s[1], w = s[2];
    if (!fft::is_pow2(h) || !fft::is_pow2(w))
      throw ContractError("fft2 requires power-of-two dimensions");
    NodeId id = fft_bitrev(a, /*cols=*/false);
    for (std::size_t m = 1; m < w; m *= 2) id = fft_stage(id, false, m, sign);
    id = fft_bitrev(id, /*cols=*/true);
    for (std::size_t m = 1; m < h; m *= 2) id = fft_stage(id, true, m, sign);
    return scale(id, 1.0 / std::sqrt(static_cast<double>(h * w)));
  }

  // Gradients of `loss` (a scalar node) with respect to every node that
  // requires grad, indexed by node id. Parameter leaves the loss does not
  // depend on get explicit zero gradients.
  std::vector<Tensor> backward(NodeId loss) const {
    if (val(loss).size() != 1)
      throw ContractError("backward requires a scalar loss node");
    std::vector<Tensor> grads(nodes_.size());
    grads[loss] = Tensor({1});
    grads[loss][0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
      if (grads[id].size() == 0) continue;
      if (!nodes_[id].needs_grad) continue;
      propagate(id, grads);
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].op == Op::Leaf && nodes_[i].val.requires_grad &&
          grads[i].size() == 0)
        grads[i] = Tensor(nodes_[i].val.shape);
    return grads;
  }

 private:
  std::vector<Node> nodes_;

  Node make(Op op, std::vector<NodeId> in, Tensor out) const {
    Node n;
    n.op = op;
    n.in = std::move(in);
    bool ng = false;
    for (NodeId i : n.in) ng = ng || nodes_[i].needs_grad;
    n.needs_grad = ng;
    n.val = std::move(out);
    return n;
  }

  NodeId push(Node n, bool check = true) {
    if (check && !n.val.all_finite())
      throw NumericError("non-finite value produced by graph op");
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  NodeId binary(Op op, NodeId a, NodeId b) {
    if (!val(a).same_shape(val(b)))
      throw ShapeError("elementwise op shape mismatch " +
                       shape_str(val(a).shape) + " vs " +
                       shape_str(val(b).shape));
    const Tensor& x = val(a);
    const Tensor& y = val(b);
    Tensor out(x.shape);
    switch (op) {
      case Op::Add:
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
        break;
      case Op::Sub:
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
        break;
      case Op::Mul:
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
        break;
      default:
        throw ContractError("not a binary op");
    }
    return push(make(op, {a, b}, std::move(out)));
  }

  void require_scalar(NodeId id, const char* who) const {
    if (val(id).size() != 1)
      throw ShapeError(std::string(who) + " expects a scalar node");
  }

  void require_complex(NodeId id, const char* who) const {
    const auto& s = val(id).shape;
    if (s.size() != 3 || s[0] != 2)
      throw ShapeError(std::string(who) + " expects a [2,H,W] tensor");
  }

  static void accumulate(Tensor& slot, const Tensor& add,
                         const std::vector<std::size_t>& shape) {
    if (slot.size() == 0) {
      slot = add;
      return;
    }
    (void)shape;
    for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += add[i];
  }

  void add_grad(std::vector<Tensor>& grads, NodeId target, Tensor g) const {
    if (!nodes_[target].needs_grad) return;
    if (!g.all_finite())
      throw NumericError("non-finite gradient produced in backward");
    accumulate(grads[target], g, nodes_[target].val.shape);
  }

  void propagate(NodeId id, std::vector<Tensor>& grads) const {
    const Node& n = nodes_[id];
    const Tensor& g = grads[id];
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add: {
        add_grad(grads, n.in[0], g);
        add_grad(grads, n.in[1], g);
        break;
      }
      case Op::Sub: {
        add_grad(grads, n.in[0], g);
        Tensor gb(g.shape);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] = -g[i];
        add_grad(grads, n.in[1], std::move(gb));
        break;
      }
      case Op::Mul: {
        const Tensor& x = val(n.in[0]);
        const Tensor& y = val(n.in[1]);
        if (nodes_[n.in[0]].needs_grad) {
          Tensor ga(g.shape);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * y[i];
          add_grad(grads, n.in[0], std::move(ga));
        }
        if (nodes_[n.in[1]].needs_grad) {
          Tensor gb(g.shape);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * x[i];
          add_grad(grads, n.in[1], std::move(gb));
        }
        break;
      }
      case Op::CMul: {
        const std::size_t m = g.size() / 2;
        const double *gr = g.ptr(), *gi = g.ptr() + m;
        for (int side = 0; side < 2; ++side) {
          const NodeId tgt = n.in[side];
          if (!nodes_[tgt].needs_grad) continue;
          const Tensor& other = val(n.in[1 - side]);
          const double *br = other.ptr(), *bi = other.ptr() + m;
          Tensor ga(g.shape);
          double *or_ = ga.ptr(), *oi = ga.ptr() + m;
          // grad = g * conj(other)
          for (std::size_t i = 0; i < m; ++i) {
            or_[i] = gr[i] * br[i] + gi[i] * bi[i];
            oi[i] = gi[i] * br[i] - gr[i] * bi[i];
          }
          add_grad(grads, tgt, std::move(ga));
        }
        break;
      }
      case Op::Scale: {
        const double c = std::get<double>(n.aux);
        Tensor ga(g.shape);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = c * g[i];
        add_grad(grads, n.in[0], std::move(ga));
        break;
      }
      case Op::SMul: {
        const double sv = val(n.in[0])[0];
        const Tensor& x = val(n.in[1]);
        if (nodes_[n.in[0]].needs_grad) {
          double acc = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x[i];
          Tensor gs({1});
          gs[0] = acc;
          add_grad(grads, n.in[0], std::move(gs));
        }
        if (nodes_[n.in[1]].needs_grad) {
          Tensor gx(g.shape);
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] = sv * g[i];
          add_grad(grads, n.in[1], std::move(gx));
        }
        break;
      }
      case Op::Div:
      case Op::DivSafe: {
        const double num = val(n.in[0])[0];
        const double den = val(n.in[1])[0];
        if (n.op == Op::DivSafe && num == 0.0 && den == 0.0) break;
        if (nodes_[n.in[0]].needs_grad) {
          Tensor ga({1});
          ga[0] = g[0] / den;
          add_grad(grads, n.in[0], std::move(ga));
        }
        if (nodes_[n.in[1]].needs_grad) {
          Tensor gb({1});
          gb[0] = -g[0] * num / (den * den);
          add_grad(grads, n.in[1], std::move(gb));
        }
        break;
      }
      case Op::Sqrt: {
        const Tensor& y = n.val;
        Tensor ga(g.shape);
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] = 0.5 * g[i] / y[i];
        add_grad(grads, n.in[0], std::move(ga));
        break;
      }
      case Op::Softplus: {
        const Tensor& x = val(n.in[0]);
        Tensor ga(g.shape);
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] = g[i] * detail::sigmoid(x[i]);
        add_grad(grads, n.in[0], std::move(ga));
        break;
      }
      case Op::Abs: {
        const Tensor& x = val(n.in[0]);
        Tensor ga(g.shape);
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] = x[i] > 0.0 ? g[i] : (x[i] < 0.0 ? -g[i] : 0.0);
        add_grad(grads, n.in[0], std::move(ga));
        break;
      }
      case Op::Relu: {
        const Tensor& x = val(n.in[0]);
        Tensor ga(g.shape);
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] = x[i] > 0.0 ? g[i] : 0.0;
        add_grad(grads, n.in[0], std::move(ga));
        break;
      }
      case Op::Dot: {
        const double gs = g[0];
        for (int side = 0; side < 2; ++side) {
          const NodeId tgt = n.in[side];
          if (!nodes_[tgt].needs_grad) continue;
          const Tensor& other = val(n.in[1 - side]);
          Tensor ga(other.shape);
          for (std::size_t i = 0; i < other.size(); ++i)
            ga[i] = gs * other[i];
          add_grad(grads, tgt, std::move(ga));
        }
        break;
      }
      case Op::SumAll: {
        const double gs = g[0];
        Tensor ga(val(n.in[0]).shape, gs);
        add_grad(grads, n.in[0], std::move(ga));
        break;
      }
      case Op::Concat: {
        std::size_t off = 0;
        for (NodeId p : n.in) {
          const Tensor& x = val(p);
          if (nodes_[p].needs_grad) {
            Tensor ga(x.shape);
            std::memcpy(ga.ptr(), g.ptr() + off, sizeof(double) * x.size());
            add_grad(grads, p, std::move(ga));
          }
          off += x.size();
        }
        break;
      }
      case Op::Conv2d: {
        const ConvSpec& s = std::get<ConvSpec>(n.aux);
        const std::size_t hw = s.h * s.w;
        const std::size_t kk = s.c_in * s.kh * s.kw;
        detail::CMapRM gm(g.ptr(), static_cast<Eigen::Index>(s.c_out),
                          static_cast<Eigen::Index>(hw));
        if (n.in.size() > 2 && nodes_[n.in[2]].needs_grad) {
          Tensor gb({s.c_out});
          for (std::size_t c = 0; c < s.c_out; ++c)
            gb[c] = gm.row(static_cast<Eigen::Index>(c)).sum();
          add_grad(grads, n.in[2], std::move(gb));
        }
        const bool wants_x = nodes_[n.in[0]].needs_grad;
        const bool wants_k = nodes_[n.in[1]].needs_grad;
        if (!wants_x && !wants_k) break;
        detail::CMapRM km(val(n.in[1]).ptr(),
                          static_cast<Eigen::Index>(s.c_out),
                          static_cast<Eigen::Index>(kk));
        if (s.kh == 1 && s.kw == 1) {
          detail::CMapRM xm(val(n.in[0]).ptr(),
                            static_cast<Eigen::Index>(s.c_in),
                            static_cast<Eigen::Index>(hw));
          if (wants_k) {
            Tensor gk(val(n.in[1]).shape);
            detail::MapRM gkm(gk.ptr(), static_cast<Eigen::Index>(s.c_out),
                              static_cast<Eigen::Index>(kk));
            gkm.noalias() = gm * xm.transpose();
            add_grad(grads, n.in[1], std::move(gk));
          }
          if (wants_x) {
            Tensor gx(val(n.in[0]).shape);
            detail::MapRM gxm(gx.ptr(), static_cast<Eigen::Index>(s.c_in),
                              static_cast<Eigen::Index>(hw));
            gxm.noalias() = km.transpose() * gm;
            add_grad(grads, n.in[0], std::move(gx));
          }
        } else {
          // im2col is recomputed from the saved input rather than cached.
          std::vector<double> col(kk * hw);
          detail::im2col(val(n.in[0]).ptr(), s, col.data());
          detail::CMapRM cm(col.data(), static_cast<Eigen::Index>(kk),
                            static_cast<Eigen::Index>(hw));
          if (wants_k) {
            Tensor gk(val(n.in[1]).shape);
            detail::MapRM gkm(gk.ptr(), static_cast<Eigen::Index>(s.c_out),
                              static_cast<Eigen::Index>(kk));
            gkm.noalias() = gm * cm.transpose();
            add_grad(grads, n.in[1], std::move(gk));
          }
          if (wants_x) {
            std::vector<double> gcol(kk * hw);
            detail::MapRM gcm(gcol.data(), static_cast<Eigen::Index>(kk),
                              static_cast<Eigen::Index>(hw));
            gcm.noalias() = km.transpose() * gm;
            Tensor gx(val(n.in[0]).shape);
            detail::col2im_add(gcol.data(), s, gx.ptr());
            add_grad(grads, n.in[0], std::move(gx));
          }
        }
        break;
      }
      case Op::AvgPool2: {
        const auto& xs = val(n.in[0]).shape;
        const std::size_t c = xs[0], h = xs[1], w = xs[2];
        Tensor gx(xs);
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t y = 0; y < h / 2; ++y)
            for (std::size_t xx = 0; xx < w / 2; ++xx) {
              const double v = 0.25 * g[(ch * (h / 2) + y) * (w / 2) + xx];
              double* p = gx.ptr() + (ch * h + 2 * y) * w + 2 * xx;
              p[0] = p[1] = p[w] = p[w + 1] = v;
            }
        add_grad(grads, n.in[0], std::move(gx));
        break;
      }
      case Op::Upsample2: {
        const auto& xs = val(n.in[0]).shape;
        const std::size_t c = xs[0], h = xs[1], w = xs[2];
        Tensor gx(xs);
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx) {
              const double* p =
                  g.ptr() + (ch * 2 * h + 2 * y) * 2 * w + 2 * xx;
              gx[(ch * h + y) * w + xx] = p[0] + p[1] + p[2 * w] + p[2 * w + 1];
            }
        add_grad(grads, n.in[0], std::move(gx));
        break;
      }
      case Op::FftBitrev: {
        const FftSpec& s = std::get<FftSpec>(n.aux);
        Tensor gx = g;
        const auto& sh = gx.shape;
        double* re = gx.ptr();
        double* im = gx.ptr() + sh[1] * sh[2];
        if (s.cols)
          fft::bitrev_cols(re, im, sh[1], sh[2]);
        else
          fft::bitrev_rows(re, im, sh[1], sh[2]);
        add_grad(grads, n.in[0], std::move(gx));
        break;
      }
      case Op::FftStage: {
        const FftSpec& s = std::get<FftSpec>(n.aux);
        Tensor gx = g;
        const auto& sh = gx.shape;
        double* re = gx.ptr();
        double* im = gx.ptr() + sh[1] * sh[2];
        if (s.cols)
          fft::stage_cols(re, im, sh[1], sh[2], s.m, s.sign, /*adjoint=*/true);
        else
          fft::stage_rows(re, im, sh[1], sh[2], s.m, s.sign, /*adjoint=*/true);
        add_grad(grads, n.in[0], std::move(gx));
        break;
      }
    }
  }
};

// Worst-case relative error between an analytic gradient and central finite
// differences of f around p. Denominator max(|analytic|, |numeric|, 1e-12).
inline double finite_diff_check(const std::function<double(const Tensor&)>& f,
                                const Tensor& p, const Tensor& analytic,
                                double h) {
  if (h <= 0.0) throw ContractError("finite_diff_check requires h > 0");
  if (!p.same_shape(analytic))
    throw ShapeError("finite_diff_check gradient shape mismatch");
  double worst = 0.0;
  Tensor probe = p;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    const double num = (fp - fm) / (2.0 * h);
    const double ana = analytic[i];
    const double denom =
        std::max({std::fabs(ana), std::fabs(num), 1e-12});
    worst = std::max(worst, std::fabs(num - ana) / denom);
  }
  return worst;
}

}  // namespace urecon::ad

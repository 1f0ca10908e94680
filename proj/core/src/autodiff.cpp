#include "cmp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kernels.hpp"

namespace cmp {

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  if (check_finite_ && !value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  bool needs = false;
  for (Var v : inputs) {
    if (!v.valid() || v.id >= nodes_.size()) {
      throw std::out_of_range(std::string("invalid input handle passed to ") + op);
    }
    needs = needs || nodes_[v.id].requires_grad;
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.has_grad) return n.grad;
  return Tensor(n.value.shape());
}

Tensor& Tape::grad_accumulator(Var v) {
  Node& n = nodes_.at(v.id);
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  const Node& root = nodes_.at(loss.id);
  if (root.value.size() != 1) {
    throw ShapeError("backward requires a one-element loss, got " + root.value.shape_string());
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  grad_accumulator(loss).fill(1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
    if (check_finite_ && !n.grad.all_finite()) {
      throw NumericError("non-finite gradient at tape node " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_leaf) grad_accumulator(Var{static_cast<std::uint32_t>(i)});
  }
}

// ---------------------------------------------------------------------------
// helpers

namespace {

// Gradient buffer for v, or nullptr when v does not need one.
double* grad_of(Tape& t, Var v) {
  if (!t.requires_grad(v)) return nullptr;
  return t.grad_accumulator(v).raw();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

std::string shapes(const char* op, const Tensor& a, const Tensor& b) {
  return std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
         b.shape_string();
}

// m x n view of a rank <= 2 tensor used as a matmul operand.
struct MatView {
  std::size_t rows;
  std::size_t cols;
};

using kernels::gemm_nn;
using kernels::gemm_nt;
using kernels::gemm_tn;

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

void check_segments(const char* op, std::span<const std::uint32_t> segment_of, std::size_t n) {
  for (std::uint32_t s : segment_of) {
    if (s >= n) {
      throw std::out_of_range(std::string(op) + ": segment id " + std::to_string(s) +
                              " out of range for " + std::to_string(n) + " segments");
    }
  }
}

void check_edges(const char* op, const EdgeIndex& edges, std::size_t rows) {
  require(edges.src.size() == edges.dst.size(),
          std::string(op) + ": edge src/dst length mismatch");
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edges.src[e] >= rows || edges.dst[e] >= rows || edges.dst[e] >= edges.num_nodes) {
      throw std::out_of_range(std::string(op) + ": edge " + std::to_string(e) +
                              " references a node out of range");
    }
  }
}

// Shared elementwise binary op with one-element broadcast.
template <class Fwd, class Bwd>
Var binary(Tape& t, const char* op, Var a, Var b, Fwd fwd, Bwd bwd) {
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  const bool xs = x.size() == 1 && y.size() != 1;
  const bool ys = y.size() == 1 && x.size() != 1;
  require(xs || ys || x.same_shape(y) || (x.size() == 1 && y.size() == 1), shapes(op, x, y));
  Tensor out(xs ? y.shape() : x.shape());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(x[xs ? 0 : i], y[ys ? 0 : i]);
  const Var in[] = {a, b};
  return t.record(op, std::move(out), in, [a, b, xs, ys, bwd](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    const Tensor& y = tp.value(b);
    double* ga = grad_of(tp, a);
    double* gb = grad_of(tp, b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double xv = x[xs ? 0 : i];
      const double yv = y[ys ? 0 : i];
      double da = 0.0;
      double db = 0.0;
      bwd(xv, yv, g[i], da, db);
      if (ga) ga[xs ? 0 : i] += da;
      if (gb) gb[ys ? 0 : i] += db;
    }
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise

Var add(Tape& t, Var a, Var b) {
  return binary(
      t, "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

Var sub(Tape& t, Var a, Var b) {
  return binary(
      t, "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Var mul(Tape& t, Var a, Var b) {
  return binary(
      t, "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Var scale(Tape& t, Var a, double factor) {
  const Tensor& x = t.value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = factor * x[i];
  const Var in[] = {a};
  return t.record("scale", std::move(out), in, [a, factor](Tape& tp, const Tensor& g) {
    double* ga = grad_of(tp, a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
}

Var add_scalar(Tape& t, Var a, double offset) {
  const Tensor& x = t.value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + offset;
  const Var in[] = {a};
  return t.record("add_scalar", std::move(out), in, [a](Tape& tp, const Tensor& g) {
    double* ga = grad_of(tp, a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var leaky_relu(Tape& t, Var a, double slope) {
  const Tensor& x = t.value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] >= 0.0 ? x[i] : slope * x[i];
  const Var in[] = {a};
  return t.record("leaky_relu", std::move(out), in, [a, slope](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    double* ga = grad_of(tp, a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] >= 0.0 ? g[i] : slope * g[i];
  });
}

Var sigmoid(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = stable_sigmoid(x[i]);
  const Var in[] = {a};
  auto y = std::make_shared<Tensor>(out);
  return t.record("sigmoid", std::move(out), in, [a, y](Tape& tp, const Tensor& g) {
    double* ga = grad_of(tp, a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*y)[i] * (1.0 - (*y)[i]);
  });
}

Var softplus(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = stable_softplus(x[i]);
  const Var in[] = {a};
  return t.record("softplus", std::move(out), in, [a](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    double* ga = grad_of(tp, a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * stable_sigmoid(x[i]);
  });
}

// ---------------------------------------------------------------------------
// reductions and linear algebra

Var sum(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  double s = 0.0;
  for (double v : x.data()) s += v;
  const Var in[] = {a};
  return t.record("sum", Tensor::scalar(s), in, [a](Tape& tp, const Tensor& g) {
    double* ga = grad_of(tp, a);
    const std::size_t n = tp.value(a).size();
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[0];
  });
}

Var mean(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  require(x.size() > 0, "mean of an empty tensor");
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  const Var in[] = {a};
  return t.record("mean", Tensor::scalar(s * inv), in, [a, inv](Tape& tp, const Tensor& g) {
    double* ga = grad_of(tp, a);
    const std::size_t n = tp.value(a).size();
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[0] * inv;
  });
}

Var matmul(Tape& t, Var a, Var b) {
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  require(x.rank() >= 1 && x.rank() <= 2 && y.rank() >= 1 && y.rank() <= 2,
          shapes("matmul", x, y));
  // A vector on the left is a row, on the right a column.
  const MatView va = x.rank() == 2 ? MatView{x.rows(), x.cols()} : MatView{1, x.size()};
  const MatView vb = y.rank() == 2 ? MatView{y.rows(), y.cols()} : MatView{y.size(), 1};
  require(va.cols == vb.rows, shapes("matmul", x, y));
  const std::size_t m = va.rows, k = va.cols, n = vb.cols;
  Tensor::Shape shape;
  if (x.rank() == 2) shape.push_back(m);
  if (y.rank() == 2) shape.push_back(n);
  Tensor out(shape);
  gemm_nn(x.raw(), y.raw(), out.raw(), m, k, n);
  const Var in[] = {a, b};
  return t.record("matmul", std::move(out), in, [a, b, m, k, n](Tape& tp, const Tensor& g) {
    if (double* ga = grad_of(tp, a)) gemm_nt(g.raw(), tp.value(b).raw(), ga, m, k, n);
    if (double* gb = grad_of(tp, b)) gemm_tn(tp.value(a).raw(), g.raw(), gb, m, k, n);
  });
}

Var transpose(Tape& t, Var a) {
  const Var in[] = {a};
  return t.record("transpose", t.value(a).transposed(), in, [a](Tape& tp, const Tensor& g) {
    double* ga = grad_of(tp, a);
    const std::size_t r = g.rows(), c = g.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[j * r + i] += g(i, j);
  });
}

Var symmetrize(Tape& t, Var a) {
  const Tensor& x = t.value(a);
  require(x.rank() == 2 && x.rows() == x.cols(),
          "symmetrize requires a square matrix, got " + x.shape_string());
  const std::size_t d = x.rows();
  Tensor out = Tensor::matrix(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) = 0.5 * (x(i, j) + x(j, i));
  const Var in[] = {a};
  return t.record("symmetrize", std::move(out), in, [a, d](Tape& tp, const Tensor& g) {
    double* ga = grad_of(tp, a);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += 0.5 * (g(i, j) + g(j, i));
  });
}

Var add_row_bias(Tape& t, Var x, Var bias) {
  const Tensor& xv = t.value(x);
  const Tensor& bv = t.value(bias);
  require(xv.rank() == 2 && bv.size() == xv.cols(), shapes("add_row_bias", xv, bv));
  Tensor out = xv;
  const std::size_t n = xv.rows(), d = xv.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) += bv[j];
  const Var in[] = {x, bias};
  return t.record("add_row_bias", std::move(out), in, [x, bias, n, d](Tape& tp, const Tensor& g) {
    if (double* gx = grad_of(tp, x))
      for (std::size_t i = 0; i < n * d; ++i) gx[i] += g[i];
    if (double* gb = grad_of(tp, bias))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gb[j] += g(i, j);
  });
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = t.value(x);
  const Tensor& gv = t.value(gain);
  const Tensor& bv = t.value(bias);
  require(xv.rank() == 2 && xv.cols() >= 1, "layer_norm requires an n x d input");
  require(gv.size() == xv.cols() && bv.size() == xv.cols(), shapes("layer_norm", xv, gv));
  const std::size_t n = xv.rows(), d = xv.cols();
  auto xhat = std::make_shared<Tensor>(xv.shape());
  auto inv = std::make_shared<std::vector<double>>(n);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xv(i, j);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xv(i, j) - mu) * (xv(i, j) - mu);
    var /= static_cast<double>(d);
    const double s = 1.0 / std::sqrt(var + eps);
    (*inv)[i] = s;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xv(i, j) - mu) * s;
      (*xhat)(i, j) = h;
      out(i, j) = gv[j] * h + bv[j];
    }
  }
  const Var in[] = {x, gain, bias};
  return t.record("layer_norm", std::move(out), in,
                  [x, gain, bias, n, d, xhat, inv](Tape& tp, const Tensor& g) {
                    const Tensor& gv = tp.value(gain);
                    if (double* gg = grad_of(tp, gain))
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < d; ++j) gg[j] += g(i, j) * (*xhat)(i, j);
                    if (double* gb = grad_of(tp, bias))
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < d; ++j) gb[j] += g(i, j);
                    double* gx = grad_of(tp, x);
                    if (!gx) return;
                    const double invd = 1.0 / static_cast<double>(d);
                    for (std::size_t i = 0; i < n; ++i) {
                      double m1 = 0.0, m2 = 0.0;
                      for (std::size_t j = 0; j < d; ++j) {
                        const double gh = g(i, j) * gv[j];
                        m1 += gh;
                        m2 += gh * (*xhat)(i, j);
                      }
                      m1 *= invd;
                      m2 *= invd;
                      for (std::size_t j = 0; j < d; ++j) {
                        const double gh = g(i, j) * gv[j];
                        gx[i * d + j] += (*inv)[i] * (gh - m1 - (*xhat)(i, j) * m2);
                      }
                    }
                  });
}

// ---------------------------------------------------------------------------
// similarity

namespace {

struct CosineParts {
  double value;
  double dot;
  double nu;
  double nv;
  bool clamped;
};

CosineParts cosine_parts(const double* u, const double* v, std::size_t d, double eps) {
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    dot += u[k] * v[k];
    uu += u[k] * u[k];
    vv += v[k] * v[k];
  }
  const double nu = std::sqrt(uu), nv = std::sqrt(vv);
  const double raw = dot / (nu * nv + eps);
  const bool clamped = raw > 1.0 || raw < -1.0;
  return {std::clamp(raw, -1.0, 1.0), dot, nu, nv, clamped};
}

// Adds scale * dc/du and scale * dc/dv. A clamped value or a zero vector has
// zero gradient.
void cosine_grad(const double* u, const double* v, std::size_t d, double eps,
                 const CosineParts& c, double scale, double* gu, double* gv) {
  if (c.clamped || c.nu == 0.0 || c.nv == 0.0 || scale == 0.0) return;
  const double den = c.nu * c.nv + eps;
  const double a = scale / den;
  const double b = scale * c.dot / (den * den);
  const double bu = b * c.nv / c.nu;
  const double bv = b * c.nu / c.nv;
  for (std::size_t k = 0; k < d; ++k) {
    if (gu) gu[k] += a * v[k] - bu * u[k];
    if (gv) gv[k] += a * u[k] - bv * v[k];
  }
}

}  // namespace

Var cosine_similarity(Tape& t, Var u, Var v, double eps) {
  const Tensor& uv = t.value(u);
  const Tensor& vv = t.value(v);
  require(uv.size() == vv.size() && uv.size() >= 1, shapes("cosine_similarity", uv, vv));
  const std::size_t d = uv.size();
  const CosineParts c = cosine_parts(uv.raw(), vv.raw(), d, eps);
  const Var in[] = {u, v};
  return t.record("cosine_similarity", Tensor::scalar(c.value), in,
                  [u, v, d, eps, c](Tape& tp, const Tensor& g) {
                    cosine_grad(tp.value(u).raw(), tp.value(v).raw(), d, eps, c, g[0],
                                grad_of(tp, u), grad_of(tp, v));
                  });
}

// ---------------------------------------------------------------------------
// segment / graph ops

Var segment_mean(Tape& t, Var values, std::span<const std::uint32_t> segment_of,
                 std::size_t num_segments) {
  const Tensor& x = t.value(values);
  require(x.rank() >= 1 && x.rows() == segment_of.size(),
          "segment_mean: " + std::to_string(segment_of.size()) + " segment ids for " +
              x.shape_string());
  check_segments("segment_mean", segment_of, num_segments);
  const std::size_t d = x.rank() == 2 ? x.cols() : 1;
  auto count = std::make_shared<std::vector<double>>(num_segments, 0.0);
  for (std::uint32_t s : segment_of) (*count)[s] += 1.0;
  Tensor::Shape shape{num_segments};
  if (x.rank() == 2) shape.push_back(d);
  Tensor out(shape);
  for (std::size_t e = 0; e < segment_of.size(); ++e) {
    const std::size_t s = segment_of[e];
    const double w = 1.0 / (*count)[s];
    for (std::size_t k = 0; k < d; ++k) out[s * d + k] += w * x[e * d + k];
  }
  std::vector<std::uint32_t> seg(segment_of.begin(), segment_of.end());
  const Var in[] = {values};
  return t.record("segment_mean", std::move(out), in,
                  [values, seg = std::move(seg), count, d](Tape& tp, const Tensor& g) {
                    double* gx = grad_of(tp, values);
                    for (std::size_t e = 0; e < seg.size(); ++e) {
                      const std::size_t s = seg[e];
                      const double w = 1.0 / (*count)[s];
                      for (std::size_t k = 0; k < d; ++k) gx[e * d + k] += w * g[s * d + k];
                    }
                  });
}

Var segment_softmax(Tape& t, Var scores, std::span<const std::uint32_t> segment_of,
                    std::size_t num_segments) {
  const Tensor& x = t.value(scores);
  require(x.size() == segment_of.size(),
          "segment_softmax: " + std::to_string(segment_of.size()) + " segment ids for " +
              x.shape_string());
  check_segments("segment_softmax", segment_of, num_segments);
  const std::size_t m = x.size();
  std::vector<double> mx(num_segments, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < m; ++e) mx[segment_of[e]] = std::max(mx[segment_of[e]], x[e]);
  std::vector<double> z(num_segments, 0.0);
  Tensor out(x.shape());
  for (std::size_t e = 0; e < m; ++e) {
    out[e] = std::exp(x[e] - mx[segment_of[e]]);
    z[segment_of[e]] += out[e];
  }
  for (std::size_t e = 0; e < m; ++e) out[e] /= z[segment_of[e]];
  auto y = std::make_shared<Tensor>(out);
  std::vector<std::uint32_t> seg(segment_of.begin(), segment_of.end());
  const Var in[] = {scores};
  return t.record("segment_softmax", std::move(out), in,
                  [scores, y, seg = std::move(seg), num_segments](Tape& tp, const Tensor& g) {
                    double* gx = grad_of(tp, scores);
                    std::vector<double> dot(num_segments, 0.0);
                    for (std::size_t e = 0; e < seg.size(); ++e) dot[seg[e]] += g[e] * (*y)[e];
                    for (std::size_t e = 0; e < seg.size(); ++e)
                      gx[e] += (*y)[e] * (g[e] - dot[seg[e]]);
                  });
}

Var edge_cosine(Tape& t, Var h, const EdgeIndex& edges, double eps) {
  const Tensor& hv = t.value(h);
  require(hv.rank() == 2, "edge_cosine requires an n x d matrix");
  check_edges("edge_cosine", edges, hv.rows());
  const std::size_t d = hv.cols();
  const std::size_t n = hv.rows();
  const std::size_t m = edges.size();
  auto norm = std::make_shared<std::vector<double>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = hv.raw() + i * d;
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) acc += r[k] * r[k];
    (*norm)[i] = std::sqrt(acc);
  }
  auto dots = std::make_shared<std::vector<double>>(m);
  Tensor out({m});
  for (std::size_t e = 0; e < m; ++e) {
    const double* a = hv.raw() + edges.dst[e] * d;
    const double* b = hv.raw() + edges.src[e] * d;
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) acc += a[k] * b[k];
    (*dots)[e] = acc;
    const double raw = acc / ((*norm)[edges.dst[e]] * (*norm)[edges.src[e]] + eps);
    out[e] = std::clamp(raw, -1.0, 1.0);
  }
  const Var in[] = {h};
  return t.record(
      "edge_cosine", std::move(out), in, [h, edges, d, n, eps, norm, dots](Tape& tp, const Tensor& g) {
        const double* hv = tp.value(h).raw();
        double* gh = grad_of(tp, h);
        // Terms along each node's own vector are summed per node first.
        std::vector<double> self(n, 0.0);
        for (std::size_t e = 0; e < edges.size(); ++e) {
          const std::size_t i = edges.dst[e], j = edges.src[e];
          const double nu = (*norm)[i], nv = (*norm)[j];
          if (g[e] == 0.0 || nu == 0.0 || nv == 0.0) continue;
          const double den = nu * nv + eps;
          const double raw = (*dots)[e] / den;
          if (raw > 1.0 || raw < -1.0) continue;  // clamped: zero gradient
          const double a = g[e] / den;
          const double b = g[e] * (*dots)[e] / (den * den);
          self[i] -= b * nv / nu;
          self[j] -= b * nu / nv;
          double* gi = gh + i * d;
          double* gj = gh + j * d;
          const double* hi = hv + i * d;
          const double* hj = hv + j * d;
          for (std::size_t k = 0; k < d; ++k) {
            gi[k] += a * hj[k];
            gj[k] += a * hi[k];
          }
        }
        for (std::size_t i = 0; i < n; ++i) {
          if (self[i] == 0.0) continue;
          for (std::size_t k = 0; k < d; ++k) gh[i * d + k] += self[i] * hv[i * d + k];
        }
      });
}

Var edge_dot(Tape& t, Var h, const EdgeIndex& edges) {
  const Tensor& hv = t.value(h);
  require(hv.rank() == 2, "edge_dot requires an n x d matrix");
  check_edges("edge_dot", edges, hv.rows());
  const std::size_t d = hv.cols();
  Tensor out({edges.size()});
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const double* a = hv.raw() + edges.dst[e] * d;
    const double* b = hv.raw() + edges.src[e] * d;
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) acc += a[k] * b[k];
    out[e] = acc;
  }
  const Var in[] = {h};
  return t.record("edge_dot", std::move(out), in, [h, edges, d](Tape& tp, const Tensor& g) {
    const double* hv = tp.value(h).raw();
    double* gh = grad_of(tp, h);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const std::size_t i = edges.dst[e], j = edges.src[e];
      for (std::size_t k = 0; k < d; ++k) {
        gh[i * d + k] += g[e] * hv[j * d + k];
        gh[j * d + k] += g[e] * hv[i * d + k];
      }
    }
  });
}

Var edge_sum(Tape& t, Var u, Var v, const EdgeIndex& edges) {
  const Tensor& uv = t.value(u);
  const Tensor& vv = t.value(v);
  require(uv.size() == vv.size(), shapes("edge_sum", uv, vv));
  check_edges("edge_sum", edges, uv.size());
  Tensor out({edges.size()});
  for (std::size_t e = 0; e < edges.size(); ++e) out[e] = uv[edges.dst[e]] + vv[edges.src[e]];
  const Var in[] = {u, v};
  return t.record("edge_sum", std::move(out), in, [u, v, edges](Tape& tp, const Tensor& g) {
    if (double* gu = grad_of(tp, u))
      for (std::size_t e = 0; e < edges.size(); ++e) gu[edges.dst[e]] += g[e];
    if (double* gv = grad_of(tp, v))
      for (std::size_t e = 0; e < edges.size(); ++e) gv[edges.src[e]] += g[e];
  });
}

Var spmm(Tape& t, Var coef, Var x, const EdgeIndex& edges) {
  const Tensor& cv = t.value(coef);
  const Tensor& xv = t.value(x);
  require(xv.rank() == 2, "spmm requires an n x d matrix");
  require(cv.size() == edges.size(), "spmm: " + std::to_string(edges.size()) +
                                         " edges but coefficients " + cv.shape_string());
  check_edges("spmm", edges, xv.rows());
  const std::size_t d = xv.cols();
  Tensor out = Tensor::matrix(edges.num_nodes, d);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const double c = cv[e];
    if (c == 0.0) continue;
    const double* src = xv.raw() + edges.src[e] * d;
    double* dst = out.raw() + edges.dst[e] * d;
    for (std::size_t k = 0; k < d; ++k) dst[k] += c * src[k];
  }
  const Var in[] = {coef, x};
  return t.record("spmm", std::move(out), in, [coef, x, edges, d](Tape& tp, const Tensor& g) {
    const Tensor& cv = tp.value(coef);
    const Tensor& xv = tp.value(x);
    double* gc = grad_of(tp, coef);
    double* gx = grad_of(tp, x);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const double* gd = g.raw() + edges.dst[e] * d;
      if (gc) {
        const double* src = xv.raw() + edges.src[e] * d;
        double acc = 0.0;
        for (std::size_t k = 0; k < d; ++k) acc += gd[k] * src[k];
        gc[e] += acc;
      }
      if (gx) {
        const double c = cv[e];
        double* gs = gx + edges.src[e] * d;
        for (std::size_t k = 0; k < d; ++k) gs[k] += c * gd[k];
      }
    }
  });
}

Var spmm_pair(Tape& t, Var coef, Var p, Var tau, Var q, const EdgeIndex& edges) {
  const Tensor& cv = t.value(coef);
  const Tensor& pv = t.value(p);
  const Tensor& qv = t.value(q);
  const Tensor& tv = t.value(tau);
  require(pv.rank() == 2 && pv.same_shape(qv), shapes("spmm_pair", pv, qv));
  require(cv.size() == edges.size(), "spmm_pair: coefficient count mismatch");
  const bool tau_scalar = tv.size() == 1 && edges.size() != 1;
  require(tau_scalar || tv.size() == edges.size(), "spmm_pair: tau count mismatch");
  check_edges("spmm_pair", edges, pv.rows());
  const std::size_t d = pv.cols();
  Tensor out = Tensor::matrix(edges.num_nodes, d);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const double c = cv[e];
    if (c == 0.0) continue;
    const double ct = c * tv[tau_scalar ? 0 : e];
    const double* ps = pv.raw() + edges.src[e] * d;
    const double* qs = qv.raw() + edges.src[e] * d;
    double* dst = out.raw() + edges.dst[e] * d;
    for (std::size_t k = 0; k < d; ++k) dst[k] += c * ps[k] + ct * qs[k];
  }
  const Var in[] = {coef, p, tau, q};
  return t.record(
      "spmm_pair", std::move(out), in,
      [coef, p, tau, q, edges, d, tau_scalar](Tape& tp, const Tensor& g) {
        const Tensor& cv = tp.value(coef);
        const Tensor& pv = tp.value(p);
        const Tensor& qv = tp.value(q);
        const Tensor& tv = tp.value(tau);
        double* gc = grad_of(tp, coef);
        double* gp = grad_of(tp, p);
        double* gq = grad_of(tp, q);
        double* gt = grad_of(tp, tau);
        for (std::size_t e = 0; e < edges.size(); ++e) {
          const double* gd = g.raw() + edges.dst[e] * d;
          const std::size_t src = edges.src[e] * d;
          const double c = cv[e];
          const double te = tv[tau_scalar ? 0 : e];
          if (gc || gt) {
            double dp = 0.0, dq = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
              dp += gd[k] * pv[src + k];
              dq += gd[k] * qv[src + k];
            }
            if (gc) gc[e] += dp + te * dq;
            if (gt) gt[tau_scalar ? 0 : e] += c * dq;
          }
          if (gp)
            for (std::size_t k = 0; k < d; ++k) gp[src + k] += c * gd[k];
          if (gq)
            for (std::size_t k = 0; k < d; ++k) gq[src + k] += c * te * gd[k];
        }
      });
}

// ---------------------------------------------------------------------------
// soft-PSD spectral ops

namespace {

std::shared_ptr<const EigPair> eig_of_sym(const Tensor& w_raw,
                                          std::shared_ptr<const EigPair> cached) {
  if (cached) {
    require(cached->dim() == w_raw.rows(), "cached eigendecomposition has the wrong size");
    return cached;
  }
  require(w_raw.rank() == 2 && w_raw.rows() == w_raw.cols(),
          "soft-PSD weight must be square, got " + w_raw.shape_string());
  const std::size_t d = w_raw.rows();
  Tensor a = Tensor::matrix(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) a(i, j) = 0.5 * (w_raw(i, j) + w_raw(j, i));
  return std::make_shared<const EigPair>(symmetric_eig(a));
}

}  // namespace

SpectralParts spectral_parts(Tape& t, Var w_raw, std::shared_ptr<const EigPair> cached) {
  auto eig = eig_of_sym(t.value(w_raw), std::move(cached));
  const Var in[] = {w_raw};
  Var pos = t.record("spectral_parts(+)", spectral_map(*eig, positive_part), in,
                     [w_raw, eig](Tape& tp, const Tensor& g) {
                       const Tensor k = loewner_matrix(*eig, positive_part, positive_part_slope);
                       const Tensor gw = spectral_backward(*eig, k, g);
                       double* ga = grad_of(tp, w_raw);
                       for (std::size_t i = 0; i < gw.size(); ++i) ga[i] += gw[i];
                     });
  Var neg = t.record("spectral_parts(-)", spectral_map(*eig, negative_part), in,
                     [w_raw, eig](Tape& tp, const Tensor& g) {
                       const Tensor k = loewner_matrix(*eig, negative_part, negative_part_slope);
                       const Tensor gw = spectral_backward(*eig, k, g);
                       double* ga = grad_of(tp, w_raw);
                       for (std::size_t i = 0; i < gw.size(); ++i) ga[i] += gw[i];
                     });
  return {pos, neg, eig};
}

Var eig_rescaled_apply(Tape& t, Var w_raw, Var z, Var tau, std::shared_ptr<const EigPair> cached) {
  const Tensor& zv = t.value(z);
  const Tensor& tv = t.value(tau);
  require(tv.size() == 1, "eig_rescaled_apply: tau must be a scalar");
  const double tau_v = tv[0];
  if (!(tau_v >= 0.0 && tau_v <= 1.0)) {
    throw std::domain_error("eig_rescaled_apply: tau " + std::to_string(tau_v) +
                            " outside [0, 1]");
  }
  auto eig = eig_of_sym(t.value(w_raw), std::move(cached));
  const std::size_t d = eig->dim();
  require((zv.rank() == 1 && zv.size() == d) || (zv.rank() == 2 && zv.cols() == d),
          "eig_rescaled_apply: z " + zv.shape_string() + " vs weight dimension " +
              std::to_string(d));
  const std::size_t m = zv.rank() == 2 ? zv.rows() : 1;
  const double* q = eig->vectors.raw();

  std::vector<double> lhat(d);
  for (std::size_t k = 0; k < d; ++k)
    lhat[k] = eig->values[k] >= 0.0 ? eig->values[k] : tau_v * eig->values[k];

  // Rows are rotated into eigen-coordinates (z Q), rescaled, rotated back.
  auto coords = std::make_shared<AlignedVector>(m * d, 0.0);
  gemm_nn(zv.raw(), q, coords->data(), m, d, d);
  AlignedVector scaled(m * d);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t k = 0; k < d; ++k) scaled[r * d + k] = (*coords)[r * d + k] * lhat[k];
  Tensor out(zv.shape());
  if (tau_v == 1.0) {
    // Nothing is rescaled, so the value is exactly z sym(W); the eigenbasis
    // would only add round-off. Gradients still use the spectral path.
    const Tensor& w = t.value(w_raw);
    Tensor sym = Tensor::matrix(d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) sym(i, j) = 0.5 * (w(i, j) + w(j, i));
    gemm_nn(zv.raw(), sym.raw(), out.raw(), m, d, d);
  } else {
    gemm_nt(scaled.data(), q, out.raw(), m, d, d);
  }

  const Var in[] = {w_raw, z, tau};
  return t.record(
      "eig_rescaled_apply", std::move(out), in,
      [w_raw, z, tau, eig, coords, lhat, tau_v, m, d](Tape& tp, const Tensor& g) {
        const double* q = eig->vectors.raw();
        AlignedVector gc(m * d, 0.0);  // g Q
        gemm_nn(g.raw(), q, gc.data(), m, d, d);
        if (double* gt = grad_of(tp, tau)) {
          double acc = 0.0;
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t k = 0; k < d; ++k)
              if (eig->values[k] < 0.0) acc += eig->values[k] * (*coords)[r * d + k] * gc[r * d + k];
          gt[0] += acc;
        }
        if (double* gz = grad_of(tp, z)) {
          AlignedVector s(m * d);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t k = 0; k < d; ++k) s[r * d + k] = gc[r * d + k] * lhat[k];
          gemm_nt(s.data(), q, gz, m, d, d);
        }
        if (double* gw = grad_of(tp, w_raw)) {
          // out_r = M z_r, so dL/dM = sum_r g_r z_r^T.
          Tensor gm = Tensor::matrix(d, d);
          gemm_tn(g.raw(), tp.value(z).raw(), gm.raw(), m, d, d);
          const Tensor k = loewner_matrix(
              *eig, [tau_v](double x) { return positive_part(x) + tau_v * negative_part(x); },
              [tau_v](double x) { return positive_part_slope(x) + tau_v * negative_part_slope(x); });
          const Tensor back = spectral_backward(*eig, k, gm);
          for (std::size_t i = 0; i < back.size(); ++i) gw[i] += back[i];
        }
      });
}

// ---------------------------------------------------------------------------
// losses

Var cross_entropy(Tape& t, Var logits, std::span<const int> labels,
                  std::span<const std::uint8_t> mask) {
  const Tensor& x = t.value(logits);
  require(x.rank() == 2, "cross_entropy requires n x C logits");
  const std::size_t n = x.rows(), c = x.cols();
  require(labels.size() == n && mask.size() == n, "cross_entropy: labels/mask length mismatch");
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[i]) +
                              " outside [0, " + std::to_string(c) + ")");
    }
    ++count;
  }
  if (count == 0) throw std::invalid_argument("cross_entropy: mask selects no rows");
  auto probs = std::make_shared<Tensor>(x.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    double mx = x(i, 0);
    for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, x(i, k));
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) z += std::exp(x(i, k) - mx);
    const double lse = mx + std::log(z);
    total += lse - x(i, static_cast<std::size_t>(labels[i]));
    for (std::size_t k = 0; k < c; ++k) (*probs)(i, k) = std::exp(x(i, k) - lse);
  }
  const double inv = 1.0 / static_cast<double>(count);
  std::vector<int> lab(labels.begin(), labels.end());
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  const Var in[] = {logits};
  return t.record("cross_entropy", Tensor::scalar(total * inv), in,
                  [logits, probs, lab = std::move(lab), msk = std::move(msk), inv, n,
                   c](Tape& tp, const Tensor& g) {
                    double* gx = grad_of(tp, logits);
                    const double s = g[0] * inv;
                    for (std::size_t i = 0; i < n; ++i) {
                      if (!msk[i]) continue;
                      for (std::size_t k = 0; k < c; ++k) gx[i * c + k] += s * (*probs)(i, k);
                      gx[i * c + static_cast<std::size_t>(lab[i])] -= s;
                    }
                  });
}

Var binary_ce(Tape& t, Var logits, std::span<const double> targets,
              std::span<const std::uint8_t> mask) {
  const Tensor& x = t.value(logits);
  const std::size_t n = x.size();
  require(targets.size() == n && mask.size() == n, "binary_ce: targets/mask length mismatch");
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    ++count;
    total += stable_softplus(x[i]) - targets[i] * x[i];
  }
  if (count == 0) throw std::invalid_argument("binary_ce: mask selects no entries");
  const double inv = 1.0 / static_cast<double>(count);
  std::vector<double> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  const Var in[] = {logits};
  return t.record("binary_ce", Tensor::scalar(total * inv), in,
                  [logits, tgt = std::move(tgt), msk = std::move(msk), inv](Tape& tp,
                                                                             const Tensor& g) {
                    const Tensor& x = tp.value(logits);
                    double* gx = grad_of(tp, logits);
                    for (std::size_t i = 0; i < tgt.size(); ++i)
                      if (msk[i]) gx[i] += g[0] * inv * (stable_sigmoid(x[i]) - tgt[i]);
                  });
}

}  // namespace cmp

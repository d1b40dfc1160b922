#include "aio/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "aio/errors.hpp"

namespace aio::ad {

int shape_numel(const Shape& s) {
  int n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

namespace {

std::shared_ptr<Node> make_node(Shape shape) {
  auto n = std::make_shared<Node>();
  n->v.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
  n->shape = std::move(shape);
  return n;
}

void require_shape(const Tensor& t, size_t ndim, const char* what) {
  if (t.shape().size() != ndim)
    throw ContractError(std::string(what) + ": expected " + std::to_string(ndim) +
                        "-d tensor, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw ContractError(std::string(what) + ": shape mismatch " +
                        shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Wires parents/backward only when gradients can flow.
void attach(const std::shared_ptr<Node>& out,
            std::vector<std::shared_ptr<Node>> parents,
            std::function<void(Node&)> backward) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  if (!rg) return;
  out->requires_grad = true;
  out->parents = std::move(parents);
  out->backward = std::move(backward);
}

}  // namespace

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  auto n = make_node(shape);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  auto n = make_node(shape);
  std::fill(n->v.begin(), n->v.end(), value);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values,
                    bool requires_grad) {
  if (static_cast<int>(values.size()) != shape_numel(shape))
    throw ContractError("Tensor::from: value count does not match shape");
  auto n = std::make_shared<Node>();
  n->v = std::move(values);
  n->shape = shape;
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on non-scalar tensor");
  return n_->v[0];
}

void backward(const Tensor& root) {
  if (root.numel() != 1) throw ContractError("backward() needs a scalar root");
  Node* r = root.node().get();
  if (!r->requires_grad) return;

  // iterative post-order DFS over grad-requiring ancestors
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{r, 0}};
  seen.insert(r);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buf()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) {
      n->grad_buf();
      n->backward(*n);
    }
  }
}

Tensor detach(const Tensor& x) {
  return Tensor::from(x.shape(), x.values(), false);
}

// ---------------------------------------------------------------- elementwise

namespace {
template <class Fwd, class Bwd>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* what,
                          Fwd fwd, Bwd bwd) {
  require_same_shape(a, b, what);
  auto out = make_node(a.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < av.size(); ++i) out->v[i] = fwd(av[i], bv[i]);
  auto pa = a.node(), pb = b.node();
  attach(out, {pa, pb}, [pa, pb, bwd](Node& self) {
    double* ga = pa->requires_grad ? pa->grad_buf().data() : nullptr;
    double* gb = pb->requires_grad ? pb->grad_buf().data() : nullptr;
    for (size_t i = 0; i < self.v.size(); ++i) {
      double da = 0, db = 0;
      bwd(pa->v[i], pb->v[i], self.g[i], da, db);
      if (ga) ga[i] += da;
      if (gb) gb[i] += db;
    }
  });
  return Tensor(out);
}

template <class Fwd, class Deriv>
Tensor unary_elementwise(const Tensor& a, Fwd fwd, Deriv deriv) {
  auto out = make_node(a.shape());
  const auto& av = a.values();
  for (size_t i = 0; i < av.size(); ++i) out->v[i] = fwd(av[i]);
  auto pa = a.node();
  attach(out, {pa}, [pa, deriv](Node& self) {
    auto& g = pa->grad_buf();
    for (size_t i = 0; i < self.v.size(); ++i)
      g[i] += deriv(pa->v[i], self.v[i]) * self.g[i];
  });
  return Tensor(out);
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g, double& da, double& db) { da = g; db = g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g, double& da, double& db) { da = g; db = -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g / y;
        db = -g * x / (y * y);
      });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_elementwise(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary_elementwise(
      a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor exp_(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log_(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor sqrt_(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor abs_(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor tanh_(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor gelu(const Tensor& a) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  return unary_elementwise(
      a,
      [](double x) {
        const double u = k * (x + c * x * x * x);
        return 0.5 * x * (1.0 + std::tanh(u));
      },
      [](double x, double) {
        const double u = k * (x + c * x * x * x);
        const double t = std::tanh(u);
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * c * x * x);
      });
}

Tensor square(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) throw ContractError("scale_by: scale must be a [1] tensor");
  auto out = make_node(x.shape());
  const double sv = s.values()[0];
  const auto& xv = x.values();
  for (size_t i = 0; i < xv.size(); ++i) out->v[i] = xv[i] * sv;
  auto px = x.node(), ps = s.node();
  attach(out, {px, ps}, [px, ps](Node& self) {
    const double sv = ps->v[0];
    if (px->requires_grad) {
      auto& g = px->grad_buf();
      for (size_t i = 0; i < self.v.size(); ++i) g[i] += self.g[i] * sv;
    }
    if (ps->requires_grad) {
      double acc = 0.0;
      for (size_t i = 0; i < self.v.size(); ++i) acc += self.g[i] * px->v[i];
      ps->grad_buf()[0] += acc;
    }
  });
  return Tensor(out);
}

Tensor add_broadcast(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) throw ContractError("add_broadcast: shift must be a [1] tensor");
  auto out = make_node(x.shape());
  const double sv = s.values()[0];
  const auto& xv = x.values();
  for (size_t i = 0; i < xv.size(); ++i) out->v[i] = xv[i] + sv;
  auto px = x.node(), ps = s.node();
  attach(out, {px, ps}, [px, ps](Node& self) {
    if (px->requires_grad) {
      auto& g = px->grad_buf();
      for (size_t i = 0; i < self.v.size(); ++i) g[i] += self.g[i];
    }
    if (ps->requires_grad) {
      double acc = 0.0;
      for (size_t i = 0; i < self.v.size(); ++i) acc += self.g[i];
      ps->grad_buf()[0] += acc;
    }
  });
  return Tensor(out);
}

// ---------------------------------------------------------------- reductions

Tensor sum_all(const Tensor& a) {
  auto out = make_node({1});
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  out->v[0] = acc;
  auto pa = a.node();
  attach(out, {pa}, [pa](Node& self) {
    auto& g = pa->grad_buf();
    const double gv = self.g[0];
    for (double& gi : g) gi += gv;
  });
  return Tensor(out);
}

Tensor mean_all(const Tensor& a) {
  return mul_scalar(sum_all(a), 1.0 / a.numel());
}

Tensor mean_rows(const Tensor& a) {
  require_shape(a, 2, "mean_rows");
  const int n = a.dim(0), d = a.dim(1);
  auto out = make_node({d});
  const auto& av = a.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out->v[j] += av[static_cast<size_t>(i) * d + j];
  for (int j = 0; j < d; ++j) out->v[j] /= n;
  auto pa = a.node();
  attach(out, {pa}, [pa, n, d](Node& self) {
    auto& g = pa->grad_buf();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j)
        g[static_cast<size_t>(i) * d + j] += self.g[j] / n;
  });
  return Tensor(out);
}

Tensor mean_spatial(const Tensor& a) {
  require_shape(a, 3, "mean_spatial");
  const int c = a.dim(0), hw = a.dim(1) * a.dim(2);
  auto out = make_node({c});
  const auto& av = a.values();
  for (int ci = 0; ci < c; ++ci) {
    double acc = 0.0;
    for (int i = 0; i < hw; ++i) acc += av[static_cast<size_t>(ci) * hw + i];
    out->v[ci] = acc / hw;
  }
  auto pa = a.node();
  attach(out, {pa}, [pa, c, hw](Node& self) {
    auto& g = pa->grad_buf();
    for (int ci = 0; ci < c; ++ci) {
      const double gv = self.g[ci] / hw;
      for (int i = 0; i < hw; ++i) g[static_cast<size_t>(ci) * hw + i] += gv;
    }
  });
  return Tensor(out);
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  auto out = make_node({1});
  const auto& av = a.values();
  const auto& bv = b.values();
  double acc = 0.0;
  for (size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  out->v[0] = acc;
  auto pa = a.node(), pb = b.node();
  attach(out, {pa, pb}, [pa, pb](Node& self) {
    const double gv = self.g[0];
    if (pa->requires_grad) {
      auto& g = pa->grad_buf();
      for (size_t i = 0; i < g.size(); ++i) g[i] += gv * pb->v[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->grad_buf();
      for (size_t i = 0; i < g.size(); ++i) g[i] += gv * pa->v[i];
    }
  });
  return Tensor(out);
}

// ---------------------------------------------------------------- shape

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape_numel(shape) != a.numel())
    throw ContractError("reshape: element count mismatch " + shape_str(a.shape()) +
                        " -> " + shape_str(shape));
  auto out = make_node(shape);
  out->v = a.values();
  auto pa = a.node();
  attach(out, {pa}, [pa](Node& self) {
    auto& g = pa->grad_buf();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.g[i];
  });
  return Tensor(out);
}

Tensor concat0(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ContractError("concat0: no inputs");
  Shape inner(xs[0].shape().begin() + 1, xs[0].shape().end());
  int total0 = 0;
  for (const auto& x : xs) {
    Shape xin(x.shape().begin() + 1, x.shape().end());
    if (xin != inner) throw ContractError("concat0: trailing dims differ");
    total0 += x.dim(0);
  }
  Shape os = xs[0].shape();
  os[0] = total0;
  auto out = make_node(os);
  size_t off = 0;
  for (const auto& x : xs) {
    std::copy(x.values().begin(), x.values().end(), out->v.begin() + off);
    off += x.values().size();
  }
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& x : xs) parents.push_back(x.node());
  attach(out, parents, [parents](Node& self) {
    size_t off = 0;
    for (const auto& p : parents) {
      if (p->requires_grad) {
        auto& g = p->grad_buf();
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.g[off + i];
      }
      off += p->v.size();
    }
  });
  return Tensor(out);
}

Tensor slice0(const Tensor& a, int start, int length) {
  if (a.shape().empty()) throw ContractError("slice0: scalar input");
  const int d0 = a.dim(0);
  if (start < 0 || length <= 0 || start + length > d0)
    throw ContractError("slice0: range out of bounds");
  const size_t inner = static_cast<size_t>(a.numel()) / d0;
  Shape os = a.shape();
  os[0] = length;
  auto out = make_node(os);
  const size_t off = start * inner;
  std::copy(a.values().begin() + off, a.values().begin() + off + out->v.size(),
            out->v.begin());
  auto pa = a.node();
  attach(out, {pa}, [pa, off](Node& self) {
    auto& g = pa->grad_buf();
    for (size_t i = 0; i < self.v.size(); ++i) g[off + i] += self.g[i];
  });
  return Tensor(out);
}

Tensor stack_scalars(const std::vector<Tensor>& xs) {
  for (const auto& x : xs)
    if (x.numel() != 1) throw ContractError("stack_scalars: inputs must be [1]");
  return concat0(xs);
}

Tensor pick(const Tensor& a, int index) {
  if (a.shape().size() != 1) throw ContractError("pick: needs a 1-d tensor");
  return slice0(a, index, 1);
}

// ---------------------------------------------------------------- linalg

namespace {
// C[m,n] += A[m,k] * B[k,n], ikj order so the inner loop is contiguous.
void gemm_acc(const double* A, const double* B, double* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* a_row = A + static_cast<size_t>(i) * k;
    double* c_row = C + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = a_row[p];
      if (av == 0.0) continue;
      const double* b_row = B + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) c_row[j] += av * b_row[j];
    }
  }
}

// C[m,n] += A[m,k] * B^T where Bt is [n,k] (i.e. B[k,n] stored transposed).
void gemm_bt_acc(const double* A, const double* Bt, double* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* a_row = A + static_cast<size_t>(i) * k;
    double* c_row = C + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* b_row = Bt + static_cast<size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
      c_row[j] += acc;
    }
  }
}

// C[m,n] += A^T * B where At is [k,m].
void gemm_at_acc(const double* At, const double* B, double* C, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const double* a_row = At + static_cast<size_t>(p) * m;
    const double* b_row = B + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = a_row[i];
      if (av == 0.0) continue;
      double* c_row = C + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) c_row[j] += av * b_row[j];
    }
  }
}
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_shape(a, 2, "matmul");
  require_shape(b, 2, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ContractError("matmul: inner dims differ " + shape_str(a.shape()) +
                        " x " + shape_str(b.shape()));
  auto out = make_node({m, n});
  gemm_acc(a.data(), b.data(), out->v.data(), m, k, n);
  auto pa = a.node(), pb = b.node();
  attach(out, {pa, pb}, [pa, pb, m, k, n](Node& self) {
    if (pa->requires_grad)  // dA = dC * B^T
      gemm_bt_acc(self.g.data(), pb->v.data(), pa->grad_buf().data(), m, n, k);
    if (pb->requires_grad)  // dB[k,n] = A^T * dC
      gemm_at_acc(pa->v.data(), self.g.data(), pb->grad_buf().data(), k, m, n);
  });
  return Tensor(out);
}

Tensor transpose2(const Tensor& a) {
  require_shape(a, 2, "transpose2");
  const int m = a.dim(0), n = a.dim(1);
  auto out = make_node({n, m});
  const auto& av = a.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out->v[static_cast<size_t>(j) * m + i] = av[static_cast<size_t>(i) * n + j];
  auto pa = a.node();
  attach(out, {pa}, [pa, m, n](Node& self) {
    auto& g = pa->grad_buf();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        g[static_cast<size_t>(i) * n + j] += self.g[static_cast<size_t>(j) * m + i];
  });
  return Tensor(out);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_shape(x, 1, "linear");
  require_shape(w, 2, "linear");
  const int in = x.dim(0), out_dim = w.dim(0);
  if (w.dim(1) != in) throw ContractError("linear: weight/input dims differ");
  if (b.defined() && (b.shape().size() != 1 || b.dim(0) != out_dim))
    throw ContractError("linear: bias dim mismatch");
  auto out = make_node({out_dim});
  const auto& xv = x.values();
  const auto& wv = w.values();
  for (int o = 0; o < out_dim; ++o) {
    const double* row = wv.data() + static_cast<size_t>(o) * in;
    double acc = b.defined() ? b.values()[o] : 0.0;
    for (int i = 0; i < in; ++i) acc += row[i] * xv[i];
    out->v[o] = acc;
  }
  auto px = x.node(), pw = w.node();
  std::vector<std::shared_ptr<Node>> parents{px, pw};
  std::shared_ptr<Node> pb;
  if (b.defined()) {
    pb = b.node();
    parents.push_back(pb);
  }
  attach(out, parents, [px, pw, pb, in, out_dim](Node& self) {
    if (px->requires_grad) {
      auto& g = px->grad_buf();
      for (int o = 0; o < out_dim; ++o) {
        const double gv = self.g[o];
        if (gv == 0.0) continue;
        const double* row = pw->v.data() + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) g[i] += gv * row[i];
      }
    }
    if (pw->requires_grad) {
      auto& g = pw->grad_buf();
      for (int o = 0; o < out_dim; ++o) {
        const double gv = self.g[o];
        if (gv == 0.0) continue;
        double* row = g.data() + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) row[i] += gv * px->v[i];
      }
    }
    if (pb && pb->requires_grad) {
      auto& g = pb->grad_buf();
      for (int o = 0; o < out_dim; ++o) g[o] += self.g[o];
    }
  });
  return Tensor(out);
}

// ------------------------------------------------------- softmax / normalize

namespace {
Tensor softmax_impl(const Tensor& a, int rows, int cols) {
  auto out = make_node(a.shape());
  const auto& av = a.values();
  for (int r = 0; r < rows; ++r) {
    const double* in = av.data() + static_cast<size_t>(r) * cols;
    double* o = out->v.data() + static_cast<size_t>(r) * cols;
    double mx = in[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (int j = 0; j < cols; ++j) o[j] /= sum;
  }
  auto pa = a.node();
  attach(out, {pa}, [pa, rows, cols](Node& self) {
    auto& g = pa->grad_buf();
    for (int r = 0; r < rows; ++r) {
      const double* y = self.v.data() + static_cast<size_t>(r) * cols;
      const double* gy = self.g.data() + static_cast<size_t>(r) * cols;
      double dotv = 0.0;
      for (int j = 0; j < cols; ++j) dotv += gy[j] * y[j];
      double* gx = g.data() + static_cast<size_t>(r) * cols;
      for (int j = 0; j < cols; ++j) gx[j] += y[j] * (gy[j] - dotv);
    }
  });
  return Tensor(out);
}

constexpr double kNormEps = 1e-12;

Tensor l2norm_impl(const Tensor& a, int rows, int cols) {
  auto out = make_node(a.shape());
  std::vector<double> inv_norm(rows);
  const auto& av = a.values();
  for (int r = 0; r < rows; ++r) {
    const double* in = av.data() + static_cast<size_t>(r) * cols;
    double q = kNormEps;
    for (int j = 0; j < cols; ++j) q += in[j] * in[j];
    inv_norm[r] = 1.0 / std::sqrt(q);
    double* o = out->v.data() + static_cast<size_t>(r) * cols;
    for (int j = 0; j < cols; ++j) o[j] = in[j] * inv_norm[r];
  }
  auto pa = a.node();
  attach(out, {pa}, [pa, rows, cols, inv_norm](Node& self) {
    auto& g = pa->grad_buf();
    for (int r = 0; r < rows; ++r) {
      const double* x = pa->v.data() + static_cast<size_t>(r) * cols;
      const double* gy = self.g.data() + static_cast<size_t>(r) * cols;
      const double inv = inv_norm[r];
      double dotv = 0.0;
      for (int j = 0; j < cols; ++j) dotv += gy[j] * x[j];
      dotv *= inv * inv;
      double* gx = g.data() + static_cast<size_t>(r) * cols;
      for (int j = 0; j < cols; ++j) gx[j] += inv * (gy[j] - x[j] * dotv);
    }
  });
  return Tensor(out);
}
}  // namespace

Tensor softmax_vec(const Tensor& a) {
  require_shape(a, 1, "softmax_vec");
  return softmax_impl(a, 1, a.dim(0));
}

Tensor softmax_rows(const Tensor& a) {
  require_shape(a, 2, "softmax_rows");
  return softmax_impl(a, a.dim(0), a.dim(1));
}

Tensor l2_normalize(const Tensor& a) {
  require_shape(a, 1, "l2_normalize");
  return l2norm_impl(a, 1, a.dim(0));
}

Tensor l2_normalize_rows(const Tensor& a) {
  require_shape(a, 2, "l2_normalize_rows");
  return l2norm_impl(a, a.dim(0), a.dim(1));
}

Tensor layernorm_chw(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  require_shape(x, 3, "layernorm_chw");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int hw = h * w;
  if (gamma.numel() != c || beta.numel() != c)
    throw ContractError("layernorm_chw: gamma/beta must be [C]");
  constexpr double eps = 1e-6;

  auto out = make_node(x.shape());
  std::vector<double> mu(hw), inv_sigma(hw);
  const auto& xv = x.values();
  for (int p = 0; p < hw; ++p) {
    double m = 0.0;
    for (int ci = 0; ci < c; ++ci) m += xv[static_cast<size_t>(ci) * hw + p];
    m /= c;
    double var = 0.0;
    for (int ci = 0; ci < c; ++ci) {
      const double d = xv[static_cast<size_t>(ci) * hw + p] - m;
      var += d * d;
    }
    var /= c;
    mu[p] = m;
    inv_sigma[p] = 1.0 / std::sqrt(var + eps);
  }
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  for (int ci = 0; ci < c; ++ci)
    for (int p = 0; p < hw; ++p) {
      const double xh = (xv[static_cast<size_t>(ci) * hw + p] - mu[p]) * inv_sigma[p];
      out->v[static_cast<size_t>(ci) * hw + p] = gv[ci] * xh + bv[ci];
    }

  auto px = x.node(), pg = gamma.node(), pb = beta.node();
  attach(out, {px, pg, pb}, [px, pg, pb, c, hw, mu, inv_sigma](Node& self) {
    double* gx = px->requires_grad ? px->grad_buf().data() : nullptr;
    double* gg = pg->requires_grad ? pg->grad_buf().data() : nullptr;
    double* gb = pb->requires_grad ? pb->grad_buf().data() : nullptr;
    for (int p = 0; p < hw; ++p) {
      // gd = gamma * dy; reconstruct xhat from saved stats
      double mean_gd = 0.0, mean_gd_xh = 0.0;
      for (int ci = 0; ci < c; ++ci) {
        const size_t i = static_cast<size_t>(ci) * hw + p;
        const double xh = (px->v[i] - mu[p]) * inv_sigma[p];
        const double gd = pg->v[ci] * self.g[i];
        mean_gd += gd;
        mean_gd_xh += gd * xh;
      }
      mean_gd /= c;
      mean_gd_xh /= c;
      for (int ci = 0; ci < c; ++ci) {
        const size_t i = static_cast<size_t>(ci) * hw + p;
        const double xh = (px->v[i] - mu[p]) * inv_sigma[p];
        if (gx) {
          const double gd = pg->v[ci] * self.g[i];
          gx[i] += (gd - mean_gd - xh * mean_gd_xh) * inv_sigma[p];
        }
        if (gg) gg[ci] += self.g[i] * xh;
        if (gb) gb[ci] += self.g[i];
      }
    }
  });
  return Tensor(out);
}

Tensor scale_shift_chw(const Tensor& x, const Tensor& s, const Tensor& t) {
  require_shape(x, 3, "scale_shift_chw");
  const int c = x.dim(0), hw = x.dim(1) * x.dim(2);
  if (s.numel() != c || t.numel() != c)
    throw ContractError("scale_shift_chw: scale/shift must be [C]");
  auto out = make_node(x.shape());
  const auto& xv = x.values();
  const auto& sv = s.values();
  const auto& tv = t.values();
  for (int ci = 0; ci < c; ++ci)
    for (int p = 0; p < hw; ++p)
      out->v[static_cast<size_t>(ci) * hw + p] =
          sv[ci] * xv[static_cast<size_t>(ci) * hw + p] + tv[ci];
  auto px = x.node(), ps = s.node(), pt = t.node();
  attach(out, {px, ps, pt}, [px, ps, pt, c, hw](Node& self) {
    double* gx = px->requires_grad ? px->grad_buf().data() : nullptr;
    for (int ci = 0; ci < c; ++ci) {
      double gs = 0.0, gt = 0.0;
      for (int p = 0; p < hw; ++p) {
        const size_t i = static_cast<size_t>(ci) * hw + p;
        if (gx) gx[i] += self.g[i] * ps->v[ci];
        gs += self.g[i] * px->v[i];
        gt += self.g[i];
      }
      if (ps->requires_grad) ps->grad_buf()[ci] += gs;
      if (pt->requires_grad) pt->grad_buf()[ci] += gt;
    }
  });
  return Tensor(out);
}

// ---------------------------------------------------------------- conv & co

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad, int groups) {
  require_shape(x, 3, "conv2d");
  require_shape(w, 4, "conv2d");
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = w.dim(0), cpg = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (cin % groups != 0 || cout % groups != 0 || cpg != cin / groups)
    throw ContractError("conv2d: channel/group mismatch");
  if (b.defined() && b.numel() != cout) throw ContractError("conv2d: bias dim mismatch");
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (wd + 2 * pad - kw) / stride + 1;
  if (oh <= 0 || ow <= 0) throw ContractError("conv2d: output would be empty");
  const int copg = cout / groups;

  auto out = make_node({cout, oh, ow});
  const auto& xv = x.values();
  const auto& wv = w.values();
  if (b.defined()) {
    for (int co = 0; co < cout; ++co)
      std::fill_n(out->v.begin() + static_cast<size_t>(co) * oh * ow, oh * ow,
                  b.values()[co]);
  }
  // captures bounds by value: the backward closure outlives this frame
  auto kernel_loop = [=](auto&& inner) {
    for (int g = 0; g < groups; ++g)
      for (int col = 0; col < copg; ++col) {
        const int co = g * copg + col;
        for (int cil = 0; cil < cpg; ++cil) {
          const int ci = g * cpg + cil;
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              const size_t widx =
                  ((static_cast<size_t>(co) * cpg + cil) * kh + ky) * kw + kx;
              // valid ox range so that ix = ox*stride + kx - pad is in bounds
              int ox_lo = 0;
              while (ox_lo < ow && ox_lo * stride + kx - pad < 0) ++ox_lo;
              int ox_hi = ow - 1;
              while (ox_hi >= 0 && ox_hi * stride + kx - pad >= wd) --ox_hi;
              if (ox_lo > ox_hi) continue;
              for (int oy = 0; oy < oh; ++oy) {
                const int iy = oy * stride + ky - pad;
                if (iy < 0 || iy >= h) continue;
                inner(co, ci, widx, oy, iy, ox_lo, ox_hi, kx);
              }
            }
        }
      }
  };

  kernel_loop([&](int co, int ci, size_t widx, int oy, int iy, int lo, int hi, int kx) {
    const double wvv = wv[widx];
    if (wvv == 0.0) return;
    const double* src = xv.data() + (static_cast<size_t>(ci) * h + iy) * wd;
    double* dst = out->v.data() + (static_cast<size_t>(co) * oh + oy) * ow;
    if (stride == 1) {
      const double* s = src + kx - pad;
      for (int ox = lo; ox <= hi; ++ox) dst[ox] += wvv * s[ox];
    } else {
      for (int ox = lo; ox <= hi; ++ox) dst[ox] += wvv * src[ox * stride + kx - pad];
    }
  });

  auto px = x.node(), pw = w.node();
  std::vector<std::shared_ptr<Node>> parents{px, pw};
  std::shared_ptr<Node> pb;
  if (b.defined()) {
    pb = b.node();
    parents.push_back(pb);
  }
  attach(out, parents,
         [px, pw, pb, kernel_loop, stride, pad, h, wd, oh, ow, cout](Node& self) {
           const bool need_x = px->requires_grad;
           const bool need_w = pw->requires_grad;
           double* gx_base = need_x ? px->grad_buf().data() : nullptr;
           double* gw_base = need_w ? pw->grad_buf().data() : nullptr;
           if (need_x || need_w) {
             kernel_loop([&](int co, int ci, size_t widx, int oy, int iy, int lo,
                             int hi, int kx) {
               const double* gout =
                   self.g.data() + (static_cast<size_t>(co) * oh + oy) * ow;
               if (need_x) {
                 const double wvv = pw->v[widx];
                 if (wvv != 0.0) {
                   double* gx = gx_base + (static_cast<size_t>(ci) * h + iy) * wd;
                   if (stride == 1) {
                     double* gxs = gx + kx - pad;
                     for (int ox = lo; ox <= hi; ++ox) gxs[ox] += wvv * gout[ox];
                   } else {
                     for (int ox = lo; ox <= hi; ++ox)
                       gx[ox * stride + kx - pad] += wvv * gout[ox];
                   }
                 }
               }
               if (need_w) {
                 const double* src =
                     px->v.data() + (static_cast<size_t>(ci) * h + iy) * wd;
                 double acc = 0.0;
                 if (stride == 1) {
                   const double* s = src + kx - pad;
                   for (int ox = lo; ox <= hi; ++ox) acc += s[ox] * gout[ox];
                 } else {
                   for (int ox = lo; ox <= hi; ++ox)
                     acc += src[ox * stride + kx - pad] * gout[ox];
                 }
                 gw_base[widx] += acc;
               }
             });
           }
           if (pb && pb->requires_grad) {
             auto& g = pb->grad_buf();
             for (int co = 0; co < cout; ++co) {
               const double* gout = self.g.data() + static_cast<size_t>(co) * oh * ow;
               double acc = 0.0;
               for (int i = 0; i < oh * ow; ++i) acc += gout[i];
               g[co] += acc;
             }
           }
         });
  return Tensor(out);
}

namespace {
// dst index for pixel_shuffle: out[c, y*r+dy, x*r+dx] = in[c*r^2 + dy*r + dx, y, x]
void shuffle_map(int c_out, int oh, int ow, int r, bool inverse,
                 const std::vector<double>& src, std::vector<double>& dst) {
  const int ih = oh / r, iw = ow / r;
  for (int c = 0; c < c_out; ++c)
    for (int y = 0; y < ih; ++y)
      for (int dy = 0; dy < r; ++dy)
        for (int x = 0; x < iw; ++x)
          for (int dx = 0; dx < r; ++dx) {
            const size_t big =
                (static_cast<size_t>(c) * oh + (y * r + dy)) * ow + (x * r + dx);
            const size_t small =
                ((static_cast<size_t>(c) * r * r + dy * static_cast<size_t>(r) + dx) *
                     ih +
                 y) *
                    iw +
                x;
            if (inverse)
              dst[small] += src[big];
            else
              dst[big] += src[small];
          }
}
}  // namespace

Tensor pixel_shuffle(const Tensor& x, int r) {
  require_shape(x, 3, "pixel_shuffle");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (c % (r * r) != 0) throw ContractError("pixel_shuffle: channels not divisible by r^2");
  const int oc = c / (r * r);
  auto out = make_node({oc, h * r, w * r});
  shuffle_map(oc, h * r, w * r, r, false, x.values(), out->v);
  auto px = x.node();
  attach(out, {px}, [px, oc, h, w, r](Node& self) {
    shuffle_map(oc, h * r, w * r, r, true, self.g, px->grad_buf());
  });
  return Tensor(out);
}

Tensor pixel_unshuffle(const Tensor& x, int r) {
  require_shape(x, 3, "pixel_unshuffle");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % r != 0 || w % r != 0)
    throw ContractError("pixel_unshuffle: spatial dims not divisible by r");
  auto out = make_node({c * r * r, h / r, w / r});
  shuffle_map(c, h, w, r, true, x.values(), out->v);
  auto px = x.node();
  attach(out, {px}, [px, c, h, w, r](Node& self) {
    shuffle_map(c, h, w, r, false, self.g, px->grad_buf());
  });
  return Tensor(out);
}

Tensor resize_bilinear(const Tensor& x, int oh, int ow) {
  require_shape(x, 3, "resize_bilinear");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (oh == h && ow == w) return reshape(x, x.shape());

  struct Tap {
    int i0, i1;
    double f;
  };
  auto make_taps = [](int in, int out) {
    std::vector<Tap> taps(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      double src = (o + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const int i0 = static_cast<int>(src);
      taps[o] = {i0, std::min(i0 + 1, in - 1), src - i0};
    }
    return taps;
  };
  const auto ty = make_taps(h, oh);
  const auto tx = make_taps(w, ow);

  auto out = make_node({c, oh, ow});
  const auto& xv = x.values();
  for (int ci = 0; ci < c; ++ci) {
    const double* plane = xv.data() + static_cast<size_t>(ci) * h * w;
    double* op = out->v.data() + static_cast<size_t>(ci) * oh * ow;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const Tap& a = ty[oy];
        const Tap& b = tx[ox];
        const double top = plane[static_cast<size_t>(a.i0) * w + b.i0] * (1 - b.f) +
                           plane[static_cast<size_t>(a.i0) * w + b.i1] * b.f;
        const double bot = plane[static_cast<size_t>(a.i1) * w + b.i0] * (1 - b.f) +
                           plane[static_cast<size_t>(a.i1) * w + b.i1] * b.f;
        op[static_cast<size_t>(oy) * ow + ox] = top * (1 - a.f) + bot * a.f;
      }
  }
  auto px = x.node();
  attach(out, {px}, [px, c, h, w, oh, ow, ty, tx](Node& self) {
    auto& g = px->grad_buf();
    for (int ci = 0; ci < c; ++ci) {
      double* gp = g.data() + static_cast<size_t>(ci) * h * w;
      const double* go = self.g.data() + static_cast<size_t>(ci) * oh * ow;
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const Tap& a = ty[oy];
          const Tap& b = tx[ox];
          const double gv = go[static_cast<size_t>(oy) * ow + ox];
          gp[static_cast<size_t>(a.i0) * w + b.i0] += gv * (1 - a.f) * (1 - b.f);
          gp[static_cast<size_t>(a.i0) * w + b.i1] += gv * (1 - a.f) * b.f;
          gp[static_cast<size_t>(a.i1) * w + b.i0] += gv * a.f * (1 - b.f);
          gp[static_cast<size_t>(a.i1) * w + b.i1] += gv * a.f * b.f;
        }
    }
  });
  return Tensor(out);
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  require_shape(a, 1, "cosine_similarity");
  require_same_shape(a, b, "cosine_similarity");
  auto norm2 = [](const Tensor& t) {
    double q = 0.0;
    for (double v : t.values()) q += v * v;
    return q;
  };
  if (norm2(a) < 1e-24 || norm2(b) < 1e-24)
    throw NumericError("cosine_similarity: zero vector");
  return div(dot(a, b), mul(sqrt_(dot(a, a)), sqrt_(dot(b, b))));
}

}  // namespace aio::ad

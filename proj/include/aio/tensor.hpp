#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace aio::ad {

using Shape = std::vector<int>;

int shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// One value in the dynamically built computation graph. Backward closures pull
// this node's gradient into its parents; children hold shared_ptrs to parents,
// so dropping the root frees the whole graph.
struct Node {
  std::vector<double> v;
  std::vector<double> g;  // allocated lazily, same size as v
  Shape shape;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buf() {
    if (g.size() != v.size()) g.assign(v.size(), 0.0);
    return g;
  }
};

// Value-semantic handle to a graph node.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int numel() const { return static_cast<int>(n_->v.size()); }
  int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }

  double* data() { return n_->v.data(); }
  const double* data() const { return n_->v.data(); }
  std::vector<double>& values() { return n_->v; }
  const std::vector<double>& values() const { return n_->v; }
  double item() const;

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool rg) { n_->requires_grad = rg; }
  std::vector<double>& grad() { return n_->grad_buf(); }
  void zero_grad() { n_->g.assign(n_->v.size(), 0.0); }

  std::shared_ptr<Node> node() const { return n_; }

private:
  std::shared_ptr<Node> n_;
};

// Runs reverse-mode accumulation from a scalar root (seeds d root = 1).
void backward(const Tensor& root);

// Copies values into a fresh constant leaf, cutting the graph.
Tensor detach(const Tensor& x);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor exp_(const Tensor& a);
Tensor log_(const Tensor& a);
Tensor sqrt_(const Tensor& a);
Tensor abs_(const Tensor& a);
Tensor tanh_(const Tensor& a);
Tensor gelu(const Tensor& a);  // tanh approximation, smooth everywhere
Tensor square(const Tensor& a);

// y = x * s with s a [1] tensor (gradients flow to both).
Tensor scale_by(const Tensor& x, const Tensor& s);
// y = x + s with s a [1] tensor broadcast over x.
Tensor add_broadcast(const Tensor& x, const Tensor& s);

// ---- reductions ----
Tensor sum_all(const Tensor& a);    // -> [1]
Tensor mean_all(const Tensor& a);   // -> [1]
Tensor mean_rows(const Tensor& a);  // [N,D] -> [D]
Tensor mean_spatial(const Tensor& a);  // [C,H,W] -> [C]
Tensor dot(const Tensor& a, const Tensor& b);  // 1-D -> [1]

// ---- shape ----
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor concat0(const std::vector<Tensor>& xs);          // along axis 0
Tensor slice0(const Tensor& a, int start, int length);  // along axis 0
Tensor stack_scalars(const std::vector<Tensor>& xs);    // k [1] tensors -> [k]
Tensor pick(const Tensor& a, int index);                // 1-D -> [1]

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
Tensor transpose2(const Tensor& a);               // [m,n] -> [n,m]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // w:[out,in]

// ---- normalization / activation over structured shapes ----
Tensor softmax_vec(const Tensor& a);        // 1-D
Tensor softmax_rows(const Tensor& a);       // [m,n], softmax over n
Tensor l2_normalize(const Tensor& a);       // 1-D, eps-stabilized
Tensor l2_normalize_rows(const Tensor& a);  // [m,n], rows normalized
// Per spatial position, normalize across channels; gamma/beta are [C].
Tensor layernorm_chw(const Tensor& x, const Tensor& gamma, const Tensor& beta);
// y[c,:,:] = s[c] * x[c,:,:] + t[c]
Tensor scale_shift_chw(const Tensor& x, const Tensor& s, const Tensor& t);

// ---- image-shaped ops ----
// x: [Cin,H,W]; w: [Cout,Cin/groups,kh,kw]; b: [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad, int groups = 1);
Tensor pixel_unshuffle(const Tensor& x, int r);  // [C,H,W] -> [C*r^2,H/r,W/r]
Tensor pixel_shuffle(const Tensor& x, int r);    // [C,H,W] -> [C/r^2,H*r,W*r]
Tensor resize_bilinear(const Tensor& x, int oh, int ow);

// cosine similarity of 1-D tensors; throws NumericError on a zero vector.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

}  // namespace aio::ad

#include "aio/nn.hpp"

#include <cmath>

#include "aio/errors.hpp"
#include "aio/rng.hpp"

namespace aio::nn {

ad::Tensor ParamStore::add(const std::string& name, ad::Tensor t) {
  if (has(name)) throw ContractError("duplicate parameter name: " + name);
  t.set_requires_grad(true);
  entries_.emplace_back(name, t);
  return t;
}

ad::Tensor ParamStore::create_gaussian(const std::string& name,
                                       const ad::Shape& shape, double std) {
  Rng rng(derive_seed(seed_, name));
  std::vector<double> v(static_cast<size_t>(ad::shape_numel(shape)));
  for (double& x : v) x = std * rng.gaussian();
  return add(name, ad::Tensor::from(shape, std::move(v)));
}

ad::Tensor ParamStore::create_constant(const std::string& name,
                                       const ad::Shape& shape, double value) {
  return add(name, ad::Tensor::full(shape, value));
}

bool ParamStore::has(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return true;
  return false;
}

ad::Tensor ParamStore::get(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw ContractError("unknown parameter: " + name);
}

int ParamStore::total_parameters() const {
  int n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void ParamStore::set_trainable(bool trainable) {
  trainable_ = trainable;
  for (auto& [name, t] : entries_) t.set_requires_grad(trainable);
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int cin, int cout,
               int k, int stride_, int pad_, int groups_, bool bias)
    : stride(stride_), pad(pad_ < 0 ? k / 2 : pad_), groups(groups_) {
  if (cin % groups != 0 || cout % groups != 0)
    throw ContractError("Conv2d " + name + ": groups must divide channels");
  const int fan_in = (cin / groups) * k * k;
  w = ps.create_gaussian(name + ".weight", {cout, cin / groups, k, k},
                         1.0 / std::sqrt(static_cast<double>(fan_in)));
  if (bias) b = ps.create_constant(name + ".bias", {cout}, 0.0);
}

ad::Tensor Conv2d::forward(const ad::Tensor& x) const {
  return ad::conv2d(x, w, b, stride, pad, groups);
}

Linear::Linear(ParamStore& ps, const std::string& name, int in, int out, bool bias) {
  w = ps.create_gaussian(name + ".weight", {out, in},
                         1.0 / std::sqrt(static_cast<double>(in)));
  if (bias) b = ps.create_constant(name + ".bias", {out}, 0.0);
}

ad::Tensor Linear::forward(const ad::Tensor& x) const {
  return ad::linear(x, w, b);
}

ChannelLayerNorm::ChannelLayerNorm(ParamStore& ps, const std::string& name,
                                   int channels) {
  gamma = ps.create_constant(name + ".gamma", {channels}, 1.0);
  beta = ps.create_constant(name + ".beta", {channels}, 0.0);
}

ad::Tensor ChannelLayerNorm::forward(const ad::Tensor& x) const {
  return ad::layernorm_chw(x, gamma, beta);
}

Adam::Adam(std::vector<std::pair<std::string, ad::Tensor>> params, double lr,
           double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].second.values().size(), 0.0);
    v_[i].assign(params_[i].second.values().size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& t = params_[i].second;
    if (!t.requires_grad()) continue;
    auto& val = t.values();
    auto& g = t.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < val.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const double mh = m[j] / bc1;
      const double vh = v[j] / bc2;
      val[j] -= lr_ * mh / (std::sqrt(vh) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

Adam::State Adam::state() const {
  State s;
  s.t = t_;
  for (size_t i = 0; i < params_.size(); ++i) {
    s.m.emplace_back(params_[i].first, m_[i]);
    s.v.emplace_back(params_[i].first, v_[i]);
  }
  return s;
}

void Adam::restore(const State& s) {
  t_ = s.t;
  if (s.m.size() != params_.size() || s.v.size() != params_.size())
    throw ContractError("optimizer state does not match parameter list");
  for (size_t i = 0; i < params_.size(); ++i) {
    if (s.m[i].first != params_[i].first)
      throw ContractError("optimizer state key mismatch: " + s.m[i].first);
    m_[i] = s.m[i].second;
    v_[i] = s.v[i].second;
  }
}

}  // namespace aio::nn

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "aio/tensor.hpp"

namespace aio::nn {

// Named parameter registry. Every parameter is seeded from
// (store seed, parameter name), so initialization is independent of creation
// order; the entry list keeps insertion order for deterministic optimizer
// iteration and checkpoint layout.
class ParamStore {
public:
  explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

  ad::Tensor create_gaussian(const std::string& name, const ad::Shape& shape,
                             double std);
  ad::Tensor create_constant(const std::string& name, const ad::Shape& shape,
                             double value);

  bool has(const std::string& name) const;
  ad::Tensor get(const std::string& name) const;
  const std::vector<std::pair<std::string, ad::Tensor>>& entries() const {
    return entries_;
  }
  std::uint64_t seed() const { return seed_; }
  int total_parameters() const;

  // Flips requires_grad on every parameter. Frozen stores keep values but
  // expose no trainable parameters and retain no graph during forward passes.
  void set_trainable(bool trainable);
  bool trainable() const { return trainable_; }
  void zero_grad();

private:
  ad::Tensor add(const std::string& name, ad::Tensor t);
  std::uint64_t seed_;
  bool trainable_ = true;
  std::vector<std::pair<std::string, ad::Tensor>> entries_;
};

struct Conv2d {
  Conv2d() = default;
  // pad < 0 means "same" padding (k/2)
  Conv2d(ParamStore& ps, const std::string& name, int cin, int cout, int k,
         int stride = 1, int pad = -1, int groups = 1, bool bias = true);
  ad::Tensor forward(const ad::Tensor& x) const;

  ad::Tensor w, b;
  int stride = 1, pad = 0, groups = 1;
};

struct Linear {
  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int in, int out, bool bias = true);
  ad::Tensor forward(const ad::Tensor& x) const;

  ad::Tensor w, b;
};

// LayerNorm across channels, per spatial position.
struct ChannelLayerNorm {
  ChannelLayerNorm() = default;
  ChannelLayerNorm(ParamStore& ps, const std::string& name, int channels);
  ad::Tensor forward(const ad::Tensor& x) const;

  ad::Tensor gamma, beta;
};

// AdamW-style moments with bias correction (plain Adam update, no decoupled
// weight decay; decay is not used anywhere in this project).
class Adam {
public:
  Adam(std::vector<std::pair<std::string, ad::Tensor>> params, double lr,
       double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step();
  void zero_grad();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  long long t() const { return t_; }

  // Bit-exact state round-trip for checkpoint resume.
  struct State {
    long long t;
    std::vector<std::pair<std::string, std::vector<double>>> m, v;
  };
  State state() const;
  void restore(const State& s);

private:
  std::vector<std::pair<std::string, ad::Tensor>> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
};

}  // namespace aio::nn

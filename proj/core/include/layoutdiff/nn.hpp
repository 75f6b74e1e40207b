#pragma once

#include <memory>
#include <string>
#include <vector>

#include "layoutdiff/autograd.hpp"
#include "layoutdiff/rng.hpp"

namespace layoutdiff::nn {

using ag::Graph;
using ag::Parameter;
using ag::Segments;
using ag::Var;

/// Owns every trainable tensor under a stable dotted name.
class ParamStore {
 public:
  Parameter& add(std::string name, Mat init);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::vector<std::unique_ptr<Parameter>>& all() { return params_; }
  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

/// Truncated normal (cut at two standard deviations).
Mat trunc_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, double std);

struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  /// Weights ~ truncated normal with the given std; std == 0 gives zeros.
  static Linear make(ParamStore& ps, Rng& rng, const std::string& name, int in, int out, double std = 0.02);
  Var operator()(Graph& g, Var x) const;
};

struct LayerNorm {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;

  static LayerNorm make(ParamStore& ps, const std::string& name, int dim);
  Var operator()(Graph& g, Var x) const;
};

struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;

  static MultiHeadAttention make(ParamStore& ps, Rng& rng, const std::string& name, int dim, int heads);
  Var operator()(Graph& g, Var queries, Var keys, const Segments& qsegs, const Segments& ksegs) const;
};

struct FeedForward {
  Linear fc1, fc2;

  static FeedForward make(ParamStore& ps, Rng& rng, const std::string& name, int dim, int hidden);
  Var operator()(Graph& g, Var x) const;
};

/// Pre-norm self-attention block: x + SA(LN(x)), then + FFN(LN(.)).
struct EncoderBlock {
  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  FeedForward ffn;

  static EncoderBlock make(ParamStore& ps, Rng& rng, const std::string& name, int dim, int heads, int hidden);
  Var operator()(Graph& g, Var x, const Segments& segs) const;
};

}  // namespace layoutdiff::nn

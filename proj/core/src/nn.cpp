#include "layoutdiff/nn.hpp"

#include "layoutdiff/error.hpp"

namespace layoutdiff::nn {

Parameter& ParamStore::add(std::string name, Mat init) {
  if (find(name)) throw ConfigError("duplicate parameter name " + name);
  params_.push_back(std::make_unique<Parameter>(Parameter{std::move(name), std::move(init), {}}));
  auto& p = *params_.back();
  p.grad = Mat::Zero(p.value.rows(), p.value.cols());
  return p;
}

Parameter* ParamStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Parameter* ParamStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

Mat trunc_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, double std) {
  Mat m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) {
      double z;
      do z = rng.normal();
      while (std::abs(z) > 2.0);
      m(r, c) = std * z;
    }
  return m;
}

Linear Linear::make(ParamStore& ps, Rng& rng, const std::string& name, int in, int out, double std) {
  Linear l;
  l.weight = &ps.add(name + ".weight", std == 0.0 ? Mat::Zero(in, out) : trunc_normal(rng, in, out, std));
  l.bias = &ps.add(name + ".bias", Mat::Zero(1, out));
  return l;
}

Var Linear::operator()(Graph& g, Var x) const { return ag::linear(x, g.param(*weight), g.param(*bias)); }

LayerNorm LayerNorm::make(ParamStore& ps, const std::string& name, int dim) {
  return {&ps.add(name + ".gamma", Mat::Ones(1, dim)), &ps.add(name + ".beta", Mat::Zero(1, dim))};
}

Var LayerNorm::operator()(Graph& g, Var x) const { return ag::layer_norm(x, g.param(*gamma), g.param(*beta)); }

MultiHeadAttention MultiHeadAttention::make(ParamStore& ps, Rng& rng, const std::string& name, int dim, int heads) {
  if (dim % heads != 0) throw ConfigError("attention width must be divisible by the head count");
  MultiHeadAttention m;
  m.q = Linear::make(ps, rng, name + ".q", dim, dim);
  m.k = Linear::make(ps, rng, name + ".k", dim, dim);
  m.v = Linear::make(ps, rng, name + ".v", dim, dim);
  m.o = Linear::make(ps, rng, name + ".o", dim, dim);
  m.heads = heads;
  return m;
}

Var MultiHeadAttention::operator()(Graph& g, Var queries, Var keys, const Segments& qsegs,
                                   const Segments& ksegs) const {
  Var att = ag::attention(q(g, queries), k(g, keys), v(g, keys), qsegs, ksegs, heads);
  return o(g, att);
}

FeedForward FeedForward::make(ParamStore& ps, Rng& rng, const std::string& name, int dim, int hidden) {
  return {Linear::make(ps, rng, name + ".fc1", dim, hidden), Linear::make(ps, rng, name + ".fc2", hidden, dim)};
}

Var FeedForward::operator()(Graph& g, Var x) const { return fc2(g, ag::gelu(fc1(g, x))); }

EncoderBlock EncoderBlock::make(ParamStore& ps, Rng& rng, const std::string& name, int dim, int heads, int hidden) {
  EncoderBlock b;
  b.ln1 = LayerNorm::make(ps, name + ".ln1", dim);
  b.attn = MultiHeadAttention::make(ps, rng, name + ".attn", dim, heads);
  b.ln2 = LayerNorm::make(ps, name + ".ln2", dim);
  b.ffn = FeedForward::make(ps, rng, name + ".ffn", dim, hidden);
  return b;
}

Var EncoderBlock::operator()(Graph& g, Var x, const Segments& segs) const {
  Var h = ln1(g, x);
  x = ag::add(x, attn(g, h, h, segs, segs));
  return ag::add(x, ffn(g, ln2(g, x)));
}

}  // namespace layoutdiff::nn

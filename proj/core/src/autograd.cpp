#include "layoutdiff/autograd.hpp"

#include <cmath>
#include <numbers>

#include "layoutdiff/error.hpp"

namespace layoutdiff::ag {

Segments Segments::uniform(int batch, int rows_per_sample) {
  Segments s;
  s.offsets.resize(static_cast<std::size_t>(batch) + 1);
  for (int b = 0; b <= batch; ++b) s.offsets[static_cast<std::size_t>(b)] = b * rows_per_sample;
  return s;
}

Segments Segments::from_sizes(const std::vector<int>& sizes) {
  Segments s;
  for (int n : sizes) s.offsets.push_back(s.offsets.back() + n);
  return s;
}

std::vector<int> Segments::row_owner() const {
  std::vector<int> owner(static_cast<std::size_t>(total()));
  for (int b = 0; b < batch(); ++b)
    for (int r = begin(b); r < begin(b) + size(b); ++r) owner[static_cast<std::size_t>(r)] = b;
  return owner;
}

const Mat& Var::value() const { return graph->value(id); }

Var Graph::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), nullptr, nullptr, {}, false, {}});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(Parameter& p) {
  nodes_.push_back(Node{{}, &p.value, record_ ? &p : nullptr, {}, false, {}});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const Mat& Graph::value(int id) const {
  const auto& n = nodes_[static_cast<std::size_t>(id)];
  return n.ref ? *n.ref : n.value;
}

Var Graph::push(Mat value, Backward back) {
  nodes_.push_back(Node{std::move(value), nullptr, nullptr, {}, false, record_ ? std::move(back) : Backward{}});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Mat& Graph::grad(int id) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.has_grad) {
    const Mat& v = n.ref ? *n.ref : n.value;
    n.grad = Mat::Zero(v.rows(), v.cols());
    n.has_grad = true;
  }
  return n.grad;
}

void Graph::backward(Var out) {
  if (!record_) throw Error("backward() on a graph built without recording");
  if (value(out.id).size() != 1) throw Error("backward() needs a scalar output");
  grad(out.id)(0, 0) += 1.0;
  for (int id = out.id; id >= 0; --id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) continue;
    if (n.back) n.back(*this, id);
    if (n.param) {
      if (n.param->grad.size() == 0) n.param->grad = Mat::Zero(n.param->value.rows(), n.param->value.cols());
      n.param->grad += n.grad;
    }
  }
}

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(what);
}

Graph& graph_of(Var a) { return *a.graph; }

}  // namespace

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  auto& g = graph_of(a);
  Mat out = a.value() * b.value();
  return g.push(std::move(out), [a, b](Graph& g, int self) {
    const Mat& d = g.grad(self);
    g.grad(a.id).noalias() += d * g.value(b.id).transpose();
    g.grad(b.id).noalias() += g.value(a.id).transpose() * d;
  });
}

Var linear(Var x, Var w, Var b) {
  require(x.cols() == w.rows(), "linear: input width does not match weight");
  require(b.rows() == 1 && b.cols() == w.cols(), "linear: bias shape");
  auto& g = graph_of(x);
  Mat out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return g.push(std::move(out), [x, w, b](Graph& g, int self) {
    const Mat& d = g.grad(self);
    g.grad(x.id).noalias() += d * g.value(w.id).transpose();
    g.grad(w.id).noalias() += g.value(x.id).transpose() * d;
    g.grad(b.id) += d.colwise().sum();
  });
}

Var linear(Var x, Var w) { return matmul(x, w); }

Var add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  auto& g = graph_of(a);
  Mat out = a.value() + b.value();
  return g.push(std::move(out), [a, b](Graph& g, int self) {
    const Mat& d = g.grad(self);
    g.grad(a.id) += d;
    g.grad(b.id) += d;
  });
}

Var add_segment_rows(Var a, Var rows, const Segments& segs) {
  require(rows.rows() == segs.batch() && rows.cols() == a.cols() && segs.total() == a.rows(),
          "add_segment_rows: shape mismatch");
  auto& g = graph_of(a);
  Mat out = a.value();
  const Mat& r = rows.value();
  for (int b = 0; b < segs.batch(); ++b)
    out.middleRows(segs.begin(b), segs.size(b)).rowwise() += r.row(b);
  return g.push(std::move(out), [a, rows, segs](Graph& g, int self) {
    const Mat& d = g.grad(self);
    g.grad(a.id) += d;
    Mat& dr = g.grad(rows.id);
    for (int b = 0; b < segs.batch(); ++b) dr.row(b) += d.middleRows(segs.begin(b), segs.size(b)).colwise().sum();
  });
}

Var add_tiled(Var a, Var block) {
  const auto n = block.rows();
  require(n > 0 && a.rows() % n == 0 && a.cols() == block.cols(), "add_tiled: shape mismatch");
  auto& g = graph_of(a);
  Mat out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); r += n) out.middleRows(r, n) += block.value();
  return g.push(std::move(out), [a, block, n](Graph& g, int self) {
    const Mat& d = g.grad(self);
    g.grad(a.id) += d;
    Mat& db = g.grad(block.id);
    for (Eigen::Index r = 0; r < d.rows(); r += n) db += d.middleRows(r, n);
  });
}

Var tile(Var block, int times) {
  auto& g = graph_of(block);
  const auto n = block.rows();
  Mat out(n * times, block.cols());
  for (int t = 0; t < times; ++t) out.middleRows(t * n, n) = block.value();
  return g.push(std::move(out), [block, n, times](Graph& g, int self) {
    const Mat& d = g.grad(self);
    Mat& db = g.grad(block.id);
    for (int t = 0; t < times; ++t) db += d.middleRows(t * n, n);
  });
}

Var scale_segments(Var a, Var s, const Segments& segs) {
  require(s.rows() == segs.batch() && s.cols() == 1 && segs.total() == a.rows(), "scale_segments: shape mismatch");
  auto& g = graph_of(a);
  Mat out = a.value();
  for (int b = 0; b < segs.batch(); ++b) out.middleRows(segs.begin(b), segs.size(b)) *= s.value()(b, 0);
  return g.push(std::move(out), [a, s, segs](Graph& g, int self) {
    const Mat& d = g.grad(self);
    const Mat& av = g.value(a.id);
    const Mat& sv = g.value(s.id);
    Mat& da = g.grad(a.id);
    Mat& ds = g.grad(s.id);
    for (int b = 0; b < segs.batch(); ++b) {
      const auto rows = d.middleRows(segs.begin(b), segs.size(b));
      da.middleRows(segs.begin(b), segs.size(b)) += sv(b, 0) * rows;
      ds(b, 0) += rows.cwiseProduct(av.middleRows(segs.begin(b), segs.size(b))).sum();
    }
  });
}

Var gelu(Var a) {
  auto& g = graph_of(a);
  const Mat& x = a.value();
  Mat out = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); });
  return g.push(std::move(out), [a](Graph& g, int self) {
    const Mat& x = g.value(a.id);
    const Mat slope = x.unaryExpr([](double v) {
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
      return cdf + v * pdf;
    });
    g.grad(a.id) += g.grad(self).cwiseProduct(slope);
  });
}

namespace {

double softplus_value(double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); }
double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

Var softplus(Var a) {
  auto& g = graph_of(a);
  Mat out = a.value().unaryExpr(&softplus_value);
  return g.push(std::move(out), [a](Graph& g, int self) {
    g.grad(a.id) += g.grad(self).cwiseProduct(g.value(a.id).unaryExpr(&sigmoid));
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const auto cols = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == cols && beta.rows() == 1 && beta.cols() == cols,
          "layer_norm: parameter shape");
  auto& g = graph_of(x);
  const Mat& xv = x.value();
  Mat xhat(xv.rows(), cols);
  Vec inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
  }
  Mat out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return g.push(std::move(out), [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g,
                                                                                                      int self) {
    const Mat& d = g.grad(self);
    g.grad(gamma.id) += d.cwiseProduct(xhat).colwise().sum();
    g.grad(beta.id) += d.colwise().sum();
    const Mat dxhat = d.array().rowwise() * g.value(gamma.id).row(0).array();
    Mat& dx = g.grad(x.id);
    const double n = static_cast<double>(d.cols());
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
      const double m1 = dxhat.row(r).sum() / n;
      const double m2 = dxhat.row(r).dot(xhat.row(r)) / n;
      dx.row(r).array() += inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
    }
  });
}

Var attention(Var q, Var k, Var v, const Segments& qsegs, const Segments& ksegs, int heads) {
  const auto d = q.cols();
  require(heads > 0 && d % heads == 0, "attention: width not divisible by heads");
  require(k.cols() == d && v.cols() == d && k.rows() == v.rows(), "attention: k/v shape");
  require(qsegs.total() == q.rows() && ksegs.total() == k.rows() && qsegs.batch() == ksegs.batch(),
          "attention: segment mismatch");
  const auto dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto& g = graph_of(q);
  const Mat& qv = q.value();
  const Mat& kv = k.value();
  const Mat& vv = v.value();
  Mat out(q.rows(), d);
  std::vector<Mat> probs;
  probs.reserve(static_cast<std::size_t>(qsegs.batch() * heads));
  for (int b = 0; b < qsegs.batch(); ++b) {
    const int q0 = qsegs.begin(b), nq = qsegs.size(b);
    const int k0 = ksegs.begin(b), nk = ksegs.size(b);
    require(nk > 0 || nq == 0, "attention: sample without keys");
    for (int h = 0; h < heads; ++h) {
      Mat s = (qv.block(q0, h * dh, nq, dh) * kv.block(k0, h * dh, nk, dh).transpose()) * scale;
      for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const double m = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - m).exp();
        s.row(r) /= s.row(r).sum();
      }
      out.block(q0, h * dh, nq, dh).noalias() = s * vv.block(k0, h * dh, nk, dh);
      probs.push_back(std::move(s));
    }
  }
  return g.push(std::move(out), [q, k, v, qsegs, ksegs, heads, dh, scale, probs = std::move(probs)](Graph& g,
                                                                                                   int self) {
    const Mat& dout = g.grad(self);
    const Mat& qv = g.value(q.id);
    const Mat& kv = g.value(k.id);
    const Mat& vv = g.value(v.id);
    Mat& dq = g.grad(q.id);
    Mat& dk = g.grad(k.id);
    Mat& dv = g.grad(v.id);
    std::size_t idx = 0;
    for (int b = 0; b < qsegs.batch(); ++b) {
      const int q0 = qsegs.begin(b), nq = qsegs.size(b);
      const int k0 = ksegs.begin(b), nk = ksegs.size(b);
      for (int h = 0; h < heads; ++h, ++idx) {
        const Mat& p = probs[idx];
        const auto dob = dout.block(q0, h * dh, nq, dh);
        dv.block(k0, h * dh, nk, dh).noalias() += p.transpose() * dob;
        Mat dp = dob * vv.block(k0, h * dh, nk, dh).transpose();
        const Vec row_dot = dp.cwiseProduct(p).rowwise().sum();
        Mat ds = p.cwiseProduct(dp.colwise() - row_dot);
        dq.block(q0, h * dh, nq, dh).noalias() += scale * ds * kv.block(k0, h * dh, nk, dh);
        dk.block(k0, h * dh, nk, dh).noalias() += scale * ds.transpose() * qv.block(q0, h * dh, nq, dh);
      }
    }
  });
}

Var segment_mean(Var a, const Segments& segs) {
  require(segs.total() == a.rows(), "segment_mean: segment mismatch");
  auto& g = graph_of(a);
  Mat out(segs.batch(), a.cols());
  for (int b = 0; b < segs.batch(); ++b) {
    require(segs.size(b) > 0, "segment_mean: empty segment");
    out.row(b) = a.value().middleRows(segs.begin(b), segs.size(b)).colwise().mean();
  }
  return g.push(std::move(out), [a, segs](Graph& g, int self) {
    const Mat& d = g.grad(self);
    Mat& da = g.grad(a.id);
    for (int b = 0; b < segs.batch(); ++b)
      da.middleRows(segs.begin(b), segs.size(b)).rowwise() += d.row(b) / static_cast<double>(segs.size(b));
  });
}

Var concat_segments(Var a, const Segments& sa, Var b, const Segments& sb, Segments& out_segs) {
  require(sa.batch() == sb.batch() && a.cols() == b.cols() && sa.total() == a.rows() && sb.total() == b.rows(),
          "concat_segments: shape mismatch");
  auto& g = graph_of(a);
  std::vector<int> sizes;
  for (int i = 0; i < sa.batch(); ++i) sizes.push_back(sa.size(i) + sb.size(i));
  out_segs = Segments::from_sizes(sizes);
  Mat out(out_segs.total(), a.cols());
  for (int i = 0; i < sa.batch(); ++i) {
    out.middleRows(out_segs.begin(i), sa.size(i)) = a.value().middleRows(sa.begin(i), sa.size(i));
    out.middleRows(out_segs.begin(i) + sa.size(i), sb.size(i)) = b.value().middleRows(sb.begin(i), sb.size(i));
  }
  return g.push(std::move(out), [a, sa, b, sb, os = out_segs](Graph& g, int self) {
    const Mat& d = g.grad(self);
    Mat& da = g.grad(a.id);
    Mat& db = g.grad(b.id);
    for (int i = 0; i < sa.batch(); ++i) {
      da.middleRows(sa.begin(i), sa.size(i)) += d.middleRows(os.begin(i), sa.size(i));
      db.middleRows(sb.begin(i), sb.size(i)) += d.middleRows(os.begin(i) + sa.size(i), sb.size(i));
    }
  });
}

Var select_rows(Var a, Var fill, const std::vector<char>& use_fill) {
  require(fill.rows() == 1 && fill.cols() == a.cols() && static_cast<Eigen::Index>(use_fill.size()) == a.rows(),
          "select_rows: shape mismatch");
  auto& g = graph_of(a);
  Mat out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    if (use_fill[static_cast<std::size_t>(r)]) out.row(r) = fill.value().row(0);
  return g.push(std::move(out), [a, fill, use_fill](Graph& g, int self) {
    const Mat& d = g.grad(self);
    Mat& da = g.grad(a.id);
    Mat& df = g.grad(fill.id);
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
      if (use_fill[static_cast<std::size_t>(r)])
        df.row(0) += d.row(r);
      else
        da.row(r) += d.row(r);
    }
  });
}

Var masked_mse(Var pred, const Mat& target, const Mat& weight) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols() && weight.rows() == target.rows() &&
              weight.cols() == target.cols(),
          "masked_mse: shape mismatch");
  auto& g = graph_of(pred);
  const double n = weight.sum();
  Mat out(1, 1);
  if (n <= 0.0) {
    out(0, 0) = 0.0;
    return g.push(std::move(out), {});
  }
  Mat diff = pred.value() - target;
  out(0, 0) = weight.cwiseProduct(diff.cwiseProduct(diff)).sum() / n;
  return g.push(std::move(out), [pred, weight, n, diff = std::move(diff)](Graph& g, int self) {
    const double d = g.grad(self)(0, 0);
    g.grad(pred.id) += (2.0 * d / n) * weight.cwiseProduct(diff);
  });
}

}  // namespace layoutdiff::ag

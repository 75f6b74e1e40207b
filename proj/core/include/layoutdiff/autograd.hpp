#pragma once

#include <functional>
#include <string>
#include <vector>

#include "layoutdiff/linalg.hpp"

/// Minimal tape-based reverse-mode differentiation over dense matrices.
///
/// A batch of variable-length sequences is stored as one tall matrix, sample
/// after sample; `Segments` records where each sample's rows begin. Row-wise
/// ops (linear layers, norms, activations) run on the whole stack at once,
/// attention and pooling respect segment boundaries.
namespace layoutdiff::ag {

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
};

struct Segments {
  /// Size batch+1; sample b owns rows [offsets[b], offsets[b+1]).
  std::vector<int> offsets{0};

  static Segments uniform(int batch, int rows_per_sample);
  static Segments from_sizes(const std::vector<int>& sizes);
  int batch() const { return static_cast<int>(offsets.size()) - 1; }
  int begin(int b) const { return offsets[static_cast<std::size_t>(b)]; }
  int size(int b) const { return offsets[static_cast<std::size_t>(b) + 1] - offsets[static_cast<std::size_t>(b)]; }
  int total() const { return offsets.back(); }
  /// Sample index of every row.
  std::vector<int> row_owner() const;
};

class Graph;

struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Graph {
 public:
  /// With `record == false` no backward closures are stored (inference).
  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Mat value);
  /// Leaf bound to a parameter; backward() accumulates into `p.grad`.
  Var param(Parameter& p);

  const Mat& value(int id) const;
  bool recording() const { return record_; }

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates to every leaf.
  void backward(Var out);

  using Backward = std::function<void(Graph&, int self)>;
  Var push(Mat value, Backward back);
  /// Gradient buffer of node `id`, zero-initialized on first use.
  Mat& grad(int id);
  bool has_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].has_grad; }

 private:
  struct Node {
    Mat value;
    const Mat* ref = nullptr;
    Parameter* param = nullptr;
    Mat grad;
    bool has_grad = false;
    Backward back;
  };
  bool record_;
  std::vector<Node> nodes_;
};

/// a * b
Var matmul(Var a, Var b);
/// x * w + b (b is 1 x out, broadcast over rows)
Var linear(Var x, Var w, Var b);
Var linear(Var x, Var w);
Var add(Var a, Var b);
/// Adds row `b` of `rows` (batch x cols) to every row of segment b.
Var add_segment_rows(Var a, Var rows, const Segments& segs);
/// Adds `block` (n x cols) to every consecutive group of n rows.
Var add_tiled(Var a, Var block);
/// Stacks `block` vertically `times` times.
Var tile(Var block, int times);
/// Multiplies every row of segment b by scalar s(b, 0).
Var scale_segments(Var a, Var s, const Segments& segs);
Var gelu(Var a);
Var softplus(Var a);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
/// Multi-head scaled dot-product attention; queries of sample b attend only
/// to keys of sample b. q/k/v are already projected.
Var attention(Var q, Var k, Var v, const Segments& qsegs, const Segments& ksegs, int heads);
/// Per-segment mean of rows (batch x cols).
Var segment_mean(Var a, const Segments& segs);
/// Per-sample row concatenation [a_b ; b_b]; `out_segs` receives the layout.
Var concat_segments(Var a, const Segments& sa, Var b, const Segments& sb, Segments& out_segs);
/// Row r is `fill` (1 x cols) where use_fill[r] is set, else row r of `a`.
Var select_rows(Var a, Var fill, const std::vector<char>& use_fill);
/// sum(w * (pred - target)^2) / sum(w); zero (and no gradient) when sum(w) == 0.
Var masked_mse(Var pred, const Mat& target, const Mat& weight);

}  // namespace layoutdiff::ag

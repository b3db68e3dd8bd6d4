#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "denc/tensor.hpp"

namespace denc {

class GraphError : public std::runtime_error {
 public:
  explicit GraphError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Op {
  leaf,
  matmul,
  transpose,
  add,
  sub,
  mul,
  scale,
  shift,
  tanh_fn,
  relu,
  abs_fn,
  log_fn,
  sqrt_fn,
  clamp,
  softmax_rows,
  layernorm_rows,
  embed_lookup,
  concat_rows,
  concat_cols,
  slice_rows,
  slice_cols,
  sum_all,
  mean_all,
  l2norm_rows,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::matmul: return "matmul";
    case Op::transpose: return "transpose";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::shift: return "shift";
    case Op::tanh_fn: return "tanh";
    case Op::relu: return "relu";
    case Op::abs_fn: return "abs";
    case Op::log_fn: return "log";
    case Op::sqrt_fn: return "sqrt";
    case Op::clamp: return "clamp";
    case Op::softmax_rows: return "softmax";
    case Op::layernorm_rows: return "layernorm";
    case Op::embed_lookup: return "embed_lookup";
    case Op::concat_rows: return "concat_rows";
    case Op::concat_cols: return "concat_cols";
    case Op::slice_rows: return "slice_rows";
    case Op::slice_cols: return "slice_cols";
    case Op::sum_all: return "sum";
    case Op::mean_all: return "mean";
    case Op::l2norm_rows: return "l2_normalize";
  }
  return "?";
}

// Handle into a Tape. Plain index; cheap to copy.
struct Val {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Eager reverse-mode tape over a fixed op set. Values are computed as ops
// are recorded; backward() runs the reverse sweep exactly once, in reverse
// topological (= recording) order. Single-writer; see module docs.
template <typename S>
class Tape {
 public:
  static constexpr S kLayerNormEps = S(1e-5);
  static constexpr S kNormFloor = S(1e-12);

  Val leaf(Tensor<S> v, bool requires_grad = false, std::string name = {}) {
    Node n;
    n.op = Op::leaf;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    n.name = std::move(name);
    return push(std::move(n));
  }

  // ---- binary ----

  Val matmul(Val a, Val b) {
    const Tensor<S>& A = value(a);
    const Tensor<S>& B = value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.shape[1] != B.shape[0]) {
      fail(Op::matmul, a, b);
    }
    const int64_t m = A.shape[0], k = A.shape[1], n = B.shape[1];
    Tensor<S> out({m, n});
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t p = 0; p < k; ++p) {
        const S av = A.at(i, p);
        if (av == S(0)) continue;
        const S* brow = &B.data[static_cast<size_t>(p * n)];
        S* orow = &out.data[static_cast<size_t>(i * n)];
        for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
    return push_op(Op::matmul, {a, b}, std::move(out));
  }

  Val add(Val a, Val b) { return ewise(Op::add, a, b); }
  Val sub(Val a, Val b) { return ewise(Op::sub, a, b); }
  Val mul(Val a, Val b) { return ewise(Op::mul, a, b); }

  // ---- unary with scalar attribute ----

  Val scale(Val a, S c) {
    Tensor<S> out = value(a);
    for (S& v : out.data) v *= c;
    Val r = push_op(Op::scale, {a}, std::move(out));
    node(r).s0 = c;
    return r;
  }

  Val shift(Val a, S c) {
    Tensor<S> out = value(a);
    for (S& v : out.data) v += c;
    Val r = push_op(Op::shift, {a}, std::move(out));
    node(r).s0 = c;
    return r;
  }

  Val clamp(Val a, S lo, S hi) {
    Tensor<S> out = value(a);
    for (S& v : out.data) v = std::min(hi, std::max(lo, v));
    Val r = push_op(Op::clamp, {a}, std::move(out));
    node(r).s0 = lo;
    node(r).s1 = hi;
    return r;
  }

  // ---- unary ----

  Val tanh(Val a) {
    Tensor<S> out = value(a);
    for (S& v : out.data) v = std::tanh(v);
    return push_op(Op::tanh_fn, {a}, std::move(out));
  }

  Val relu(Val a) {
    Tensor<S> out = value(a);
    for (S& v : out.data) v = v > S(0) ? v : S(0);
    return push_op(Op::relu, {a}, std::move(out));
  }

  Val abs(Val a) {
    Tensor<S> out = value(a);
    for (S& v : out.data) v = std::abs(v);
    return push_op(Op::abs_fn, {a}, std::move(out));
  }

  Val log(Val a) {
    Tensor<S> out = value(a);
    for (S& v : out.data) {
      if (v <= S(0)) throw GraphError("log: non-positive input; clamp first");
      v = std::log(v);
    }
    return push_op(Op::log_fn, {a}, std::move(out));
  }

  // sqrt(x + eps); eps keeps the derivative finite at x == 0.
  Val sqrt(Val a, S eps = S(0)) {
    Tensor<S> out = value(a);
    for (S& v : out.data) {
      if (v + eps < S(0)) throw GraphError("sqrt: negative input");
      v = std::sqrt(v + eps);
    }
    Val r = push_op(Op::sqrt_fn, {a}, std::move(out));
    node(r).s0 = eps;
    return r;
  }

  Val transpose(Val a) {
    const Tensor<S>& A = value(a);
    if (A.rank() != 2) fail(Op::transpose, a);
    Tensor<S> out({A.shape[1], A.shape[0]});
    for (int64_t i = 0; i < A.shape[0]; ++i)
      for (int64_t j = 0; j < A.shape[1]; ++j) out.at(j, i) = A.at(i, j);
    return push_op(Op::transpose, {a}, std::move(out));
  }

  Val softmax_rows(Val a) {
    const Tensor<S>& A = value(a);
    if (A.rank() != 2) fail(Op::softmax_rows, a);
    Tensor<S> out = A;
    const int64_t R = A.shape[0], C = A.shape[1];
    for (int64_t i = 0; i < R; ++i) {
      S mx = out.at(i, 0);
      for (int64_t j = 1; j < C; ++j) mx = std::max(mx, out.at(i, j));
      S sum = S(0);
      for (int64_t j = 0; j < C; ++j) {
        S e = std::exp(out.at(i, j) - mx);
        out.at(i, j) = e;
        sum += e;
      }
      for (int64_t j = 0; j < C; ++j) out.at(i, j) /= sum;
    }
    return push_op(Op::softmax_rows, {a}, std::move(out));
  }

  // Normalizes each row to zero mean, unit variance (variance floored at
  // kLayerNormEps; a constant row maps to zeros). Affine gain/bias are
  // separate mul/add ops.
  Val layernorm_rows(Val a) {
    const Tensor<S>& A = value(a);
    if (A.rank() != 2) fail(Op::layernorm_rows, a);
    Tensor<S> out = A;
    const int64_t R = A.shape[0], C = A.shape[1];
    for (int64_t i = 0; i < R; ++i) {
      S mean = S(0);
      for (int64_t j = 0; j < C; ++j) mean += A.at(i, j);
      mean /= S(C);
      S var = S(0);
      for (int64_t j = 0; j < C; ++j) {
        S d = A.at(i, j) - mean;
        var += d * d;
      }
      var /= S(C);
      const S inv = S(1) / std::sqrt(var + kLayerNormEps);
      for (int64_t j = 0; j < C; ++j) out.at(i, j) = (A.at(i, j) - mean) * inv;
    }
    return push_op(Op::layernorm_rows, {a}, std::move(out));
  }

  // table: [V, d]; ids select rows. Backward scatter-adds into the table.
  Val embed_lookup(Val table, std::vector<int> ids) {
    const Tensor<S>& T = value(table);
    if (T.rank() != 2) fail(Op::embed_lookup, table);
    const int64_t V = T.shape[0], d = T.shape[1];
    for (int id : ids) {
      if (id < 0 || id >= V) {
        throw GraphError("embed_lookup: id " + std::to_string(id) + " outside table rows " +
                         std::to_string(V) + " (node " + std::to_string(size()) + ")");
      }
    }
    Tensor<S> out({static_cast<int64_t>(ids.size()), d});
    for (size_t r = 0; r < ids.size(); ++r) {
      const S* src = &T.data[static_cast<size_t>(ids[r] * d)];
      std::copy(src, src + d, &out.data[r * static_cast<size_t>(d)]);
    }
    Val v = push_op(Op::embed_lookup, {table}, std::move(out));
    node(v).ids = std::move(ids);
    return v;
  }

  Val concat_rows(std::span<const Val> parts) { return concat(parts, /*axis=*/0); }
  Val concat_cols(std::span<const Val> parts) { return concat(parts, /*axis=*/1); }

  Val slice_rows(Val a, int64_t begin, int64_t end) { return slice(a, 0, begin, end); }
  Val slice_cols(Val a, int64_t begin, int64_t end) { return slice(a, 1, begin, end); }

  Val sum(Val a) {
    S total = S(0);
    for (S v : value(a).data) total += v;
    return push_op(Op::sum_all, {a}, Tensor<S>({1}, std::vector<S>{total}));
  }

  Val mean(Val a) {
    const Tensor<S>& A = value(a);
    if (A.numel() == 0) throw GraphError("mean: empty input");
    S total = S(0);
    for (S v : A.data) total += v;
    Val r = push_op(Op::mean_all, {a}, Tensor<S>({1}, std::vector<S>{total / S(A.numel())}));
    return r;
  }

  // Each row scaled to unit L2 norm (norm floored at kNormFloor).
  Val l2norm_rows(Val a) {
    const Tensor<S>& A = value(a);
    if (A.rank() != 2) fail(Op::l2norm_rows, a);
    Tensor<S> out = A;
    const int64_t R = A.shape[0], C = A.shape[1];
    for (int64_t i = 0; i < R; ++i) {
      S ss = S(0);
      for (int64_t j = 0; j < C; ++j) ss += A.at(i, j) * A.at(i, j);
      const S norm = std::max(std::sqrt(ss), kNormFloor);
      for (int64_t j = 0; j < C; ++j) out.at(i, j) = A.at(i, j) / norm;
    }
    return push_op(Op::l2norm_rows, {a}, std::move(out));
  }

  // ---- access ----

  const Tensor<S>& value(Val v) const { return check(v).value; }

  const Tensor<S>& grad(Val v) const {
    const Node& n = check(v);
    if (!backward_done_) throw GraphError("grad: backward has not run on this tape");
    if (!n.requires_grad) throw GraphError("grad: node does not require grad");
    return n.grad;
  }

  size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

  void reset() {
    nodes_.clear();
    backward_done_ = false;
  }

  // Reverse sweep seeded with d(root)/d(root) = seed. For a scalar loss use
  // backward(loss). Runs at most once per tape. A grad-requiring node the
  // root does not depend on ends with an all-zero gradient.
  void backward(Val root, Tensor<S> seed) {
    if (nodes_.empty()) throw GraphError("backward: empty tape (no forward recorded)");
    if (backward_done_) throw GraphError("backward: already ran on this tape");
    Node& r = check_mut(root);
    if (!r.value.same_shape(seed)) {
      throw GraphError(std::string("backward: seed shape ") + shape_str(seed.shape) +
                       " does not match root value " + shape_str(r.value.shape));
    }
    backward_done_ = true;
    for (Node& n : nodes_)
      if (n.requires_grad) ensure_grad(n);
    if (!r.requires_grad) return;  // root is constant w.r.t. every parameter
    for (size_t i = 0; i < seed.data.size(); ++i) r.grad.data[i] += seed.data[i];
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (!n.requires_grad || n.op == Op::leaf) continue;
      backprop_node(n);
    }
  }

  void backward(Val root) {
    const Tensor<S>& v = value(root);
    if (v.numel() != 1) {
      throw GraphError("backward: root must be scalar when no seed is given; got " +
                       shape_str(v.shape));
    }
    Tensor<S> seed = v;
    seed.data[0] = S(1);
    backward(root, std::move(seed));
  }

 private:
  struct Node {
    Op op = Op::leaf;
    Tensor<S> value;
    Tensor<S> grad;  // allocated lazily during backward
    std::vector<int> inputs;
    std::vector<int> ids;       // embed_lookup
    std::vector<int64_t> meta;  // concat part sizes / slice bounds
    S s0 = S(0), s1 = S(0);     // scalar attributes
    std::string name;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;

  Node& node(Val v) { return nodes_[static_cast<size_t>(v.id)]; }

  const Node& check(Val v) const {
    if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size()) {
      throw GraphError("invalid value handle (forward not recorded?)");
    }
    return nodes_[static_cast<size_t>(v.id)];
  }

  Node& check_mut(Val v) {
    check(v);
    return nodes_[static_cast<size_t>(v.id)];
  }

  Val push(Node n) {
    nodes_.push_back(std::move(n));
    return Val{static_cast<int>(nodes_.size()) - 1};
  }

  Val push_op(Op op, std::vector<Val> ins, Tensor<S> out) {
    Node n;
    n.op = op;
    n.value = std::move(out);
    n.inputs.reserve(ins.size());
    for (Val v : ins) {
      n.inputs.push_back(v.id);
      n.requires_grad = n.requires_grad || check(v).requires_grad;
    }
    return push(std::move(n));
  }

  [[noreturn]] void fail(Op op, Val a, Val b = Val{}) const {
    std::string msg = std::string(op_name(op)) + ": shape mismatch at node " +
                      std::to_string(nodes_.size()) + ": " + shape_str(check(a).value.shape);
    if (b.valid()) msg += " vs " + shape_str(check(b).value.shape);
    throw GraphError(msg);
  }

  // Elementwise binary; b may broadcast as a row vector ([C] or [1,C]) over
  // the rows of a.
  Val ewise(Op op, Val a, Val b) {
    const Tensor<S>& A = value(a);
    const Tensor<S>& B = value(b);
    const bool same = A.same_shape(B);
    const bool bcast = !same && A.rank() == 2 &&
                       ((B.rank() == 1 && B.shape[0] == A.shape[1]) ||
                        (B.rank() == 2 && B.shape[0] == 1 && B.shape[1] == A.shape[1]));
    if (!same && !bcast) fail(op, a, b);
    Tensor<S> out = A;
    const int64_t R = A.rows(), C = A.cols();
    for (int64_t i = 0; i < R; ++i) {
      for (int64_t j = 0; j < C; ++j) {
        const S bv = same ? B.data[static_cast<size_t>(i * C + j)] : B.data[static_cast<size_t>(j)];
        S& o = out.data[static_cast<size_t>(i * C + j)];
        switch (op) {
          case Op::add: o += bv; break;
          case Op::sub: o -= bv; break;
          case Op::mul: o *= bv; break;
          default: fail(op, a, b);
        }
      }
    }
    Val r = push_op(op, {a, b}, std::move(out));
    node(r).meta = {bcast ? int64_t(1) : int64_t(0)};
    return r;
  }

  Val concat(std::span<const Val> parts, int axis) {
    if (parts.empty()) throw GraphError("concat: no inputs");
    const Op op = axis == 0 ? Op::concat_rows : Op::concat_cols;
    const Tensor<S>& first = value(parts[0]);
    if (first.rank() != 2) fail(op, parts[0]);
    int64_t rows = first.shape[0], cols = first.shape[1];
    std::vector<int64_t> sizes{axis == 0 ? rows : cols};
    for (size_t i = 1; i < parts.size(); ++i) {
      const Tensor<S>& t = value(parts[i]);
      if (t.rank() != 2 || (axis == 0 ? t.shape[1] != cols : t.shape[0] != rows)) {
        fail(op, parts[0], parts[i]);
      }
      if (axis == 0) rows += t.shape[0];
      else cols += t.shape[1];
      sizes.push_back(axis == 0 ? t.shape[0] : t.shape[1]);
    }
    Tensor<S> out({rows, cols});
    if (axis == 0) {
      int64_t r0 = 0;
      for (Val p : parts) {
        const Tensor<S>& t = value(p);
        std::copy(t.data.begin(), t.data.end(), out.data.begin() + static_cast<size_t>(r0 * cols));
        r0 += t.shape[0];
      }
    } else {
      int64_t c0 = 0;
      for (Val p : parts) {
        const Tensor<S>& t = value(p);
        for (int64_t i = 0; i < rows; ++i)
          for (int64_t j = 0; j < t.shape[1]; ++j) out.at(i, c0 + j) = t.at(i, j);
        c0 += t.shape[1];
      }
    }
    std::vector<Val> ins(parts.begin(), parts.end());
    Val v = push_op(op, std::move(ins), std::move(out));
    node(v).meta = std::move(sizes);
    return v;
  }

  Val slice(Val a, int axis, int64_t begin, int64_t end) {
    const Tensor<S>& A = value(a);
    const Op op = axis == 0 ? Op::slice_rows : Op::slice_cols;
    if (A.rank() != 2) fail(op, a);
    const int64_t limit = A.shape[static_cast<size_t>(axis)];
    if (begin < 0 || end > limit || begin >= end) {
      throw GraphError(std::string(op_name(op)) + ": range [" + std::to_string(begin) + "," +
                       std::to_string(end) + ") outside " + shape_str(A.shape));
    }
    Tensor<S> out;
    if (axis == 0) {
      out = Tensor<S>({end - begin, A.shape[1]});
      std::copy(A.data.begin() + static_cast<size_t>(begin * A.shape[1]),
                A.data.begin() + static_cast<size_t>(end * A.shape[1]), out.data.begin());
    } else {
      out = Tensor<S>({A.shape[0], end - begin});
      for (int64_t i = 0; i < A.shape[0]; ++i)
        for (int64_t j = begin; j < end; ++j) out.at(i, j - begin) = A.at(i, j);
    }
    Val v = push_op(op, {a}, std::move(out));
    node(v).meta = {begin, end};
    return v;
  }

  void ensure_grad(Node& n) {
    if (n.grad.data.empty()) n.grad = Tensor<S>(n.value.shape);
  }

  Tensor<S>* input_grad(Node& n, size_t i) {
    Node& in = nodes_[static_cast<size_t>(n.inputs[i])];
    if (!in.requires_grad) return nullptr;
    ensure_grad(in);
    return &in.grad;
  }

  const Tensor<S>& input_value(const Node& n, size_t i) const {
    return nodes_[static_cast<size_t>(n.inputs[i])].value;
  }

  void backprop_node(Node& n) {
    const Tensor<S>& g = n.grad;
    switch (n.op) {
      case Op::leaf: return;
      case Op::matmul: {
        const Tensor<S>& A = input_value(n, 0);
        const Tensor<S>& B = input_value(n, 1);
        const int64_t m = A.shape[0], k = A.shape[1], c = B.shape[1];
        if (Tensor<S>* da = input_grad(n, 0)) {
          // dA += G * B^T
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < c; ++j) {
              const S gv = g.at(i, j);
              if (gv == S(0)) continue;
              for (int64_t p = 0; p < k; ++p) da->at(i, p) += gv * B.at(p, j);
            }
        }
        if (Tensor<S>* db = input_grad(n, 1)) {
          // dB += A^T * G
          for (int64_t i = 0; i < m; ++i)
            for (int64_t p = 0; p < k; ++p) {
              const S av = A.at(i, p);
              if (av == S(0)) continue;
              for (int64_t j = 0; j < c; ++j) db->at(p, j) += av * g.at(i, j);
            }
        }
        return;
      }
      case Op::transpose: {
        if (Tensor<S>* da = input_grad(n, 0)) {
          const int64_t R = n.value.shape[0], C = n.value.shape[1];
          for (int64_t i = 0; i < R; ++i)
            for (int64_t j = 0; j < C; ++j) da->at(j, i) += g.at(i, j);
        }
        return;
      }
      case Op::add:
      case Op::sub:
      case Op::mul: {
        const bool bcast = n.meta[0] == 1;
        const Tensor<S>& A = input_value(n, 0);
        const Tensor<S>& B = input_value(n, 1);
        const int64_t R = A.rows(), C = A.cols();
        Tensor<S>* da = input_grad(n, 0);
        Tensor<S>* db = input_grad(n, 1);
        for (int64_t i = 0; i < R; ++i) {
          for (int64_t j = 0; j < C; ++j) {
            const size_t oi = static_cast<size_t>(i * C + j);
            const size_t bi = bcast ? static_cast<size_t>(j) : oi;
            const S gv = g.data[oi];
            if (n.op == Op::add) {
              if (da) da->data[oi] += gv;
              if (db) db->data[bi] += gv;
            } else if (n.op == Op::sub) {
              if (da) da->data[oi] += gv;
              if (db) db->data[bi] -= gv;
            } else {
              if (da) da->data[oi] += gv * B.data[bi];
              if (db) db->data[bi] += gv * A.data[oi];
            }
          }
        }
        return;
      }
      case Op::scale: {
        if (Tensor<S>* da = input_grad(n, 0))
          for (size_t i = 0; i < g.data.size(); ++i) da->data[i] += g.data[i] * n.s0;
        return;
      }
      case Op::shift: {
        if (Tensor<S>* da = input_grad(n, 0))
          for (size_t i = 0; i < g.data.size(); ++i) da->data[i] += g.data[i];
        return;
      }
      case Op::clamp: {
        if (Tensor<S>* da = input_grad(n, 0)) {
          const Tensor<S>& x = input_value(n, 0);
          for (size_t i = 0; i < g.data.size(); ++i) {
            if (x.data[i] > n.s0 && x.data[i] < n.s1) da->data[i] += g.data[i];
          }
        }
        return;
      }
      case Op::tanh_fn: {
        if (Tensor<S>* da = input_grad(n, 0))
          for (size_t i = 0; i < g.data.size(); ++i)
            da->data[i] += g.data[i] * (S(1) - n.value.data[i] * n.value.data[i]);
        return;
      }
      case Op::relu: {
        if (Tensor<S>* da = input_grad(n, 0)) {
          const Tensor<S>& x = input_value(n, 0);
          for (size_t i = 0; i < g.data.size(); ++i)
            if (x.data[i] > S(0)) da->data[i] += g.data[i];
        }
        return;
      }
      case Op::abs_fn: {
        if (Tensor<S>* da = input_grad(n, 0)) {
          const Tensor<S>& x = input_value(n, 0);
          for (size_t i = 0; i < g.data.size(); ++i) {
            if (x.data[i] > S(0)) da->data[i] += g.data[i];
            else if (x.data[i] < S(0)) da->data[i] -= g.data[i];
          }
        }
        return;
      }
      case Op::log_fn: {
        if (Tensor<S>* da = input_grad(n, 0)) {
          const Tensor<S>& x = input_value(n, 0);
          for (size_t i = 0; i < g.data.size(); ++i) da->data[i] += g.data[i] / x.data[i];
        }
        return;
      }
      case Op::sqrt_fn: {
        if (Tensor<S>* da = input_grad(n, 0))
          for (size_t i = 0; i < g.data.size(); ++i)
            da->data[i] += g.data[i] / (S(2) * n.value.data[i]);
        return;
      }
      case Op::softmax_rows: {
        if (Tensor<S>* da = input_grad(n, 0)) {
          const int64_t R = n.value.shape[0], C = n.value.shape[1];
          for (int64_t i = 0; i < R; ++i) {
            S dot = S(0);
            for (int64_t j = 0; j < C; ++j) dot += g.at(i, j) * n.value.at(i, j);
            for (int64_t j = 0; j < C; ++j)
              da->at(i, j) += n.value.at(i, j) * (g.at(i, j) - dot);
          }
        }
        return;
      }
      case Op::layernorm_rows: {
        if (Tensor<S>* da = input_grad(n, 0)) {
          const Tensor<S>& x = input_value(n, 0);
          const int64_t R = x.shape[0], C = x.shape[1];
          for (int64_t i = 0; i < R; ++i) {
            S mean = S(0);
            for (int64_t j = 0; j < C; ++j) mean += x.at(i, j);
            mean /= S(C);
            S var = S(0);
            for (int64_t j = 0; j < C; ++j) {
              S d = x.at(i, j) - mean;
              var += d * d;
            }
            var /= S(C);
            const S inv = S(1) / std::sqrt(var + kLayerNormEps);
            S gsum = S(0), gysum = S(0);
            for (int64_t j = 0; j < C; ++j) {
              gsum += g.at(i, j);
              gysum += g.at(i, j) * n.value.at(i, j);
            }
            for (int64_t j = 0; j < C; ++j) {
              const S y = n.value.at(i, j);
              da->at(i, j) += inv * (g.at(i, j) - gsum / S(C) - y * gysum / S(C));
            }
          }
        }
        return;
      }
      case Op::embed_lookup: {
        if (Tensor<S>* dt = input_grad(n, 0)) {
          const int64_t d = n.value.shape[1];
          for (size_t r = 0; r < n.ids.size(); ++r) {
            S* dst = &dt->data[static_cast<size_t>(n.ids[r]) * static_cast<size_t>(d)];
            const S* src = &g.data[r * static_cast<size_t>(d)];
            for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
          }
        }
        return;
      }
      case Op::concat_rows: {
        int64_t r0 = 0;
        for (size_t i = 0; i < n.inputs.size(); ++i) {
          const int64_t rows = n.meta[i];
          if (Tensor<S>* di = input_grad(n, i)) {
            const int64_t C = n.value.shape[1];
            for (int64_t r = 0; r < rows; ++r)
              for (int64_t j = 0; j < C; ++j) di->at(r, j) += g.at(r0 + r, j);
          }
          r0 += rows;
        }
        return;
      }
      case Op::concat_cols: {
        int64_t c0 = 0;
        for (size_t i = 0; i < n.inputs.size(); ++i) {
          const int64_t cols = n.meta[i];
          if (Tensor<S>* di = input_grad(n, i)) {
            const int64_t R = n.value.shape[0];
            for (int64_t r = 0; r < R; ++r)
              for (int64_t j = 0; j < cols; ++j) di->at(r, j) += g.at(r, c0 + j);
          }
          c0 += cols;
        }
        return;
      }
      case Op::slice_rows: {
        if (Tensor<S>* da = input_grad(n, 0)) {
          const int64_t begin = n.meta[0];
          const int64_t C = n.value.shape[1];
          for (int64_t r = 0; r < n.value.shape[0]; ++r)
            for (int64_t j = 0; j < C; ++j) da->at(begin + r, j) += g.at(r, j);
        }
        return;
      }
      case Op::slice_cols: {
        if (Tensor<S>* da = input_grad(n, 0)) {
          const int64_t begin = n.meta[0];
          for (int64_t r = 0; r < n.value.shape[0]; ++r)
            for (int64_t j = 0; j < n.value.shape[1]; ++j) da->at(r, begin + j) += g.at(r, j);
        }
        return;
      }
      case Op::sum_all: {
        if (Tensor<S>* da = input_grad(n, 0))
          for (S& v : da->data) v += g.data[0];
        return;
      }
      case Op::mean_all: {
        if (Tensor<S>* da = input_grad(n, 0)) {
          const S s = g.data[0] / S(da->numel());
          for (S& v : da->data) v += s;
        }
        return;
      }
      case Op::l2norm_rows: {
        if (Tensor<S>* da = input_grad(n, 0)) {
          const Tensor<S>& x = input_value(n, 0);
          const int64_t R = x.shape[0], C = x.shape[1];
          for (int64_t i = 0; i < R; ++i) {
            S ss = S(0);
            for (int64_t j = 0; j < C; ++j) ss += x.at(i, j) * x.at(i, j);
            const S norm = std::max(std::sqrt(ss), kNormFloor);
            S xg = S(0);
            for (int64_t j = 0; j < C; ++j) xg += x.at(i, j) * g.at(i, j);
            const S n3 = norm * norm * norm;
            for (int64_t j = 0; j < C; ++j)
              da->at(i, j) += g.at(i, j) / norm - x.at(i, j) * xg / n3;
          }
        }
        return;
      }
    }
  }
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace denc

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "ndm/array.hpp"

namespace ndm {

// Reverse-mode AD over Array values. A Tape records primitive operations
// in topological order (inputs always precede consumers); backward() is a
// deterministic reverse sweep over that record.

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Array& val() const;
  double scalar() const { return val().scalar_value(); }
};

class Tape {
 public:
  enum class Op : std::uint8_t {
    kLeaf,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kNeg,
    kScale,    // c0 * x
    kShift,    // x + c0
    kMatmul,
    kTanh,
    kExp,
    kLog,
    kSquare,
    kSoftplus,
    kClamp,    // clamp to [c0, c1]
    kSum,
    kMean,
    kVariance, // population convention
    kConcat,   // flattened a then b, 1-D result
    kSlice,    // flattened [i0, i0+i1), 1-D result
    kTranspose,
    kReshape,
    kMatInv,
    kLogDetSpd,
  };

  struct Node {
    Op op;
    std::uint32_t a = kNone;
    std::uint32_t b = kNone;
    double c0 = 0.0, c1 = 0.0;
    std::size_t i0 = 0, i1 = 0;
    Array value;
  };

  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::uint32_t id) const { return nodes_[id]; }
  void clear() { nodes_.clear(); }

  Var leaf(Array value) {
    require_finite(value, "leaf");
    return push({Op::kLeaf, kNone, kNone, 0, 0, 0, 0, std::move(value)});
  }
  Var constant(Array value) { return leaf(std::move(value)); }
  Var constant(double v) { return leaf(Array::scalar(v)); }

  // --- elementwise binary, with scalar broadcast on either side ---
  Var add(Var x, Var y) { return binary(Op::kAdd, x, y); }
  Var sub(Var x, Var y) { return binary(Op::kSub, x, y); }
  Var mul(Var x, Var y) { return binary(Op::kMul, x, y); }
  Var div(Var x, Var y) { return binary(Op::kDiv, x, y); }

  Var neg(Var x) {
    Array v = val(x);
    for (double& e : v.data) e = -e;
    return push({Op::kNeg, x.id, kNone, 0, 0, 0, 0, std::move(v)});
  }
  Var scale(Var x, double c) {
    Array v = val(x);
    for (double& e : v.data) e *= c;
    require_finite(v, "scale");
    return push({Op::kScale, x.id, kNone, c, 0, 0, 0, std::move(v)});
  }
  Var shift(Var x, double c) {
    Array v = val(x);
    for (double& e : v.data) e += c;
    require_finite(v, "shift");
    return push({Op::kShift, x.id, kNone, c, 0, 0, 0, std::move(v)});
  }

  Var matmul(Var x, Var y) {
    const Array& a = val(x);
    const Array& b = val(y);
    if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows())
      throw Error("matmul: shape mismatch");
    Array v = Array::zeros({a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t k = 0; k < a.cols(); ++k) {
        double aik = a.at(i, k);
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < b.cols(); ++j)
          v.at(i, j) += aik * b.at(k, j);
      }
    require_finite(v, "matmul");
    return push({Op::kMatmul, x.id, y.id, 0, 0, 0, 0, std::move(v)});
  }

  Var tanh(Var x) { return unary(Op::kTanh, x, [](double e) { return std::tanh(e); }); }
  Var exp(Var x) { return unary(Op::kExp, x, [](double e) { return std::exp(e); }); }
  Var log(Var x) { return unary(Op::kLog, x, [](double e) { return std::log(e); }); }
  Var square(Var x) { return unary(Op::kSquare, x, [](double e) { return e * e; }); }
  Var softplus(Var x) {
    return unary(Op::kSoftplus, x, [](double e) {
      return e > 30.0 ? e : std::log1p(std::exp(e));
    });
  }
  Var clamp(Var x, double lo, double hi) {
    Array v = val(x);
    for (double& e : v.data) e = e < lo ? lo : (e > hi ? hi : e);
    return push({Op::kClamp, x.id, kNone, lo, hi, 0, 0, std::move(v)});
  }

  Var sum(Var x) {
    double s = 0;
    for (double e : val(x).data) s += e;
    Array v = Array::scalar(s);
    require_finite(v, "sum");
    return push({Op::kSum, x.id, kNone, 0, 0, 0, 0, std::move(v)});
  }
  Var mean(Var x) {
    if (val(x).numel() == 0) throw Error("mean: empty input");
    double s = 0;
    for (double e : val(x).data) s += e;
    Array v = Array::scalar(s / static_cast<double>(val(x).numel()));
    require_finite(v, "mean");
    return push({Op::kMean, x.id, kNone, 0, 0, 0, 0, std::move(v)});
  }
  Var variance(Var x) {
    const Array& a = val(x);
    if (a.numel() == 0) throw Error("variance: empty input");
    double n = static_cast<double>(a.numel());
    double m = 0;
    for (double e : a.data) m += e;
    m /= n;
    double s = 0;
    for (double e : a.data) s += (e - m) * (e - m);
    Array v = Array::scalar(s / n);
    require_finite(v, "variance");
    return push({Op::kVariance, x.id, kNone, 0, 0, 0, 0, std::move(v)});
  }

  Var concat(Var x, Var y) {
    const Array& a = val(x);
    const Array& b = val(y);
    std::vector<double> d;
    d.reserve(a.numel() + b.numel());
    d.insert(d.end(), a.data.begin(), a.data.end());
    d.insert(d.end(), b.data.begin(), b.data.end());
    return push({Op::kConcat, x.id, y.id, 0, 0, 0, 0, Array::vec(std::move(d))});
  }
  Var slice(Var x, std::size_t start, std::size_t len) {
    const Array& a = val(x);
    if (start + len > a.numel()) throw Error("slice: out of range");
    std::vector<double> d(a.data.begin() + static_cast<std::ptrdiff_t>(start),
                          a.data.begin() + static_cast<std::ptrdiff_t>(start + len));
    return push({Op::kSlice, x.id, kNone, 0, 0, start, len, Array::vec(std::move(d))});
  }
  Var transpose(Var x) {
    const Array& a = val(x);
    if (a.ndim() != 2) throw Error("transpose: 2-D only");
    Array v = Array::zeros({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < a.cols(); ++j) v.at(j, i) = a.at(i, j);
    return push({Op::kTranspose, x.id, kNone, 0, 0, 0, 0, std::move(v)});
  }
  Var reshape(Var x, std::vector<std::size_t> s) {
    const Array& a = val(x);
    if (Array::numel_of(s) != a.numel()) throw Error("reshape: element count mismatch");
    Array v(std::move(s), a.data);
    return push({Op::kReshape, x.id, kNone, 0, 0, 0, 0, std::move(v)});
  }

  // Inverse of a small dense square matrix (Gauss-Jordan, partial pivoting).
  Var matinv(Var x) {
    const Array& a = val(x);
    if (a.ndim() != 2 || a.rows() != a.cols()) throw Error("matinv: square 2-D required");
    Array v = invert_dense(a);
    require_finite(v, "matinv");
    return push({Op::kMatInv, x.id, kNone, 0, 0, 0, 0, std::move(v)});
  }

  // log det of a symmetric positive-definite matrix via Cholesky.
  Var logdet_spd(Var x) {
    const Array& a = val(x);
    Array v = Array::scalar(logdet_chol(a));
    require_finite(v, "logdet_spd");
    return push({Op::kLogDetSpd, x.id, kNone, 0, 0, 0, 0, std::move(v)});
  }

  // Gradients of `root` with respect to every node, indexed by node id.
  // Nodes that do not feed the root get an exact-zero gradient.
  std::vector<Array> backward(Var root) const {
    if (!val(root).is_scalar()) throw Error("backward: root must be scalar");
    std::vector<Array> grads(nodes_.size());
    std::vector<char> touched(nodes_.size(), 0);
    auto accum = [&](std::uint32_t id, const Array& g) {
      if (!touched[id]) {
        grads[id] = Array::zeros(nodes_[id].value.shape);
        touched[id] = 1;
      }
      Array& dst = grads[id];
      if (g.is_scalar() && !dst.is_scalar()) {
        // scalar grad broadcast against non-scalar node cannot happen:
        // shapes of grad always match node shape by construction
        throw Error("backward: internal shape error");
      }
      for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += g.data[i];
    };

    grads[root.id] = Array::full(val(root).shape, 1.0);
    touched[root.id] = 1;

    for (std::uint32_t id = root.id + 1; id-- > 0;) {
      if (!touched[id]) continue;
      const Node& n = nodes_[id];
      const Array& g = grads[id];
      backprop(n, g, accum);
    }

    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (!touched[i]) grads[i] = Array::zeros(nodes_[i].value.shape);
    return grads;
  }

  static Array invert_dense(const Array& a) {
    std::size_t n = a.rows();
    std::vector<double> m = a.data;
    Array inv = Array::identity(n);
    for (std::size_t col = 0; col < n; ++col) {
      std::size_t piv = col;
      for (std::size_t r = col + 1; r < n; ++r)
        if (std::abs(m[r * n + col]) > std::abs(m[piv * n + col])) piv = r;
      if (std::abs(m[piv * n + col]) < 1e-300) throw Error("matinv: singular matrix");
      if (piv != col) {
        for (std::size_t j = 0; j < n; ++j) {
          std::swap(m[piv * n + j], m[col * n + j]);
          std::swap(inv.data[piv * n + j], inv.data[col * n + j]);
        }
      }
      double d = m[col * n + col];
      for (std::size_t j = 0; j < n; ++j) {
        m[col * n + j] /= d;
        inv.data[col * n + j] /= d;
      }
      for (std::size_t r = 0; r < n; ++r) {
        if (r == col) continue;
        double f = m[r * n + col];
        if (f == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) {
          m[r * n + j] -= f * m[col * n + j];
          inv.data[r * n + j] -= f * inv.data[col * n + j];
        }
      }
    }
    return inv;
  }

  // Lower Cholesky factor; throws on non-positive-definite input.
  static Array cholesky(const Array& a) {
    if (a.ndim() != 2 || a.rows() != a.cols()) throw Error("cholesky: square 2-D required");
    std::size_t n = a.rows();
    Array l = Array::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double s = a.at(i, j);
        for (std::size_t k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
        if (i == j) {
          if (s <= 0.0 || !std::isfinite(s))
            throw Error("cholesky: matrix not positive-definite");
          l.at(i, i) = std::sqrt(s);
        } else {
          l.at(i, j) = s / l.at(j, j);
        }
      }
    }
    return l;
  }

  static double logdet_chol(const Array& a) {
    Array l = cholesky(a);
    double s = 0;
    for (std::size_t i = 0; i < a.rows(); ++i) s += std::log(l.at(i, i));
    return 2.0 * s;
  }

 private:
  friend struct Var;
  std::vector<Node> nodes_;

  const Array& val(Var x) const { return nodes_[x.id].value; }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  template <class F>
  Var unary(Op op, Var x, F f) {
    Array v = val(x);
    for (double& e : v.data) e = f(e);
    require_finite(v, "unary primitive");
    return push({op, x.id, kNone, 0, 0, 0, 0, std::move(v)});
  }

  Var binary(Op op, Var x, Var y) {
    const Array& a = val(x);
    const Array& b = val(y);
    Array v;
    if (a.same_shape(b)) {
      v = Array::zeros(a.shape);
      for (std::size_t i = 0; i < v.data.size(); ++i)
        v.data[i] = apply_bin(op, a.data[i], b.data[i]);
    } else if (b.is_scalar()) {
      v = Array::zeros(a.shape);
      for (std::size_t i = 0; i < v.data.size(); ++i)
        v.data[i] = apply_bin(op, a.data[i], b.data[0]);
    } else if (a.is_scalar()) {
      v = Array::zeros(b.shape);
      for (std::size_t i = 0; i < v.data.size(); ++i)
        v.data[i] = apply_bin(op, a.data[0], b.data[i]);
    } else {
      throw Error("binary primitive: shape mismatch (only scalar broadcast supported)");
    }
    require_finite(v, "binary primitive");
    return push({op, x.id, y.id, 0, 0, 0, 0, std::move(v)});
  }

  static double apply_bin(Op op, double a, double b) {
    switch (op) {
      case Op::kAdd: return a + b;
      case Op::kSub: return a - b;
      case Op::kMul: return a * b;
      case Op::kDiv: return a / b;
      default: throw Error("apply_bin: not a binary op");
    }
  }

  template <class Accum>
  void backprop(const Node& n, const Array& g, Accum&& accum) const {
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd:
      case Op::kSub: {
        double sign = n.op == Op::kSub ? -1.0 : 1.0;
        accum_bcast(n.a, g, accum, [](double gi, double) { return gi; }, 0.0);
        accum_bcast(n.b, g, accum, [sign](double gi, double) { return sign * gi; }, 0.0);
        break;
      }
      case Op::kMul: {
        const Array& a = nodes_[n.a].value;
        const Array& b = nodes_[n.b].value;
        accum_bcast_with(n.a, g, b, accum);
        accum_bcast_with(n.b, g, a, accum);
        break;
      }
      case Op::kDiv: {
        const Array& a = nodes_[n.a].value;
        const Array& b = nodes_[n.b].value;
        // d(a/b)/da = 1/b ; d(a/b)/db = -a/b^2
        Array ga = Array::zeros(a.shape);
        Array gb = Array::zeros(b.shape);
        std::size_t na = a.numel(), nb = b.numel(), ng = g.numel();
        for (std::size_t i = 0; i < ng; ++i) {
          double av = a.data[na == 1 ? 0 : i];
          double bv = b.data[nb == 1 ? 0 : i];
          double gi = g.data[i];
          ga.data[na == 1 ? 0 : i] += gi / bv;
          gb.data[nb == 1 ? 0 : i] += -gi * av / (bv * bv);
        }
        accum(n.a, ga);
        accum(n.b, gb);
        break;
      }
      case Op::kNeg: {
        Array ga = g;
        for (double& e : ga.data) e = -e;
        accum(n.a, ga);
        break;
      }
      case Op::kScale: {
        Array ga = g;
        for (double& e : ga.data) e *= n.c0;
        accum(n.a, ga);
        break;
      }
      case Op::kShift:
        accum(n.a, g);
        break;
      case Op::kMatmul: {
        const Array& a = nodes_[n.a].value;
        const Array& b = nodes_[n.b].value;
        Array ga = Array::zeros(a.shape);  // G B^T
        Array gb = Array::zeros(b.shape);  // A^T G
        for (std::size_t i = 0; i < a.rows(); ++i)
          for (std::size_t j = 0; j < b.cols(); ++j) {
            double gij = g.at(i, j);
            if (gij == 0.0) continue;
            for (std::size_t k = 0; k < a.cols(); ++k) {
              ga.at(i, k) += gij * b.at(k, j);
              gb.at(k, j) += a.at(i, k) * gij;
            }
          }
        accum(n.a, ga);
        accum(n.b, gb);
        break;
      }
      case Op::kTanh: {
        Array ga = g;
        for (std::size_t i = 0; i < ga.data.size(); ++i) {
          double y = n.value.data[i];
          ga.data[i] *= 1.0 - y * y;
        }
        accum(n.a, ga);
        break;
      }
      case Op::kExp: {
        Array ga = g;
        for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= n.value.data[i];
        accum(n.a, ga);
        break;
      }
      case Op::kLog: {
        const Array& a = nodes_[n.a].value;
        Array ga = g;
        for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] /= a.data[i];
        accum(n.a, ga);
        break;
      }
      case Op::kSquare: {
        const Array& a = nodes_[n.a].value;
        Array ga = g;
        for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= 2.0 * a.data[i];
        accum(n.a, ga);
        break;
      }
      case Op::kSoftplus: {
        const Array& a = nodes_[n.a].value;
        Array ga = g;
        for (std::size_t i = 0; i < ga.data.size(); ++i)
          ga.data[i] *= 1.0 / (1.0 + std::exp(-a.data[i]));
        accum(n.a, ga);
        break;
      }
      case Op::kClamp: {
        const Array& a = nodes_[n.a].value;
        Array ga = g;
        for (std::size_t i = 0; i < ga.data.size(); ++i)
          if (a.data[i] <= n.c0 || a.data[i] >= n.c1) ga.data[i] = 0.0;
        accum(n.a, ga);
        break;
      }
      case Op::kSum: {
        const Array& a = nodes_[n.a].value;
        accum(n.a, Array::full(a.shape, g.data[0]));
        break;
      }
      case Op::kMean: {
        const Array& a = nodes_[n.a].value;
        accum(n.a, Array::full(a.shape, g.data[0] / static_cast<double>(a.numel())));
        break;
      }
      case Op::kVariance: {
        const Array& a = nodes_[n.a].value;
        double cnt = static_cast<double>(a.numel());
        double m = 0;
        for (double e : a.data) m += e;
        m /= cnt;
        Array ga = Array::zeros(a.shape);
        for (std::size_t i = 0; i < ga.data.size(); ++i)
          ga.data[i] = g.data[0] * 2.0 * (a.data[i] - m) / cnt;
        accum(n.a, ga);
        break;
      }
      case Op::kConcat: {
        const Array& a = nodes_[n.a].value;
        const Array& b = nodes_[n.b].value;
        Array ga = Array::zeros(a.shape);
        Array gb = Array::zeros(b.shape);
        for (std::size_t i = 0; i < a.numel(); ++i) ga.data[i] = g.data[i];
        for (std::size_t i = 0; i < b.numel(); ++i) gb.data[i] = g.data[a.numel() + i];
        accum(n.a, ga);
        accum(n.b, gb);
        break;
      }
      case Op::kSlice: {
        const Array& a = nodes_[n.a].value;
        Array ga = Array::zeros(a.shape);
        for (std::size_t i = 0; i < n.i1; ++i) ga.data[n.i0 + i] = g.data[i];
        accum(n.a, ga);
        break;
      }
      case Op::kTranspose: {
        const Array& a = nodes_[n.a].value;
        Array ga = Array::zeros(a.shape);
        for (std::size_t i = 0; i < a.rows(); ++i)
          for (std::size_t j = 0; j < a.cols(); ++j) ga.at(i, j) = g.at(j, i);
        accum(n.a, ga);
        break;
      }
      case Op::kReshape: {
        const Array& a = nodes_[n.a].value;
        Array ga(a.shape, g.data);
        accum(n.a, ga);
        break;
      }
      case Op::kMatInv: {
        // Y = A^-1 : dA = -Y^T G Y^T
        const Array& y = n.value;
        std::size_t m = y.rows();
        Array ga = Array::zeros({m, m});
        // tmp = Y^T G
        Array tmp = Array::zeros({m, m});
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < m; ++k) s += y.at(k, i) * g.at(k, j);
            tmp.at(i, j) = s;
          }
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < m; ++k) s += tmp.at(i, k) * y.at(j, k);
            ga.at(i, j) = -s;
          }
        accum(n.a, ga);
        break;
      }
      case Op::kLogDetSpd: {
        // d logdet(A) / dA = A^-1 (A symmetric)
        const Array& a = nodes_[n.a].value;
        Array ainv = invert_dense(a);
        for (double& e : ainv.data) e *= g.data[0];
        accum(n.a, ainv);
        break;
      }
    }
  }

  // grad for a (possibly scalar-broadcast) operand: dst += f(g_i) summed if scalar
  template <class Accum, class F>
  void accum_bcast(std::uint32_t id, const Array& g, Accum&& accum, F f, double) const {
    const Array& a = nodes_[id].value;
    if (a.same_shape(g) || a.numel() == g.numel()) {
      Array ga = Array::zeros(a.shape);
      for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] = f(g.data[i], 0.0);
      accum(id, ga);
    } else {
      double s = 0;
      for (double gi : g.data) s += f(gi, 0.0);
      accum(id, Array::full(a.shape, s));
    }
  }

  // grad contribution g * other for kMul with possible scalar broadcast
  template <class Accum>
  void accum_bcast_with(std::uint32_t id, const Array& g, const Array& other,
                        Accum&& accum) const {
    const Array& a = nodes_[id].value;
    std::size_t no = other.numel();
    if (a.numel() == g.numel()) {
      Array ga = Array::zeros(a.shape);
      for (std::size_t i = 0; i < ga.data.size(); ++i)
        ga.data[i] = g.data[i] * other.data[no == 1 ? 0 : i];
      accum(id, ga);
    } else {
      double s = 0;
      for (std::size_t i = 0; i < g.numel(); ++i)
        s += g.data[i] * other.data[no == 1 ? 0 : i];
      accum(id, Array::full(a.shape, s));
    }
  }
};

inline const Array& Var::val() const { return tape->node(id).value; }

inline Var operator+(Var x, Var y) { return x.tape->add(x, y); }
inline Var operator-(Var x, Var y) { return x.tape->sub(x, y); }
inline Var operator*(Var x, Var y) { return x.tape->mul(x, y); }
inline Var operator/(Var x, Var y) { return x.tape->div(x, y); }
inline Var operator-(Var x) { return x.tape->neg(x); }

}  // namespace ndm

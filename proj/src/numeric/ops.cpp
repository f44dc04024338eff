#include "labpolicy/numeric/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "labpolicy/error.hpp"
#include "labpolicy/numeric/kernels.hpp"

namespace labpolicy::numeric::ops {
namespace {

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw NumericError("ops: variables live on different tapes");
  return *a.tape;
}

void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw NumericError(std::string(op) + ": shape mismatch " + std::to_string(a.rows) + "x" +
                     std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
}

std::size_t bdim(std::size_t x, std::size_t y, const char* op, const Matrix& a, const Matrix& b) {
  if (x == y) return x;
  if (x == 1) return y;
  if (y == 1) return x;
  shape_error(op, a, b);
  return 0;
}

// Shared driver for broadcasting binary ops. fwd(a, b) gives the value;
// da(a, b, out) and db(a, b, out) give local partials.
template <class F, class DA, class DB>
Var binary(Var va, Var vb, const char* op, F fwd, DA da, DB db) {
  Tape& t = tape_of(va, vb);
  const Matrix& a = va.value();
  const Matrix& b = vb.value();
  const std::size_t R = bdim(a.rows, b.rows, op, a, b);
  const std::size_t C = bdim(a.cols, b.cols, op, a, b);
  Matrix out(R, C);
  for (std::size_t i = 0; i < R; ++i) {
    const std::size_t ai = a.rows == 1 ? 0 : i;
    const std::size_t bi = b.rows == 1 ? 0 : i;
    for (std::size_t j = 0; j < C; ++j)
      out(i, j) = fwd(a(ai, a.cols == 1 ? 0 : j), b(bi, b.cols == 1 ? 0 : j));
  }
  const std::size_t ia = va.id, ib = vb.id;
  const bool rg = t.requires_grad(ia) || t.requires_grad(ib);
  return t.push(std::move(out), rg, op, [ia, ib, da, db](Tape& tp, std::size_t self) {
    const Matrix& A = tp.value(ia);
    const Matrix& B = tp.value(ib);
    const Matrix& O = tp.value(self);
    const Matrix& G = tp.grad(self);
    const bool ga = tp.requires_grad(ia), gb = tp.requires_grad(ib);
    Matrix* gA = ga ? &tp.grad(ia) : nullptr;
    Matrix* gB = gb ? &tp.grad(ib) : nullptr;
    for (std::size_t i = 0; i < O.rows; ++i) {
      const std::size_t ai = A.rows == 1 ? 0 : i;
      const std::size_t bi = B.rows == 1 ? 0 : i;
      for (std::size_t j = 0; j < O.cols; ++j) {
        const std::size_t aj = A.cols == 1 ? 0 : j;
        const std::size_t bj = B.cols == 1 ? 0 : j;
        const double g = G(i, j);
        if (gA) (*gA)(ai, aj) += g * da(A(ai, aj), B(bi, bj), O(i, j));
        if (gB) (*gB)(bi, bj) += g * db(A(ai, aj), B(bi, bj), O(i, j));
      }
    }
  });
}

// dfn(x, y) is the derivative given input x and output y.
template <class F, class DF>
Var unary(Var va, const char* op, F fn, DF dfn) {
  Tape& t = *va.tape;
  const Matrix& a = va.value();
  Matrix out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = fn(a.data[i]);
  const std::size_t ia = va.id;
  return t.push(std::move(out), t.requires_grad(ia), op, [ia, dfn](Tape& tp, std::size_t self) {
    const Matrix& A = tp.value(ia);
    const Matrix& O = tp.value(self);
    const Matrix& G = tp.grad(self);
    Matrix& gA = tp.grad(ia);
    for (std::size_t i = 0; i < A.size(); ++i) gA.data[i] += G.data[i] * dfn(A.data[i], O.data[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// C(m×n) += A(m×k)·B(k×n), all row-major.
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  simd::active().gemm(a.rows, b.cols, a.cols, a.data.data(), a.cols, 1, b.data.data(), b.cols, c.data.data(), c.cols);
}
// C(k×n) += Aᵀ·B with A m×k, B m×n.
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  simd::active().gemm(a.cols, b.cols, a.rows, a.data.data(), 1, a.cols, b.data.data(), b.cols, c.data.data(), c.cols);
}
// C(m×k) += A·Bᵀ with A m×n, B k×n.
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  const Matrix bt = transpose(b);
  gemm_nn(a, bt, c);
}

}  // namespace

Var matmul(Var va, Var vb) {
  Tape& t = tape_of(va, vb);
  const Matrix& a = va.value();
  const Matrix& b = vb.value();
  if (a.cols != b.rows) shape_error("matmul", a, b);
  Matrix out(a.rows, b.cols);
  gemm_nn(a, b, out);
  const std::size_t ia = va.id, ib = vb.id;
  return t.push(std::move(out), t.requires_grad(ia) || t.requires_grad(ib), "matmul",
                [ia, ib](Tape& tp, std::size_t self) {
                  const Matrix& G = tp.grad(self);
                  if (tp.requires_grad(ia)) gemm_nt(G, tp.value(ib), tp.grad(ia));
                  if (tp.requires_grad(ib)) gemm_tn(tp.value(ia), G, tp.grad(ib));
                });
}

Var linear(Var vx, Var vw, Var vb) {
  Tape& t = tape_of(vx, vw);
  tape_of(vw, vb);
  const Matrix& x = vx.value();
  const Matrix& w = vw.value();
  const Matrix& b = vb.value();
  if (x.cols != w.rows) shape_error("linear", x, w);
  if (b.rows != 1 || b.cols != w.cols) shape_error("linear(bias)", w, b);
  Matrix out(x.rows, w.cols);
  for (std::size_t i = 0; i < out.rows; ++i) std::copy(b.data.begin(), b.data.end(), out.row(i).begin());
  gemm_nn(x, w, out);
  const std::size_t ix = vx.id, iw = vw.id, ib = vb.id;
  const bool rg = t.requires_grad(ix) || t.requires_grad(iw) || t.requires_grad(ib);
  return t.push(std::move(out), rg, "linear", [ix, iw, ib](Tape& tp, std::size_t self) {
    const Matrix& G = tp.grad(self);
    if (tp.requires_grad(ix)) gemm_nt(G, tp.value(iw), tp.grad(ix));
    if (tp.requires_grad(iw)) gemm_tn(tp.value(ix), G, tp.grad(iw));
    if (tp.requires_grad(ib)) {
      Matrix& gb = tp.grad(ib);
      const auto& k = simd::active();
      for (std::size_t i = 0; i < G.rows; ++i) k.axpy(G.cols, 1.0, G.row(i).data(), gb.data.data());
    }
  });
}

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double o) { return -o / y; });
}

Var add_scalar(Var a, double c) {
  return unary(
      a, "add_scalar", [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var scale(Var a, double c) {
  return unary(
      a, "scale", [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var relu(Var a) {
  return unary(
      a, "relu", [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a, "sigmoid", stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  return unary(a, "softplus", stable_softplus, [](double x, double) { return stable_sigmoid(x); });
}

Var exp(Var a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt(Var a) {
  return unary(
      a, "sqrt", [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var smooth_abs(Var a, double eps) {
  return unary(
      a, "smooth_abs", [eps](double x) { return std::sqrt(x * x + eps); }, [](double x, double y) { return x / y; });
}

Var sum(Var va) {
  Tape& t = *va.tape;
  const Matrix& a = va.value();
  double s = 0.0;
  for (double v : a.data) s += v;
  const std::size_t ia = va.id;
  return t.push(Matrix(1, 1, s), t.requires_grad(ia), "sum", [ia](Tape& tp, std::size_t self) {
    const double g = tp.grad(self).data[0];
    for (double& v : tp.grad(ia).data) v += g;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var row_sum(Var va) {
  Tape& t = *va.tape;
  const Matrix& a = va.value();
  Matrix out(a.rows, 1);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double s = 0.0;
    for (double v : a.row(i)) s += v;
    out(i, 0) = s;
  }
  const std::size_t ia = va.id;
  return t.push(std::move(out), t.requires_grad(ia), "row_sum", [ia](Tape& tp, std::size_t self) {
    const Matrix& G = tp.grad(self);
    Matrix& gA = tp.grad(ia);
    for (std::size_t i = 0; i < gA.rows; ++i)
      for (double& v : gA.row(i)) v += G(i, 0);
  });
}

Var slice_cols(Var va, std::size_t begin, std::size_t end) {
  Tape& t = *va.tape;
  const Matrix& a = va.value();
  if (begin > end || end > a.cols) throw NumericError("slice_cols: range out of bounds");
  Matrix out(a.rows, end - begin);
  for (std::size_t i = 0; i < a.rows; ++i)
    std::copy(a.row(i).begin() + begin, a.row(i).begin() + end, out.row(i).begin());
  const std::size_t ia = va.id;
  return t.push(std::move(out), t.requires_grad(ia), "slice_cols", [ia, begin](Tape& tp, std::size_t self) {
    const Matrix& G = tp.grad(self);
    Matrix& gA = tp.grad(ia);
    for (std::size_t i = 0; i < G.rows; ++i)
      for (std::size_t j = 0; j < G.cols; ++j) gA(i, begin + j) += G(i, j);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw NumericError("concat_cols: no inputs");
  Tape& t = *parts.front().tape;
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  bool rg = false;
  std::vector<std::size_t> ids;
  for (Var p : parts) {
    tape_of(parts.front(), p);
    if (p.rows() != rows) shape_error("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
    rg = rg || t.requires_grad(p.id);
    ids.push_back(p.id);
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Matrix& m = p.value();
    for (std::size_t i = 0; i < rows; ++i) std::copy(m.row(i).begin(), m.row(i).end(), out.row(i).begin() + off);
    off += m.cols;
  }
  return t.push(std::move(out), rg, "concat_cols", [ids](Tape& tp, std::size_t self) {
    const Matrix& G = tp.grad(self);
    std::size_t o = 0;
    for (std::size_t id : ids) {
      const std::size_t c = tp.value(id).cols;
      if (tp.requires_grad(id)) {
        Matrix& gP = tp.grad(id);
        for (std::size_t i = 0; i < G.rows; ++i)
          for (std::size_t j = 0; j < c; ++j) gP(i, j) += G(i, o + j);
      }
      o += c;
    }
  });
}

Var reshape(Var va, std::size_t rows, std::size_t cols) {
  Tape& t = *va.tape;
  const Matrix& a = va.value();
  if (rows * cols != a.size()) throw NumericError("reshape: element count mismatch");
  Matrix out(rows, cols, a.data);
  const std::size_t ia = va.id;
  return t.push(std::move(out), t.requires_grad(ia), "reshape", [ia](Tape& tp, std::size_t self) {
    const Matrix& G = tp.grad(self);
    Matrix& gA = tp.grad(ia);
    for (std::size_t i = 0; i < G.size(); ++i) gA.data[i] += G.data[i];
  });
}

Var gather_cols(Var va, std::vector<std::size_t> index) {
  Tape& t = *va.tape;
  const Matrix& a = va.value();
  if (index.size() != a.rows) throw NumericError("gather_cols: index length must equal row count");
  Matrix out(a.rows, 1);
  for (std::size_t i = 0; i < a.rows; ++i) {
    if (index[i] >= a.cols) throw NumericError("gather_cols: column index out of range");
    out(i, 0) = a(i, index[i]);
  }
  const std::size_t ia = va.id;
  return t.push(std::move(out), t.requires_grad(ia), "gather_cols",
                [ia, index = std::move(index)](Tape& tp, std::size_t self) {
                  const Matrix& G = tp.grad(self);
                  Matrix& gA = tp.grad(ia);
                  for (std::size_t i = 0; i < G.rows; ++i) gA(i, index[i]) += G(i, 0);
                });
}

Var cumsum_cols(Var va) {
  Tape& t = *va.tape;
  const Matrix& a = va.value();
  Matrix out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) out(i, j) = (s += a(i, j));
  }
  const std::size_t ia = va.id;
  return t.push(std::move(out), t.requires_grad(ia), "cumsum_cols", [ia](Tape& tp, std::size_t self) {
    const Matrix& G = tp.grad(self);
    Matrix& gA = tp.grad(ia);
    for (std::size_t i = 0; i < G.rows; ++i) {
      double s = 0.0;
      for (std::size_t j = G.cols; j-- > 0;) gA(i, j) += (s += G(i, j));
    }
  });
}

Var softmax_rows(Var va) {
  Tape& t = *va.tape;
  const Matrix& a = va.value();
  Matrix out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const auto r = a.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) z += (out(i, j) = std::exp(r[j] - mx));
    for (std::size_t j = 0; j < a.cols; ++j) out(i, j) /= z;
  }
  const std::size_t ia = va.id;
  return t.push(std::move(out), t.requires_grad(ia), "softmax_rows", [ia](Tape& tp, std::size_t self) {
    const Matrix& S = tp.value(self);
    const Matrix& G = tp.grad(self);
    Matrix& gA = tp.grad(ia);
    for (std::size_t i = 0; i < S.rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < S.cols; ++j) dot += G(i, j) * S(i, j);
      for (std::size_t j = 0; j < S.cols; ++j) gA(i, j) += S(i, j) * (G(i, j) - dot);
    }
  });
}

}  // namespace labpolicy::numeric::ops

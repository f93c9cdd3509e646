#include "deepssm/ops.hpp"

#include <algorithm>
#include <cmath>

#include "deepssm/kernels.hpp"

namespace deepssm::autodiff {

namespace {

Tape* result_tape(std::initializer_list<const Tensor*> operands) {
  if (NoGradGuard::active()) return nullptr;
  Tape* tape = nullptr;
  for (const Tensor* t : operands) {
    if (!t->on_tape()) continue;
    if (tape && tape != t->tape())
      throw ValueError("operands recorded on different tapes");
    tape = t->tape();
  }
  return tape;
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() +
                   " and " + b.str());
}

void acc(Vec& dst, const Vec& g) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

enum class Bcast { None, RightSmall, LeftSmall };

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.numel() == 1) return true;
  if (small.ndim() > big.ndim()) return false;
  auto sb = big.dims.end() - small.ndim();
  return std::equal(small.dims.begin(), small.dims.end(), sb);
}

Bcast bcast_kind(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return Bcast::None;
  if (is_suffix(b, a)) return Bcast::RightSmall;
  if (is_suffix(a, b)) return Bcast::LeftSmall;
  shape_fail(op, a, b);
}

// out[i] = f(full[i], small[i % |small|])
template <class F>
void map2_bcast(const Vec& full, const Vec& small, Vec& out, F f) {
  const std::int64_t suf = static_cast<std::int64_t>(small.size());
  const std::int64_t n = static_cast<std::int64_t>(full.size());
  const bool par = kernels::parallel_ok(n);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < n; ++i) out[i] = f(full[i], small[i % suf]);
}

// Forward of a broadcasting binary op; f(a_elem, b_elem) in operand order.
template <class F>
Vec bin_forward(Bcast kind, const Tensor& a, const Tensor& b,
                std::int64_t out_n, F f) {
  Vec out(static_cast<size_t>(out_n));
  switch (kind) {
    case Bcast::None:
      kernels::map2(a.value().data(), b.value().data(), out.data(), out_n, f);
      break;
    case Bcast::RightSmall:
      map2_bcast(a.value(), b.value(), out, f);
      break;
    case Bcast::LeftSmall:
      map2_bcast(b.value(), a.value(), out,
                 [&](double y, double x) { return f(x, y); });
      break;
  }
  return out;
}

// dst[j] += scale * sum_i g[i,j] * w[i,j]
void weighted_colsum_acc(const Vec& g, const Vec& w, Vec& dst,
                         double sc = 1.0) {
  Vec tmp(g.size());
  kernels::map2(g.data(), w.data(), tmp.data(),
                static_cast<std::int64_t>(g.size()),
                [](double x, double y) { return x * y; });
  kernels::colsum_acc(tmp.data(), dst.data(),
                      static_cast<std::int64_t>(g.size() / dst.size()),
                      static_cast<std::int64_t>(dst.size()), sc);
}

}  // namespace

// ---------------------------------------------------------------- matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().ndim() != 2 || b.shape().ndim() != 2 ||
      a.shape().dims[1] != b.shape().dims[0])
    shape_fail("matmul", a.shape(), b.shape());
  const std::int64_t m = a.shape().dims[0], k = a.shape().dims[1],
                     n = b.shape().dims[1];
  Vec out(static_cast<size_t>(m * n));
  kernels::matmul(a.value().data(), b.value().data(), out.data(), m, k, n);
  Tape* tape = result_tape({&a, &b});
  if (!tape) return Tensor(Shape{m, n}, std::move(out));
  auto av = a.storage(), bv = b.storage();
  const int pa = a.on_tape() ? a.node() : -1, pb = b.on_tape() ? b.node() : -1;
  return tape->record("matmul", Shape{m, n}, std::move(out),
                      [=](Tape& t, const Vec& g) {
                        if (pa >= 0)
                          kernels::matmul_nt(g.data(), bv->data(),
                                             t.grad(pa).data(), m, n, k, true);
                        if (pb >= 0)
                          kernels::matmul_tn(av->data(), g.data(),
                                             t.grad(pb).data(), m, k, n, true);
                      });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.shape().ndim() != 2 || b.shape().ndim() != 2 ||
      a.shape().dims[1] != b.shape().dims[1])
    shape_fail("matmul_nt", a.shape(), b.shape());
  const std::int64_t m = a.shape().dims[0], k = a.shape().dims[1],
                     n = b.shape().dims[0];
  Vec out(static_cast<size_t>(m * n));
  kernels::matmul_nt(a.value().data(), b.value().data(), out.data(), m, k, n);
  Tape* tape = result_tape({&a, &b});
  if (!tape) return Tensor(Shape{m, n}, std::move(out));
  auto av = a.storage(), bv = b.storage();
  const int pa = a.on_tape() ? a.node() : -1, pb = b.on_tape() ? b.node() : -1;
  return tape->record("matmul_nt", Shape{m, n}, std::move(out),
                      [=](Tape& t, const Vec& g) {
                        if (pa >= 0)
                          kernels::matmul(g.data(), bv->data(),
                                          t.grad(pa).data(), m, n, k, true);
                        if (pb >= 0)
                          kernels::matmul_tn(g.data(), av->data(),
                                             t.grad(pb).data(), m, n, k, true);
                      });
}

// ------------------------------------------------------------ elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  const Bcast kind = bcast_kind("add", a.shape(), b.shape());
  Shape os = kind == Bcast::LeftSmall ? b.shape() : a.shape();
  Vec out = bin_forward(kind, a, b, os.numel(),
                        [](double x, double y) { return x + y; });
  Tape* tape = result_tape({&a, &b});
  if (!tape) return Tensor(std::move(os), std::move(out));
  const int pa = a.on_tape() ? a.node() : -1, pb = b.on_tape() ? b.node() : -1;
  const std::int64_t na = a.numel(), nb = b.numel();
  return tape->record(
      "add", std::move(os), std::move(out), [=](Tape& t, const Vec& g) {
        const std::int64_t ng = static_cast<std::int64_t>(g.size());
        if (pa >= 0) {
          if (kind == Bcast::LeftSmall)
            kernels::colsum_acc(g.data(), t.grad(pa).data(), ng / na, na);
          else
            acc(t.grad(pa), g);
        }
        if (pb >= 0) {
          if (kind == Bcast::RightSmall)
            kernels::colsum_acc(g.data(), t.grad(pb).data(), ng / nb, nb);
          else
            acc(t.grad(pb), g);
        }
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Bcast kind = bcast_kind("sub", a.shape(), b.shape());
  Shape os = kind == Bcast::LeftSmall ? b.shape() : a.shape();
  Vec out = bin_forward(kind, a, b, os.numel(),
                        [](double x, double y) { return x - y; });
  Tape* tape = result_tape({&a, &b});
  if (!tape) return Tensor(std::move(os), std::move(out));
  const int pa = a.on_tape() ? a.node() : -1, pb = b.on_tape() ? b.node() : -1;
  const std::int64_t na = a.numel(), nb = b.numel();
  return tape->record(
      "sub", std::move(os), std::move(out), [=](Tape& t, const Vec& g) {
        const std::int64_t ng = static_cast<std::int64_t>(g.size());
        if (pa >= 0) {
          if (kind == Bcast::LeftSmall)
            kernels::colsum_acc(g.data(), t.grad(pa).data(), ng / na, na);
          else
            acc(t.grad(pa), g);
        }
        if (pb >= 0) {
          if (kind == Bcast::RightSmall) {
            kernels::colsum_acc(g.data(), t.grad(pb).data(), ng / nb, nb, -1.0);
          } else {
            Vec& gb = t.grad(pb);
            for (size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
          }
        }
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Bcast kind = bcast_kind("mul", a.shape(), b.shape());
  Shape os = kind == Bcast::LeftSmall ? b.shape() : a.shape();
  Vec out = bin_forward(kind, a, b, os.numel(),
                        [](double x, double y) { return x * y; });
  Tape* tape = result_tape({&a, &b});
  if (!tape) return Tensor(std::move(os), std::move(out));
  auto av = a.storage(), bv = b.storage();
  const int pa = a.on_tape() ? a.node() : -1, pb = b.on_tape() ? b.node() : -1;
  return tape->record(
      "mul", std::move(os), std::move(out), [=](Tape& t, const Vec& g) {
        if (pa >= 0) {
          Vec& ga = t.grad(pa);
          if (kind == Bcast::LeftSmall) {  // a broadcast: reduce g*b
            weighted_colsum_acc(g, *bv, ga);
          } else {
            Vec tmp(g.size());
            if (kind == Bcast::RightSmall)
              map2_bcast(g, *bv, tmp, [](double x, double y) { return x * y; });
            else
              kernels::map2(g.data(), bv->data(), tmp.data(),
                            static_cast<std::int64_t>(g.size()),
                            [](double x, double y) { return x * y; });
            acc(ga, tmp);
          }
        }
        if (pb >= 0) {
          Vec& gb = t.grad(pb);
          if (kind == Bcast::RightSmall) {  // b broadcast: reduce g*a
            weighted_colsum_acc(g, *av, gb);
          } else {
            Vec tmp(g.size());
            if (kind == Bcast::LeftSmall)
              map2_bcast(g, *av, tmp, [](double x, double y) { return x * y; });
            else
              kernels::map2(g.data(), av->data(), tmp.data(),
                            static_cast<std::int64_t>(g.size()),
                            [](double x, double y) { return x * y; });
            acc(gb, tmp);
          }
        }
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  const Bcast kind = bcast_kind("div", a.shape(), b.shape());
  Shape os = kind == Bcast::LeftSmall ? b.shape() : a.shape();
  auto yv = std::make_shared<Vec>(bin_forward(
      kind, a, b, os.numel(), [](double x, double y) { return x / y; }));
  Tape* tape = result_tape({&a, &b});
  if (!tape) return Tensor::from_storage(std::move(os), std::move(yv));
  auto bv = b.storage();
  const int pa = a.on_tape() ? a.node() : -1, pb = b.on_tape() ? b.node() : -1;
  return tape->record(
      "div", std::move(os), yv, [=](Tape& t, const Vec& g) {
        if (pa >= 0) {  // ga += g / b
          Vec& ga = t.grad(pa);
          Vec tmp(g.size());
          if (kind == Bcast::RightSmall)
            map2_bcast(g, *bv, tmp, [](double x, double y) { return x / y; });
          else
            kernels::map2(g.data(), bv->data(), tmp.data(),
                          static_cast<std::int64_t>(g.size()),
                          [](double x, double y) { return x / y; });
          if (kind == Bcast::LeftSmall)
            kernels::colsum_acc(tmp.data(), ga.data(),
                                static_cast<std::int64_t>(g.size() / ga.size()),
                                static_cast<std::int64_t>(ga.size()));
          else
            acc(ga, tmp);
        }
        if (pb >= 0) {  // gb -= g * y / b
          Vec& gb = t.grad(pb);
          Vec tmp(g.size());
          kernels::map2(g.data(), yv->data(), tmp.data(),
                        static_cast<std::int64_t>(g.size()),
                        [](double x, double y) { return x * y; });
          if (kind == Bcast::RightSmall) {
            Vec colsum(gb.size(), 0.0);
            kernels::colsum_acc(tmp.data(), colsum.data(),
                                static_cast<std::int64_t>(g.size() / gb.size()),
                                static_cast<std::int64_t>(gb.size()));
            for (size_t j = 0; j < gb.size(); ++j) gb[j] -= colsum[j] / (*bv)[j];
          } else {
            const std::int64_t nb = static_cast<std::int64_t>(bv->size());
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(tmp.size());
                 ++i)
              gb[i] -= tmp[i] / (*bv)[i % nb];
          }
        }
      });
}

// --------------------------------------------------------------- unaries

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

void check_nonnegative(const char* op, const Tensor& a) {
  for (double x : a.value())
    if (x < 0.0)
      throw DomainError(std::string(op) + " of negative value " +
                        std::to_string(x));
}

// Unary op whose gradient needs only the input x.
template <class FwdF, class GradF>
Tensor unary_from_input(const char* name, const Tensor& a, FwdF fwd,
                        GradF dfdx) {
  Vec out(static_cast<size_t>(a.numel()));
  kernels::map(a.value().data(), out.data(), a.numel(), fwd);
  Tape* tape = result_tape({&a});
  if (!tape) return Tensor(a.shape(), std::move(out));
  const int pa = a.node();
  auto xv = a.storage();
  return tape->record(name, a.shape(), std::move(out),
                      [pa, xv, dfdx](Tape& t, const Vec& g) {
                        Vec& ga = t.grad(pa);
                        const Vec& x = *xv;
                        for (size_t i = 0; i < ga.size(); ++i)
                          ga[i] += g[i] * dfdx(x[i]);
                      });
}

// Unary op whose gradient is cheapest from the output y.
template <class FwdF, class GradF>
Tensor unary_from_output(const char* name, const Tensor& a, FwdF fwd,
                         GradF dfdy) {
  auto yv = std::make_shared<Vec>(static_cast<size_t>(a.numel()));
  kernels::map(a.value().data(), yv->data(), a.numel(), fwd);
  Tape* tape = result_tape({&a});
  if (!tape) return Tensor::from_storage(a.shape(), std::move(yv));
  const int pa = a.node();
  return tape->record(name, a.shape(), yv,
                      [pa, yv, dfdy](Tape& t, const Vec& g) {
                        Vec& ga = t.grad(pa);
                        const Vec& y = *yv;
                        for (size_t i = 0; i < ga.size(); ++i)
                          ga[i] += g[i] * dfdy(y[i]);
                      });
}

}  // namespace

Tensor neg(const Tensor& a) {
  return unary_from_input(
      "neg", a, [](double x) { return -x; }, [](double) { return -1.0; });
}

Tensor scale(const Tensor& a, double c) {
  return unary_from_input(
      "scale", a, [c](double x) { return c * x; }, [c](double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary_from_input(
      "add_scalar", a, [c](double x) { return x + c; },
      [](double) { return 1.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_from_output("sigmoid", a, stable_sigmoid,
                           [](double y) { return y * (1.0 - y); });
}

Tensor tanh_(const Tensor& a) {
  return unary_from_output(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double y) { return 1.0 - y * y; });
}

Tensor exp_(const Tensor& a) {
  return unary_from_output(
      "exp", a, [](double x) { return std::exp(x); },
      [](double y) { return y; });
}

Tensor log_(const Tensor& a) {
  check_nonnegative("log", a);
  return unary_from_input(
      "log", a, [](double x) { return std::log(x); },
      [](double x) { return 1.0 / x; });
}

Tensor sqrt_(const Tensor& a) {
  check_nonnegative("sqrt", a);
  return unary_from_output(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double y) { return 0.5 / y; });
}

Tensor softplus(const Tensor& a) {
  return unary_from_input("softplus", a, stable_softplus, stable_sigmoid);
}

Tensor relu(const Tensor& a) {
  return unary_from_input(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary_from_input(
      "square", a, [](double x) { return x * x; },
      [](double x) { return 2.0 * x; });
}

// -------------------------------------------------------------- structure

Tensor concat_last(const Tensor& a, const Tensor& b) {
  const Shape &sa = a.shape(), &sb = b.shape();
  if (sa.ndim() != sb.ndim() || sa.ndim() == 0) shape_fail("concat_last", sa, sb);
  for (int i = 0; i + 1 < sa.ndim(); ++i)
    if (sa.dims[static_cast<size_t>(i)] != sb.dims[static_cast<size_t>(i)])
      shape_fail("concat_last", sa, sb);
  const std::int64_t rows = sa.rows(), la = sa.last(), lb = sb.last();
  Shape os = sa;
  os.dims.back() = la + lb;
  Vec out(static_cast<size_t>(rows * (la + lb)));
  const Vec &va = a.value(), &vb = b.value();
  for (std::int64_t r = 0; r < rows; ++r) {
    double* o = out.data() + r * (la + lb);
    std::copy_n(va.data() + r * la, la, o);
    std::copy_n(vb.data() + r * lb, lb, o + la);
  }
  Tape* tape = result_tape({&a, &b});
  if (!tape) return Tensor(std::move(os), std::move(out));
  const int pa = a.on_tape() ? a.node() : -1, pb = b.on_tape() ? b.node() : -1;
  return tape->record("concat_last", std::move(os), std::move(out),
                      [=](Tape& t, const Vec& g) {
                        for (std::int64_t r = 0; r < rows; ++r) {
                          const double* gr = g.data() + r * (la + lb);
                          if (pa >= 0) {
                            double* ga = t.grad(pa).data() + r * la;
                            for (std::int64_t j = 0; j < la; ++j) ga[j] += gr[j];
                          }
                          if (pb >= 0) {
                            double* gb = t.grad(pb).data() + r * lb;
                            for (std::int64_t j = 0; j < lb; ++j)
                              gb[j] += gr[la + j];
                          }
                        }
                      });
}

Tensor slice_last(const Tensor& a, std::int64_t lo, std::int64_t hi) {
  const std::int64_t last = a.shape().last();
  if (a.shape().ndim() == 0 || lo < 0 || hi > last || lo >= hi)
    throw ShapeError("slice_last: range [" + std::to_string(lo) + "," +
                     std::to_string(hi) + ") invalid for shape " +
                     a.shape().str());
  const std::int64_t rows = a.shape().rows(), w = hi - lo;
  Shape os = a.shape();
  os.dims.back() = w;
  Vec out(static_cast<size_t>(rows * w));
  for (std::int64_t r = 0; r < rows; ++r)
    std::copy_n(a.value().data() + r * last + lo, w, out.data() + r * w);
  Tape* tape = result_tape({&a});
  if (!tape) return Tensor(std::move(os), std::move(out));
  const int pa = a.node();
  return tape->record("slice_last", std::move(os), std::move(out),
                      [=](Tape& t, const Vec& g) {
                        Vec& ga = t.grad(pa);
                        for (std::int64_t r = 0; r < rows; ++r) {
                          double* dst = ga.data() + r * last + lo;
                          const double* src = g.data() + r * w;
                          for (std::int64_t j = 0; j < w; ++j) dst[j] += src[j];
                        }
                      });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape.numel() != a.numel()) shape_fail("reshape", a.shape(), shape);
  Tape* tape = result_tape({&a});
  if (!tape) return Tensor::from_storage(std::move(shape), a.storage());
  const int pa = a.node();
  return tape->record("reshape", std::move(shape), a.storage(),
                      [pa](Tape& t, const Vec& g) { acc(t.grad(pa), g); });
}

// ------------------------------------------------------------- reductions

Tensor sum(const Tensor& a) {
  Vec out{kernels::sum(a.value().data(), a.numel())};
  Tape* tape = result_tape({&a});
  if (!tape) return Tensor(Shape{}, std::move(out));
  const int pa = a.node();
  return tape->record("sum", Shape{}, std::move(out),
                      [pa](Tape& t, const Vec& g) {
                        for (double& v : t.grad(pa)) v += g[0];
                      });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  Vec out{kernels::sum(a.value().data(), a.numel()) / n};
  Tape* tape = result_tape({&a});
  if (!tape) return Tensor(Shape{}, std::move(out));
  const int pa = a.node();
  return tape->record("mean", Shape{}, std::move(out),
                      [pa, n](Tape& t, const Vec& g) {
                        const double gv = g[0] / n;
                        for (double& v : t.grad(pa)) v += gv;
                      });
}

namespace {

Shape drop_last(const Shape& s) {
  Shape out = s;
  out.dims.pop_back();
  return out;
}

}  // namespace

Tensor sum_last(const Tensor& a) {
  if (a.shape().ndim() == 0) throw ShapeError("sum_last: scalar input");
  const std::int64_t rows = a.shape().rows(), cols = a.shape().last();
  Vec out(static_cast<size_t>(rows));
  kernels::rowsum(a.value().data(), out.data(), rows, cols);
  Tape* tape = result_tape({&a});
  if (!tape) return Tensor(drop_last(a.shape()), std::move(out));
  const int pa = a.node();
  return tape->record("sum_last", drop_last(a.shape()), std::move(out),
                      [=](Tape& t, const Vec& g) {
                        Vec& ga = t.grad(pa);
                        for (std::int64_t r = 0; r < rows; ++r) {
                          double* gr = ga.data() + r * cols;
                          for (std::int64_t j = 0; j < cols; ++j) gr[j] += g[r];
                        }
                      });
}

Tensor logsumexp_last(const Tensor& a) {
  if (a.shape().ndim() == 0) throw ShapeError("logsumexp_last: scalar input");
  const std::int64_t rows = a.shape().rows(), cols = a.shape().last();
  auto yv = std::make_shared<Vec>(static_cast<size_t>(rows));
  const Vec& x = a.value();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * cols;
    double m = xr[0];
    for (std::int64_t j = 1; j < cols; ++j) m = std::max(m, xr[j]);
    double s = 0.0;
    for (std::int64_t j = 0; j < cols; ++j) s += std::exp(xr[j] - m);
    (*yv)[static_cast<size_t>(r)] = m + std::log(s);
  }
  Tape* tape = result_tape({&a});
  if (!tape) return Tensor::from_storage(drop_last(a.shape()), std::move(yv));
  const int pa = a.node();
  auto xv = a.storage();
  return tape->record("logsumexp_last", drop_last(a.shape()), yv,
                      [=](Tape& t, const Vec& g) {
                        Vec& ga = t.grad(pa);
                        for (std::int64_t r = 0; r < rows; ++r) {
                          const double* xr = xv->data() + r * cols;
                          double* gr = ga.data() + r * cols;
                          const double yr = (*yv)[static_cast<size_t>(r)];
                          for (std::int64_t j = 0; j < cols; ++j)
                            gr[j] += g[r] * std::exp(xr[j] - yr);
                        }
                      });
}

Tensor mean_axis0(const Tensor& a) {
  if (a.shape().ndim() != 2)
    throw ShapeError("mean_axis0 expects a 2-D tensor, got " + a.shape().str());
  const std::int64_t b = a.shape().dims[0], f = a.shape().dims[1];
  Vec out(static_cast<size_t>(f), 0.0);
  kernels::colsum_acc(a.value().data(), out.data(), b, f,
                      1.0 / static_cast<double>(b));
  Tape* tape = result_tape({&a});
  if (!tape) return Tensor(Shape{f}, std::move(out));
  const int pa = a.node();
  return tape->record("mean_axis0", Shape{f}, std::move(out),
                      [=](Tape& t, const Vec& g) {
                        Vec& ga = t.grad(pa);
                        const double inv = 1.0 / static_cast<double>(b);
                        for (std::int64_t i = 0; i < b; ++i) {
                          double* gr = ga.data() + i * f;
                          for (std::int64_t j = 0; j < f; ++j)
                            gr[j] += g[j] * inv;
                        }
                      });
}

}  // namespace deepssm::autodiff

#include "qadistill/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "qadistill/errors.hpp"
#include "qadistill/numerics/kernels.hpp"

namespace qadistill {
namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::logic_error("operation on an unbound variable");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw std::logic_error("operands recorded on different tapes");
  return tape_of(a);
}

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(fmt::format("{}: incompatible shapes {} and {}", op, shape_string(a.shape()),
                               shape_string(b.shape())));
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_mismatch(op, a, b);
}

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError(fmt::format("temperature must be positive, got {}", tau));
}

bool kept(Mask mask, std::size_t i) { return mask.empty() || mask[i] != 0; }

void check_mask(Mask mask, std::size_t width) {
  if (!mask.empty() && mask.size() != width) {
    throw ShapeError(fmt::format("mask of length {} for {} positions", mask.size(), width));
  }
  if (!mask.empty() && std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) {
    throw DegenerateInputError("softmax over a fully masked input");
  }
}

// Writes softmax(x / tau) into out; masked entries become exactly 0.
void softmax_into(std::span<const double> x, double tau, Mask mask, std::span<double> out) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (kept(mask, i)) top = std::max(top, x[i] / tau);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = kept(mask, i) ? std::exp(x[i] / tau - top) : 0.0;
    total += out[i];
  }
  for (auto& v : out) v /= total;
}

void log_softmax_into(std::span<const double> x, double tau, Mask mask, std::span<double> out) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (kept(mask, i)) top = std::max(top, x[i] / tau);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (kept(mask, i)) total += std::exp(x[i] / tau - top);
  }
  const double log_z = top + std::log(total);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = kept(mask, i) ? x[i] / tau - log_z : kMaskedLogit;
}

void gemm_into(const Tensor& a, const Tensor& b, Tensor& c, bool ta, bool tb, bool accumulate) {
  kernels::GemmArgs g;
  g.a = a.data();
  g.b = b.data();
  g.c = c.data();
  g.m = ta ? a.cols() : a.rows();
  g.k = ta ? a.rows() : a.cols();
  g.n = tb ? b.rows() : b.cols();
  g.trans_a = ta;
  g.trans_b = tb;
  g.accumulate = accumulate;
  kernels::gemm(g);
}

}  // namespace

std::vector<double> softmax_temp(std::span<const double> logits, double tau, Mask mask) {
  check_tau(tau);
  if (logits.empty()) throw DegenerateInputError("softmax over an empty input");
  check_mask(mask, logits.size());
  std::vector<double> out(logits.size());
  softmax_into(logits, tau, mask, out);
  return out;
}

std::vector<double> log_softmax_temp(std::span<const double> logits, double tau, Mask mask) {
  check_tau(tau);
  if (logits.empty()) throw DegenerateInputError("softmax over an empty input");
  check_mask(mask, logits.size());
  std::vector<double> out(logits.size());
  log_softmax_into(logits, tau, mask, out);
  return out;
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) shape_mismatch("matmul", av, bv);
  Tensor out({av.rows(), bv.cols()});
  gemm_into(av, bv, out, false, false, false);
  return t.record(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ai)) gemm_into(g, tp.value(bi), tp.grad(ai), false, true, true);
    if (tp.requires_grad(bi)) gemm_into(tp.value(ai), g, tp.grad(bi), true, false, true);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.cols()) shape_mismatch("matmul_nt", av, bv);
  Tensor out({av.rows(), bv.rows()});
  gemm_into(av, bv, out, false, true, false);
  return t.record(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ai)) gemm_into(g, tp.value(bi), tp.grad(ai), false, false, true);
    if (tp.requires_grad(bi)) gemm_into(g, tp.value(ai), tp.grad(bi), true, false, true);
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t r = av.rows();
  const std::size_t c = av.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);
  return t.record(std::move(out), {a.id}, [ai = a.id, r, c](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g.at(j, i);
  });
}

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of(a);
  Tensor out = a.value().reshaped(std::move(shape));
  return t.record(std::move(out), {a.id}, [ai = a.id](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same("add", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return t.record(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    for (int in : {ai, bi}) {
      if (!tp.requires_grad(in)) continue;
      Tensor& gi = tp.grad(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same("sub", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return t.record(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ai)) {
      Tensor& ga = tp.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(bi)) {
      Tensor& gb = tp.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same("mul", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return t.record(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ai)) {
      Tensor& ga = tp.grad(ai);
      const Tensor& bv = tp.value(bi);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(bi)) {
      Tensor& gb = tp.grad(bi);
      const Tensor& av = tp.value(ai);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (auto& v : out.values()) v *= factor;
  return t.record(std::move(out), {a.id}, [ai = a.id, factor](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Var shift(Var a, double offset) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (auto& v : out.values()) v += offset;
  return t.record(std::move(out), {a.id}, [ai = a.id](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (av.rank() != 2 || rv.size() != av.cols()) shape_mismatch("add_row", av, rv);
  Tensor out = av;
  const std::size_t c = av.cols();
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += rv[j];
  return t.record(std::move(out), {a.id, row.id}, [ai = a.id, ri = row.id, c](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ai)) {
      Tensor& ga = tp.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(ri)) {
      Tensor& gr = tp.grad(ri);
      for (std::size_t i = 0; i < g.size(); ++i) gr[i % c] += g[i];
    }
  });
}

Var repeat_rows(Var row, std::size_t count) {
  Tape& t = tape_of(row);
  const Tensor& rv = row.value();
  if (rv.rows() != 1) throw ShapeError(fmt::format("repeat_rows: expected a single row, got {}", shape_string(rv.shape())));
  const std::size_t c = rv.cols();
  Tensor out({count, c});
  for (std::size_t i = 0; i < count; ++i) std::copy(rv.data(), rv.data() + c, out.data() + i * c);
  return t.record(std::move(out), {row.id}, [ri = row.id, c](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& gr = tp.grad(ri);
    for (std::size_t i = 0; i < g.size(); ++i) gr[i % c] += g[i];
  });
}

Var concat_cols(std::initializer_list<Var> parts) {
  if (parts.size() == 0) throw ShapeError("concat_cols: no inputs");
  Var first = *parts.begin();
  Tape& t = tape_of(first);
  const std::size_t rows = first.value().rows();
  std::vector<int> ids;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (Var p : parts) {
    tape_of(first, p);
    if (p.value().rank() != 2 || p.value().rows() != rows) shape_mismatch("concat_cols", first.value(), p.value());
    ids.push_back(p.id);
    widths.push_back(p.value().cols());
    total += p.value().cols();
  }
  Tensor out({rows, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const Tensor& pv = t.value(ids[k]);
    for (std::size_t i = 0; i < rows; ++i)
      std::copy(pv.data() + i * widths[k], pv.data() + (i + 1) * widths[k], out.data() + i * total + offset);
    offset += widths[k];
  }
  auto inputs = ids;
  return t.record(std::move(out), std::move(inputs), [ids, widths, rows, total](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(ids[k])) {
        Tensor& gk = tp.grad(ids[k]);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) gk[i * widths[k] + j] += g[i * total + off + j];
      }
      off += widths[k];
    }
  });
}

Var window_concat(Var x, std::size_t radius) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw ShapeError(fmt::format("window_concat: expected a matrix, got {}", shape_string(xv.shape())));
  const std::size_t len = xv.rows();
  const std::size_t d = xv.cols();
  const std::size_t span = 2 * radius + 1;
  Tensor out({len, span * d});
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t w = 0; w < span; ++w) {
      const auto src = static_cast<long long>(pos) + static_cast<long long>(w) - static_cast<long long>(radius);
      if (src < 0 || src >= static_cast<long long>(len)) continue;
      std::copy(xv.data() + src * d, xv.data() + (src + 1) * d, out.data() + pos * span * d + w * d);
    }
  }
  return t.record(std::move(out), {x.id}, [xi = x.id, len, d, span, radius](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(xi);
    for (std::size_t pos = 0; pos < len; ++pos) {
      for (std::size_t w = 0; w < span; ++w) {
        const auto src = static_cast<long long>(pos) + static_cast<long long>(w) - static_cast<long long>(radius);
        if (src < 0 || src >= static_cast<long long>(len)) continue;
        for (std::size_t j = 0; j < d; ++j) gx[src * d + j] += g[pos * span * d + w * d + j];
      }
    }
  });
}

Var gather_rows(Var table, std::span<const int> indices) {
  Tape& t = tape_of(table);
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw ShapeError(fmt::format("gather_rows: expected a matrix, got {}", shape_string(tv.shape())));
  const std::size_t d = tv.cols();
  std::vector<int> idx(indices.begin(), indices.end());
  Tensor out({idx.size(), d});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= tv.rows()) {
      throw std::out_of_range(fmt::format("gather_rows: index {} outside table of {} rows", idx[r], tv.rows()));
    }
    std::copy(tv.data() + idx[r] * d, tv.data() + (idx[r] + 1) * d, out.data() + r * d);
  }
  return t.record(std::move(out), {table.id}, [ti = table.id, idx = std::move(idx), d](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    Tensor& gt = tp.grad(ti);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) gt[idx[r] * d + j] += g[r * d + j];
  });
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::tanh(v);
  return t.record(std::move(out), {a.id}, [ai = a.id](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var log(Var a) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (auto& v : out.values()) {
    if (!(v > 0.0)) throw NumericalError(fmt::format("log of non-positive value {}", v));
    v = std::log(v);
  }
  return t.record(std::move(out), {a.id}, [ai = a.id](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    const Tensor& x = tp.value(ai);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
  });
}

Var hinge(Var a) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::max(0.0, v);
  return t.record(std::move(out), {a.id}, [ai = a.id](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    const Tensor& x = tp.value(ai);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) ga[i] += g[i];
    }
  });
}

Var row_softmax(Var a, double tau, Mask mask) {
  check_tau(tau);
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const std::size_t rows = av.rows();
  const std::size_t cols = av.cols();
  if (cols == 0) throw DegenerateInputError("softmax over an empty input");
  check_mask(mask, cols);
  Tensor out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) softmax_into(av.row(r), tau, mask, out.row(r));
  return t.record(std::move(out), {a.id}, [ai = a.id, tau, rows, cols](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        ga[i] += y[i] * (g[i] - dot) / tau;
      }
    }
  });
}

Var softmax_temp(Var logits, double tau, Mask mask) { return row_softmax(logits, tau, mask); }

Var log_softmax_temp(Var logits, double tau, Mask mask) {
  check_tau(tau);
  Tape& t = tape_of(logits);
  const Tensor& xv = logits.value();
  const std::size_t rows = xv.rows();
  const std::size_t cols = xv.cols();
  if (cols == 0) throw DegenerateInputError("softmax over an empty input");
  check_mask(mask, cols);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) log_softmax_into(xv.row(r), tau, mask, out.row(r));
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  return t.record(std::move(out), {logits.id},
                  [xi = logits.id, tau, rows, cols, keep = std::move(keep)](Tape& tp, int self) {
                    const Tensor& g = tp.grad(self);
                    const Tensor& y = tp.value(self);
                    Tensor& gx = tp.grad(xi);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double total = 0.0;
                      for (std::size_t c = 0; c < cols; ++c) {
                        if (kept(keep, c)) total += g[r * cols + c];
                      }
                      for (std::size_t c = 0; c < cols; ++c) {
                        if (!kept(keep, c)) continue;
                        const std::size_t i = r * cols + c;
                        gx[i] += (g[i] - std::exp(y[i]) * total) / tau;
                      }
                    }
                  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return t.record(Tensor::scalar(total), {a.id}, [ai = a.id](Tape& tp, int self) {
    const double g = tp.grad(self)[0];
    for (auto& v : tp.grad(ai).values()) v += g;
  });
}

Var pick(Var a, std::size_t index) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  if (index >= av.size()) {
    throw std::out_of_range(fmt::format("pick: index {} outside tensor of shape {}", index, shape_string(av.shape())));
  }
  return t.record(Tensor::scalar(av[index]), {a.id}, [ai = a.id, index](Tape& tp, int self) {
    tp.grad(ai)[index] += tp.grad(self)[0];
  });
}

Var squared_error(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same("squared_error", av, bv);
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) total += (av[i] - bv[i]) * (av[i] - bv[i]);
  return t.record(Tensor::scalar(total), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& tp, int self) {
    const double g = tp.grad(self)[0];
    const Tensor& av = tp.value(ai);
    const Tensor& bv = tp.value(bi);
    if (tp.requires_grad(ai)) {
      Tensor& ga = tp.grad(ai);
      for (std::size_t i = 0; i < av.size(); ++i) ga[i] += 2.0 * g * (av[i] - bv[i]);
    }
    if (tp.requires_grad(bi)) {
      Tensor& gb = tp.grad(bi);
      for (std::size_t i = 0; i < av.size(); ++i) gb[i] -= 2.0 * g * (av[i] - bv[i]);
    }
  });
}

Var mse(Var a, Var b) {
  const auto n = static_cast<double>(a.value().size());
  return scale(squared_error(a, b), 1.0 / n);
}

}  // namespace qadistill

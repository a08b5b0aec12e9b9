#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>

#include "qadistill/numerics/tape.hpp"
#include "qadistill/numerics/tensor.hpp"

namespace qadistill {

// 1 keeps a position, 0 masks it. An empty mask keeps everything.
using Mask = std::span<const std::uint8_t>;

// Logit assigned to masked positions before normalization.
inline constexpr double kMaskedLogit = -1e9;

// Plain-value softmax of logits / tau. Masked positions come out exactly 0.
// Throws ConfigError for tau <= 0 and DegenerateInputError when every
// position is masked.
std::vector<double> softmax_temp(std::span<const double> logits, double tau, Mask mask = {});
std::vector<double> log_softmax_temp(std::span<const double> logits, double tau, Mask mask = {});

// Differentiable kernels. All shapes are explicit: the only expansion helpers
// are add_row and repeat_rows. Mismatches throw ShapeError naming both shapes.
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var transpose(Var a);
Var reshape(Var a, Shape shape);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var shift(Var a, double offset);
Var add_row(Var a, Var row);
Var repeat_rows(Var row, std::size_t count);
Var concat_cols(std::initializer_list<Var> parts);

// Row t of the result is [x_{t-r}, ..., x_t, ..., x_{t+r}] with zero rows
// outside the sequence.
Var window_concat(Var x, std::size_t radius);
Var gather_rows(Var table, std::span<const int> indices);

Var tanh(Var a);
Var log(Var a);
Var hinge(Var a);  // max(0, a); subgradient 0 at a == 0

// Softmax of each row at temperature tau; `mask` applies to columns.
Var row_softmax(Var a, double tau = 1.0, Mask mask = {});
Var softmax_temp(Var logits, double tau, Mask mask = {});
Var log_softmax_temp(Var logits, double tau, Mask mask = {});

Var sum(Var a);
Var pick(Var a, std::size_t index);
Var squared_error(Var a, Var b);  // sum of squared differences
Var mse(Var a, Var b);            // mean of squared differences

}  // namespace qadistill

#pragma once

#include <cstddef>
#include <vector>

#include "labpolicy/numeric/tape.hpp"

// Differentiable ops on tape variables. Binary elementwise ops broadcast any
// dimension of size 1 (scalar, row vector, column vector).
namespace labpolicy::numeric::ops {

Var matmul(Var a, Var b);
// x·w + b with b a 1×out row; the fused form of one dense layer.
Var linear(Var x, Var w, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var add_scalar(Var a, double c);
Var scale(Var a, double c);
Var neg(Var a);

Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var sqrt(Var a);
// sqrt(a² + eps): differentiable stand-in for |a|.
Var smooth_abs(Var a, double eps = 1e-8);

Var sum(Var a);
Var mean(Var a);
// Sum over columns of each row: m×n → m×1.
Var row_sum(Var a);

Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_cols(const std::vector<Var>& parts);
Var reshape(Var a, std::size_t rows, std::size_t cols);
// out(i,0) = a(i, index[i]).
Var gather_cols(Var a, std::vector<std::size_t> index);
// Running sum along each row.
Var cumsum_cols(Var a);
Var softmax_rows(Var a);

}  // namespace labpolicy::numeric::ops

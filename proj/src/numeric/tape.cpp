#include "labpolicy/numeric/tape.hpp"

#include <string>

#include "labpolicy/error.hpp"

namespace labpolicy::numeric {

const Matrix& Var::value() const { return tape->value(id); }

Var Tape::constant(Matrix value) { return leaf(std::move(value), false); }

Var Tape::leaf(Matrix value, bool requires_grad) {
  if (!value.all_finite()) throw NumericError("non-finite value in tape leaf");
  nodes_.push_back(Node{std::move(value), Matrix{}, requires_grad, "leaf", nullptr});
  return Var{this, nodes_.size() - 1};
}

Var Tape::push(Matrix value, bool requires_grad, const char* op, Backward backward) {
  if (!value.all_finite()) throw NumericError(std::string("non-finite value produced by op '") + op + "'");
  nodes_.push_back(Node{std::move(value), Matrix{}, requires_grad, op, requires_grad ? std::move(backward) : nullptr});
  return Var{this, nodes_.size() - 1};
}

Matrix& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.data.empty()) n.grad = Matrix(n.value.rows, n.value.cols, 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw NumericError("backward: variable belongs to another tape");
  const Matrix& lv = nodes_[loss.id].value;
  if (lv.rows != 1 || lv.cols != 1) throw NumericError("backward: loss must be 1x1");
  if (!nodes_[loss.id].requires_grad) return;
  grad(loss.id).data[0] += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.data.empty()) continue;
    n.backward(*this, i);
    if (!n.grad.all_finite()) throw NumericError(std::string("non-finite gradient in op '") + n.op + "'");
  }
}

}  // namespace labpolicy::numeric

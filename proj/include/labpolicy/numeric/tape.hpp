#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "labpolicy/numeric/matrix.hpp"

namespace labpolicy::numeric {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
  double scalar() const { return value().data.at(0); }
};

// Reverse-mode tape over matrix-valued nodes. Nodes that do not depend on a
// trainable leaf carry requires_grad=false and are skipped by backward().
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var leaf(Matrix value, bool requires_grad);

  // Appends an op result. Throws NumericError naming `op` if value has a
  // non-finite entry.
  Var push(Matrix value, bool requires_grad, const char* op, Backward backward);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient accumulator, allocated (zeroed) on first access.
  Matrix& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.data.empty(); }

  // Seeds d(loss)/d(loss) = 1 for a 1×1 node and propagates to all leaves.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    const char* op = "";
    Backward backward;
  };
  std::vector<Node> nodes_;
};

}  // namespace labpolicy::numeric

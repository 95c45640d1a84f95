#pragma once

#include <functional>
#include <vector>

#include "udap/tensor.hpp"

namespace udap {

/// Dynamic tape recording one forward pass. Ops append nodes in execution
/// order, which is also the topological order; backward() walks the list in
/// reverse so every node reachable from the loss is visited exactly once.
///
/// A tape is single-threaded. Distinct tapes may be used on distinct threads
/// concurrently (the active tape is thread-local).
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Tape currently recording on this thread, or nullptr.
  static Tape* active();

  /// Installs a tape as active for the lifetime of the scope.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  /// Records a node. `backward` reads output.grad() and accumulates into the
  /// inputs that need gradients.
  void record(const char* op, std::vector<Tensor> inputs, Tensor output,
              std::function<void()> backward);

  /// Seeds d(loss)/d(loss) = 1 and back-propagates through the tape.
  /// Rejects non-scalar losses.
  void backward(const Tensor& loss);

  size_t node_count() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    const char* op;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
};

}  // namespace udap

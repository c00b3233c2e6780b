#pragma once

// Reverse-mode differentiation over a dynamically recorded graph.
//
// Every differentiable op produces a Var whose node remembers its inputs and a
// backward closure. Backward closures are themselves written with Var ops, so
// running them with graph recording enabled (create_graph) yields gradients
// that can be differentiated again. This is what the gradient penalty needs.

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "balgan/tensor.hpp"

namespace balgan {

class Var;

// grad_out has the shape of the op's output; `needs[i]` tells whether input i
// wants a gradient. Entries for inputs that do not need one may be left empty.
using BackwardFn = std::function<std::vector<Var>(const Var& grad_out, const std::vector<bool>& needs)>;

namespace detail {
struct Node;
}

class Var {
 public:
  Var() = default;

  static Var constant(Tensor value);
  static Var leaf(Tensor value, bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  bool is_leaf() const;
  const char* op_name() const;

  // Constant holding a copy of this value; gradient flow stops here.
  Var detach() const { return constant(value()); }

  // Leaf-only: in-place updates by optimizers / loaders.
  Tensor& mutable_value();
  void set_requires_grad(bool flag);

  const detail::Node* node() const { return node_.get(); }

 private:
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Var make_result(Tensor value, const char* op, std::vector<Var> inputs, BackwardFn backward,
                         bool higher_order);
};

namespace detail {
struct Node {
  Tensor value;
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::vector<Var> inputs;
  BackwardFn backward;
  // False when the backward closure uses raw kernels, i.e. its gradients cannot
  // be differentiated again.
  bool higher_order = true;
};
}  // namespace detail

// Graph recording switch (thread-local). Disabled inside plain backward passes
// and for inference.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool flag);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Records an op result. When recording is off or no input requires a gradient
// the result is a plain constant.
Var make_result(Tensor value, const char* op, std::vector<Var> inputs, BackwardFn backward,
                bool higher_order = true);

// Gradients of `root` with respect to each Var in `wrt`. `seed` defaults to
// ones shaped like root. Entries are undefined Vars when root does not depend
// on the corresponding input. With create_graph the returned gradients are
// themselves differentiable.
std::vector<Var> grad(const Var& root, const std::vector<Var>& wrt, bool create_graph = false, Var seed = {});

// True when a gradient can flow from `root` back to `input`.
bool depends_on(const Var& root, const Var& input);

// Named trainable tensors with gradient slots. Buffers (e.g. running
// statistics) live alongside parameters but are never trained.
class ParamSet {
 public:
  struct Entry {
    Var var;
    Tensor grad;
    bool trainable = true;
    bool buffer = false;
  };

  const Var& add(const std::string& name, Tensor value, bool trainable = true);
  const Var& add_buffer(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Var& var(const std::string& name) const { return entry(name).var; }
  const Tensor& value(const std::string& name) const { return entry(name).var.value(); }
  Tensor& value(const std::string& name);
  const Tensor& grad(const std::string& name) const { return entry(name).grad; }
  Tensor& grad(const std::string& name) { return entry(name).grad; }
  bool trainable(const std::string& name) const { return entry(name).trainable; }
  bool is_buffer(const std::string& name) const { return entry(name).buffer; }
  void set_trainable(const std::string& name, bool flag);

  void zero_grad();
  std::vector<std::string> names() const;
  // Element count of non-buffer entries.
  std::size_t parameter_count() const;
  std::size_t trainable_count() const;
  const std::map<std::string, Entry>& entries() const { return entries_; }

  // Deep copy: fresh leaves with the same values and flags.
  ParamSet clone() const;
  // Copies values of every entry present in both sets with equal shape;
  // returns the number copied.
  std::size_t load_values(const ParamSet& other);

 private:
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;
  std::map<std::string, Entry> entries_;
};

// Accumulates d(loss)/d(param) into every trainable entry of `params`.
// The recorded graph is left intact, so calling twice doubles the gradients.
void backward(const Var& loss, ParamSet& params);

}  // namespace balgan

#include "balgan/autograd.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "balgan/errors.hpp"
#include "balgan/ops.hpp"

namespace balgan {

namespace {
thread_local bool g_grad_enabled = true;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool flag) { g_grad_enabled = flag; }

Var Var::constant(Tensor value) { return leaf(std::move(value), false); }

Var Var::leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

const Tensor& Var::value() const {
  if (!node_) throw ContractError("use of an undefined Var");
  return node_->value;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }
bool Var::is_leaf() const { return node_ && node_->leaf; }
const char* Var::op_name() const { return node_ ? node_->op : "undefined"; }

Tensor& Var::mutable_value() {
  if (!node_ || !node_->leaf) throw ContractError("only leaf values may be modified in place");
  return node_->value;
}

void Var::set_requires_grad(bool flag) {
  if (!node_ || !node_->leaf) throw ContractError("requires_grad can only be set on leaves");
  node_->requires_grad = flag;
}

Var make_result(Tensor value, const char* op, std::vector<Var> inputs, BackwardFn backward, bool higher_order) {
  const bool track = GradMode::enabled() &&
                     std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); });
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->op = op;
  if (track) {
    node->requires_grad = true;
    node->leaf = false;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    node->higher_order = higher_order;
  }
  return Var(std::move(node));
}

namespace {

using NodePtr = const detail::Node*;

// Post-order (inputs before consumers) over nodes that require gradients.
std::vector<NodePtr> post_order(NodePtr root) {
  std::vector<NodePtr> order;
  if (!root || !root->requires_grad) return order;
  std::unordered_set<NodePtr> visited;
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodePtr child = node->inputs[next++].node();
      if (child && child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

class GradModeScope {
 public:
  explicit GradModeScope(bool flag) : previous_(GradMode::enabled()) { GradMode::set_enabled(flag); }
  ~GradModeScope() { GradMode::set_enabled(previous_); }

 private:
  bool previous_;
};

}  // namespace

std::vector<Var> grad(const Var& root, const std::vector<Var>& wrt, bool create_graph, Var seed) {
  if (!root.defined()) throw ContractError("grad: undefined root");
  std::vector<Var> result(wrt.size());
  if (!root.requires_grad()) return result;

  const auto order = post_order(root.node());
  std::unordered_set<NodePtr> targets;
  for (const Var& v : wrt) {
    if (v.defined()) targets.insert(v.node());
  }
  std::unordered_set<NodePtr> needed;
  for (NodePtr n : order) {
    bool need = targets.count(n) != 0;
    for (const Var& in : n->inputs) need = need || needed.count(in.node()) != 0;
    if (need) needed.insert(n);
  }
  if (!needed.count(root.node())) return result;

  GradModeScope scope(create_graph);
  if (!seed.defined()) seed = Var::constant(Tensor(root.shape(), 1.0f));
  if (seed.shape() != root.shape()) {
    throw ShapeError("grad: seed shape " + shape_to_string(seed.shape()) + " differs from root " +
                     shape_to_string(root.shape()));
  }

  std::unordered_map<NodePtr, Var> grads;
  grads.emplace(root.node(), seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodePtr n = *it;
    if (n->leaf || !needed.count(n)) continue;
    auto found = grads.find(n);
    if (found == grads.end()) continue;
    if (create_graph && !n->higher_order) {
      throw ContractError(std::string("op '") + n->op + "' does not support higher-order gradients");
    }
    std::vector<bool> needs(n->inputs.size());
    for (std::size_t i = 0; i < needs.size(); ++i) {
      needs[i] = n->inputs[i].requires_grad() && needed.count(n->inputs[i].node()) != 0;
    }
    const Var gout = found->second;
    if (!targets.count(n)) grads.erase(found);
    const std::vector<Var> gin = n->backward(gout, needs);
    for (std::size_t i = 0; i < needs.size(); ++i) {
      if (!needs[i] || i >= gin.size() || !gin[i].defined()) continue;
      if (gin[i].shape() != n->inputs[i].shape()) {
        throw ShapeError(std::string("backward of '") + n->op + "' produced gradient " +
                         shape_to_string(gin[i].shape()) + " for input " + shape_to_string(n->inputs[i].shape()));
      }
      NodePtr in = n->inputs[i].node();
      auto [slot, inserted] = grads.emplace(in, gin[i]);
      if (!inserted) slot->second = add(slot->second, gin[i]);
    }
  }
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    if (!wrt[i].defined()) continue;
    auto found = grads.find(wrt[i].node());
    if (found != grads.end()) result[i] = found->second;
  }
  return result;
}

bool depends_on(const Var& root, const Var& input) {
  if (!root.defined() || !input.defined() || !input.requires_grad()) return false;
  const auto order = post_order(root.node());
  return std::find(order.begin(), order.end(), input.node()) != order.end();
}

const Var& ParamSet::add(const std::string& name, Tensor value, bool trainable) {
  if (entries_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
  Entry e;
  e.grad = Tensor(value.shape());
  e.var = Var::leaf(std::move(value), trainable);
  e.trainable = trainable;
  return entries_.emplace(name, std::move(e)).first->second.var;
}

const Var& ParamSet::add_buffer(const std::string& name, Tensor value) {
  const Var& v = add(name, std::move(value), false);
  entries_.at(name).buffer = true;
  return v;
}

Tensor& ParamSet::value(const std::string& name) { return entry(name).var.mutable_value(); }

void ParamSet::set_trainable(const std::string& name, bool flag) {
  Entry& e = entry(name);
  if (e.buffer && flag) throw ContractError("buffer '" + name + "' cannot be trainable");
  e.trainable = flag;
  e.var.set_requires_grad(flag);
}

void ParamSet::zero_grad() {
  for (auto& [name, e] : entries_) e.grad.fill(0.0f);
}

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) {
    if (!e.buffer) n += e.var.value().size();
  }
  return n;
}

std::size_t ParamSet::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) {
    if (e.trainable) n += e.var.value().size();
  }
  return n;
}

ParamSet ParamSet::clone() const {
  ParamSet out;
  for (const auto& [name, e] : entries_) {
    Entry c;
    c.var = Var::leaf(e.var.value(), e.trainable);
    c.grad = e.grad;
    c.trainable = e.trainable;
    c.buffer = e.buffer;
    out.entries_.emplace(name, std::move(c));
  }
  return out;
}

std::size_t ParamSet::load_values(const ParamSet& other) {
  std::size_t copied = 0;
  for (auto& [name, e] : entries_) {
    auto it = other.entries_.find(name);
    if (it == other.entries_.end() || it->second.var.shape() != e.var.shape()) continue;
    e.var.mutable_value() = it->second.var.value();
    ++copied;
  }
  return copied;
}

ParamSet::Entry& ParamSet::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

const ParamSet::Entry& ParamSet::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

void backward(const Var& loss, ParamSet& params) {
  if (!loss.defined() || loss.value().size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        (loss.defined() ? shape_to_string(loss.shape()) : std::string("undefined")));
  }
  std::vector<std::string> names;
  std::vector<Var> wrt;
  for (const auto& [name, e] : params.entries()) {
    if (!e.trainable) continue;
    names.push_back(name);
    wrt.push_back(e.var);
  }
  const auto grads = grad(loss, wrt, false);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].defined()) continue;
    Tensor& slot = params.grad(names[i]);
    const Tensor& g = grads[i].value();
    for (std::size_t j = 0; j < slot.size(); ++j) slot[j] += g[j];
  }
}

}  // namespace balgan

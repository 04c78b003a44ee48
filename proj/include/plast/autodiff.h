#pragma once

#include "plast/tensor.h"

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace plast::ad {

struct Node {
    Tensor value;
    Tensor grad; // allocated lazily for interior nodes, eagerly for leaves
    bool requires_grad = false;
    bool leaf = true;
    bool trainable = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node &)> backward_fn;

    Tensor & ensure_grad();
};

// Handle to a graph node. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    const Tensor & value() const { return node_->value; }
    const Tensor & grad() const { return node_->grad; }
    Tensor & mutable_value() { return node_->value; }
    Tensor & mutable_grad() { return node_->ensure_grad(); }

    bool requires_grad() const { return node_->requires_grad; }
    bool trainable() const { return node_->trainable; }
    // Only meaningful on leaves created by param().
    void set_trainable(bool t);
    void zero_grad();

    const std::vector<size_t> & shape() const { return node_->value.shape(); }
    size_t rows() const { return node_->value.rows(); }
    size_t cols() const { return node_->value.cols(); }
    double item() const;

    Node * node() const { return node_.get(); }
    const std::shared_ptr<Node> & ptr() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

private:
    std::shared_ptr<Node> node_;
};

// Leaf holding a parameter; grad is always allocated and has the value's shape.
Var param(Tensor value, bool trainable = true);
// Leaf that never receives gradient.
Var constant(Tensor value);

enum class Activation { silu, gelu, relu };

Activation activation_from_name(const std::string & name);
std::string activation_name(Activation a);
double activation_value(Activation a, double x);

Var matmul(const Var & a, const Var & b);
Var transpose(const Var & a);
Var add(const Var & a, const Var & b);
// a [n x m] + bias [1 x m] broadcast over rows.
Var add_bias(const Var & a, const Var & bias);
Var mul(const Var & a, const Var & b);
Var scale(const Var & a, double s);
Var silu(const Var & x);
Var gelu(const Var & x);
Var relu(const Var & x);
Var activate(const Var & x, Activation a);
Var softmax_rows(const Var & x);
// Row i attends to columns j <= i + offset; masked entries have probability 0.
Var causal_softmax(const Var & x);
// Per-row normalisation followed by gain [1 x n] and bias [1 x n].
Var layer_norm(const Var & x, const Var & gain, const Var & bias, double eps = 1e-5);
Var gather_rows(const Var & table, std::span<const size_t> ids);
Var concat_rows(const Var & top, const Var & bottom);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var & x, size_t start, size_t width);
Var sum(const Var & x);
// Sum over rows r with weight[r] != 0 of weight[r] * -log softmax(logits[r])[target[r]].
Var cross_entropy(const Var & logits, std::span<const size_t> targets, std::span<const double> weights);

// Reverse pass from a scalar. Accumulates into grads of every node that
// requires grad.
void backward(const Var & loss);

} // namespace plast::ad

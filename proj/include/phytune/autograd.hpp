#pragma once

// Minimal reverse-mode automatic differentiation over dense double tensors.
//
// Every op returns a Var whose node remembers its parents only when some
// parent requires a gradient, so inference-only graphs are freed eagerly.
// Leaves created with parameter() accumulate gradients across backward()
// calls until zero_grad(); interior gradients are reset on each backward().

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "phytune/tensor.hpp"

namespace phytune::ag {

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad();
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Var constant(Tensor value);
    static Var parameter(Tensor value, bool requires_grad = true);

    bool defined() const noexcept { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    // Leaves only; interior values are owned by the graph.
    Tensor& mutable_value();
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t size() const { return node_->value.size(); }
    double item() const;

    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool on);
    bool has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }
    // Zero tensor of the value's shape when no gradient reached this node.
    Tensor grad() const;
    void zero_grad();

    const std::shared_ptr<Node>& node() const noexcept { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Seeds d(root)/d(root) = 1; root must hold a single element.
void backward(const Var& root);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
// a[R,C] + row[C]
Var add_row(const Var& a, const Var& row);

// [R,K] x [K,C]
Var matmul(const Var& a, const Var& b);
// [R,K] x [C,K]^T
Var matmul_nt(const Var& a, const Var& b);

Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& a, double eps = 1e-5);

Var silu(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var square(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);

Var reshape(const Var& a, Shape shape);
// out[i] = a[indices[i]], reshaped to `shape`.
Var gather(const Var& a, std::shared_ptr<const std::vector<std::size_t>> indices, Shape shape);
Var slice_cols(const Var& a, std::size_t start, std::size_t count);
Var concat_cols(std::span<const Var> parts);
// Flattens and concatenates into a 1-D vector.
Var concat(std::span<const Var> parts);

// Scalar-valued function of `input` with a caller-supplied gradient.
Var scalar_function(const Var& input, double value, std::vector<double> gradient);

}  // namespace phytune::ag

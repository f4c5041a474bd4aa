// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace guidelab {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Controls which leaves the graph records gradients for.
///  - Full: every requires_grad tensor, parameters included.
///  - InputsOnly: parameters behave as constants; only non-parameter leaves
///    (e.g. a sample being guided) receive gradients.
///  - Disabled: no graph is recorded at all.
enum class GradMode { Full, InputsOnly, Disabled };

GradMode grad_mode() noexcept;

/// RAII switch of the thread-local grad mode.
class GradModeGuard {
  public:
    explicit GradModeGuard(GradMode mode);
    ~GradModeGuard();
    GradModeGuard(const GradModeGuard&) = delete;
    GradModeGuard& operator=(const GradModeGuard&) = delete;

  private:
    GradMode previous_;
};

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty means "no gradient populated"
    bool requires_grad = false;
    bool is_parameter = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::vector<bool> tracked;  // tracked[i]: parents[i] receives gradient
    std::function<void(TensorNode&)> backward;
};

}  // namespace detail

/// Dense row-major tensor of doubles with reverse-mode gradient tracking.
///
/// Tensors are cheap handles; copies share storage and graph position.
/// Leaves are created with the factory functions, interior nodes by the ops
/// below. The graph is owned by the handles that reference it: dropping the
/// loss (and intermediates) resets it.
class Tensor {
  public:
    Tensor();

    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor vector(std::vector<double> values, bool requires_grad = false);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                         bool requires_grad = false);

    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size() const;
    /// Leading dimension for rank-2 tensors; 1 for vectors.
    std::size_t rows() const;
    /// Trailing dimension.
    std::size_t cols() const;

    std::span<const double> values() const;
    /// Writable view of a leaf's storage. Throws ContractError on interior nodes.
    std::span<double> mutable_values();
    double item() const;
    double at(std::size_t row, std::size_t col) const;

    bool requires_grad() const;
    bool is_parameter() const;
    void mark_parameter();

    bool has_grad() const;
    std::span<const double> grad() const;
    std::vector<double> grad_copy() const;
    /// Drops the populated gradient.
    void clear_grad();

    /// New leaf sharing no graph with this tensor; values are copied.
    Tensor detach(bool requires_grad = false) const;

    bool defined() const { return node_ != nullptr; }
    const char* op_name() const;

    // Internal use by ops.
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

  private:
    std::shared_ptr<detail::TensorNode> node_;
};

/// Runs reverse accumulation from a scalar loss. Every requires_grad tensor
/// reachable from `loss` ends with a populated gradient; leaves accumulate
/// into any gradient they already hold.
void backward(const Tensor& loss);

enum class Reduction { Mean, Sum };

// Forward ops. All throw DimensionError on incompatible shapes.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Elementwise a + b. `b` may also be a vector/1xN row broadcast over a's rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor square(const Tensor& a);
Tensor softmax(const Tensor& logits, std::size_t axis);
/// Cross entropy of softmax(logits) against integer targets. Rank-1 logits
/// take a single target; rank-2 logits take one target per row.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, Reduction reduction = Reduction::Mean);
Tensor mse(const Tensor& a, const Tensor& b);
/// Rows of `table` selected by `indices`: the embedding lookup.
Tensor gather(const Tensor& table, std::span<const int> indices);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

}  // namespace guidelab

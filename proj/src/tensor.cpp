// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidelab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "guidelab/errors.hpp"
#include "guidelab/simd/kernels.hpp"

namespace guidelab {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

namespace {

thread_local GradMode tls_grad_mode = GradMode::Full;

bool tracks(const TensorNode& n) {
    if (!n.requires_grad) return false;
    switch (tls_grad_mode) {
        case GradMode::Disabled:
            return false;
        case GradMode::InputsOnly:
            return !n.is_parameter;
        case GradMode::Full:
            return true;
    }
    return false;
}

NodePtr make_node(const char* op, Shape shape, std::vector<double> value, std::vector<NodePtr> parents) {
    auto node = std::make_shared<TensorNode>();
    node->op = op;
    node->shape = std::move(shape);
    node->value = std::move(value);
    bool any = false;
    std::vector<bool> tracked(parents.size());
    for (std::size_t i = 0; i < parents.size(); ++i) {
        tracked[i] = tracks(*parents[i]);
        any = any || tracked[i];
    }
    if (any) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->tracked = std::move(tracked);
    }
    return node;
}

[[noreturn]] void dimension_error(const char* op, const Shape& a, const Shape& b) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_to_string(a) + " and " +
                         shape_to_string(b));
}

[[noreturn]] void dimension_error(const char* op, const Shape& a) {
    throw DimensionError(std::string(op) + ": unsupported shape " + shape_to_string(a));
}

const NodePtr& checked(const Tensor& t, const char* op) {
    if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
    return t.node();
}

// Row-broadcast: b is a vector or 1xN row matching a's trailing dimension.
bool is_row_broadcast(const Shape& a, const Shape& b) {
    if (a.size() != 2) return false;
    if (b.size() == 1) return b[0] == a[1];
    if (b.size() == 2) return b[0] == 1 && b[1] == a[1] && a[0] != 1;
    return false;
}

std::size_t rows_of(const Shape& s) { return s.size() == 2 ? s[0] : 1; }
std::size_t cols_of(const Shape& s) { return s.empty() ? 1 : s.back(); }

}  // namespace

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

GradMode grad_mode() noexcept { return tls_grad_mode; }

GradModeGuard::GradModeGuard(GradMode mode) : previous_(tls_grad_mode) { tls_grad_mode = mode; }
GradModeGuard::~GradModeGuard() { tls_grad_mode = previous_; }

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() = default;

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    for (auto d : shape) {
        if (d == 0) throw DimensionError("tensor: zero-sized dimension in " + shape_to_string(shape));
    }
    if (shape_size(shape) != values.size()) {
        throw DimensionError("tensor: shape " + shape_to_string(shape) + " holds " +
                             std::to_string(shape_size(shape)) + " values, got " + std::to_string(values.size()));
    }
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const auto n = shape_size(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
    const auto n = values.size();
    return from({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad) {
    return from({rows, cols}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return checked(*this, "shape")->shape; }
std::size_t Tensor::size() const { return checked(*this, "size")->value.size(); }
std::size_t Tensor::rows() const { return rows_of(shape()); }
std::size_t Tensor::cols() const { return cols_of(shape()); }

std::span<const double> Tensor::values() const { return checked(*this, "values")->value; }

std::span<double> Tensor::mutable_values() {
    auto& n = checked(*this, "mutable_values");
    if (n->backward) throw ContractError("mutable_values: tensor produced by '" + std::string(n->op) + "' is not a leaf");
    return n->value;
}

double Tensor::item() const {
    auto& n = checked(*this, "item");
    if (n->value.size() != 1) throw ContractError("item: tensor of shape " + shape_to_string(n->shape) + " is not scalar");
    return n->value[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
    auto& n = checked(*this, "at");
    return n->value.at(row * cols_of(n->shape) + col);
}

bool Tensor::requires_grad() const { return checked(*this, "requires_grad")->requires_grad; }
bool Tensor::is_parameter() const { return checked(*this, "is_parameter")->is_parameter; }

void Tensor::mark_parameter() {
    auto& n = checked(*this, "mark_parameter");
    n->is_parameter = true;
    n->requires_grad = true;
}

bool Tensor::has_grad() const { return !checked(*this, "has_grad")->grad.empty(); }

std::span<const double> Tensor::grad() const {
    auto& n = checked(*this, "grad");
    if (n->grad.empty()) throw ContractError("grad: no gradient populated for '" + std::string(n->op) + "' tensor");
    return n->grad;
}

std::vector<double> Tensor::grad_copy() const {
    auto g = grad();
    return {g.begin(), g.end()};
}

void Tensor::clear_grad() { checked(*this, "clear_grad")->grad.clear(); }

Tensor Tensor::detach(bool requires_grad) const {
    auto& n = checked(*this, "detach");
    return from(n->shape, n->value, requires_grad);
}

const char* Tensor::op_name() const { return checked(*this, "op_name")->op; }

// ---------------------------------------------------------------------------
// backward

void backward(const Tensor& loss) {
    const auto& root = checked(loss, "backward");
    if (root->value.size() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + shape_to_string(root->shape));
    }
    if (!root->requires_grad) {
        throw ContractError("backward: loss does not depend on any tensor that requires grad");
    }

    // Iterative post-order DFS over tracked edges gives a topological order.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            const std::size_t i = next++;
            if (!node->tracked[i]) continue;
            TensorNode* p = node->parents[i].get();
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (TensorNode* n : order) {
        const bool leaf = !n->backward;
        if (leaf) {
            if (n->grad.size() != n->value.size()) n->grad.assign(n->value.size(), 0.0);
        } else {
            n->grad.assign(n->value.size(), 0.0);
        }
    }
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward) (*it)->backward(**it);
    }
}

// ---------------------------------------------------------------------------
// ops

Tensor matmul(const Tensor& ta, const Tensor& tb) {
    const auto& a = checked(ta, "matmul");
    const auto& b = checked(tb, "matmul");
    if (a->shape.size() != 2 || (b->shape.size() != 1 && b->shape.size() != 2)) dimension_error("matmul", a->shape, b->shape);
    const std::size_t m = a->shape[0], k = a->shape[1];
    const std::size_t n = b->shape.size() == 2 ? b->shape[1] : 1;
    if (b->shape[0] != k) dimension_error("matmul", a->shape, b->shape);

    std::vector<double> out(m * n);
    kernels::gemm_nn(m, n, k, a->value.data(), b->value.data(), out.data(), false);
    Shape shape = b->shape.size() == 2 ? Shape{m, n} : Shape{m};
    auto node = make_node("matmul", std::move(shape), std::move(out), {a, b});
    if (node->requires_grad) {
        node->backward = [m, n, k](TensorNode& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (self.tracked[0]) kernels::gemm_nt(m, k, n, self.grad.data(), pb.value.data(), pa.grad.data(), true);
            if (self.tracked[1]) kernels::gemm_tn(m, n, k, pa.value.data(), self.grad.data(), pb.grad.data(), true);
        };
    }
    return Tensor(std::move(node));
}

namespace {

enum class Binary { Add, Sub, Mul };

Tensor binary(const Tensor& ta, const Tensor& tb, Binary kind, const char* op) {
    const auto& a = checked(ta, op);
    const auto& b = checked(tb, op);
    const bool same = a->shape == b->shape;
    const bool broadcast = !same && is_row_broadcast(a->shape, b->shape);
    if (!same && !broadcast) dimension_error(op, a->shape, b->shape);

    const std::size_t total = a->value.size();
    const std::size_t width = broadcast ? b->value.size() : total;
    std::vector<double> out(total);
    for (std::size_t i = 0; i < total; ++i) {
        const double x = a->value[i];
        const double y = b->value[i % width];
        out[i] = kind == Binary::Add ? x + y : kind == Binary::Sub ? x - y : x * y;
    }
    auto node = make_node(op, a->shape, std::move(out), {a, b});
    if (node->requires_grad) {
        node->backward = [kind, total, width](TensorNode& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            for (std::size_t i = 0; i < total; ++i) {
                const double g = self.grad[i];
                if (self.tracked[0]) pa.grad[i] += kind == Binary::Mul ? g * pb.value[i % width] : g;
                if (self.tracked[1]) {
                    const double gb = kind == Binary::Add ? g : kind == Binary::Sub ? -g : g * pa.value[i];
                    pb.grad[i % width] += gb;
                }
            }
        };
    }
    return Tensor(std::move(node));
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& t, const char* op, Fwd fwd, Deriv deriv) {
    const auto& a = checked(t, op);
    std::vector<double> out(a->value.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a->value[i]);
    auto node = make_node(op, a->shape, std::move(out), {a});
    if (node->requires_grad) {
        node->backward = [deriv](TensorNode& self) {
            auto& pa = *self.parents[0];
            for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * deriv(pa.value[i], self.value[i]);
        };
    }
    return Tensor(std::move(node));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::Mul, "mul"); }

Tensor scale(const Tensor& a, double factor) {
    return unary(a, "scale", [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor relu(const Tensor& a) {
    return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& a) {
    return unary(a, "silu", [](double x) { return x * sigmoid(x); },
                 [](double x, double) {
                     const double s = sigmoid(x);
                     return s * (1.0 + x * (1.0 - s));
                 });
}

Tensor square(const Tensor& a) {
    return unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(checked(p, "concat"));
    const Shape& first = nodes[0]->shape;
    if (first.size() != 2 || axis > 1) dimension_error("concat", first);
    const std::size_t other = 1 - axis;
    std::size_t total = 0;
    for (const auto& n : nodes) {
        if (n->shape.size() != 2 || n->shape[other] != first[other]) dimension_error("concat", first, n->shape);
        total += n->shape[axis];
    }
    Shape shape = first;
    shape[axis] = total;
    std::vector<double> out;
    out.reserve(shape_size(shape));
    if (axis == 0) {
        for (const auto& n : nodes) out.insert(out.end(), n->value.begin(), n->value.end());
    } else {
        const std::size_t rows = first[0];
        for (std::size_t r = 0; r < rows; ++r) {
            for (const auto& n : nodes) {
                const std::size_t w = n->shape[1];
                out.insert(out.end(), n->value.begin() + static_cast<std::ptrdiff_t>(r * w),
                           n->value.begin() + static_cast<std::ptrdiff_t>((r + 1) * w));
            }
        }
    }
    auto node = make_node("concat", std::move(shape), std::move(out), std::move(nodes));
    if (node->requires_grad) {
        node->backward = [axis](TensorNode& self) {
            if (axis == 0) {
                std::size_t offset = 0;
                for (std::size_t i = 0; i < self.parents.size(); ++i) {
                    auto& p = *self.parents[i];
                    if (self.tracked[i]) {
                        for (std::size_t j = 0; j < p.value.size(); ++j) p.grad[j] += self.grad[offset + j];
                    }
                    offset += p.value.size();
                }
                return;
            }
            const std::size_t rows = self.shape[0], width = self.shape[1];
            std::size_t col = 0;
            for (std::size_t i = 0; i < self.parents.size(); ++i) {
                auto& p = *self.parents[i];
                const std::size_t w = p.shape[1];
                if (self.tracked[i]) {
                    for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t j = 0; j < w; ++j) p.grad[r * w + j] += self.grad[r * width + col + j];
                    }
                }
                col += w;
            }
        };
    }
    return Tensor(std::move(node));
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
    return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor softmax(const Tensor& t, std::size_t axis) {
    const auto& a = checked(t, "softmax");
    const Shape& s = a->shape;
    if (s.empty() || s.size() > 2 || axis >= s.size()) dimension_error("softmax", s);
    // Iterate over "lines" along the reduced axis.
    const std::size_t rows = rows_of(s), cols = cols_of(s);
    const bool along_cols = s.size() == 1 || axis == 1;
    const std::size_t lines = along_cols ? rows : cols;
    const std::size_t len = along_cols ? cols : rows;
    auto index = [=](std::size_t line, std::size_t j) { return along_cols ? line * cols + j : j * cols + line; };

    std::vector<double> out(a->value.size());
    for (std::size_t l = 0; l < lines; ++l) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, a->value[index(l, j)]);
        double z = 0.0;
        for (std::size_t j = 0; j < len; ++j) z += (out[index(l, j)] = std::exp(a->value[index(l, j)] - mx));
        for (std::size_t j = 0; j < len; ++j) out[index(l, j)] /= z;
    }
    auto node = make_node("softmax", s, std::move(out), {a});
    if (node->requires_grad) {
        node->backward = [lines, len, index](TensorNode& self) {
            auto& pa = *self.parents[0];
            for (std::size_t l = 0; l < lines; ++l) {
                double dotp = 0.0;
                for (std::size_t j = 0; j < len; ++j) dotp += self.grad[index(l, j)] * self.value[index(l, j)];
                for (std::size_t j = 0; j < len; ++j) {
                    const auto i = index(l, j);
                    pa.grad[i] += self.value[i] * (self.grad[i] - dotp);
                }
            }
        };
    }
    return Tensor(std::move(node));
}

Tensor cross_entropy(const Tensor& t, std::span<const int> targets, Reduction reduction) {
    const auto& a = checked(t, "cross_entropy");
    const Shape& s = a->shape;
    if (s.empty() || s.size() > 2) dimension_error("cross_entropy", s);
    const std::size_t rows = rows_of(s), classes = cols_of(s);
    if (targets.size() != rows) {
        throw DimensionError("cross_entropy: logits " + shape_to_string(s) + " need " + std::to_string(rows) +
                             " targets, got " + std::to_string(targets.size()));
    }
    for (int y : targets) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw IndexError("cross_entropy: target class " + std::to_string(y) + " outside [0, " +
                             std::to_string(classes) + ")");
        }
    }
    std::vector<double> probs(a->value.size());
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a->value.data() + r * classes;
        double mx = *std::max_element(x, x + classes);
        double z = 0.0;
        for (std::size_t c = 0; c < classes; ++c) z += (probs[r * classes + c] = std::exp(x[c] - mx));
        for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] /= z;
        total += mx + std::log(z) - x[targets[r]];
    }
    const double norm = reduction == Reduction::Mean ? 1.0 / static_cast<double>(rows) : 1.0;
    auto node = make_node("cross_entropy", {}, {total * norm}, {a});
    if (node->requires_grad) {
        node->backward = [probs = std::move(probs), tgt = std::vector<int>(targets.begin(), targets.end()), classes,
                          norm](TensorNode& self) {
            auto& pa = *self.parents[0];
            const double g = self.grad[0] * norm;
            for (std::size_t r = 0; r < tgt.size(); ++r) {
                for (std::size_t c = 0; c < classes; ++c) {
                    const double onehot = static_cast<int>(c) == tgt[r] ? 1.0 : 0.0;
                    pa.grad[r * classes + c] += g * (probs[r * classes + c] - onehot);
                }
            }
        };
    }
    return Tensor(std::move(node));
}

Tensor mse(const Tensor& a, const Tensor& b) {
    if (checked(a, "mse")->shape != checked(b, "mse")->shape) dimension_error("mse", a.shape(), b.shape());
    return mean(square(sub(a, b)));
}

Tensor gather(const Tensor& t, std::span<const int> indices) {
    const auto& table = checked(t, "gather");
    if (table->shape.size() != 2) dimension_error("gather", table->shape);
    const std::size_t vocab = table->shape[0], width = table->shape[1];
    if (indices.empty()) throw ContractError("gather: empty index list");
    std::vector<double> out(indices.size() * width);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int idx = indices[i];
        if (idx < 0 || static_cast<std::size_t>(idx) >= vocab) {
            throw IndexError("gather: index " + std::to_string(idx) + " outside table of " + std::to_string(vocab) +
                             " rows");
        }
        std::copy_n(table->value.begin() + static_cast<std::ptrdiff_t>(idx * width), width,
                    out.begin() + static_cast<std::ptrdiff_t>(i * width));
    }
    auto node = make_node("gather", {indices.size(), width}, std::move(out), {table});
    if (node->requires_grad) {
        node->backward = [idx = std::vector<int>(indices.begin(), indices.end()), width](TensorNode& self) {
            auto& p = *self.parents[0];
            for (std::size_t i = 0; i < idx.size(); ++i) {
                kernels::axpy(width, 1.0, self.grad.data() + i * width, p.grad.data() + static_cast<std::size_t>(idx[i]) * width);
            }
        };
    }
    return Tensor(std::move(node));
}

Tensor sum(const Tensor& t) {
    const auto& a = checked(t, "sum");
    double s = 0.0;
    for (double v : a->value) s += v;
    auto node = make_node("sum", {}, {s}, {a});
    if (node->requires_grad) {
        node->backward = [](TensorNode& self) {
            auto& pa = *self.parents[0];
            for (double& g : pa.grad) g += self.grad[0];
        };
    }
    return Tensor(std::move(node));
}

Tensor mean(const Tensor& t) {
    const auto n = static_cast<double>(checked(t, "mean")->value.size());
    return scale(sum(t), 1.0 / n);
}

}  // namespace guidelab

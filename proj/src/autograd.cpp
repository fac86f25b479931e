#include "phytune/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "phytune/errors.hpp"

namespace phytune::ag {
namespace {

Var make_result(Tensor value, std::initializer_list<Var> parents, std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->is_leaf = false;
    for (const auto& p : parents) {
        if (p.requires_grad()) node->requires_grad = true;
    }
    if (node->requires_grad) {
        for (const auto& p : parents) node->parents.push_back(p.node());
        node->backward_fn = std::move(fn);
    }
    return Var(std::move(node));
}

Var make_result_n(Tensor value, std::span<const Var> parents, std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->is_leaf = false;
    for (const auto& p : parents) {
        if (p.requires_grad()) node->requires_grad = true;
    }
    if (node->requires_grad) {
        for (const auto& p : parents) node->parents.push_back(p.node());
        node->backward_fn = std::move(fn);
    }
    return Var(std::move(node));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

void require_rank2(const Var& a, const char* op) {
    if (a.value().rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2 tensor");
}

// c[R,C] += a[R,K] * b[K,C]
void gemm_nn(const double* a, const double* b, double* c, std::size_t R, std::size_t K, std::size_t C) {
    for (std::size_t i = 0; i < R; ++i) {
        double* crow = c + i * C;
        for (std::size_t k = 0; k < K; ++k) {
            const double aik = a[i * K + k];
            if (aik == 0.0) continue;
            const double* brow = b + k * C;
            for (std::size_t j = 0; j < C; ++j) crow[j] += aik * brow[j];
        }
    }
}

// c[R,C] += a[R,K] * b[C,K]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t R, std::size_t K, std::size_t C) {
    for (std::size_t i = 0; i < R; ++i) {
        const double* arow = a + i * K;
        for (std::size_t j = 0; j < C; ++j) {
            const double* brow = b + j * K;
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k) s += arow[k] * brow[k];
            c[i * C + j] += s;
        }
    }
}

// c[K,C] += a[R,K]^T * b[R,C]
void gemm_tn(const double* a, const double* b, double* c, std::size_t R, std::size_t K, std::size_t C) {
    for (std::size_t r = 0; r < R; ++r) {
        const double* arow = a + r * K;
        const double* brow = b + r * C;
        for (std::size_t k = 0; k < K; ++k) {
            const double ark = arow[k];
            if (ark == 0.0) continue;
            double* crow = c + k * C;
            for (std::size_t j = 0; j < C; ++j) crow[j] += ark * brow[j];
        }
    }
}

template <typename F, typename D>
Var unary(const Var& a, F f, D dfdx) {
    Tensor out(a.shape());
    const auto& x = a.value();
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return make_result(std::move(out), {a}, [dfdx](Node& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx(p.value[i], self.value[i]);
    });
}

}  // namespace

Tensor& Node::ensure_grad() {
    if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape());
    return grad;
}

Var Var::constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Var(std::move(node));
}

Var Var::parameter(Tensor value, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Var(std::move(node));
}

Tensor& Var::mutable_value() {
    if (!node_->is_leaf) throw PreconditionError("mutable_value on a non-leaf variable");
    return node_->value;
}

double Var::item() const {
    if (size() != 1) throw ShapeError("item() on a tensor with " + std::to_string(size()) + " elements");
    return node_->value[0];
}

void Var::set_requires_grad(bool on) {
    if (!node_->is_leaf) throw PreconditionError("set_requires_grad on a non-leaf variable");
    node_->requires_grad = on;
}

Tensor Var::grad() const {
    if (has_grad()) return node_->grad;
    return Tensor(node_->value.shape());
}

void Var::zero_grad() {
    if (node_) node_->grad = Tensor();
}

void backward(const Var& root) {
    if (root.size() != 1) throw ShapeError("backward() needs a scalar root");
    if (!root.requires_grad()) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* n : order) {
        if (!n->is_leaf) n->grad = Tensor(n->value.shape());
    }
    root.node()->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            auto& g = p->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        const double sign[2] = {1.0, -1.0};
        for (std::size_t k = 0; k < 2; ++k) {
            auto& p = *self.parents[k];
            if (!p.requires_grad) continue;
            auto& g = p.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[k] * self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "mul");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& g = pa.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
        }
    });
}

Var scale(const Var& a, double c) {
    return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(const Var& a, double c) {
    return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var add_row(const Var& a, const Var& row) {
    require_rank2(a, "add_row");
    const std::size_t R = a.value().rows();
    const std::size_t C = a.value().cols();
    if (row.size() != C) throw ShapeError("add_row: row length mismatch");
    Tensor out(a.shape());
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t c = 0; c < C; ++c) out[r * C + c] = a.value()[r * C + c] + row.value()[c];
    }
    return make_result(std::move(out), {a, row}, [R, C](Node& self) {
        auto& pa = *self.parents[0];
        auto& pr = *self.parents[1];
        if (pa.requires_grad) {
            auto& g = pa.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pr.requires_grad) {
            auto& g = pr.ensure_grad();
            for (std::size_t r = 0; r < R; ++r) {
                for (std::size_t c = 0; c < C; ++c) g[c] += self.grad[r * C + c];
            }
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t R = a.value().rows();
    const std::size_t K = a.value().cols();
    const std::size_t C = b.value().cols();
    if (b.value().rows() != K) {
        throw ShapeError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
    }
    Tensor out({R, C});
    gemm_nn(a.value().data().data(), b.value().data().data(), out.data().data(), R, K, C);
    return make_result(std::move(out), {a, b}, [R, K, C](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            gemm_nt(self.grad.data().data(), pb.value.data().data(), pa.ensure_grad().data().data(), R, C, K);
        }
        if (pb.requires_grad) {
            gemm_tn(pa.value.data().data(), self.grad.data().data(), pb.ensure_grad().data().data(), R, K, C);
        }
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    require_rank2(a, "matmul_nt");
    require_rank2(b, "matmul_nt");
    const std::size_t R = a.value().rows();
    const std::size_t K = a.value().cols();
    const std::size_t C = b.value().rows();
    if (b.value().cols() != K) throw ShapeError("matmul_nt: inner dimensions differ");
    Tensor out({R, C});
    gemm_nt(a.value().data().data(), b.value().data().data(), out.data().data(), R, K, C);
    return make_result(std::move(out), {a, b}, [R, K, C](Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            gemm_nn(self.grad.data().data(), pb.value.data().data(), pa.ensure_grad().data().data(), R, C, K);
        }
        if (pb.requires_grad) {
            gemm_tn(self.grad.data().data(), pa.value.data().data(), pb.ensure_grad().data().data(), R, C, K);
        }
    });
}

Var softmax_rows(const Var& a) {
    require_rank2(a, "softmax_rows");
    const std::size_t R = a.value().rows();
    const std::size_t C = a.value().cols();
    Tensor out(a.shape());
    for (std::size_t r = 0; r < R; ++r) {
        const double* x = a.value().data().data() + r * C;
        double* y = out.data().data() + r * C;
        const double m = *std::max_element(x, x + C);
        double z = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            y[c] = std::exp(x[c] - m);
            z += y[c];
        }
        for (std::size_t c = 0; c < C; ++c) y[c] /= z;
    }
    return make_result(std::move(out), {a}, [R, C](Node& self) {
        auto& p = *self.parents[0];
        auto& g = p.ensure_grad();
        for (std::size_t r = 0; r < R; ++r) {
            const double* y = self.value.data().data() + r * C;
            const double* gy = self.grad.data().data() + r * C;
            double dot = 0.0;
            for (std::size_t c = 0; c < C; ++c) dot += gy[c] * y[c];
            for (std::size_t c = 0; c < C; ++c) g[r * C + c] += y[c] * (gy[c] - dot);
        }
    });
}

Var layer_norm_rows(const Var& a, double eps) {
    require_rank2(a, "layer_norm_rows");
    const std::size_t R = a.value().rows();
    const std::size_t C = a.value().cols();
    Tensor out(a.shape());
    auto inv_std = std::make_shared<std::vector<double>>(R);
    for (std::size_t r = 0; r < R; ++r) {
        const double* x = a.value().data().data() + r * C;
        double mu = 0.0;
        for (std::size_t c = 0; c < C; ++c) mu += x[c];
        mu /= static_cast<double>(C);
        double var = 0.0;
        for (std::size_t c = 0; c < C; ++c) var += (x[c] - mu) * (x[c] - mu);
        var /= static_cast<double>(C);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t c = 0; c < C; ++c) out[r * C + c] = (x[c] - mu) * is;
    }
    return make_result(std::move(out), {a}, [R, C, inv_std](Node& self) {
        auto& p = *self.parents[0];
        auto& g = p.ensure_grad();
        const double n = static_cast<double>(C);
        for (std::size_t r = 0; r < R; ++r) {
            const double* y = self.value.data().data() + r * C;
            const double* gy = self.grad.data().data() + r * C;
            double mg = 0.0;
            double mgy = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                mg += gy[c];
                mgy += gy[c] * y[c];
            }
            mg /= n;
            mgy /= n;
            for (std::size_t c = 0; c < C; ++c) g[r * C + c] += (*inv_std)[r] * (gy[c] - mg - y[c] * mgy);
        }
    });
}

Var silu(const Var& a) {
    return unary(
        a, [](double x) { return x / (1.0 + std::exp(-x)); },
        [](double x, double) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 + x * (1.0 - s));
        });
}

Var sigmoid(const Var& a) {
    return unary(
        a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, [](double, double y) { return y * (1.0 - y); });
}

Var exp(const Var& a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var square(const Var& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    return make_result(Tensor::scalar(s), {a}, [](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (auto& v : g.values()) v += self.grad[0];
    });
}

Var mean(const Var& a) {
    const double n = static_cast<double>(a.size());
    return scale(sum(a), 1.0 / n);
}

Var reshape(const Var& a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return make_result(std::move(out), {a}, [](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Var gather(const Var& a, std::shared_ptr<const std::vector<std::size_t>> indices, Shape shape) {
    if (shape_size(shape) != indices->size()) throw ShapeError("gather: shape does not match index count");
    Tensor out(std::move(shape));
    const auto& x = a.value();
    for (std::size_t i = 0; i < indices->size(); ++i) {
        const std::size_t k = (*indices)[i];
        if (k >= x.size()) throw ShapeError("gather: index out of range");
        out[i] = x[k];
    }
    return make_result(std::move(out), {a}, [indices](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < indices->size(); ++i) g[(*indices)[i]] += self.grad[i];
    });
}

Var slice_cols(const Var& a, std::size_t start, std::size_t count) {
    require_rank2(a, "slice_cols");
    const std::size_t R = a.value().rows();
    const std::size_t C = a.value().cols();
    if (start + count > C) throw ShapeError("slice_cols: range out of bounds");
    Tensor out({R, count});
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t c = 0; c < count; ++c) out[r * count + c] = a.value()[r * C + start + c];
    }
    return make_result(std::move(out), {a}, [R, C, start, count](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t c = 0; c < count; ++c) g[r * C + start + c] += self.grad[r * count + c];
        }
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t R = parts[0].value().rows();
    std::vector<std::size_t> widths;
    std::size_t C = 0;
    for (const auto& p : parts) {
        if (p.value().rank() != 2 || p.value().rows() != R) throw ShapeError("concat_cols: row count mismatch");
        widths.push_back(p.value().cols());
        C += widths.back();
    }
    Tensor out({R, C});
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const std::size_t w = widths[k];
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t c = 0; c < w; ++c) out[r * C + offset + c] = parts[k].value()[r * w + c];
        }
        offset += w;
    }
    return make_result_n(std::move(out), parts, [R, C, widths](Node& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            const std::size_t w = widths[k];
            auto& p = *self.parents[k];
            if (p.requires_grad) {
                auto& g = p.ensure_grad();
                for (std::size_t r = 0; r < R; ++r) {
                    for (std::size_t c = 0; c < w; ++c) g[r * w + c] += self.grad[r * C + off + c];
                }
            }
            off += w;
        }
    });
}

Var concat(std::span<const Var> parts) {
    std::size_t n = 0;
    for (const auto& p : parts) n += p.size();
    Tensor out({n});
    std::size_t off = 0;
    std::vector<std::size_t> sizes;
    for (const auto& p : parts) {
        std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + off);
        off += p.size();
        sizes.push_back(p.size());
    }
    return make_result_n(std::move(out), parts, [sizes](Node& self) {
        std::size_t o = 0;
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            auto& p = *self.parents[k];
            if (p.requires_grad) {
                auto& g = p.ensure_grad();
                for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += self.grad[o + i];
            }
            o += sizes[k];
        }
    });
}

Var scalar_function(const Var& input, double value, std::vector<double> gradient) {
    if (gradient.size() != input.size()) throw ShapeError("scalar_function: gradient size mismatch");
    return make_result(Tensor::scalar(value), {input}, [gradient = std::move(gradient)](Node& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * gradient[i];
    });
}

}  // namespace phytune::ag

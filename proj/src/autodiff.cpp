#include "plast/autodiff.h"

#include "plast/error.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

namespace plast::ad {

Tensor & Node::ensure_grad() {
    if (grad.shape() != value.shape()) grad = Tensor(value.shape());
    return grad;
}

void Var::set_trainable(bool t) {
    if (!node_->leaf) throw InvalidArgument("trainable flag applies to leaf parameters only");
    node_->trainable = t;
    node_->requires_grad = t;
}

void Var::zero_grad() { node_->ensure_grad().fill(0.0); }

double Var::item() const {
    if (node_->value.numel() != 1) {
        throw ShapeError("item() on non-scalar " + shape_string(node_->value.shape()));
    }
    return node_->value[0];
}

Var param(Tensor value, bool trainable) {
    auto n = std::make_shared<Node>();
    n->grad = Tensor(value.shape());
    n->value = std::move(value);
    n->trainable = trainable;
    n->requires_grad = trainable;
    return Var(std::move(n));
}

Var constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

Activation activation_from_name(const std::string & name) {
    if (name == "silu") return Activation::silu;
    if (name == "gelu") return Activation::gelu;
    if (name == "relu") return Activation::relu;
    throw ConfigError("unknown activation '" + name + "'");
}

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::silu: return "silu";
        case Activation::gelu: return "gelu";
        case Activation::relu: return "relu";
    }
    return "silu";
}

double activation_value(Activation a, double x) {
    switch (a) {
        case Activation::silu: return x / (1.0 + std::exp(-x));
        case Activation::gelu: return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
        case Activation::relu: return x > 0.0 ? x : 0.0;
    }
    return 0.0;
}

namespace {

void require_finite(const Tensor & t, const char * op) {
    if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite value produced");
}

void require_rank2(const Tensor & t, const char * op) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2 operand, got " + shape_string(t.shape()));
}

Var make_result(Tensor value, std::vector<std::shared_ptr<Node>> parents, std::function<void(Node &)> fn,
                const char * op) {
    require_finite(value, op);
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->leaf = false;
    n->requires_grad = std::any_of(parents.begin(), parents.end(), [](const auto & p) { return p->requires_grad; });
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(fn);
    }
    return Var(std::move(n));
}

// out[n x m] += a[n x k] * b[k x m]
void gemm_nn(const Tensor & a, const Tensor & b, Tensor & out) {
    const size_t n = a.rows(), k = a.cols(), m = b.cols();
    const double * pa = a.data();
    const double * pb = b.data();
    double * po = out.data();
    for (size_t i = 0; i < n; ++i) {
        double * orow = po + i * m;
        for (size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            if (av == 0.0) continue;
            const double * brow = pb + p * m;
            for (size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
}

// out[n x k] += g[n x m] * b[k x m]^T
void gemm_nt(const Tensor & g, const Tensor & b, Tensor & out) {
    const size_t n = g.rows(), m = g.cols(), k = b.rows();
    const double * pg = g.data();
    const double * pb = b.data();
    double * po = out.data();
    for (size_t i = 0; i < n; ++i) {
        const double * grow = pg + i * m;
        for (size_t p = 0; p < k; ++p) {
            const double * brow = pb + p * m;
            double acc = 0.0;
            for (size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
            po[i * k + p] += acc;
        }
    }
}

// out[k x m] += a[n x k]^T * g[n x m]
void gemm_tn(const Tensor & a, const Tensor & g, Tensor & out) {
    const size_t n = a.rows(), k = a.cols(), m = g.cols();
    const double * pa = a.data();
    const double * pg = g.data();
    double * po = out.data();
    for (size_t i = 0; i < n; ++i) {
        const double * grow = pg + i * m;
        for (size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            if (av == 0.0) continue;
            double * orow = po + p * m;
            for (size_t j = 0; j < m; ++j) orow[j] += av * grow[j];
        }
    }
}

template <class F, class DF>
Var unary_elementwise(const Var & x, F f, DF df, const char * op) {
    const Tensor & xv = x.value();
    require_finite(xv, op);
    Tensor out(xv.shape());
    for (size_t i = 0; i < xv.numel(); ++i) out[i] = f(xv[i]);
    auto xn = x.ptr();
    return make_result(std::move(out), {xn}, [xn, df](Node & self) {
        if (!xn->requires_grad) return;
        Tensor & g = xn->ensure_grad();
        const Tensor & xv = xn->value;
        for (size_t i = 0; i < xv.numel(); ++i) g[i] += self.grad[i] * df(xv[i]);
    }, op);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

Var matmul(const Var & a, const Var & b) {
    require_rank2(a.value(), "matmul");
    require_rank2(b.value(), "matmul");
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    Tensor out = Tensor::zeros(a.rows(), b.cols());
    gemm_nn(a.value(), b.value(), out);
    auto an = a.ptr(), bn = b.ptr();
    return make_result(std::move(out), {an, bn}, [an, bn](Node & self) {
        if (an->requires_grad) gemm_nt(self.grad, bn->value, an->ensure_grad());
        if (bn->requires_grad) gemm_tn(an->value, self.grad, bn->ensure_grad());
    }, "matmul");
}

Var transpose(const Var & a) {
    require_rank2(a.value(), "transpose");
    const size_t n = a.rows(), m = a.cols();
    Tensor out = Tensor::zeros(m, n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < m; ++j) out(j, i) = a.value()(i, j);
    auto an = a.ptr();
    return make_result(std::move(out), {an}, [an, n, m](Node & self) {
        Tensor & g = an->ensure_grad();
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < m; ++j) g(i, j) += self.grad(j, i);
    }, "transpose");
}

Var add(const Var & a, const Var & b) {
    if (!a.value().same_shape(b.value())) {
        throw ShapeError("add: shapes differ " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    Tensor out = a.value();
    for (size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
    auto an = a.ptr(), bn = b.ptr();
    return make_result(std::move(out), {an, bn}, [an, bn](Node & self) {
        for (auto * p : {an.get(), bn.get()}) {
            if (!p->requires_grad) continue;
            Tensor & g = p->ensure_grad();
            for (size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
        }
    }, "add");
}

Var add_bias(const Var & a, const Var & bias) {
    require_rank2(a.value(), "add_bias");
    if (bias.value().rank() != 2 || bias.rows() != 1 || bias.cols() != a.cols()) {
        throw ShapeError("add_bias: bias " + shape_string(bias.shape()) + " does not fit " + shape_string(a.shape()));
    }
    Tensor out = a.value();
    const size_t n = out.rows(), m = out.cols();
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < m; ++j) out(i, j) += bias.value()[j];
    auto an = a.ptr(), bn = bias.ptr();
    return make_result(std::move(out), {an, bn}, [an, bn, n, m](Node & self) {
        if (an->requires_grad) {
            Tensor & g = an->ensure_grad();
            for (size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            Tensor & g = bn->ensure_grad();
            for (size_t i = 0; i < n; ++i)
                for (size_t j = 0; j < m; ++j) g[j] += self.grad(i, j);
        }
    }, "add_bias");
}

Var mul(const Var & a, const Var & b) {
    if (!a.value().same_shape(b.value())) {
        throw ShapeError("mul: shapes differ " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    Tensor out = a.value();
    for (size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
    auto an = a.ptr(), bn = b.ptr();
    return make_result(std::move(out), {an, bn}, [an, bn](Node & self) {
        if (an->requires_grad) {
            Tensor & g = an->ensure_grad();
            for (size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            Tensor & g = bn->ensure_grad();
            for (size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * an->value[i];
        }
    }, "mul");
}

Var scale(const Var & a, double s) {
    Tensor out = a.value();
    for (double & v : out.values()) v *= s;
    auto an = a.ptr();
    return make_result(std::move(out), {an}, [an, s](Node & self) {
        Tensor & g = an->ensure_grad();
        for (size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * s;
    }, "scale");
}

Var silu(const Var & x) {
    return unary_elementwise(
        x, [](double v) { return v * sigmoid(v); },
        [](double v) {
            const double s = sigmoid(v);
            return s * (1.0 + v * (1.0 - s));
        },
        "silu");
}

Var gelu(const Var & x) {
    return unary_elementwise(
        x, [](double v) { return activation_value(Activation::gelu, v); },
        [](double v) {
            const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
            const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
            return cdf + v * pdf;
        },
        "gelu");
}

Var relu(const Var & x) {
    return unary_elementwise(
        x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; }, "relu");
}

Var activate(const Var & x, Activation a) {
    switch (a) {
        case Activation::silu: return silu(x);
        case Activation::gelu: return gelu(x);
        case Activation::relu: return relu(x);
    }
    return silu(x);
}

namespace {

// Softmax over the first `valid(i)` columns of each row; the rest are 0.
template <class Valid>
Var masked_softmax(const Var & x, Valid valid, const char * op) {
    require_rank2(x.value(), op);
    const size_t n = x.rows(), m = x.cols();
    Tensor out = Tensor::zeros(n, m);
    for (size_t i = 0; i < n; ++i) {
        const size_t lim = valid(i);
        auto in = x.value().row(i);
        auto o = out.row(i);
        double mx = -INFINITY;
        for (size_t j = 0; j < lim; ++j) mx = std::max(mx, in[j]);
        double z = 0.0;
        for (size_t j = 0; j < lim; ++j) {
            o[j] = std::exp(in[j] - mx);
            z += o[j];
        }
        for (size_t j = 0; j < lim; ++j) o[j] /= z;
    }
    auto xn = x.ptr();
    return make_result(std::move(out), {xn}, [xn, n, m](Node & self) {
        Tensor & g = xn->ensure_grad();
        for (size_t i = 0; i < n; ++i) {
            auto p = self.value.row(i);
            auto go = self.grad.row(i);
            double dot = 0.0;
            for (size_t j = 0; j < m; ++j) dot += p[j] * go[j];
            for (size_t j = 0; j < m; ++j) g(i, j) += p[j] * (go[j] - dot);
        }
    }, op);
}

} // namespace

Var softmax_rows(const Var & x) {
    const size_t m = x.cols();
    return masked_softmax(x, [m](size_t) { return m; }, "softmax_rows");
}

Var causal_softmax(const Var & x) {
    const size_t n = x.rows(), m = x.cols();
    if (m < n) throw ShapeError("causal_softmax: more query rows than key columns");
    const size_t offset = m - n;
    return masked_softmax(x, [offset](size_t i) { return i + offset + 1; }, "causal_softmax");
}

Var layer_norm(const Var & x, const Var & gain, const Var & bias, double eps) {
    require_rank2(x.value(), "layer_norm");
    const size_t n = x.rows(), m = x.cols();
    for (const Var * p : {&gain, &bias}) {
        if (p->value().rank() != 2 || p->rows() != 1 || p->cols() != m) {
            throw ShapeError("layer_norm: gain/bias must be [1 x " + std::to_string(m) + "]");
        }
    }
    Tensor out = Tensor::zeros(n, m);
    Tensor xhat = Tensor::zeros(n, m);
    std::vector<double> rstd(n);
    for (size_t i = 0; i < n; ++i) {
        auto in = x.value().row(i);
        double mean = 0.0;
        for (double v : in) mean += v;
        mean /= double(m);
        double var = 0.0;
        for (double v : in) var += (v - mean) * (v - mean);
        var /= double(m);
        rstd[i] = 1.0 / std::sqrt(var + eps);
        for (size_t j = 0; j < m; ++j) {
            xhat(i, j) = (in[j] - mean) * rstd[i];
            out(i, j) = xhat(i, j) * gain.value()[j] + bias.value()[j];
        }
    }
    auto xn = x.ptr(), gn = gain.ptr(), bn = bias.ptr();
    return make_result(std::move(out), {xn, gn, bn},
        [xn, gn, bn, xhat = std::move(xhat), rstd = std::move(rstd), n, m](Node & self) {
            if (gn->requires_grad) {
                Tensor & g = gn->ensure_grad();
                for (size_t i = 0; i < n; ++i)
                    for (size_t j = 0; j < m; ++j) g[j] += self.grad(i, j) * xhat(i, j);
            }
            if (bn->requires_grad) {
                Tensor & g = bn->ensure_grad();
                for (size_t i = 0; i < n; ++i)
                    for (size_t j = 0; j < m; ++j) g[j] += self.grad(i, j);
            }
            if (xn->requires_grad) {
                Tensor & g = xn->ensure_grad();
                std::vector<double> dxhat(m);
                for (size_t i = 0; i < n; ++i) {
                    double mean_d = 0.0, mean_dx = 0.0;
                    for (size_t j = 0; j < m; ++j) {
                        dxhat[j] = self.grad(i, j) * gn->value[j];
                        mean_d += dxhat[j];
                        mean_dx += dxhat[j] * xhat(i, j);
                    }
                    mean_d /= double(m);
                    mean_dx /= double(m);
                    for (size_t j = 0; j < m; ++j) {
                        g(i, j) += rstd[i] * (dxhat[j] - mean_d - xhat(i, j) * mean_dx);
                    }
                }
            }
        },
        "layer_norm");
}

Var gather_rows(const Var & table, std::span<const size_t> ids) {
    require_rank2(table.value(), "gather_rows");
    const size_t m = table.cols();
    Tensor out = Tensor::zeros(ids.size(), m);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= table.rows()) {
            throw InvalidArgument("gather_rows: index " + std::to_string(ids[i]) + " out of range " +
                                  std::to_string(table.rows()));
        }
        std::copy_n(table.value().row(ids[i]).data(), m, out.row(i).data());
    }
    auto tn = table.ptr();
    std::vector<size_t> idx(ids.begin(), ids.end());
    return make_result(std::move(out), {tn}, [tn, idx = std::move(idx), m](Node & self) {
        Tensor & g = tn->ensure_grad();
        for (size_t i = 0; i < idx.size(); ++i)
            for (size_t j = 0; j < m; ++j) g(idx[i], j) += self.grad(i, j);
    }, "gather_rows");
}

Var concat_rows(const Var & top, const Var & bottom) {
    require_rank2(top.value(), "concat_rows");
    require_rank2(bottom.value(), "concat_rows");
    if (top.cols() != bottom.cols()) throw ShapeError("concat_rows: column counts differ");
    const size_t nt = top.rows(), nb = bottom.rows(), m = top.cols();
    Tensor out = Tensor::zeros(nt + nb, m);
    std::copy_n(top.value().data(), nt * m, out.data());
    std::copy_n(bottom.value().data(), nb * m, out.data() + nt * m);
    auto tn = top.ptr(), bn = bottom.ptr();
    return make_result(std::move(out), {tn, bn}, [tn, bn, nt, nb, m](Node & self) {
        if (tn->requires_grad) {
            Tensor & g = tn->ensure_grad();
            for (size_t i = 0; i < nt * m; ++i) g[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            Tensor & g = bn->ensure_grad();
            for (size_t i = 0; i < nb * m; ++i) g[i] += self.grad[nt * m + i];
        }
    }, "concat_rows");
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const size_t n = parts[0].rows();
    size_t total = 0;
    std::vector<size_t> offsets;
    std::vector<std::shared_ptr<Node>> nodes;
    for (const Var & p : parts) {
        require_rank2(p.value(), "concat_cols");
        if (p.rows() != n) throw ShapeError("concat_cols: row counts differ");
        offsets.push_back(total);
        total += p.cols();
        nodes.push_back(p.ptr());
    }
    Tensor out = Tensor::zeros(n, total);
    for (size_t k = 0; k < parts.size(); ++k) {
        const size_t w = parts[k].cols();
        for (size_t i = 0; i < n; ++i)
            std::copy_n(parts[k].value().row(i).data(), w, out.row(i).data() + offsets[k]);
    }
    auto captured = nodes;
    return make_result(std::move(out), std::move(nodes),
        [captured = std::move(captured), offsets = std::move(offsets), n](Node & self) {
            for (size_t k = 0; k < captured.size(); ++k) {
                Node & p = *captured[k];
                if (!p.requires_grad) continue;
                Tensor & g = p.ensure_grad();
                const size_t w = p.value.cols();
                for (size_t i = 0; i < n; ++i)
                    for (size_t j = 0; j < w; ++j) g(i, j) += self.grad(i, offsets[k] + j);
            }
        },
        "concat_cols");
}

Var slice_cols(const Var & x, size_t start, size_t width) {
    require_rank2(x.value(), "slice_cols");
    if (start + width > x.cols()) throw ShapeError("slice_cols: range exceeds columns");
    const size_t n = x.rows();
    Tensor out = Tensor::zeros(n, width);
    for (size_t i = 0; i < n; ++i) std::copy_n(x.value().row(i).data() + start, width, out.row(i).data());
    auto xn = x.ptr();
    return make_result(std::move(out), {xn}, [xn, start, width, n](Node & self) {
        Tensor & g = xn->ensure_grad();
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < width; ++j) g(i, start + j) += self.grad(i, j);
    }, "slice_cols");
}

Var sum(const Var & x) {
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    auto xn = x.ptr();
    return make_result(Tensor::scalar(s), {xn}, [xn](Node & self) {
        Tensor & g = xn->ensure_grad();
        for (size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[0];
    }, "sum");
}

Var cross_entropy(const Var & logits, std::span<const size_t> targets, std::span<const double> weights) {
    require_rank2(logits.value(), "cross_entropy");
    const size_t n = logits.rows(), m = logits.cols();
    if (targets.size() != n || weights.size() != n) {
        throw ShapeError("cross_entropy: targets/weights must have one entry per logits row");
    }
    Tensor probs = Tensor::zeros(n, m);
    double loss = 0.0;
    for (size_t i = 0; i < n; ++i) {
        if (weights[i] == 0.0) continue;
        if (targets[i] >= m) throw InvalidArgument("cross_entropy: target id out of range");
        auto in = logits.value().row(i);
        double mx = -INFINITY;
        for (double v : in) mx = std::max(mx, v);
        double z = 0.0;
        for (size_t j = 0; j < m; ++j) {
            probs(i, j) = std::exp(in[j] - mx);
            z += probs(i, j);
        }
        for (size_t j = 0; j < m; ++j) probs(i, j) /= z;
        loss += weights[i] * (mx + std::log(z) - in[targets[i]]);
    }
    auto ln = logits.ptr();
    std::vector<size_t> t(targets.begin(), targets.end());
    std::vector<double> w(weights.begin(), weights.end());
    return make_result(Tensor::scalar(loss), {ln},
        [ln, probs = std::move(probs), t = std::move(t), w = std::move(w), n, m](Node & self) {
            Tensor & g = ln->ensure_grad();
            const double up = self.grad[0];
            for (size_t i = 0; i < n; ++i) {
                if (w[i] == 0.0) continue;
                for (size_t j = 0; j < m; ++j) g(i, j) += up * w[i] * probs(i, j);
                g(i, t[i]) -= up * w[i];
            }
        },
        "cross_entropy");
}

void backward(const Var & loss) {
    if (!loss) throw InvalidArgument("backward: empty variable");
    if (loss.value().numel() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + shape_string(loss.shape()));
    }
    Node * root = loss.node();
    if (!root->requires_grad) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node *> order;
    std::unordered_set<Node *> visited;
    std::vector<std::pair<Node *, size_t>> stack{{root, 0}};
    visited.insert(root);
    while (!stack.empty()) {
        auto & [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node * p = node->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node * n : order) {
        if (!n->leaf) n->ensure_grad().fill(0.0);
    }
    root->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node * n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

} // namespace plast::ad

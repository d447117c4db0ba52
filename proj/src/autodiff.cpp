#include "gslb/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace gslb::ad {

namespace {

thread_local Precision g_precision = Precision::f32;
thread_local bool g_grad_enabled = true;
thread_local Tape g_tape;

std::size_t product(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string describe(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

[[noreturn]] void shape_fail(const std::string& op, const Tensor& a, const Tensor& b) {
    throw ShapeError(op + ": incompatible shapes " + a.shape_string() + " and " + b.shape_string());
}

[[noreturn]] void shape_fail(const std::string& op, const Tensor& a) {
    throw ShapeError(op + ": unsupported shape " + a.shape_string());
}

void require_matrix(const std::string& op, const Tensor& a) {
    if (a.rank() != 2) shape_fail(op, a);
}

// Builds the output node, rounds and checks values, and records the backward
// rule when any input participates in differentiation.
Tensor emit(const char* op, Shape shape, std::vector<double> values,
            std::vector<std::shared_ptr<Node>> inputs,
            std::function<void(Node& out)> backward_rule) {
    for (double& v : values) {
        v = quantize(v);
        if (!std::isfinite(v)) throw NonFiniteError(std::string(op) + ": non-finite output");
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    bool track = g_grad_enabled &&
                 std::any_of(inputs.begin(), inputs.end(),
                             [](const auto& n) { return n->requires_grad; });
    if (track) {
        node->requires_grad = true;
        Node* out = node.get();
        g_tape.record({op, std::move(inputs), node,
                       [out, rule = std::move(backward_rule)] { rule(*out); }});
    }
    return Tensor(node);
}

}  // namespace

void set_precision(Precision p) { g_precision = p; }
Precision precision() { return g_precision; }

double quantize(double v) {
    return g_precision == Precision::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

std::span<double> Node::ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value.assign(product(shape), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(n);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (values.size() != product(shape))
        throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                         describe(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    for (double& v : n->value) v = quantize(v);
    n->requires_grad = requires_grad;
    return Tensor(n);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({}, {v}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }
std::size_t Tensor::rows() const { return rank() < 2 ? 1 : shape()[rank() - 2]; }
std::size_t Tensor::cols() const { return rank() == 0 ? 1 : shape().back(); }
std::span<const double> Tensor::values() const& { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item: tensor of shape " + shape_string() + " is not scalar");
    return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const& {
    return node_->ensure_grad();
}

std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

std::string Tensor::shape_string() const { return describe(shape()); }

Tape& active_tape() { return g_tape; }
bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
        throw ShapeError("backward: loss must be scalar, got " +
                         (loss.defined() ? loss.shape_string() : std::string("undefined")));
    if (!loss.requires_grad()) {
        records_.clear();
        return;
    }
    loss.node()->ensure_grad()[0] += 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        if (it->output->grad.empty()) continue;
        it->backward();
    }
    records_.clear();
}

void backward(const Tensor& loss) { g_tape.backward(loss); }

AttentionMask AttentionMask::causal(std::size_t n) {
    AttentionMask m{n, n, std::vector<std::uint8_t>(n * n, 0)};
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c <= r; ++c) m.allowed[r * n + c] = 1;
    return m;
}

AttentionMask AttentionMask::keys(std::size_t queries, const std::vector<bool>& key_valid) {
    AttentionMask m{queries, key_valid.size(),
                    std::vector<std::uint8_t>(queries * key_valid.size(), 0)};
    for (std::size_t r = 0; r < queries; ++r)
        for (std::size_t c = 0; c < key_valid.size(); ++c)
            m.allowed[r * key_valid.size() + c] = key_valid[c] ? 1 : 0;
    return m;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix("matmul", a);
    require_matrix("matmul", b);
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) shape_fail("matmul", a, b);
    std::vector<double> out(m * n, 0.0);
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double s = av[i * k + p];
            if (s == 0.0) continue;
            const double* brow = bv.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += s * brow[j];
        }
    }
    auto an = a.node(), bn = b.node();
    return emit("matmul", {m, n}, std::move(out), {an, bn}, [an, bn, m, k, n](Node& o) {
        const double* g = o.grad.data();
        if (an->requires_grad) {
            auto ga = an->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double* brow = bn->value.data() + p * n;
                    const double* grow = g + i * n;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    ga[i * k + p] += acc;
                }
        }
        if (bn->requires_grad) {
            auto gb = bn->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double s = an->value[i * k + p];
                    if (s == 0.0) continue;
                    const double* grow = g + i * n;
                    double* gbrow = gb.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += s * grow[j];
                }
        }
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_matrix("matmul_nt", a);
    require_matrix("matmul_nt", b);
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    if (b.cols() != k) shape_fail("matmul_nt", a, b);
    std::vector<double> out(m * n);
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double* arow = av.data() + i * k;
            const double* brow = bv.data() + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            out[i * n + j] = acc;
        }
    auto an = a.node(), bn = b.node();
    return emit("matmul_nt", {m, n}, std::move(out), {an, bn}, [an, bn, m, k, n](Node& o) {
        const double* g = o.grad.data();
        if (an->requires_grad) {
            auto ga = an->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double s = g[i * n + j];
                    if (s == 0.0) continue;
                    const double* brow = bn->value.data() + j * k;
                    double* garow = ga.data() + i * k;
                    for (std::size_t p = 0; p < k; ++p) garow[p] += s * brow[p];
                }
        }
        if (bn->requires_grad) {
            auto gb = bn->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double s = g[i * n + j];
                    if (s == 0.0) continue;
                    const double* arow = an->value.data() + i * k;
                    double* gbrow = gb.data() + j * k;
                    for (std::size_t p = 0; p < k; ++p) gbrow[p] += s * arow[p];
                }
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_matrix("transpose", a);
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * n);
    auto av = a.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
    auto an = a.node();
    return emit("transpose", {n, m}, std::move(out), {an}, [an, m, n](Node& o) {
        auto ga = an->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += o.grad[j * m + i];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_fail("add", a, b);
    std::vector<double> out(a.size());
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    auto an = a.node(), bn = b.node();
    return emit("add", a.shape(), std::move(out), {an, bn}, [an, bn](Node& o) {
        for (Node* in : {an.get(), bn.get()}) {
            if (!in->requires_grad) continue;
            auto g = in->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
    });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
    if (a.rank() != 2 || bias.rank() != 1 || bias.size() != a.cols())
        shape_fail("add_bias", a, bias);
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(a.size());
    auto av = a.values();
    auto bv = bias.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] + bv[j];
    auto an = a.node(), bn = bias.node();
    return emit("add_bias", a.shape(), std::move(out), {an, bn}, [an, bn, m, n](Node& o) {
        if (an->requires_grad) {
            auto g = an->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
        if (bn->requires_grad) {
            auto g = bn->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[j] += o.grad[i * n + j];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_fail("mul", a, b);
    std::vector<double> out(a.size());
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    auto an = a.node(), bn = b.node();
    return emit("mul", a.shape(), std::move(out), {an, bn}, [an, bn](Node& o) {
        if (an->requires_grad) {
            auto g = an->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            auto g = bn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * an->value[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
    auto an = a.node();
    return emit("scale", a.shape(), std::move(out), {an}, [an, s](Node& o) {
        auto g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * s;
    });
}

Tensor softmax_rows(const Tensor& a, const AttentionMask& mask) {
    require_matrix("softmax", a);
    const std::size_t m = a.rows(), n = a.cols();
    if (!mask.empty() && (mask.rows != m || mask.cols != n))
        throw ShapeError("softmax: mask [" + std::to_string(mask.rows) + "," +
                         std::to_string(mask.cols) + "] does not match " + a.shape_string());
    std::vector<double> out(m * n, 0.0);
    auto av = a.values();
    for (std::size_t i = 0; i < m; ++i) {
        double hi = -INFINITY;
        for (std::size_t j = 0; j < n; ++j)
            if (mask.empty() || mask.at(i, j)) hi = std::max(hi, av[i * n + j]);
        if (hi == -INFINITY) throw ShapeError("softmax: row " + std::to_string(i) + " fully masked");
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (!mask.empty() && !mask.at(i, j)) continue;
            out[i * n + j] = std::exp(av[i * n + j] - hi);
            z += out[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
    }
    auto an = a.node();
    return emit("softmax", a.shape(), std::move(out), {an}, [an, m, n](Node& y) {
        auto ga = an->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += y.value[i * n + j] * y.grad[i * n + j];
            for (std::size_t j = 0; j < n; ++j)
                ga[i * n + j] += y.value[i * n + j] * (y.grad[i * n + j] - dot);
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_matrix("layer_norm", x);
    const std::size_t m = x.rows(), n = x.cols();
    if (gain.rank() != 1 || gain.size() != n) shape_fail("layer_norm", x, gain);
    if (bias.rank() != 1 || bias.size() != n) shape_fail("layer_norm", x, bias);
    std::vector<double> out(m * n);
    // Normalized activations and reciprocal deviations are kept for backward.
    auto xhat = std::make_shared<std::vector<double>>(m * n);
    auto rstd = std::make_shared<std::vector<double>>(m);
    auto xv = x.values();
    auto gv = gain.values();
    auto bv = bias.values();
    for (std::size_t i = 0; i < m; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += xv[i * n + j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = xv[i * n + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double r = 1.0 / std::sqrt(var + eps);
        (*rstd)[i] = r;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (xv[i * n + j] - mean) * r;
            (*xhat)[i * n + j] = h;
            out[i * n + j] = h * gv[j] + bv[j];
        }
    }
    auto xn = x.node(), gn = gain.node(), bn = bias.node();
    return emit("layer_norm", x.shape(), std::move(out), {xn, gn, bn},
                [xn, gn, bn, xhat, rstd, m, n](Node& o) {
                    const auto& h = *xhat;
                    if (gn->requires_grad) {
                        auto gg = gn->ensure_grad();
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < n; ++j)
                                gg[j] += o.grad[i * n + j] * h[i * n + j];
                    }
                    if (bn->requires_grad) {
                        auto gb = bn->ensure_grad();
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < n; ++j) gb[j] += o.grad[i * n + j];
                    }
                    if (xn->requires_grad) {
                        auto gx = xn->ensure_grad();
                        const double inv_n = 1.0 / static_cast<double>(n);
                        for (std::size_t i = 0; i < m; ++i) {
                            double mean_d = 0.0, mean_dh = 0.0;
                            for (std::size_t j = 0; j < n; ++j) {
                                const double d = o.grad[i * n + j] * gn->value[j];
                                mean_d += d;
                                mean_dh += d * h[i * n + j];
                            }
                            mean_d *= inv_n;
                            mean_dh *= inv_n;
                            for (std::size_t j = 0; j < n; ++j) {
                                const double d = o.grad[i * n + j] * gn->value[j];
                                gx[i * n + j] += (*rstd)[i] * (d - mean_d - h[i * n + j] * mean_dh);
                            }
                        }
                    }
                });
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
    auto an = a.node();
    return emit("relu", a.shape(), std::move(out), {an}, [an](Node& o) {
        auto g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (an->value[i] > 0.0) g[i] += o.grad[i];
    });
}

Tensor gelu(const Tensor& a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    std::vector<double> out(a.size());
    auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = 0.5 * av[i] * (1.0 + std::erf(av[i] * inv_sqrt2));
    auto an = a.node();
    return emit("gelu", a.shape(), std::move(out), {an}, [an](Node& o) {
        auto g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = an->value[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
            g[i] += o.grad[i] * (cdf + x * pdf);
        }
    });
}

Tensor activate(const Tensor& a, Activation act) {
    return act == Activation::gelu ? gelu(a) : relu(a);
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids) {
    require_matrix("embedding", table);
    const std::size_t v = table.rows(), d = table.cols(), m = ids.size();
    std::vector<double> out(m * d);
    auto tv = table.values();
    for (std::size_t i = 0; i < m; ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v)
            throw ShapeError("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                             std::to_string(v) + " rows");
        std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d, out.begin() +
                    static_cast<std::ptrdiff_t>(i * d));
    }
    auto tn = table.node();
    std::vector<std::int32_t> rows(ids.begin(), ids.end());
    return emit("embedding", {m, d}, std::move(out), {tn}, [tn, rows = std::move(rows), d](Node& o) {
        auto g = tn->ensure_grad();
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < d; ++j)
                g[static_cast<std::size_t>(rows[i]) * d + j] += o.grad[i * d + j];
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t m = parts.front().rows();
    std::size_t n = 0;
    std::vector<std::shared_ptr<Node>> inputs;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
        require_matrix("concat_cols", p);
        if (p.rows() != m) shape_fail("concat_cols", parts.front(), p);
        widths.push_back(p.cols());
        n += p.cols();
        inputs.push_back(p.node());
    }
    std::vector<double> out(m * n);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        auto pv = p.values();
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(i * p.cols()), p.cols(),
                        out.begin() + static_cast<std::ptrdiff_t>(i * n + offset));
        offset += p.cols();
    }
    auto captured = inputs;
    return emit("concat_cols", {m, n}, std::move(out), std::move(inputs),
                [captured, widths, m, n](Node& o) {
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < captured.size(); ++k) {
                        const std::size_t w = widths[k];
                        if (captured[k]->requires_grad) {
                            auto g = captured[k]->ensure_grad();
                            for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < w; ++j)
                                    g[i * w + j] += o.grad[i * n + off + j];
                        }
                        off += w;
                    }
                });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t n = parts.front().cols();
    std::size_t m = 0;
    std::vector<std::shared_ptr<Node>> inputs;
    std::vector<double> out;
    for (const auto& p : parts) {
        require_matrix("concat_rows", p);
        if (p.cols() != n) shape_fail("concat_rows", parts.front(), p);
        m += p.rows();
        inputs.push_back(p.node());
        out.insert(out.end(), p.values().begin(), p.values().end());
    }
    auto captured = inputs;
    return emit("concat_rows", {m, n}, std::move(out), std::move(inputs), [captured](Node& o) {
        std::size_t off = 0;
        for (const auto& in : captured) {
            if (in->requires_grad) {
                auto g = in->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[off + i];
            }
            off += in->value.size();
        }
    });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
    require_matrix("slice_cols", a);
    const std::size_t m = a.rows(), n = a.cols();
    if (begin > end || end > n)
        throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside " + a.shape_string());
    const std::size_t w = end - begin;
    std::vector<double> out(m * w);
    auto av = a.values();
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(i * n + begin), w,
                    out.begin() + static_cast<std::ptrdiff_t>(i * w));
    auto an = a.node();
    return emit("slice_cols", {m, w}, std::move(out), {an}, [an, m, n, w, begin](Node& o) {
        auto g = an->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) g[i * n + begin + j] += o.grad[i * w + j];
    });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
    require_matrix("slice_rows", a);
    const std::size_t m = a.rows(), n = a.cols();
    if (begin > end || end > m)
        throw ShapeError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside " + a.shape_string());
    auto av = a.values();
    std::vector<double> out(av.begin() + static_cast<std::ptrdiff_t>(begin * n),
                            av.begin() + static_cast<std::ptrdiff_t>(end * n));
    auto an = a.node();
    return emit("slice_rows", {end - begin, n}, std::move(out), {an}, [an, n, begin](Node& o) {
        auto g = an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[begin * n + i] += o.grad[i];
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    auto an = a.node();
    return emit("sum", {}, {s}, {an}, [an](Node& o) {
        auto g = an->ensure_grad();
        for (double& v : g) v += o.grad[0];
    });
}

Tensor cross_entropy_sum(const Tensor& logits, std::span<const std::int32_t> targets,
                         std::int32_t ignore) {
    require_matrix("cross_entropy", logits);
    const std::size_t m = logits.rows(), n = logits.cols();
    if (targets.size() != m)
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         logits.shape_string());
    auto probs = std::make_shared<std::vector<double>>(m * n, 0.0);
    std::vector<std::int32_t> tgt(targets.begin(), targets.end());
    auto lv = logits.values();
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (tgt[i] == ignore) continue;
        if (tgt[i] < 0 || static_cast<std::size_t>(tgt[i]) >= n)
            throw ShapeError("cross_entropy: target " + std::to_string(tgt[i]) + " outside " +
                             std::to_string(n) + " classes");
        const double* row = lv.data() + i * n;
        const double hi = *std::max_element(row, row + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - hi);
        const double lse = hi + std::log(z);
        for (std::size_t j = 0; j < n; ++j) (*probs)[i * n + j] = std::exp(row[j] - lse);
        total += lse - row[tgt[i]];
    }
    auto ln = logits.node();
    return emit("cross_entropy", {}, {total}, {ln},
                [ln, probs, tgt = std::move(tgt), ignore, n](Node& o) {
                    auto g = ln->ensure_grad();
                    const double up = o.grad[0];
                    for (std::size_t i = 0; i < tgt.size(); ++i) {
                        if (tgt[i] == ignore) continue;
                        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += up * (*probs)[i * n + j];
                        g[i * n + static_cast<std::size_t>(tgt[i])] -= up;
                    }
                });
}

Tensor multi_head_attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                            const AttentionMask& mask, std::size_t heads) {
    require_matrix("attention", queries);
    require_matrix("attention", keys);
    require_matrix("attention", values);
    const std::size_t d = queries.cols();
    if (heads == 0 || d % heads != 0)
        throw ShapeError("attention: model dim " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
    if (keys.cols() != d) shape_fail("attention", queries, keys);
    if (values.rows() != keys.rows() || values.cols() != d) shape_fail("attention", keys, values);
    const std::size_t dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    if (heads == 1) {
        auto weights = softmax_rows(scale(matmul_nt(queries, keys), inv_sqrt), mask);
        return matmul(weights, values);
    }
    std::vector<Tensor> outputs;
    outputs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        auto q = slice_cols(queries, h * dh, (h + 1) * dh);
        auto k = slice_cols(keys, h * dh, (h + 1) * dh);
        auto v = slice_cols(values, h * dh, (h + 1) * dh);
        auto weights = softmax_rows(scale(matmul_nt(q, k), inv_sqrt), mask);
        outputs.push_back(matmul(weights, v));
    }
    return concat_cols(outputs);
}

}  // namespace gslb::ad

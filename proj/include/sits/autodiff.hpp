#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "sits/core.hpp"

// Minimal reverse-mode autodiff over 2-D tensors. Values are computed
// eagerly as the graph is built; backward() topologically sorts the tape
// and runs each op's hand-written adjoint. Scalar type is a template
// parameter: float for training, double for finite-difference checks.

namespace sits::ad {

// --- dense kernels ---------------------------------------------------------

// c(m x n) = a(m x k) . b(k x n)
template <typename S>
void gemm_nn(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        S* ci = c + static_cast<std::size_t>(i) * n;
        if (!accumulate) {
            for (int j = 0; j < n; ++j) ci[j] = S(0);
        }
        const S* ai = a + static_cast<std::size_t>(i) * k;
        for (int l = 0; l < k; ++l) {
            S av = ai[l];
            const S* bl = b + static_cast<std::size_t>(l) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bl[j];
        }
    }
}

// c(m x n) = a(m x k) . b^T, with b stored (n x k)
template <typename S>
void gemm_nt(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const S* ai = a + static_cast<std::size_t>(i) * k;
        S* ci = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const S* bj = b + static_cast<std::size_t>(j) * k;
            S acc = S(0);
            for (int l = 0; l < k; ++l) acc += ai[l] * bj[l];
            ci[j] = accumulate ? ci[j] + acc : acc;
        }
    }
}

// c(k x n) = a(m x k)^T . b(m x n)
template <typename S>
void gemm_tn(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    if (!accumulate) {
        for (std::size_t i = 0; i < static_cast<std::size_t>(k) * n; ++i) c[i] = S(0);
    }
    for (int i = 0; i < m; ++i) {
        const S* ai = a + static_cast<std::size_t>(i) * k;
        const S* bi = b + static_cast<std::size_t>(i) * n;
        for (int l = 0; l < k; ++l) {
            S av = ai[l];
            S* cl = c + static_cast<std::size_t>(l) * n;
            for (int j = 0; j < n; ++j) cl[j] += av * bi[j];
        }
    }
}

// --- tape ------------------------------------------------------------------

template <typename S>
struct Node {
    int rows = 0, cols = 0;
    std::vector<S> val;
    std::vector<S> grad;  // allocated only when needs_grad
    bool needs_grad = false;
    std::vector<std::shared_ptr<Node<S>>> parents;
    std::function<void()> backward_fn;

    std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

template <typename S>
using Ptr = std::shared_ptr<Node<S>>;

template <typename S>
Ptr<S> tensor(int rows, int cols, bool needs_grad) {
    auto n = std::make_shared<Node<S>>();
    n->rows = rows;
    n->cols = cols;
    n->val.assign(static_cast<std::size_t>(rows) * cols, S(0));
    n->needs_grad = needs_grad;
    if (needs_grad) n->grad.assign(n->val.size(), S(0));
    return n;
}

template <typename S>
Ptr<S> constant(int rows, int cols, const S* data) {
    auto n = tensor<S>(rows, cols, false);
    std::copy(data, data + n->size(), n->val.begin());
    return n;
}

template <typename S, typename U>
Ptr<S> constant_cast(int rows, int cols, const U* data) {
    auto n = tensor<S>(rows, cols, false);
    for (std::size_t i = 0; i < n->size(); ++i) n->val[i] = static_cast<S>(data[i]);
    return n;
}

template <typename S>
bool any_needs_grad(const std::vector<Ptr<S>>& parents) {
    for (const auto& p : parents) {
        if (p->needs_grad) return true;
    }
    return false;
}

template <typename S>
Ptr<S> make_op(std::vector<Ptr<S>> parents, int rows, int cols) {
    auto n = tensor<S>(rows, cols, any_needs_grad(parents));
    n->parents = std::move(parents);
    return n;
}

/// Reverse pass from a scalar root. Seeds d(root)/d(root) = 1.
template <typename S>
void backward(const Ptr<S>& root) {
    if (root->size() != 1) throw PreconditionError("backward expects a scalar root");
    if (!root->needs_grad) return;

    // iterative postorder topo sort
    std::vector<Node<S>*> order;
    std::unordered_set<Node<S>*> visited;
    std::vector<std::pair<Node<S>*, std::size_t>> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, child] = stack.back();
        if (child < node->parents.size()) {
            Node<S>* next = node->parents[child++].get();
            if (next->needs_grad && !visited.count(next)) {
                visited.insert(next);
                stack.push_back({next, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->grad[0] = S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn();
    }
}

// --- ops -------------------------------------------------------------------

template <typename S>
Ptr<S> add(const Ptr<S>& a, const Ptr<S>& b) {
    if (a->rows != b->rows || a->cols != b->cols) throw PreconditionError("add: shape mismatch");
    auto out = make_op<S>({a, b}, a->rows, a->cols);
    for (std::size_t i = 0; i < out->size(); ++i) out->val[i] = a->val[i] + b->val[i];
    if (out->needs_grad) {
        Node<S>* o = out.get();
        out->backward_fn = [o, a, b]() {
            if (a->needs_grad) {
                for (std::size_t i = 0; i < o->size(); ++i) a->grad[i] += o->grad[i];
            }
            if (b->needs_grad) {
                for (std::size_t i = 0; i < o->size(); ++i) b->grad[i] += o->grad[i];
            }
        };
    }
    return out;
}

template <typename S>
Ptr<S> scale(const Ptr<S>& a, S factor) {
    auto out = make_op<S>({a}, a->rows, a->cols);
    for (std::size_t i = 0; i < out->size(); ++i) out->val[i] = a->val[i] * factor;
    if (out->needs_grad) {
        Node<S>* o = out.get();
        out->backward_fn = [o, a, factor]() {
            for (std::size_t i = 0; i < o->size(); ++i) a->grad[i] += factor * o->grad[i];
        };
    }
    return out;
}

/// x with `block` (r x cols) added onto rows [row_off, row_off + r).
template <typename S>
Ptr<S> add_block(const Ptr<S>& x, const Ptr<S>& block, int row_off) {
    if (block->cols != x->cols || row_off < 0 || row_off + block->rows > x->rows) {
        throw PreconditionError("add_block: bad block placement");
    }
    auto out = make_op<S>({x, block}, x->rows, x->cols);
    out->val = x->val;
    std::size_t off = static_cast<std::size_t>(row_off) * x->cols;
    for (std::size_t i = 0; i < block->size(); ++i) out->val[off + i] += block->val[i];
    if (out->needs_grad) {
        Node<S>* o = out.get();
        out->backward_fn = [o, x, block, off]() {
            if (x->needs_grad) {
                for (std::size_t i = 0; i < o->size(); ++i) x->grad[i] += o->grad[i];
            }
            if (block->needs_grad) {
                for (std::size_t i = 0; i < block->size(); ++i) block->grad[i] += o->grad[off + i];
            }
        };
    }
    return out;
}

/// x with row vector v (1 x cols) added onto every row in [r0, r1).
template <typename S>
Ptr<S> add_rowvec_range(const Ptr<S>& x, const Ptr<S>& v, int r0, int r1) {
    if (v->rows != 1 || v->cols != x->cols || r0 < 0 || r1 > x->rows || r0 >= r1) {
        throw PreconditionError("add_rowvec_range: bad range");
    }
    auto out = make_op<S>({x, v}, x->rows, x->cols);
    out->val = x->val;
    for (int r = r0; r < r1; ++r) {
        S* row = out->val.data() + static_cast<std::size_t>(r) * x->cols;
        for (int j = 0; j < x->cols; ++j) row[j] += v->val[j];
    }
    if (out->needs_grad) {
        Node<S>* o = out.get();
        int cols = x->cols;
        out->backward_fn = [o, x, v, r0, r1, cols]() {
            if (x->needs_grad) {
                for (std::size_t i = 0; i < o->size(); ++i) x->grad[i] += o->grad[i];
            }
            if (v->needs_grad) {
                for (int r = r0; r < r1; ++r) {
                    const S* g = o->grad.data() + static_cast<std::size_t>(r) * cols;
                    for (int j = 0; j < cols; ++j) v->grad[j] += g[j];
                }
            }
        };
    }
    return out;
}

template <typename S>
Ptr<S> matmul(const Ptr<S>& a, const Ptr<S>& b) {
    if (a->cols != b->rows) throw PreconditionError("matmul: inner dims differ");
    auto out = make_op<S>({a, b}, a->rows, b->cols);
    gemm_nn(a->val.data(), b->val.data(), out->val.data(), a->rows, a->cols, b->cols, false);
    if (out->needs_grad) {
        Node<S>* o = out.get();
        out->backward_fn = [o, a, b]() {
            if (a->needs_grad) {
                gemm_nt(o->grad.data(), b->val.data(), a->grad.data(), a->rows, b->cols, a->cols,
                        true);
            }
            if (b->needs_grad) {
                gemm_tn(a->val.data(), o->grad.data(), b->grad.data(), a->rows, a->cols, b->cols,
                        true);
            }
        };
    }
    return out;
}

/// y = x . w + bias, bias broadcast across rows. w is (in x out).
template <typename S>
Ptr<S> linear(const Ptr<S>& x, const Ptr<S>& w, const Ptr<S>& bias) {
    if (x->cols != w->rows || bias->rows != 1 || bias->cols != w->cols) {
        throw PreconditionError("linear: shape mismatch");
    }
    auto out = make_op<S>({x, w, bias}, x->rows, w->cols);
    gemm_nn(x->val.data(), w->val.data(), out->val.data(), x->rows, x->cols, w->cols, false);
    for (int i = 0; i < out->rows; ++i) {
        S* row = out->val.data() + static_cast<std::size_t>(i) * out->cols;
        for (int j = 0; j < out->cols; ++j) row[j] += bias->val[j];
    }
    if (out->needs_grad) {
        Node<S>* o = out.get();
        out->backward_fn = [o, x, w, bias]() {
            if (x->needs_grad) {
                gemm_nt(o->grad.data(), w->val.data(), x->grad.data(), x->rows, w->cols, x->cols,
                        true);
            }
            if (w->needs_grad) {
                gemm_tn(x->val.data(), o->grad.data(), w->grad.data(), x->rows, x->cols, w->cols,
                        true);
            }
            if (bias->needs_grad) {
                for (int i = 0; i < o->rows; ++i) {
                    const S* g = o->grad.data() + static_cast<std::size_t>(i) * o->cols;
                    for (int j = 0; j < o->cols; ++j) bias->grad[j] += g[j];
                }
            }
        };
    }
    return out;
}

template <typename S>
Ptr<S> vstack(const Ptr<S>& a, const Ptr<S>& b) {
    if (a->cols != b->cols) throw PreconditionError("vstack: column mismatch");
    auto out = make_op<S>({a, b}, a->rows + b->rows, a->cols);
    std::copy(a->val.begin(), a->val.end(), out->val.begin());
    std::copy(b->val.begin(), b->val.end(), out->val.begin() + a->size());
    if (out->needs_grad) {
        Node<S>* o = out.get();
        out->backward_fn = [o, a, b]() {
            if (a->needs_grad) {
                for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += o->grad[i];
            }
            if (b->needs_grad) {
                std::size_t off = a->size();
                for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] += o->grad[off + i];
            }
        };
    }
    return out;
}

template <typename S>
Ptr<S> slice_rows(const Ptr<S>& x, int r0, int r1) {
    if (r0 < 0 || r1 > x->rows || r0 >= r1) throw PreconditionError("slice_rows: bad range");
    auto out = make_op<S>({x}, r1 - r0, x->cols);
    std::size_t off = static_cast<std::size_t>(r0) * x->cols;
    std::copy(x->val.begin() + off, x->val.begin() + off + out->size(), out->val.begin());
    if (out->needs_grad) {
        Node<S>* o = out.get();
        out->backward_fn = [o, x, off]() {
            for (std::size_t i = 0; i < o->size(); ++i) x->grad[off + i] += o->grad[i];
        };
    }
    return out;
}

/// Concatenate along columns; a and b must have equal row counts.
template <typename S>
Ptr<S> concat_cols(const Ptr<S>& a, const Ptr<S>& b) {
    if (a->rows != b->rows) throw PreconditionError("concat_cols: row mismatch");
    auto out = make_op<S>({a, b}, a->rows, a->cols + b->cols);
    for (int i = 0; i < a->rows; ++i) {
        S* row = out->val.data() + static_cast<std::size_t>(i) * out->cols;
        std::copy(a->val.begin() + static_cast<std::size_t>(i) * a->cols,
                  a->val.begin() + static_cast<std::size_t>(i + 1) * a->cols, row);
        std::copy(b->val.begin() + static_cast<std::size_t>(i) * b->cols,
                  b->val.begin() + static_cast<std::size_t>(i + 1) * b->cols, row + a->cols);
    }
    if (out->needs_grad) {
        Node<S>* o = out.get();
        out->backward_fn = [o, a, b]() {
            for (int i = 0; i < o->rows; ++i) {
                const S* g = o->grad.data() + static_cast<std::size_t>(i) * o->cols;
                if (a->needs_grad) {
                    for (int j = 0; j < a->cols; ++j) {
                        a->grad[static_cast<std::size_t>(i) * a->cols + j] += g[j];
                    }
                }
                if (b->needs_grad) {
                    for (int j = 0; j < b->cols; ++j) {
                        b->grad[static_cast<std::size_t>(i) * b->cols + j] += g[a->cols + j];
                    }
                }
            }
        };
    }
    return out;
}

template <typename S>
Ptr<S> gelu(const Ptr<S>& x) {
    auto out = make_op<S>({x}, x->rows, x->cols);
    for (std::size_t i = 0; i < x->size(); ++i) {
        S v = x->val[i];
        out->val[i] = S(0.5) * v * (S(1) + std::erf(v * S(M_SQRT1_2)));
    }
    if (out->needs_grad) {
        Node<S>* o = out.get();
        out->backward_fn = [o, x]() {
            constexpr S inv_sqrt_2pi = S(0.3989422804014326779);
            for (std::size_t i = 0; i < x->size(); ++i) {
                S v = x->val[i];
                S cdf = S(0.5) * (S(1) + std::erf(v * S(M_SQRT1_2)));
                S pdf = inv_sqrt_2pi * std::exp(S(-0.5) * v * v);
                x->grad[i] += o->grad[i] * (cdf + v * pdf);
            }
        };
    }
    return out;
}

/// Row-wise layer norm with learnable gain/bias (1 x cols each).
template <typename S>
Ptr<S> layer_norm(const Ptr<S>& x, const Ptr<S>& gamma, const Ptr<S>& beta, S eps = S(1e-5)) {
    if (gamma->cols != x->cols || beta->cols != x->cols || gamma->rows != 1 || beta->rows != 1) {
        throw PreconditionError("layer_norm: parameter shape mismatch");
    }
    auto out = make_op<S>({x, gamma, beta}, x->rows, x->cols);
    int cols = x->cols;
    auto xhat = std::make_shared<std::vector<S>>(x->size());
    auto rstd = std::make_shared<std::vector<S>>(x->rows);
    for (int i = 0; i < x->rows; ++i) {
        const S* row = x->val.data() + static_cast<std::size_t>(i) * cols;
        S mean = S(0);
        for (int j = 0; j < cols; ++j) mean += row[j];
        mean /= S(cols);
        S var = S(0);
        for (int j = 0; j < cols; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= S(cols);
        S r = S(1) / std::sqrt(var + eps);
        (*rstd)[i] = r;
        S* h = xhat->data() + static_cast<std::size_t>(i) * cols;
        S* y = out->val.data() + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) {
            h[j] = (row[j] - mean) * r;
            y[j] = gamma->val[j] * h[j] + beta->val[j];
        }
    }
    if (out->needs_grad) {
        Node<S>* o = out.get();
        out->backward_fn = [o, x, gamma, beta, xhat, rstd, cols]() {
            for (int i = 0; i < o->rows; ++i) {
                const S* g = o->grad.data() + static_cast<std::size_t>(i) * cols;
                const S* h = xhat->data() + static_cast<std::size_t>(i) * cols;
                if (gamma->needs_grad) {
                    for (int j = 0; j < cols; ++j) gamma->grad[j] += g[j] * h[j];
                }
                if (beta->needs_grad) {
                    for (int j = 0; j < cols; ++j) beta->grad[j] += g[j];
                }
                if (x->needs_grad) {
                    S sum_g = S(0), sum_gh = S(0);
                    for (int j = 0; j < cols; ++j) {
                        S gg = g[j] * gamma->val[j];
                        sum_g += gg;
                        sum_gh += gg * h[j];
                    }
                    sum_g /= S(cols);
                    sum_gh /= S(cols);
                    S r = (*rstd)[i];
                    S* xg = x->grad.data() + static_cast<std::size_t>(i) * cols;
                    for (int j = 0; j < cols; ++j) {
                        S gg = g[j] * gamma->val[j];
                        xg[j] += r * (gg - sum_g - h[j] * sum_gh);
                    }
                }
            }
        };
    }
    return out;
}

/// Multi-head scaled dot-product self-attention core: softmax(QK^T/sqrt(dh))V
/// per head, heads concatenated. q, k, v are (T x D) with D divisible by heads.
template <typename S>
Ptr<S> attention(const Ptr<S>& q, const Ptr<S>& k, const Ptr<S>& v, int heads) {
    int t = q->rows, d = q->cols;
    if (k->rows != t || v->rows != t || k->cols != d || v->cols != d) {
        throw PreconditionError("attention: q/k/v shape mismatch");
    }
    if (heads < 1 || d % heads != 0) throw PreconditionError("attention: dim % heads != 0");
    int dh = d / heads;
    S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));

    auto out = make_op<S>({q, k, v}, t, d);
    auto probs = std::make_shared<std::vector<S>>(static_cast<std::size_t>(heads) * t * t);

    std::vector<S> qh(static_cast<std::size_t>(t) * dh), kh(qh.size()), vh(qh.size());
    std::vector<S> scores(static_cast<std::size_t>(t) * t), oh(qh.size());
    auto gather = [&](const Ptr<S>& src, int h, std::vector<S>& dst) {
        for (int i = 0; i < t; ++i) {
            const S* row = src->val.data() + static_cast<std::size_t>(i) * d + h * dh;
            std::copy(row, row + dh, dst.data() + static_cast<std::size_t>(i) * dh);
        }
    };
    for (int h = 0; h < heads; ++h) {
        gather(q, h, qh);
        gather(k, h, kh);
        gather(v, h, vh);
        gemm_nt(qh.data(), kh.data(), scores.data(), t, dh, t, false);
        S* p = probs->data() + static_cast<std::size_t>(h) * t * t;
        for (int i = 0; i < t; ++i) {
            S* row = scores.data() + static_cast<std::size_t>(i) * t;
            S mx = row[0] * inv_sqrt_dh;
            for (int j = 0; j < t; ++j) {
                row[j] *= inv_sqrt_dh;
                mx = std::max(mx, row[j]);
            }
            S sum = S(0);
            for (int j = 0; j < t; ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            S inv = S(1) / sum;
            S* prow = p + static_cast<std::size_t>(i) * t;
            for (int j = 0; j < t; ++j) prow[j] = row[j] * inv;
        }
        gemm_nn(p, vh.data(), oh.data(), t, t, dh, false);
        for (int i = 0; i < t; ++i) {
            S* row = out->val.data() + static_cast<std::size_t>(i) * d + h * dh;
            std::copy(oh.data() + static_cast<std::size_t>(i) * dh,
                      oh.data() + static_cast<std::size_t>(i + 1) * dh, row);
        }
    }

    if (out->needs_grad) {
        Node<S>* o = out.get();
        out->backward_fn = [o, q, k, v, probs, heads, t, d, dh, inv_sqrt_dh]() {
            std::vector<S> qh(static_cast<std::size_t>(t) * dh), kh(qh.size()), vh(qh.size());
            std::vector<S> goh(qh.size()), gqh(qh.size()), gkh(qh.size()), gvh(qh.size());
            std::vector<S> dp(static_cast<std::size_t>(t) * t), ds(dp.size());
            auto gather_val = [&](const Ptr<S>& src, int h, std::vector<S>& dst) {
                for (int i = 0; i < t; ++i) {
                    const S* row = src->val.data() + static_cast<std::size_t>(i) * d + h * dh;
                    std::copy(row, row + dh, dst.data() + static_cast<std::size_t>(i) * dh);
                }
            };
            for (int h = 0; h < heads; ++h) {
                gather_val(q, h, qh);
                gather_val(k, h, kh);
                gather_val(v, h, vh);
                for (int i = 0; i < t; ++i) {
                    const S* row = o->grad.data() + static_cast<std::size_t>(i) * d + h * dh;
                    std::copy(row, row + dh, goh.data() + static_cast<std::size_t>(i) * dh);
                }
                const S* p = probs->data() + static_cast<std::size_t>(h) * t * t;
                // dP = dO . V^T ; dV = P^T . dO
                gemm_nt(goh.data(), vh.data(), dp.data(), t, dh, t, false);
                gemm_tn(p, goh.data(), gvh.data(), t, t, dh, false);
                // dS = P o (dP - rowsum(dP o P))
                for (int i = 0; i < t; ++i) {
                    const S* prow = p + static_cast<std::size_t>(i) * t;
                    S* dprow = dp.data() + static_cast<std::size_t>(i) * t;
                    S dot = S(0);
                    for (int j = 0; j < t; ++j) dot += dprow[j] * prow[j];
                    S* dsrow = ds.data() + static_cast<std::size_t>(i) * t;
                    for (int j = 0; j < t; ++j) dsrow[j] = prow[j] * (dprow[j] - dot);
                }
                // dQ = dS . K * scale ; dK = dS^T . Q * scale
                gemm_nn(ds.data(), kh.data(), gqh.data(), t, t, dh, false);
                gemm_tn(ds.data(), qh.data(), gkh.data(), t, t, dh, false);
                auto scatter = [&](const Ptr<S>& dst, const std::vector<S>& src, S factor) {
                    if (!dst->needs_grad) return;
                    for (int i = 0; i < t; ++i) {
                        S* row = dst->grad.data() + static_cast<std::size_t>(i) * d + h * dh;
                        const S* s = src.data() + static_cast<std::size_t>(i) * dh;
                        for (int j = 0; j < dh; ++j) row[j] += factor * s[j];
                    }
                };
                scatter(q, gqh, inv_sqrt_dh);
                scatter(k, gkh, inv_sqrt_dh);
                scatter(v, gvh, S(1));
            }
        };
    }
    return out;
}

/// Cross-entropy of a single logits row against an integer label,
/// log-sum-exp stabilized by max subtraction. Returns 1x1.
template <typename S>
Ptr<S> cross_entropy(const Ptr<S>& logits, int label) {
    if (logits->rows != 1) throw PreconditionError("cross_entropy expects a 1 x C logits row");
    if (label < 0 || label >= logits->cols) throw PreconditionError("cross_entropy: label range");
    auto out = make_op<S>({logits}, 1, 1);
    int c = logits->cols;
    S mx = logits->val[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, logits->val[j]);
    S sum = S(0);
    auto softmax = std::make_shared<std::vector<S>>(c);
    for (int j = 0; j < c; ++j) {
        (*softmax)[j] = std::exp(logits->val[j] - mx);
        sum += (*softmax)[j];
    }
    for (int j = 0; j < c; ++j) (*softmax)[j] /= sum;
    out->val[0] = std::log(sum) + mx - logits->val[label];
    if (out->needs_grad) {
        Node<S>* o = out.get();
        out->backward_fn = [o, logits, softmax, label, c]() {
            S g = o->grad[0];
            for (int j = 0; j < c; ++j) {
                logits->grad[j] += g * ((*softmax)[j] - (j == label ? S(1) : S(0)));
            }
        };
    }
    return out;
}

/// Mean squared error against a per-row-standardized target. Each target row
/// (one patch) is normalized by its own mean and population std, the std
/// floored at sigma_floor. Returns 1x1.
template <typename S>
Ptr<S> normalized_mse(const Ptr<S>& pred, const std::vector<S>& target,
                      S sigma_floor = S(1e-6)) {
    if (target.size() != pred->size()) throw PreconditionError("normalized_mse: size mismatch");
    auto out = make_op<S>({pred}, 1, 1);
    int rows = pred->rows, cols = pred->cols;
    auto norm_target = std::make_shared<std::vector<S>>(pred->size());
    for (int i = 0; i < rows; ++i) {
        const S* trow = target.data() + static_cast<std::size_t>(i) * cols;
        S mean = S(0);
        for (int j = 0; j < cols; ++j) mean += trow[j];
        mean /= S(cols);
        S var = S(0);
        for (int j = 0; j < cols; ++j) var += (trow[j] - mean) * (trow[j] - mean);
        var /= S(cols);
        S sd = std::max(std::sqrt(var), sigma_floor);
        S* nrow = norm_target->data() + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) nrow[j] = (trow[j] - mean) / sd;
    }
    S acc = S(0);
    for (std::size_t i = 0; i < pred->size(); ++i) {
        S diff = pred->val[i] - (*norm_target)[i];
        acc += diff * diff;
    }
    S inv_n = S(1) / static_cast<S>(pred->size());
    out->val[0] = acc * inv_n;
    if (out->needs_grad) {
        Node<S>* o = out.get();
        out->backward_fn = [o, pred, norm_target, inv_n]() {
            S g = o->grad[0];
            for (std::size_t i = 0; i < pred->size(); ++i) {
                pred->grad[i] += g * S(2) * inv_n * (pred->val[i] - (*norm_target)[i]);
            }
        };
    }
    return out;
}

}  // namespace sits::ad

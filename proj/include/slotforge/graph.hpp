#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "slotforge/tensor.hpp"

namespace slotforge {

using Var = int;

// Reverse-mode autodiff over a static per-step tape. Nodes are created in
// topological order; backward walks the tape in reverse. Every kernel output
// is checked finite (NaN/Inf is a contract violation).
template <class T>
class Graph {
 public:
    using BackFn = std::function<void(Graph&, Var)>;

    Var leaf(Tensor<T> v, bool requires_grad = false) {
        return push(std::move(v), requires_grad, {});
    }

    const Tensor<T>& val(Var v) const { return nodes_[v].val; }
    const Tensor<T>& grad(Var v) const {
        require(nodes_[v].has_grad, "grad: node has no gradient");
        return nodes_[v].grad;
    }
    bool has_grad(Var v) const { return nodes_[v].has_grad; }
    bool rg(Var v) const { return nodes_[v].requires_grad; }
    size_t size() const { return nodes_.size(); }

    void accum(Var v, const Tensor<T>& g) {
        Node& n = nodes_[v];
        if (!n.has_grad) {
            n.grad = g;
            n.has_grad = true;
        } else {
            for (size_t i = 0; i < g.numel(); ++i) n.grad[i] += g[i];
        }
    }

    // ---- elementwise ----

    Var add(Var a, Var b) {
        const auto &A = val(a), &B = val(b);
        require(A.same_shape(B), "add: shape mismatch");
        Tensor<T> out = A;
        for (size_t i = 0; i < out.numel(); ++i) out[i] += B[i];
        return push(std::move(out), rg(a) || rg(b), [a, b](Graph& g, Var y) {
            if (g.rg(a)) g.accum(a, g.grad(y));
            if (g.rg(b)) g.accum(b, g.grad(y));
        });
    }

    Var sub(Var a, Var b) {
        const auto &A = val(a), &B = val(b);
        require(A.same_shape(B), "sub: shape mismatch");
        Tensor<T> out = A;
        for (size_t i = 0; i < out.numel(); ++i) out[i] -= B[i];
        return push(std::move(out), rg(a) || rg(b), [a, b](Graph& g, Var y) {
            if (g.rg(a)) g.accum(a, g.grad(y));
            if (g.rg(b)) {
                Tensor<T> gb = g.grad(y);
                for (auto& v : gb.data) v = -v;
                g.accum(b, gb);
            }
        });
    }

    Var mul(Var a, Var b) {
        const auto &A = val(a), &B = val(b);
        require(A.same_shape(B), "mul: shape mismatch");
        Tensor<T> out = A;
        for (size_t i = 0; i < out.numel(); ++i) out[i] *= B[i];
        return push(std::move(out), rg(a) || rg(b), [a, b](Graph& g, Var y) {
            const auto& gy = g.grad(y);
            if (g.rg(a)) {
                Tensor<T> ga = gy;
                for (size_t i = 0; i < ga.numel(); ++i) ga[i] *= g.val(b)[i];
                g.accum(a, ga);
            }
            if (g.rg(b)) {
                Tensor<T> gb = gy;
                for (size_t i = 0; i < gb.numel(); ++i) gb[i] *= g.val(a)[i];
                g.accum(b, gb);
            }
        });
    }

    Var scale(Var a, T c) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v *= c;
        return push(std::move(out), rg(a), [a, c](Graph& g, Var y) {
            if (!g.rg(a)) return;
            Tensor<T> ga = g.grad(y);
            for (auto& v : ga.data) v *= c;
            g.accum(a, ga);
        });
    }

    // Smallest |preactivation| seen by any relu on this tape; finite-difference
    // checks require it to clear their perturbation scale.
    double relu_margin() const { return relu_margin_; }

    Var relu(Var a) {
        Tensor<T> out = val(a);
        for (const auto& v : out.data)
            relu_margin_ = std::min(relu_margin_, std::abs(static_cast<double>(v)));
        for (auto& v : out.data) v = v > T(0) ? v : T(0);
        return push(std::move(out), rg(a), [a](Graph& g, Var y) {
            if (!g.rg(a)) return;
            Tensor<T> ga = g.grad(y);
            for (size_t i = 0; i < ga.numel(); ++i)
                if (g.val(a)[i] <= T(0)) ga[i] = T(0);
            g.accum(a, ga);
        });
    }

    Var tanh_act(Var a) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v = std::tanh(v);
        return push(std::move(out), rg(a), [a](Graph& g, Var y) {
            if (!g.rg(a)) return;
            Tensor<T> ga = g.grad(y);
            for (size_t i = 0; i < ga.numel(); ++i) {
                const T t = g.val(y)[i];
                ga[i] *= (T(1) - t * t);
            }
            g.accum(a, ga);
        });
    }

    Var sigmoid(Var a) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v = T(1) / (T(1) + std::exp(-v));
        return push(std::move(out), rg(a), [a](Graph& g, Var y) {
            if (!g.rg(a)) return;
            Tensor<T> ga = g.grad(y);
            for (size_t i = 0; i < ga.numel(); ++i) {
                const T s = g.val(y)[i];
                ga[i] *= s * (T(1) - s);
            }
            g.accum(a, ga);
        });
    }

    // ---- linear algebra ----

    Var matmul(Var a, Var b) {
        Tensor<T> out = matmul_val(val(a), val(b));
        return push(std::move(out), rg(a) || rg(b), [a, b](Graph& g, Var y) {
            const auto& gy = g.grad(y);
            if (g.rg(a)) {
                Tensor<T> ga({g.val(a).rows(), g.val(a).cols()});
                matmul_acc(gy, transposed(g.val(b)), ga);
                ga.shape = g.val(a).shape;
                g.accum(a, ga);
            }
            if (g.rg(b)) {
                Tensor<T> gb({g.val(b).rows(), g.val(b).cols()});
                matmul_acc(transposed(g.val(a)), gy, gb);
                gb.shape = g.val(b).shape;
                g.accum(b, gb);
            }
        });
    }

    Var transpose(Var a) {
        return push(transposed(val(a)), rg(a), [a](Graph& g, Var y) {
            if (g.rg(a)) g.accum(a, transposed(g.grad(y)));
        });
    }

    // y[r,:] = a[r,:] + v  (v is a length-C vector / 1xC matrix)
    Var add_rowvec(Var a, Var v) {
        const auto &A = val(a), &V = val(v);
        require(V.cols() == A.cols() && V.rows() == 1, "add_rowvec: bias shape mismatch");
        Tensor<T> out = A;
        for (size_t r = 0; r < A.rows(); ++r)
            for (size_t c = 0; c < A.cols(); ++c) out.at(r, c) += V[c];
        return push(std::move(out), rg(a) || rg(v), [a, v](Graph& g, Var y) {
            const auto& gy = g.grad(y);
            if (g.rg(a)) g.accum(a, gy);
            if (g.rg(v)) {
                Tensor<T> gv;
                gv.shape = g.val(v).shape;
                gv.data.assign(g.val(v).numel(), T(0));
                for (size_t r = 0; r < gy.rows(); ++r)
                    for (size_t c = 0; c < gy.cols(); ++c) gv[c] += gy.at(r, c);
                g.accum(v, gv);
            }
        });
    }

    // y = R copies of the single row of a.
    Var broadcast_row(Var a, size_t R) {
        const auto& A = val(a);
        require(A.rows() == 1, "broadcast_row: input must be a single row");
        Tensor<T> out({R, A.cols()});
        for (size_t r = 0; r < R; ++r)
            for (size_t c = 0; c < A.cols(); ++c) out.at(r, c) = A[c];
        return push(std::move(out), rg(a), [a](Graph& g, Var y) {
            if (!g.rg(a)) return;
            const auto& gy = g.grad(y);
            Tensor<T> ga;
            ga.shape = g.val(a).shape;
            ga.data.assign(g.val(a).numel(), T(0));
            for (size_t r = 0; r < gy.rows(); ++r)
                for (size_t c = 0; c < gy.cols(); ++c) ga[c] += gy.at(r, c);
            g.accum(a, ga);
        });
    }

    // ---- row/col selection ----

    Var gather_rows(Var a, std::vector<size_t> idx) {
        const auto& A = val(a);
        Tensor<T> out({idx.size(), A.cols()});
        for (size_t i = 0; i < idx.size(); ++i) {
            require(idx[i] < A.rows(), "gather_rows: index out of range");
            std::copy(A.row_ptr(idx[i]), A.row_ptr(idx[i]) + A.cols(), out.row_ptr(i));
        }
        return push(std::move(out), rg(a), [a, idx = std::move(idx)](Graph& g, Var y) {
            if (!g.rg(a)) return;
            const auto& gy = g.grad(y);
            Tensor<T> ga({g.val(a).rows(), g.val(a).cols()});
            for (size_t i = 0; i < idx.size(); ++i)
                for (size_t c = 0; c < gy.cols(); ++c) ga.at(idx[i], c) += gy.at(i, c);
            ga.shape = g.val(a).shape;
            g.accum(a, ga);
        });
    }

    // y has total_rows rows; y[idx[i],:] = a[i,:], all other rows zero.
    Var scatter_rows(Var a, std::vector<size_t> idx, size_t total_rows) {
        const auto& A = val(a);
        require(idx.size() == A.rows(), "scatter_rows: index count mismatch");
        Tensor<T> out({total_rows, A.cols()});
        for (size_t i = 0; i < idx.size(); ++i) {
            require(idx[i] < total_rows, "scatter_rows: index out of range");
            std::copy(A.row_ptr(i), A.row_ptr(i) + A.cols(), out.row_ptr(idx[i]));
        }
        return push(std::move(out), rg(a), [a, idx = std::move(idx)](Graph& g, Var y) {
            if (!g.rg(a)) return;
            const auto& gy = g.grad(y);
            Tensor<T> ga({idx.size(), gy.cols()});
            for (size_t i = 0; i < idx.size(); ++i)
                std::copy(gy.row_ptr(idx[i]), gy.row_ptr(idx[i]) + gy.cols(), ga.row_ptr(i));
            g.accum(a, ga);
        });
    }

    Var concat_rows(const std::vector<Var>& parts) {
        require(!parts.empty(), "concat_rows: empty");
        const size_t C = val(parts[0]).cols();
        size_t R = 0;
        bool needs = false;
        for (Var p : parts) {
            require(val(p).cols() == C, "concat_rows: column mismatch");
            R += val(p).rows();
            needs = needs || rg(p);
        }
        Tensor<T> out({R, C});
        size_t r0 = 0;
        for (Var p : parts) {
            const auto& P = val(p);
            std::copy(P.data.begin(), P.data.end(), out.row_ptr(r0));
            r0 += P.rows();
        }
        return push(std::move(out), needs, [parts](Graph& g, Var y) {
            const auto& gy = g.grad(y);
            size_t r0 = 0;
            for (Var p : parts) {
                const size_t pr = g.val(p).rows();
                if (g.rg(p)) {
                    Tensor<T> gp({pr, gy.cols()});
                    std::copy(gy.row_ptr(r0), gy.row_ptr(r0) + pr * gy.cols(), gp.data.begin());
                    gp.shape = g.val(p).shape;
                    g.accum(p, gp);
                }
                r0 += pr;
            }
        });
    }

    Var slice_cols(Var a, size_t from, size_t n) {
        const auto& A = val(a);
        require(from + n <= A.cols(), "slice_cols: range out of bounds");
        Tensor<T> out({A.rows(), n});
        for (size_t r = 0; r < A.rows(); ++r)
            std::copy(A.row_ptr(r) + from, A.row_ptr(r) + from + n, out.row_ptr(r));
        return push(std::move(out), rg(a), [a, from, n](Graph& g, Var y) {
            if (!g.rg(a)) return;
            const auto& gy = g.grad(y);
            Tensor<T> ga({g.val(a).rows(), g.val(a).cols()});
            for (size_t r = 0; r < gy.rows(); ++r)
                for (size_t c = 0; c < n; ++c) ga.at(r, from + c) = gy.at(r, c);
            ga.shape = g.val(a).shape;
            g.accum(a, ga);
        });
    }

    Var concat_cols(const std::vector<Var>& parts) {
        require(!parts.empty(), "concat_cols: empty");
        const size_t R = val(parts[0]).rows();
        size_t C = 0;
        bool needs = false;
        for (Var p : parts) {
            require(val(p).rows() == R, "concat_cols: row mismatch");
            C += val(p).cols();
            needs = needs || rg(p);
        }
        Tensor<T> out({R, C});
        size_t c0 = 0;
        for (Var p : parts) {
            const auto& P = val(p);
            for (size_t r = 0; r < R; ++r)
                std::copy(P.row_ptr(r), P.row_ptr(r) + P.cols(), out.row_ptr(r) + c0);
            c0 += P.cols();
        }
        return push(std::move(out), needs, [parts](Graph& g, Var y) {
            const auto& gy = g.grad(y);
            size_t c0 = 0;
            for (Var p : parts) {
                const size_t pc = g.val(p).cols();
                if (g.rg(p)) {
                    Tensor<T> gp({g.val(p).rows(), pc});
                    for (size_t r = 0; r < gy.rows(); ++r)
                        std::copy(gy.row_ptr(r) + c0, gy.row_ptr(r) + c0 + pc, gp.row_ptr(r));
                    gp.shape = g.val(p).shape;
                    g.accum(p, gp);
                }
                c0 += pc;
            }
        });
    }

    // y[k,:] = masked[k] ? emb : a[k,:]   (emb is a single row)
    Var replace_rows(Var a, std::vector<uint8_t> masked, Var emb) {
        const auto &A = val(a), &E = val(emb);
        require(masked.size() == A.rows(), "replace_rows: mask length mismatch");
        require(E.rows() == 1 && E.cols() == A.cols(), "replace_rows: embed shape mismatch");
        Tensor<T> out = A;
        for (size_t r = 0; r < A.rows(); ++r)
            if (masked[r]) std::copy(E.data.begin(), E.data.end(), out.row_ptr(r));
        return push(std::move(out), rg(a) || rg(emb),
                    [a, emb, masked = std::move(masked)](Graph& g, Var y) {
            const auto& gy = g.grad(y);
            if (g.rg(a)) {
                Tensor<T> ga = gy;
                for (size_t r = 0; r < ga.rows(); ++r)
                    if (masked[r]) std::fill(ga.row_ptr(r), ga.row_ptr(r) + ga.cols(), T(0));
                ga.shape = g.val(a).shape;
                g.accum(a, ga);
            }
            if (g.rg(emb)) {
                Tensor<T> ge;
                ge.shape = g.val(emb).shape;
                ge.data.assign(g.val(emb).numel(), T(0));
                for (size_t r = 0; r < gy.rows(); ++r)
                    if (masked[r])
                        for (size_t c = 0; c < gy.cols(); ++c) ge[c] += gy.at(r, c);
                g.accum(emb, ge);
            }
        });
    }

    // ---- normalization / softmax ----

    // Row-wise softmax with max subtraction. When sorted_sum is set the
    // denominator accumulates in ascending value order (bitwise permutation
    // equivariance across the reduced axis).
    Var softmax_rows(Var a, bool sorted_sum = false) {
        const auto& A = val(a);
        Tensor<T> out = A;
        std::vector<T> buf(A.cols());
        for (size_t r = 0; r < A.rows(); ++r) {
            T* row = out.row_ptr(r);
            T mx = row[0];
            for (size_t c = 1; c < A.cols(); ++c) mx = std::max(mx, row[c]);
            for (size_t c = 0; c < A.cols(); ++c) row[c] = std::exp(row[c] - mx);
            T denom;
            if (sorted_sum) {
                std::copy(row, row + A.cols(), buf.begin());
                denom = sum_value_sorted(buf.data(), A.cols());
            } else {
                denom = T(0);
                for (size_t c = 0; c < A.cols(); ++c) denom += row[c];
            }
            for (size_t c = 0; c < A.cols(); ++c) row[c] /= denom;
        }
        return push(std::move(out), rg(a), [a](Graph& g, Var y) {
            if (!g.rg(a)) return;
            const auto &gy = g.grad(y), &Y = g.val(y);
            Tensor<T> ga = gy;
            for (size_t r = 0; r < Y.rows(); ++r) {
                T dot = T(0);
                for (size_t c = 0; c < Y.cols(); ++c) dot += gy.at(r, c) * Y.at(r, c);
                for (size_t c = 0; c < Y.cols(); ++c)
                    ga.at(r, c) = Y.at(r, c) * (gy.at(r, c) - dot);
            }
            g.accum(a, ga);
        });
    }

    // Per row: y = gain .* (x - mean)/sqrt(pop_var + eps) + bias.
    Var layer_norm_rows(Var a, Var gain, Var bias, T eps) {
        const auto &A = val(a), &G = val(gain), &B = val(bias);
        require(G.cols() == A.cols() && G.rows() == 1, "layer_norm: gain shape mismatch");
        require(B.cols() == A.cols() && B.rows() == 1, "layer_norm: bias shape mismatch");
        const size_t C = A.cols();
        Tensor<T> out = A;
        Tensor<T> xhat = A;
        Tensor<T> inv_std({A.rows(), 1});
        for (size_t r = 0; r < A.rows(); ++r) {
            const T* x = A.row_ptr(r);
            T mu = T(0);
            for (size_t c = 0; c < C; ++c) mu += x[c];
            mu /= T(C);
            T var = T(0);
            for (size_t c = 0; c < C; ++c) var += (x[c] - mu) * (x[c] - mu);
            var /= T(C);
            const T is = T(1) / std::sqrt(var + eps);
            inv_std[r] = is;
            for (size_t c = 0; c < C; ++c) {
                xhat.at(r, c) = (x[c] - mu) * is;
                out.at(r, c) = G[c] * xhat.at(r, c) + B[c];
            }
        }
        return push(std::move(out), rg(a) || rg(gain) || rg(bias),
                    [a, gain, bias, xhat = std::move(xhat),
                     inv_std = std::move(inv_std)](Graph& g, Var y) {
            const auto& gy = g.grad(y);
            const size_t R = gy.rows(), C = gy.cols();
            if (g.rg(gain)) {
                Tensor<T> gg;
                gg.shape = g.val(gain).shape;
                gg.data.assign(C, T(0));
                for (size_t r = 0; r < R; ++r)
                    for (size_t c = 0; c < C; ++c) gg[c] += gy.at(r, c) * xhat.at(r, c);
                g.accum(gain, gg);
            }
            if (g.rg(bias)) {
                Tensor<T> gb;
                gb.shape = g.val(bias).shape;
                gb.data.assign(C, T(0));
                for (size_t r = 0; r < R; ++r)
                    for (size_t c = 0; c < C; ++c) gb[c] += gy.at(r, c);
                g.accum(bias, gb);
            }
            if (g.rg(a)) {
                const auto& G = g.val(gain);
                Tensor<T> ga = gy;
                for (size_t r = 0; r < R; ++r) {
                    T m1 = T(0), m2 = T(0);
                    for (size_t c = 0; c < C; ++c) {
                        const T dxh = gy.at(r, c) * G[c];
                        m1 += dxh;
                        m2 += dxh * xhat.at(r, c);
                    }
                    m1 /= T(C);
                    m2 /= T(C);
                    for (size_t c = 0; c < C; ++c) {
                        const T dxh = gy.at(r, c) * G[c];
                        ga.at(r, c) = (dxh - m1 - xhat.at(r, c) * m2) * inv_std[r];
                    }
                }
                ga.shape = g.val(a).shape;
                g.accum(a, ga);
            }
        });
    }

    // Per column: y[i,j] = a[i,j] / (sum_i a[i,j] + eps).
    Var normalize_cols(Var a, T eps) {
        const auto& A = val(a);
        Tensor<T> out = A;
        Tensor<T> denom({1, A.cols()});
        for (size_t c = 0; c < A.cols(); ++c) {
            T s = T(0);
            for (size_t r = 0; r < A.rows(); ++r) s += A.at(r, c);
            denom[c] = s + eps;
        }
        for (size_t r = 0; r < A.rows(); ++r)
            for (size_t c = 0; c < A.cols(); ++c) out.at(r, c) /= denom[c];
        return push(std::move(out), rg(a), [a, denom = std::move(denom)](Graph& g, Var y) {
            if (!g.rg(a)) return;
            const auto &gy = g.grad(y), &A = g.val(a);
            Tensor<T> ga = gy;
            for (size_t c = 0; c < A.cols(); ++c) {
                T dot = T(0);
                for (size_t r = 0; r < A.rows(); ++r) dot += gy.at(r, c) * A.at(r, c);
                const T d = denom[c];
                for (size_t r = 0; r < A.rows(); ++r)
                    ga.at(r, c) = gy.at(r, c) / d - dot / (d * d);
            }
            g.accum(a, ga);
        });
    }

    // y[n,:] = sum_k masks[n,k] * feats[k][n,:], accumulated value-sorted
    // across k. masks is NxK; each feats[k] is NxC.
    Var weighted_combine(Var masks, const std::vector<Var>& feats) {
        const auto& M = val(masks);
        require(feats.size() == M.cols(), "weighted_combine: slot count mismatch");
        const size_t N = M.rows();
        const size_t C = val(feats[0]).cols();
        bool needs = rg(masks);
        for (Var f : feats) {
            require(val(f).rows() == N && val(f).cols() == C,
                    "weighted_combine: feature shape mismatch");
            needs = needs || rg(f);
        }
        Tensor<T> out({N, C});
        std::vector<T> buf(feats.size());
        for (size_t n = 0; n < N; ++n)
            for (size_t c = 0; c < C; ++c) {
                for (size_t k = 0; k < feats.size(); ++k)
                    buf[k] = M.at(n, k) * val(feats[k]).at(n, c);
                out.at(n, c) = sum_value_sorted(buf.data(), buf.size());
            }
        return push(std::move(out), needs, [masks, feats](Graph& g, Var y) {
            const auto &gy = g.grad(y), &M = g.val(masks);
            const size_t N = M.rows(), C = gy.cols();
            if (g.rg(masks)) {
                Tensor<T> gm({N, feats.size()});
                for (size_t n = 0; n < N; ++n)
                    for (size_t k = 0; k < feats.size(); ++k) {
                        T s = T(0);
                        for (size_t c = 0; c < C; ++c) s += gy.at(n, c) * g.val(feats[k]).at(n, c);
                        gm.at(n, k) = s;
                    }
                g.accum(masks, gm);
            }
            for (size_t k = 0; k < feats.size(); ++k) {
                if (!g.rg(feats[k])) continue;
                Tensor<T> gf({N, C});
                for (size_t n = 0; n < N; ++n)
                    for (size_t c = 0; c < C; ++c) gf.at(n, c) = M.at(n, k) * gy.at(n, c);
                g.accum(feats[k], gf);
            }
        });
    }

    // Multi-head scaled dot-product attention over already-projected Q,K,V
    // (all SxD). Softmax rows and the attention-weighted sums accumulate in
    // value-sorted order so token permutations are bitwise-exact.
    Var attention_core(Var q, Var k, Var v, size_t heads) {
        const auto &Q = val(q), &K = val(k), &V = val(v);
        const size_t S = Q.rows(), D = Q.cols();
        require(K.rows() == S && V.rows() == S && K.cols() == D && V.cols() == D,
                "attention_core: shape mismatch");
        require(heads > 0 && D % heads == 0, "attention_core: heads must divide width");
        const size_t dh = D / heads;
        const T scl = T(1) / std::sqrt(static_cast<T>(dh));
        Tensor<T> out({S, D});
        std::vector<Tensor<T>> attn(heads, Tensor<T>({S, S}));
        std::vector<T> buf(S), tmp(S);
        for (size_t h = 0; h < heads; ++h) {
            const size_t off = h * dh;
            Tensor<T>& A = attn[h];
            for (size_t i = 0; i < S; ++i) {
                for (size_t j = 0; j < S; ++j) {
                    T s = T(0);
                    for (size_t c = 0; c < dh; ++c) s += Q.at(i, off + c) * K.at(j, off + c);
                    A.at(i, j) = s * scl;
                }
                T* row = A.row_ptr(i);
                T mx = row[0];
                for (size_t j = 1; j < S; ++j) mx = std::max(mx, row[j]);
                for (size_t j = 0; j < S; ++j) buf[j] = std::exp(row[j] - mx);
                std::copy(buf.begin(), buf.end(), tmp.begin());
                const T denom = sum_value_sorted(tmp.data(), S);
                for (size_t j = 0; j < S; ++j) row[j] = buf[j] / denom;
                for (size_t c = 0; c < dh; ++c) {
                    for (size_t j = 0; j < S; ++j) buf[j] = row[j] * V.at(j, off + c);
                    out.at(i, off + c) = sum_value_sorted(buf.data(), S);
                }
            }
        }
        return push(std::move(out), rg(q) || rg(k) || rg(v),
                    [q, k, v, heads, dh, scl, attn = std::move(attn)](Graph& g, Var y) {
            const auto& gy = g.grad(y);
            const auto &Q = g.val(q), &K = g.val(k), &V = g.val(v);
            const size_t S = Q.rows();
            Tensor<T> gq({S, Q.cols()}), gk({S, Q.cols()}), gv({S, Q.cols()});
            for (size_t h = 0; h < heads; ++h) {
                const size_t off = h * dh;
                const Tensor<T>& A = attn[h];
                Tensor<T> dA({S, S});
                for (size_t i = 0; i < S; ++i)
                    for (size_t j = 0; j < S; ++j) {
                        T s = T(0);
                        for (size_t c = 0; c < dh; ++c) s += gy.at(i, off + c) * V.at(j, off + c);
                        dA.at(i, j) = s;
                    }
                for (size_t j = 0; j < S; ++j)
                    for (size_t c = 0; c < dh; ++c) {
                        T s = T(0);
                        for (size_t i = 0; i < S; ++i) s += A.at(i, j) * gy.at(i, off + c);
                        gv.at(j, off + c) = s;
                    }
                for (size_t i = 0; i < S; ++i) {
                    T dot = T(0);
                    for (size_t j = 0; j < S; ++j) dot += dA.at(i, j) * A.at(i, j);
                    for (size_t j = 0; j < S; ++j) {
                        const T dS = A.at(i, j) * (dA.at(i, j) - dot) * scl;
                        for (size_t c = 0; c < dh; ++c) {
                            gq.at(i, off + c) += dS * K.at(j, off + c);
                            gk.at(j, off + c) += dS * Q.at(i, off + c);
                        }
                    }
                }
            }
            if (g.rg(q)) g.accum(q, gq);
            if (g.rg(k)) g.accum(k, gk);
            if (g.rg(v)) g.accum(v, gv);
        });
    }

    // ---- reductions ----

    Var mean_all(Var a) {
        const auto& A = val(a);
        T s = T(0);
        for (const T& x : A.data) s += x;
        Tensor<T> out({1, 1});
        out[0] = s / static_cast<T>(A.numel());
        return push(std::move(out), rg(a), [a](Graph& g, Var y) {
            if (!g.rg(a)) return;
            const T gy = g.grad(y)[0] / static_cast<T>(g.val(a).numel());
            Tensor<T> ga;
            ga.shape = g.val(a).shape;
            ga.data.assign(g.val(a).numel(), gy);
            g.accum(a, ga);
        });
    }

    // Mean of squared differences over all elements.
    Var mse(Var a, Var b) {
        const auto &A = val(a), &B = val(b);
        require(A.same_shape(B), "mse: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
        T s = T(0);
        for (size_t i = 0; i < A.numel(); ++i) {
            const T d = A[i] - B[i];
            s += d * d;
        }
        Tensor<T> out({1, 1});
        out[0] = s / static_cast<T>(A.numel());
        return push(std::move(out), rg(a) || rg(b), [a, b](Graph& g, Var y) {
            const T gy = g.grad(y)[0];
            const auto &A = g.val(a), &B = g.val(b);
            const T c = T(2) * gy / static_cast<T>(A.numel());
            if (g.rg(a)) {
                Tensor<T> ga;
                ga.shape = A.shape;
                ga.data.resize(A.numel());
                for (size_t i = 0; i < A.numel(); ++i) ga[i] = c * (A[i] - B[i]);
                g.accum(a, ga);
            }
            if (g.rg(b)) {
                Tensor<T> gb;
                gb.shape = B.shape;
                gb.data.resize(B.numel());
                for (size_t i = 0; i < B.numel(); ++i) gb[i] = c * (B[i] - A[i]);
                g.accum(b, gb);
            }
        });
    }

    // ---- backward ----

    void backward(Var loss) {
        require(nodes_[loss].val.numel() == 1, "backward: loss must be scalar");
        require(std::isfinite(static_cast<double>(nodes_[loss].val[0])),
                "backward: non-finite loss");
        Tensor<T> seed;
        seed.shape = nodes_[loss].val.shape;
        seed.data.assign(1, T(1));
        accum(loss, seed);
        for (Var i = loss; i >= 0; --i) {
            if (!nodes_[i].has_grad || !nodes_[i].back || !nodes_[i].requires_grad) continue;
            nodes_[i].back(*this, i);
        }
    }

 private:
    struct Node {
        Tensor<T> val;
        Tensor<T> grad;
        bool requires_grad = false;
        bool has_grad = false;
        BackFn back;
    };

    Var push(Tensor<T> v, bool requires_grad, BackFn back) {
        require(v.all_finite(), "kernel produced non-finite values");
        Node n;
        n.val = std::move(v);
        n.requires_grad = requires_grad;
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return static_cast<Var>(nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
    double relu_margin_ = std::numeric_limits<double>::infinity();
};

}  // namespace slotforge

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "pragmadse/tensor.hpp"

namespace pragmadse {

/// A named trainable tensor with its gradient accumulator.
struct Parameter {
    Tensor value;
    Tensor grad;
    std::string name;

    Parameter() = default;
    Parameter(Tensor v, std::string n) : value(std::move(v)), name(std::move(n)) {
        grad = Tensor(value.shape);
    }

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

/// Records a forward computation and replays it in reverse for gradients.
/// A tape is confined to one thread; independent tapes may run concurrently
/// over shared read-only Parameters. Parameter values are referenced, not
/// copied, so they must stay alive and unmodified while the tape is in use.
class Tape {
public:
    struct Var {
        std::size_t id = static_cast<std::size_t>(-1);
    };

    /// Constant input; no gradient is tracked for it.
    Var input(Tensor value) {
        Node n;
        n.owned = std::move(value);
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    /// Differentiable leaf bound to a Parameter. backward() accumulates
    /// d loss / d p into p.grad.
    Var param(Parameter& p) {
        Node n;
        n.ext = &p.value;
        n.needs_grad = true;
        n.bound = &p;
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    /// Read-only leaf referencing an external tensor (inference path).
    Var frozen(const Tensor& t) {
        Node n;
        n.ext = &t;
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    const Tensor& value(Var v) const { return nodes_[v.id].val(); }
    const Tensor& grad(Var v) const { return nodes_[v.id].grad; }

    // ---- elementwise / structural ops ------------------------------------

    Var add(Var a, Var b) {
        check_same_shape(value(a), value(b), "add");
        Tensor out = value(a);
        const Tensor& bv = value(b);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += bv.data[i];
        return binary(std::move(out), a, b, [this](Node& n, Var a, Var b) {
            accumulate(a, n.grad);
            accumulate(b, n.grad);
        });
    }

    Var sub(Var a, Var b) {
        check_same_shape(value(a), value(b), "sub");
        Tensor out = value(a);
        const Tensor& bv = value(b);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= bv.data[i];
        return binary(std::move(out), a, b, [this](Node& n, Var a, Var b) {
            accumulate(a, n.grad);
            Tensor neg = n.grad;
            for (double& v : neg.data) v = -v;
            accumulate(b, neg);
        });
    }

    Var mul(Var a, Var b) {
        check_same_shape(value(a), value(b), "mul");
        Tensor out = value(a);
        const Tensor& bv = value(b);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= bv.data[i];
        return binary(std::move(out), a, b, [this](Node& n, Var a, Var b) {
            Tensor ga = n.grad, gb = n.grad;
            const Tensor& av = value(a);
            const Tensor& bv2 = value(b);
            for (std::size_t i = 0; i < ga.numel(); ++i) {
                ga.data[i] *= bv2.data[i];
                gb.data[i] *= av.data[i];
            }
            accumulate(a, ga);
            accumulate(b, gb);
        });
    }

    Var scale(Var a, double c) {
        Tensor out = value(a);
        for (double& v : out.data) v *= c;
        return unary(std::move(out), a, [this, c](Node& n, Var a) {
            Tensor g = n.grad;
            for (double& v : g.data) v *= c;
            accumulate(a, g);
        });
    }

    Var matmul(Var a, Var b) {
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        if (av.cols() != bv.rows()) throw DataError("matmul: shape mismatch");
        Tensor out{{av.rows(), bv.cols()}};
        as_eigen(out).noalias() = as_eigen(av) * as_eigen(bv);
        return binary(std::move(out), a, b, [this](Node& n, Var a, Var b) {
            const Tensor& av2 = value(a);
            const Tensor& bv2 = value(b);
            Tensor ga{{av2.rows(), av2.cols()}};
            Tensor gb{{bv2.rows(), bv2.cols()}};
            as_eigen(ga).noalias() = as_eigen(n.grad) * as_eigen(bv2).transpose();
            as_eigen(gb).noalias() = as_eigen(av2).transpose() * as_eigen(n.grad);
            accumulate(a, ga);
            accumulate(b, gb);
        });
    }

    /// N x F plus a 1 x F bias broadcast over rows.
    Var add_row_bias(Var a, Var bias) {
        const Tensor& av = value(a);
        const Tensor& bv = value(bias);
        if (bv.rows() != 1 || bv.cols() != av.cols())
            throw DataError("add_row_bias: shape mismatch");
        Tensor out = av;
        for (std::size_t r = 0; r < out.rows(); ++r)
            for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += bv.at(0, c);
        return binary(std::move(out), a, bias, [this](Node& n, Var a, Var b) {
            accumulate(a, n.grad);
            Tensor gb{{1, n.grad.cols()}};
            for (std::size_t r = 0; r < n.grad.rows(); ++r)
                for (std::size_t c = 0; c < n.grad.cols(); ++c)
                    gb.at(0, c) += n.grad.at(r, c);
            accumulate(b, gb);
        });
    }

    Var concat_cols(const std::vector<Var>& vs) {
        if (vs.empty()) throw DataError("concat_cols: empty list");
        const std::size_t rows = value(vs[0]).rows();
        std::size_t cols = 0;
        for (Var v : vs) {
            if (value(v).rows() != rows) throw DataError("concat_cols: row mismatch");
            cols += value(v).cols();
        }
        Tensor out{{rows, cols}};
        std::size_t off = 0;
        for (Var v : vs) {
            const Tensor& t = value(v);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < t.cols(); ++c) out.at(r, off + c) = t.at(r, c);
            off += t.cols();
        }
        std::vector<Var> deps = vs;
        return push_op(std::move(out), deps, [this, deps](Node& n) {
            std::size_t off2 = 0;
            for (Var v : deps) {
                const Tensor& t = value(v);
                Tensor g(t.shape);
                for (std::size_t r = 0; r < t.rows(); ++r)
                    for (std::size_t c = 0; c < t.cols(); ++c)
                        g.at(r, c) = n.grad.at(r, off2 + c);
                accumulate(v, g);
                off2 += t.cols();
            }
        });
    }

    // ---- nonlinearities ---------------------------------------------------

    Var leaky_relu(Var a, double beta) {
        Tensor out = value(a);
        for (double& v : out.data) v = std::max(beta * v, v);
        return unary(std::move(out), a, [this, beta](Node& n, Var a) {
            Tensor g = n.grad;
            const Tensor& x = value(a);
            for (std::size_t i = 0; i < g.numel(); ++i)
                g.data[i] *= x.data[i] > 0.0 ? 1.0 : beta;
            accumulate(a, g);
        });
    }

    Var elu(Var a) {
        Tensor out = value(a);
        for (double& v : out.data) v = v > 0.0 ? v : std::expm1(v);
        return unary(std::move(out), a, [this](Node& n, Var a) {
            Tensor g = n.grad;
            const Tensor& x = value(a);
            for (std::size_t i = 0; i < g.numel(); ++i)
                if (x.data[i] <= 0.0) g.data[i] *= std::exp(x.data[i]);
            accumulate(a, g);
        });
    }

    Var sigmoid(Var a) {
        Tensor out = value(a);
        for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
        return unary(std::move(out), a, [this](Node& n, Var a) {
            Tensor g = n.grad;
            for (std::size_t i = 0; i < g.numel(); ++i) {
                const double s = n.value_ref().data[i];
                g.data[i] *= s * (1.0 - s);
            }
            accumulate(a, g);
        });
    }

    Var exp_(Var a) {
        Tensor out = value(a);
        for (double& v : out.data) v = std::exp(v);
        return unary(std::move(out), a, [this](Node& n, Var a) {
            Tensor g = n.grad;
            for (std::size_t i = 0; i < g.numel(); ++i)
                g.data[i] *= n.value_ref().data[i];
            accumulate(a, g);
        });
    }

    Var log_(Var a) {
        Tensor out = value(a);
        for (double& v : out.data) v = std::log(v);
        return unary(std::move(out), a, [this](Node& n, Var a) {
            Tensor g = n.grad;
            const Tensor& x = value(a);
            for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] /= x.data[i];
            accumulate(a, g);
        });
    }

    /// Elementwise maximum; ties route the gradient to the first argument.
    Var maximum(Var a, Var b) {
        check_same_shape(value(a), value(b), "maximum");
        Tensor out = value(a);
        const Tensor& bv = value(b);
        for (std::size_t i = 0; i < out.numel(); ++i)
            out.data[i] = std::max(out.data[i], bv.data[i]);
        return binary(std::move(out), a, b, [this](Node& n, Var a, Var b) {
            Tensor ga = n.grad, gb = n.grad;
            const Tensor& av = value(a);
            const Tensor& bv2 = value(b);
            for (std::size_t i = 0; i < ga.numel(); ++i) {
                if (av.data[i] >= bv2.data[i])
                    gb.data[i] = 0.0;
                else
                    ga.data[i] = 0.0;
            }
            accumulate(a, ga);
            accumulate(b, gb);
        });
    }

    // ---- gather / segment ops ----------------------------------------------

    /// out[e, :] = a[idx[e], :]
    Var gather_rows(Var a, std::vector<int> idx) {
        const Tensor& av = value(a);
        Tensor out{{idx.size(), av.cols()}};
        for (std::size_t e = 0; e < idx.size(); ++e)
            for (std::size_t c = 0; c < av.cols(); ++c)
                out.at(e, c) = av.at(static_cast<std::size_t>(idx[e]), c);
        return push_op(std::move(out), {a}, [this, a, idx](Node& n) {
            Tensor g(value(a).shape);
            for (std::size_t e = 0; e < idx.size(); ++e)
                for (std::size_t c = 0; c < g.cols(); ++c)
                    g.at(static_cast<std::size_t>(idx[e]), c) += n.grad.at(e, c);
            accumulate(a, g);
        });
    }

    /// out[s, :] = sum over rows e with seg[e] == s. Empty segments are zero.
    Var segment_sum(Var a, std::vector<int> seg, std::size_t n_segments) {
        const Tensor& av = value(a);
        if (seg.size() != av.rows()) throw DataError("segment_sum: id count mismatch");
        Tensor out{{n_segments, av.cols()}};
        for (std::size_t e = 0; e < seg.size(); ++e)
            for (std::size_t c = 0; c < av.cols(); ++c)
                out.at(static_cast<std::size_t>(seg[e]), c) += av.at(e, c);
        return push_op(std::move(out), {a}, [this, a, seg](Node& n) {
            Tensor g(value(a).shape);
            for (std::size_t e = 0; e < seg.size(); ++e)
                for (std::size_t c = 0; c < g.cols(); ++c)
                    g.at(e, c) = n.grad.at(static_cast<std::size_t>(seg[e]), c);
            accumulate(a, g);
        });
    }

    /// Per-segment max; empty segments are zero; gradient goes to the first
    /// occurrence of the maximum within the segment.
    Var segment_max(Var a, std::vector<int> seg, std::size_t n_segments) {
        const Tensor& av = value(a);
        if (seg.size() != av.rows()) throw DataError("segment_max: id count mismatch");
        Tensor out{{n_segments, av.cols()}};
        std::vector<int> argmax(n_segments * av.cols(), -1);
        for (std::size_t e = 0; e < seg.size(); ++e) {
            const auto s = static_cast<std::size_t>(seg[e]);
            for (std::size_t c = 0; c < av.cols(); ++c) {
                const std::size_t k = s * av.cols() + c;
                if (argmax[k] < 0 || av.at(e, c) > out.at(s, c)) {
                    out.at(s, c) = av.at(e, c);
                    argmax[k] = static_cast<int>(e);
                }
            }
        }
        const std::size_t cols = av.cols();
        return push_op(std::move(out), {a}, [this, a, argmax, cols](Node& n) {
            Tensor g(value(a).shape);
            for (std::size_t k = 0; k < argmax.size(); ++k) {
                if (argmax[k] < 0) continue;
                g.at(static_cast<std::size_t>(argmax[k]), k % cols) +=
                    n.grad.at(k / cols, k % cols);
            }
            accumulate(a, g);
        });
    }

    /// Softmax of an E x 1 score column within each segment; scores in one
    /// segment sum to 1. Segments with no rows simply contribute no rows.
    Var segment_softmax(Var scores, std::vector<int> seg, std::size_t n_segments) {
        const Tensor& sv = value(scores);
        if (sv.cols() != 1) throw DataError("segment_softmax: expects a column");
        if (seg.size() != sv.rows())
            throw DataError("segment_softmax: id count mismatch");
        std::vector<double> seg_max(n_segments,
                                    -std::numeric_limits<double>::infinity());
        for (std::size_t e = 0; e < seg.size(); ++e) {
            auto s = static_cast<std::size_t>(seg[e]);
            seg_max[s] = std::max(seg_max[s], sv.data[e]);
        }
        Tensor out{{sv.rows(), 1}};
        std::vector<double> denom(n_segments, 0.0);
        for (std::size_t e = 0; e < seg.size(); ++e) {
            auto s = static_cast<std::size_t>(seg[e]);
            out.data[e] = std::exp(sv.data[e] - seg_max[s]);
            denom[s] += out.data[e];
        }
        for (std::size_t e = 0; e < seg.size(); ++e)
            out.data[e] /= denom[static_cast<std::size_t>(seg[e])];
        return push_op(std::move(out), {scores},
                       [this, scores, seg, n_segments](Node& n) {
            // d score_e = alpha_e * (g_e - sum_{e' in seg(e)} alpha_e' g_e')
            std::vector<double> dot(n_segments, 0.0);
            const Tensor& alpha = n.value_ref();
            for (std::size_t e = 0; e < seg.size(); ++e)
                dot[static_cast<std::size_t>(seg[e])] += alpha.data[e] * n.grad.data[e];
            Tensor g{{seg.size(), 1}};
            for (std::size_t e = 0; e < seg.size(); ++e)
                g.data[e] = alpha.data[e] *
                            (n.grad.data[e] - dot[static_cast<std::size_t>(seg[e])]);
            accumulate(scores, g);
        });
    }

    // ---- reductions / row arithmetic ---------------------------------------

    /// Row-wise dot product of two E x F tensors -> E x 1.
    Var row_dot(Var a, Var b) {
        check_same_shape(value(a), value(b), "row_dot");
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        Tensor out{{av.rows(), 1}};
        for (std::size_t r = 0; r < av.rows(); ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < av.cols(); ++c) s += av.at(r, c) * bv.at(r, c);
            out.data[r] = s;
        }
        return binary(std::move(out), a, b, [this](Node& n, Var a, Var b) {
            const Tensor& av2 = value(a);
            const Tensor& bv2 = value(b);
            Tensor ga(av2.shape), gb(bv2.shape);
            for (std::size_t r = 0; r < av2.rows(); ++r)
                for (std::size_t c = 0; c < av2.cols(); ++c) {
                    ga.at(r, c) = n.grad.data[r] * bv2.at(r, c);
                    gb.at(r, c) = n.grad.data[r] * av2.at(r, c);
                }
            accumulate(a, ga);
            accumulate(b, gb);
        });
    }

    /// Scale row r of a (E x F) by coef[r] (E x 1).
    Var col_scale(Var a, Var coef) {
        const Tensor& av = value(a);
        const Tensor& cv = value(coef);
        if (cv.cols() != 1 || cv.rows() != av.rows())
            throw DataError("col_scale: coef must be rows x 1");
        Tensor out = av;
        for (std::size_t r = 0; r < out.rows(); ++r)
            for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) *= cv.data[r];
        return binary(std::move(out), a, coef, [this](Node& n, Var a, Var b) {
            const Tensor& av2 = value(a);
            const Tensor& cv2 = value(b);
            Tensor ga(av2.shape), gc{{cv2.rows(), 1}};
            for (std::size_t r = 0; r < av2.rows(); ++r) {
                double s = 0.0;
                for (std::size_t c = 0; c < av2.cols(); ++c) {
                    ga.at(r, c) = n.grad.at(r, c) * cv2.data[r];
                    s += n.grad.at(r, c) * av2.at(r, c);
                }
                gc.data[r] = s;
            }
            accumulate(a, ga);
            accumulate(b, gc);
        });
    }

    /// Sum all rows -> 1 x F. An empty input yields a zero row.
    Var sum_rows(Var a) {
        const Tensor& av = value(a);
        Tensor out{{1, av.cols()}};
        for (std::size_t r = 0; r < av.rows(); ++r)
            for (std::size_t c = 0; c < av.cols(); ++c) out.at(0, c) += av.at(r, c);
        return unary(std::move(out), a, [this](Node& n, Var a) {
            Tensor g(value(a).shape);
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c) g.at(r, c) = n.grad.at(0, c);
            accumulate(a, g);
        });
    }

    /// Sum of all entries -> 1 x 1.
    Var reduce_sum(Var a) {
        const Tensor& av = value(a);
        double s = 0.0;
        for (double v : av.data) s += v;
        return unary(Tensor::scalar(s), a, [this](Node& n, Var a) {
            Tensor g(value(a).shape);
            for (double& v : g.data) v = n.grad.data[0];
            accumulate(a, g);
        });
    }

    /// Numerically stable mean binary cross entropy on logits.
    /// targets is a constant column of 0/1 labels.
    Var bce_with_logits(Var logits, Tensor targets) {
        const Tensor& z = value(logits);
        check_same_shape(z, targets, "bce_with_logits");
        const double inv_n = 1.0 / static_cast<double>(z.numel());
        double loss = 0.0;
        for (std::size_t i = 0; i < z.numel(); ++i) {
            const double zi = z.data[i];
            loss += std::max(zi, 0.0) - zi * targets.data[i] +
                    std::log1p(std::exp(-std::abs(zi)));
        }
        return push_op(Tensor::scalar(loss * inv_n), {logits},
                       [this, logits, targets = std::move(targets), inv_n](Node& n) {
            const Tensor& z2 = value(logits);
            Tensor g(z2.shape);
            for (std::size_t i = 0; i < z2.numel(); ++i) {
                const double s = 1.0 / (1.0 + std::exp(-z2.data[i]));
                g.data[i] = (s - targets.data[i]) * inv_n * n.grad.data[0];
            }
            accumulate(logits, g);
        });
    }

    /// Reverse sweep from a scalar loss. Node gradients are recomputed from
    /// scratch on every call; Parameter gradients accumulate across calls.
    void backward(Var loss) {
        if (!value(loss).is_scalar()) throw DataError("backward: loss must be scalar");
        for (Node& n : nodes_) n.grad = Tensor(n.val().shape);
        nodes_[loss.id].grad.data[0] = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (n.pull && n.needs_grad) n.pull(n);
        }
        for (Node& n : nodes_) {
            if (n.bound) {
                for (std::size_t i = 0; i < n.grad.numel(); ++i)
                    n.bound->grad.data[i] += n.grad.data[i];
            }
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        const Tensor* ext = nullptr;
        Tensor owned;
        Tensor grad;
        bool needs_grad = false;
        Parameter* bound = nullptr;
        std::function<void(Node&)> pull;

        const Tensor& val() const { return ext ? *ext : owned; }
        const Tensor& value_ref() const { return val(); }
    };

    std::vector<Node> nodes_;

    void accumulate(Var v, const Tensor& g) {
        Node& n = nodes_[v.id];
        if (!n.needs_grad) return;
        for (std::size_t i = 0; i < g.numel(); ++i) n.grad.data[i] += g.data[i];
    }

    bool tracked(Var v) const { return nodes_[v.id].needs_grad; }

    Var push_op(Tensor value, const std::vector<Var>& deps,
                std::function<void(Node&)> pull) {
        bool any = false;
        for (Var d : deps) any = any || tracked(d);
        Node n;
        n.owned = std::move(value);
        n.needs_grad = any;
        if (any) n.pull = std::move(pull);
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    template <typename F>
    Var unary(Tensor value, Var a, F&& f) {
        return push_op(std::move(value), {a},
                       [f = std::forward<F>(f), a](Node& n) mutable { f(n, a); });
    }

    template <typename F>
    Var binary(Tensor value, Var a, Var b, F&& f) {
        return push_op(std::move(value), {a, b},
                       [f = std::forward<F>(f), a, b](Node& n) mutable { f(n, a, b); });
    }
};

using Var = Tape::Var;

/// x W + b convenience: x is N x Fin, w is Fin x Fout, b is 1 x Fout.
inline Var affine(Tape& t, Var x, Var w, Var b) {
    return t.add_row_bias(t.matmul(x, w), b);
}

}  // namespace pragmadse

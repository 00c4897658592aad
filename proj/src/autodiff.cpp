// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace toxprompt::detail {

Tape::Var Tape::push(Mat value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Tape::Var Tape::constant(Mat value) { return push(std::move(value), false); }

Tape::Var Tape::constant_ref(const Mat& value) {
    Node n;
    n.ref = &value;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Tape::Var Tape::parameter(Mat value) { return push(std::move(value), true); }

const Mat& Tape::value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.ref ? *n.ref : n.value;
}

Mat Tape::grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.size() == 0) return Mat::Zero(value(v).rows(), value(v).cols());
    return n.grad;
}

bool Tape::any_grad(std::initializer_list<Var> vars) const {
    for (Var v : vars) {
        if (nodes_[v.id].requires_grad) return true;
    }
    return false;
}

void Tape::accumulate(std::size_t id, const Mat& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
        n.grad = g;
    } else {
        n.grad += g;
    }
}

Tape::Var Tape::matmul(Var a, Var b) {
    const Var out = push(value(a) * value(b), any_grad({a, b}));
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backprop = [this, a, b, out] {
            const Mat& g = out_grad(out.id);
            if (nodes_[a.id].requires_grad) accumulate(a.id, g * value(b).transpose());
            if (nodes_[b.id].requires_grad) accumulate(b.id, value(a).transpose() * g);
        };
    }
    return out;
}

Tape::Var Tape::matmul_nt(Var a, Var b) {
    const Var out = push(value(a) * value(b).transpose(), any_grad({a, b}));
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backprop = [this, a, b, out] {
            const Mat& g = out_grad(out.id);
            if (nodes_[a.id].requires_grad) accumulate(a.id, g * value(b));
            if (nodes_[b.id].requires_grad) accumulate(b.id, g.transpose() * value(a));
        };
    }
    return out;
}

Tape::Var Tape::add(Var a, Var b) {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
        throw std::logic_error("Tape::add: shape mismatch");
    }
    const Var out = push(value(a) + value(b), any_grad({a, b}));
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backprop = [this, a, b, out] {
            const Mat& g = out_grad(out.id);
            accumulate(a.id, g);
            accumulate(b.id, g);
        };
    }
    return out;
}

Tape::Var Tape::add_row(Var a, Var row) {
    Mat v = value(a);
    v.rowwise() += value(row).row(0);
    const Var out = push(std::move(v), any_grad({a, row}));
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backprop = [this, a, row, out] {
            const Mat& g = out_grad(out.id);
            accumulate(a.id, g);
            if (nodes_[row.id].requires_grad) accumulate(row.id, g.colwise().sum());
        };
    }
    return out;
}

Tape::Var Tape::scale(Var a, double s) {
    const Var out = push(value(a) * s, any_grad({a}));
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backprop = [this, a, s, out] { accumulate(a.id, out_grad(out.id) * s); };
    }
    return out;
}

Tape::Var Tape::concat_rows(Var top, Var bottom) {
    const Mat& t = value(top);
    const Mat& b = value(bottom);
    if (t.cols() != b.cols()) throw std::logic_error("Tape::concat_rows: column mismatch");
    Mat v(t.rows() + b.rows(), t.cols());
    v.topRows(t.rows()) = t;
    v.bottomRows(b.rows()) = b;
    const Index split = t.rows();
    const Var out = push(std::move(v), any_grad({top, bottom}));
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backprop = [this, top, bottom, split, out] {
            const Mat& g = out_grad(out.id);
            accumulate(top.id, g.topRows(split));
            accumulate(bottom.id, g.bottomRows(g.rows() - split));
        };
    }
    return out;
}

Tape::Var Tape::concat_cols(std::span<const Var> parts) {
    Index rows = value(parts.front()).rows();
    Index cols = 0;
    bool rg = false;
    for (Var p : parts) {
        cols += value(p).cols();
        rg = rg || nodes_[p.id].requires_grad;
    }
    Mat v(rows, cols);
    Index at = 0;
    for (Var p : parts) {
        v.middleCols(at, value(p).cols()) = value(p);
        at += value(p).cols();
    }
    const Var out = push(std::move(v), rg);
    if (rg) {
        std::vector<Var> owned(parts.begin(), parts.end());
        nodes_[out.id].backprop = [this, owned, out] {
            const Mat& g = out_grad(out.id);
            Index c = 0;
            for (Var p : owned) {
                const Index w = value(p).cols();
                accumulate(p.id, g.middleCols(c, w));
                c += w;
            }
        };
    }
    return out;
}

Tape::Var Tape::row_block(Var a, Index row, Index rows) {
    const Var out = push(value(a).middleRows(row, rows), any_grad({a}));
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backprop = [this, a, row, rows, out] {
            Mat g = Mat::Zero(value(a).rows(), value(a).cols());
            g.middleRows(row, rows) = out_grad(out.id);
            accumulate(a.id, g);
        };
    }
    return out;
}

Tape::Var Tape::col_block(Var a, Index col, Index cols) {
    const Var out = push(value(a).middleCols(col, cols), any_grad({a}));
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backprop = [this, a, col, cols, out] {
            Mat g = Mat::Zero(value(a).rows(), value(a).cols());
            g.middleCols(col, cols) = out_grad(out.id);
            accumulate(a.id, g);
        };
    }
    return out;
}

Tape::Var Tape::tanh(Var a) {
    const Var out = push(value(a).array().tanh().matrix(), any_grad({a}));
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backprop = [this, a, out] {
            const Mat& y = value(out);
            accumulate(a.id, (out_grad(out.id).array() * (1.0 - y.array().square())).matrix());
        };
    }
    return out;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tape::Var Tape::gelu(Var a) {
    const Mat& x = value(a);
    Mat y(x.rows(), x.cols());
    for (Index i = 0; i < x.size(); ++i) {
        const double v = x.data()[i];
        y.data()[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
    }
    const Var out = push(std::move(y), any_grad({a}));
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backprop = [this, a, out] {
            const Mat& x = value(a);
            const Mat& g = out_grad(out.id);
            Mat dx(x.rows(), x.cols());
            for (Index i = 0; i < x.size(); ++i) {
                const double v = x.data()[i];
                const double u = kGeluC * (v + kGeluA * v * v * v);
                const double t = std::tanh(u);
                const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
                dx.data()[i] = g.data()[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
            }
            accumulate(a.id, dx);
        };
    }
    return out;
}

Tape::Var Tape::softmax_rows(Var a, const Mat* mask) {
    Mat s = value(a);
    if (mask) s += *mask;
    for (Index r = 0; r < s.rows(); ++r) {
        const double m = s.row(r).maxCoeff();
        if (!std::isfinite(m)) throw std::logic_error("Tape::softmax_rows: fully masked row");
        s.row(r) = (s.row(r).array() - m).exp().matrix();
        s.row(r) /= s.row(r).sum();
    }
    const Var out = push(std::move(s), any_grad({a}));
    if (nodes_[out.id].requires_grad) {
        nodes_[out.id].backprop = [this, a, out] {
            const Mat& p = value(out);
            const Mat& g = out_grad(out.id);
            const Eigen::VectorXd dot = (g.array() * p.array()).rowwise().sum();
            Mat dx = p.array() * (g.colwise() - dot).array();
            accumulate(a.id, dx);
        };
    }
    return out;
}

Tape::Var Tape::nll_sum(Var logits, std::span<const int> targets, Mat* log_probs_out) {
    const Mat& z = value(logits);
    if (static_cast<std::size_t>(z.rows()) != targets.size()) {
        throw std::logic_error("Tape::nll_sum: target count mismatch");
    }
    Mat lp(z.rows(), z.cols());
    double loss = 0.0;
    for (Index r = 0; r < z.rows(); ++r) {
        const double m = z.row(r).maxCoeff();
        const double lse = m + std::log((z.row(r).array() - m).exp().sum());
        lp.row(r) = z.row(r).array() - lse;
        loss -= lp(r, targets[static_cast<std::size_t>(r)]);
    }
    Mat v(1, 1);
    v(0, 0) = loss;
    const Var out = push(std::move(v), any_grad({logits}));
    if (nodes_[out.id].requires_grad) {
        std::vector<int> tgt(targets.begin(), targets.end());
        nodes_[out.id].backprop = [this, logits, lp, tgt, out] {
            const double g = out_grad(out.id)(0, 0);
            Mat d = lp.array().exp();
            for (std::size_t r = 0; r < tgt.size(); ++r) d(static_cast<Index>(r), tgt[r]) -= 1.0;
            accumulate(logits.id, d * g);
        };
    }
    if (log_probs_out) *log_probs_out = std::move(lp);
    return out;
}

void Tape::backward(Var root) {
    Node& r = nodes_[root.id];
    if (r.value.size() != 1) throw std::logic_error("Tape::backward: root must be scalar");
    if (!r.requires_grad) return;
    r.grad = Mat::Constant(1, 1, 1.0);
    for (std::size_t i = root.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.requires_grad && n.backprop && n.grad.size() != 0) n.backprop();
    }
}

}  // namespace toxprompt::detail

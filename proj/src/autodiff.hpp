// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace toxprompt::detail {

using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Minimal reverse-mode autodiff over dense matrices.
///
/// Only `parameter` leaves (and nodes computed from them) carry gradients;
/// `constant` / `constant_ref` nodes are frozen inputs.
class Tape {
public:
    struct Var {
        std::size_t id = 0;
    };

    Var constant(Mat value);
    /// Frozen input that aliases `value`; it must outlive the tape.
    Var constant_ref(const Mat& value);
    Var parameter(Mat value);

    const Mat& value(Var v) const;
    /// Accumulated gradient (zeros when the node received none).
    Mat grad(Var v) const;
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

    Var matmul(Var a, Var b);
    /// a * b^T
    Var matmul_nt(Var a, Var b);
    Var add(Var a, Var b);
    /// Adds a 1 x n row to every row of a.
    Var add_row(Var a, Var row);
    Var scale(Var a, double s);
    Var concat_rows(Var top, Var bottom);
    Var concat_cols(std::span<const Var> parts);
    Var row_block(Var a, Index row, Index rows);
    Var col_block(Var a, Index col, Index cols);
    Var tanh(Var a);
    Var gelu(Var a);
    /// Row softmax of a + mask; mask entries are 0 or -inf. Fully masked rows are not allowed.
    Var softmax_rows(Var a, const Mat* mask = nullptr);
    /// Sum over rows of -log_softmax(logits)[row, targets[row]]. Returns a 1 x 1 node.
    Var nll_sum(Var logits, std::span<const int> targets, Mat* log_probs_out = nullptr);

    void backward(Var root);

private:
    struct Node {
        Mat value;
        const Mat* ref = nullptr;
        Mat grad;
        bool requires_grad = false;
        std::function<void()> backprop;
    };

    Var push(Mat value, bool requires_grad);
    void accumulate(std::size_t id, const Mat& g);
    bool any_grad(std::initializer_list<Var> vars) const;
    const Mat& out_grad(std::size_t id) const { return nodes_[id].grad; }

    std::vector<Node> nodes_;
};

}  // namespace toxprompt::detail

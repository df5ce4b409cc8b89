#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "tppt/tensor.hpp"

namespace tppt {

// Reverse-mode autodiff over an explicitly recorded primitive sequence. Every
// op appends one node; backward() sweeps the record once in reverse and
// accumulates gradients additively at fan-out points. Parameter leaves add
// their accumulated gradient into Parameter::grad at the end of the sweep.
class Tape {
public:
    // Leaves.
    int constant(Tensor value);
    int param(Parameter& p);

    // Row gather: out[i] = table[ids[i]]; result shape is lead_shape + {C}.
    int lookup(int table, std::vector<std::int32_t> ids, std::vector<std::int64_t> lead_shape);

    int add(int a, int b);                       // same shape
    int add_inplace3(int a, int b, int c);       // a + b + c, same shape
    int add_rowbcast(int x, Tensor broadcast);   // x + tiled constant (trailing dims match)
    int scale(int x, double factor);

    // y = x*W [+ b]; x is treated as (rows, in), W is (in, out), b is (out).
    int linear(int x, int w, int b = -1);

    int layer_norm(int x, int gain, int bias, double eps = 1e-5);
    int silu(int x);
    int softmax(int x); // over the last dimension

    // Scaled dot-product attention. q is (B, Tq, C) with `heads` query heads
    // of width C/heads. k and v are either (B, Tk, Ck) or (Tk, Ck) shared
    // across the batch, with Ck = C (per-head keys) or C/heads (one shared
    // key/value head, the multi-query form).
    int sdpa(int q, int k, int v, int heads);

    // Zeroes masked rows: out[i] = mask[i] * x[i] row-wise.
    int mask_rows(int x, std::vector<double> mask);

    // Rows come in consecutive groups of group_len; each output row is the
    // mean over the group's unmasked rows (zero when the group is empty).
    int group_mean(int x, std::vector<double> mask, std::int64_t group_len);

    // Stacks rank-2 nodes of identical shape (S, C) into (B, S, C).
    int stack_rows(const std::vector<int>& parts);

    // -sum_i w[i] * max(log probs[i, target[i]], -30); scalar result.
    int cross_entropy_sum(int probs, std::vector<std::int32_t> targets, std::vector<double> weights);

    // sum_i coeffs[i] * x[i]; scalar result.
    int weighted_sum(int x, std::vector<double> coeffs);

    void backward(int node);

    // References stay valid for the tape's lifetime (nodes live in a deque).
    const Tensor& value(int node) const { return nodes_[static_cast<std::size_t>(node)].value; }
    const Tensor& grad(int node) const { return nodes_[static_cast<std::size_t>(node)].grad; }
    std::size_t size() const { return nodes_.size(); }

    static constexpr double kLogClamp = -30.0;

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&)> back; // empty for constants
    };

    int push(Tensor value, std::function<void(Tape&)> back);
    Tensor& grad_ref(int node) { return nodes_[static_cast<std::size_t>(node)].grad; }

    std::deque<Node> nodes_;
};

} // namespace tppt

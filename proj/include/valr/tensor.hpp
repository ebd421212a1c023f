#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "valr/util.hpp"

namespace valr {

class Tape;

// Dense row-major f64 tensor. The buffer is shared and treated as immutable
// once the constructing op returns, so tensors are cheap to copy and safe to
// capture in backward closures or share across threads. `node` ties a tensor
// to its gradient slot on the active tape; -1 marks a constant.
struct Tensor {
    std::vector<int> shape;
    std::shared_ptr<std::vector<double>> store;
    int node = -1;

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double v);
    static Tensor from(std::vector<int> shape, std::vector<double> data);
    static Tensor scalar(double v);

    int64_t size() const;
    bool defined() const { return store != nullptr; }
    int rows() const;  // 2-D only
    int cols() const;

    const double* data() const { return store->data(); }
    // Only valid while the constructing op is still filling the buffer.
    double* mut() { return store->data(); }

    double at(int i) const { return (*store)[size_t(i)]; }
    double at(int r, int c) const { return (*store)[size_t(r) * cols() + c]; }
    double item() const;

    Tensor detached() const;   // same buffer, node = -1
    Tensor deep_copy() const;  // fresh buffer, node = -1
};

using BackwardFn = std::function<void(Tape&, const std::vector<double>& out_grad)>;

// Reverse-mode tape. Nodes are appended in execution order; backward walks
// them in strict reverse insertion order. One tape per training step, never
// shared across threads.
class Tape {
public:
    int leaf(int64_t size);
    int push(const char* tag, int64_t size, std::vector<int> inputs, BackwardFn bwd);

    // Seeds d(root)/d(root) = seed and propagates. root must be a scalar node.
    void backward(int root, double seed = 1.0);

    // Gradient buffer for a node, allocating (zero-filled) on first touch.
    std::vector<double>& grad_buf(int node);
    // Gradient after backward; fails if the node never received one.
    const std::vector<double>& grad(int node) const;
    bool has_grad(int node) const;

    size_t node_count() const { return nodes_.size(); }
    const char* tag(int node) const { return nodes_[size_t(node)].tag; }
    const std::vector<int>& inputs(int node) const { return nodes_[size_t(node)].inputs; }

private:
    struct Node {
        const char* tag;
        int64_t size;
        std::vector<int> inputs;
        BackwardFn bwd;
    };
    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
};

// ---- ops -------------------------------------------------------------
// Every op computes eagerly and registers a tape node when any input is on
// the tape. Gradients of all of these are covered by the finite-difference
// suite in the tests.

Tensor matmul(Tape& t, const Tensor& a, const Tensor& b);
Tensor add(Tape& t, const Tensor& a, const Tensor& b);
Tensor sub(Tape& t, const Tensor& a, const Tensor& b);
Tensor mul(Tape& t, const Tensor& a, const Tensor& b);
Tensor scale(Tape& t, const Tensor& a, double alpha);
// a[m x n] + row[n] broadcast over rows
Tensor add_row_broadcast(Tape& t, const Tensor& a, const Tensor& row);
Tensor transpose(Tape& t, const Tensor& a);
Tensor reshape(Tape& t, const Tensor& a, std::vector<int> shape);
Tensor slice_rows(Tape& t, const Tensor& a, int r0, int r1);
Tensor slice_cols(Tape& t, const Tensor& a, int c0, int c1);
Tensor concat_rows(Tape& t, const std::vector<Tensor>& parts);
Tensor concat_cols(Tape& t, const std::vector<Tensor>& parts);
// out[i,:] = a[idx[i],:]; backward scatter-adds. Embedding lookup and the
// nearest-neighbor upsample are both this gather.
Tensor gather_rows(Tape& t, const Tensor& a, const std::vector<int>& idx);
Tensor sum_all(Tape& t, const Tensor& a);
Tensor mean_all(Tape& t, const Tensor& a);
Tensor softmax_rows(Tape& t, const Tensor& a);
Tensor gelu(Tape& t, const Tensor& a);
Tensor layer_norm(Tape& t, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor embed_rows(Tape& t, const Tensor& table, const std::vector<int>& ids);

// mean negative log-likelihood over masked-in positions
Tensor cross_entropy(Tape& t, const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<uint8_t>& mask);

// cosine similarity of two vectors; errors on a norm below eps
Tensor cosine_sim(Tape& t, const Tensor& u, const Tensor& v, double eps = 1e-12);

// Per-row cosine of a[p,:] against b[p,:] -> [P]. Rows whose norm product
// falls below eps yield similarity 0 with zero gradient instead of NaN.
Tensor cosine_rows_floored(Tape& t, const Tensor& a, const Tensor& b, double eps = 1e-12);

// Multi-head attention scores: q[m x d], k[t x d] -> s[(m*heads) x t] with
// s[i*heads+h, j] = scale * <q[i, head h], k[j, head h]>. Row layout keeps
// softmax_rows directly applicable per (position, head).
Tensor attn_scores(Tape& t, const Tensor& q, const Tensor& k, int heads, double scale);

// p[(m*heads) x t] probabilities, v[t x d] -> o[m x d], per-head mixing.
Tensor attn_mix(Tape& t, const Tensor& p, const Tensor& v, int heads);

// Additive causal mask for a chunked attention row block: query rows cover
// absolute positions [p0, p0+m), keys cover [0, t_total). Blocked entries get
// -1e30 so they underflow to exactly zero probability after softmax.
Tensor causal_mask(int p0, int m, int t_total, int heads);

}  // namespace valr

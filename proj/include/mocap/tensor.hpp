#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mocap/common.hpp"

namespace mocap::num {

// 64-byte-aligned, move-only value storage. A fixed alignment class keeps
// Eigen's vectorized kernels on identical code paths for every allocation,
// which the bit-determinism contract depends on.
class Buffer {
   public:
    Buffer() = default;
    explicit Buffer(size_t n);
    Buffer(Buffer&& o) noexcept : p_(o.p_), n_(o.n_) { o.p_ = nullptr, o.n_ = 0; }
    Buffer& operator=(Buffer&& o) noexcept;
    Buffer(const Buffer&) = delete;
    Buffer& operator=(const Buffer&) = delete;
    ~Buffer();

    double* data() { return p_; }
    const double* data() const { return p_; }
    size_t size() const { return n_; }
    bool empty() const { return n_ == 0; }
    double& operator[](size_t i) { return p_[i]; }
    double operator[](size_t i) const { return p_[i]; }
    double* begin() { return p_; }
    double* end() { return p_ + n_; }
    const double* begin() const { return p_; }
    const double* end() const { return p_ + n_; }

   private:
    double* p_ = nullptr;
    size_t n_ = 0;
};

// Dense 64-bit float tensor with reverse-mode gradients. A Tensor is a cheap
// handle onto a graph node; ops build the graph, backward() walks it. The op
// set is exactly what a small transformer needs, nothing more.
class Tensor {
   public:
    struct Node {
        std::vector<int> shape;
        Buffer val;
        Buffer grad;  // allocated on first use, zero-filled
        bool is_param = false;     // leaf whose grad persists across backward calls
        bool needs_grad = false;   // true if this node or an ancestor is a param
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backprop;  // pulls this->grad into parents
        Node() = default;
        ~Node();  // recycles val/grad into the buffer pool
        Node(const Node&) = delete;
        Node& operator=(const Node&) = delete;
        void ensure_grad();
    };

    Tensor() = default;

    static Tensor constant(std::vector<int> shape, std::vector<double> values);
    static Tensor param(std::vector<int> shape, std::vector<double> values);
    static Tensor zeros(std::vector<int> shape, bool is_param = false);
    static Tensor scalar(double v);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int64_t size() const { return static_cast<int64_t>(node_->val.size()); }
    int rows() const;  // product of all but the last extent (1 for rank 0/1)
    int cols() const;  // last extent
    bool is_param() const { return node_->is_param; }
    bool needs_grad() const { return node_->needs_grad; }

    std::span<const double> values() const { return {node_->val.data(), node_->val.size()}; }
    // in-place updates (optimizer)
    std::span<double> data() { return {node_->val.data(), node_->val.size()}; }
    std::span<const double> grad() const;  // zeros when never written
    double item() const;                             // value of a 1-element tensor
    void zero_grad();

    std::shared_ptr<Node> node() const { return node_; }

   private:
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
    std::shared_ptr<Node> node_;

    friend Tensor make_op(std::vector<int> shape, Buffer val, std::vector<Tensor> parents,
                          std::function<void(Node&)> bp);
};

// --- forward ops ------------------------------------------------------------

// c = op_a(a) * op_b(b), rank-2 only. Transpose flags avoid materialized copies.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

// Elementwise; b may also be a row vector [1 x n] (or rank-1 [n]) broadcast
// over the rows of a.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);

// Row-wise over the last dimension.
Tensor softmax(const Tensor& a);
// Normalizes each row to zero mean / unit variance; affine terms are the
// caller's business (separate mul/add with parameter tensors).
Tensor layer_norm(const Tensor& a, double eps = 1e-5);

Tensor gelu(const Tensor& a);  // exact erf form

// Seeded inverted dropout; identical seed gives an identical mask. Evaluation
// mode simply skips the call.
Tensor dropout(const Tensor& a, double rate, uint64_t seed);

// axis 0 stacks rows, axis 1 stacks columns (all operands rank 2).
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int begin, int end);

// out.row(k) = a.row(row_ids[k]); rows may repeat (grads accumulate).
Tensor gather_rows(const Tensor& a, const std::vector<int>& row_ids);

Tensor sum(const Tensor& a);  // reduce to a 1-element tensor

// Fused kernels for the transformer hot path; semantically compositions of
// the primitive ops above, with far fewer graph nodes and buffers.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // x*w + b
Tensor layer_norm_affine(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5);
// Per-head scaled dot-product attention over column-split heads; optional
// seeded dropout on the attention probabilities. When `groups` is given,
// rows are split into consecutive independent blocks (a batch of windows in
// one graph) and attention never crosses a block boundary.
Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                           double dropout_rate = 0.0, uint64_t seed = 0,
                           const std::vector<int>& groups = {});

// d(loss)/d(x) for every parameter x reachable from loss. Loss must be a
// 1-element tensor produced from recorded ops. Parameter grads accumulate
// across calls until zero_grad().
void backward(const Tensor& loss);

namespace detail {
// Thread-local recycling of value/grad buffers; graphs are rebuilt every
// step with identical shapes, so exact-size reuse removes nearly all
// allocation traffic.
Buffer pool_get(size_t n);
Buffer pool_get_zero(size_t n);
void pool_put(Buffer&& v);
}  // namespace detail

}  // namespace mocap::num

#include "mocap/tensor.hpp"

#include <Eigen/Dense>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
namespace {
// Large Eigen temporaries otherwise cross glibc's mmap threshold and pay a
// page-fault round trip on every training step.
const bool malloc_tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 64 << 20);
    return true;
}();
}  // namespace
#endif

namespace mocap::num {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

Buffer::Buffer(size_t n) : n_(n) {
    if (n) p_ = static_cast<double*>(::operator new(n * sizeof(double), std::align_val_t(64)));
}

Buffer& Buffer::operator=(Buffer&& o) noexcept {
    if (this != &o) {
        this->~Buffer();
        p_ = o.p_;
        n_ = o.n_;
        o.p_ = nullptr;
        o.n_ = 0;
    }
    return *this;
}

Buffer::~Buffer() {
    if (p_) ::operator delete(p_, std::align_val_t(64));
    p_ = nullptr;
    n_ = 0;
}

namespace detail {

namespace {
struct BufferPool {
    std::unordered_map<size_t, std::vector<Buffer>> buckets;
    size_t held = 0;
    static constexpr size_t kMaxHeld = 64ull << 20;  // doubles, ~512 MB cap
};
thread_local BufferPool tl_pool;
}  // namespace

Buffer pool_get(size_t n) {
    auto it = tl_pool.buckets.find(n);
    if (it != tl_pool.buckets.end() && !it->second.empty()) {
        Buffer v = std::move(it->second.back());
        it->second.pop_back();
        tl_pool.held -= n;
        return v;  // stale contents; every op writes its output fully
    }
    return Buffer(n);
}

Buffer pool_get_zero(size_t n) {
    Buffer v = pool_get(n);
    std::fill(v.begin(), v.end(), 0.0);
    return v;
}

void pool_put(Buffer&& v) {
    const size_t n = v.size();
    if (n < 64 || tl_pool.held + n > BufferPool::kMaxHeld) return;
    tl_pool.held += n;
    tl_pool.buckets[n].push_back(std::move(v));
}

}  // namespace detail

namespace {

// shared scratch buffer that returns to the pool when the last node using it
// dies
struct Saved {
    Buffer v;
    explicit Saved(Buffer&& src) : v(std::move(src)) {}
    ~Saved() { detail::pool_put(std::move(v)); }
    double* data() { return v.data(); }
};

}  // namespace

namespace {

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); i++) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.shape().size() != 2)
        throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
}

CMapMat mat_of(const Tensor::Node& n) {
    int cols = n.shape.empty() ? 1 : n.shape.back();
    int rows = static_cast<int>(n.val.size()) / std::max(cols, 1);
    return CMapMat(n.val.data(), rows, cols);
}

MapMat grad_of(Tensor::Node& n) {
    n.ensure_grad();
    int cols = n.shape.empty() ? 1 : n.shape.back();
    int rows = static_cast<int>(n.grad.size()) / std::max(cols, 1);
    return MapMat(n.grad.data(), rows, cols);
}

}  // namespace

Tensor::Node::~Node() {
    detail::pool_put(std::move(val));
    detail::pool_put(std::move(grad));
}

void Tensor::Node::ensure_grad() {
    if (grad.size() != val.size()) grad = detail::pool_get_zero(val.size());
}

Tensor make_op(std::vector<int> shape, Buffer val, std::vector<Tensor> parents,
               std::function<void(Tensor::Node&)> bp) {
    auto n = std::make_shared<Tensor::Node>();
    n->shape = std::move(shape);
    n->val = std::move(val);
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.needs_grad();
    n->needs_grad = needs;
    if (needs) {
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backprop = std::move(bp);
    }
    return Tensor(std::move(n));
}

Tensor Tensor::constant(std::vector<int> shape, std::vector<double> values) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
        throw DimensionError("tensor: " + shape_str(shape) + " does not hold " +
                             std::to_string(values.size()) + " values");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->val = detail::pool_get(values.size());
    std::copy(values.begin(), values.end(), n->val.begin());
    return Tensor(std::move(n));
}

Tensor Tensor::param(std::vector<int> shape, std::vector<double> values) {
    Tensor t = constant(std::move(shape), std::move(values));
    t.node_->is_param = true;
    t.node_->needs_grad = true;
    return t;
}

Tensor Tensor::zeros(std::vector<int> shape, bool is_param) {
    auto n = std::make_shared<Node>();
    n->val = detail::pool_get_zero(shape_numel(shape));
    n->shape = std::move(shape);
    n->is_param = is_param;
    n->needs_grad = is_param;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return constant({1}, {v}); }

int Tensor::cols() const { return node_->shape.empty() ? 1 : node_->shape.back(); }

int Tensor::rows() const {
    int c = cols();
    return c == 0 ? 0 : static_cast<int>(size() / c);
}

std::span<const double> Tensor::grad() const {
    node_->ensure_grad();
    return {node_->grad.data(), node_->grad.size()};
}

double Tensor::item() const {
    if (size() != 1) throw ContractError("item: tensor has " + std::to_string(size()) + " values");
    return node_->val[0];
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

// --- matmul -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const int am = trans_a ? a.shape()[1] : a.shape()[0];
    const int ak = trans_a ? a.shape()[0] : a.shape()[1];
    const int bk = trans_b ? b.shape()[1] : b.shape()[0];
    const int bn = trans_b ? b.shape()[0] : b.shape()[1];
    if (ak != bk)
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                             (trans_a ? "^T" : "") + " x " + shape_str(b.shape()) +
                             (trans_b ? "^T" : ""));

    Buffer out = detail::pool_get(static_cast<size_t>(am) * bn);
    {
        CMapMat A(a.values().data(), a.shape()[0], a.shape()[1]);
        CMapMat B(b.values().data(), b.shape()[0], b.shape()[1]);
        MapMat C(out.data(), am, bn);
        if (!trans_a && !trans_b) C.noalias() = A * B;
        else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
        else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
        else C.noalias() = A.transpose() * B.transpose();
    }

    return make_op({am, bn}, std::move(out), {a, b}, [trans_a, trans_b](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        CMapMat A = mat_of(pa), B = mat_of(pb);
        CMapMat G(n.grad.data(), n.shape[0], n.shape[1]);
        MapMat dA = grad_of(pa), dB = grad_of(pb);
        if (!trans_a && !trans_b) {
            dA.noalias() += G * B.transpose();
            dB.noalias() += A.transpose() * G;
        } else if (trans_a && !trans_b) {
            dA.noalias() += B * G.transpose();
            dB.noalias() += A * G;
        } else if (!trans_a && trans_b) {
            dA.noalias() += G * B;
            dB.noalias() += G.transpose() * A;
        } else {
            dA.noalias() += B.transpose() * G.transpose();
            dB.noalias() += G.transpose() * A.transpose();
        }
    });
}

// --- elementwise with row broadcast ------------------------------------------

namespace {

// b broadcasts over a's rows when it is [1,n] or [n] with n == a.cols.
bool broadcast_compatible(const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return false;  // plain elementwise
    return b.size() == a.cols();
}

void require_ew_shapes(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return;
    if (b.size() == a.cols() && b.rows() == 1) return;
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_ew_shapes(a, b, "add");
    const bool bcast = broadcast_compatible(a, b);
    Buffer out = detail::pool_get(a.size());
    std::copy(a.values().begin(), a.values().end(), out.begin());
    const int c = a.cols();
    if (bcast) {
        for (int64_t i = 0; i < a.size(); i++) out[i] += b.values()[i % c];
    } else {
        for (int64_t i = 0; i < a.size(); i++) out[i] += b.values()[i];
    }
    return make_op(a.shape(), std::move(out), {a, b}, [bcast, c](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        pa.ensure_grad();
        pb.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); i++) pa.grad[i] += n.grad[i];
        if (bcast) {
            for (size_t i = 0; i < n.grad.size(); i++) pb.grad[i % c] += n.grad[i];
        } else {
            for (size_t i = 0; i < n.grad.size(); i++) pb.grad[i] += n.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_ew_shapes(a, b, "mul");
    const bool bcast = broadcast_compatible(a, b);
    Buffer out = detail::pool_get(a.size());
    std::copy(a.values().begin(), a.values().end(), out.begin());
    const int c = a.cols();
    if (bcast) {
        for (int64_t i = 0; i < a.size(); i++) out[i] *= b.values()[i % c];
    } else {
        for (int64_t i = 0; i < a.size(); i++) out[i] *= b.values()[i];
    }
    return make_op(a.shape(), std::move(out), {a, b}, [bcast, c](Tensor::Node& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        pa.ensure_grad();
        pb.ensure_grad();
        if (bcast) {
            for (size_t i = 0; i < n.grad.size(); i++) {
                pa.grad[i] += n.grad[i] * pb.val[i % c];
                pb.grad[i % c] += n.grad[i] * pa.val[i];
            }
        } else {
            for (size_t i = 0; i < n.grad.size(); i++) {
                pa.grad[i] += n.grad[i] * pb.val[i];
                pb.grad[i] += n.grad[i] * pa.val[i];
            }
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    Buffer out = detail::pool_get(a.size());
    for (int64_t i = 0; i < a.size(); i++) out[i] = s * a.values()[i];
    return make_op(a.shape(), std::move(out), {a}, [s](Tensor::Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); i++) p.grad[i] += s * n.grad[i];
    });
}

// --- row-wise nonlinearities --------------------------------------------------

Tensor softmax(const Tensor& a) {
    const int c = a.cols();
    if (c == 0) throw DimensionError("softmax: empty last dimension " + shape_str(a.shape()));
    const int r = a.rows();
    Buffer out = detail::pool_get(a.size());
    for (int i = 0; i < r; i++) {
        Eigen::Map<const Eigen::ArrayXd> x(a.values().data() + static_cast<int64_t>(i) * c, c);
        Eigen::Map<Eigen::ArrayXd> y(out.data() + static_cast<int64_t>(i) * c, c);
        y = (x - x.maxCoeff()).exp();
        y /= y.sum();
    }
    return make_op(a.shape(), std::move(out), {a}, [r, c](Tensor::Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (int i = 0; i < r; i++) {
            const double* y = n.val.data() + static_cast<int64_t>(i) * c;
            const double* g = n.grad.data() + static_cast<int64_t>(i) * c;
            double* dx = p.grad.data() + static_cast<int64_t>(i) * c;
            double dot = 0;
            for (int j = 0; j < c; j++) dot += g[j] * y[j];
            for (int j = 0; j < c; j++) dx[j] += y[j] * (g[j] - dot);
        }
    });
}

Tensor layer_norm(const Tensor& a, double eps) {
    const int c = a.cols();
    if (c == 0) throw DimensionError("layer_norm: empty last dimension " + shape_str(a.shape()));
    const int r = a.rows();
    Buffer out = detail::pool_get(a.size());
    std::vector<double> inv_sd(r);
    for (int i = 0; i < r; i++) {
        const double* x = a.values().data() + static_cast<int64_t>(i) * c;
        double* y = out.data() + static_cast<int64_t>(i) * c;
        double mu = 0;
        for (int j = 0; j < c; j++) mu += x[j];
        mu /= c;
        double var = 0;
        for (int j = 0; j < c; j++) var += (x[j] - mu) * (x[j] - mu);
        var /= c;
        inv_sd[i] = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < c; j++) y[j] = (x[j] - mu) * inv_sd[i];
    }
    return make_op(a.shape(), std::move(out), {a},
                   [r, c, inv_sd = std::move(inv_sd)](Tensor::Node& n) {
                       auto& p = *n.parents[0];
                       p.ensure_grad();
                       for (int i = 0; i < r; i++) {
                           const double* y = n.val.data() + static_cast<int64_t>(i) * c;
                           const double* g = n.grad.data() + static_cast<int64_t>(i) * c;
                           double* dx = p.grad.data() + static_cast<int64_t>(i) * c;
                           double g_mean = 0, gy_mean = 0;
                           for (int j = 0; j < c; j++) {
                               g_mean += g[j];
                               gy_mean += g[j] * y[j];
                           }
                           g_mean /= c;
                           gy_mean /= c;
                           for (int j = 0; j < c; j++)
                               dx[j] += inv_sd[i] * (g[j] - g_mean - y[j] * gy_mean);
                       }
                   });
}

namespace {

// tanh(z) through the vectorized double exp kernel; Eigen's double tanh is
// a scalar fallback
inline Eigen::ArrayXd tanh_via_exp(const Eigen::ArrayXd& z) {
    return 1.0 - 2.0 / ((2.0 * z).exp() + 1.0);
}

}  // namespace

Tensor gelu(const Tensor& a) {
    // tanh form; its exact derivative feeds the backward pass
    constexpr double k = 0.7978845608028653559;  // sqrt(2/pi)
    constexpr double c3 = 0.044715;
    Buffer out = detail::pool_get(a.size());
    {
        const int64_t total = a.size();
        const int chunks = total > 32768 ? 2 : 1;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (chunks > 1)
#endif
        for (int chunk = 0; chunk < chunks; chunk++) {
            const int64_t lo = total * chunk / chunks;
            const int64_t hi = total * (chunk + 1) / chunks;
            Eigen::Map<const Eigen::ArrayXd> x(a.values().data() + lo, hi - lo);
            Eigen::Map<Eigen::ArrayXd> y(out.data() + lo, hi - lo);
            y = 0.5 * x * (1.0 + tanh_via_exp(k * (x + c3 * x.cube())));
        }
    }
    return make_op(a.shape(), std::move(out), {a}, [](Tensor::Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        const int64_t total = static_cast<int64_t>(p.val.size());
        const int chunks = total > 32768 ? 2 : 1;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (chunks > 1)
#endif
        for (int chunk = 0; chunk < chunks; chunk++) {
            const int64_t lo = total * chunk / chunks;
            const int64_t hi = total * (chunk + 1) / chunks;
            Eigen::Map<const Eigen::ArrayXd> x(p.val.data() + lo, hi - lo);
            Eigen::Map<const Eigen::ArrayXd> g(n.grad.data() + lo, hi - lo);
            Eigen::Map<Eigen::ArrayXd> dx(p.grad.data() + lo, hi - lo);
            const Eigen::ArrayXd t =
                tanh_via_exp(0.7978845608028653559 * (x + 0.044715 * x.cube()));
            dx += g * (0.5 * (1.0 + t) +
                       0.5 * x * (1.0 - t.square()) * 0.7978845608028653559 *
                           (1.0 + 3 * 0.044715 * x.square()));
        }
    });
}

Tensor dropout(const Tensor& a, double rate, uint64_t seed) {
    if (!(rate >= 0.0 && rate < 1.0))
        throw ContractError("dropout: rate " + std::to_string(rate) + " outside [0,1)");
    const double keep_scale = 1.0 / (1.0 - rate);
    auto mask = std::make_shared<Saved>(detail::pool_get(a.size()));
    Buffer out = detail::pool_get(a.size());
    // counter-based masks: cheap, seed-deterministic, order-free
    for (int64_t i = 0; i < a.size(); i++) {
        const double u = (mix_seed(seed, static_cast<uint64_t>(i)) >> 11) * 0x1.0p-53;
        mask->v[i] = u < rate ? 0.0 : keep_scale;
        out[i] = a.values()[i] * mask->v[i];
    }
    return make_op(a.shape(), std::move(out), {a}, [mask](Tensor::Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); i++) p.grad[i] += n.grad[i] * mask->v[i];
    });
}

// --- shape plumbing -----------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw DimensionError("concat: no operands");
    if (axis != 0 && axis != 1) throw DimensionError("concat: axis must be 0 or 1");
    for (const auto& p : parts) require_rank2(p, "concat");
    const int fixed = axis == 0 ? parts[0].shape()[1] : parts[0].shape()[0];
    int total = 0;
    for (const auto& p : parts) {
        int f = axis == 0 ? p.shape()[1] : p.shape()[0];
        if (f != fixed)
            throw DimensionError("concat: mismatched shapes " + shape_str(parts[0].shape()) +
                                 " and " + shape_str(p.shape()));
        total += axis == 0 ? p.shape()[0] : p.shape()[1];
    }
    const int out_r = axis == 0 ? total : fixed;
    const int out_c = axis == 0 ? fixed : total;
    Buffer out = detail::pool_get(static_cast<size_t>(out_r) * out_c);
    {
        MapMat O(out.data(), out_r, out_c);
        int off = 0;
        for (const auto& p : parts) {
            CMapMat P(p.values().data(), p.shape()[0], p.shape()[1]);
            if (axis == 0) O.middleRows(off, p.shape()[0]) = P;
            else O.middleCols(off, p.shape()[1]) = P;
            off += axis == 0 ? p.shape()[0] : p.shape()[1];
        }
    }
    return make_op({out_r, out_c}, std::move(out), parts, [axis](Tensor::Node& n) {
        CMapMat G(n.grad.data(), n.shape[0], n.shape[1]);
        int off = 0;
        for (auto& pp : n.parents) {
            auto& p = *pp;
            MapMat dP = grad_of(p);
            if (axis == 0) dP += G.middleRows(off, p.shape[0]);
            else dP += G.middleCols(off, p.shape[1]);
            off += axis == 0 ? p.shape[0] : p.shape[1];
        }
    });
}

Tensor slice(const Tensor& a, int axis, int begin, int end) {
    require_rank2(a, "slice");
    const int extent = a.shape()[axis == 0 ? 0 : 1];
    if (axis != 0 && axis != 1) throw DimensionError("slice: axis must be 0 or 1");
    if (begin < 0 || end > extent || begin >= end)
        throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") invalid for extent " + std::to_string(extent));
    const int r = axis == 0 ? end - begin : a.shape()[0];
    const int c = axis == 0 ? a.shape()[1] : end - begin;
    Buffer out = detail::pool_get(static_cast<size_t>(r) * c);
    {
        CMapMat A(a.values().data(), a.shape()[0], a.shape()[1]);
        MapMat O(out.data(), r, c);
        if (axis == 0) O = A.middleRows(begin, r);
        else O = A.middleCols(begin, c);
    }
    return make_op({r, c}, std::move(out), {a}, [axis, begin](Tensor::Node& n) {
        auto& p = *n.parents[0];
        MapMat dP = grad_of(p);
        CMapMat G(n.grad.data(), n.shape[0], n.shape[1]);
        if (axis == 0) dP.middleRows(begin, n.shape[0]) += G;
        else dP.middleCols(begin, n.shape[1]) += G;
    });
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& row_ids) {
    require_rank2(a, "gather_rows");
    const int c = a.shape()[1];
    for (int id : row_ids)
        if (id < 0 || id >= a.shape()[0])
            throw DimensionError("gather_rows: row " + std::to_string(id) + " outside " +
                                 shape_str(a.shape()));
    Buffer out = detail::pool_get(row_ids.size() * static_cast<size_t>(c));
    for (size_t k = 0; k < row_ids.size(); k++)
        std::copy_n(a.values().data() + static_cast<int64_t>(row_ids[k]) * c, c,
                    out.data() + k * c);
    return make_op({static_cast<int>(row_ids.size()), c}, std::move(out), {a},
                   [ids = row_ids, c](Tensor::Node& n) {
                       auto& p = *n.parents[0];
                       p.ensure_grad();
                       for (size_t k = 0; k < ids.size(); k++) {
                           const double* g = n.grad.data() + k * c;
                           double* dst = p.grad.data() + static_cast<int64_t>(ids[k]) * c;
                           for (int j = 0; j < c; j++) dst[j] += g[j];
                       }
                   });
}

Tensor sum(const Tensor& a) {
    double s = 0;
    for (double v : a.values()) s += v;
    Buffer out = detail::pool_get(1);
    out[0] = s;
    return make_op({1}, std::move(out), {a}, [](Tensor::Node& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (double& g : p.grad) g += n.grad[0];
    });
}

// --- fused kernels -------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank2(x, "linear");
    require_rank2(w, "linear");
    if (x.shape()[1] != w.shape()[0] || b.size() != w.shape()[1])
        throw DimensionError("linear: incompatible shapes " + shape_str(x.shape()) + " x " +
                             shape_str(w.shape()) + " + " + shape_str(b.shape()));
    const int n = x.shape()[0], d = w.shape()[1];
    Buffer out = detail::pool_get(static_cast<size_t>(n) * d);
    {
        CMapMat X(x.values().data(), x.shape()[0], x.shape()[1]);
        CMapMat W(w.values().data(), w.shape()[0], w.shape()[1]);
        MapMat O(out.data(), n, d);
        O.noalias() = X * W;
        O.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.values().data(), d);
    }
    return make_op({n, d}, std::move(out), {x, w, b}, [](Tensor::Node& node) {
        auto& px = *node.parents[0];
        auto& pw = *node.parents[1];
        auto& pb = *node.parents[2];
        CMapMat X = mat_of(px), W = mat_of(pw);
        CMapMat G(node.grad.data(), node.shape[0], node.shape[1]);
        grad_of(px).noalias() += G * W.transpose();
        grad_of(pw).noalias() += X.transpose() * G;
        pb.ensure_grad();
        Eigen::Map<Eigen::RowVectorXd>(pb.grad.data(), pb.grad.size()) += G.colwise().sum();
    });
}

Tensor layer_norm_affine(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const int c = x.cols();
    if (gain.size() != c || bias.size() != c)
        throw DimensionError("layer_norm_affine: affine terms do not match " +
                             shape_str(x.shape()));
    const int r = x.rows();
    Buffer out = detail::pool_get(x.size());
    // normalized rows are needed again in backward
    auto norm = std::make_shared<Saved>(detail::pool_get(x.size()));
    std::vector<double> inv_sd(r);
    const double* g = gain.values().data();
    const double* b = bias.values().data();
    Eigen::Map<const Eigen::ArrayXd> gv(g, c);
    Eigen::Map<const Eigen::ArrayXd> bv(b, c);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (static_cast<int64_t>(r) * c > 32768)
#endif
    for (int i = 0; i < r; i++) {
        Eigen::Map<const Eigen::ArrayXd> xi(x.values().data() + static_cast<int64_t>(i) * c, c);
        Eigen::Map<Eigen::ArrayXd> yi(norm->data() + static_cast<int64_t>(i) * c, c);
        Eigen::Map<Eigen::ArrayXd> oi(out.data() + static_cast<int64_t>(i) * c, c);
        const double mu = xi.sum() / c;
        const double var = (xi - mu).matrix().squaredNorm() / c;
        inv_sd[i] = 1.0 / std::sqrt(var + eps);
        yi = (xi - mu) * inv_sd[i];
        oi = yi * gv + bv;
    }
    return make_op(x.shape(), std::move(out), {x, gain, bias},
                   [r, c, inv_sd = std::move(inv_sd), norm](Tensor::Node& node) {
                       auto& px = *node.parents[0];
                       auto& pg = *node.parents[1];
                       auto& pb = *node.parents[2];
                       px.ensure_grad();
                       pg.ensure_grad();
                       pb.ensure_grad();
                       Eigen::Map<const Eigen::ArrayXd> gv(pg.val.data(), c);
                       Eigen::Map<Eigen::ArrayXd> dgain(pg.grad.data(), c);
                       Eigen::Map<Eigen::ArrayXd> dbias(pb.grad.data(), c);
                       for (int i = 0; i < r; i++) {
                           Eigen::Map<const Eigen::ArrayXd> y(
                               norm->data() + static_cast<int64_t>(i) * c, c);
                           Eigen::Map<const Eigen::ArrayXd> go(
                               node.grad.data() + static_cast<int64_t>(i) * c, c);
                           Eigen::Map<Eigen::ArrayXd> dx(
                               px.grad.data() + static_cast<int64_t>(i) * c, c);
                           dgain += go * y;
                           dbias += go;
                           const Eigen::ArrayXd gn = go * gv;  // grad at normalized value
                           const double g_mean = gn.sum() / c;
                           const double gy_mean = (gn * y).sum() / c;
                           dx += inv_sd[i] * (gn - g_mean - y * gy_mean);
                       }
                   });
}

Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                           double dropout_rate, uint64_t seed,
                           const std::vector<int>& groups) {
    require_rank2(q, "attention");
    const int n = q.shape()[0], w = q.shape()[1];
    if (k.shape() != q.shape() || v.shape() != q.shape())
        throw DimensionError("attention: q/k/v shapes differ");
    if (heads < 1 || w % heads)
        throw DimensionError("attention: width " + std::to_string(w) + " not divisible by " +
                             std::to_string(heads) + " heads");
    if (dropout_rate < 0 || dropout_rate >= 1.0)
        throw ContractError("attention: dropout rate outside [0,1)");
    std::vector<int> blocks = groups.empty() ? std::vector<int>{n} : groups;
    {
        int total = 0;
        for (int g : blocks) {
            if (g < 1) throw DimensionError("attention: group sizes must be positive");
            total += g;
        }
        if (total != n)
            throw DimensionError("attention: groups cover " + std::to_string(total) +
                                 " rows, tensor has " + std::to_string(n));
    }
    const int dh = w / heads;
    const double scl = 1.0 / std::sqrt(static_cast<double>(dh));

    // per-group offsets into the saved probability buffer
    auto offsets = std::make_shared<std::vector<size_t>>();
    size_t prob_total = 0;
    for (int g : blocks) {
        offsets->push_back(prob_total);
        prob_total += static_cast<size_t>(heads) * g * g;
    }

    // probabilities (and dropout multipliers) are kept for the backward pass
    auto probs = std::make_shared<Saved>(detail::pool_get(prob_total));
    std::shared_ptr<Saved> keep;
    if (dropout_rate > 0) keep = std::make_shared<Saved>(detail::pool_get(prob_total));

    Buffer out = detail::pool_get(static_cast<size_t>(n) * w);
    {
        CMapMat Q(q.values().data(), n, w), K(k.values().data(), n, w),
            V(v.values().data(), n, w);
        MapMat O(out.data(), n, w);
        std::vector<int> row_start(blocks.size());
        for (size_t b = 0, r = 0; b < blocks.size(); r += blocks[b], b++)
            row_start[b] = static_cast<int>(r);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (blocks.size() > 1)
#endif
        for (size_t b = 0; b < blocks.size(); b++) {
            const int g = blocks[b];
            const int row0 = row_start[b];
            RowMat scores(g, g);
            for (int h = 0; h < heads; h++) {
                const auto Qh = Q.block(row0, h * dh, g, dh);
                const auto Kh = K.block(row0, h * dh, g, dh);
                const auto Vh = V.block(row0, h * dh, g, dh);
                scores.noalias() = Qh * Kh.transpose();
                scores *= scl;
                double* P = probs->data() + (*offsets)[b] + static_cast<size_t>(h) * g * g;
                MapMat Pm(P, g, g);
                for (int i = 0; i < g; i++) {
                    Eigen::Map<const Eigen::ArrayXd> srow(scores.data() +
                                                              static_cast<int64_t>(i) * g,
                                                          g);
                    Eigen::Map<Eigen::ArrayXd> prow(P + static_cast<int64_t>(i) * g, g);
                    prow = (srow - srow.maxCoeff()).exp();
                    prow /= prow.sum();
                }
                if (keep) {
                    const uint64_t head_seed = mix_seed(seed, b * 64 + h);
                    const double upscale = 1.0 / (1.0 - dropout_rate);
                    double* M = keep->data() + (*offsets)[b] + static_cast<size_t>(h) * g * g;
                    for (int64_t i = 0; i < static_cast<int64_t>(g) * g; i++) {
                        const double u =
                            (mix_seed(head_seed, static_cast<uint64_t>(i)) >> 11) * 0x1.0p-53;
                        M[i] = u < dropout_rate ? 0.0 : upscale;
                    }
                    O.block(row0, h * dh, g, dh).noalias() =
                        (Pm.cwiseProduct(MapMat(M, g, g))) * Vh;
                } else {
                    O.block(row0, h * dh, g, dh).noalias() = Pm * Vh;
                }
            }
        }
    }

    return make_op(
        {n, w}, std::move(out), {q, k, v},
        [n, w, heads, dh, scl, probs, keep, blocks = std::move(blocks),
         offsets](Tensor::Node& node) {
            auto& pq = *node.parents[0];
            auto& pk = *node.parents[1];
            auto& pv = *node.parents[2];
            CMapMat Q = mat_of(pq), K = mat_of(pk), V = mat_of(pv);
            CMapMat G(node.grad.data(), n, w);
            MapMat dQ = grad_of(pq), dK = grad_of(pk), dV = grad_of(pv);
            std::vector<int> row_start(blocks.size());
            for (size_t b = 0, r = 0; b < blocks.size(); r += blocks[b], b++)
                row_start[b] = static_cast<int>(r);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (blocks.size() > 1)
#endif
            for (size_t b = 0; b < blocks.size(); b++) {
                const int g = blocks[b];
                const int row0 = row_start[b];
                RowMat dP(g, g), dS(g, g), Pm;
                for (int h = 0; h < heads; h++) {
                    const auto Gh = G.block(row0, h * dh, g, dh);
                    const auto Vh = V.block(row0, h * dh, g, dh);
                    CMapMat P(probs->data() + (*offsets)[b] + static_cast<size_t>(h) * g * g, g,
                              g);
                    dP.noalias() = Gh * Vh.transpose();
                    if (keep) {
                        CMapMat M(keep->data() + (*offsets)[b] + static_cast<size_t>(h) * g * g,
                                  g, g);
                        Pm = P.cwiseProduct(M);
                        dP = dP.cwiseProduct(M);
                    } else {
                        Pm = P;
                    }
                    dV.block(row0, h * dh, g, dh).noalias() += Pm.transpose() * Gh;
                    dS = P.cwiseProduct(dP);
                    const Eigen::VectorXd row_dot = dS.rowwise().sum();
                    dS.noalias() -= row_dot.asDiagonal() * RowMat(P);
                    dQ.block(row0, h * dh, g, dh).noalias() +=
                        scl * (dS * K.block(row0, h * dh, g, dh));
                    dK.block(row0, h * dh, g, dh).noalias() +=
                        scl * (dS.transpose() * Q.block(row0, h * dh, g, dh));
                }
            }
        });
}

// --- backward -----------------------------------------------------------------

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
        throw ContractError("backward: loss must be a 1-element tensor");
    auto root = loss.node();
    if (!root->needs_grad) return;  // nothing reachable requires gradients

    // Iterative post-order DFS; reversed, it gives a valid backprop order.
    std::vector<Tensor::Node*> order;
    std::unordered_set<Tensor::Node*> seen;
    std::vector<std::pair<Tensor::Node*, size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Tensor::Node* p = node->parents[next++].get();
            if (p->needs_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor::Node* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
}

}  // namespace mocap::num

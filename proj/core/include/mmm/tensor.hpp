#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "mmm/rng.hpp"

namespace mmm {

class ShapeError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class UsageError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class NumericError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class LoadError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thread-local switch: while disabled, op results are detached leaves and no
// graph is recorded (evaluation mode).
inline bool& grad_mode_enabled() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode_enabled()) { grad_mode_enabled() = false; }
    ~NoGradGuard() { grad_mode_enabled() = prev; }
};

enum class Op : uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,
    MatMul,
    Transpose,
    Concat0,
    SliceRows,
    SliceCols,
    GatherCols,
    Tanh,
    Sigmoid,
    Abs,
    Sum,
    SoftmaxVec,
    SoftmaxRows,
    LayerNormCols,
    Dropout,
    EmbedCols,
    AddColBroadcast,
    AddScalarBroadcast,
    CrossEntropy,
    Reshape,
};

template <class Real>
struct TensorNode {
    std::vector<int> shape;
    std::vector<Real> value;
    std::vector<Real> grad;  // empty until first accumulation
    Op op = Op::Leaf;
    bool requires_grad = false;
    bool backward_done = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::vector<int> iattr;  // op-specific (slice bounds, gather indices, label, ...)
    std::vector<Real> aux;   // op-specific cache for backward (masks, probs, ...)
    Real rattr = Real(0);    // op-specific scalar (scale factor, eps, ...)

    size_t size() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), Real(0));
    }
};

namespace detail {

inline size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor dims must be positive");
        n *= static_cast<size_t>(d);
    }
    return n;
}

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        out += std::to_string(s[i]);
        if (i + 1 < s.size()) out += "x";
    }
    return out + "]";
}

}  // namespace detail

// Handle to a node in an eagerly evaluated reverse-mode graph. Values are
// computed at construction; backward() walks the recorded graph once.
template <class Real>
class Tensor {
  public:
    using Node = TensorNode<Real>;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->value.assign(detail::shape_numel(n->shape), Real(0));
        n->requires_grad = requires_grad && grad_mode_enabled();
        return Tensor(std::move(n));
    }

    static Tensor full(std::vector<int> shape, Real v, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        std::fill(t.value().begin(), t.value().end(), v);
        return t;
    }

    static Tensor ones(std::vector<int> shape, bool requires_grad = false) {
        return full(std::move(shape), Real(1), requires_grad);
    }

    static Tensor from(std::vector<int> shape, std::vector<Real> data, bool requires_grad = false) {
        if (detail::shape_numel(shape) != data.size())
            throw ShapeError("data length does not match shape " + detail::shape_str(shape));
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad && grad_mode_enabled();
        return Tensor(std::move(n));
    }

    static Tensor scalar(Real v, bool requires_grad = false) {
        return from({1, 1}, {v}, requires_grad);
    }

    static Tensor randn(std::vector<int> shape, Rng& rng, Real stddev, bool requires_grad = true) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (auto& x : t.value()) x = static_cast<Real>(rng.normal(0.0, 1.0)) * stddev;
        return t;
    }

    bool defined() const { return static_cast<bool>(node_); }
    const std::vector<int>& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }

    int rows() const { return node_->shape[0]; }
    int cols() const { return rank() >= 2 ? node_->shape[1] : 1; }

    size_t size() const { return node_->value.size(); }
    std::vector<Real>& value() { return node_->value; }
    const std::vector<Real>& value() const { return node_->value; }

    Real item() const {
        if (size() != 1) throw UsageError("item() requires a single-element tensor");
        return node_->value[0];
    }

    Real at(int r, int c) const { return node_->value[static_cast<size_t>(r) * cols() + c]; }
    Real& at(int r, int c) { return node_->value[static_cast<size_t>(r) * cols() + c]; }

    std::vector<Real>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<Real>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool b) { node_->requires_grad = b; }
    bool is_leaf() const { return node_->op == Op::Leaf; }

    void zero_grad() {
        node_->grad.assign(node_->value.size(), Real(0));
        node_->backward_done = false;
    }

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

    // Reverse-mode pass from a scalar root. Each reachable node is visited
    // exactly once; calling backward twice on the same root without zero_grad
    // is an error.
    void backward() const;

  private:
    std::shared_ptr<Node> node_;
};

// ---------------------------------------------------------------------------
// construction helpers
// ---------------------------------------------------------------------------

namespace detail {

template <class Real>
std::shared_ptr<TensorNode<Real>> make_result(std::vector<int> shape, Op op,
                                              std::vector<std::shared_ptr<TensorNode<Real>>> parents) {
    auto n = std::make_shared<TensorNode<Real>>();
    n->shape = std::move(shape);
    n->value.assign(shape_numel(n->shape), Real(0));
    if (grad_mode_enabled()) {
        bool rg = false;
        for (const auto& p : parents) rg = rg || p->requires_grad;
        if (rg) {
            n->op = op;
            n->parents = std::move(parents);
            n->requires_grad = true;
        }
    }
    return n;
}

template <class Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

template <class Real>
void require_rank2(const Tensor<Real>& a, const char* what) {
    if (a.rank() != 2) throw ShapeError(std::string(what) + ": rank-2 tensor required");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// primitives (eager forward, recorded backward)
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
    detail::require_same_shape(a, b, "add");
    auto n = detail::make_result<Real>(a.shape(), Op::Add, {a.node_ptr(), b.node_ptr()});
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = a.value()[i] + b.value()[i];
    return Tensor<Real>(std::move(n));
}

template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
    detail::require_same_shape(a, b, "sub");
    auto n = detail::make_result<Real>(a.shape(), Op::Sub, {a.node_ptr(), b.node_ptr()});
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = a.value()[i] - b.value()[i];
    return Tensor<Real>(std::move(n));
}

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
    detail::require_same_shape(a, b, "mul");
    auto n = detail::make_result<Real>(a.shape(), Op::Mul, {a.node_ptr(), b.node_ptr()});
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = a.value()[i] * b.value()[i];
    return Tensor<Real>(std::move(n));
}

template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, Real c) {
    auto n = detail::make_result<Real>(a.shape(), Op::Scale, {a.node_ptr()});
    n->rattr = c;
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = a.value()[i] * c;
    return Tensor<Real>(std::move(n));
}

template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
    detail::require_rank2(a, "matmul");
    detail::require_rank2(b, "matmul");
    const int m = a.rows(), k = a.cols(), k2 = b.rows(), nn = b.cols();
    if (k != k2)
        throw ShapeError("matmul: inner dims disagree " + detail::shape_str(a.shape()) + " * " +
                         detail::shape_str(b.shape()));
    auto n = detail::make_result<Real>({m, nn}, Op::MatMul, {a.node_ptr(), b.node_ptr()});
    const Real* A = a.value().data();
    const Real* B = b.value().data();
    Real* C = n->value.data();
    for (int i = 0; i < m; ++i) {
        Real* crow = C + static_cast<size_t>(i) * nn;
        const Real* arow = A + static_cast<size_t>(i) * k;
        for (int t = 0; t < k; ++t) {
            const Real av = arow[t];
            const Real* brow = B + static_cast<size_t>(t) * nn;
            for (int j = 0; j < nn; ++j) crow[j] += av * brow[j];
        }
    }
    return Tensor<Real>(std::move(n));
}

template <class Real>
Tensor<Real> transpose(const Tensor<Real>& a) {
    detail::require_rank2(a, "transpose");
    const int r = a.rows(), c = a.cols();
    auto n = detail::make_result<Real>({c, r}, Op::Transpose, {a.node_ptr()});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            n->value[static_cast<size_t>(j) * r + i] = a.value()[static_cast<size_t>(i) * c + j];
    return Tensor<Real>(std::move(n));
}

// Concatenate along axis 0. Rank-1 inputs concatenate lengths; rank-2 inputs
// stack rows and must agree on columns.
template <class Real>
Tensor<Real> concat_rows(const std::vector<Tensor<Real>>& parts) {
    if (parts.empty()) throw UsageError("concat_rows: empty input list");
    const int rank = parts[0].rank();
    const int c = parts[0].cols();
    int total_rows = 0;
    std::vector<std::shared_ptr<TensorNode<Real>>> parents;
    parents.reserve(parts.size());
    for (const auto& p : parts) {
        if (p.rank() != rank) throw ShapeError("concat_rows: mixed ranks");
        if (rank == 2 && p.cols() != c) throw ShapeError("concat_rows: column mismatch");
        total_rows += p.rows();
        parents.push_back(p.node_ptr());
    }
    std::vector<int> shape = rank == 2 ? std::vector<int>{total_rows, c} : std::vector<int>{total_rows};
    auto n = detail::make_result<Real>(shape, Op::Concat0, std::move(parents));
    size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.value().begin(), p.value().end(), n->value.begin() + off);
        off += p.size();
    }
    // record row extents so backward can slice the gradient back
    if (n->op == Op::Concat0) {
        for (const auto& p : parts) n->iattr.push_back(p.rows());
    }
    return Tensor<Real>(std::move(n));
}

template <class Real>
Tensor<Real> concat_rows(const Tensor<Real>& a, const Tensor<Real>& b) {
    return concat_rows(std::vector<Tensor<Real>>{a, b});
}

template <class Real>
Tensor<Real> slice_rows(const Tensor<Real>& a, int r0, int r1) {
    if (r0 < 0 || r1 > a.rows() || r0 >= r1) throw ShapeError("slice_rows: bad range");
    const int c = a.cols();
    std::vector<int> shape = a.rank() == 2 ? std::vector<int>{r1 - r0, c} : std::vector<int>{r1 - r0};
    auto n = detail::make_result<Real>(shape, Op::SliceRows, {a.node_ptr()});
    n->iattr = {r0, r1};
    std::copy(a.value().begin() + static_cast<size_t>(r0) * c,
              a.value().begin() + static_cast<size_t>(r1) * c, n->value.begin());
    return Tensor<Real>(std::move(n));
}

template <class Real>
Tensor<Real> slice_cols(const Tensor<Real>& a, int c0, int c1) {
    detail::require_rank2(a, "slice_cols");
    if (c0 < 0 || c1 > a.cols() || c0 >= c1) throw ShapeError("slice_cols: bad range");
    const int r = a.rows(), c = a.cols(), w = c1 - c0;
    auto n = detail::make_result<Real>({r, w}, Op::SliceCols, {a.node_ptr()});
    n->iattr = {c0, c1};
    for (int i = 0; i < r; ++i)
        std::copy(a.value().begin() + static_cast<size_t>(i) * c + c0,
                  a.value().begin() + static_cast<size_t>(i) * c + c1,
                  n->value.begin() + static_cast<size_t>(i) * w);
    return Tensor<Real>(std::move(n));
}

// Select columns by index (order preserved, duplicates allowed).
template <class Real>
Tensor<Real> gather_cols(const Tensor<Real>& a, const std::vector<int>& idx) {
    detail::require_rank2(a, "gather_cols");
    if (idx.empty()) throw ShapeError("gather_cols: empty index list");
    const int r = a.rows(), c = a.cols(), w = static_cast<int>(idx.size());
    for (int j : idx)
        if (j < 0 || j >= c) throw ShapeError("gather_cols: index out of range");
    auto n = detail::make_result<Real>({r, w}, Op::GatherCols, {a.node_ptr()});
    n->iattr = idx;
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j)
            n->value[static_cast<size_t>(i) * w + j] = a.value()[static_cast<size_t>(i) * c + idx[j]];
    return Tensor<Real>(std::move(n));
}

template <class Real>
Tensor<Real> tanh(const Tensor<Real>& a) {
    auto n = detail::make_result<Real>(a.shape(), Op::Tanh, {a.node_ptr()});
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = std::tanh(a.value()[i]);
    return Tensor<Real>(std::move(n));
}

template <class Real>
Tensor<Real> sigmoid(const Tensor<Real>& a) {
    auto n = detail::make_result<Real>(a.shape(), Op::Sigmoid, {a.node_ptr()});
    for (size_t i = 0; i < n->value.size(); ++i) {
        Real x = a.value()[i];
        n->value[i] = x >= Real(0) ? Real(1) / (Real(1) + std::exp(-x))
                                   : std::exp(x) / (Real(1) + std::exp(x));
    }
    return Tensor<Real>(std::move(n));
}

template <class Real>
Tensor<Real> abs(const Tensor<Real>& a) {
    auto n = detail::make_result<Real>(a.shape(), Op::Abs, {a.node_ptr()});
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = std::abs(a.value()[i]);
    return Tensor<Real>(std::move(n));
}

template <class Real>
Tensor<Real> sum(const Tensor<Real>& a) {
    auto n = detail::make_result<Real>({1, 1}, Op::Sum, {a.node_ptr()});
    Real s = 0;
    for (Real v : a.value()) s += v;
    n->value[0] = s;
    return Tensor<Real>(std::move(n));
}

// Softmax over every entry of the tensor (vector semantics), computed with
// max subtraction.
template <class Real>
Tensor<Real> softmax(const Tensor<Real>& a) {
    if (a.size() == 0) throw ShapeError("softmax: empty input");
    for (Real v : a.value())
        if (std::isnan(v)) throw NumericError("softmax: NaN input");
    auto n = detail::make_result<Real>(a.shape(), Op::SoftmaxVec, {a.node_ptr()});
    Real mx = a.value()[0];
    for (Real v : a.value()) mx = std::max(mx, v);
    Real denom = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        n->value[i] = std::exp(a.value()[i] - mx);
        denom += n->value[i];
    }
    for (auto& v : n->value) v /= denom;
    return Tensor<Real>(std::move(n));
}

// Row-wise softmax for attention maps. -inf entries are legal and produce
// exact zeros.
template <class Real>
Tensor<Real> softmax_rows(const Tensor<Real>& a) {
    detail::require_rank2(a, "softmax_rows");
    auto n = detail::make_result<Real>(a.shape(), Op::SoftmaxRows, {a.node_ptr()});
    const int r = a.rows(), c = a.cols();
    for (int i = 0; i < r; ++i) {
        const Real* in = a.value().data() + static_cast<size_t>(i) * c;
        Real* out = n->value.data() + static_cast<size_t>(i) * c;
        Real mx = -std::numeric_limits<Real>::infinity();
        for (int j = 0; j < c; ++j) {
            if (std::isnan(in[j])) throw NumericError("softmax_rows: NaN input");
            mx = std::max(mx, in[j]);
        }
        Real denom = 0;
        for (int j = 0; j < c; ++j) {
            out[j] = std::exp(in[j] - mx);
            denom += out[j];
        }
        for (int j = 0; j < c; ++j) out[j] /= denom;
    }
    return Tensor<Real>(std::move(n));
}

// Per-column layer norm with affine rescale: out[:,j] = g .* yhat[:,j] + b
// where yhat is (x - mean)/sqrt(var + eps) over the column.
template <class Real>
Tensor<Real> layer_norm_cols(const Tensor<Real>& x, const Tensor<Real>& g, const Tensor<Real>& b,
                             Real eps = Real(1e-5)) {
    detail::require_rank2(x, "layer_norm_cols");
    const int d = x.rows(), l = x.cols();
    if (g.size() != static_cast<size_t>(d) || b.size() != static_cast<size_t>(d))
        throw ShapeError("layer_norm_cols: gain/bias must have length rows(x)");
    auto n = detail::make_result<Real>(x.shape(), Op::LayerNormCols,
                                       {x.node_ptr(), g.node_ptr(), b.node_ptr()});
    n->rattr = eps;
    n->aux.assign(static_cast<size_t>(d) * l + l, Real(0));  // yhat then inv_std per column
    Real* yhat = n->aux.data();
    Real* inv_std = n->aux.data() + static_cast<size_t>(d) * l;
    for (int j = 0; j < l; ++j) {
        Real mean = 0;
        for (int i = 0; i < d; ++i) mean += x.value()[static_cast<size_t>(i) * l + j];
        mean /= d;
        Real var = 0;
        for (int i = 0; i < d; ++i) {
            Real dv = x.value()[static_cast<size_t>(i) * l + j] - mean;
            var += dv * dv;
        }
        var /= d;
        Real is = Real(1) / std::sqrt(var + eps);
        inv_std[j] = is;
        for (int i = 0; i < d; ++i) {
            Real yh = (x.value()[static_cast<size_t>(i) * l + j] - mean) * is;
            yhat[static_cast<size_t>(i) * l + j] = yh;
            n->value[static_cast<size_t>(i) * l + j] = g.value()[i] * yh + b.value()[i];
        }
    }
    return Tensor<Real>(std::move(n));
}

// Inverted dropout. Train mode consumes one uniform draw per element; eval
// mode returns the input handle unchanged.
template <class Real>
Tensor<Real> dropout(const Tensor<Real>& a, Real rate, bool train, Rng& rng) {
    if (rate < Real(0) || rate >= Real(1)) throw UsageError("dropout: rate must be in [0,1)");
    if (!train || rate == Real(0)) return a;
    auto n = detail::make_result<Real>(a.shape(), Op::Dropout, {a.node_ptr()});
    n->aux.resize(a.size());
    const Real keep = Real(1) - rate;
    for (size_t i = 0; i < a.size(); ++i) {
        Real m = rng.uniform() < static_cast<double>(rate) ? Real(0) : Real(1) / keep;
        n->aux[i] = m;
        n->value[i] = a.value()[i] * m;
    }
    return Tensor<Real>(std::move(n));
}

// Embedding lookup: rows of `table` (vocab x d) become columns of a d x l
// output in the order given by ids.
template <class Real>
Tensor<Real> embed_cols(const Tensor<Real>& table, const std::vector<int>& ids) {
    detail::require_rank2(table, "embed_cols");
    if (ids.empty()) throw ShapeError("embed_cols: empty id list");
    const int vocab = table.rows(), d = table.cols(), l = static_cast<int>(ids.size());
    for (int id : ids)
        if (id < 0 || id >= vocab) throw UsageError("embed_cols: id out of vocabulary range");
    auto n = detail::make_result<Real>({d, l}, Op::EmbedCols, {table.node_ptr()});
    n->iattr = ids;
    for (int j = 0; j < l; ++j)
        for (int i = 0; i < d; ++i)
            n->value[static_cast<size_t>(i) * l + j] = table.value()[static_cast<size_t>(ids[j]) * d + i];
    return Tensor<Real>(std::move(n));
}

// Add a length-d column vector to every column of a d x l matrix.
template <class Real>
Tensor<Real> add_col_broadcast(const Tensor<Real>& a, const Tensor<Real>& v) {
    detail::require_rank2(a, "add_col_broadcast");
    if (v.size() != static_cast<size_t>(a.rows()))
        throw ShapeError("add_col_broadcast: vector length must equal rows");
    auto n = detail::make_result<Real>(a.shape(), Op::AddColBroadcast, {a.node_ptr(), v.node_ptr()});
    const int r = a.rows(), c = a.cols();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            n->value[static_cast<size_t>(i) * c + j] =
                a.value()[static_cast<size_t>(i) * c + j] + v.value()[i];
    return Tensor<Real>(std::move(n));
}

// Add a 1x1 scalar tensor to every entry.
template <class Real>
Tensor<Real> add_scalar_broadcast(const Tensor<Real>& a, const Tensor<Real>& s) {
    if (s.size() != 1) throw ShapeError("add_scalar_broadcast: scalar tensor required");
    auto n = detail::make_result<Real>(a.shape(), Op::AddScalarBroadcast, {a.node_ptr(), s.node_ptr()});
    for (size_t i = 0; i < a.size(); ++i) n->value[i] = a.value()[i] + s.value()[0];
    return Tensor<Real>(std::move(n));
}

// Cross entropy on raw logits: -log softmax(logits)[label], computed as
// log(sum exp(x - max)) + (max - x[label]) so a uniform vector gives exactly
// log(n).
template <class Real>
Tensor<Real> cross_entropy_logits(const Tensor<Real>& logits, int label) {
    const int n_class = static_cast<int>(logits.size());
    if (label < 0 || label >= n_class) throw UsageError("cross_entropy_logits: label out of range");
    auto n = detail::make_result<Real>({1, 1}, Op::CrossEntropy, {logits.node_ptr()});
    n->iattr = {label};
    Real mx = logits.value()[0];
    for (Real v : logits.value()) {
        if (std::isnan(v)) throw NumericError("cross_entropy_logits: NaN logit");
        mx = std::max(mx, v);
    }
    n->aux.resize(n_class);
    Real denom = 0;
    for (int i = 0; i < n_class; ++i) {
        n->aux[i] = std::exp(logits.value()[i] - mx);
        denom += n->aux[i];
    }
    for (auto& p : n->aux) p /= denom;
    n->value[0] = std::log(denom) + (mx - logits.value()[label]);
    return Tensor<Real>(std::move(n));
}

template <class Real>
Tensor<Real> reshape(const Tensor<Real>& a, std::vector<int> shape) {
    if (detail::shape_numel(shape) != a.size()) throw ShapeError("reshape: element count mismatch");
    auto n = detail::make_result<Real>(std::move(shape), Op::Reshape, {a.node_ptr()});
    n->value = a.value();
    return Tensor<Real>(std::move(n));
}

template <class Real>
Tensor<Real> operator+(const Tensor<Real>& a, const Tensor<Real>& b) {
    return add(a, b);
}
template <class Real>
Tensor<Real> operator-(const Tensor<Real>& a, const Tensor<Real>& b) {
    return sub(a, b);
}
template <class Real>
Tensor<Real> operator*(const Tensor<Real>& a, const Tensor<Real>& b) {
    return mul(a, b);
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

namespace detail {

template <class Real>
void accumulate_parent_grads(TensorNode<Real>* n) {
    const std::vector<Real>& g = n->grad;
    auto parent = [&](size_t i) { return n->parents[i].get(); };
    switch (n->op) {
        case Op::Leaf:
            break;
        case Op::Add: {
            auto *a = parent(0), *b = parent(1);
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) a->grad[i] += g[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) b->grad[i] += g[i];
            }
            break;
        }
        case Op::Sub: {
            auto *a = parent(0), *b = parent(1);
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) a->grad[i] += g[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) b->grad[i] -= g[i];
            }
            break;
        }
        case Op::Mul: {
            auto *a = parent(0), *b = parent(1);
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) a->grad[i] += g[i] * b->value[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) b->grad[i] += g[i] * a->value[i];
            }
            break;
        }
        case Op::Scale: {
            auto* a = parent(0);
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) a->grad[i] += g[i] * n->rattr;
            }
            break;
        }
        case Op::MatMul: {
            auto *a = parent(0), *b = parent(1);
            const int m = a->shape[0], k = a->shape[1], nn = b->shape[1];
            if (a->requires_grad) {
                a->ensure_grad();
                // dA = G * B^T
                for (int i = 0; i < m; ++i)
                    for (int t = 0; t < k; ++t) {
                        Real s = 0;
                        const Real* grow = g.data() + static_cast<size_t>(i) * nn;
                        const Real* brow = b->value.data() + static_cast<size_t>(t) * nn;
                        for (int j = 0; j < nn; ++j) s += grow[j] * brow[j];
                        a->grad[static_cast<size_t>(i) * k + t] += s;
                    }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                // dB = A^T * G
                for (int t = 0; t < k; ++t) {
                    Real* brow = b->grad.data() + static_cast<size_t>(t) * nn;
                    for (int i = 0; i < m; ++i) {
                        const Real av = a->value[static_cast<size_t>(i) * k + t];
                        const Real* grow = g.data() + static_cast<size_t>(i) * nn;
                        for (int j = 0; j < nn; ++j) brow[j] += av * grow[j];
                    }
                }
            }
            break;
        }
        case Op::Transpose: {
            auto* a = parent(0);
            if (!a->requires_grad) break;
            a->ensure_grad();
            const int r = a->shape[0], c = a->shape[1];
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j)
                    a->grad[static_cast<size_t>(i) * c + j] += g[static_cast<size_t>(j) * r + i];
            break;
        }
        case Op::Concat0: {
            size_t off = 0;
            for (size_t pi = 0; pi < n->parents.size(); ++pi) {
                auto* p = parent(pi);
                const size_t sz = p->value.size();
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (size_t i = 0; i < sz; ++i) p->grad[i] += g[off + i];
                }
                off += sz;
            }
            break;
        }
        case Op::SliceRows: {
            auto* a = parent(0);
            if (!a->requires_grad) break;
            a->ensure_grad();
            const int c = a->shape.size() == 2 ? a->shape[1] : 1;
            const size_t base = static_cast<size_t>(n->iattr[0]) * c;
            for (size_t i = 0; i < g.size(); ++i) a->grad[base + i] += g[i];
            break;
        }
        case Op::SliceCols: {
            auto* a = parent(0);
            if (!a->requires_grad) break;
            a->ensure_grad();
            const int r = a->shape[0], c = a->shape[1];
            const int c0 = n->iattr[0], w = n->iattr[1] - n->iattr[0];
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < w; ++j)
                    a->grad[static_cast<size_t>(i) * c + c0 + j] += g[static_cast<size_t>(i) * w + j];
            break;
        }
        case Op::GatherCols: {
            auto* a = parent(0);
            if (!a->requires_grad) break;
            a->ensure_grad();
            const int r = a->shape[0], c = a->shape[1];
            const int w = static_cast<int>(n->iattr.size());
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < w; ++j)
                    a->grad[static_cast<size_t>(i) * c + n->iattr[j]] +=
                        g[static_cast<size_t>(i) * w + j];
            break;
        }
        case Op::Tanh: {
            auto* a = parent(0);
            if (!a->requires_grad) break;
            a->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i)
                a->grad[i] += g[i] * (Real(1) - n->value[i] * n->value[i]);
            break;
        }
        case Op::Sigmoid: {
            auto* a = parent(0);
            if (!a->requires_grad) break;
            a->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i)
                a->grad[i] += g[i] * n->value[i] * (Real(1) - n->value[i]);
            break;
        }
        case Op::Abs: {
            auto* a = parent(0);
            if (!a->requires_grad) break;
            a->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) {
                Real x = a->value[i];
                Real s = x > Real(0) ? Real(1) : (x < Real(0) ? Real(-1) : Real(0));
                a->grad[i] += g[i] * s;
            }
            break;
        }
        case Op::Sum: {
            auto* a = parent(0);
            if (!a->requires_grad) break;
            a->ensure_grad();
            for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g[0];
            break;
        }
        case Op::SoftmaxVec: {
            auto* a = parent(0);
            if (!a->requires_grad) break;
            a->ensure_grad();
            Real dot = 0;
            for (size_t i = 0; i < g.size(); ++i) dot += g[i] * n->value[i];
            for (size_t i = 0; i < g.size(); ++i) a->grad[i] += n->value[i] * (g[i] - dot);
            break;
        }
        case Op::SoftmaxRows: {
            auto* a = parent(0);
            if (!a->requires_grad) break;
            a->ensure_grad();
            const int r = n->shape[0], c = n->shape[1];
            for (int i = 0; i < r; ++i) {
                const Real* y = n->value.data() + static_cast<size_t>(i) * c;
                const Real* gr = g.data() + static_cast<size_t>(i) * c;
                Real* ag = a->grad.data() + static_cast<size_t>(i) * c;
                Real dot = 0;
                for (int j = 0; j < c; ++j) dot += gr[j] * y[j];
                for (int j = 0; j < c; ++j) ag[j] += y[j] * (gr[j] - dot);
            }
            break;
        }
        case Op::LayerNormCols: {
            auto *x = parent(0), *gm = parent(1), *bt = parent(2);
            const int d = n->shape[0], l = n->shape[1];
            const Real* yhat = n->aux.data();
            const Real* inv_std = n->aux.data() + static_cast<size_t>(d) * l;
            if (x->requires_grad) {
                x->ensure_grad();
                for (int j = 0; j < l; ++j) {
                    Real m1 = 0, m2 = 0;
                    for (int i = 0; i < d; ++i) {
                        Real gy = g[static_cast<size_t>(i) * l + j] * gm->value[i];
                        m1 += gy;
                        m2 += gy * yhat[static_cast<size_t>(i) * l + j];
                    }
                    m1 /= d;
                    m2 /= d;
                    for (int i = 0; i < d; ++i) {
                        Real gy = g[static_cast<size_t>(i) * l + j] * gm->value[i];
                        x->grad[static_cast<size_t>(i) * l + j] +=
                            (gy - m1 - yhat[static_cast<size_t>(i) * l + j] * m2) * inv_std[j];
                    }
                }
            }
            if (gm->requires_grad) {
                gm->ensure_grad();
                for (int i = 0; i < d; ++i) {
                    Real s = 0;
                    for (int j = 0; j < l; ++j)
                        s += g[static_cast<size_t>(i) * l + j] * yhat[static_cast<size_t>(i) * l + j];
                    gm->grad[i] += s;
                }
            }
            if (bt->requires_grad) {
                bt->ensure_grad();
                for (int i = 0; i < d; ++i) {
                    Real s = 0;
                    for (int j = 0; j < l; ++j) s += g[static_cast<size_t>(i) * l + j];
                    bt->grad[i] += s;
                }
            }
            break;
        }
        case Op::Dropout: {
            auto* a = parent(0);
            if (!a->requires_grad) break;
            a->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) a->grad[i] += g[i] * n->aux[i];
            break;
        }
        case Op::EmbedCols: {
            auto* table = parent(0);
            if (!table->requires_grad) break;
            table->ensure_grad();
            const int d = n->shape[0], l = n->shape[1];
            for (int j = 0; j < l; ++j) {
                Real* trow = table->grad.data() + static_cast<size_t>(n->iattr[j]) * d;
                for (int i = 0; i < d; ++i) trow[i] += g[static_cast<size_t>(i) * l + j];
            }
            break;
        }
        case Op::AddColBroadcast: {
            auto *a = parent(0), *v = parent(1);
            const int r = n->shape[0], c = n->shape[1];
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) a->grad[i] += g[i];
            }
            if (v->requires_grad) {
                v->ensure_grad();
                for (int i = 0; i < r; ++i) {
                    Real s = 0;
                    for (int j = 0; j < c; ++j) s += g[static_cast<size_t>(i) * c + j];
                    v->grad[i] += s;
                }
            }
            break;
        }
        case Op::AddScalarBroadcast: {
            auto *a = parent(0), *s = parent(1);
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) a->grad[i] += g[i];
            }
            if (s->requires_grad) {
                s->ensure_grad();
                Real acc = 0;
                for (size_t i = 0; i < g.size(); ++i) acc += g[i];
                s->grad[0] += acc;
            }
            break;
        }
        case Op::CrossEntropy: {
            auto* a = parent(0);
            if (!a->requires_grad) break;
            a->ensure_grad();
            const int label = n->iattr[0];
            for (size_t i = 0; i < a->grad.size(); ++i) {
                Real oh = static_cast<int>(i) == label ? Real(1) : Real(0);
                a->grad[i] += g[0] * (n->aux[i] - oh);
            }
            break;
        }
        case Op::Reshape: {
            auto* a = parent(0);
            if (!a->requires_grad) break;
            a->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) a->grad[i] += g[i];
            break;
        }
    }
}

}  // namespace detail

template <class Real>
void Tensor<Real>::backward() const {
    if (!node_) throw UsageError("backward: undefined tensor");
    if (node_->size() != 1) throw UsageError("backward: root must be a scalar");
    if (node_->backward_done) throw UsageError("backward: already ran on this root; zero_grad first");
    node_->backward_done = true;

    // iterative post-order topological sort over the requires-grad subgraph
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [cur, idx] = stack.back();
        if (idx < cur->parents.size()) {
            Node* p = cur->parents[idx].get();
            ++idx;
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(cur);
            stack.pop_back();
        }
    }

    node_->ensure_grad();
    node_->grad[0] += Real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        (*it)->ensure_grad();
        detail::accumulate_parent_grads(*it);
    }
}

}  // namespace mmm

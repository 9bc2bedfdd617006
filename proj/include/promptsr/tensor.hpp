#pragma once

// Dense row-major tensors with reverse-mode autodiff. The scalar type is a
// template parameter; float is the working precision, double backs the
// finite-difference oracles.

#include <algorithm>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>

#include "promptsr/common.hpp"

namespace promptsr {

template <typename S>
class TapeT;

template <typename S>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(Shape shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<S>>(shape_numel(shape_), S(0))) {
        for (int d : shape_)
            if (d <= 0) throw ShapeError("non-positive dimension in " + shape_str(shape_));
    }

    static TensorT zeros(Shape shape) { return TensorT(std::move(shape)); }

    static TensorT full(Shape shape, S v) {
        TensorT t(std::move(shape));
        std::fill(t.data(), t.data() + t.numel(), v);
        return t;
    }

    static TensorT from_vector(Shape shape, std::vector<S> v) {
        if (shape_numel(shape) != static_cast<int64_t>(v.size()))
            throw ShapeError("value count " + std::to_string(v.size()) +
                             " does not fill " + shape_str(shape));
        TensorT t;
        t.shape_ = std::move(shape);
        t.data_ = std::make_shared<std::vector<S>>(std::move(v));
        return t;
    }

    static TensorT randn(Shape shape, Rng& rng, double stdev = 1.0) {
        TensorT t(std::move(shape));
        for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<S>(rng.normal() * stdev);
        return t;
    }

    static TensorT rand_uniform(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
        TensorT t(std::move(shape));
        for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<S>(rng.uniform(lo, hi));
        return t;
    }

    bool defined() const { return static_cast<bool>(data_); }
    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[i < 0 ? shape_.size() + i : i]; }
    int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

    S* data() { return data_->data(); }
    const S* data() const { return data_->data(); }
    const std::shared_ptr<std::vector<S>>& storage() const { return data_; }

    S item() const {
        if (numel() != 1) throw ContractError("item() on tensor of " + std::to_string(numel()) + " values");
        return (*data_)[0];
    }

    // autodiff bookkeeping
    int node() const { return node_; }
    uint64_t tape_id() const { return tape_id_; }
    void bind_node(int node, uint64_t tape_id) { node_ = node; tape_id_ = tape_id; }
    TensorT detached() const {
        TensorT t = *this;
        t.node_ = -1;
        t.tape_id_ = 0;
        return t;
    }

    TensorT reshaped(Shape shape) const {
        if (shape_numel(shape) != numel())
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        TensorT t = *this;  // shares storage and tape node
        t.shape_ = std::move(shape);
        return t;
    }

private:
    Shape shape_;
    std::shared_ptr<std::vector<S>> data_;
    int node_ = -1;
    uint64_t tape_id_ = 0;
};

// ---------------------------------------------------------------------------
// Tape: an ordered record of backward rules. Single-owner, activated for the
// current thread through Scope. Inputs of each entry precede it by
// construction; backward() walks the entries once, in reverse.
// ---------------------------------------------------------------------------

template <typename S>
class TapeT {
public:
    TapeT() : id_(next_id_.fetch_add(1) + 1) {}
    TapeT(const TapeT&) = delete;
    TapeT& operator=(const TapeT&) = delete;
    ~TapeT() {
        if (active_ == this) active_ = nullptr;
    }

    class Scope {
    public:
        explicit Scope(TapeT& t) : prev_(active_) { active_ = &t; }
        ~Scope() { active_ = prev_; }

    private:
        TapeT* prev_;
    };

    static TapeT* active() { return active_; }
    uint64_t id() const { return id_; }

    int alloc_node(int64_t numel) {
        node_numel_.push_back(numel);
        return static_cast<int>(node_numel_.size()) - 1;
    }

    int watch(TensorT<S>& t) {
        if (t.tape_id() == id_ && t.node() >= 0) return t.node();
        t.bind_node(alloc_node(t.numel()), id_);
        return t.node();
    }

    void record(std::function<void(TapeT&)> fn) { entries_.push_back(std::move(fn)); }

    void backward(const TensorT<S>& loss) {
        if (loss.numel() != 1) throw ContractError("backward() needs a scalar loss");
        if (loss.tape_id() != id_ || loss.node() < 0)
            throw ContractError("loss was not produced under this tape");
        grads_.clear();
        grads_.resize(node_numel_.size());
        for (size_t i = 0; i < grads_.size(); ++i) grads_[i].assign(node_numel_[i], S(0));
        grads_[loss.node()][0] = S(1);
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)(*this);
        ran_backward_ = true;
    }

    std::vector<S>& grad_buf(int node) { return grads_[node]; }

    bool has_grad(const TensorT<S>& t) const {
        return ran_backward_ && t.tape_id() == id_ && t.node() >= 0;
    }

    TensorT<S> grad(const TensorT<S>& t) const {
        if (!has_grad(t)) throw ContractError("no gradient recorded for tensor");
        return TensorT<S>::from_vector(t.shape(), grads_[t.node()]);
    }

private:
    uint64_t id_;
    std::vector<int64_t> node_numel_;
    std::vector<std::function<void(TapeT&)>> entries_;
    std::vector<std::vector<S>> grads_;
    bool ran_backward_ = false;

    inline static thread_local TapeT* active_ = nullptr;
    inline static std::atomic<uint64_t> next_id_{0};
};

using Tensor = TensorT<float>;
using Tape = TapeT<float>;

// ---------------------------------------------------------------------------
// op helpers
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
int node_on(TapeT<S>* tp, const TensorT<S>& t) {
    return (tp && t.tape_id() == tp->id()) ? t.node() : -1;
}

template <typename S>
bool track_out(TensorT<S>& out, TapeT<S>* tp, std::initializer_list<int> in_nodes) {
    if (!tp) return false;
    bool any = false;
    for (int n : in_nodes) any = any || n >= 0;
    if (!any) return false;
    out.bind_node(tp->alloc_node(out.numel()), tp->id());
    return true;
}

// b broadcasts into a when b's shape is a trailing suffix of a's; the mapped
// index is then simply i mod numel(b).
template <typename S>
void require_suffix(const TensorT<S>& a, const TensorT<S>& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sb.size() > sa.size())
        throw ShapeError("cannot broadcast " + shape_str(sb) + " into " + shape_str(sa));
    for (size_t i = 0; i < sb.size(); ++i)
        if (sb[sb.size() - 1 - i] != sa[sa.size() - 1 - i])
            throw ShapeError("cannot broadcast " + shape_str(sb) + " into " + shape_str(sa));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_suffix(a, b);
    TensorT<S> out(a.shape());
    const int64_t n = a.numel(), nb = b.numel();
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i % nb];
    check_finite(po, n, "add");
    auto* tp = TapeT<S>::active();
    int an = detail::node_on(tp, a), bn = detail::node_on(tp, b);
    if (detail::track_out(out, tp, {an, bn})) {
        int on = out.node();
        tp->record([an, bn, on, n, nb](TapeT<S>& t) {
            const auto& go = t.grad_buf(on);
            if (an >= 0) {
                auto& ga = t.grad_buf(an);
                for (int64_t i = 0; i < n; ++i) ga[i] += go[i];
            }
            if (bn >= 0) {
                auto& gb = t.grad_buf(bn);
                for (int64_t i = 0; i < n; ++i) gb[i % nb] += go[i];
            }
        });
    }
    return out;
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_suffix(a, b);
    TensorT<S> out(a.shape());
    const int64_t n = a.numel(), nb = b.numel();
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i % nb];
    check_finite(po, n, "sub");
    auto* tp = TapeT<S>::active();
    int an = detail::node_on(tp, a), bn = detail::node_on(tp, b);
    if (detail::track_out(out, tp, {an, bn})) {
        int on = out.node();
        tp->record([an, bn, on, n, nb](TapeT<S>& t) {
            const auto& go = t.grad_buf(on);
            if (an >= 0) {
                auto& ga = t.grad_buf(an);
                for (int64_t i = 0; i < n; ++i) ga[i] += go[i];
            }
            if (bn >= 0) {
                auto& gb = t.grad_buf(bn);
                for (int64_t i = 0; i < n; ++i) gb[i % nb] -= go[i];
            }
        });
    }
    return out;
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_suffix(a, b);
    TensorT<S> out(a.shape());
    const int64_t n = a.numel(), nb = b.numel();
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i % nb];
    check_finite(po, n, "mul");
    auto* tp = TapeT<S>::active();
    int an = detail::node_on(tp, a), bn = detail::node_on(tp, b);
    if (detail::track_out(out, tp, {an, bn})) {
        int on = out.node();
        auto da = a.storage(), db = b.storage();
        tp->record([an, bn, on, n, nb, da, db](TapeT<S>& t) {
            const auto& go = t.grad_buf(on);
            if (an >= 0) {
                auto& ga = t.grad_buf(an);
                for (int64_t i = 0; i < n; ++i) ga[i] += go[i] * (*db)[i % nb];
            }
            if (bn >= 0) {
                auto& gb = t.grad_buf(bn);
                for (int64_t i = 0; i < n; ++i) gb[i % nb] += go[i] * (*da)[i];
            }
        });
    }
    return out;
}

template <typename S>
TensorT<S> scale(const TensorT<S>& a, S c) {
    TensorT<S> out(a.shape());
    const int64_t n = a.numel();
    const S* pa = a.data();
    S* po = out.data();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * c;
    check_finite(po, n, "scale");
    auto* tp = TapeT<S>::active();
    int an = detail::node_on(tp, a);
    if (detail::track_out(out, tp, {an})) {
        int on = out.node();
        tp->record([an, on, n, c](TapeT<S>& t) {
            const auto& go = t.grad_buf(on);
            auto& ga = t.grad_buf(an);
            for (int64_t i = 0; i < n; ++i) ga[i] += go[i] * c;
        });
    }
    return out;
}

template <typename S>
TensorT<S> abs(const TensorT<S>& a) {
    TensorT<S> out(a.shape());
    const int64_t n = a.numel();
    const S* pa = a.data();
    S* po = out.data();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] < S(0) ? -pa[i] : pa[i];
    auto* tp = TapeT<S>::active();
    int an = detail::node_on(tp, a);
    if (detail::track_out(out, tp, {an})) {
        int on = out.node();
        auto da = a.storage();
        tp->record([an, on, n, da](TapeT<S>& t) {
            const auto& go = t.grad_buf(on);
            auto& ga = t.grad_buf(an);
            for (int64_t i = 0; i < n; ++i) {
                S v = (*da)[i];
                ga[i] += v > S(0) ? go[i] : (v < S(0) ? -go[i] : S(0));
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// matmul over the last two dims; leading batch dims must match exactly.
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.rank() < 2 || b.rank() < 2 || a.rank() != b.rank())
        throw ShapeError("matmul needs equal-rank >=2 operands, got " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
    const int r = a.rank();
    for (int i = 0; i < r - 2; ++i)
        if (a.dim(i) != b.dim(i))
            throw ShapeError("matmul batch mismatch: " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    const int64_t m = a.dim(r - 2), k = a.dim(r - 1), k2 = b.dim(r - 2), nj = b.dim(r - 1);
    if (k != k2)
        throw ShapeError("matmul inner mismatch: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    int64_t batch = 1;
    for (int i = 0; i < r - 2; ++i) batch *= a.dim(i);
    Shape os = a.shape();
    os[r - 2] = static_cast<int>(m);
    os[r - 1] = static_cast<int>(nj);
    TensorT<S> out(os);
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    if (MacCounter::enabled()) MacCounter::add(uint64_t(batch) * m * nj * k);
    parallel_for(batch * m, [&](int64_t bi) {
        const int64_t bb = bi / m, i = bi % m;
        const S* arow = pa + bb * m * k + i * k;
        const S* bmat = pb + bb * k * nj;
        S* orow = po + bb * m * nj + i * nj;
        for (int64_t kk = 0; kk < k; ++kk) {
            const S s = arow[kk];
            const S* brow = bmat + kk * nj;
            for (int64_t j = 0; j < nj; ++j) orow[j] += s * brow[j];
        }
    });
    check_finite(po, out.numel(), "matmul");
    auto* tp = TapeT<S>::active();
    int an = detail::node_on(tp, a), bn = detail::node_on(tp, b);
    if (detail::track_out(out, tp, {an, bn})) {
        int on = out.node();
        auto da = a.storage(), db = b.storage();
        tp->record([an, bn, on, batch, m, k, nj, da, db](TapeT<S>& t) {
            const auto& go = t.grad_buf(on);
            if (an >= 0) {
                auto& ga = t.grad_buf(an);
                for (int64_t bb = 0; bb < batch; ++bb)
                    for (int64_t i = 0; i < m; ++i) {
                        const S* grow = go.data() + bb * m * nj + i * nj;
                        S* garow = ga.data() + bb * m * k + i * k;
                        const S* bmat = db->data() + bb * k * nj;
                        for (int64_t kk = 0; kk < k; ++kk) {
                            const S* brow = bmat + kk * nj;
                            S acc = 0;
                            for (int64_t j = 0; j < nj; ++j) acc += grow[j] * brow[j];
                            garow[kk] += acc;
                        }
                    }
            }
            if (bn >= 0) {
                auto& gb = t.grad_buf(bn);
                for (int64_t bb = 0; bb < batch; ++bb)
                    for (int64_t i = 0; i < m; ++i) {
                        const S* grow = go.data() + bb * m * nj + i * nj;
                        const S* arow = da->data() + bb * m * k + i * k;
                        S* gbm = gb.data() + bb * k * nj;
                        for (int64_t kk = 0; kk < k; ++kk) {
                            const S s = arow[kk];
                            S* gbrow = gbm + kk * nj;
                            for (int64_t j = 0; j < nj; ++j) gbrow[j] += s * grow[j];
                        }
                    }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// layout ops
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> reshape(const TensorT<S>& a, Shape shape) {
    return a.reshaped(std::move(shape));
}

template <typename S>
TensorT<S> permute(const TensorT<S>& a, const std::vector<int>& perm) {
    const int r = a.rank();
    if (static_cast<int>(perm.size()) != r) throw ShapeError("permute rank mismatch");
    std::vector<int64_t> istr(r, 1);
    for (int i = r - 2; i >= 0; --i) istr[i] = istr[i + 1] * a.dim(i + 1);
    Shape os(r);
    std::vector<int64_t> pstr(r);
    for (int i = 0; i < r; ++i) {
        os[i] = a.dim(perm[i]);
        pstr[i] = istr[perm[i]];
    }
    TensorT<S> out(os);
    const int64_t n = a.numel();
    const S* pa = a.data();
    S* po = out.data();
    std::vector<int64_t> idx(r, 0);
    int64_t src = 0;
    for (int64_t i = 0; i < n; ++i) {
        po[i] = pa[src];
        for (int d = r - 1; d >= 0; --d) {
            src += pstr[d];
            if (++idx[d] < os[d]) break;
            src -= pstr[d] * os[d];
            idx[d] = 0;
        }
    }
    auto* tp = TapeT<S>::active();
    int an = detail::node_on(tp, a);
    if (detail::track_out(out, tp, {an})) {
        int on = out.node();
        tp->record([an, on, os, pstr, n, r](TapeT<S>& t) {
            const auto& go = t.grad_buf(on);
            auto& ga = t.grad_buf(an);
            std::vector<int64_t> ix(r, 0);
            int64_t src = 0;
            for (int64_t i = 0; i < n; ++i) {
                ga[src] += go[i];
                for (int d = r - 1; d >= 0; --d) {
                    src += pstr[d];
                    if (++ix[d] < os[d]) break;
                    src -= pstr[d] * os[d];
                    ix[d] = 0;
                }
            }
        });
    }
    return out;
}

// transpose of the last two dims
template <typename S>
TensorT<S> transpose_last2(const TensorT<S>& a) {
    std::vector<int> perm(a.rank());
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[a.rank() - 2], perm[a.rank() - 1]);
    return permute(a, perm);
}

// ---------------------------------------------------------------------------
// softmax along an axis, max-subtracted
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> softmax(const TensorT<S>& a, int axis) {
    const int r = a.rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw ShapeError("softmax axis out of range");
    int64_t outer = 1, inner = 1;
    const int64_t L = a.dim(axis);
    for (int i = 0; i < axis; ++i) outer *= a.dim(i);
    for (int i = axis + 1; i < r; ++i) inner *= a.dim(i);
    TensorT<S> out(a.shape());
    const S* pa = a.data();
    S* po = out.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t in = 0; in < inner; ++in) {
            const S* src = pa + o * L * inner + in;
            S* dst = po + o * L * inner + in;
            S mx = src[0];
            for (int64_t l = 1; l < L; ++l) mx = std::max(mx, src[l * inner]);
            S sum = 0;
            for (int64_t l = 0; l < L; ++l) {
                S e = std::exp(src[l * inner] - mx);
                dst[l * inner] = e;
                sum += e;
            }
            const S isum = S(1) / sum;
            for (int64_t l = 0; l < L; ++l) dst[l * inner] *= isum;
        }
    check_finite(po, out.numel(), "softmax");
    auto* tp = TapeT<S>::active();
    int an = detail::node_on(tp, a);
    if (detail::track_out(out, tp, {an})) {
        int on = out.node();
        auto dy = out.storage();
        tp->record([an, on, outer, inner, L, dy](TapeT<S>& t) {
            const auto& go = t.grad_buf(on);
            auto& ga = t.grad_buf(an);
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t in = 0; in < inner; ++in) {
                    const int64_t base = o * L * inner + in;
                    S dot = 0;
                    for (int64_t l = 0; l < L; ++l) dot += go[base + l * inner] * (*dy)[base + l * inner];
                    for (int64_t l = 0; l < L; ++l) {
                        const int64_t ix = base + l * inner;
                        ga[ix] += (*dy)[ix] * (go[ix] - dot);
                    }
                }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> sum(const TensorT<S>& a) {
    TensorT<S> out(Shape{1});
    const int64_t n = a.numel();
    const S* pa = a.data();
    S acc = 0;
    for (int64_t i = 0; i < n; ++i) acc += pa[i];
    out.data()[0] = acc;
    check_finite(out.data(), 1, "sum");
    auto* tp = TapeT<S>::active();
    int an = detail::node_on(tp, a);
    if (detail::track_out(out, tp, {an})) {
        int on = out.node();
        tp->record([an, on, n](TapeT<S>& t) {
            const S g = t.grad_buf(on)[0];
            auto& ga = t.grad_buf(an);
            for (int64_t i = 0; i < n; ++i) ga[i] += g;
        });
    }
    return out;
}

template <typename S>
TensorT<S> mean(const TensorT<S>& a) {
    return scale(sum(a), S(1) / static_cast<S>(a.numel()));
}

// ---------------------------------------------------------------------------
// row gather / scatter for category attention
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> gather_rows(const TensorT<S>& a, const std::vector<int>& idx) {
    if (a.rank() != 2) throw ShapeError("gather_rows expects [N,C], got " + shape_str(a.shape()));
    const int64_t C = a.dim(1);
    TensorT<S> out(Shape{static_cast<int>(idx.size()), static_cast<int>(C)});
    const S* pa = a.data();
    S* po = out.data();
    for (size_t r = 0; r < idx.size(); ++r)
        std::memcpy(po + r * C, pa + int64_t(idx[r]) * C, sizeof(S) * C);
    auto* tp = TapeT<S>::active();
    int an = detail::node_on(tp, a);
    if (detail::track_out(out, tp, {an})) {
        int on = out.node();
        auto ix = idx;
        tp->record([an, on, ix, C](TapeT<S>& t) {
            const auto& go = t.grad_buf(on);
            auto& ga = t.grad_buf(an);
            for (size_t r = 0; r < ix.size(); ++r)
                for (int64_t c = 0; c < C; ++c) ga[int64_t(ix[r]) * C + c] += go[r * C + c];
        });
    }
    return out;
}

// Places chunk rows at the given row indices of an N x C output. Callers
// guarantee the index lists are disjoint and cover what they need; untouched
// rows stay zero.
template <typename S>
TensorT<S> scatter_rows(const std::vector<TensorT<S>>& chunks,
                        const std::vector<std::vector<int>>& idx, int n_rows) {
    if (chunks.empty()) throw ContractError("scatter_rows with no chunks");
    if (chunks.size() != idx.size()) throw ContractError("scatter_rows chunk/index count mismatch");
    const int64_t C = chunks[0].dim(1);
    TensorT<S> out(Shape{n_rows, static_cast<int>(C)});
    S* po = out.data();
    std::vector<int> in_nodes;
    auto* tp = TapeT<S>::active();
    bool any = false;
    for (size_t ci = 0; ci < chunks.size(); ++ci) {
        const auto& ch = chunks[ci];
        if (ch.dim(1) != C || ch.dim(0) != static_cast<int>(idx[ci].size()))
            throw ShapeError("scatter_rows chunk " + std::to_string(ci) + " has shape " +
                             shape_str(ch.shape()));
        const S* pc = ch.data();
        for (size_t r = 0; r < idx[ci].size(); ++r)
            std::memcpy(po + int64_t(idx[ci][r]) * C, pc + r * C, sizeof(S) * C);
        int nd = detail::node_on(tp, ch);
        in_nodes.push_back(nd);
        any = any || nd >= 0;
    }
    if (tp && any) {
        out.bind_node(tp->alloc_node(out.numel()), tp->id());
        int on = out.node();
        auto ix = idx;
        tp->record([in_nodes, on, ix, C](TapeT<S>& t) {
            const auto& go = t.grad_buf(on);
            for (size_t ci = 0; ci < in_nodes.size(); ++ci) {
                if (in_nodes[ci] < 0) continue;
                auto& gc = t.grad_buf(in_nodes[ci]);
                for (size_t r = 0; r < ix[ci].size(); ++r)
                    for (int64_t c = 0; c < C; ++c)
                        gc[r * C + c] += go[int64_t(ix[ci][r]) * C + c];
            }
        });
    }
    return out;
}

}  // namespace promptsr

#pragma once

// The three attention mechanisms: a multi-head scaled dot-product core shared
// by everything, window self-attention, and category self-attention driven by
// the anchor similarity maps.

#include "promptsr/nn.hpp"

namespace promptsr::attn {

enum class Orientation { kCoarse, kFine };

// A partition of all tokens: every token belongs to exactly one category.
struct CategoryAssignment {
    int num_categories = 0;
    int num_tokens = 0;
    std::vector<int> token_to_category;
    std::vector<std::vector<int>> members;  // raster order inside each category

    bool is_partition() const {
        if (token_to_category.size() != static_cast<size_t>(num_tokens)) return false;
        int64_t total = 0;
        std::vector<char> seen(num_tokens, 0);
        for (const auto& m : members)
            for (int t : m) {
                if (t < 0 || t >= num_tokens || seen[t]) return false;
                seen[t] = 1;
                ++total;
            }
        return total == num_tokens;
    }
};

// token -> index of its most similar anchor; ties go to the lowest index.
// coarse maps are anchor-major [M, HW], fine maps token-major [HW, M].
template <typename S>
CategoryAssignment categorize(const TensorT<S>& m, Orientation orient) {
    if (m.rank() != 2) throw ShapeError("categorize expects a 2-d similarity map");
    const int rows = m.dim(0), cols = m.dim(1);
    const int anchors = orient == Orientation::kCoarse ? rows : cols;
    const int tokens = orient == Orientation::kCoarse ? cols : rows;
    CategoryAssignment a;
    a.num_categories = anchors;
    a.num_tokens = tokens;
    a.token_to_category.resize(tokens);
    a.members.resize(anchors);
    const S* p = m.data();
    for (int t = 0; t < tokens; ++t) {
        int best = 0;
        S bv = orient == Orientation::kCoarse ? p[t] : p[int64_t(t) * cols];
        for (int k = 1; k < anchors; ++k) {
            const S v = orient == Orientation::kCoarse ? p[int64_t(k) * cols + t]
                                                       : p[int64_t(t) * cols + k];
            if (v > bv) {
                bv = v;
                best = k;
            }
        }
        a.token_to_category[t] = best;
        a.members[best].push_back(t);
    }
    return a;
}

template <typename S>
struct AttendResultT {
    TensorT<S> out;
    TensorT<S> mean_logits;  // pre-softmax, averaged over heads, detached
};

// Multi-head scaled dot-product attention over the last two dims.
// q [..., Nq, C], k/v [..., Nk, C]; scale is 1/sqrt(C/heads) per head.
// bias, when defined, must suffix-broadcast into [..., heads, Nq, Nk].
template <typename S>
AttendResultT<S> multi_head_attend(const TensorT<S>& q, const TensorT<S>& k, const TensorT<S>& v,
                                   int heads, const TensorT<S>& bias = {},
                                   bool want_logits = false) {
    const int r = q.rank();
    const int C = q.dim(-1);
    if (C % heads != 0)
        throw ConfigError("channels " + std::to_string(C) + " not divisible by " +
                          std::to_string(heads) + " heads");
    const int Nq = q.dim(-2), Nk = k.dim(-2);
    if (Nk < 1) throw ContractError("attention with no keys");
    if (k.dim(-1) != C || v.dim(-1) != C || v.dim(-2) != Nk)
        throw ShapeError("attend: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                         ", v " + shape_str(v.shape()));
    const int dh = C / heads;
    const S sc = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

    auto split = [&](const TensorT<S>& t, int n) {
        Shape s = t.shape();
        s.pop_back();
        s.back() = n;
        s.push_back(heads);
        s.push_back(dh);
        std::vector<int> perm(r + 1);
        for (int i = 0; i < r - 2; ++i) perm[i] = i;
        perm[r - 2] = r - 1;  // heads forward
        perm[r - 1] = r - 2;  // tokens
        perm[r] = r;
        return permute(reshape(t, s), perm);  // [..., heads, n, dh]
    };
    auto qh = split(q, Nq);
    auto kh = split(k, Nk);
    auto vh = split(v, Nk);

    auto logits = scale(matmul(qh, transpose_last2(kh)), sc);  // [..., heads, Nq, Nk]
    if (bias.defined()) logits = add(logits, bias);
    auto w = softmax(logits, -1);
    auto oh = matmul(w, vh);  // [..., heads, Nq, dh]

    std::vector<int> inv(r + 1);
    for (int i = 0; i < r - 2; ++i) inv[i] = i;
    inv[r - 2] = r - 1;
    inv[r - 1] = r - 2;
    inv[r] = r;
    Shape os = q.shape();
    AttendResultT<S> res;
    res.out = reshape(permute(oh, inv), os);

    if (want_logits) {
        // head average, off the tape: only the categorization consumes it
        Shape ms = logits.shape();
        const int hr = static_cast<int>(ms.size()) - 3;
        Shape out_shape(ms.begin(), ms.end());
        out_shape.erase(out_shape.begin() + hr);
        TensorT<S> m(out_shape);
        const S* pl = logits.data();
        S* pm = m.data();
        int64_t batch = 1;
        for (int i = 0; i < hr; ++i) batch *= ms[i];
        const int64_t plane = int64_t(Nq) * Nk;
        const S inv_h = S(1) / static_cast<S>(heads);
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t i = 0; i < plane; ++i) {
                S acc = 0;
                for (int h = 0; h < heads; ++h) acc += pl[(b * heads + h) * plane + i];
                pm[b * plane + i] = acc * inv_h;
            }
        res.mean_logits = m;
    }
    return res;
}

// Self-attention inside non-overlapping win x win windows. q/k/v are already
// projected [H, W, C] maps; non-divisible sizes are reflect-padded and the
// result cropped back.
template <typename S>
TensorT<S> wsa_attend(const TensorT<S>& q, const TensorT<S>& k, const TensorT<S>& v, int win,
                      int heads, const TensorT<S>& bias = {}) {
    const int H = q.dim(0), W = q.dim(1);
    const int Hp = (H + win - 1) / win * win, Wp = (W + win - 1) / win * win;
    auto prep = [&](const TensorT<S>& t) {
        return nn::window_partition(nn::pad_reflect_br(t, Hp, Wp), win);
    };
    auto res = multi_head_attend(prep(q), prep(k), prep(v), heads, bias, false);
    auto merged = nn::window_merge(res.out, Hp, Wp, win);
    return nn::crop_tl(merged, H, W);
}

// Self-attention inside categories, processed in raster-order chunks of at
// most sub_size tokens. Tokens in different categories never interact; the
// trailing short chunk attends among itself only.
template <typename S>
TensorT<S> csa_attend(const TensorT<S>& q, const TensorT<S>& k, const TensorT<S>& v,
                      const CategoryAssignment& assign, int sub_size, int heads) {
    if (sub_size <= 0) throw ConfigError("sub-category size must be positive");
    const int N = q.dim(0);
    if (assign.num_tokens != N)
        throw ContractError("assignment covers " + std::to_string(assign.num_tokens) +
                            " tokens, input has " + std::to_string(N));
    std::vector<TensorT<S>> outs;
    std::vector<std::vector<int>> idxs;
    for (const auto& cat : assign.members) {
        for (size_t start = 0; start < cat.size(); start += sub_size) {
            const size_t end = std::min(cat.size(), start + sub_size);
            std::vector<int> chunk(cat.begin() + start, cat.begin() + end);
            auto qc = gather_rows(q, chunk);
            auto kc = gather_rows(k, chunk);
            auto vc = gather_rows(v, chunk);
            outs.push_back(multi_head_attend(qc, kc, vc, heads).out);
            idxs.push_back(std::move(chunk));
        }
    }
    return scatter_rows(outs, idxs, N);
}

}  // namespace promptsr::attn

#pragma once

#include <string>
#include <vector>

#include "mmm/data.hpp"
#include "mmm/encoder.hpp"
#include "mmm/gru.hpp"
#include "mmm/tensor.hpp"

namespace mmm {

// Working memories: passage columns and question-option columns of H, both in
// original sequence order. Special and pad columns belong to neither.
template <class Real>
struct Memories {
    Tensor<Real> h_p;   // d x p
    Tensor<Real> h_qo;  // d x q
};

template <class Real>
struct ReasoningTrace {
    std::vector<Real> alpha;  // step-0 self-attention over passage columns
    struct Step {
        std::vector<Real> beta;  // attention over question-option columns
        std::vector<Real> x;     // attended read
        std::vector<Real> s;     // state after the step
    };
    std::vector<Step> steps;
};

template <class Real>
struct ManParams {
    Tensor<Real> w1;  // d
    Tensor<Real> w2;  // 2d
    Tensor<Real> w3;  // 4d
    GruParams<Real> gru;
    int reasoning_steps = 2;  // K

    static ManParams init(int d, int k, Rng& rng) {
        ManParams p;
        p.reasoning_steps = k;
        p.w1 = Tensor<Real>::randn({d, 1}, rng, Real(0.02));
        p.w2 = Tensor<Real>::randn({2 * d, 1}, rng, Real(0.02));
        // zero final projection: untrained logits are exactly zero
        p.w3 = Tensor<Real>::zeros({4 * d, 1}, true);
        p.gru = GruParams<Real>::init(d, rng);
        return p;
    }

    NamedParams<Real> params() {
        NamedParams<Real> out;
        out.emplace_back("man.w1", w1);
        out.emplace_back("man.w2", w2);
        out.emplace_back("man.w3", w3);
        gru.append_params(out, "man.gru.");
        return out;
    }
};

// Two-layer classifier: tanh hidden layer of width d, linear scalar output.
template <class Real>
struct FcnnParams {
    Tensor<Real> w_hidden;  // d x d
    Tensor<Real> b_hidden;  // d
    Tensor<Real> w_out;     // d
    Tensor<Real> b_out;     // scalar

    static FcnnParams init(int d, Rng& rng) {
        FcnnParams p;
        p.w_hidden = Tensor<Real>::randn({d, d}, rng, Real(0.02));
        p.b_hidden = Tensor<Real>::zeros({d, 1}, true);
        p.w_out = Tensor<Real>::zeros({d, 1}, true);
        p.b_out = Tensor<Real>::zeros({1, 1}, true);
        return p;
    }

    NamedParams<Real> params() {
        NamedParams<Real> out;
        out.emplace_back("fcnn.w_hidden", w_hidden);
        out.emplace_back("fcnn.b_hidden", b_hidden);
        out.emplace_back("fcnn.w_out", w_out);
        out.emplace_back("fcnn.b_out", b_out);
        return out;
    }
};

// Three-way pair-classification head on the pooled state (stage-1 task).
template <class Real>
struct PairHead {
    Tensor<Real> w_hidden;  // d x d
    Tensor<Real> b_hidden;  // d
    Tensor<Real> w_out;     // 3 x d
    Tensor<Real> b_out;     // 3

    static PairHead init(int d, Rng& rng) {
        PairHead p;
        p.w_hidden = Tensor<Real>::randn({d, d}, rng, Real(0.02));
        p.b_hidden = Tensor<Real>::zeros({d, 1}, true);
        p.w_out = Tensor<Real>::zeros({3, d}, true);
        p.b_out = Tensor<Real>::zeros({3, 1}, true);
        return p;
    }

    NamedParams<Real> params() {
        NamedParams<Real> out;
        out.emplace_back("pair.w_hidden", w_hidden);
        out.emplace_back("pair.b_hidden", b_hidden);
        out.emplace_back("pair.w_out", w_out);
        out.emplace_back("pair.b_out", b_out);
        return out;
    }

    Tensor<Real> logits(const Tensor<Real>& pooled_state) const {
        Tensor<Real> h = tanh(add(matmul(w_hidden, pooled_state), b_hidden));
        return add(matmul(w_out, h), b_out);
    }
};

template <class Real>
Memories<Real> build_memories(const Tensor<Real>& h, const std::vector<Role>& roles) {
    if (static_cast<int>(roles.size()) != h.cols())
        throw ShapeError("build_memories: role count must equal columns of H");
    std::vector<int> p_idx, qo_idx;
    for (int j = 0; j < h.cols(); ++j) {
        if (roles[static_cast<size_t>(j)] == Role::Passage) p_idx.push_back(j);
        if (roles[static_cast<size_t>(j)] == Role::QO) qo_idx.push_back(j);
    }
    if (p_idx.empty() || qo_idx.empty())
        throw UsageError("build_memories: degenerate input, need at least one passage and one "
                         "question-option column");
    return Memories<Real>{gather_cols(h, p_idx), gather_cols(h, qo_idx)};
}

// s0 = sum_i alpha_i H_i^P with alpha = softmax(w1^T H^P)
template <class Real>
Tensor<Real> init_state(const Tensor<Real>& h_p, const Tensor<Real>& w1,
                        ReasoningTrace<Real>* trace = nullptr) {
    Tensor<Real> alpha = softmax(matmul(transpose(w1), h_p));
    if (trace) trace->alpha = alpha.value();
    return matmul(h_p, transpose(alpha));
}

// One beta-attention read over H^QO with query s_prev:
//   beta_i = softmax(w2^T [s_prev; H_i^QO]),  x = sum_i beta_i H_i^QO
// The state half of w2 contributes w2_state^T s_prev to every score, a
// per-read constant that cancels in the softmax, so it is not materialized
// in the graph.
template <class Real>
std::pair<Tensor<Real>, Tensor<Real>> attention_read(const Tensor<Real>& s_prev,
                                                     const Tensor<Real>& h_qo,
                                                     const Tensor<Real>& w2) {
    const int d = s_prev.rows();
    if (w2.rows() != 2 * d) throw ShapeError("attention_read: w2 must have length 2d");
    Tensor<Real> w2_mem = slice_rows(w2, d, 2 * d);
    Tensor<Real> scores = matmul(transpose(w2_mem), h_qo);
    Tensor<Real> beta = softmax(scores);
    Tensor<Real> x = matmul(h_qo, transpose(beta));
    return {x, beta};
}

// Full reasoning step: attended read then GRU state update.
template <class Real>
std::pair<Tensor<Real>, Tensor<Real>> reasoning_step(const Tensor<Real>& s_prev,
                                                     const Tensor<Real>& h_qo,
                                                     const ManParams<Real>& params,
                                                     ReasoningTrace<Real>* trace = nullptr) {
    auto [x, beta] = attention_read(s_prev, h_qo, params.w2);
    Tensor<Real> s = gru_cell(s_prev, x, params.gru);
    if (trace) trace->steps.push_back({beta.value(), x.value(), s.value()});
    return {s, x};
}

// w3^T [s; x; |s - x|; s .* x]
template <class Real>
Tensor<Real> final_logit(const Tensor<Real>& s, const Tensor<Real>& x, const Tensor<Real>& w3) {
    Tensor<Real> feat = concat_rows(std::vector<Tensor<Real>>{s, x, abs(sub(s, x)), mul(s, x)});
    if (w3.rows() != feat.rows()) throw ShapeError("final_logit: w3 must have length 4d");
    return matmul(transpose(w3), feat);
}

template <class Real>
Tensor<Real> fcnn_logit(const Tensor<Real>& pooled_state, const FcnnParams<Real>& p) {
    Tensor<Real> h = tanh(add(matmul(p.w_hidden, pooled_state), p.b_hidden));
    return add(matmul(transpose(p.w_out), h), p.b_out);
}

enum class ClassifierKind { Man, Fcnn };

inline const char* classifier_kind_name(ClassifierKind k) {
    return k == ClassifierKind::Man ? "man" : "fcnn";
}

// Top-level classifier: MAN with K reasoning steps, or the FCNN baseline.
// K = 0 dispatches to the FCNN path, so a MAN configured with K = 0 carries
// FCNN parameters instead of MAN parameters.
template <class Real>
struct TopClassifier {
    ClassifierKind kind = ClassifierKind::Man;
    int reasoning_steps = 2;
    ManParams<Real> man;
    FcnnParams<Real> fcnn;

    static TopClassifier make(ClassifierKind kind, int k, int d, uint64_t seed) {
        if (k < 0) throw UsageError("classifier: reasoning step count must be >= 0");
        TopClassifier c;
        c.kind = kind;
        c.reasoning_steps = kind == ClassifierKind::Fcnn ? 0 : k;
        Rng rng(mix_seed(seed, "classifier-init"));
        if (kind == ClassifierKind::Fcnn || k == 0)
            c.fcnn = FcnnParams<Real>::init(d, rng);
        else
            c.man = ManParams<Real>::init(d, k, rng);
        return c;
    }

    bool uses_fcnn_path() const { return kind == ClassifierKind::Fcnn || reasoning_steps == 0; }

    NamedParams<Real> params() {
        return uses_fcnn_path() ? fcnn.params() : man.params();
    }
};

// Scalar logit for one packed sequence representation. K = 0 (or the FCNN
// classifier) scores pooled(H); K >= 1 runs the memory reasoning loop.
template <class Real>
Tensor<Real> man_forward(const Tensor<Real>& h, const std::vector<Role>& roles,
                         const TopClassifier<Real>& clf, ReasoningTrace<Real>* trace = nullptr) {
    if (clf.uses_fcnn_path()) return fcnn_logit(pooled(h), clf.fcnn);

    const int k = clf.reasoning_steps;
    Memories<Real> mem = build_memories(h, roles);
    Tensor<Real> s = init_state(mem.h_p, clf.man.w1, trace);
    if (k == 1) {
        auto [x, beta] = attention_read(s, mem.h_qo, clf.man.w2);
        if (trace) trace->steps.push_back({beta.value(), x.value(), s.value()});
        return final_logit(s, x, clf.man.w3);
    }
    Tensor<Real> x;
    for (int step = 1; step <= k - 1; ++step) {
        auto [s_next, x_next] = reasoning_step(s, mem.h_qo, clf.man, trace);
        s = s_next;
        x = x_next;
    }
    return final_logit(s, x, clf.man.w3);
}

}  // namespace mmm

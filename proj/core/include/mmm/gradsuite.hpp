#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mmm/data.hpp"
#include "mmm/encoder.hpp"
#include "mmm/grad_check.hpp"
#include "mmm/gru.hpp"
#include "mmm/man.hpp"
#include "mmm/mcqa.hpp"

namespace mmm {

struct GradCase {
    std::string name;
    double max_rel_err = 0;
};

struct GradSuiteResult {
    std::vector<GradCase> cases;

    double worst() const {
        double w = 0;
        for (const auto& c : cases) w = std::max(w, c.max_rel_err);
        return w;
    }
};

namespace gradsuite_detail {

template <class Real>
Tensor<Real> rand_leaf(Rng& rng, std::vector<int> shape, Real scale = Real(0.7)) {
    Tensor<Real> t = Tensor<Real>::randn(std::move(shape), rng, scale, true);
    return t;
}

// Reduce an arbitrary tensor to a scalar with fixed random weights so every
// output coordinate contributes a distinct gradient path.
template <class Real>
Tensor<Real> reduce(const Tensor<Real>& t, Rng& rng) {
    Tensor<Real> w = Tensor<Real>::randn(t.shape(), rng, Real(1), false);
    return sum(mul(t, w));
}

}  // namespace gradsuite_detail

// Finite-difference checks for every autodiff primitive, a batch of random
// compositions, the small encoder, MAN at several reasoning depths and the
// full per-example scoring loss.
template <class Real>
GradSuiteResult run_grad_suite(int composition_cases = 20, uint64_t seed = 2024) {
    using gradsuite_detail::rand_leaf;
    using gradsuite_detail::reduce;
    GradSuiteResult result;
    auto check = [&](const std::string& name, std::vector<Tensor<Real>> params,
                     const std::function<Tensor<Real>()>& fn) {
        result.cases.push_back({name, static_cast<double>(grad_check<Real>(fn, params))});
    };

    Rng rng(seed);

    {
        auto a = rand_leaf<Real>(rng, {3, 4}), b = rand_leaf<Real>(rng, {3, 4});
        const uint64_t rs = rng.next_u64();
        check("add", {a, b}, [=]() {
            Rng r2(rs);
            return reduce(add(a, b), r2);
        });
    }
    {
        auto a = rand_leaf<Real>(rng, {3, 4}), b = rand_leaf<Real>(rng, {3, 4});
        const uint64_t rs = rng.next_u64();
        check("sub", {a, b}, [=]() {
            Rng r2(rs);
            return reduce(sub(a, b), r2);
        });
    }
    {
        auto a = rand_leaf<Real>(rng, {3, 4}), b = rand_leaf<Real>(rng, {3, 4});
        const uint64_t rs = rng.next_u64();
        check("mul", {a, b}, [=]() {
            Rng r2(rs);
            return reduce(mul(a, b), r2);
        });
    }
    {
        auto a = rand_leaf<Real>(rng, {3, 4});
        const uint64_t rs = rng.next_u64();
        check("scale", {a}, [=]() {
            Rng r2(rs);
            return reduce(scale(a, Real(1.37)), r2);
        });
    }
    {
        auto a = rand_leaf<Real>(rng, {3, 4}), b = rand_leaf<Real>(rng, {4, 2});
        const uint64_t rs = rng.next_u64();
        check("matmul", {a, b}, [=]() {
            Rng r2(rs);
            return reduce(matmul(a, b), r2);
        });
    }
    {
        auto a = rand_leaf<Real>(rng, {3, 4});
        const uint64_t rs = rng.next_u64();
        check("transpose", {a}, [=]() {
            Rng r2(rs);
            return reduce(transpose(a), r2);
        });
    }
    {
        auto a = rand_leaf<Real>(rng, {2, 3}), b = rand_leaf<Real>(rng, {4, 3});
        const uint64_t rs = rng.next_u64();
        check("concat", {a, b}, [=]() {
            Rng r2(rs);
            return reduce(concat_rows(a, b), r2);
        });
    }
    {
        auto a = rand_leaf<Real>(rng, {5, 3});
        const uint64_t rs = rng.next_u64();
        check("slice_rows", {a}, [=]() {
            Rng r2(rs);
            return reduce(slice_rows(a, 1, 4), r2);
        });
    }
    {
        auto a = rand_leaf<Real>(rng, {3, 5});
        const uint64_t rs = rng.next_u64();
        check("slice_cols", {a}, [=]() {
            Rng r2(rs);
            return reduce(slice_cols(a, 1, 4), r2);
        });
    }
    {
        auto a = rand_leaf<Real>(rng, {3, 5});
        const uint64_t rs = rng.next_u64();
        std::vector<int> idx = {4, 0, 2, 2};
        check("gather_cols", {a}, [=]() {
            Rng r2(rs);
            return reduce(gather_cols(a, idx), r2);
        });
    }
    {
        auto a = rand_leaf<Real>(rng, {3, 4});
        const uint64_t rs = rng.next_u64();
        check("tanh", {a}, [=]() {
            Rng r2(rs);
            return reduce(tanh(a), r2);
        });
    }
    {
        auto a = rand_leaf<Real>(rng, {3, 4});
        const uint64_t rs = rng.next_u64();
        check("sigmoid", {a}, [=]() {
            Rng r2(rs);
            return reduce(sigmoid(a), r2);
        });
    }
    {
        // keep values away from zero: |x| is not differentiable there
        auto a = rand_leaf<Real>(rng, {3, 4});
        for (auto& v : a.value()) v += v >= 0 ? Real(0.5) : Real(-0.5);
        const uint64_t rs = rng.next_u64();
        check("abs", {a}, [=]() {
            Rng r2(rs);
            return reduce(abs(a), r2);
        });
    }
    {
        auto a = rand_leaf<Real>(rng, {3, 4});
        check("sum", {a}, [=]() { return sum(a); });
    }
    {
        auto a = rand_leaf<Real>(rng, {6, 1});
        const uint64_t rs = rng.next_u64();
        check("softmax", {a}, [=]() {
            Rng r2(rs);
            return reduce(softmax(a), r2);
        });
    }
    {
        auto a = rand_leaf<Real>(rng, {4, 5});
        const uint64_t rs = rng.next_u64();
        check("softmax_rows", {a}, [=]() {
            Rng r2(rs);
            return reduce(softmax_rows(a), r2);
        });
    }
    {
        auto x = rand_leaf<Real>(rng, {4, 3});
        auto g = rand_leaf<Real>(rng, {4, 1});
        auto b = rand_leaf<Real>(rng, {4, 1});
        const uint64_t rs = rng.next_u64();
        check("layer_norm_cols", {x, g, b}, [=]() {
            Rng r2(rs);
            return reduce(layer_norm_cols(x, g, b), r2);
        });
    }
    {
        auto a = rand_leaf<Real>(rng, {4, 4});
        const uint64_t mask_seed = rng.next_u64();
        const uint64_t rs = rng.next_u64();
        check("dropout", {a}, [=]() {
            Rng mask_rng(mask_seed);  // same mask on every evaluation
            Rng r2(rs);
            return reduce(dropout(a, Real(0.3), true, mask_rng), r2);
        });
    }
    {
        auto table = rand_leaf<Real>(rng, {7, 3});
        std::vector<int> ids = {1, 5, 0, 5};
        const uint64_t rs = rng.next_u64();
        check("embed_cols", {table}, [=]() {
            Rng r2(rs);
            return reduce(embed_cols(table, ids), r2);
        });
    }
    {
        auto a = rand_leaf<Real>(rng, {3, 4});
        auto v = rand_leaf<Real>(rng, {3, 1});
        const uint64_t rs = rng.next_u64();
        check("add_col_broadcast", {a, v}, [=]() {
            Rng r2(rs);
            return reduce(add_col_broadcast(a, v), r2);
        });
    }
    {
        auto a = rand_leaf<Real>(rng, {3, 4});
        auto s = rand_leaf<Real>(rng, {1, 1});
        const uint64_t rs = rng.next_u64();
        check("add_scalar_broadcast", {a, s}, [=]() {
            Rng r2(rs);
            return reduce(add_scalar_broadcast(a, s), r2);
        });
    }
    {
        auto logits = rand_leaf<Real>(rng, {5, 1});
        check("cross_entropy", {logits}, [=]() { return cross_entropy_logits(logits, 2); });
    }
    {
        auto a = rand_leaf<Real>(rng, {3, 4});
        const uint64_t rs = rng.next_u64();
        check("reshape", {a}, [=]() {
            Rng r2(rs);
            return reduce(reshape(a, {4, 3}), r2);
        });
    }
    {
        const int d = 5;
        Rng init(rng.next_u64());
        GruParams<Real> p = GruParams<Real>::init(d, init, Real(0.4));
        auto s = rand_leaf<Real>(rng, {d, 1});
        auto x = rand_leaf<Real>(rng, {d, 1});
        std::vector<Tensor<Real>> params = {s, x, p.wz, p.uz, p.bz, p.wr, p.ur, p.br, p.wh, p.uh, p.bh};
        const uint64_t rs = rng.next_u64();
        check("gru_cell", params, [=]() {
            Rng r2(rs);
            return reduce(gru_cell(s, x, p), r2);
        });
    }

    // random compositions of the primitive set
    for (int c = 0; c < composition_cases; ++c) {
        Rng case_rng(mix_seed(seed, static_cast<uint64_t>(c + 1)));
        const int d = 3 + case_rng.uniform_int(3);
        const int l = 3 + case_rng.uniform_int(3);
        auto x = rand_leaf<Real>(case_rng, {d, l});
        auto w = rand_leaf<Real>(case_rng, {d, d});
        auto v = rand_leaf<Real>(case_rng, {d, 1});
        const int pick = case_rng.uniform_int(4);
        const uint64_t reduce_seed = case_rng.next_u64();
        check("composition_" + std::to_string(c), {x, w, v}, [=]() {
            Tensor<Real> y = matmul(w, x);
            y = add_col_broadcast(y, v);
            switch (pick) {
                case 0: y = tanh(y); break;
                case 1: y = sigmoid(y); break;
                case 2: y = softmax_rows(y); break;
                default: y = mul(tanh(y), sigmoid(y)); break;
            }
            y = add(y, x);
            Tensor<Real> pool = matmul(y, transpose(softmax(matmul(transpose(v), y))));
            Tensor<Real> feat = concat_rows(std::vector<Tensor<Real>>{pool, abs(pool), mul(pool, pool)});
            Rng r2(reduce_seed);
            return reduce(feat, r2);
        });
    }

    // cross-entropy through the d=16 encoder. The default 0.02-std init makes
    // attention-score gradients vanish below finite-difference resolution, so
    // the case redraws weights at a scale where every path carries signal.
    {
        EncoderConfig cfg;
        cfg.vocab_size = 24;
        cfg.hidden_dim = 16;
        cfg.layers = 2;
        cfg.heads = 4;
        cfg.max_len = 12;
        cfg.dropout = 0.0;
        cfg.seed = mix_seed(seed, "encoder-case");
        Encoder<Real> enc(cfg);
        Rng wrng(mix_seed(seed, "encoder-weights"));
        for (auto& [name, t] : enc.params()) {
            if (name.find("ln") != std::string::npos) continue;
            for (auto& v : t.value()) v = static_cast<Real>(wrng.normal(0.0, 0.3));
        }
        EncodedSequence seq;
        seq.ids = {2, 5, 9, 3, 11, 17, 3, 0, 0};
        seq.roles = {Role::Special, Role::Passage, Role::Passage, Role::Special, Role::QO,
                     Role::QO,      Role::Special, Role::Pad,     Role::Pad};
        seq.attention_mask = {1, 1, 1, 1, 1, 1, 1, 0, 0};
        Rng head_rng(mix_seed(seed, "encoder-head"));
        auto w_cls = rand_leaf<Real>(head_rng, {3, 16}, Real(0.3));
        std::vector<Tensor<Real>> params;
        for (auto& [name, t] : enc.params()) params.push_back(t);
        params.push_back(w_cls);
        Rng unused(0);
        check("encoder_cross_entropy", params, [=, &unused]() mutable {
            Tensor<Real> h = enc.encode(seq, false, unused);
            return cross_entropy_logits(matmul(w_cls, pooled(h)), 1);
        });
    }

    // full MAN gradient at several depths, including the input representation
    for (int k : {1, 2, 5}) {
        const int d = 4, p = 3, q = 3;
        Rng case_rng(mix_seed(seed, "man-k" + std::to_string(k)));
        auto h = rand_leaf<Real>(case_rng, {d, p + q + 3});
        std::vector<Role> roles = {Role::Special, Role::Passage, Role::Passage, Role::Passage,
                                   Role::Special, Role::QO,      Role::QO,      Role::QO,
                                   Role::Special};
        TopClassifier<Real> clf =
            TopClassifier<Real>::make(ClassifierKind::Man, k, d, case_rng.next_u64());
        // the zero-init w3 and the 0.02-std attention vectors would null or
        // starve most gradient paths; redraw at O(0.5)
        for (auto& [name, t] : clf.params())
            for (auto& v : t.value()) v = static_cast<Real>(case_rng.normal(0.0, 0.5));
        std::vector<Tensor<Real>> params = {h};
        for (auto& [name, t] : clf.params()) params.push_back(t);
        check("man_forward_k" + std::to_string(k), params,
              [=]() { return man_forward(h, roles, clf); });
    }

    // loss of score_options on a toy example
    {
        Rng case_rng(mix_seed(seed, "score-case"));
        Vocabulary vocab(std::vector<std::string>{"ka", "lo", "mi", "na", "po", "ra", "su", "ti",
                                                  "what", "about", "?"});
        EncoderConfig cfg;
        cfg.vocab_size = vocab.size();
        cfg.hidden_dim = 16;
        cfg.layers = 1;
        cfg.heads = 2;
        cfg.max_len = 24;
        cfg.dropout = 0.0;  // scoring gradients need a deterministic forward
        cfg.seed = case_rng.next_u64();
        Encoder<Real> enc(cfg);
        Rng wrng(mix_seed(seed, "score-weights"));
        for (auto& [name, t] : enc.params()) {
            if (name.find("ln") != std::string::npos) continue;
            for (auto& v : t.value()) v = static_cast<Real>(wrng.normal(0.0, 0.3));
        }
        TopClassifier<Real> clf =
            TopClassifier<Real>::make(ClassifierKind::Man, 2, 16, case_rng.next_u64());
        for (auto& [name, t] : clf.params())
            for (auto& v : t.value()) v = static_cast<Real>(wrng.normal(0.0, 0.4));
        MCQAExample ex;
        ex.id = "grad-toy";
        ex.passage = {"ka lo mi", "na po ra"};
        ex.question = "what about ka ?";
        ex.options = {"su ti", "lo na"};
        ex.label = 0;
        ScoringOptions opts;
        opts.speaker_normalize = false;
        std::vector<Tensor<Real>> params;
        for (auto& [name, t] : enc.params()) params.push_back(t);
        for (auto& [name, t] : clf.params()) params.push_back(t);
        Rng unused(0);
        check("score_options_loss", params, [=, &unused]() mutable {
            Tensor<Real> logits = score_options(ex, enc, clf, vocab, opts, true, unused);
            return cross_entropy_logits(logits, *ex.label);
        });
    }

    return result;
}

}  // namespace mmm

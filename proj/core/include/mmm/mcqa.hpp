#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mmm/data.hpp"
#include "mmm/encoder.hpp"
#include "mmm/man.hpp"
#include "mmm/tensor.hpp"

namespace mmm {

enum class SnippetAggregation { Sum, Max };

struct ScoringOptions {
    bool speaker_normalize = true;
    SnippetAggregation aggregation = SnippetAggregation::Sum;
};

// Overlapping [start, end) ranges covering `length` tokens: starts advance by
// window - overlap and the final range is the first one that reaches the end.
inline std::vector<std::pair<int, int>> sliding_window_ranges(int length, int window, int overlap) {
    if (window <= 0) throw UsageError("sliding window: window must be positive");
    if (overlap < 0 || overlap >= window)
        throw UsageError("sliding window: overlap must be in [0, window)");
    if (length <= 0) throw UsageError("sliding window: length must be positive");
    const int stride = window - overlap;
    std::vector<std::pair<int, int>> out;
    for (int start = 0;; start += stride) {
        const int end = std::min(start + window, length);
        out.emplace_back(start, end);
        if (end == length) break;
    }
    return out;
}

inline std::vector<std::vector<std::string>> sliding_window_split(
    const std::vector<std::string>& passage_tokens, int window, int overlap) {
    auto ranges = sliding_window_ranges(static_cast<int>(passage_tokens.size()), window, overlap);
    std::vector<std::vector<std::string>> out;
    out.reserve(ranges.size());
    for (auto [a, b] : ranges)
        out.emplace_back(passage_tokens.begin() + a, passage_tokens.begin() + b);
    return out;
}

// Elementwise aggregation of per-snippet logit vectors.
inline std::vector<double> aggregate_snippet_logits(const std::vector<std::vector<double>>& per_snippet,
                                                    SnippetAggregation mode = SnippetAggregation::Sum) {
    if (per_snippet.empty()) throw UsageError("aggregate_snippet_logits: empty list");
    std::vector<double> out = per_snippet[0];
    for (size_t s = 1; s < per_snippet.size(); ++s) {
        if (per_snippet[s].size() != out.size())
            throw ShapeError("aggregate_snippet_logits: logit length mismatch");
        for (size_t i = 0; i < out.size(); ++i)
            out[i] = mode == SnippetAggregation::Sum ? out[i] + per_snippet[s][i]
                                                     : std::max(out[i], per_snippet[s][i]);
    }
    return out;
}

// argmax with ties broken toward the lowest index
template <class Real>
int predict(const std::vector<Real>& logits) {
    if (logits.empty()) throw UsageError("predict: empty logits");
    int best = 0;
    for (int i = 1; i < static_cast<int>(logits.size()); ++i)
        if (logits[static_cast<size_t>(i)] > logits[static_cast<size_t>(best)]) best = i;
    return best;
}

template <class Real>
Tensor<Real> loss(const Tensor<Real>& logits, int label) {
    return cross_entropy_logits(logits, label);
}

// One example packed for the model: snippets x options. All options of one
// snippet share the same passage range, so per-snippet logit vectors align.
struct PackedMcqa {
    std::vector<std::vector<EncodedSequence>> snippets;  // [snippet][option]
    std::optional<int> label;
};

// Tokenize, optionally speaker-normalize, and pack every (snippet, option)
// sequence. The passage window budget is max_len minus the question, the
// longest option and the three special tokens; overlap is half the budget.
inline PackedMcqa pack_mcqa_example(const MCQAExample& example, const Vocabulary& vocab, int max_len,
                                    bool speaker_normalize_flag) {
    if (example.options.size() < 2) throw UsageError("score_options: need at least two options");
    std::vector<std::string> passage_tokens;
    for (const auto& utt : example.passage) {
        const std::string text = speaker_normalize_flag ? speaker_normalize(utt) : utt;
        for (auto& tok : tokenize(text)) passage_tokens.push_back(std::move(tok));
    }
    if (passage_tokens.empty()) throw UsageError("score_options: empty passage");
    const auto question_tokens = tokenize(example.question);
    if (question_tokens.empty()) throw UsageError("score_options: empty question");
    std::vector<std::vector<std::string>> option_tokens;
    size_t longest_option = 0;
    for (const auto& o : example.options) {
        option_tokens.push_back(tokenize(o));
        if (option_tokens.back().empty()) throw UsageError("score_options: empty option");
        longest_option = std::max(longest_option, option_tokens.back().size());
    }

    const int budget = max_len - static_cast<int>(question_tokens.size()) -
                       static_cast<int>(longest_option) - 3;
    if (budget < 1) throw UsageError("score_options: question and options leave no passage budget");

    std::vector<std::pair<int, int>> ranges;
    if (static_cast<int>(passage_tokens.size()) <= budget)
        ranges.emplace_back(0, static_cast<int>(passage_tokens.size()));
    else
        ranges = sliding_window_ranges(static_cast<int>(passage_tokens.size()), budget, budget / 2);

    PackedMcqa packed;
    packed.label = example.label;
    for (auto [a, b] : ranges) {
        std::vector<std::string> window(passage_tokens.begin() + a, passage_tokens.begin() + b);
        std::vector<EncodedSequence> group;
        group.reserve(option_tokens.size());
        for (const auto& opt : option_tokens)
            group.push_back(strip_padding(pack_sequence(window, question_tokens, opt, vocab, max_len)));
        packed.snippets.push_back(std::move(group));
    }
    return packed;
}

// Logit vector (n x 1 graph tensor) for one snippet group; logit i depends
// only on option i's sequence.
template <class Real>
Tensor<Real> group_logits(const std::vector<EncodedSequence>& group, const Encoder<Real>& encoder,
                          const TopClassifier<Real>& clf, bool train, Rng& rng) {
    std::vector<Tensor<Real>> logits;
    logits.reserve(group.size());
    for (const auto& seq : group) {
        Tensor<Real> h = encoder.encode(seq, train, rng);
        logits.push_back(man_forward(h, seq.roles, clf));
    }
    return concat_rows(logits);
}

// Aggregated option logits for a whole example. Training mode keeps the
// graph alive (sum aggregation); evaluation detaches and honors the
// configured aggregation.
template <class Real>
Tensor<Real> score_options(const MCQAExample& example, const Encoder<Real>& encoder,
                           const TopClassifier<Real>& clf, const Vocabulary& vocab,
                           const ScoringOptions& opts, bool train, Rng& rng) {
    PackedMcqa packed =
        pack_mcqa_example(example, vocab, encoder.config().max_len, opts.speaker_normalize);
    if (train) {
        Tensor<Real> total = group_logits(packed.snippets[0], encoder, clf, true, rng);
        for (size_t s = 1; s < packed.snippets.size(); ++s)
            total = add(total, group_logits(packed.snippets[s], encoder, clf, true, rng));
        return total;
    }
    NoGradGuard ng;
    std::vector<std::vector<double>> per_snippet;
    for (const auto& group : packed.snippets) {
        Tensor<Real> v = group_logits(group, encoder, clf, false, rng);
        per_snippet.emplace_back(v.value().begin(), v.value().end());
    }
    auto agg = aggregate_snippet_logits(per_snippet, opts.aggregation);
    std::vector<Real> out(agg.begin(), agg.end());
    const int n = static_cast<int>(out.size());
    return Tensor<Real>::from({n, 1}, std::move(out));
}

}  // namespace mmm

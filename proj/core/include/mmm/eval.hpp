#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mmm/data.hpp"
#include "mmm/mcqa.hpp"

namespace mmm {

struct EvalRecord {
    std::string id;
    int predicted = -1;
    int gold = -1;
    std::vector<double> logits;
};

struct EvalReport {
    std::string dataset_id;
    double accuracy = 0;
    std::vector<EvalRecord> records;
};

// Accuracy over labeled examples given any per-example scorer. The scorer
// returns aggregated option logits.
inline EvalReport evaluate_with(const std::function<std::vector<double>(const MCQAExample&)>& scorer,
                                const std::vector<MCQAExample>& dataset,
                                const std::string& dataset_id) {
    if (dataset.empty()) throw UsageError("evaluate: empty dataset");
    EvalReport report;
    report.dataset_id = dataset_id;
    long correct = 0;
    for (const auto& e : dataset) {
        if (!e.label.has_value()) throw UsageError("evaluate: unlabeled example '" + e.id + "'");
        EvalRecord rec;
        rec.id = e.id;
        rec.gold = *e.label;
        rec.logits = scorer(e);
        rec.predicted = predict(rec.logits);
        if (rec.predicted == rec.gold) ++correct;
        report.records.push_back(std::move(rec));
    }
    report.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
    return report;
}

// Standard model path: eval mode, sliding window where needed, configured
// aggregation.
template <class Real>
EvalReport evaluate(const Encoder<Real>& encoder, const TopClassifier<Real>& clf,
                    const Vocabulary& vocab, const ScoringOptions& opts,
                    const std::vector<MCQAExample>& dataset, const std::string& dataset_id) {
    Rng unused(0);
    auto scorer = [&](const MCQAExample& e) {
        Tensor<Real> logits = score_options(e, encoder, clf, vocab, opts, false, unused);
        return std::vector<double>(logits.value().begin(), logits.value().end());
    };
    return evaluate_with(scorer, dataset, dataset_id);
}

// 3-way pair-classification accuracy (stage-1 dev metric).
template <class Real>
double pair_accuracy(const Encoder<Real>& encoder, const PairHead<Real>& head,
                     const Vocabulary& vocab, const std::vector<PairExample>& dataset) {
    if (dataset.empty()) throw UsageError("pair_accuracy: empty dataset");
    NoGradGuard ng;
    Rng unused(0);
    long correct = 0;
    for (const auto& e : dataset) {
        EncodedSequence seq = strip_padding(
            pack_pair(tokenize(e.premise), tokenize(e.hypothesis), vocab, encoder.config().max_len));
        Tensor<Real> h = encoder.encode(seq, false, unused);
        Tensor<Real> logits = head.logits(pooled(h));
        if (predict(logits.value()) == e.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

// ---------------------------------------------------------------------------
// experiment tables
// ---------------------------------------------------------------------------

struct ExperimentCell {
    std::vector<std::pair<uint64_t, double>> runs;  // (seed, accuracy)

    double mean() const {
        if (runs.empty()) return 0;
        double s = 0;
        for (auto [seed, acc] : runs) s += acc;
        return s / static_cast<double>(runs.size());
    }

    double stddev() const {
        if (runs.size() < 2) return 0;
        const double m = mean();
        double s = 0;
        for (auto [seed, acc] : runs) s += (acc - m) * (acc - m);
        return std::sqrt(s / static_cast<double>(runs.size() - 1));
    }
};

// Named configuration rows x named dataset columns; every cell keeps its
// per-seed accuracies so any entry can be re-derived from (config, seed).
struct ExperimentTable {
    std::vector<std::string> rows;
    std::vector<std::string> cols;
    std::vector<std::vector<ExperimentCell>> cells;  // [row][col]

    void init(std::vector<std::string> row_names, std::vector<std::string> col_names);
    ExperimentCell& cell(const std::string& row, const std::string& col);
    const ExperimentCell& cell(const std::string& row, const std::string& col) const;

    std::string to_csv() const;   // row,column,seed,accuracy
    std::string to_text() const;  // mean +/- stddev grid
};

void write_text_file(const std::string& path, const std::string& content);

}  // namespace mmm

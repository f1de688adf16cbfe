#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mmm/rng.hpp"
#include "mmm/tensor.hpp"

namespace mmm {

enum class StageKind { CoarseTune, MultiTask, SingleTask };

std::string stage_kind_name(StageKind k);
StageKind stage_kind_from_name(const std::string& name);

struct ModelSpec {
    int hidden_dim = 32;
    int layers = 2;
    int heads = 4;
    int max_len = 64;
    double dropout = 0.1;
    std::string classifier = "man";  // "man" | "fcnn"
    int reasoning_steps = 2;
};

struct DatasetSpec {
    std::string name;
    std::string task;  // "mcqa" | "pair"
    std::string path;
    std::string dev_path;  // optional
};

struct StageSpec {
    StageKind kind = StageKind::SingleTask;
    std::vector<std::string> datasets;
    std::string dev_dataset;  // dataset whose dev split drives early stopping
    int epochs = 2;
    double lr_max = 1e-3;
    double warmup = 0.1;
    double clip = 0.0;  // <= 0: clipping disabled
    int batch_size = 16;
    int eval_every = 50;
    int patience = 5;
    double stop_at_dev = 0.0;   // <= 0: disabled; stop once dev accuracy reaches it
    int checkpoint_every = 0;   // 0: only the end-of-stage checkpoint
};

struct TrainPlan {
    uint64_t seed = 7;
    ModelSpec model;
    bool speaker_normalize = true;
    std::string aggregation = "sum";  // "sum" | "max"
    int vocab_min_freq = 1;
    std::vector<DatasetSpec> datasets;
    std::vector<StageSpec> stages;

    const DatasetSpec& dataset(const std::string& name) const;
    void validate() const;
};

TrainPlan parse_train_plan(const std::string& json_text);
TrainPlan load_train_plan(const std::string& path);
std::string train_plan_to_json(const TrainPlan& plan);

// ---------------------------------------------------------------------------
// proportional task sampling
// ---------------------------------------------------------------------------

struct DatasetMixture {
    std::vector<double> sizes;

    std::vector<double> probabilities() const {
        if (sizes.empty()) throw UsageError("mixture: empty");
        double total = 0;
        for (double s : sizes) {
            if (s <= 0) throw UsageError("mixture: sizes must be positive");
            total += s;
        }
        std::vector<double> p(sizes.size());
        for (size_t i = 0; i < sizes.size(); ++i) p[i] = sizes[i] / total;
        return p;
    }
};

// Index j with probability size_j / sum(sizes); consumes exactly one draw.
inline int sample_task(const DatasetMixture& mixture, Rng& rng) {
    auto p = mixture.probabilities();
    const double u = rng.uniform();
    double cum = 0;
    for (size_t j = 0; j + 1 < p.size(); ++j) {
        cum += p[j];
        if (u < cum) return static_cast<int>(j);
    }
    return static_cast<int>(p.size()) - 1;
}

// ---------------------------------------------------------------------------
// early stopping
// ---------------------------------------------------------------------------

struct EarlyStopState {
    double best = -std::numeric_limits<double>::infinity();
    int non_improving = 0;
};

enum class EarlyStopDecision { Continue, Stop };

// Stop after `patience` consecutive evaluations without an improvement
// greater than 1e-6 (patience 0 stops at the first non-improvement).
inline EarlyStopDecision early_stop_update(EarlyStopState& state, double dev_metric, int patience) {
    if (dev_metric > state.best + 1e-6) {
        state.best = dev_metric;
        state.non_improving = 0;
        return EarlyStopDecision::Continue;
    }
    state.non_improving += 1;
    return state.non_improving >= std::max(patience, 1) ? EarlyStopDecision::Stop
                                                        : EarlyStopDecision::Continue;
}

// ---------------------------------------------------------------------------
// metrics log
// ---------------------------------------------------------------------------

struct StepLog {
    long step = 0;  // 1-based within the stage
    int stage = 0;
    std::string dataset;
    double loss = 0;
    double lr = 0;
    std::optional<double> dev_acc;

    bool operator==(const StepLog&) const = default;
};

using MetricsLog = std::vector<StepLog>;

std::string metrics_to_csv(const MetricsLog& log);
void write_metrics_csv(const std::string& path, const MetricsLog& log);

}  // namespace mmm

#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "mmm/train.hpp"

namespace mmm {

inline const std::vector<std::string>& ablation_rows() {
    static const std::vector<std::string> rows = {"full", "-multi_task", "-coarse_tune", "-man",
                                                  "-speaker_norm"};
    return rows;
}

inline const std::vector<std::string>& order_rows() {
    static const std::vector<std::string> rows = {"sequential", "multi_task", "merged", "staged"};
    return rows;
}

// The dataset whose dev split scores a pipeline: the last stage's dev
// dataset, falling back to the last stage dataset that has a dev split.
inline std::string plan_target_dataset(const TrainPlan& plan) {
    const StageSpec& last = plan.stages.back();
    if (!last.dev_dataset.empty()) return last.dev_dataset;
    for (auto it = last.datasets.rbegin(); it != last.datasets.rend(); ++it)
        if (!plan.dataset(*it).dev_path.empty()) return *it;
    return last.datasets.back();
}

inline std::string plan_source_dataset(const TrainPlan& plan) {
    const std::string target = plan_target_dataset(plan);
    for (const auto& stage : plan.stages)
        for (const auto& name : stage.datasets)
            if (name != target && plan.dataset(name).task == "mcqa") return name;
    throw UsageError("plan has no in-domain source dataset distinct from the target");
}

inline std::string plan_aux_dataset(const TrainPlan& plan) {
    for (const auto& d : plan.datasets)
        if (d.task == "pair") return d.name;
    throw UsageError("plan has no pair (out-of-domain) dataset");
}

// One named configuration for the ablation table.
inline TrainPlan ablation_variant(TrainPlan plan, const std::string& row) {
    const std::string target = plan_target_dataset(plan);
    if (row == "full") return plan;
    if (row == "-multi_task") {
        for (auto& stage : plan.stages) {
            if (stage.kind == StageKind::MultiTask) {
                stage.kind = StageKind::SingleTask;
                stage.datasets = {target};
                stage.dev_dataset = target;
            }
        }
        return plan;
    }
    if (row == "-coarse_tune") {
        std::vector<StageSpec> kept;
        for (auto& stage : plan.stages)
            if (stage.kind != StageKind::CoarseTune) kept.push_back(stage);
        if (kept.empty()) throw UsageError("ablation: removing coarse_tune leaves no stages");
        plan.stages = std::move(kept);
        return plan;
    }
    if (row == "-man") {
        plan.model.classifier = "fcnn";
        return plan;
    }
    if (row == "-speaker_norm") {
        plan.speaker_normalize = false;
        return plan;
    }
    throw UsageError("unknown ablation row '" + row + "'");
}

// One named configuration for the training-order table. All MCQA stages use
// the base plan's final-stage hyperparameters; the coarse stage keeps the
// base coarse stage's when one exists.
inline TrainPlan order_variant(TrainPlan plan, const std::string& row) {
    const std::string target = plan_target_dataset(plan);
    const std::string source = plan_source_dataset(plan);
    const std::string aux = plan_aux_dataset(plan);

    StageSpec mcqa_template = plan.stages.back();
    StageSpec coarse_template = mcqa_template;
    coarse_template.kind = StageKind::CoarseTune;
    for (const auto& stage : plan.stages)
        if (stage.kind == StageKind::CoarseTune) coarse_template = stage;

    auto mcqa_stage = [&](StageKind kind, std::vector<std::string> datasets,
                          const std::string& dev) {
        StageSpec s = mcqa_template;
        s.kind = kind;
        s.datasets = std::move(datasets);
        s.dev_dataset = dev;
        return s;
    };
    auto coarse_stage = [&] {
        StageSpec s = coarse_template;
        s.kind = StageKind::CoarseTune;
        s.datasets = {aux};
        s.dev_dataset = plan.dataset(aux).dev_path.empty() ? "" : aux;
        return s;
    };

    plan.stages.clear();
    if (row == "sequential") {
        const std::string source_dev = plan.dataset(source).dev_path.empty() ? "" : source;
        plan.stages.push_back(mcqa_stage(StageKind::SingleTask, {source}, source_dev));
        plan.stages.push_back(mcqa_stage(StageKind::SingleTask, {target}, target));
    } else if (row == "multi_task") {
        plan.stages.push_back(mcqa_stage(StageKind::MultiTask, {source, target}, target));
    } else if (row == "merged") {
        plan.stages.push_back(mcqa_stage(StageKind::MultiTask, {aux, source, target}, target));
    } else if (row == "staged") {
        plan.stages.push_back(coarse_stage());
        plan.stages.push_back(mcqa_stage(StageKind::MultiTask, {source, target}, target));
    } else {
        throw UsageError("unknown order row '" + row + "'");
    }
    return plan;
}

inline TrainPlan sweep_variant(TrainPlan plan, int k) {
    if (k < 0) throw UsageError("sweep: reasoning steps must be >= 0");
    plan.model.classifier = "man";
    plan.model.reasoning_steps = k;
    return plan;
}

// Full pipeline for one (plan, seed); returns final dev accuracy on the
// plan's target dataset.
template <class Real>
double run_plan_dev_accuracy(TrainPlan plan, const std::string& data_dir, uint64_t seed) {
    plan.seed = seed;
    TrainSession<Real> session(std::move(plan), data_dir);
    session.initialize();
    session.run();
    return session.evaluate_dev(plan_target_dataset(session.plan()));
}

template <class Real>
double run_ablation_cell(const TrainPlan& base, const std::string& data_dir, const std::string& row,
                         uint64_t seed) {
    return run_plan_dev_accuracy<Real>(ablation_variant(base, row), data_dir, seed);
}

template <class Real>
ExperimentTable run_ablation(const TrainPlan& base, const std::string& data_dir,
                             const std::vector<uint64_t>& seeds) {
    ExperimentTable table;
    table.init(ablation_rows(), {plan_target_dataset(base)});
    for (const auto& row : ablation_rows())
        for (uint64_t seed : seeds)
            table.cell(row, plan_target_dataset(base))
                .runs.emplace_back(seed, run_ablation_cell<Real>(base, data_dir, row, seed));
    return table;
}

template <class Real>
double run_order_cell(const TrainPlan& base, const std::string& data_dir, const std::string& row,
                      uint64_t seed) {
    return run_plan_dev_accuracy<Real>(order_variant(base, row), data_dir, seed);
}

template <class Real>
ExperimentTable compare_training_orders(const TrainPlan& base, const std::string& data_dir,
                                        const std::vector<uint64_t>& seeds) {
    ExperimentTable table;
    table.init(order_rows(), {plan_target_dataset(base)});
    for (const auto& row : order_rows())
        for (uint64_t seed : seeds)
            table.cell(row, plan_target_dataset(base))
                .runs.emplace_back(seed, run_order_cell<Real>(base, data_dir, row, seed));
    return table;
}

template <class Real>
double run_sweep_cell(const TrainPlan& base, const std::string& data_dir, int k, uint64_t seed) {
    return run_plan_dev_accuracy<Real>(sweep_variant(base, k), data_dir, seed);
}

template <class Real>
ExperimentTable sweep_reasoning_steps(const TrainPlan& base, const std::string& data_dir,
                                      const std::vector<int>& k_list,
                                      const std::vector<uint64_t>& seeds) {
    if (k_list.empty()) throw UsageError("sweep: empty K list");
    std::vector<std::string> cols;
    for (int k : k_list) cols.push_back("K=" + std::to_string(k));
    ExperimentTable table;
    const std::string row = plan_target_dataset(base);
    table.init({row}, cols);
    for (size_t i = 0; i < k_list.size(); ++i)
        for (uint64_t seed : seeds)
            table.cell(row, cols[i]).runs.emplace_back(
                seed, run_sweep_cell<Real>(base, data_dir, k_list[i], seed));
    return table;
}

// ---------------------------------------------------------------------------
// convergence comparison: stage-2 loss curves with and without coarse-tuning
// ---------------------------------------------------------------------------

struct ConvergenceCurves {
    std::vector<uint64_t> seeds;
    std::vector<std::vector<double>> with_coarse;     // [seed][step]
    std::vector<std::vector<double>> without_coarse;  // [seed][step]

    double mean_loss(bool coarse) const {
        const auto& curves = coarse ? with_coarse : without_coarse;
        double total = 0;
        long count = 0;
        for (const auto& c : curves)
            for (double v : c) {
                total += v;
                ++count;
            }
        return count == 0 ? 0 : total / static_cast<double>(count);
    }

    std::string to_csv() const {
        std::ostringstream out;
        out << "seed,step,with_coarse,without_coarse\n";
        out.precision(17);
        for (size_t s = 0; s < seeds.size(); ++s)
            for (size_t t = 0; t < with_coarse[s].size(); ++t)
                out << seeds[s] << ',' << (t + 1) << ',' << with_coarse[s][t] << ','
                    << without_coarse[s][t] << '\n';
        return out.str();
    }
};

// Pairs of runs per seed: the base plan (coarse-tune then the final stage) vs
// the same plan with coarse stages removed. Dev-based stopping is disabled so
// both arms log exactly `steps` final-stage losses.
template <class Real>
ConvergenceCurves convergence_comparison(const TrainPlan& base, const std::string& data_dir,
                                         const std::vector<uint64_t>& seeds, long steps) {
    auto neutralize_stops = [](TrainPlan plan) {
        for (auto& stage : plan.stages) {
            stage.patience = 1 << 28;
            stage.stop_at_dev = 0;
        }
        return plan;
    };
    TrainPlan with_plan = neutralize_stops(base);
    TrainPlan without_plan = neutralize_stops(ablation_variant(base, "-coarse_tune"));
    for (auto& s : without_plan.stages) s.patience = 1 << 28;

    auto stage_losses = [&](const MetricsLog& log, int stage_idx) {
        std::vector<double> out;
        for (const auto& row : log)
            if (row.stage == stage_idx && static_cast<long>(out.size()) < steps)
                out.push_back(row.loss);
        return out;
    };

    ConvergenceCurves curves;
    curves.seeds = seeds;
    for (uint64_t seed : seeds) {
        TrainPlan a = with_plan;
        a.seed = seed;
        TrainSession<Real> sa(a, data_dir);
        sa.initialize();
        MetricsLog la = sa.run();
        curves.with_coarse.push_back(
            stage_losses(la, static_cast<int>(with_plan.stages.size()) - 1));

        TrainPlan b = without_plan;
        b.seed = seed;
        TrainSession<Real> sb(b, data_dir);
        sb.initialize();
        MetricsLog lb = sb.run();
        curves.without_coarse.push_back(
            stage_losses(lb, static_cast<int>(without_plan.stages.size()) - 1));
    }
    return curves;
}

}  // namespace mmm

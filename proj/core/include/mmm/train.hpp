#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mmm/checkpoint.hpp"
#include "mmm/eval.hpp"
#include "mmm/man.hpp"
#include "mmm/mcqa.hpp"
#include "mmm/optim.hpp"
#include "mmm/plan.hpp"
#include "mmm/train_context.hpp"

namespace mmm {

// A model restored from a checkpoint, detached from any training plan.
template <class Real>
struct RestoredModel {
    Encoder<Real> encoder;
    std::optional<PairHead<Real>> pair_head;
    std::optional<TopClassifier<Real>> mcqa_head;
    Vocabulary vocab;
    ScoringOptions scoring;
};

template <class Real>
void assign_named_params(NamedParams<Real>& live, const std::vector<ParamBlock>& blocks) {
    if (live.size() != blocks.size())
        throw LoadError("checkpoint: parameter count mismatch (" + std::to_string(blocks.size()) +
                        " stored, " + std::to_string(live.size()) + " live)");
    for (size_t i = 0; i < live.size(); ++i) {
        auto& [name, tensor] = live[i];
        const ParamBlock& b = blocks[i];
        if (b.name != name || b.shape != tensor.shape())
            throw LoadError("checkpoint: parameter '" + b.name + "' does not match model '" + name +
                            "'");
        for (size_t j = 0; j < b.data.size(); ++j) tensor.value()[j] = static_cast<Real>(b.data[j]);
    }
}

template <class Real>
RestoredModel<Real> model_from_blob(const CheckpointBlob& blob) {
    RestoredModel<Real> model;
    model.vocab = Vocabulary(blob.vocab_tokens);
    model.encoder = Encoder<Real>(blob.encoder_config);
    if (blob.has_pair_head) {
        Rng rng(0);
        model.pair_head = PairHead<Real>::init(blob.encoder_config.hidden_dim, rng);
    }
    if (!blob.classifier_kind.empty())
        model.mcqa_head = TopClassifier<Real>::make(
            blob.classifier_kind == "man" ? ClassifierKind::Man : ClassifierKind::Fcnn,
            blob.reasoning_steps, blob.encoder_config.hidden_dim, 0);
    NamedParams<Real> live = model.encoder.params();
    if (model.pair_head.has_value()) {
        auto h = model.pair_head->params();
        live.insert(live.end(), h.begin(), h.end());
    }
    if (model.mcqa_head.has_value()) {
        auto h = model.mcqa_head->params();
        live.insert(live.end(), h.begin(), h.end());
    }
    assign_named_params(live, blob.params);
    model.scoring.speaker_normalize = blob.speaker_normalize;
    model.scoring.aggregation =
        blob.aggregation == "max" ? SnippetAggregation::Max : SnippetAggregation::Sum;
    return model;
}

// Runs a TrainPlan: loads datasets, builds the vocabulary and the model,
// executes the stages in order (task sampling, optimization, early stopping)
// and emits checkpoints plus a metrics log. Single-threaded and fully
// deterministic in (plan, seed).
template <class Real>
class TrainSession {
  public:
    // Optional per-step hook: (step, pre-clip grad norm, post-clip grad norm).
    std::function<void(long, double, double)> step_observer;

    TrainSession(TrainPlan plan, std::string data_dir = "")
        : plan_(std::move(plan)), data_dir_(std::move(data_dir)) {
        plan_.validate();
    }

    const TrainPlan& plan() const { return plan_; }
    TrainContext<Real>& context() { return ctx_; }
    const MetricsLog& metrics() const { return metrics_; }
    int stage_index() const { return stage_index_; }

    // Fresh start: load data, build vocabulary, seed the model.
    void initialize() {
        load_datasets();
        build_vocabulary();
        EncoderConfig cfg;
        cfg.vocab_size = ctx_.vocab.size();
        cfg.hidden_dim = plan_.model.hidden_dim;
        cfg.layers = plan_.model.layers;
        cfg.heads = plan_.model.heads;
        cfg.max_len = plan_.model.max_len;
        cfg.dropout = plan_.model.dropout;
        cfg.seed = plan_.seed;
        ctx_.encoder = Encoder<Real>(cfg);
        ctx_.dropout_rng = Rng(mix_seed(plan_.seed, "dropout"));
        sampler_rng_ = Rng(mix_seed(plan_.seed, "sampler"));
        pack_datasets();
        cursors_.assign(plan_.datasets.size(), {0, 0});
        perm_cache_.assign(plan_.datasets.size(), {});
        stage_index_ = 0;
        step_in_stage_ = 0;
        initialized_ = true;
    }

    // Resume from a checkpoint produced by this plan.
    void restore(const CheckpointBlob& blob) {
        load_datasets();
        ctx_.vocab = Vocabulary(blob.vocab_tokens);
        ctx_.encoder = Encoder<Real>(blob.encoder_config);
        if (blob.has_pair_head) {
            Rng rng = pair_head_rng();
            ctx_.pair_head = PairHead<Real>::init(blob.encoder_config.hidden_dim, rng);
        }
        if (!blob.classifier_kind.empty())
            ctx_.mcqa_head = TopClassifier<Real>::make(
                blob.classifier_kind == "man" ? ClassifierKind::Man : ClassifierKind::Fcnn,
                blob.reasoning_steps, blob.encoder_config.hidden_dim,
                mix_seed(plan_.seed, "mcqa-head"));
        assign_params_from(blob.params);
        ctx_.dropout_rng.set_state(blob.dropout_rng);
        sampler_rng_.set_state(blob.sampler_rng);
        pack_datasets();
        cursors_ = blob.dataset_cursors;
        if (cursors_.size() != plan_.datasets.size())
            throw LoadError("checkpoint: dataset cursor count does not match plan");
        perm_cache_.assign(plan_.datasets.size(), {});
        stage_index_ = blob.stage_index;
        step_in_stage_ = blob.step_in_stage;
        restore_blob_ = blob;
        initialized_ = true;
    }

    // Execute the remaining stages. When out_dir is non-empty, per-stage
    // checkpoints and metrics.csv land there.
    MetricsLog run(const std::string& out_dir = "") {
        if (!initialized_) throw UsageError("train session: initialize() or restore() first");
        if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
        while (stage_index_ < static_cast<int>(plan_.stages.size())) {
            run_current_stage(out_dir);
        }
        if (!out_dir.empty()) write_metrics_csv(out_dir + "/metrics.csv", metrics_);
        return metrics_;
    }

    // Dev accuracy for a named dataset (mcqa or pair task). Works from
    // sequences packed once at load time; bit-identical to evaluate() on the
    // raw examples.
    double evaluate_dev(const std::string& dataset_name) {
        const int d = dataset_index(dataset_name);
        const auto& ds = datasets_[static_cast<size_t>(d)];
        NoGradGuard ng;
        Rng unused(0);
        const SnippetAggregation agg = scoring_options().aggregation;
        if (ds.spec.task == "mcqa") {
            if (ds.packed_dev_mcqa.empty())
                throw UsageError("no dev split for dataset '" + dataset_name + "'");
            long correct = 0;
            for (size_t e = 0; e < ds.packed_dev_mcqa.size(); ++e) {
                const PackedMcqa& packed = ds.packed_dev_mcqa[e];
                if (!packed.label.has_value())
                    throw UsageError("evaluate: unlabeled example in '" + dataset_name + "' dev");
                std::vector<std::vector<double>> per_snippet;
                for (const auto& group : packed.snippets) {
                    Tensor<Real> v = group_logits(group, ctx_.encoder, *ctx_.mcqa_head, false, unused);
                    per_snippet.emplace_back(v.value().begin(), v.value().end());
                }
                if (predict(aggregate_snippet_logits(per_snippet, agg)) == *packed.label) ++correct;
            }
            return static_cast<double>(correct) / static_cast<double>(ds.packed_dev_mcqa.size());
        }
        if (ds.packed_dev_pairs.empty())
            throw UsageError("no dev split for dataset '" + dataset_name + "'");
        long correct = 0;
        for (size_t e = 0; e < ds.packed_dev_pairs.size(); ++e) {
            Tensor<Real> h = ctx_.encoder.encode(ds.packed_dev_pairs[e], false, unused);
            Tensor<Real> logits = ctx_.pair_head->logits(pooled(h));
            if (predict(logits.value()) == ds.dev_pairs[e].label) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(ds.packed_dev_pairs.size());
    }

    EvalReport evaluate_mcqa(const std::vector<MCQAExample>& examples, const std::string& id) {
        if (!ctx_.mcqa_head.has_value()) throw UsageError("no mcqa classifier in this model");
        return evaluate(ctx_.encoder, *ctx_.mcqa_head, ctx_.vocab, scoring_options(), examples, id);
    }

    ScoringOptions scoring_options() const {
        ScoringOptions opts;
        opts.speaker_normalize = plan_.speaker_normalize;
        opts.aggregation =
            plan_.aggregation == "max" ? SnippetAggregation::Max : SnippetAggregation::Sum;
        return opts;
    }

    CheckpointBlob to_blob() {
        CheckpointBlob blob;
        blob.precision = sizeof(Real) == 4 ? "f32" : "f64";
        blob.encoder_config = ctx_.encoder.config();
        blob.vocab_tokens = ctx_.vocab.tokens();
        if (ctx_.mcqa_head.has_value()) {
            blob.classifier_kind = classifier_kind_name(ctx_.mcqa_head->kind);
            blob.reasoning_steps = ctx_.mcqa_head->reasoning_steps;
        }
        blob.has_pair_head = ctx_.pair_head.has_value();
        blob.speaker_normalize = plan_.speaker_normalize;
        blob.aggregation = plan_.aggregation;
        blob.stage_index = stage_index_;
        blob.step_in_stage = step_in_stage_;
        blob.dropout_rng = ctx_.dropout_rng.state();
        blob.sampler_rng = sampler_rng_.state();
        blob.dataset_cursors = cursors_;
        blob.early_stop_best = early_stop_.best;
        blob.early_stop_non_improving = early_stop_.non_improving;
        blob.early_stop_active = early_stop_active_;
        blob.optimizer_step = opt_state_.step;
        for (auto& [name, tensor] : all_params()) blob.params.push_back(to_block(name, tensor));
        if (step_in_stage_ > 0) {
            // mid-stage: persist optimizer moments in stage parameter order
            for (size_t i = 0; i < stage_params_.size(); ++i) {
                const auto& [name, tensor] = stage_named_params_[i];
                ParamBlock m{name, tensor.shape(),
                             std::vector<double>(opt_state_.m[i].begin(), opt_state_.m[i].end())};
                ParamBlock v{name, tensor.shape(),
                             std::vector<double>(opt_state_.v[i].begin(), opt_state_.v[i].end())};
                blob.optimizer_params.push_back(name);
                blob.opt_m.push_back(std::move(m));
                blob.opt_v.push_back(std::move(v));
            }
        }
        return blob;
    }

    void save(const std::string& path) { write_checkpoint(path, to_blob()); }

    // All live parameters in checkpoint order: encoder, pair head, mcqa head.
    NamedParams<Real> all_params() {
        NamedParams<Real> out = ctx_.encoder.params();
        if (ctx_.pair_head.has_value()) {
            auto h = ctx_.pair_head->params();
            out.insert(out.end(), h.begin(), h.end());
        }
        if (ctx_.mcqa_head.has_value()) {
            auto h = ctx_.mcqa_head->params();
            out.insert(out.end(), h.begin(), h.end());
        }
        return out;
    }

  private:
    struct LoadedDataset {
        DatasetSpec spec;
        std::vector<MCQAExample> train_mcqa, dev_mcqa;
        std::vector<PairExample> train_pairs, dev_pairs;
        // packed training instances
        std::vector<PackedMcqa> packed_mcqa;                  // per example
        std::vector<std::pair<int, int>> mcqa_instances;      // (example, snippet)
        std::vector<EncodedSequence> packed_pairs;            // per example
        // packed dev splits
        std::vector<PackedMcqa> packed_dev_mcqa;
        std::vector<EncodedSequence> packed_dev_pairs;
        long instance_count() const {
            return spec.task == "mcqa" ? static_cast<long>(mcqa_instances.size())
                                       : static_cast<long>(packed_pairs.size());
        }
    };

    std::string resolve(const std::string& path) const {
        if (path.empty() || path.front() == '/' || data_dir_.empty()) return path;
        return data_dir_ + "/" + path;
    }

    int dataset_index(const std::string& name) const {
        for (size_t i = 0; i < plan_.datasets.size(); ++i)
            if (plan_.datasets[i].name == name) return static_cast<int>(i);
        throw UsageError("unknown dataset '" + name + "'");
    }

    void load_datasets() {
        datasets_.clear();
        for (const auto& spec : plan_.datasets) {
            LoadedDataset ds;
            ds.spec = spec;
            if (spec.task == "mcqa") {
                ds.train_mcqa = load_mcqa_json(resolve(spec.path));
                if (!spec.dev_path.empty()) ds.dev_mcqa = load_mcqa_json(resolve(spec.dev_path));
            } else {
                ds.train_pairs = load_pair_json(resolve(spec.path));
                if (!spec.dev_path.empty()) ds.dev_pairs = load_pair_json(resolve(spec.dev_path));
            }
            datasets_.push_back(std::move(ds));
        }
    }

    void build_vocabulary() {
        std::vector<std::string> corpus;
        for (const auto& ds : datasets_) {
            for (const auto& e : ds.train_mcqa) {
                for (const auto& u : e.passage)
                    corpus.push_back(plan_.speaker_normalize ? speaker_normalize(u) : u);
                corpus.push_back(e.question);
                for (const auto& o : e.options) corpus.push_back(o);
            }
            for (const auto& e : ds.train_pairs) {
                corpus.push_back(e.premise);
                corpus.push_back(e.hypothesis);
            }
        }
        if (corpus.empty()) throw UsageError("plan datasets contain no training text");
        ctx_.vocab = build_vocab(corpus, plan_.vocab_min_freq);
    }

    void pack_datasets() {
        for (auto& ds : datasets_) {
            ds.packed_mcqa.clear();
            ds.mcqa_instances.clear();
            ds.packed_pairs.clear();
            if (ds.spec.task == "mcqa") {
                for (size_t e = 0; e < ds.train_mcqa.size(); ++e) {
                    const auto& ex = ds.train_mcqa[e];
                    if (!ex.label.has_value())
                        throw UsageError("training example '" + ex.id + "' has no label");
                    PackedMcqa packed = pack_mcqa_example(ex, ctx_.vocab, plan_.model.max_len,
                                                          plan_.speaker_normalize);
                    for (size_t s = 0; s < packed.snippets.size(); ++s)
                        ds.mcqa_instances.emplace_back(static_cast<int>(e), static_cast<int>(s));
                    ds.packed_mcqa.push_back(std::move(packed));
                }
            } else {
                for (const auto& ex : ds.train_pairs)
                    ds.packed_pairs.push_back(strip_padding(pack_pair(
                        tokenize(ex.premise), tokenize(ex.hypothesis), ctx_.vocab,
                        plan_.model.max_len)));
            }
        }
    }

    Rng pair_head_rng() const { return Rng(mix_seed(plan_.seed, "pair-head")); }

    void ensure_heads(const StageSpec& stage) {
        for (const auto& name : stage.datasets) {
            const auto& ds = datasets_[static_cast<size_t>(dataset_index(name))];
            if (ds.spec.task == "pair" && !ctx_.pair_head.has_value()) {
                Rng rng = pair_head_rng();
                ctx_.pair_head = PairHead<Real>::init(plan_.model.hidden_dim, rng);
            }
            if (ds.spec.task == "mcqa" && !ctx_.mcqa_head.has_value()) {
                ctx_.mcqa_head = TopClassifier<Real>::make(
                    plan_.model.classifier == "fcnn" ? ClassifierKind::Fcnn : ClassifierKind::Man,
                    plan_.model.reasoning_steps, plan_.model.hidden_dim,
                    mix_seed(plan_.seed, "mcqa-head"));
            }
        }
    }

    void enter_stage(int s) {
        const StageSpec& stage = plan_.stages[static_cast<size_t>(s)];
        ensure_heads(stage);

        stage_named_params_ = ctx_.encoder.params();
        bool uses_pair = false, uses_mcqa = false;
        for (const auto& name : stage.datasets) {
            const auto& ds = datasets_[static_cast<size_t>(dataset_index(name))];
            uses_pair = uses_pair || ds.spec.task == "pair";
            uses_mcqa = uses_mcqa || ds.spec.task == "mcqa";
        }
        if (uses_pair) {
            auto h = ctx_.pair_head->params();
            stage_named_params_.insert(stage_named_params_.end(), h.begin(), h.end());
        }
        if (uses_mcqa) {
            auto h = ctx_.mcqa_head->params();
            stage_named_params_.insert(stage_named_params_.end(), h.begin(), h.end());
        }
        stage_params_.clear();
        for (auto& [name, t] : stage_named_params_) stage_params_.push_back(t);

        const bool resuming =
            restore_blob_.has_value() && stage_index_ == s && step_in_stage_ > 0;
        adam_init(opt_state_, stage_params_);
        early_stop_ = EarlyStopState{};
        early_stop_active_ = false;
        if (resuming) {
            const CheckpointBlob& blob = *restore_blob_;
            if (blob.optimizer_params.size() != stage_named_params_.size())
                throw LoadError("checkpoint: optimizer state does not match stage parameters");
            for (size_t i = 0; i < stage_named_params_.size(); ++i) {
                if (blob.optimizer_params[i] != stage_named_params_[i].first)
                    throw LoadError("checkpoint: optimizer parameter order mismatch");
                opt_state_.m[i].assign(blob.opt_m[i].data.begin(), blob.opt_m[i].data.end());
                opt_state_.v[i].assign(blob.opt_v[i].data.begin(), blob.opt_v[i].data.end());
            }
            opt_state_.step = blob.optimizer_step;
            early_stop_.best = blob.early_stop_best;
            early_stop_.non_improving = blob.early_stop_non_improving;
            early_stop_active_ = blob.early_stop_active;
            restore_blob_.reset();
        } else {
            restore_blob_.reset();
            step_in_stage_ = 0;
            for (const auto& name : stage.datasets)
                cursors_[static_cast<size_t>(dataset_index(name))] = {0, 0};
        }
    }

    const std::vector<int>& permutation_for(int d, long epoch) {
        auto& cache = perm_cache_[static_cast<size_t>(d)];
        if (!cache.has_value() || cache->first != epoch) {
            Rng rng(mix_seed(mix_seed(plan_.seed, "shuffle"),
                             mix_seed(static_cast<uint64_t>(d), static_cast<uint64_t>(epoch))));
            cache = std::make_pair(
                epoch,
                rng.permutation(static_cast<int>(datasets_[static_cast<size_t>(d)].instance_count())));
        }
        return cache->second;
    }

    long next_instance(int d) {
        auto& [epoch, cursor] = cursors_[static_cast<size_t>(d)];
        const long count = datasets_[static_cast<size_t>(d)].instance_count();
        if (count == 0) throw UsageError("dataset '" + datasets_[static_cast<size_t>(d)].spec.name +
                                         "' has no training instances");
        if (cursor >= count) {
            epoch += 1;
            cursor = 0;
        }
        const auto& perm = permutation_for(d, epoch);
        return perm[static_cast<size_t>(cursor++)];
    }

    Tensor<Real> instance_loss(int d, long idx) {
        auto& ds = datasets_[static_cast<size_t>(d)];
        if (ds.spec.task == "mcqa") {
            const auto [example, snippet] = ds.mcqa_instances[static_cast<size_t>(idx)];
            const PackedMcqa& packed = ds.packed_mcqa[static_cast<size_t>(example)];
            Tensor<Real> logits = group_logits(packed.snippets[static_cast<size_t>(snippet)],
                                               ctx_.encoder, *ctx_.mcqa_head, true, ctx_.dropout_rng);
            return cross_entropy_logits(logits, *packed.label);
        }
        const EncodedSequence& seq = ds.packed_pairs[static_cast<size_t>(idx)];
        Tensor<Real> h = ctx_.encoder.encode(seq, true, ctx_.dropout_rng);
        Tensor<Real> logits = ctx_.pair_head->logits(pooled(h));
        return cross_entropy_logits(logits, ds.train_pairs[static_cast<size_t>(idx)].label);
    }

    std::string stage_dev_dataset(const StageSpec& stage) const {
        if (!stage.dev_dataset.empty()) return stage.dev_dataset;
        for (auto it = stage.datasets.rbegin(); it != stage.datasets.rend(); ++it) {
            const auto& ds = datasets_[static_cast<size_t>(dataset_index(*it))];
            if (!ds.dev_mcqa.empty() || !ds.dev_pairs.empty()) return *it;
        }
        return "";
    }

    void run_current_stage(const std::string& out_dir) {
        const int s = stage_index_;
        const StageSpec& stage = plan_.stages[static_cast<size_t>(s)];
        enter_stage(s);

        std::vector<int> stage_datasets;
        DatasetMixture mixture;
        long max_instances = 0;
        for (const auto& name : stage.datasets) {
            const int d = dataset_index(name);
            stage_datasets.push_back(d);
            const long count = datasets_[static_cast<size_t>(d)].instance_count();
            mixture.sizes.push_back(static_cast<double>(count));
            max_instances = std::max(max_instances, count);
        }
        const long steps_per_epoch =
            (max_instances + stage.batch_size - 1) / stage.batch_size;
        const long steps_total = std::max<long>(1, stage.epochs * steps_per_epoch);
        const LrSchedule schedule{stage.lr_max, steps_total, stage.warmup};
        const std::string dev_name = stage_dev_dataset(stage);

        for (long step = step_in_stage_ + 1; step <= steps_total; ++step) {
            const int local =
                stage_datasets.size() == 1 ? 0 : sample_task(mixture, sampler_rng_);
            const int d = stage_datasets[static_cast<size_t>(local)];

            zero_grads(stage_params_);
            double total_loss = 0;
            for (int b = 0; b < stage.batch_size; ++b) {
                Tensor<Real> l = instance_loss(d, next_instance(d));
                l.backward();
                total_loss += static_cast<double>(l.item());
            }
            const double mean_loss = total_loss / stage.batch_size;
            if (std::isnan(mean_loss))
                throw NumericError("NaN loss at stage " + std::to_string(s) + " step " +
                                   std::to_string(step) + " on dataset '" +
                                   plan_.datasets[static_cast<size_t>(d)].name + "'");

            scale_grads(stage_params_, Real(1) / static_cast<Real>(stage.batch_size));
            std::optional<Real> clip =
                stage.clip > 0 ? std::optional<Real>(static_cast<Real>(stage.clip)) : std::nullopt;
            const double pre_norm = static_cast<double>(clip_global_norm(stage_params_, clip));
            if (step_observer) {
                const double post_norm = static_cast<double>(global_grad_norm(stage_params_));
                step_observer(step, pre_norm, post_norm);
            }
            const double lr = lr_at(schedule, step);
            adam_step(stage_params_, opt_state_, static_cast<Real>(lr));
            ctx_.version += 1;

            StepLog row;
            row.step = step;
            row.stage = s;
            row.dataset = plan_.datasets[static_cast<size_t>(d)].name;
            row.loss = mean_loss;
            row.lr = lr;

            bool stop = false;
            const bool last_step = step == steps_total;
            if (!dev_name.empty() && (step % stage.eval_every == 0 || last_step)) {
                const double acc = evaluate_dev(dev_name);
                row.dev_acc = acc;
                early_stop_active_ = true;
                if (early_stop_update(early_stop_, acc, stage.patience) == EarlyStopDecision::Stop)
                    stop = true;
                if (stage.stop_at_dev > 0 && acc >= stage.stop_at_dev) stop = true;
            }
            metrics_.push_back(std::move(row));
            step_in_stage_ = step;

            if (!out_dir.empty() && stage.checkpoint_every > 0 &&
                step % stage.checkpoint_every == 0 && !last_step && !stop) {
                save(out_dir + "/stage" + std::to_string(s) + "_step" + std::to_string(step) +
                     ".ckpt");
            }
            if (stop) break;
        }

        stage_index_ = s + 1;
        step_in_stage_ = 0;
        if (!out_dir.empty()) save(out_dir + "/stage" + std::to_string(s) + ".ckpt");
    }

    static ParamBlock to_block(const std::string& name, const Tensor<Real>& t) {
        ParamBlock b;
        b.name = name;
        b.shape = t.shape();
        b.data.assign(t.value().begin(), t.value().end());
        return b;
    }

    void assign_params_from(const std::vector<ParamBlock>& blocks) {
        NamedParams<Real> live = all_params();
        assign_named_params(live, blocks);
    }

    TrainPlan plan_;
    std::string data_dir_;
    std::vector<LoadedDataset> datasets_;
    TrainContext<Real> ctx_;
    Rng sampler_rng_{0};

    NamedParams<Real> stage_named_params_;
    std::vector<Tensor<Real>> stage_params_;
    AdamState<Real> opt_state_;
    EarlyStopState early_stop_;
    bool early_stop_active_ = false;

    std::vector<std::pair<long, long>> cursors_;  // (epoch, cursor) per dataset
    std::vector<std::optional<std::pair<long, std::vector<int>>>> perm_cache_;

    MetricsLog metrics_;
    int stage_index_ = 0;
    long step_in_stage_ = 0;
    bool initialized_ = false;
    std::optional<CheckpointBlob> restore_blob_;
};

}  // namespace mmm

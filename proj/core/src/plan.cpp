#include "mmm/plan.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mmm {

using nlohmann::json;

std::string stage_kind_name(StageKind k) {
    switch (k) {
        case StageKind::CoarseTune: return "coarse_tune";
        case StageKind::MultiTask: return "multi_task";
        case StageKind::SingleTask: return "single_task";
    }
    throw UsageError("unknown stage kind");
}

StageKind stage_kind_from_name(const std::string& name) {
    if (name == "coarse_tune") return StageKind::CoarseTune;
    if (name == "multi_task") return StageKind::MultiTask;
    if (name == "single_task") return StageKind::SingleTask;
    throw UsageError("unknown stage kind '" + name + "'");
}

const DatasetSpec& TrainPlan::dataset(const std::string& name) const {
    for (const auto& d : datasets)
        if (d.name == name) return d;
    throw UsageError("plan references unknown dataset '" + name + "'");
}

void TrainPlan::validate() const {
    if (stages.empty()) throw UsageError("plan: at least one stage required");
    if (datasets.empty()) throw UsageError("plan: at least one dataset required");
    std::set<std::string> names;
    for (const auto& d : datasets) {
        if (d.name.empty()) throw UsageError("plan: dataset name required");
        if (!names.insert(d.name).second) throw UsageError("plan: duplicate dataset '" + d.name + "'");
        if (d.task != "mcqa" && d.task != "pair")
            throw UsageError("plan: dataset task must be 'mcqa' or 'pair'");
        if (d.path.empty()) throw UsageError("plan: dataset path required for '" + d.name + "'");
    }
    if (model.classifier != "man" && model.classifier != "fcnn")
        throw UsageError("plan: classifier must be 'man' or 'fcnn'");
    if (model.reasoning_steps < 0) throw UsageError("plan: reasoning_steps must be >= 0");
    if (aggregation != "sum" && aggregation != "max")
        throw UsageError("plan: aggregation must be 'sum' or 'max'");
    for (const auto& s : stages) {
        if (s.datasets.empty()) throw UsageError("plan: stage needs at least one dataset");
        for (const auto& n : s.datasets) dataset(n);
        if (!s.dev_dataset.empty()) dataset(s.dev_dataset);
        if (s.epochs < 1) throw UsageError("plan: stage epochs must be >= 1");
        if (s.batch_size < 1) throw UsageError("plan: batch_size must be >= 1");
        if (s.lr_max <= 0) throw UsageError("plan: lr_max must be positive");
        if (s.warmup <= 0 || s.warmup >= 1) throw UsageError("plan: warmup must be in (0,1)");
        if (s.eval_every < 1) throw UsageError("plan: eval_every must be >= 1");
        if (s.patience < 0) throw UsageError("plan: patience must be >= 0");
        for (const auto& n : s.datasets) {
            const auto& d = dataset(n);
            const bool is_pair = d.task == "pair";
            if (s.kind == StageKind::CoarseTune && !is_pair)
                throw UsageError("plan: coarse_tune stages train on pair datasets");
        }
    }
}

namespace {

json dataset_to_json(const DatasetSpec& d) {
    json j;
    j["name"] = d.name;
    j["task"] = d.task;
    j["path"] = d.path;
    if (!d.dev_path.empty()) j["dev_path"] = d.dev_path;
    return j;
}

DatasetSpec dataset_from_json(const json& j) {
    DatasetSpec d;
    d.name = j.at("name").get<std::string>();
    d.task = j.at("task").get<std::string>();
    d.path = j.at("path").get<std::string>();
    if (j.contains("dev_path")) d.dev_path = j["dev_path"].get<std::string>();
    return d;
}

json stage_to_json(const StageSpec& s) {
    json j;
    j["kind"] = stage_kind_name(s.kind);
    j["datasets"] = s.datasets;
    if (!s.dev_dataset.empty()) j["dev_dataset"] = s.dev_dataset;
    j["epochs"] = s.epochs;
    j["lr_max"] = s.lr_max;
    j["warmup"] = s.warmup;
    j["clip"] = s.clip;
    j["batch_size"] = s.batch_size;
    j["eval_every"] = s.eval_every;
    j["patience"] = s.patience;
    if (s.stop_at_dev > 0) j["stop_at_dev"] = s.stop_at_dev;
    if (s.checkpoint_every > 0) j["checkpoint_every"] = s.checkpoint_every;
    return j;
}

StageSpec stage_from_json(const json& j) {
    StageSpec s;
    s.kind = stage_kind_from_name(j.at("kind").get<std::string>());
    for (const auto& d : j.at("datasets")) s.datasets.push_back(d.get<std::string>());
    if (j.contains("dev_dataset")) s.dev_dataset = j["dev_dataset"].get<std::string>();
    if (j.contains("epochs")) s.epochs = j["epochs"].get<int>();
    if (j.contains("lr_max")) s.lr_max = j["lr_max"].get<double>();
    if (j.contains("warmup")) s.warmup = j["warmup"].get<double>();
    if (j.contains("clip")) s.clip = j["clip"].get<double>();
    if (j.contains("batch_size")) s.batch_size = j["batch_size"].get<int>();
    if (j.contains("eval_every")) s.eval_every = j["eval_every"].get<int>();
    if (j.contains("patience")) s.patience = j["patience"].get<int>();
    if (j.contains("stop_at_dev")) s.stop_at_dev = j["stop_at_dev"].get<double>();
    if (j.contains("checkpoint_every")) s.checkpoint_every = j["checkpoint_every"].get<int>();
    return s;
}

}  // namespace

TrainPlan parse_train_plan(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const std::exception& e) {
        throw LoadError(std::string("plan: malformed JSON: ") + e.what());
    }
    TrainPlan p;
    try {
        if (j.contains("seed")) p.seed = j["seed"].get<uint64_t>();
        if (j.contains("speaker_normalize")) p.speaker_normalize = j["speaker_normalize"].get<bool>();
        if (j.contains("aggregation")) p.aggregation = j["aggregation"].get<std::string>();
        if (j.contains("vocab_min_freq")) p.vocab_min_freq = j["vocab_min_freq"].get<int>();
        if (j.contains("model")) {
            const json& m = j["model"];
            if (m.contains("hidden_dim")) p.model.hidden_dim = m["hidden_dim"].get<int>();
            if (m.contains("layers")) p.model.layers = m["layers"].get<int>();
            if (m.contains("heads")) p.model.heads = m["heads"].get<int>();
            if (m.contains("max_len")) p.model.max_len = m["max_len"].get<int>();
            if (m.contains("dropout")) p.model.dropout = m["dropout"].get<double>();
            if (m.contains("classifier")) p.model.classifier = m["classifier"].get<std::string>();
            if (m.contains("reasoning_steps")) p.model.reasoning_steps = m["reasoning_steps"].get<int>();
        }
        for (const auto& d : j.at("datasets")) p.datasets.push_back(dataset_from_json(d));
        for (const auto& s : j.at("stages")) p.stages.push_back(stage_from_json(s));
    } catch (const json::exception& e) {
        throw LoadError(std::string("plan: ") + e.what());
    }
    p.validate();
    return p;
}

TrainPlan load_train_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open plan '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_train_plan(ss.str());
}

std::string train_plan_to_json(const TrainPlan& p) {
    json j;
    j["seed"] = p.seed;
    j["speaker_normalize"] = p.speaker_normalize;
    j["aggregation"] = p.aggregation;
    j["vocab_min_freq"] = p.vocab_min_freq;
    json m;
    m["hidden_dim"] = p.model.hidden_dim;
    m["layers"] = p.model.layers;
    m["heads"] = p.model.heads;
    m["max_len"] = p.model.max_len;
    m["dropout"] = p.model.dropout;
    m["classifier"] = p.model.classifier;
    m["reasoning_steps"] = p.model.reasoning_steps;
    j["model"] = std::move(m);
    j["datasets"] = json::array();
    for (const auto& d : p.datasets) j["datasets"].push_back(dataset_to_json(d));
    j["stages"] = json::array();
    for (const auto& s : p.stages) j["stages"].push_back(stage_to_json(s));
    return j.dump(1);
}

std::string metrics_to_csv(const MetricsLog& log) {
    std::ostringstream out;
    out << "step,stage,dataset,loss,lr,dev_acc\n";
    out.precision(17);
    for (const auto& row : log) {
        out << row.step << ',' << row.stage << ',' << row.dataset << ',' << row.loss << ','
            << row.lr << ',';
        if (row.dev_acc.has_value()) out << *row.dev_acc;
        out << '\n';
    }
    return out.str();
}

void write_metrics_csv(const std::string& path, const MetricsLog& log) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write metrics CSV '" + path + "'");
    out << metrics_to_csv(log);
}

}  // namespace mmm

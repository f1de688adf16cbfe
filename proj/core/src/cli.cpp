#include "mmm/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mmm/data.hpp"
#include "mmm/gradsuite.hpp"
#include "mmm/harness.hpp"
#include "mmm/train.hpp"

namespace mmm {

namespace {

using nlohmann::json;

struct CommonArgs {
    std::string config;
    std::string data_dir;
    std::string out_dir;
    std::string precision = "f64";
    std::vector<uint64_t> seeds;
};

std::vector<uint64_t> parse_seed_list(const std::string& text) {
    std::vector<uint64_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stoull(item));
    }
    if (out.empty()) throw UsageError("expected a comma-separated seed list");
    return out;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stoi(item));
    }
    if (out.empty()) throw UsageError("expected a comma-separated integer list");
    return out;
}

// --------------------------------------------------------------------------
// synth-gen: generate a benchmark suite of synthetic datasets
// --------------------------------------------------------------------------

int run_synth_gen(const std::string& spec_path, const std::string& out_dir,
                  std::optional<uint64_t> seed_override) {
    std::ifstream in(spec_path);
    if (!in) throw LoadError("cannot open synth spec '" + spec_path + "'");
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw LoadError(std::string("synth spec: malformed JSON: ") + e.what());
    }

    SyntheticSpec base;
    if (j.contains("seed")) base.seed = j["seed"].get<uint64_t>();
    if (seed_override) base.seed = *seed_override;
    if (j.contains("vocab_pool")) base.vocab_pool = j["vocab_pool"].get<int>();
    if (j.contains("sentences_per_passage"))
        base.sentences_per_passage = j["sentences_per_passage"].get<int>();
    if (j.contains("options")) base.options = j["options"].get<int>();
    if (j.contains("table_id")) base.table_id = j["table_id"].get<int>();
    if (j.contains("sentence_len")) base.sentence_len = j["sentence_len"].get<int>();
    if (j.contains("speaker_tags")) base.speaker_tags = j["speaker_tags"].get<bool>();
    if (j.contains("speaker_question_ratio"))
        base.speaker_question_ratio = j["speaker_question_ratio"].get<double>();
    if (!j.contains("datasets") || !j["datasets"].is_array())
        throw LoadError("synth spec: 'datasets' array required");

    std::filesystem::create_directories(out_dir);
    for (const auto& d : j["datasets"]) {
        const std::string name = d.at("name").get<std::string>();
        const std::string task = d.at("task").get<std::string>();
        for (const std::string split : {"train", "dev", "test"}) {
            if (!d.contains(split)) continue;
            const int count = d[split].get<int>();
            if (count <= 0) continue;
            SyntheticSpec spec = base;
            spec.seed = mix_seed(base.seed, name + "/" + split);
            spec.count = count;
            const std::string path = out_dir + "/" + name + "_" + split + ".json";
            if (task == "mcqa") {
                save_mcqa_json(path, gen_synthetic_mcqa(spec));
            } else if (task == "pair" || task == "nli") {
                save_pair_json(path, gen_synthetic_nli(spec));
            } else {
                throw UsageError("synth spec: task must be 'mcqa' or 'pair'");
            }
            std::cout << "wrote " << path << " (" << count << " examples)\n";
        }
    }
    return 0;
}

// --------------------------------------------------------------------------
// precision-dispatched commands
// --------------------------------------------------------------------------

template <class Real>
int run_train(const CommonArgs& common, std::optional<uint64_t> seed, const std::string& resume) {
    TrainPlan plan = load_train_plan(common.config);
    if (seed) plan.seed = *seed;
    TrainSession<Real> session(plan, common.data_dir);
    if (resume.empty()) {
        session.initialize();
    } else {
        session.restore(read_checkpoint(resume));
    }
    MetricsLog log = session.run(common.out_dir.empty() ? "out" : common.out_dir);
    std::cout << "training complete: " << log.size() << " optimization steps logged\n";
    double best_dev = -1;
    for (const auto& row : log)
        if (row.dev_acc.has_value()) best_dev = std::max(best_dev, *row.dev_acc);
    if (best_dev >= 0) std::cout << "best dev accuracy: " << best_dev << "\n";
    return 0;
}

template <class Real>
int run_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& out_dir) {
    RestoredModel<Real> model = model_from_blob<Real>(read_checkpoint(checkpoint_path));
    if (!model.mcqa_head.has_value())
        throw UsageError("checkpoint has no multiple-choice classifier head");
    auto examples = load_mcqa_json(data_path);
    EvalReport report = evaluate(model.encoder, *model.mcqa_head, model.vocab, model.scoring,
                                 examples, data_path);
    std::cout << "dataset: " << report.dataset_id << "\n";
    std::cout << "examples: " << report.records.size() << "\n";
    std::cout << "accuracy: " << report.accuracy << "\n";
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ostringstream csv;
        csv << "id,predicted,gold\n";
        for (const auto& r : report.records)
            csv << r.id << ',' << r.predicted << ',' << r.gold << '\n';
        write_text_file(out_dir + "/eval_records.csv", csv.str());
    }
    return 0;
}

template <class Real>
int run_gradcheck() {
    GradSuiteResult result = run_grad_suite<Real>();
    for (const auto& c : result.cases)
        std::cout << c.name << ": " << c.max_rel_err << "\n";
    std::cout << "max relative error: " << result.worst() << "\n";
    return result.worst() < 1e-4 ? 0 : 2;
}

void write_table(const ExperimentTable& table, const std::string& out_dir,
                 const std::string& stem) {
    std::cout << table.to_text();
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_text_file(out_dir + "/" + stem + ".csv", table.to_csv());
        write_text_file(out_dir + "/" + stem + ".txt", table.to_text());
        std::cout << "wrote " << out_dir << "/" << stem << ".csv\n";
    }
}

template <class Real>
int run_ablate_cmd(const CommonArgs& common) {
    TrainPlan plan = load_train_plan(common.config);
    ExperimentTable table = run_ablation<Real>(plan, common.data_dir, common.seeds);
    write_table(table, common.out_dir, "ablation");
    return 0;
}

template <class Real>
int run_sweep_cmd(const CommonArgs& common, const std::vector<int>& k_list) {
    TrainPlan plan = load_train_plan(common.config);
    ExperimentTable table = sweep_reasoning_steps<Real>(plan, common.data_dir, k_list, common.seeds);
    write_table(table, common.out_dir, "reasoning_steps");
    return 0;
}

template <class Real>
int run_orders_cmd(const CommonArgs& common) {
    TrainPlan plan = load_train_plan(common.config);
    ExperimentTable table = compare_training_orders<Real>(plan, common.data_dir, common.seeds);
    write_table(table, common.out_dir, "training_orders");
    return 0;
}

template <class F32, class F64>
int dispatch(const std::string& precision, F32&& f32, F64&& f64) {
    if (precision == "f32") return f32();
    if (precision == "f64") return f64();
    throw UsageError("precision must be 'f32' or 'f64'");
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
    CLI::App app{"desk-scale multi-choice reading comprehension trainer"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string seeds_text = "7";
    std::string k_text = "0,1,2,5";
    std::optional<uint64_t> seed_flag;
    std::string resume, checkpoint_path, data_path, spec_path;

    auto add_common = [&](CLI::App* cmd, bool with_config) {
        if (with_config)
            cmd->add_option("--config", common.config, "JSON train plan")->required();
        cmd->add_option("--data-dir", common.data_dir, "directory dataset paths resolve against");
        cmd->add_option("--out", common.out_dir, "output directory");
        cmd->add_option("--precision", common.precision, "f32 or f64 (default f64)");
    };

    CLI::App* train_cmd = app.add_subcommand("train", "run a training plan");
    add_common(train_cmd, true);
    train_cmd->add_option("--seed", seed_flag, "override the plan seed");
    train_cmd->add_option("--resume", resume, "checkpoint to resume from");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    eval_cmd->add_option("--data", data_path, "MCQA dataset JSON")->required();
    eval_cmd->add_option("--out", common.out_dir, "output directory");
    eval_cmd->add_option("--precision", common.precision, "f32 or f64 (default f64)");

    CLI::App* ablate_cmd = app.add_subcommand("ablate", "run the ablation table");
    add_common(ablate_cmd, true);
    ablate_cmd->add_option("--seeds", seeds_text, "comma-separated seeds");

    CLI::App* sweep_cmd = app.add_subcommand("sweep-k", "sweep MAN reasoning steps");
    add_common(sweep_cmd, true);
    sweep_cmd->add_option("--seeds", seeds_text, "comma-separated seeds");
    sweep_cmd->add_option("--k", k_text, "comma-separated reasoning step counts");

    CLI::App* orders_cmd =
        app.add_subcommand("compare-orders", "compare staged/multi-task/sequential training");
    add_common(orders_cmd, true);
    orders_cmd->add_option("--seeds", seeds_text, "comma-separated seeds");

    CLI::App* gradcheck_cmd =
        app.add_subcommand("gradcheck", "finite-difference check of the autodiff stack");
    gradcheck_cmd->add_option("--precision", common.precision, "f32 or f64 (default f64)");

    CLI::App* synth_cmd = app.add_subcommand("synth-gen", "generate synthetic datasets");
    synth_cmd->add_option("--spec", spec_path, "synthetic suite spec JSON")->required();
    synth_cmd->add_option("--out", common.out_dir, "output directory")->required();
    synth_cmd->add_option("--seed", seed_flag, "override the spec seed");

    std::vector<std::string> argv_storage = args;
    std::vector<const char*> argv;
    argv.push_back("mmm");
    for (const auto& a : argv_storage) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << app.help() << "\nerror: " << e.what() << "\n";
        return 1;
    }

    try {
        common.seeds = parse_seed_list(seeds_text);
        if (train_cmd->parsed())
            return dispatch(common.precision,
                            [&] { return run_train<float>(common, seed_flag, resume); },
                            [&] { return run_train<double>(common, seed_flag, resume); });
        if (eval_cmd->parsed())
            return dispatch(
                common.precision,
                [&] { return run_eval<float>(checkpoint_path, data_path, common.out_dir); },
                [&] { return run_eval<double>(checkpoint_path, data_path, common.out_dir); });
        if (ablate_cmd->parsed())
            return dispatch(common.precision, [&] { return run_ablate_cmd<float>(common); },
                            [&] { return run_ablate_cmd<double>(common); });
        if (sweep_cmd->parsed()) {
            const auto k_list = parse_int_list(k_text);
            return dispatch(common.precision,
                            [&] { return run_sweep_cmd<float>(common, k_list); },
                            [&] { return run_sweep_cmd<double>(common, k_list); });
        }
        if (orders_cmd->parsed())
            return dispatch(common.precision, [&] { return run_orders_cmd<float>(common); },
                            [&] { return run_orders_cmd<double>(common); });
        if (gradcheck_cmd->parsed())
            return dispatch(common.precision, [&] { return run_gradcheck<float>(); },
                            [&] { return run_gradcheck<double>(); });
        if (synth_cmd->parsed()) return run_synth_gen(spec_path, common.out_dir, seed_flag);
        std::cerr << "error: no subcommand\n";
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const LoadError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace mmm

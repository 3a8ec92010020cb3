#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "pcv/data.hpp"
#include "pcv/harness.hpp"
#include "pcv/model_io.hpp"
#include "pcv/pruner.hpp"

using namespace pcv;
using nlohmann::json;

namespace {

struct DataFlags {
    std::string dataset = "mnist";
    std::string data_dir = "data/mnist";
    std::size_t n_train = 2000;
    std::size_t n_test = 500;
    std::uint64_t surrogate_seed = 10;
    std::size_t surrogate_size = 16;
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
    cmd->add_option("--dataset", f.dataset, "mnist | frost_surrogate");
    cmd->add_option("--data-dir", f.data_dir, "directory with MNIST IDX files");
    cmd->add_option("--n-train", f.n_train, "training subset size (0 = full)");
    cmd->add_option("--n-test", f.n_test, "test subset size (0 = full)");
    cmd->add_option("--surrogate-seed", f.surrogate_seed);
    cmd->add_option("--surrogate-size", f.surrogate_size);
}

struct Splits {
    Dataset train, test;
};

Splits load_data(const DataFlags& f) {
    Splits s;
    if (f.dataset == "mnist") {
        s.train = load_mnist(f.data_dir + "/train-images-idx3-ubyte",
                             f.data_dir + "/train-labels-idx1-ubyte", "train");
        s.test = load_mnist(f.data_dir + "/t10k-images-idx3-ubyte",
                            f.data_dir + "/t10k-labels-idx1-ubyte", "test");
    } else if (f.dataset == "frost_surrogate") {
        FrostSurrogate fr = gen_frost_surrogate(
            f.surrogate_seed, f.n_train ? f.n_train : 2000,
            f.n_test ? f.n_test : 500, f.surrogate_size);
        s.train = std::move(fr.train);
        s.test = std::move(fr.test);
    } else {
        throw Error("unknown dataset: " + f.dataset);
    }
    if (f.n_train && f.n_train < s.train.size()) s.train = s.train.subset(f.n_train);
    if (f.n_test && f.n_test < s.test.size()) s.test = s.test.subset(f.n_test);
    return s;
}

void add_train_flags(CLI::App* cmd, TrainConfig& tc) {
    cmd->add_option("--seed", tc.seed);
    cmd->add_option("--lr0", tc.lr0);
    cmd->add_option("--weight-decay", tc.weight_decay);
    cmd->add_option("--threshold", tc.accuracy_threshold);
    cmd->add_option("--batch-size", tc.batch_size);
    cmd->add_option("--max-epochs", tc.max_epochs);
    cmd->add_option("--jobs", tc.jobs);
}

json outcome_json(const VerificationOutcome& o) {
    json j;
    j["verdict"] = verdict_name(o.verdict);
    j["margin_lower_bound"] = o.margin_lower_bound;
    j["stats"] = {{"subdomains_explored", o.stats.subdomains_explored},
                  {"splits", o.stats.splits},
                  {"wall_s", o.stats.wall_s}};
    if (o.counterexample) j["counterexample"] = o.counterexample->data;
    return j;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"train, prune and formally verify small residual ReLU networks"};
    app.require_subcommand(1);

    // train
    auto* ctrain = app.add_subcommand("train", "train a baseline model");
    DataFlags train_data;
    TrainConfig train_cfg;
    std::size_t channels = 8;
    std::string out_path = "model.pcv1", history_path;
    add_data_flags(ctrain, train_data);
    add_train_flags(ctrain, train_cfg);
    ctrain->add_option("--channels", channels);
    ctrain->add_option("--out", out_path);
    ctrain->add_option("--history", history_path, "JSON-lines epoch history");

    // prune
    auto* cprune = app.add_subcommand("prune", "apply global L1 magnitude pruning");
    std::string prune_model, prune_out = "pruned.pcv1", plan_out;
    double prune_ratio = 0.5;
    cprune->add_option("--model", prune_model)->required();
    cprune->add_option("--ratio", prune_ratio)->required();
    cprune->add_option("--out", prune_out);
    cprune->add_option("--plan", plan_out, "write the prune plan as JSON");

    // finetune
    auto* cfinetune = app.add_subcommand("finetune", "prune then retrain to threshold");
    DataFlags ft_data;
    TrainConfig ft_cfg;
    std::string ft_model, ft_out = "finetuned.pcv1";
    double ft_ratio = 0.5;
    add_data_flags(cfinetune, ft_data);
    add_train_flags(cfinetune, ft_cfg);
    cfinetune->add_option("--model", ft_model)->required();
    cfinetune->add_option("--ratio", ft_ratio)->required();
    cfinetune->add_option("--out", ft_out);

    // verify
    auto* cverify = app.add_subcommand("verify", "verify one robustness property");
    DataFlags v_data;
    std::string v_model, v_property, v_out;
    std::size_t v_index = 0;
    double v_eps = 0.006, v_timeout = 300.0;
    std::size_t v_max_sub = 1u << 20;
    cverify->add_option("--model", v_model)->required();
    add_data_flags(cverify, v_data);
    cverify->add_option("--index", v_index, "test-set input index");
    cverify->add_option("--epsilon", v_eps);
    cverify->add_option("--timeout-s", v_timeout);
    cverify->add_option("--max-subdomains", v_max_sub);
    cverify->add_option("--property", v_property,
                        "property JSON {dataset, index, label?, epsilon}");
    cverify->add_option("--out", v_out, "write the outcome JSON here");

    // sweep
    auto* csweep = app.add_subcommand("sweep", "seed x ratio x epsilon experiment");
    SweepConfig sweep_cfg;
    sweep_cfg.train.accuracy_threshold = 0.97;
    sweep_cfg.train.max_epochs = 60;
    std::string results_dir = default_results_dir();
    csweep->add_option("--seeds", sweep_cfg.seeds)->delimiter(',');
    csweep->add_option("--ratios", sweep_cfg.ratios)->delimiter(',');
    csweep->add_option("--epsilons", sweep_cfg.epsilons)->delimiter(',');
    csweep->add_option("--n-inputs", sweep_cfg.n_inputs);
    csweep->add_option("--timeout-s", sweep_cfg.timeout_s);
    csweep->add_option("--max-subdomains", sweep_cfg.max_subdomains);
    csweep->add_option("--threshold", sweep_cfg.train.accuracy_threshold);
    csweep->add_option("--max-epochs", sweep_cfg.train.max_epochs);
    csweep->add_option("--batch-size", sweep_cfg.train.batch_size);
    csweep->add_option("--dataset", sweep_cfg.dataset);
    csweep->add_option("--data-dir", sweep_cfg.data_dir);
    csweep->add_option("--n-train", sweep_cfg.n_train);
    csweep->add_option("--n-test", sweep_cfg.n_test);
    csweep->add_option("--channels", sweep_cfg.channels);
    csweep->add_option("--jobs", sweep_cfg.jobs);
    csweep->add_option("--results", results_dir);

    // report
    auto* creport = app.add_subcommand("report", "aggregate a results log");
    std::string report_results = default_results_dir(), report_format = "markdown";
    std::size_t report_n_inputs = 0;
    creport->add_option("--results", report_results);
    creport->add_option("--format", report_format, "csv | markdown");
    creport->add_option("--n-inputs", report_n_inputs,
                        "override inferred instance count");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ctrain) {
            Splits data = load_data(train_data);
            NetworkF net = make_resnet4(channels, data.train.item_shape(),
                                        data.train.num_classes);
            TrainResult tr = train(std::move(net), data.train, data.test, train_cfg,
                                   false);
            save_model(out_path, tr.net,
                       {train_cfg.seed, 0.0, {{"lr0", train_cfg.lr0}}});
            if (!history_path.empty()) export_history(history_path, tr);
            std::cout << "epochs=" << tr.epochs_run << " accuracy="
                      << (tr.history.empty() ? 0.0 : tr.history.back().accuracy)
                      << " stop="
                      << (tr.stop == StopReason::ThresholdReached ? "threshold"
                                                                  : "max_epochs")
                      << "\n";
            return tr.stop == StopReason::ThresholdReached ? 0 : 2;
        }
        if (*cprune) {
            LoadedModel lm = load_model(prune_model);
            PrunePlan plan = compute_plan(lm.net, prune_ratio);
            NetworkF pruned = apply_prune(lm.net, plan);
            lm.meta.prune_ratio = prune_ratio;
            save_model(prune_out, pruned, lm.meta);
            if (!plan_out.empty()) {
                std::ofstream os(plan_out);
                os << plan.to_json().dump(2) << "\n";
            }
            SparsityReport sr = sparsity_report(pruned);
            std::cout << "pruned=" << plan.total_pruned << "/" << plan.total_prunable
                      << " tau=" << plan.threshold
                      << " prunable_zero_fraction=" << sr.prunable_zero_fraction
                      << " conv_weight_share=" << sr.conv_weight_share << "\n";
            return 0;
        }
        if (*cfinetune) {
            Splits data = load_data(ft_data);
            LoadedModel lm = load_model(ft_model);
            PruneFinetuneResult pf =
                prune_and_finetune(lm.net, data.train, data.test, ft_ratio, ft_cfg);
            lm.meta.prune_ratio = ft_ratio;
            save_model(ft_out, pf.net, lm.meta);
            std::cout << "epochs=" << pf.train_result.epochs_run << " accuracy="
                      << evaluate_accuracy(pf.net, data.test, ft_cfg.jobs) << "\n";
            return pf.train_result.stop == StopReason::ThresholdReached ? 0 : 2;
        }
        if (*cverify) {
            if (!v_property.empty()) {
                std::ifstream is(v_property);
                if (!is) throw Error("cannot open property file: " + v_property);
                json p = json::parse(is);
                v_data.dataset = p.value("dataset", v_data.dataset);
                v_index = p.value("index", v_index);
                v_eps = p.at("epsilon").get<double>();
            }
            Splits data = load_data(v_data);
            LoadedModel lm = load_model(v_model);
            std::vector<VerificationInput> inputs =
                select_verification_inputs(data.test, v_index + 1);
            const VerificationInput& vi = inputs.back();
            RobustnessProperty prop =
                make_property(vi.image.cast<double>(), vi.label, v_eps);
            VerifyBudget budget;
            budget.timeout_s = v_timeout;
            budget.max_subdomains = v_max_sub;
            VerificationOutcome o = verify(lm.net, prop, budget);
            json j = outcome_json(o);
            j["index"] = vi.index;
            j["label"] = vi.label;
            j["epsilon"] = v_eps;
            if (!v_out.empty()) {
                std::ofstream os(v_out);
                os << j.dump(2) << "\n";
            }
            std::cout << j.dump(2) << "\n";
            return 0;
        }
        if (*csweep) {
            SweepLog log = run_sweep(sweep_cfg, results_dir);
            ExperimentReport report = aggregate(log, sweep_cfg);
            std::string md = render_report(report, ReportFormat::Markdown);
            std::string csv = render_report(report, ReportFormat::Csv);
            std::ofstream(results_dir + "/report.md") << md;
            std::ofstream(results_dir + "/report.csv") << csv;
            std::cout << md;
            return 0;
        }
        if (*creport) {
            SweepLog log = read_sweep_log(report_results + "/records.jsonl");
            if (log.records.empty())
                throw Error("no verification records in " + report_results);
            SweepConfig cfg;
            std::set<std::uint64_t> seeds;
            std::set<double> ratios, epsilons;
            std::size_t n_inputs = 0;
            for (const auto& [key, rec] : log.records) {
                seeds.insert(key.seed);
                ratios.insert(key.ratio);
                epsilons.insert(key.epsilon);
                n_inputs = std::max(n_inputs, key.index + 1);
            }
            cfg.seeds.assign(seeds.begin(), seeds.end());
            cfg.ratios.assign(ratios.begin(), ratios.end());
            cfg.epsilons.assign(epsilons.begin(), epsilons.end());
            cfg.n_inputs = report_n_inputs ? report_n_inputs : n_inputs;
            ExperimentReport report = aggregate(log, cfg);
            std::cout << render_report(report, report_format == "csv"
                                                   ? ReportFormat::Csv
                                                   : ReportFormat::Markdown);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

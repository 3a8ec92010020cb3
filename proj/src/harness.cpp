#include "pcv/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "pcv/data.hpp"
#include "pcv/model_io.hpp"
#include "pcv/parallel.hpp"
#include "pcv/pruner.hpp"

namespace pcv {

namespace fs = std::filesystem;
using nlohmann::json;

void SweepConfig::validate() const {
    if (seeds.empty() || ratios.empty() || epsilons.empty())
        throw Error("sweep config: seeds, ratios and epsilons must be non-empty");
    for (double r : ratios)
        if (!(r >= 0.0 && r < 1.0))
            throw Error("sweep config: ratios must be in [0,1)");
    for (double e : epsilons)
        if (!(e > 0.0)) throw Error("sweep config: epsilons must be positive");
    if (dataset != "mnist" && dataset != "frost_surrogate")
        throw Error("sweep config: unknown dataset " + dataset);
}

std::string default_results_dir() {
    const char* env = std::getenv("PRUNECERT_RESULTS");
    return env && *env ? env : "results";
}

namespace {

std::string format_ratio(double ratio) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", ratio);
    return buf;
}

Verdict verdict_from_name(const std::string& s) {
    if (s == "verified") return Verdict::Verified;
    if (s == "falsified") return Verdict::Falsified;
    if (s == "timeout") return Verdict::Timeout;
    if (s == "unknown") return Verdict::Unknown;
    throw Error("bad verdict in results log: " + s);
}

} // namespace

std::string model_filename(std::uint64_t seed, double ratio) {
    return "model_s" + std::to_string(seed) + "_r" + format_ratio(ratio) + ".pcv1";
}

SweepLog read_sweep_log(const std::string& path) {
    SweepLog log;
    std::ifstream is(path);
    if (!is) return log;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw Error("corrupt results log line in " + path);
        std::string type = j.value("type", "");
        if (type == "verify") {
            ResultRecord r;
            r.key = {j.at("seed").get<std::uint64_t>(), j.at("ratio").get<double>(),
                     j.at("epsilon").get<double>(), j.at("index").get<std::size_t>()};
            r.verdict = verdict_from_name(j.at("verdict").get<std::string>());
            r.bound = j.value("bound", 0.0);
            r.wall_s = j.value("wall_s", 0.0);
            r.model_accuracy = j.value("model_accuracy", 0.0);
            log.records[r.key] = r;
        } else if (type == "model") {
            ModelRecord m;
            m.seed = j.at("seed").get<std::uint64_t>();
            m.ratio = j.at("ratio").get<double>();
            m.accuracy = j.at("accuracy").get<double>();
            m.epochs = j.value("epochs", 0);
            m.reached_threshold = j.value("reached_threshold", true);
            log.models[{m.seed, m.ratio}] = m;
        }
    }
    return log;
}

namespace {

struct LoadedSplits {
    Dataset train, test;
};

LoadedSplits load_splits(const SweepConfig& cfg) {
    LoadedSplits out;
    if (cfg.dataset == "mnist") {
        out.train = load_mnist(cfg.data_dir + "/train-images-idx3-ubyte",
                               cfg.data_dir + "/train-labels-idx1-ubyte", "train");
        out.test = load_mnist(cfg.data_dir + "/t10k-images-idx3-ubyte",
                              cfg.data_dir + "/t10k-labels-idx1-ubyte", "test");
    } else {
        std::size_t nt = cfg.n_train ? cfg.n_train : 2000;
        std::size_t ns = cfg.n_test ? cfg.n_test : 500;
        FrostSurrogate fr = gen_frost_surrogate(cfg.seeds.front(), nt, ns,
                                                cfg.surrogate_size);
        out.train = std::move(fr.train);
        out.test = std::move(fr.test);
    }
    if (cfg.n_train && cfg.n_train < out.train.size())
        out.train = out.train.subset(cfg.n_train);
    if (cfg.n_test && cfg.n_test < out.test.size())
        out.test = out.test.subset(cfg.n_test);
    return out;
}

void append_line(std::ofstream& os, const json& j) {
    os << j.dump() << "\n";
    os.flush();
}

json model_record_json(const ModelRecord& m) {
    return {{"type", "model"},
            {"seed", m.seed},
            {"ratio", m.ratio},
            {"accuracy", m.accuracy},
            {"epochs", m.epochs},
            {"reached_threshold", m.reached_threshold}};
}

json verify_record_json(const ResultRecord& r) {
    return {{"type", "verify"},
            {"seed", r.key.seed},
            {"ratio", r.key.ratio},
            {"epsilon", r.key.epsilon},
            {"index", r.key.index},
            {"verdict", verdict_name(r.verdict)},
            {"bound", r.bound},
            {"wall_s", r.wall_s},
            {"model_accuracy", r.model_accuracy}};
}

} // namespace

SweepLog run_sweep(const SweepConfig& cfg, const std::string& results_dir,
                   const SweepOptions& opts) {
    cfg.validate();
    fs::create_directories(results_dir);
    std::string log_path = results_dir + "/records.jsonl";
    SweepLog log = read_sweep_log(log_path);
    std::ofstream log_os(log_path, std::ios::app);
    if (!log_os) throw Error("cannot open results log for append: " + log_path);

    int jobs = cfg.jobs > 0 ? cfg.jobs : default_jobs();
    LoadedSplits data = load_splits(cfg);

    std::vector<double> ratios = cfg.ratios;
    std::sort(ratios.begin(), ratios.end());
    bool has_baseline = !ratios.empty() && ratios.front() == 0.0;

    std::size_t new_records = 0;

    for (std::uint64_t seed : cfg.seeds) {
        TrainConfig tc = cfg.train;
        tc.seed = seed;
        tc.jobs = jobs;

        // baseline: load from disk if present, else train and persist
        std::string base_path = results_dir + "/" + model_filename(seed, 0.0);
        NetworkF baseline;
        bool baseline_ok = true;
        if (fs::exists(base_path)) {
            baseline = load_model(base_path).net;
            auto it = log.models.find({seed, 0.0});
            if (it != log.models.end()) {
                baseline_ok = it->second.reached_threshold;
            } else {
                // model predates the log (or the log was removed): re-check
                double acc = evaluate_accuracy(baseline, data.test, jobs);
                baseline_ok = acc >= tc.accuracy_threshold;
                ModelRecord mr{seed, 0.0, acc, 0, baseline_ok};
                log.models[{seed, 0.0}] = mr;
                append_line(log_os, model_record_json(mr));
            }
        } else {
            NetworkF fresh = make_resnet4(cfg.channels, data.train.item_shape(),
                                          data.train.num_classes);
            TrainResult tr = train(std::move(fresh), data.train, data.test, tc, false);
            baseline = tr.net;
            baseline_ok = tr.stop == StopReason::ThresholdReached;
            double acc = tr.history.empty() ? evaluate_accuracy(baseline, data.test, jobs)
                                            : tr.history.back().accuracy;
            ModelMeta meta{seed, 0.0, {{"lr0", tc.lr0}, {"threshold", tc.accuracy_threshold}}};
            save_model(base_path, baseline, meta);
            ModelRecord mr{seed, 0.0, acc, tr.epochs_run, baseline_ok};
            log.models[{seed, 0.0}] = mr;
            append_line(log_os, model_record_json(mr));
        }
        if (!baseline_ok) {
            std::cerr << "seed " << seed
                      << ": baseline missed the accuracy threshold, skipping\n";
            continue;
        }

        for (double ratio : ratios) {
            if (ratio == 0.0 && !has_baseline) continue;
            NetworkF model;
            if (ratio == 0.0) {
                model = baseline;
            } else {
                std::string mpath = results_dir + "/" + model_filename(seed, ratio);
                if (fs::exists(mpath)) {
                    model = load_model(mpath).net;
                    auto it = log.models.find({seed, ratio});
                    if (it == log.models.end()) {
                        double acc = evaluate_accuracy(model, data.test, jobs);
                        bool ok = acc >= tc.accuracy_threshold;
                        ModelRecord mr{seed, ratio, acc, 0, ok};
                        log.models[{seed, ratio}] = mr;
                        append_line(log_os, model_record_json(mr));
                        if (!ok) continue;
                    } else if (!it->second.reached_threshold) {
                        continue;
                    }
                } else {
                    PruneFinetuneResult pf =
                        prune_and_finetune(baseline, data.train, data.test, ratio, tc);
                    model = pf.net;
                    bool ok = pf.train_result.stop == StopReason::ThresholdReached;
                    double acc = evaluate_accuracy(model, data.test, jobs);
                    ModelMeta meta{seed, ratio, {{"lr0", tc.lr0}}};
                    save_model(mpath, model, meta);
                    ModelRecord mr{seed, ratio, acc, pf.train_result.epochs_run, ok};
                    log.models[{seed, ratio}] = mr;
                    append_line(log_os, model_record_json(mr));
                    if (!ok) {
                        std::cerr << "seed " << seed << " ratio " << ratio
                                  << ": fine-tune missed the threshold, skipping\n";
                        continue;
                    }
                }
            }

            double model_acc = log.models.count({seed, ratio})
                                   ? log.models[{seed, ratio}].accuracy
                                   : evaluate_accuracy(model, data.test, jobs);
            NetworkD netd = widen(model);
            std::vector<VerificationInput> inputs =
                select_verification_inputs(data.test, cfg.n_inputs);

            for (double eps : cfg.epsilons) {
                std::vector<std::size_t> todo;
                for (const VerificationInput& vi : inputs) {
                    RecordKey key{seed, ratio, eps, vi.index};
                    if (!log.records.count(key)) todo.push_back(vi.index);
                }
                if (todo.empty()) continue;
                if (opts.max_new_records && new_records >= opts.max_new_records)
                    return log;
                if (opts.max_new_records)
                    todo.resize(std::min(todo.size(),
                                         opts.max_new_records - new_records));

                std::vector<ResultRecord> results(todo.size());
                parallel_for(todo.size(), jobs, [&](std::size_t k) {
                    const VerificationInput& vi = inputs[todo[k]];
                    RobustnessProperty prop = make_property(
                        vi.image.cast<double>(), vi.label, eps);
                    VerifyBudget budget;
                    budget.timeout_s = cfg.timeout_s;
                    budget.max_subdomains = cfg.max_subdomains;
                    VerificationOutcome o = verify(netd, prop, budget);
                    results[k] = {{seed, ratio, eps, vi.index},
                                  o.verdict,
                                  o.margin_lower_bound,
                                  o.stats.wall_s,
                                  model_acc};
                });
                for (const ResultRecord& r : results) {
                    log.records[r.key] = r;
                    append_line(log_os, verify_record_json(r));
                    ++new_records;
                }
                if (opts.max_new_records && new_records >= opts.max_new_records)
                    return log;
            }
        }
    }
    return log;
}

ExperimentReport aggregate(const SweepLog& log, const SweepConfig& cfg) {
    cfg.validate();
    ExperimentReport report;
    report.ratios = cfg.ratios;
    std::sort(report.ratios.begin(), report.ratios.end());
    report.epsilons = cfg.epsilons;
    std::sort(report.epsilons.begin(), report.epsilons.end());
    report.n_inputs = cfg.n_inputs;

    auto mean_std = [](const std::vector<double>& xs) {
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double var = 0.0;
        if (xs.size() > 1) {
            for (double x : xs) var += (x - mean) * (x - mean);
            var /= static_cast<double>(xs.size() - 1);
        }
        return std::pair{mean, std::sqrt(var)};
    };

    for (double ratio : report.ratios) {
        std::vector<double> accs;
        for (std::uint64_t seed : cfg.seeds) {
            auto it = log.models.find({seed, ratio});
            if (it != log.models.end() && it->second.reached_threshold)
                accs.push_back(it->second.accuracy);
        }
        if (!accs.empty()) report.accuracy[ratio] = mean_std(accs);

        for (double eps : report.epsilons) {
            std::vector<double> verified, falsified, timeouts, unknowns;
            for (std::uint64_t seed : cfg.seeds) {
                std::size_t v = 0, f = 0, t = 0, u = 0, present = 0;
                for (std::size_t i = 0; i < cfg.n_inputs; ++i) {
                    auto it = log.records.find({seed, ratio, eps, i});
                    if (it == log.records.end()) continue;
                    ++present;
                    switch (it->second.verdict) {
                        case Verdict::Verified: ++v; break;
                        case Verdict::Falsified: ++f; break;
                        case Verdict::Timeout: ++t; break;
                        case Verdict::Unknown: ++u; break;
                    }
                }
                if (present == 0) continue;
                verified.push_back(static_cast<double>(v));
                falsified.push_back(static_cast<double>(f));
                timeouts.push_back(static_cast<double>(t));
                unknowns.push_back(static_cast<double>(u));
            }
            if (verified.empty()) {
                std::cerr << "warning: empty report cell at ratio " << ratio
                          << " epsilon " << eps << "\n";
                continue;
            }
            ReportCell cell;
            auto [m, s] = mean_std(verified);
            cell.mean = m;
            cell.stddev = s;
            cell.falsified_mean = mean_std(falsified).first;
            cell.timeout_mean = mean_std(timeouts).first;
            cell.unknown_mean = mean_std(unknowns).first;
            cell.seeds = verified.size();
            report.cells[{ratio, eps}] = cell;
        }
    }
    return report;
}

namespace {

std::string row_label(double ratio) {
    if (ratio == 0.0) return "Unpruned";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f%% Pruned", ratio * 100.0);
    return buf;
}

std::string fixed1(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

std::string full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

std::string render_report(const ExperimentReport& report, ReportFormat format) {
    std::ostringstream os;
    if (format == ReportFormat::Csv) {
        os << "type,ratio,epsilon,mean,std,falsified_mean,timeout_mean,unknown_mean,seeds\n";
        for (double ratio : report.ratios) {
            for (double eps : report.epsilons) {
                auto it = report.cells.find({ratio, eps});
                if (it == report.cells.end()) continue;
                const ReportCell& c = it->second;
                os << "verified," << full(ratio) << "," << full(eps) << ","
                   << full(c.mean) << "," << full(c.stddev) << ","
                   << full(c.falsified_mean) << "," << full(c.timeout_mean) << ","
                   << full(c.unknown_mean) << "," << c.seeds << "\n";
            }
        }
        for (double ratio : report.ratios) {
            auto it = report.accuracy.find(ratio);
            if (it == report.accuracy.end()) continue;
            os << "accuracy," << full(ratio) << ",," << full(it->second.first) << ","
               << full(it->second.second) << ",,,,\n";
        }
        return os.str();
    }

    // markdown, mean +/- sample std (divisor n-1)
    os << "## Verified instances (mean ± std across seeds, out of "
       << report.n_inputs << ")\n\n";
    os << "| Model Type |";
    for (double eps : report.epsilons) os << " ε=" << eps << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < report.epsilons.size(); ++i) os << "---|";
    os << "\n";
    for (double ratio : report.ratios) {
        os << "| " << row_label(ratio) << " |";
        for (double eps : report.epsilons) {
            auto it = report.cells.find({ratio, eps});
            if (it == report.cells.end()) {
                os << " - |";
            } else {
                os << " " << fixed1(it->second.mean) << " ± "
                   << fixed1(it->second.stddev) << " |";
            }
        }
        os << "\n";
    }

    os << "\n## Accuracy\n\n| Model Type | Accuracy |\n|---|---|\n";
    for (double ratio : report.ratios) {
        auto it = report.accuracy.find(ratio);
        os << "| " << row_label(ratio) << " | ";
        if (it == report.accuracy.end()) {
            os << "- |\n";
        } else {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.3f%% ± %.3f%%",
                          it->second.first * 100.0, it->second.second * 100.0);
            os << buf << " |\n";
        }
    }
    return os.str();
}

} // namespace pcv

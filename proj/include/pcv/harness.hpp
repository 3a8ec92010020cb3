#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pcv/trainer.hpp"
#include "pcv/verifier.hpp"

namespace pcv {

struct SweepConfig {
    std::string dataset = "mnist"; // "mnist" | "frost_surrogate"
    std::vector<std::uint64_t> seeds{10, 20, 30};
    std::vector<double> ratios{0.0, 0.4, 0.8};
    std::vector<double> epsilons{0.006};
    std::size_t n_inputs = 20;
    double timeout_s = 30.0;
    std::size_t max_subdomains = 200000;
    TrainConfig train;
    std::size_t n_train = 2000; // 0 = full split
    std::size_t n_test = 500;
    std::size_t channels = 8;
    std::size_t surrogate_size = 16;
    int jobs = 0; // 0 = hardware concurrency
    std::string data_dir = "data/mnist";

    void validate() const;
};

struct RecordKey {
    std::uint64_t seed;
    double ratio;
    double epsilon;
    std::size_t index;
    auto operator<=>(const RecordKey&) const = default;
};

struct ResultRecord {
    RecordKey key;
    Verdict verdict;
    double bound;
    double wall_s;
    double model_accuracy;
};

struct ModelRecord {
    std::uint64_t seed;
    double ratio;
    double accuracy;
    int epochs;
    bool reached_threshold;
};

struct SweepLog {
    std::map<RecordKey, ResultRecord> records;
    std::map<std::pair<std::uint64_t, double>, ModelRecord> models;
};

SweepLog read_sweep_log(const std::string& path);

struct SweepOptions {
    // testing hook: stop after appending this many new verification records
    // (simulates an interrupted run); 0 = unlimited
    std::size_t max_new_records = 0;
};

// Trains (or reloads) every (seed, ratio) model, verifies the first
// n_inputs test items per epsilon, and appends one JSON line per result to
// <results_dir>/records.jsonl. Completed keys are skipped on re-run.
SweepLog run_sweep(const SweepConfig& cfg, const std::string& results_dir,
                   const SweepOptions& opts = {});

struct ReportCell {
    double mean = 0.0, stddev = 0.0; // verified counts across seeds
    double falsified_mean = 0.0;
    double timeout_mean = 0.0;
    double unknown_mean = 0.0;
    std::size_t seeds = 0;
};

struct ExperimentReport {
    std::vector<double> ratios;
    std::vector<double> epsilons;
    std::size_t n_inputs = 0;
    // cells[(ratio, epsilon)]; missing = empty cell (warned)
    std::map<std::pair<double, double>, ReportCell> cells;
    // accuracy mean/std per ratio
    std::map<double, std::pair<double, double>> accuracy;
};

// Per-cell verified counts per seed, then mean and sample standard
// deviation (divisor n-1; 0 for a single seed).
ExperimentReport aggregate(const SweepLog& log, const SweepConfig& cfg);

enum class ReportFormat { Csv, Markdown };

std::string render_report(const ExperimentReport& report, ReportFormat format);

// Default results directory: $PRUNECERT_RESULTS or "results".
std::string default_results_dir();

std::string model_filename(std::uint64_t seed, double ratio);

} // namespace pcv

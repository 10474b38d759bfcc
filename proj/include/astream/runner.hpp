#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "astream/config.hpp"
#include "astream/metrics.hpp"

namespace astream {

// One trained/evaluated sweep entry. `run` indexes the seed repeat.
struct CompareRow {
    LossKind loss = LossKind::FCEL;
    int run = 0;
    bool failed = false;
    std::string fail_message;
    EvalReport report;
};

struct CompareOutput {
    std::vector<CompareRow> rows;     // every (loss, run) result, config order
    std::vector<CompareRow> medians;  // one per loss, run = -1
    std::string dataset_checksum;     // FNV-1a of manifest + blob
    std::filesystem::path dataset_dir;
};

// Loads the dataset at config.data_dir if present, otherwise generates,
// splits 70/15/15 and writes it there (default <out>/dataset).
std::filesystem::path ensure_dataset(const RunConfig& config, const std::filesystem::path& out_dir);

// Trains one model per loss (same dataset and per-run seeds for every loss)
// and evaluates each on the test split. n_seeds > 1 repeats the sweep with
// derived seeds; medians are reported per loss.
CompareOutput run_compare(const RunConfig& config, const std::filesystem::path& out_dir, int n_seeds);

// Writes compare_<task>.txt (aligned, task-specific columns) and
// compare_<task>.tsv (full metric battery) under out_dir. Byte-deterministic
// for a fixed config and seed.
void write_compare_tables(const CompareOutput& output, const RunConfig& config,
                          const std::filesystem::path& out_dir);

// Seeds for sweep repeat r; run 0 uses the configured seeds unchanged.
std::pair<std::uint64_t, std::uint64_t> sweep_seeds(const RunConfig& config, int run);

std::string fnv1a_file(const std::filesystem::path& path);

// Formats an EvalReport as one tab-separated line (schema in runner.cpp).
std::string report_tsv_line(const std::string& loss, const std::string& run,
                            const CompareRow& row);

double median(std::vector<double> values);

}  // namespace astream

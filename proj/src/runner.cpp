#include "astream/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "astream/rng.hpp"
#include "astream/trainer.hpp"

namespace astream {

std::string fnv1a_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checksum: cannot open '" + path.string() + "'");
    std::uint64_t h = 1469598103934665603ull;
    char buf[65536];
    while (is.read(buf, sizeof buf) || is.gcount() > 0) {
        const std::streamsize n = is.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!is) break;
    }
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

double median(std::vector<double> values) {
    if (values.empty()) throw Error("median: empty list");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::filesystem::path ensure_dataset(const RunConfig& config, const std::filesystem::path& out_dir) {
    const std::filesystem::path dir =
        config.data_dir.empty() ? out_dir / "dataset" : std::filesystem::path(config.data_dir);
    if (std::filesystem::exists(dir / "manifest.tsv")) return dir;
    Dataset ds = generate(config.gen);
    split_dataset(ds, 0.70, 0.15, 0.15, config.gen.seed);
    write_dataset(ds, dir);
    return dir;
}

std::pair<std::uint64_t, std::uint64_t> sweep_seeds(const RunConfig& config, int run) {
    if (run == 0) return {config.model.seed, config.train.seed};
    const std::uint64_t r = static_cast<std::uint64_t>(run);
    return {mix_seed(config.model.seed, mix_seed(r, "sweep-model")),
            mix_seed(config.train.seed, mix_seed(r, "sweep-train"))};
}

CompareOutput run_compare(const RunConfig& config, const std::filesystem::path& out_dir,
                          int n_seeds) {
    if (n_seeds < 1) throw ConfigError("compare: --seeds must be >= 1");
    std::filesystem::create_directories(out_dir);
    CompareOutput out;
    out.dataset_dir = ensure_dataset(config, out_dir);
    out.dataset_checksum = fnv1a_file(out.dataset_dir / "manifest.tsv") + "-" +
                           fnv1a_file(out.dataset_dir / "sequences.bin");
    const Dataset dataset = read_dataset(out.dataset_dir);

    for (const LossSpec& spec : config.losses) {
        std::vector<CompareRow> runs;
        for (int r = 0; r < n_seeds; ++r) {
            CompareRow row;
            row.loss = spec.kind;
            row.run = r;
            try {
                const auto [model_seed, train_seed] = sweep_seeds(config, r);
                ModelConfig mc = config.model;
                mc.seed = model_seed;
                TrainConfig tc = config.train;
                tc.seed = train_seed;
                tc.loss = spec;
                tc.task = config.task;
                StreamingModel model = StreamingModel::build(mc);
                TrainResult result = train(dataset, std::move(model), tc);
                if (result.diverged) {
                    row.failed = true;
                    row.fail_message = result.diverged_message;
                } else {
                    row.report = evaluate_model(result.model, dataset, config.task, config.target_fpr);
                }
            } catch (const Error& e) {
                row.failed = true;
                row.fail_message = e.what();
            }
            runs.push_back(row);
            out.rows.push_back(row);
        }

        CompareRow med;
        med.loss = spec.kind;
        med.run = -1;
        std::vector<double> auc, fnr, thr, brier_v, lm, l25, l50, l75;
        for (const CompareRow& r : runs) {
            if (r.failed) continue;
            auc.push_back(r.report.auc);
            fnr.push_back(r.report.fnr_at_target_fpr);
            thr.push_back(r.report.threshold);
            brier_v.push_back(r.report.brier);
            if (r.report.has_latency) {
                lm.push_back(r.report.latency.mean);
                l25.push_back(r.report.latency.p25);
                l50.push_back(r.report.latency.p50);
                l75.push_back(r.report.latency.p75);
            }
        }
        if (auc.empty()) {
            med.failed = true;
            med.fail_message = runs.front().fail_message;
        } else {
            med.report.auc = median(auc);
            med.report.fnr_at_target_fpr = median(fnr);
            med.report.threshold = median(thr);
            med.report.brier = median(brier_v);
            if (!lm.empty()) {
                med.report.has_latency = true;
                med.report.latency.mean = median(lm);
                med.report.latency.p25 = median(l25);
                med.report.latency.p50 = median(l50);
                med.report.latency.p75 = median(l75);
            }
        }
        out.medians.push_back(med);
    }
    return out;
}

namespace {

std::string fmt(double v, const char* spec = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string lat_or_dash(const CompareRow& row, double LatencyStats::*field, double scale) {
    if (row.failed || !row.report.has_latency) return "-";
    return fmt(row.report.latency.*field * scale);
}

}  // namespace

std::string report_tsv_line(const std::string& loss, const std::string& run,
                            const CompareRow& row) {
    std::ostringstream os;
    os << loss << '\t' << run << '\t';
    if (row.failed) {
        os << "failed:" << row.fail_message << "\t-\t-\t-\t-\t-\t-\t-\t-";
        return os.str();
    }
    os << "ok\t" << fmt(row.report.auc) << '\t' << fmt(row.report.fnr_at_target_fpr) << '\t'
       << fmt(row.report.threshold) << '\t' << fmt(row.report.brier) << '\t';
    os << lat_or_dash(row, &LatencyStats::mean, 1.0) << '\t'
       << lat_or_dash(row, &LatencyStats::p25, 1.0) << '\t'
       << lat_or_dash(row, &LatencyStats::p50, 1.0) << '\t'
       << lat_or_dash(row, &LatencyStats::p75, 1.0);
    return os.str();
}

void write_compare_tables(const CompareOutput& output, const RunConfig& config,
                          const std::filesystem::path& out_dir) {
    const std::string task = to_string(config.task);
    std::filesystem::create_directories(out_dir);

    // Machine-readable: every run plus medians, full metric battery.
    {
        std::ofstream tsv(out_dir / ("compare_" + task + ".tsv"));
        if (!tsv) throw DataError("compare: cannot write tsv table");
        tsv << "# task=" << task << " dataset=" << output.dataset_checksum
            << " gen_seed=" << config.gen.seed << " model_seed=" << config.model.seed
            << " train_seed=" << config.train.seed << "\n";
        tsv << "loss\trun\tstatus\tauc\tfnr_at_" << fmt(config.target_fpr, "%.4g")
            << "_fpr\tthreshold\tbrier\tlat_mean_s\tlat_p25_s\tlat_p50_s\tlat_p75_s\n";
        for (const CompareRow& row : output.rows) {
            tsv << report_tsv_line(to_string(row.loss), std::to_string(row.run), row) << "\n";
        }
        for (const CompareRow& row : output.medians) {
            tsv << report_tsv_line(to_string(row.loss), "median", row) << "\n";
        }
    }

    // Human-readable: the task's headline columns, medians only.
    {
        std::ofstream txt(out_dir / ("compare_" + task + ".txt"));
        if (!txt) throw DataError("compare: cannot write text table");
        txt << "# task=" << task << " dataset=" << output.dataset_checksum
            << " gen_seed=" << config.gen.seed << " model_seed=" << config.model.seed
            << " train_seed=" << config.train.seed << "\n";
        char line[256];
        switch (config.task) {
            case TaskKind::KWS:
                txt << "Loss     AUC ROC (%)   Mean Latency (secs)\n";
                for (const CompareRow& row : output.medians) {
                    if (row.failed) {
                        std::snprintf(line, sizeof line, "%-8s FAILED: %s\n",
                                      to_string(row.loss).c_str(), row.fail_message.c_str());
                    } else {
                        std::snprintf(line, sizeof line, "%-8s %-13.2f %s\n",
                                      to_string(row.loss).c_str(), 100.0 * row.report.auc,
                                      row.report.has_latency
                                          ? fmt(row.report.latency.mean, "%.3f").c_str()
                                          : "-");
                    }
                    txt << line;
                }
                break;
            case TaskKind::MTD:
                txt << "Loss     % FNR @ " << fmt(100.0 * config.target_fpr, "%.3g")
                    << "% FPR   Mean Latency (millisecs)   Brier Score (%)\n";
                for (const CompareRow& row : output.medians) {
                    if (row.failed) {
                        std::snprintf(line, sizeof line, "%-8s FAILED: %s\n",
                                      to_string(row.loss).c_str(), row.fail_message.c_str());
                    } else {
                        std::snprintf(line, sizeof line, "%-8s %-18.2f %-26s %.2f\n",
                                      to_string(row.loss).c_str(), 100.0 * row.report.fnr_at_target_fpr,
                                      row.report.has_latency
                                          ? fmt(1000.0 * row.report.latency.mean, "%.0f").c_str()
                                          : "-",
                                      100.0 * row.report.brier);
                    }
                    txt << line;
                }
                break;
            case TaskKind::SOD:
                txt << "Loss     Latency (secs): Mean   p25     p50     p75\n";
                for (const CompareRow& row : output.medians) {
                    if (row.failed) {
                        std::snprintf(line, sizeof line, "%-8s FAILED: %s\n",
                                      to_string(row.loss).c_str(), row.fail_message.c_str());
                    } else {
                        std::snprintf(line, sizeof line, "%-8s %-22s %-7s %-7s %s\n",
                                      to_string(row.loss).c_str(),
                                      lat_or_dash(row, &LatencyStats::mean, 1.0).c_str(),
                                      lat_or_dash(row, &LatencyStats::p25, 1.0).c_str(),
                                      lat_or_dash(row, &LatencyStats::p50, 1.0).c_str(),
                                      lat_or_dash(row, &LatencyStats::p75, 1.0).c_str());
                    }
                    txt << line;
                }
                break;
        }
    }
}

}  // namespace astream

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "astream/anchors.hpp"
#include "astream/config.hpp"
#include "astream/runner.hpp"
#include "astream/trainer.hpp"

namespace fs = std::filesystem;
using namespace astream;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    int n_seeds = 1;
};

RunConfig load_config(const CommonArgs& args) {
    RunConfig cfg = args.config_path.empty() ? RunConfig::defaults(TaskKind::KWS)
                                             : RunConfig::from_file(args.config_path);
    if (args.seed) cfg.override_seed(*args.seed);
    return cfg;
}

int cmd_generate(const CommonArgs& args) {
    RunConfig cfg = load_config(args);
    Dataset ds = generate(cfg.gen);
    split_dataset(ds, 0.70, 0.15, 0.15, cfg.gen.seed);
    write_dataset(ds, args.out_dir);
    std::cerr << "wrote " << ds.sequences.size() << " sequences (" << ds.count(Split::Train) << "/"
              << ds.count(Split::Validation) << "/" << ds.count(Split::Test) << " train/val/test) to "
              << args.out_dir << "\n";
    return 0;
}

int cmd_train(const CommonArgs& args) {
    RunConfig cfg = load_config(args);
    const fs::path out(args.out_dir);
    const fs::path data_dir = ensure_dataset(cfg, out);
    const Dataset dataset = read_dataset(data_dir);

    TrainConfig tc = cfg.train;
    tc.loss = cfg.losses.front();
    tc.task = cfg.task;
    ModelConfig mc = cfg.model;
    StreamingModel model = StreamingModel::build(mc);
    std::cerr << "training " << to_string(tc.loss.kind) << " on " << dataset.count(Split::Train)
              << " sequences\n";
    TrainResult result = train(dataset, std::move(model), tc);

    fs::create_directories(out);
    const std::string tag = to_string(tc.loss.kind);
    std::ofstream hist(out / ("history_" + tag + ".tsv"));
    hist << result.history.to_table();
    save_checkpoint(result.model, out / ("model_" + tag + ".asck"));
    if (result.diverged) {
        std::cerr << result.diverged_message << "\n";
        return 3;
    }
    std::cerr << "saved " << (out / ("model_" + tag + ".asck")).string() << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint, const std::string& data_dir) {
    RunConfig cfg = load_config(args);
    const StreamingModel model = load_checkpoint(checkpoint);
    const Dataset dataset = read_dataset(data_dir);
    if (dataset.sequences.empty()) throw DataError("eval: dataset is empty");
    const TaskKind task = dataset.sequences.front().task;
    const EvalReport r = evaluate_model(model, dataset, task, cfg.target_fpr);

    CompareRow row;
    row.report = r;
    const std::string line = report_tsv_line(to_string(model.config().kind), "eval", row);
    const fs::path out(args.out_dir);
    fs::create_directories(out);
    std::ofstream os(out / "eval_report.tsv");
    os << "model\trun\tstatus\tauc\tfnr\tthreshold\tbrier\tlat_mean_s\tlat_p25_s\tlat_p50_s\tlat_p75_s\n"
       << line << "\n";
    std::cout << line << "\n";
    return 0;
}

int cmd_compare(const CommonArgs& args) {
    RunConfig cfg = load_config(args);
    const fs::path out(args.out_dir);
    const CompareOutput output = run_compare(cfg, out, args.n_seeds);
    write_compare_tables(output, cfg, out);

    std::ifstream txt(out / ("compare_" + to_string(cfg.task) + ".txt"));
    std::cout << txt.rdbuf();
    bool any_ok = false;
    for (const CompareRow& row : output.rows) any_ok = any_ok || !row.failed;
    return any_ok ? 0 : 3;
}

int cmd_plot_weights(const CommonArgs& args, int frames, int anchor) {
    if (frames < 1 || anchor < 1 || anchor > frames) {
        throw ConfigError("plot-weights: anchor must be in 1..frames");
    }
    const fs::path out(args.out_dir);
    fs::create_directories(out);
    char name[64];
    std::snprintf(name, sizeof name, "weights_T%d_A%d.tsv", frames, anchor);
    std::ofstream os(out / name);
    os << "t\tw_sal\tw_fcel\n";
    for (int t = 1; t <= frames; ++t) {
        char line[80];
        std::snprintf(line, sizeof line, "%d\t%.12g\t1\n", t, anchor_weight(t, anchor, frames));
        os << line;
    }
    std::cerr << "wrote " << (out / name).string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"frame-wise streaming detection: synthetic data, training, evaluation"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string checkpoint, data_dir;
    int frames = 10, anchor = 10;

    auto add_common = [&](CLI::App* sub, bool need_config) {
        auto* opt = sub->add_option("--config", args.config_path, "key=value config file");
        if (need_config) opt->required();
        sub->add_option("--out", args.out_dir, "output directory");
        sub->add_option("--seed", args.seed, "override every config seed");
        sub->add_option("--seeds", args.n_seeds, "sweep repeats with derived seeds (medians reported)");
    };

    CLI::App* generate = app.add_subcommand("generate", "generate, split and write a dataset");
    add_common(generate, true);
    CLI::App* trainc = app.add_subcommand("train", "train the first configured loss");
    add_common(trainc, true);
    CLI::App* evalc = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    add_common(evalc, false);
    evalc->add_option("--checkpoint", checkpoint, "model checkpoint (.asck)")->required();
    evalc->add_option("--data", data_dir, "dataset directory")->required();
    CLI::App* compare = app.add_subcommand("compare", "train and evaluate every configured loss");
    add_common(compare, true);
    CLI::App* plotw = app.add_subcommand("plot-weights", "emit anchor weight curve data");
    plotw->add_option("--frames", frames, "sequence length T")->required();
    plotw->add_option("--anchor", anchor, "anchor frame (1-based)")->required();
    plotw->add_option("--out", args.out_dir, "output directory");

    try {
        app.parse(argc, argv);
        if (generate->parsed()) return cmd_generate(args);
        if (trainc->parsed()) return cmd_train(args);
        if (evalc->parsed()) return cmd_eval(args, checkpoint, data_dir);
        if (compare->parsed()) return cmd_compare(args);
        if (plotw->parsed()) return cmd_plot_weights(args, frames, anchor);
        return 2;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 4;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

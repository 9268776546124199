// ecgdl - PTB-XL ECG classification pipeline driver.
//
// Subcommands: ingest, preprocess, train, evaluate, quantize, infer, report.
// Exit codes: 0 success, 1 pipeline failure, 2 usage/config failure.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ecgdl/pipeline.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string dataset_root;
    std::string leads;
    std::string output_dir;
    std::string resolution;
    std::string epochs;
    std::string seed;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "pipeline config file (INI sections)")
        ->required();
    cmd->add_option("--dataset-root", opts.dataset_root, "override dataset.root");
    cmd->add_option("--leads", opts.leads, "override dataset.leads (names, 'six' or 'all')");
    cmd->add_option("--output", opts.output_dir, "override output.dir");
    cmd->add_option("--resolution", opts.resolution, "override dataset.resolution (100|500)");
    cmd->add_option("--epochs", opts.epochs, "override train.epochs");
    cmd->add_option("--seed", opts.seed, "override the run seed");
}

ecgdl::pipeline::PipelineConfig resolve_config(const CommonOpts& opts) {
    auto cfg = ecgdl::pipeline::load_config(opts.config_path);
    if (!opts.dataset_root.empty()) ecgdl::pipeline::apply_setting(cfg, "dataset.root", opts.dataset_root);
    if (!opts.leads.empty()) ecgdl::pipeline::apply_setting(cfg, "dataset.leads", opts.leads);
    if (!opts.output_dir.empty()) ecgdl::pipeline::apply_setting(cfg, "output.dir", opts.output_dir);
    if (!opts.resolution.empty()) ecgdl::pipeline::apply_setting(cfg, "dataset.resolution", opts.resolution);
    if (!opts.epochs.empty()) ecgdl::pipeline::apply_setting(cfg, "train.epochs", opts.epochs);
    if (!opts.seed.empty()) ecgdl::pipeline::apply_setting(cfg, "seed", opts.seed);
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"PTB-XL ECG normal/abnormal classification pipeline"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string model_path, record_path;

    auto* ingest = app.add_subcommand("ingest", "build the fold-split manifest");
    add_common(ingest, opts);
    auto* preprocess = app.add_subcommand("preprocess", "condition signals into the cache");
    add_common(preprocess, opts);
    auto* train = app.add_subcommand("train", "fit the model and write model_f32.ecgm");
    add_common(train, opts);
    auto* quantize = app.add_subcommand("quantize", "rewrite the trained model at float16");
    add_common(quantize, opts);
    auto* evaluate = app.add_subcommand("evaluate", "emit metrics CSV and confusion SVG");
    add_common(evaluate, opts);
    evaluate->add_option("--model", model_path, "model file (.ecgm); defaults to the F32 run artifact");
    auto* infer = app.add_subcommand("infer", "score a single WFDB record");
    add_common(infer, opts);
    infer->add_option("--model", model_path, "model file (.ecgm); defaults to the F32 run artifact");
    infer->add_option("--record", record_path, "WFDB header (.hea) of the record")->required();
    auto* report = app.add_subcommand("report", "regenerate spectrogram and distribution figures");
    add_common(report, opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        namespace pl = ecgdl::pipeline;
        pl::PipelineConfig cfg;
        try {
            cfg = resolve_config(opts);
        } catch (const ecgdl::ParseError& e) {
            std::cerr << "config error: " << e.what() << '\n';
            return 2;
        }

        const pl::RunPaths paths(cfg);
        const auto model_or_default = [&] {
            return model_path.empty() ? paths.model_f32 : std::filesystem::path(model_path);
        };

        if (*ingest) {
            pl::run_ingest(cfg);
            std::cout << "manifest written to " << paths.manifest.string() << '\n';
        } else if (*preprocess) {
            const auto stats = pl::run_preprocess(cfg);
            std::cout << "cached " << stats.processed << " records, dropped " << stats.dropped
                      << '\n';
        } else if (*train) {
            pl::run_train(cfg);
            std::cout << "model written to " << paths.model_f32.string() << '\n';
        } else if (*quantize) {
            pl::run_quantize(cfg);
            std::cout << "quantized model written to " << paths.model_f16.string() << '\n';
        } else if (*evaluate) {
            const auto m = pl::run_evaluate(cfg, model_or_default());
            std::printf("accuracy %.2f%%  precision %.2f%%  recall %.2f%%  f1 %.2f%%\n",
                        m.accuracy, m.precision, m.recall, m.f1);
        } else if (*infer) {
            const auto r = pl::run_infer(cfg, model_or_default(), record_path);
            std::printf("probability %.6f  %s\n", r.probability,
                        r.label == 1 ? "abnormal" : "normal");
        } else if (*report) {
            pl::run_report(cfg);
            std::cout << "report artifacts written to " << cfg.output_dir << '\n';
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

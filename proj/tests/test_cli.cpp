#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ecgdl/pipeline.hpp"
#include "ecgdl/synthetic.hpp"
#include "ecgdl/wfdb.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ecgdl;

namespace {

struct CmdResult {
    int code = -1;
    std::string out;
};

CmdResult run_cli(const std::string& args) {
    const std::string cmd = std::string(ECGDL_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    EXPECT_NE(pipe, nullptr);
    CmdResult res;
    char buf[512];
    while (fgets(buf, sizeof buf, pipe)) res.out += buf;
    const int status = pclose(pipe);
    res.code = WEXITSTATUS(status);
    return res;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct Workspace {
    fs::path root;     // dataset_root
    fs::path out;      // output dir
    fs::path config;   // pipeline config file
    fs::path record1;  // a .hea usable with infer
};

// Synthetic 20-record PTB-XL-shaped dataset: WFDB files plus metadata CSV.
const Workspace& workspace() {
    static const Workspace ws = [] {
        Workspace w;
        const fs::path base = fs::temp_directory_path() / "ecgdl_cli_test";
        fs::remove_all(base);
        w.root = base / "dataset";
        w.out = base / "out";
        fs::create_directories(w.root / "records100" / "00000");

        std::ostringstream csv;
        csv << "ecg_id,scp_codes,strat_fold,filename_lr,filename_hr\n";
        for (long id = 1; id <= 20; ++id) {
            const int label = static_cast<int>(id % 2); // odd ids abnormal
            const int fold = static_cast<int>((id - 1) % 10) + 1;

            char name[16];
            std::snprintf(name, sizeof name, "%05ld_lr", id);
            const std::string rel = std::string("records100/00000/") + name;

            auto rec = synthetic::make_record(id, label, 424242, pipeline::kStandardLeads);
            wfdb::RecordHeader hdr;
            hdr.record_name = name;
            hdr.n_signals = 12;
            hdr.sampling_rate = 100;
            hdr.n_samples = 1000;
            std::ostringstream hea;
            hea << name << " 12 100 1000\n";
            for (const auto& lead : pipeline::kStandardLeads) {
                wfdb::SignalSpec spec;
                spec.file_name = std::string(name) + ".dat";
                spec.gain = 1000.0;
                spec.lead_name = lead;
                hdr.signals.push_back(spec);
                hea << name << ".dat 16 1000(0)/mV 16 0 0 0 0 " << lead << "\n";
            }
            std::ofstream(w.root / (rel + ".hea")) << hea.str();
            const auto bytes = wfdb::encode_format16(hdr, rec.samples);
            std::ofstream dat(w.root / (rel + ".dat"), std::ios::binary);
            dat.write(reinterpret_cast<const char*>(bytes.data()),
                      static_cast<std::streamsize>(bytes.size()));

            const std::string scp =
                label == 0 ? "{'NORM': 100.0, 'SR': 0.0}" : "{'IMI': 100.0, 'SR': 0.0}";
            csv << id << ",\"" << scp << "\"," << fold << ',' << rel << ','
                << "records500/00000/" << name << "\n";
            if (id == 1) w.record1 = w.root / (rel + ".hea");
        }
        std::ofstream(w.root / "ptbxl_database.csv") << csv.str();

        w.config = base / "pipeline.ini";
        std::ofstream cfg(w.config);
        cfg << "seed = 7\n"
            << "[dataset]\n"
            << "root = " << w.root.string() << "\n"
            << "resolution = 100\n"
            << "leads = all\n"
            << "[model]\n"
            << "conv_filters = 4,4,8,8,8,8\n"
            << "dense_hidden = 8\n"
            << "[train]\n"
            << "epochs = 2\n"
            << "batch_size = 8\n"
            << "[output]\n"
            << "dir = " << w.out.string() << "\n";
        return w;
    }();
    return ws;
}

std::string common_args() {
    return "-c " + workspace().config.string();
}

} // namespace

// Ordered pipeline walkthrough; later tests consume earlier artifacts, which
// gtest runs in definition order within a suite.

TEST(CliUsage, NoSubcommandIsUsageError) {
    EXPECT_EQ(run_cli("").code, 2);
    EXPECT_EQ(run_cli("frobnicate").code, 2);
    EXPECT_EQ(run_cli("train").code, 2); // --config is required
    EXPECT_EQ(run_cli("--help").code, 0);
}

TEST(CliUsage, BadConfigIsUsageError) {
    EXPECT_EQ(run_cli("ingest -c /nonexistent/pipeline.ini").code, 2);

    const fs::path bad = fs::temp_directory_path() / "ecgdl_bad.ini";
    std::ofstream(bad) << "[dataset]\nroot = x\nnot a key value pair\n";
    EXPECT_EQ(run_cli("ingest -c " + bad.string()).code, 2);

    std::ofstream(bad) << "[dataset]\nroot = x\nresolution = 250\n";
    EXPECT_EQ(run_cli("ingest -c " + bad.string()).code, 2);
}

TEST(CliPipeline, Ingest) {
    const auto res = run_cli("ingest " + common_args());
    EXPECT_EQ(res.code, 0) << res.out;
    const auto manifest = json::parse(slurp(workspace().out / "manifest.json"));
    EXPECT_EQ(manifest["n_channels"], 12);
    EXPECT_EQ(manifest["seed"], 7);
    EXPECT_EQ(manifest["splits"]["train"].size(), 16u); // folds 1-8
    EXPECT_EQ(manifest["splits"]["val"].size(), 2u);    // fold 9
    EXPECT_EQ(manifest["splits"]["test"].size(), 2u);   // fold 10
}

TEST(CliPipeline, IngestIsIdempotent) {
    const std::string first = slurp(workspace().out / "manifest.json");
    EXPECT_EQ(run_cli("ingest " + common_args()).code, 0);
    EXPECT_EQ(slurp(workspace().out / "manifest.json"), first);
}

TEST(CliPipeline, IngestLeadSubsetChangesManifest) {
    const fs::path alt = workspace().out.parent_path() / "out_three";
    const auto res =
        run_cli("ingest " + common_args() + " --leads I,II,V2 --output " + alt.string());
    EXPECT_EQ(res.code, 0) << res.out;
    const auto manifest = json::parse(slurp(alt / "manifest.json"));
    EXPECT_EQ(manifest["n_channels"], 3);
    const auto leads = manifest["leads"].get<std::vector<std::string>>();
    EXPECT_EQ(leads, (std::vector<std::string>{"I", "II", "V2"}));
}

TEST(CliPipeline, Preprocess) {
    const auto res = run_cli("preprocess " + common_args());
    EXPECT_EQ(res.code, 0) << res.out;
    EXPECT_NE(res.out.find("cached"), std::string::npos);
    std::size_t cache_files = 0;
    for (const auto& e : fs::directory_iterator(workspace().out / "cache"))
        if (e.path().extension() == ".f64") ++cache_files;
    EXPECT_EQ(cache_files, 20u);
    EXPECT_TRUE(fs::exists(workspace().out / "cache" / "dropped.json"));
}

TEST(CliPipeline, Train) {
    const auto res = run_cli("train " + common_args());
    EXPECT_EQ(res.code, 0) << res.out;
    EXPECT_TRUE(fs::exists(workspace().out / "model_f32.ecgm"));
    EXPECT_TRUE(fs::exists(workspace().out / "train_checkpoint.ecgc"));
    const std::string history = slurp(workspace().out / "history.csv");
    // header plus one row per epoch
    EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 3);
    EXPECT_NE(history.find("train_loss"), std::string::npos);
}

TEST(CliPipeline, Quantize) {
    const auto res = run_cli("quantize " + common_args());
    EXPECT_EQ(res.code, 0) << res.out;
    const auto f32 = fs::file_size(workspace().out / "model_f32.ecgm");
    const auto f16 = fs::file_size(workspace().out / "model_f16.ecgm");
    EXPECT_LT(f16, f32);
}

TEST(CliPipeline, Evaluate) {
    const auto res = run_cli("evaluate " + common_args());
    EXPECT_EQ(res.code, 0) << res.out;
    EXPECT_NE(res.out.find("accuracy"), std::string::npos);
    EXPECT_TRUE(fs::exists(workspace().out / "metrics.csv"));
    EXPECT_TRUE(fs::exists(workspace().out / "confusion.csv"));
    EXPECT_TRUE(fs::exists(workspace().out / "confusion.svg"));
    const std::string metrics = slurp(workspace().out / "metrics.csv");
    EXPECT_NE(metrics.find("accuracy"), std::string::npos);
}

TEST(CliPipeline, EvaluateQuantizedModel) {
    const auto res = run_cli("evaluate " + common_args() + " --model " +
                             (workspace().out / "model_f16.ecgm").string());
    EXPECT_EQ(res.code, 0) << res.out;
}

TEST(CliPipeline, EvaluateMissingModelIsPipelineError) {
    const std::string missing = (workspace().out / "no_such_model.ecgm").string();
    const auto res = run_cli("evaluate " + common_args() + " --model " + missing);
    EXPECT_EQ(res.code, 1);
    EXPECT_NE(res.out.find("no_such_model.ecgm"), std::string::npos);
}

TEST(CliPipeline, Infer) {
    const auto res =
        run_cli("infer " + common_args() + " --record " + workspace().record1.string());
    EXPECT_EQ(res.code, 0) << res.out;
    EXPECT_NE(res.out.find("probability"), std::string::npos);
    const bool labelled = res.out.find("normal") != std::string::npos ||
                          res.out.find("abnormal") != std::string::npos;
    EXPECT_TRUE(labelled);
}

TEST(CliPipeline, InferRequiresRecord) {
    EXPECT_EQ(run_cli("infer " + common_args()).code, 2);
}

TEST(CliPipeline, InferCorruptModelIsPipelineError) {
    const fs::path corrupt = workspace().out / "corrupt.ecgm";
    auto bytes = pipeline::read_binary_file(workspace().out / "model_f32.ecgm");
    bytes[bytes.size() / 2] ^= 0x01;
    pipeline::write_binary_file(corrupt, bytes);
    const auto res = run_cli("infer " + common_args() + " --model " + corrupt.string() +
                             " --record " + workspace().record1.string());
    EXPECT_EQ(res.code, 1);
}

TEST(CliPipeline, Report) {
    const auto res = run_cli("report " + common_args());
    EXPECT_EQ(res.code, 0) << res.out;
    EXPECT_TRUE(fs::exists(workspace().out / "label_distribution.svg"));
    EXPECT_TRUE(fs::exists(workspace().out / "spectrogram.csv"));
    const std::string svg = slurp(workspace().out / "label_distribution.svg");
    EXPECT_NE(svg.find("<svg"), std::string::npos);
}

TEST(CliPipeline, TrainDeterministicAcrossRuns) {
    // re-train into a second output dir with the same seed and compare models
    const fs::path alt = workspace().out.parent_path() / "out_repeat";
    fs::create_directories(alt / "cache");
    for (const auto& e : fs::directory_iterator(workspace().out / "cache"))
        fs::copy(e.path(), alt / "cache" / e.path().filename(),
                 fs::copy_options::overwrite_existing);
    const auto res = run_cli("train " + common_args() + " --output " + alt.string());
    EXPECT_EQ(res.code, 0) << res.out;
    EXPECT_EQ(pipeline::read_binary_file(alt / "model_f32.ecgm"),
              pipeline::read_binary_file(workspace().out / "model_f32.ecgm"));
}

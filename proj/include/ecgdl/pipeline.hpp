#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecgdl/dsp.hpp"
#include "ecgdl/eval.hpp"
#include "ecgdl/labels.hpp"
#include "ecgdl/model_format.hpp"
#include "ecgdl/nn.hpp"
#include "ecgdl/report.hpp"
#include "ecgdl/wfdb.hpp"

namespace ecgdl::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline const std::vector<std::string> kStandardLeads{
    "I", "II", "III", "AVR", "AVL", "AVF", "V1", "V2", "V3", "V4", "V5", "V6"};

struct PipelineConfig {
    std::string dataset_root;
    int resolution = 100; // 100 or 500
    std::vector<std::string> leads{kStandardLeads};
    dsp::PreprocessConfig preprocess;
    nn::ModelConfig model;
    nn::TrainConfig train;
    std::string output_dir = "out";
    std::uint64_t seed = 1;

    void validate() const {
        if (resolution != 100 && resolution != 500)
            throw ParseError("resolution must be 100 or 500");
        if (leads.empty()) throw ParseError("lead subset must be non-empty");
        for (const auto& l : leads)
            if (std::find(kStandardLeads.begin(), kStandardLeads.end(), l) ==
                kStandardLeads.end())
                throw ParseError("unknown lead: " + l);
        nn::ModelConfig m = model;
        m.in_channels = leads.size();
        m.validate();
    }

    nn::ModelConfig model_for_leads() const {
        nn::ModelConfig m = model;
        m.in_channels = leads.size();
        return m;
    }
};

// ---------------------------------------------------------------------------
// Config file (INI sections, key = value) and overrides
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string item;
    while (std::getline(is, item, sep)) out.push_back(trim(item));
    return out;
}

inline std::vector<std::size_t> parse_size_list(const std::string& s) {
    std::vector<std::size_t> out;
    for (const auto& item : split(s, ','))
        out.push_back(std::stoul(item));
    return out;
}

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ParseError("not a boolean: " + v);
}

} // namespace detail

inline std::vector<std::string> expand_lead_preset(const std::string& value) {
    if (value == "all") return kStandardLeads;
    if (value == "six") return {"I", "II", "III", "AVL", "AVR", "AVF"};
    return detail::split(value, ',');
}

// dotted key, e.g. "train.epochs" = "20"
inline void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    try {
        if (key == "dataset.root") cfg.dataset_root = value;
        else if (key == "dataset.resolution") cfg.resolution = std::stoi(value);
        else if (key == "dataset.leads") cfg.leads = expand_lead_preset(value);
        else if (key == "preprocess.lowpass_order") cfg.preprocess.lowpass_order = std::stoi(value);
        else if (key == "preprocess.lowpass_cutoff_hz") cfg.preprocess.lowpass_cutoff_hz = std::stod(value);
        else if (key == "preprocess.wavelet") cfg.preprocess.wavelet = value;
        else if (key == "preprocess.baseline_target_hz") cfg.preprocess.baseline_target_hz = std::stod(value);
        else if (key == "preprocess.rolling_window") cfg.preprocess.rolling_window = std::stoul(value);
        else if (key == "preprocess.rolling_enabled") cfg.preprocess.rolling_enabled = detail::parse_bool(value);
        else if (key == "preprocess.zero_phase") cfg.preprocess.zero_phase = detail::parse_bool(value);
        else if (key == "model.input_length") cfg.model.input_length = std::stoul(value);
        else if (key == "model.conv_filters") cfg.model.conv_filters = detail::parse_size_list(value);
        else if (key == "model.conv_kernels") cfg.model.conv_kernels = detail::parse_size_list(value);
        else if (key == "model.leaky_alpha") cfg.model.leaky_alpha = std::stod(value);
        else if (key == "model.dense_hidden") cfg.model.dense_hidden = std::stoul(value);
        else if (key == "train.epochs") cfg.train.epochs = std::stoul(value);
        else if (key == "train.batch_size") cfg.train.batch_size = std::stoul(value);
        else if (key == "train.learning_rate") cfg.train.learning_rate = std::stod(value);
        else if (key == "train.adam_beta1") cfg.train.adam_beta1 = std::stod(value);
        else if (key == "train.adam_beta2") cfg.train.adam_beta2 = std::stod(value);
        else if (key == "train.adam_eps") cfg.train.adam_eps = std::stod(value);
        else if (key == "train.bn_momentum") cfg.train.bn_momentum = std::stod(value);
        else if (key == "train.bn_eps") cfg.train.bn_eps = std::stod(value);
        else if (key == "output.dir") cfg.output_dir = value;
        else if (key == "seed") cfg.seed = std::stoull(value);
        else throw ParseError("unknown configuration key: " + key);
    } catch (const std::invalid_argument&) {
        throw ParseError("bad value for " + key + ": " + value);
    }
}

inline PipelineConfig parse_config(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        line = detail::trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ParseError("unterminated section header on line " + std::to_string(line_no));
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("expected key = value on line " + std::to_string(line_no));
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        apply_setting(cfg, section.empty() || key == "seed" ? key : section + "." + key, value);
    }
    return cfg;
}

inline PipelineConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot read config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    PipelineConfig cfg = parse_config(ss.str());
    if (cfg.dataset_root.empty()) {
        if (const char* env = std::getenv("ECGDL_DATASET_ROOT")) cfg.dataset_root = env;
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Config hashing (cache keys, run manifest)
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string preprocess_signature(const PipelineConfig& cfg) {
    std::ostringstream os;
    os << cfg.resolution << '|' << cfg.preprocess.lowpass_order << '|'
       << cfg.preprocess.lowpass_cutoff_hz << '|' << cfg.preprocess.wavelet << '|'
       << cfg.preprocess.baseline_target_hz << '|' << cfg.preprocess.rolling_window << '|'
       << cfg.preprocess.rolling_enabled << '|' << cfg.preprocess.zero_phase << '|';
    for (const auto& l : cfg.leads) os << l << ',';
    return os.str();
}

inline std::string config_hash(const PipelineConfig& cfg) {
    std::ostringstream os;
    os << preprocess_signature(cfg) << cfg.model.input_length << '|' << cfg.model.dense_hidden
       << '|' << cfg.model.leaky_alpha << '|';
    for (auto f : cfg.model.conv_filters) os << f << ',';
    for (auto k : cfg.model.conv_kernels) os << k << ',';
    os << '|' << cfg.train.epochs << '|' << cfg.train.batch_size << '|'
       << cfg.train.learning_rate << '|' << cfg.seed;
    std::ostringstream hex;
    hex << std::hex << fnv1a(os.str());
    return hex.str();
}

// ---------------------------------------------------------------------------
// Dataset access
// ---------------------------------------------------------------------------

inline std::string read_text_file(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot read file: " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline std::vector<std::uint8_t> read_binary_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot read file: " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_binary_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot write file: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline wfdb::DatasetIndex load_dataset_index(const PipelineConfig& cfg) {
    const fs::path csv = fs::path(cfg.dataset_root) / "ptbxl_database.csv";
    return wfdb::load_index(read_text_file(csv));
}

// Reads one record from a WFDB header path (the .dat sits beside the .hea).
inline wfdb::EcgRecord load_wfdb_record(const fs::path& header_path, long ecg_id = 0) {
    auto hdr = wfdb::parse_header(read_text_file(header_path));
    fs::path dat = header_path.parent_path() / hdr.signals.at(0).file_name;
    auto rec = wfdb::decode_format16(hdr, read_binary_file(dat));
    rec.ecg_id = ecg_id;
    return rec;
}

inline wfdb::EcgRecord select_leads(const wfdb::EcgRecord& rec,
                                    const std::vector<std::string>& leads) {
    wfdb::EcgRecord out;
    out.ecg_id = rec.ecg_id;
    out.sampling_rate = rec.sampling_rate;
    for (const auto& lead : leads) {
        auto it = std::find(rec.lead_names.begin(), rec.lead_names.end(), lead);
        if (it == rec.lead_names.end())
            throw ParseError("record " + std::to_string(rec.ecg_id) + " lacks lead " + lead);
        const auto c = static_cast<std::size_t>(it - rec.lead_names.begin());
        out.lead_names.push_back(lead);
        out.samples.push_back(rec.samples[c]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Preprocessing cache (keyed by record id + preprocess signature)
// ---------------------------------------------------------------------------

inline fs::path cache_dir(const PipelineConfig& cfg) {
    return fs::path(cfg.output_dir) / "cache";
}

inline fs::path cache_path(const PipelineConfig& cfg, long ecg_id) {
    std::ostringstream os;
    os << ecg_id << '_' << std::hex << fnv1a(std::to_string(ecg_id) + preprocess_signature(cfg))
       << ".f64";
    return cache_dir(cfg) / os.str();
}

// cache entry: n_channels u32, n_samples u32, then channel-major f64 samples
inline void write_cache_entry(const fs::path& path, const wfdb::EcgRecord& rec) {
    model_format::detail::Writer w;
    w.u32(static_cast<std::uint32_t>(rec.n_channels()));
    w.u32(static_cast<std::uint32_t>(rec.n_samples()));
    for (const auto& ch : rec.samples)
        for (double v : ch) w.f64(v);
    write_binary_file(path, w.bytes);
}

inline std::vector<std::vector<double>> read_cache_entry(const fs::path& path) {
    auto bytes = read_binary_file(path);
    model_format::detail::Reader r{bytes.data(), bytes.size()};
    const std::uint32_t channels = r.u32();
    const std::uint32_t samples = r.u32();
    std::vector<std::vector<double>> out(channels, std::vector<double>(samples));
    for (auto& ch : out)
        for (double& v : ch) v = r.f64();
    return out;
}

// ---------------------------------------------------------------------------
// Subcommand bodies (shared by the CLI and the integration tests)
// ---------------------------------------------------------------------------

struct RunPaths {
    fs::path manifest, model_f32, model_f16, checkpoint, history, metrics, confusion_csv,
        confusion_svg, distribution_svg, spectrogram;

    explicit RunPaths(const PipelineConfig& cfg) {
        const fs::path out(cfg.output_dir);
        manifest = out / "manifest.json";
        model_f32 = out / "model_f32.ecgm";
        model_f16 = out / "model_f16.ecgm";
        checkpoint = out / "train_checkpoint.ecgc";
        history = out / "history.csv";
        metrics = out / "metrics.csv";
        confusion_csv = out / "confusion.csv";
        confusion_svg = out / "confusion.svg";
        distribution_svg = out / "label_distribution.svg";
        spectrogram = out / "spectrogram.csv";
    }
};

inline json make_manifest(const PipelineConfig& cfg, const wfdb::FoldSplit& split) {
    json m;
    m["config_hash"] = config_hash(cfg);
    m["seed"] = cfg.seed;
    m["resolution_hz"] = cfg.resolution;
    m["leads"] = cfg.leads;
    m["n_channels"] = cfg.leads.size();
    m["splits"]["train"] = split.train;
    m["splits"]["val"] = split.val;
    m["splits"]["test"] = split.test;
    return m;
}

inline void run_ingest(const PipelineConfig& cfg) {
    cfg.validate();
    const auto index = load_dataset_index(cfg);
    const auto split = wfdb::split_folds(index);
    fs::create_directories(cfg.output_dir);
    std::ofstream f(RunPaths(cfg).manifest);
    f << make_manifest(cfg, split).dump(2) << '\n';
}

struct PreprocessStats {
    std::size_t processed = 0;
    std::size_t dropped = 0;
    std::vector<long> dropped_ids;
};

inline PreprocessStats run_preprocess(const PipelineConfig& cfg) {
    cfg.validate();
    const auto index = load_dataset_index(cfg);
    fs::create_directories(cache_dir(cfg));
    PreprocessStats stats;
    for (const auto& row : index.rows) {
        const std::string rel = cfg.resolution == 100 ? row.filename_lr : row.filename_hr;
        const fs::path hea = fs::path(cfg.dataset_root) / (rel + ".hea");
        auto rec = select_leads(load_wfdb_record(hea, row.ecg_id), cfg.leads);
        // Gate on the baseline-corrected stage: the rolling mean is itself a
        // lowpass and would fold all remaining energy into the band the gate
        // measures.
        auto stage_cfg = cfg.preprocess;
        stage_cfg.rolling_enabled = false;
        auto conditioned = dsp::preprocess_record(rec, stage_cfg);
        const auto gate = dsp::quality_gate(conditioned, conditioned.sampling_rate, cfg.preprocess);
        if (!gate.keep) {
            ++stats.dropped;
            stats.dropped_ids.push_back(row.ecg_id);
            continue;
        }
        if (cfg.preprocess.rolling_enabled)
            for (auto& channel : conditioned.samples)
                channel = dsp::rolling_mean(channel, cfg.preprocess.rolling_window);
        write_cache_entry(cache_path(cfg, row.ecg_id), conditioned);
        ++stats.processed;
    }
    // dropped ids recorded beside the cache for audit
    json drops;
    drops["dropped_ids"] = stats.dropped_ids;
    std::ofstream f(cache_dir(cfg) / "dropped.json");
    f << drops.dump(2) << '\n';
    return stats;
}

struct LabelledSplit {
    nn::Dataset train, val, test;
    labels::ClassWeights weights;
};

// Assembles network-ready tensors from the preprocessing cache; records with
// no mappable SCP code or no cache entry (dropped) are skipped.
inline LabelledSplit assemble_datasets(const PipelineConfig& cfg) {
    const auto index = load_dataset_index(cfg);
    const auto model = cfg.model_for_leads();

    struct Row { const wfdb::IndexRow* row; int label; };
    std::vector<Row> train_rows, val_rows, test_rows;
    for (const auto& row : index.rows) {
        int label;
        try {
            label = labels::select_binary_label(row.scp_codes).value;
        } catch (const UnknownCode&) {
            continue;
        } catch (const UnlabeledRecord&) {
            continue;
        }
        if (!fs::exists(cache_path(cfg, row.ecg_id))) continue;
        auto& dst = row.strat_fold <= 8 ? train_rows
                    : row.strat_fold == 9 ? val_rows
                                          : test_rows;
        dst.push_back({&row, label});
    }

    const auto build = [&](const std::vector<Row>& rows) {
        nn::Dataset ds;
        ds.x = Tensor({rows.size(), model.in_channels, model.input_length});
        ds.y.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto channels = read_cache_entry(cache_path(cfg, rows[i].row->ecg_id));
            if (channels.size() != model.in_channels ||
                channels[0].size() != model.input_length)
                throw ShapeError("cache entry for record " +
                                 std::to_string(rows[i].row->ecg_id) +
                                 " does not match the model input shape");
            for (std::size_t c = 0; c < channels.size(); ++c)
                std::copy(channels[c].begin(), channels[c].end(),
                          ds.x.data() + (i * model.in_channels + c) * model.input_length);
            ds.y[i] = rows[i].label;
        }
        return ds;
    };

    LabelledSplit out;
    out.train = build(train_rows);
    out.val = build(val_rows);
    out.test = build(test_rows);
    out.weights = labels::compute_class_weights([&] {
        std::vector<labels::BinaryLabel> ls;
        for (const auto& r : train_rows) ls.push_back({r.label});
        return ls;
    }());
    return out;
}

inline void run_train(const PipelineConfig& cfg) {
    cfg.validate();
    auto data = assemble_datasets(cfg);
    const auto model_cfg = cfg.model_for_leads();
    nn::TrainConfig tc = cfg.train;
    tc.shuffle_seed = cfg.seed;
    tc.class_weights = data.weights;

    auto result = nn::train_model(data.train, data.val, model_cfg, tc);

    const RunPaths paths(cfg);
    fs::create_directories(cfg.output_dir);
    write_binary_file(paths.model_f32,
                      model_format::encode_model(model_cfg, result.params,
                                                 model_format::Dtype::F32));
    write_binary_file(paths.checkpoint,
                      model_format::encode_checkpoint(model_cfg, result.params, result.adam,
                                                      result.history));
    report::write_file(paths.history.string(), report::history_csv(result.history));

    const auto index = load_dataset_index(cfg);
    std::ofstream f(paths.manifest);
    f << make_manifest(cfg, wfdb::split_folds(index)).dump(2) << '\n';
}

inline void run_quantize(const PipelineConfig& cfg) {
    const RunPaths paths(cfg);
    auto decoded = model_format::decode_model(read_binary_file(paths.model_f32));
    write_binary_file(paths.model_f16,
                      model_format::encode_model(decoded.config, decoded.params,
                                                 model_format::Dtype::F16));
}

inline eval::Metrics run_evaluate(const PipelineConfig& cfg, const fs::path& model_path) {
    cfg.validate();
    auto decoded = model_format::decode_model(read_binary_file(model_path));
    auto data = assemble_datasets(cfg);
    auto probs = nn::predict(decoded.config, decoded.params, data.test.x);
    const auto cm = eval::confusion_matrix(probs, data.test.y);
    const auto metrics = eval::compute_metrics(cm);

    const RunPaths paths(cfg);
    fs::create_directories(cfg.output_dir);
    std::size_t params = nn::trainable_count(decoded.params);
    report::write_file(paths.metrics.string(),
                       report::metrics_csv({{decoded.config.in_channels, metrics}}, {params}));
    report::write_file(paths.confusion_csv.string(), report::confusion_csv(cm));
    report::write_file(paths.confusion_svg.string(), report::confusion_svg(cm));
    return metrics;
}

struct InferResult {
    double probability = 0.0;
    int label = 0;
};

inline InferResult run_infer(const PipelineConfig& cfg, const fs::path& model_path,
                             const fs::path& header_path) {
    auto decoded = model_format::decode_model(read_binary_file(model_path));
    auto rec = select_leads(load_wfdb_record(header_path), cfg.leads);
    auto conditioned = dsp::preprocess_record(rec, cfg.preprocess);
    if (conditioned.n_channels() != decoded.config.in_channels ||
        conditioned.n_samples() != decoded.config.input_length)
        throw ShapeError("record shape does not match the model input");
    Tensor x({1, decoded.config.in_channels, decoded.config.input_length});
    for (std::size_t c = 0; c < conditioned.n_channels(); ++c)
        std::copy(conditioned.samples[c].begin(), conditioned.samples[c].end(),
                  x.data() + c * decoded.config.input_length);
    auto probs = nn::predict(decoded.config, decoded.params, x);
    return {probs[0], probs[0] >= 0.5 ? 1 : 0};
}

inline void run_report(const PipelineConfig& cfg) {
    cfg.validate();
    const auto index = load_dataset_index(cfg);
    const RunPaths paths(cfg);
    fs::create_directories(cfg.output_dir);

    // label distribution over the whole index (figure plumbing)
    std::map<std::string, std::size_t> super_counts;
    std::size_t n_normal = 0, n_abnormal = 0;
    for (const auto& row : index.rows) {
        try {
            const int label = labels::select_binary_label(row.scp_codes).value;
            (label == 0 ? n_normal : n_abnormal)++;
        } catch (const std::exception&) {
            continue;
        }
        for (const auto& [code, conf] : row.scp_codes) {
            (void)conf;
            if (labels::is_known_code(code))
                super_counts[labels::to_string(labels::map_to_superclass(code))]++;
        }
    }
    std::vector<std::pair<std::string, std::size_t>> bars(super_counts.begin(),
                                                          super_counts.end());
    bars.emplace_back("normal", n_normal);
    bars.emplace_back("abnormal", n_abnormal);
    report::write_file(paths.distribution_svg.string(), report::distribution_svg(bars));

    // spectrogram of the first record's first configured lead
    if (!index.rows.empty()) {
        const auto& row = index.rows.front();
        const std::string rel = cfg.resolution == 100 ? row.filename_lr : row.filename_hr;
        const fs::path hea = fs::path(cfg.dataset_root) / (rel + ".hea");
        auto rec = select_leads(load_wfdb_record(hea, row.ecg_id), {cfg.leads.front()});
        const std::size_t window = std::min<std::size_t>(256, rec.n_samples());
        const auto sp = dsp::stft_spectrogram(rec.samples[0], rec.sampling_rate, window,
                                              window / 2);
        report::write_file(paths.spectrogram.string(), report::spectrogram_csv(sp));
    }
}

} // namespace ecgdl::pipeline

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ecgdl/errors.hpp"

namespace ecgdl::wfdb {

struct SignalSpec {
    std::string file_name;
    int storage_format = 16;     // only format 16 is supported
    double gain = 200.0;         // adu per millivolt
    int adc_baseline = 0;
    std::string lead_name;
};

struct RecordHeader {
    std::string record_name;
    std::size_t n_signals = 0;
    double sampling_rate = 0.0;
    std::size_t n_samples = 0;
    std::vector<SignalSpec> signals;
};

struct EcgRecord {
    long ecg_id = 0;
    double sampling_rate = 0.0;
    std::vector<std::vector<double>> samples; // [channel][sample], millivolts
    std::vector<std::string> lead_names;
    std::size_t sentinel_repairs = 0; // count of -32768 samples patched

    std::size_t n_channels() const { return samples.size(); }
    std::size_t n_samples() const { return samples.empty() ? 0 : samples[0].size(); }
};

struct IndexRow {
    long ecg_id = 0;
    std::map<std::string, double> scp_codes; // code -> confidence percent
    int strat_fold = 0;
    std::string filename_lr;
    std::string filename_hr;
};

struct DatasetIndex {
    std::vector<IndexRow> rows;
};

struct FoldSplit {
    std::vector<long> train; // folds 1-8
    std::vector<long> val;   // fold 9
    std::vector<long> test;  // fold 10
};

namespace detail {

inline std::vector<std::string> tokenize(const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> out;
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

// gain field grammar: gain, optionally "(baseline)", optionally "/units"
inline void parse_gain_field(const std::string& field, SignalSpec& spec, std::size_t line_no) {
    std::size_t pos = 0;
    try {
        spec.gain = std::stod(field, &pos);
    } catch (const std::exception&) {
        throw ParseError("bad gain field on line " + std::to_string(line_no) + ": " + field);
    }
    if (pos < field.size() && field[pos] == '(') {
        auto close = field.find(')', pos);
        if (close == std::string::npos)
            throw ParseError("unclosed baseline on line " + std::to_string(line_no));
        spec.adc_baseline = std::stoi(field.substr(pos + 1, close - pos - 1));
    }
    if (spec.gain <= 0)
        throw ParseError("non-positive gain on line " + std::to_string(line_no));
}

} // namespace detail

// First line: "name n_signals fs n_samples"; then one line per signal with
// file name, format code, gain(baseline)/units, trailing fields, lead name last.
inline RecordHeader parse_header(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(is, line)) {
        // strip comments and trailing CR
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        lines.push_back(line);
    }
    if (lines.empty()) throw ParseError("empty header (line 1)");

    RecordHeader hdr;
    {
        auto toks = detail::tokenize(lines[0]);
        if (toks.size() < 4) throw ParseError("malformed record line (line 1)");
        try {
            hdr.record_name = toks[0];
            hdr.n_signals = std::stoul(toks[1]);
            hdr.sampling_rate = std::stod(toks[2]);
            hdr.n_samples = std::stoul(toks[3]);
        } catch (const std::exception&) {
            throw ParseError("malformed record line (line 1)");
        }
    }
    if (hdr.n_samples == 0) throw ParseError("zero samples declared (line 1)");
    if (hdr.sampling_rate <= 0) throw ParseError("non-positive sampling rate (line 1)");

    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto toks = detail::tokenize(lines[i]);
        if (toks.size() < 4)
            throw ParseError("malformed signal line " + std::to_string(i + 1));
        SignalSpec spec;
        spec.file_name = toks[0];
        // format code may carry a samples-per-frame suffix such as "16x1"
        try {
            spec.storage_format = std::stoi(toks[1]);
        } catch (const std::exception&) {
            throw ParseError("bad format code on line " + std::to_string(i + 1));
        }
        if (spec.storage_format != 16)
            throw UnsupportedFormat("storage format " + std::to_string(spec.storage_format) +
                                    " (only format 16 is supported)");
        detail::parse_gain_field(toks[2], spec, i + 1);
        spec.lead_name = toks.back();
        if (spec.lead_name.empty())
            throw ParseError("empty lead name on line " + std::to_string(i + 1));
        hdr.signals.push_back(std::move(spec));
    }
    if (hdr.signals.size() != hdr.n_signals)
        throw InconsistentHeader("header declares " + std::to_string(hdr.n_signals) +
                                 " signals but lists " + std::to_string(hdr.signals.size()));
    return hdr;
}

inline constexpr std::int16_t kInvalidSample = -32768;

// 16-bit little-endian two's-complement, frame-interleaved.
// physical mV = (stored - adc_baseline) / gain; the invalid-sample sentinel
// is replaced by the previous valid sample in that channel (0.0 if first).
inline EcgRecord decode_format16(const RecordHeader& hdr, const std::vector<std::uint8_t>& bytes) {
    if (hdr.n_samples == 0) throw EmptyRecord("record declares zero samples");
    const std::size_t expected = hdr.n_signals * hdr.n_samples * 2;
    if (bytes.size() != expected)
        throw TruncatedSignal("expected " + std::to_string(expected) + " bytes, got " +
                              std::to_string(bytes.size()));

    EcgRecord rec;
    rec.sampling_rate = hdr.sampling_rate;
    rec.samples.assign(hdr.n_signals, std::vector<double>(hdr.n_samples, 0.0));
    for (const auto& s : hdr.signals) rec.lead_names.push_back(s.lead_name);

    for (std::size_t t = 0; t < hdr.n_samples; ++t) {
        for (std::size_t c = 0; c < hdr.n_signals; ++c) {
            const std::size_t off = 2 * (t * hdr.n_signals + c);
            const auto stored = static_cast<std::int16_t>(
                static_cast<std::uint16_t>(bytes[off]) |
                (static_cast<std::uint16_t>(bytes[off + 1]) << 8));
            if (stored == kInvalidSample) {
                rec.samples[c][t] = (t == 0) ? 0.0 : rec.samples[c][t - 1];
                ++rec.sentinel_repairs;
            } else {
                const auto& spec = hdr.signals[c];
                rec.samples[c][t] = (static_cast<double>(stored) - spec.adc_baseline) / spec.gain;
            }
        }
    }
    return rec;
}

// Inverse of decode_format16 for values representable in 16 bits.
inline std::vector<std::uint8_t> encode_format16(const RecordHeader& hdr,
                                                 const std::vector<std::vector<double>>& samples_mv) {
    std::vector<std::uint8_t> bytes(hdr.n_signals * hdr.n_samples * 2);
    for (std::size_t t = 0; t < hdr.n_samples; ++t) {
        for (std::size_t c = 0; c < hdr.n_signals; ++c) {
            const auto& spec = hdr.signals[c];
            const double adu = samples_mv[c][t] * spec.gain + spec.adc_baseline;
            const auto stored = static_cast<std::int16_t>(std::lround(adu));
            const std::size_t off = 2 * (t * hdr.n_signals + c);
            bytes[off] = static_cast<std::uint8_t>(static_cast<std::uint16_t>(stored) & 0xff);
            bytes[off + 1] = static_cast<std::uint8_t>(static_cast<std::uint16_t>(stored) >> 8);
        }
    }
    return bytes;
}

// Parses the stringified python-dict scp_codes cell, e.g.
// {'IMI': 15.0, 'LNGQT': 100.0}
inline std::map<std::string, double> parse_scp_codes(const std::string& text) {
    std::size_t i = 0;
    const auto skip_ws = [&] { while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i; };

    skip_ws();
    if (i >= text.size() || text[i] != '{') throw ParseError("scp_codes: expected '{'");
    ++i;
    std::map<std::string, double> out;
    skip_ws();
    while (i < text.size() && text[i] != '}') {
        if (text[i] != '\'') throw ParseError("scp_codes: expected quoted code");
        const auto close = text.find('\'', i + 1);
        if (close == std::string::npos) throw ParseError("scp_codes: unterminated code");
        std::string code = text.substr(i + 1, close - i - 1);
        i = close + 1;
        skip_ws();
        if (i >= text.size() || text[i] != ':') throw ParseError("scp_codes: expected ':'");
        ++i;
        skip_ws();
        std::size_t pos = 0;
        double conf;
        try {
            conf = std::stod(text.substr(i), &pos);
        } catch (const std::exception&) {
            throw ParseError("scp_codes: non-numeric confidence for " + code);
        }
        i += pos;
        if (conf < 0.0 || conf > 100.0)
            throw ParseError("scp_codes: confidence out of [0,100] for " + code);
        out[code] = conf;
        skip_ws();
        if (i < text.size() && text[i] == ',') { ++i; skip_ws(); }
    }
    if (i >= text.size() || text[i] != '}') throw ParseError("scp_codes: expected '}'");
    if (out.empty()) throw ParseError("scp_codes: empty map");
    return out;
}

inline std::string render_scp_codes(const std::map<std::string, double>& scp) {
    std::ostringstream os;
    os.precision(std::numeric_limits<double>::max_digits10);
    os << '{';
    bool first = true;
    for (const auto& [code, conf] : scp) {
        if (!first) os << ", ";
        first = false;
        os << '\'' << code << "': " << conf;
    }
    os << '}';
    return os.str();
}

namespace detail {

// RFC-4180 style row split with double-quote escaping
inline std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') { cur += '"'; ++i; }
                else in_quotes = false;
            } else cur += ch;
        } else {
            if (ch == '"') in_quotes = true;
            else if (ch == ',') { cells.push_back(std::move(cur)); cur.clear(); }
            else cur += ch;
        }
    }
    cells.push_back(std::move(cur));
    return cells;
}

} // namespace detail

// Reads the metadata CSV (columns ecg_id, scp_codes, strat_fold,
// filename_lr, filename_hr; extra columns ignored).
inline DatasetIndex load_index(const std::string& csv) {
    std::istringstream is(csv);
    std::string line;
    if (!std::getline(is, line)) throw SchemaError("empty metadata CSV");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split_csv_row(line);

    const auto col = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw SchemaError("missing required column: " + name);
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t c_id = col("ecg_id"), c_scp = col("scp_codes"),
                      c_fold = col("strat_fold"), c_lr = col("filename_lr"),
                      c_hr = col("filename_hr");

    DatasetIndex index;
    std::map<long, bool> seen;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = detail::split_csv_row(line);
        const std::size_t need = std::max({c_id, c_scp, c_fold, c_lr, c_hr}) + 1;
        if (cells.size() < need)
            throw SchemaError("row " + std::to_string(line_no) + " has too few cells");
        IndexRow row;
        try {
            row.ecg_id = std::stol(cells[c_id]);
            row.strat_fold = std::stoi(cells[c_fold]);
        } catch (const std::exception&) {
            throw SchemaError("row " + std::to_string(line_no) + ": bad numeric cell");
        }
        if (row.strat_fold < 1 || row.strat_fold > 10)
            throw SchemaError("row " + std::to_string(line_no) + ": strat_fold out of [1,10]");
        if (seen.count(row.ecg_id))
            throw DuplicateRecord("duplicate ecg_id " + std::to_string(row.ecg_id));
        seen[row.ecg_id] = true;
        row.scp_codes = parse_scp_codes(cells[c_scp]);
        row.filename_lr = cells[c_lr];
        row.filename_hr = cells[c_hr];
        index.rows.push_back(std::move(row));
    }
    return index;
}

// Folds 1-8 train, 9 validation, 10 test (exact disjoint cover).
inline FoldSplit split_folds(const DatasetIndex& index) {
    FoldSplit split;
    for (const auto& row : index.rows) {
        if (row.strat_fold <= 8) split.train.push_back(row.ecg_id);
        else if (row.strat_fold == 9) split.val.push_back(row.ecg_id);
        else split.test.push_back(row.ecg_id);
    }
    return split;
}

} // namespace ecgdl::wfdb

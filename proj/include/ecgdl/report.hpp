#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "ecgdl/dsp.hpp"
#include "ecgdl/eval.hpp"
#include "ecgdl/nn.hpp"

namespace ecgdl::report {

// Table-1 column order: channels, params, accuracy, precision, recall, f1
inline std::string metrics_csv(const std::vector<std::pair<std::size_t, eval::Metrics>>& rows,
                               const std::vector<std::size_t>& param_counts = {}) {
    std::ostringstream os;
    os << "n_channels,train_params,accuracy_pct,precision_pct,recall_pct,f1_pct\n";
    os << std::fixed << std::setprecision(2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        os << rows[i].first << ','
           << (i < param_counts.size() ? std::to_string(param_counts[i]) : "") << ','
           << rows[i].second.accuracy << ',' << rows[i].second.precision << ','
           << rows[i].second.recall << ',' << rows[i].second.f1 << '\n';
    }
    return os.str();
}

inline std::string confusion_csv(const eval::ConfusionMatrix& cm) {
    std::ostringstream os;
    os << ",pred_normal,pred_abnormal\n";
    os << "true_normal," << cm.tn << ',' << cm.fp << '\n';
    os << "true_abnormal," << cm.fn << ',' << cm.tp << '\n';
    return os.str();
}

inline std::string history_csv(const std::vector<nn::EpochStats>& history) {
    std::ostringstream os;
    os << "epoch,train_loss,val_loss,val_accuracy\n";
    for (const auto& h : history)
        os << h.epoch << ',' << h.train_loss << ',' << h.val_loss << ',' << h.val_accuracy
           << '\n';
    return os.str();
}

// rows = frequency bins, header row of frame times
inline std::string spectrogram_csv(const dsp::Spectrogram& sp) {
    std::ostringstream os;
    os << "bin_hz";
    for (double t : sp.frame_time_s) os << ',' << t;
    os << '\n';
    for (std::size_t b = 0; b < sp.magnitude_db.size(); ++b) {
        os << sp.bin_hz[b];
        for (double v : sp.magnitude_db[b]) os << ',' << v;
        os << '\n';
    }
    return os.str();
}

namespace detail {

inline std::string heat_color(double frac) {
    const int r = static_cast<int>(255.0 * frac);
    const int b = static_cast<int>(255.0 * (1.0 - frac));
    std::ostringstream os;
    os << "rgb(" << r << ",64," << b << ")";
    return os.str();
}

} // namespace detail

inline std::string confusion_svg(const eval::ConfusionMatrix& cm) {
    const double total = static_cast<double>(cm.total() ? cm.total() : 1);
    const std::size_t cells[2][2] = {{cm.tn, cm.fp}, {cm.fn, cm.tp}};
    const char* row_names[2] = {"true normal", "true abnormal"};
    const char* col_names[2] = {"pred normal", "pred abnormal"};
    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='360' height='300'>\n";
    os << "<text x='180' y='20' text-anchor='middle' font-size='14'>Confusion matrix</text>\n";
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) {
            const double frac = static_cast<double>(cells[r][c]) / total;
            const int x = 100 + c * 110, y = 50 + r * 100;
            os << "<rect x='" << x << "' y='" << y << "' width='100' height='90' fill='"
               << detail::heat_color(frac) << "'/>\n";
            os << "<text x='" << x + 50 << "' y='" << y + 50
               << "' text-anchor='middle' font-size='16' fill='white'>" << cells[r][c]
               << "</text>\n";
        }
        os << "<text x='90' y='" << 100 + r * 100
           << "' text-anchor='end' font-size='11'>" << row_names[r] << "</text>\n";
    }
    for (int c = 0; c < 2; ++c)
        os << "<text x='" << 150 + c * 110
           << "' y='265' text-anchor='middle' font-size='11'>" << col_names[c] << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

inline std::string distribution_svg(const std::vector<std::pair<std::string, std::size_t>>& counts) {
    std::size_t max_count = 1;
    for (const auto& [_, n] : counts) max_count = std::max(max_count, n);
    const int bar_w = 60, gap = 20, h = 260;
    const int width = 40 + static_cast<int>(counts.size()) * (bar_w + gap);
    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << h
       << "'>\n";
    int x = 30;
    for (const auto& [name, n] : counts) {
        const int bh = static_cast<int>(200.0 * static_cast<double>(n) /
                                        static_cast<double>(max_count));
        os << "<rect x='" << x << "' y='" << 220 - bh << "' width='" << bar_w << "' height='"
           << bh << "' fill='steelblue'/>\n";
        os << "<text x='" << x + bar_w / 2 << "' y='" << 212 - bh
           << "' text-anchor='middle' font-size='11'>" << n << "</text>\n";
        os << "<text x='" << x + bar_w / 2
           << "' y='238' text-anchor='middle' font-size='11'>" << name << "</text>\n";
        x += bar_w + gap;
    }
    os << "</svg>\n";
    return os.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << content;
}

} // namespace ecgdl::report

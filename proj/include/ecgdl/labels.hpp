#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ecgdl/errors.hpp"

namespace ecgdl::labels {

enum class Superclass { NORM, STTC, MI, HYP, CD, OTHER };

inline std::string to_string(Superclass s) {
    switch (s) {
        case Superclass::NORM: return "NORM";
        case Superclass::STTC: return "STTC";
        case Superclass::MI: return "MI";
        case Superclass::HYP: return "HYP";
        case Superclass::CD: return "CD";
        case Superclass::OTHER: return "OTHER";
    }
    return "?";
}

struct CodeEntry {
    std::string_view code;
    Superclass superclass;
};

// Embedded code -> superclass table (human-readable, auditable in one place).
inline constexpr std::array<CodeEntry, 51> kCodeTable{{
    {"NORM", Superclass::NORM},
    // STTC
    {"NDT", Superclass::STTC},    {"NST_", Superclass::STTC},  {"DIG", Superclass::STTC},
    {"LNGQT", Superclass::STTC},  {"ISC_", Superclass::STTC},  {"ISCAL", Superclass::STTC},
    {"ISCIN", Superclass::STTC},  {"ISCIL", Superclass::STTC}, {"ISCAS", Superclass::STTC},
    {"ISCLA", Superclass::STTC},  {"ANEUR", Superclass::STTC}, {"EL", Superclass::STTC},
    {"ISCAN", Superclass::STTC},
    // MI
    {"IMI", Superclass::MI},      {"ASMI", Superclass::MI},    {"ILMI", Superclass::MI},
    {"AMI", Superclass::MI},      {"ALMI", Superclass::MI},    {"INJAS", Superclass::MI},
    {"LMI", Superclass::MI},      {"INJAL", Superclass::MI},   {"IPLMI", Superclass::MI},
    {"IPMI", Superclass::MI},     {"INJIN", Superclass::MI},   {"INJLA", Superclass::MI},
    {"PMI", Superclass::MI},      {"INJIL", Superclass::MI},
    // HYP
    {"LVH", Superclass::HYP},     {"LAO/LAE", Superclass::HYP}, {"RVH", Superclass::HYP},
    {"RAO/RAE", Superclass::HYP}, {"SEHYP", Superclass::HYP},
    // CD
    {"LAFB", Superclass::CD},     {"IRBBB", Superclass::CD},   {"1AVB", Superclass::CD},
    {"IVCD", Superclass::CD},     {"CRBBB", Superclass::CD},   {"CLBBB", Superclass::CD},
    {"LPFB", Superclass::CD},     {"WPW", Superclass::CD},     {"ILBBB", Superclass::CD},
    {"3AVB", Superclass::CD},     {"2AVB", Superclass::CD},
    // OTHER
    {"AFLT", Superclass::OTHER},  {"AFIB", Superclass::OTHER}, {"PSVT", Superclass::OTHER},
    {"STACH", Superclass::OTHER}, {"PVC", Superclass::OTHER},  {"PACE", Superclass::OTHER},
    {"PAC", Superclass::OTHER},
}};

inline Superclass map_to_superclass(std::string_view code) {
    for (const auto& e : kCodeTable)
        if (e.code == code) return e.superclass;
    throw UnknownCode("unknown SCP code: " + std::string(code));
}

inline bool is_known_code(std::string_view code) {
    for (const auto& e : kCodeTable)
        if (e.code == code) return true;
    return false;
}

struct BinaryLabel {
    int value = 0; // 0 = normal, 1 = abnormal
};

inline int binary_of(Superclass s) { return s == Superclass::NORM ? 0 : 1; }

// Cross-class tie-break priority (higher wins); only consulted when the tied
// max-confidence codes disagree on the binary outcome.
inline constexpr std::array<Superclass, 6> kTiePriority{
    Superclass::NORM, Superclass::OTHER, Superclass::STTC,
    Superclass::MI,   Superclass::HYP,   Superclass::CD};

inline int tie_rank(Superclass s,
                    const std::array<Superclass, 6>& priority = kTiePriority) {
    for (std::size_t i = 0; i < priority.size(); ++i)
        if (priority[i] == s) return static_cast<int>(i);
    return -1;
}

// Highest-confidence mappable code wins; zero-confidence codes still
// participate when nothing better exists.
inline BinaryLabel select_binary_label(const std::map<std::string, double>& scp,
                                       const std::array<Superclass, 6>& priority = kTiePriority) {
    double best_conf = -1.0;
    std::vector<Superclass> best;
    for (const auto& [code, conf] : scp) {
        if (!is_known_code(code)) continue;
        if (conf > best_conf) {
            best_conf = conf;
            best.assign(1, map_to_superclass(code));
        } else if (conf == best_conf) {
            best.push_back(map_to_superclass(code));
        }
    }
    if (best.empty()) throw UnlabeledRecord("no mappable SCP code in record");

    int outcome = binary_of(best[0]);
    bool disagree = false;
    for (auto s : best)
        if (binary_of(s) != outcome) { disagree = true; break; }
    if (!disagree) return {outcome};

    Superclass winner = best[0];
    for (auto s : best)
        if (tie_rank(s, priority) > tie_rank(winner, priority)) winner = s;
    return {binary_of(winner)};
}

struct ClassWeights {
    double weight_normal = 1.0;   // class 0
    double weight_abnormal = 1.0; // class 1

    double of(int label) const { return label == 0 ? weight_normal : weight_abnormal; }
};

// w_c = N / (2 * N_c)
inline ClassWeights compute_class_weights(const std::vector<BinaryLabel>& labels) {
    std::size_t n0 = 0, n1 = 0;
    for (const auto& l : labels) (l.value == 0 ? n0 : n1)++;
    if (n0 == 0 || n1 == 0)
        throw DegenerateDistribution("both classes must be present to weight them");
    const double n = static_cast<double>(labels.size());
    return {n / (2.0 * static_cast<double>(n0)), n / (2.0 * static_cast<double>(n1))};
}

} // namespace ecgdl::labels

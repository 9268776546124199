#pragma once

#include <cstddef>
#include <vector>

#include "ecgdl/errors.hpp"

namespace ecgdl::eval {

// abnormal == positive class
struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        tp += o.tp; fp += o.fp; tn += o.tn; fn += o.fn;
        return *this;
    }
};

struct Metrics {
    double accuracy = 0, precision = 0, recall = 0, f1 = 0; // percentages
    bool degenerate = false; // some 0/0 ratio was reported as 0
};

// predicted positive iff prob >= threshold
inline ConfusionMatrix confusion_matrix(const std::vector<double>& probs,
                                        const std::vector<int>& labels,
                                        double threshold = 0.5) {
    if (probs.size() != labels.size())
        throw ShapeError("confusion_matrix: length mismatch");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const int pred = probs[i] >= threshold ? 1 : 0;
        if (pred == 1) (labels[i] == 1 ? cm.tp : cm.fp)++;
        else (labels[i] == 1 ? cm.fn : cm.tn)++;
    }
    return cm;
}

inline Metrics compute_metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw EmptyEvaluation("confusion matrix is empty");
    Metrics m;
    m.accuracy = 100.0 * static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
    if (cm.tp + cm.fp == 0) { m.precision = 0; m.degenerate = true; }
    else m.precision = 100.0 * static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
    if (cm.tp + cm.fn == 0) { m.recall = 0; m.degenerate = true; }
    else m.recall = 100.0 * static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
    if (m.precision + m.recall == 0) { m.f1 = 0; m.degenerate = true; }
    else m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

} // namespace ecgdl::eval

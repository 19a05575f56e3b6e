#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "pancut/errors.hpp"
#include "pancut/types.hpp"

// ============================================================================
// Mean-IoU evaluation.  A single confusion matrix (rows = ground truth,
// columns = prediction) accumulates over any number of images; additivity of
// the matrix makes sharded evaluation exact.  Classes absent from both
// prediction and ground truth are excluded from the mean, not scored as 0.
// ============================================================================

namespace pancut {

struct DatasetConfig {
    std::string name;
    std::vector<std::string> class_names;          // index == class id
    std::vector<std::string> background_queries;   // empty when no background class
    std::int32_t ignore_value = 255;

    bool has_background() const { return !background_queries.empty(); }
    int num_classes() const { return static_cast<int>(class_names.size()); }

    /// Text-prompt label list in embedding row order: background queries
    /// first (replacing class 0), then the named classes.
    std::vector<std::string> text_labels() const {
        std::vector<std::string> out;
        if (!has_background()) return class_names;
        out = background_queries;
        out.insert(out.end(), class_names.begin() + 1, class_names.end());
        return out;
    }
    std::vector<int> background_indices() const {
        std::vector<int> out;
        for (int i = 0; i < static_cast<int>(background_queries.size()); ++i)
            out.push_back(i);
        return out;
    }
};

inline DatasetConfig load_dataset_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open dataset config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("dataset config " + path + ": " + e.what());
    }
    DatasetConfig cfg;
    try {
        cfg.name = j.at("name").get<std::string>();
        cfg.class_names = j.at("classes").get<std::vector<std::string>>();
        cfg.background_queries = j.at("background_queries").get<std::vector<std::string>>();
        cfg.ignore_value = j.value("ignore_value", 255);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("dataset config " + path + ": " + e.what());
    }
    if (cfg.class_names.empty())
        throw DataError("dataset config " + path + ": no classes");
    if (cfg.has_background() && cfg.class_names.front() != "background")
        throw DataError("dataset config " + path +
                        ": background queries given but class 0 is not 'background'");
    for (std::size_t i = 0; i < cfg.class_names.size(); ++i)
        if (static_cast<std::int32_t>(i) == cfg.ignore_value)
            throw DataError("dataset config " + path + ": ignore value collides with class id");
    return cfg;
}

struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<std::int64_t> counts;  // row-major, rows = gt, cols = pred
    std::int64_t ignored = 0;

    explicit ConfusionMatrix(int classes = 0)
        : num_classes(classes),
          counts(static_cast<std::size_t>(classes) * classes, 0) {}

    std::int64_t& at(int gt, int pred) {
        return counts[static_cast<std::size_t>(gt) * num_classes + pred];
    }
    std::int64_t at(int gt, int pred) const {
        return counts[static_cast<std::size_t>(gt) * num_classes + pred];
    }

    ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
        if (other.num_classes != num_classes)
            throw ShapeError("confusion matrix size mismatch");
        for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
        ignored += other.ignored;
        return *this;
    }
};

/// Tally one image pair into the matrix.  Ground-truth ignore pixels are
/// skipped (counted separately); any other out-of-range label is an error.
inline void accumulate(ConfusionMatrix& conf, const LabelMap& pred, const LabelMap& gt,
                       std::int32_t ignore_value) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw ShapeError("accumulate: prediction is " + std::to_string(pred.width) + "x" +
                         std::to_string(pred.height) + " but ground truth is " +
                         std::to_string(gt.width) + "x" + std::to_string(gt.height));
    const int y_max = conf.num_classes;
    for (std::size_t p = 0; p < gt.labels.size(); ++p) {
        const std::int32_t g = gt.labels[p];
        if (g == ignore_value) {
            ++conf.ignored;
            continue;
        }
        const std::int32_t q = pred.labels[p];
        if (g < 0 || g >= y_max)
            throw LabelError("ground-truth label " + std::to_string(g) + " out of range");
        if (q < 0 || q >= y_max)
            throw LabelError("predicted label " + std::to_string(q) + " out of range");
        ++conf.at(g, q);
    }
}

struct IouReport {
    std::vector<double> per_class;   // NaN for excluded classes
    std::vector<int> excluded;       // class ids with zero union
    double miou = 0.0;
    std::int64_t total_pixels = 0;
    std::int64_t ignored_pixels = 0;
};

/// IoU per class = TP / (TP + FP + FN); the mean skips zero-union classes.
inline IouReport miou(const ConfusionMatrix& conf) {
    IouReport report;
    report.per_class.assign(conf.num_classes, std::nan(""));
    report.ignored_pixels = conf.ignored;
    double sum = 0.0;
    int scored = 0;
    for (int y = 0; y < conf.num_classes; ++y) {
        std::int64_t tp = conf.at(y, y), row = 0, col = 0;
        for (int k = 0; k < conf.num_classes; ++k) {
            row += conf.at(y, k);
            col += conf.at(k, y);
        }
        report.total_pixels += row;
        const std::int64_t uni = row + col - tp;  // TP + FP + FN
        if (uni == 0) {
            report.excluded.push_back(y);
            continue;
        }
        const double iou = static_cast<double>(tp) / static_cast<double>(uni);
        report.per_class[y] = iou;
        sum += iou;
        ++scored;
    }
    if (scored == 0) throw EmptyEvalError("no class has any pixel in prediction or ground truth");
    report.miou = sum / scored;
    return report;
}

inline nlohmann::json report_to_json(const IouReport& report, const DatasetConfig& cfg) {
    nlohmann::json per = nlohmann::json::object();
    for (int y = 0; y < static_cast<int>(report.per_class.size()); ++y) {
        const std::string& name =
            y < cfg.num_classes() ? cfg.class_names[y] : std::to_string(y);
        if (std::isnan(report.per_class[y]))
            per[name] = nullptr;
        else
            per[name] = report.per_class[y];
    }
    nlohmann::json j;
    j["dataset"] = cfg.name;
    j["miou"] = report.miou;
    j["per_class_iou"] = per;
    j["excluded_classes"] = report.excluded;
    j["scored_pixels"] = report.total_pixels;
    j["ignored_pixels"] = report.ignored_pixels;
    return j;
}

} // namespace pancut

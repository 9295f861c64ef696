#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bloompipe/detection.hpp"
#include "json.hpp"

namespace bloompipe {

/// Ground truth: image filename -> boxes (single class).
using AnnotationSet = std::map<std::string, std::vector<BoundingBox>>;
/// Predictions: image filename -> scored detections.
using PredictionSet = std::map<std::string, std::vector<Detection>>;

inline constexpr double kDefaultIouThreshold = 0.55;

/// Intersection over union; 0 for disjoint boxes.
double iou(const BoundingBox& a, const BoundingBox& b);

struct Counts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    Counts& operator+=(const Counts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    bool operator==(const Counts&) const = default;
};

struct ImageMatch {
    Counts counts;
    /// Per prediction (input order): index of the matched ground-truth box, or -1.
    std::vector<int> matched_gt;
};

/// Greedy one-to-one matching for one image. Predictions are visited by
/// descending score (stable on input order); each takes the unmatched
/// ground-truth box with the highest IoU >= threshold, lowest index on ties.
ImageMatch match_image(std::span<const Detection> predictions, std::span<const BoundingBox> truth,
                       double iou_threshold);

struct MatchResult {
    std::map<std::string, ImageMatch> per_image;
    Counts total;
};

/// Images present only in `truth` contribute FNs. Predictions for images
/// absent from `truth` are FPs, or Error{UnknownImage} in strict mode.
MatchResult match_detections(const PredictionSet& predictions, const AnnotationSet& truth,
                             double iou_threshold, bool strict = false);

struct PrecisionRecallF1 {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
};

/// Degenerate denominators: precision = 1 when tp+fp = 0, recall = 1 when
/// tp+fn = 0, f1 = 0 when precision+recall = 0.
PrecisionRecallF1 precision_recall_f1(std::size_t tp, std::size_t fp, std::size_t fn);

/// Harmonic mean of precision and recall (0 when both are 0).
double f1_score(double precision, double recall);

/// All-point interpolated AP over the corpus. Predictions with equal scores
/// enter the curve together. Throws Error{EmptyGroundTruth}.
double average_precision(const PredictionSet& predictions, const AnnotationSet& truth,
                         double iou_threshold);

struct EvalReport {
    double iou_threshold = kDefaultIouThreshold;
    Counts counts;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    double ap = 0;
    double map = 0;
    std::map<std::string, Counts> per_image;
};

EvalReport evaluate(const PredictionSet& predictions, const AnnotationSet& truth,
                    double iou_threshold, bool strict = false);

nlohmann::ordered_json report_to_json(const EvalReport& report);

/// {"images":[{"filename":s,"boxes":[{"topX":..,"topY":..,"bottomX":..,"bottomY":..}]}]}
AnnotationSet parse_annotations(std::string_view json_text, const std::string& source = "<memory>");
AnnotationSet load_annotations(const std::filesystem::path& file);

/// Every *.json file in `dir` is one detection document.
PredictionSet load_predictions(const std::filesystem::path& dir);

EvalReport evaluate_corpus(const std::filesystem::path& prediction_dir,
                           const std::filesystem::path& ground_truth_file, double iou_threshold,
                           bool strict = false);

}  // namespace bloompipe

#include "bloompipe/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "bloompipe/error.hpp"

namespace bloompipe {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

double iou(const BoundingBox& a, const BoundingBox& b) {
    const double ix = std::min(a.bottom_x, b.bottom_x) - std::max(a.top_x, b.top_x);
    const double iy = std::min(a.bottom_y, b.bottom_y) - std::max(a.top_y, b.top_y);
    if (ix <= 0 || iy <= 0) return 0.0;
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

namespace {

std::vector<std::size_t> score_order(std::span<const Detection> predictions) {
    std::vector<std::size_t> order(predictions.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return predictions[a].score > predictions[b].score;
    });
    return order;
}

}  // namespace

ImageMatch match_image(std::span<const Detection> predictions, std::span<const BoundingBox> truth,
                       double iou_threshold) {
    ImageMatch m;
    m.matched_gt.assign(predictions.size(), -1);
    std::vector<bool> taken(truth.size(), false);
    for (const auto p : score_order(predictions)) {
        int best = -1;
        double best_iou = -1.0;
        for (std::size_t g = 0; g < truth.size(); ++g) {
            if (taken[g]) continue;
            const double v = iou(predictions[p].box, truth[g]);
            if (v >= iou_threshold && v > best_iou) {
                best = static_cast<int>(g);
                best_iou = v;
            }
        }
        if (best >= 0) {
            taken[best] = true;
            m.matched_gt[p] = best;
            ++m.counts.tp;
        } else {
            ++m.counts.fp;
        }
    }
    m.counts.fn = truth.size() - m.counts.tp;
    return m;
}

MatchResult match_detections(const PredictionSet& predictions, const AnnotationSet& truth,
                             double iou_threshold, bool strict) {
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
        throw Error(Errc::InvalidArgument, "IoU threshold must lie in (0, 1]");
    }
    MatchResult result;
    static const std::vector<BoundingBox> kNone;
    static const std::vector<Detection> kNoPredictions;
    for (const auto& [name, preds] : predictions) {
        auto it = truth.find(name);
        if (it == truth.end() && strict) {
            throw Error(Errc::UnknownImage, "prediction for unannotated image: " + name);
        }
        const auto& gts = it == truth.end() ? kNone : it->second;
        result.per_image[name] = match_image(preds, gts, iou_threshold);
    }
    for (const auto& [name, gts] : truth) {
        if (!predictions.count(name)) result.per_image[name] = match_image(kNoPredictions, gts, iou_threshold);
    }
    for (const auto& [_, m] : result.per_image) result.total += m.counts;
    return result;
}

double f1_score(double precision, double recall) {
    if (precision + recall <= 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

PrecisionRecallF1 precision_recall_f1(std::size_t tp, std::size_t fp, std::size_t fn) {
    PrecisionRecallF1 r;
    r.precision = (tp + fp) == 0 ? 1.0 : double(tp) / double(tp + fp);
    r.recall = (tp + fn) == 0 ? 1.0 : double(tp) / double(tp + fn);
    r.f1 = f1_score(r.precision, r.recall);
    return r;
}

double average_precision(const PredictionSet& predictions, const AnnotationSet& truth,
                         double iou_threshold) {
    std::size_t total_gt = 0;
    for (const auto& [_, gts] : truth) total_gt += gts.size();
    if (total_gt == 0) throw Error(Errc::EmptyGroundTruth, "average precision needs ground truth");

    const auto matched = match_detections(predictions, truth, iou_threshold);
    struct Flagged {
        double score;
        bool tp;
    };
    std::vector<Flagged> flagged;
    for (const auto& [name, preds] : predictions) {
        const auto& m = matched.per_image.at(name);
        for (std::size_t i = 0; i < preds.size(); ++i) flagged.push_back({preds[i].score, m.matched_gt[i] >= 0});
    }
    std::stable_sort(flagged.begin(), flagged.end(),
                     [](const Flagged& a, const Flagged& b) { return a.score > b.score; });

    // One curve point per distinct score.
    std::vector<double> recall;
    std::vector<double> precision;
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (std::size_t i = 0; i < flagged.size(); ++i) {
        (flagged[i].tp ? tp : fp) += 1;
        if (i + 1 < flagged.size() && flagged[i + 1].score == flagged[i].score) continue;
        recall.push_back(double(tp) / double(total_gt));
        precision.push_back(double(tp) / double(tp + fp));
    }

    for (std::size_t i = precision.size(); i-- > 1;) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < recall.size(); ++i) {
        ap += (recall[i] - prev_recall) * precision[i];
        prev_recall = recall[i];
    }
    return ap;
}

EvalReport evaluate(const PredictionSet& predictions, const AnnotationSet& truth,
                    double iou_threshold, bool strict) {
    const auto matched = match_detections(predictions, truth, iou_threshold, strict);
    EvalReport report;
    report.iou_threshold = iou_threshold;
    report.counts = matched.total;
    const auto prf = precision_recall_f1(matched.total.tp, matched.total.fp, matched.total.fn);
    report.precision = prf.precision;
    report.recall = prf.recall;
    report.f1 = prf.f1;
    const bool has_truth = matched.total.tp + matched.total.fn > 0;
    report.ap = has_truth ? average_precision(predictions, truth, iou_threshold) : 0.0;
    report.map = report.ap;
    for (const auto& [name, m] : matched.per_image) report.per_image[name] = m.counts;
    return report;
}

ordered_json report_to_json(const EvalReport& r) {
    ordered_json j;
    j["iou_threshold"] = r.iou_threshold;
    j["tp"] = r.counts.tp;
    j["fp"] = r.counts.fp;
    j["fn"] = r.counts.fn;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["f1"] = r.f1;
    j["ap"] = r.ap;
    j["map"] = r.map;
    ordered_json per = ordered_json::object();
    for (const auto& [name, c] : r.per_image) per[name] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
    j["per_image"] = std::move(per);
    return j;
}

namespace {

std::string read_file(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(Errc::NotFound, "cannot open " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

json parse_json(std::string_view text, const std::string& source) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(Errc::Parse, source + ": byte " + std::to_string(e.byte) + ": " + e.what());
    }
}

}  // namespace

AnnotationSet parse_annotations(std::string_view json_text, const std::string& source) {
    const auto doc = parse_json(json_text, source);
    AnnotationSet set;
    try {
        for (const auto& image : doc.at("images")) {
            const auto name = image.at("filename").get<std::string>();
            if (set.count(name)) throw Error(Errc::Parse, source + ": duplicate filename " + name);
            auto& boxes = set[name];
            for (const auto& b : image.at("boxes")) boxes.push_back(box_from_json(b));
        }
    } catch (const json::exception& e) {
        throw Error(Errc::Parse, source + ": " + e.what());
    } catch (const Error& e) {
        if (e.code() == Errc::Parse) throw;
        throw Error(Errc::Parse, source + ": " + e.what());
    }
    return set;
}

AnnotationSet load_annotations(const fs::path& file) {
    return parse_annotations(read_file(file), file.string());
}

PredictionSet load_predictions(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(Errc::NotFound, "not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    PredictionSet set;
    for (const auto& file : files) {
        const auto doc = parse_json(read_file(file), file.string());
        DetectionResult r;
        try {
            r = detection_result_from_json(doc);
        } catch (const Error& e) {
            throw Error(Errc::Parse, file.string() + ": " + e.what());
        }
        auto& slot = set[r.filename];
        slot.insert(slot.end(), r.boxes.begin(), r.boxes.end());
    }
    return set;
}

EvalReport evaluate_corpus(const fs::path& prediction_dir, const fs::path& ground_truth_file,
                           double iou_threshold, bool strict) {
    return evaluate(load_predictions(prediction_dir), load_annotations(ground_truth_file),
                    iou_threshold, strict);
}

}  // namespace bloompipe

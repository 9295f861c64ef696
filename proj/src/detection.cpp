#include "bloompipe/detection.hpp"

#include "bloompipe/error.hpp"

namespace bloompipe {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json box_to_json(const BoundingBox& box) {
    ordered_json j;
    j["topX"] = box.top_x;
    j["topY"] = box.top_y;
    j["bottomX"] = box.bottom_x;
    j["bottomY"] = box.bottom_y;
    return j;
}

BoundingBox box_from_json(const json& j) {
    BoundingBox box;
    try {
        box.top_x = j.at("topX").get<double>();
        box.top_y = j.at("topY").get<double>();
        box.bottom_x = j.at("bottomX").get<double>();
        box.bottom_y = j.at("bottomY").get<double>();
    } catch (const json::exception& e) {
        throw Error(Errc::Parse, std::string("bad box: ") + e.what());
    }
    if (!box.valid()) throw Error(Errc::InvalidBox, "box outside unit square or inverted: " + j.dump());
    return box;
}

ordered_json detection_result_to_json(const DetectionResult& result) {
    ordered_json j;
    j["filename"] = result.filename;
    j["boxes"] = ordered_json::array();
    for (const auto& d : result.boxes) {
        ordered_json item;
        item["box"] = box_to_json(d.box);
        item["label"] = d.label;
        item["score"] = d.score;
        j["boxes"].push_back(std::move(item));
    }
    return j;
}

DetectionResult detection_result_from_json(const json& j) {
    DetectionResult result;
    try {
        result.filename = j.at("filename").get<std::string>();
        for (const auto& item : j.at("boxes")) {
            Detection d;
            d.box = box_from_json(item.at("box"));
            d.label = item.value("label", std::string("bloom"));
            d.score = item.value("score", 1.0);
            if (d.score < 0.0 || d.score > 1.0) {
                throw Error(Errc::InvalidArgument, "score outside [0,1]: " + item.dump());
            }
            result.boxes.push_back(std::move(d));
        }
    } catch (const json::exception& e) {
        throw Error(Errc::Parse, std::string("bad detection document: ") + e.what());
    }
    return result;
}

std::string to_detection_json(const DetectionResult& result) {
    return detection_result_to_json(result).dump();
}

DetectionResult parse_detection_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(Errc::Parse, std::string("detection JSON: ") + e.what());
    }
    return detection_result_from_json(j);
}

}  // namespace bloompipe

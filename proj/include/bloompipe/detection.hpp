#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace bloompipe {

/// Corner box in coordinates normalized to image width/height.
struct BoundingBox {
    double top_x = 0;
    double top_y = 0;
    double bottom_x = 0;
    double bottom_y = 0;

    bool valid() const {
        return 0.0 <= top_x && top_x < bottom_x && bottom_x <= 1.0 && 0.0 <= top_y &&
               top_y < bottom_y && bottom_y <= 1.0;
    }
    double area() const { return (bottom_x - top_x) * (bottom_y - top_y); }

    bool operator==(const BoundingBox&) const = default;
};

struct Detection {
    BoundingBox box;
    std::string label = "bloom";
    double score = 1.0;

    bool valid() const { return box.valid() && score >= 0.0 && score <= 1.0; }
    bool operator==(const Detection&) const = default;
};

/// Body of a scoring response and of a detections sidecar file.
struct DetectionResult {
    std::string filename;
    std::vector<Detection> boxes;
};

nlohmann::ordered_json box_to_json(const BoundingBox& box);
/// Throws Error{Parse} on missing fields and Error{InvalidBox} on bad geometry.
BoundingBox box_from_json(const nlohmann::json& j);

nlohmann::ordered_json detection_result_to_json(const DetectionResult& result);
DetectionResult detection_result_from_json(const nlohmann::json& j);

/// Canonical serialization:
/// {"filename":s,"boxes":[{"box":{"topX":..,"topY":..,"bottomX":..,"bottomY":..},"label":s,"score":f}]}
std::string to_detection_json(const DetectionResult& result);
DetectionResult parse_detection_json(std::string_view text);

}  // namespace bloompipe

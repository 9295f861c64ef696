#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "bloompipe/detection.hpp"
#include "bloompipe/imaging.hpp"

namespace bloompipe {

/// Pluggable inference backend. Implementations must be deterministic and
/// safe to call concurrently.
class DetectorBackend {
public:
    virtual ~DetectorBackend() = default;
    virtual std::string name() const = 0;
    virtual std::vector<Detection> detect(const Image& image, std::string_view filename) const = 0;
};

enum class Connectivity { Four = 4, Eight = 8 };

struct ThresholdParams {
    int brightness_threshold = 200;
    int min_area_px = 20;
    int max_boxes = 50;
    Connectivity connectivity = Connectivity::Four;
};

/// Bright-region detector: pixels with min(R,G,B) >= threshold are labeled
/// into connected components; components of at least min_area_px pixels
/// become detections scored by their mean min(R,G,B)/255, best first.
std::vector<Detection> detect_threshold(const Image& image, const ThresholdParams& params = {});

class ThresholdBackend final : public DetectorBackend {
public:
    explicit ThresholdBackend(ThresholdParams params = {}) : params_(params) {}
    std::string name() const override { return "threshold"; }
    std::vector<Detection> detect(const Image& image, std::string_view filename) const override;

private:
    ThresholdParams params_;
};

/// Scripted detections keyed by filename hint.
using FixtureTable = std::map<std::string, std::vector<Detection>>;

/// Reads a JSON array of detection documents. Rejects invalid boxes and
/// scores outside [0,1] with Error{InvalidArgument}.
FixtureTable load_fixture_table(const std::filesystem::path& file);
FixtureTable parse_fixture_table(std::string_view json_text);

class MockBackend final : public DetectorBackend {
public:
    explicit MockBackend(FixtureTable table) : table_(std::move(table)) {}
    std::string name() const override { return "mock"; }
    /// Exact filename first, then its last path component; empty otherwise.
    std::vector<Detection> detect(const Image& image, std::string_view filename) const override;

private:
    FixtureTable table_;
};

std::vector<Detection> detect_mock(std::string_view filename, const FixtureTable& table);

/// Equality whose running time depends only on the lengths involved.
bool constant_time_equals(std::string_view a, std::string_view b);

}  // namespace bloompipe

#include "bloompipe/detector.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "bloompipe/error.hpp"

namespace bloompipe {

std::vector<Detection> detect_threshold(const Image& image, const ThresholdParams& params) {
    const int w = image.width;
    const int h = image.height;
    const std::size_t n = std::size_t(w) * h;

    std::vector<std::uint8_t> brightness(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto* p = &image.pixels[i * 3];
        brightness[i] = std::min({p[0], p[1], p[2]});
    }

    struct Component {
        int min_x, min_y, max_x, max_y;
        std::size_t area = 0;
        std::uint64_t brightness_sum = 0;
        std::size_t order = 0;
    };

    std::vector<int> label(n, -1);
    std::vector<Component> components;
    std::vector<std::size_t> stack;
    const bool eight = params.connectivity == Connectivity::Eight;

    for (std::size_t seed = 0; seed < n; ++seed) {
        if (label[seed] != -1 || brightness[seed] < params.brightness_threshold) continue;
        const int id = static_cast<int>(components.size());
        Component c{w, h, -1, -1, 0, 0, components.size()};
        label[seed] = id;
        stack.push_back(seed);
        while (!stack.empty()) {
            const auto idx = stack.back();
            stack.pop_back();
            const int x = static_cast<int>(idx % w);
            const int y = static_cast<int>(idx / w);
            c.min_x = std::min(c.min_x, x);
            c.max_x = std::max(c.max_x, x);
            c.min_y = std::min(c.min_y, y);
            c.max_y = std::max(c.max_y, y);
            ++c.area;
            c.brightness_sum += brightness[idx];
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    if (!eight && dx != 0 && dy != 0) continue;
                    const int nx = x + dx;
                    const int ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    const auto nidx = std::size_t(ny) * w + nx;
                    if (label[nidx] != -1 || brightness[nidx] < params.brightness_threshold) continue;
                    label[nidx] = id;
                    stack.push_back(nidx);
                }
            }
        }
        components.push_back(c);
    }

    std::vector<Detection> out;
    std::vector<std::pair<double, std::size_t>> ranked;
    for (const auto& c : components) {
        if (c.area < std::size_t(std::max(params.min_area_px, 0))) continue;
        const double score = double(c.brightness_sum) / (255.0 * double(c.area));
        ranked.emplace_back(score, c.order);
    }
    // Ties keep raster-scan discovery order.
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    const auto limit = std::min<std::size_t>(ranked.size(), std::size_t(std::max(params.max_boxes, 0)));
    for (std::size_t i = 0; i < limit; ++i) {
        const auto& c = components[ranked[i].second];
        Detection d;
        d.box = {double(c.min_x) / w, double(c.min_y) / h, double(c.max_x + 1) / w,
                 double(c.max_y + 1) / h};
        d.label = "bloom";
        d.score = ranked[i].first;
        out.push_back(d);
    }
    return out;
}

std::vector<Detection> ThresholdBackend::detect(const Image& image, std::string_view) const {
    return detect_threshold(image, params_);
}

FixtureTable parse_fixture_table(std::string_view json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::Parse, std::string("fixture table: ") + e.what());
    }
    if (!doc.is_array()) throw Error(Errc::Parse, "fixture table must be a JSON array");
    FixtureTable table;
    for (const auto& entry : doc) {
        DetectionResult r;
        try {
            r = detection_result_from_json(entry);
        } catch (const Error& e) {
            throw Error(Errc::InvalidArgument, std::string("fixture rejected: ") + e.what());
        }
        table[r.filename] = std::move(r.boxes);
    }
    return table;
}

FixtureTable load_fixture_table(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(Errc::NotFound, "cannot open fixture table " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_fixture_table(buf.str());
}

std::vector<Detection> detect_mock(std::string_view filename, const FixtureTable& table) {
    if (auto it = table.find(std::string(filename)); it != table.end()) return it->second;
    const auto slash = filename.rfind('/');
    if (slash != std::string_view::npos) {
        if (auto it = table.find(std::string(filename.substr(slash + 1))); it != table.end()) {
            return it->second;
        }
    }
    return {};
}

std::vector<Detection> MockBackend::detect(const Image&, std::string_view filename) const {
    return detect_mock(filename, table_);
}

bool constant_time_equals(std::string_view a, std::string_view b) {
    const std::size_t n = std::max(a.size(), b.size());
    unsigned char diff = static_cast<unsigned char>(a.size() != b.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto ca = i < a.size() ? static_cast<unsigned char>(a[i]) : 0;
        const auto cb = i < b.size() ? static_cast<unsigned char>(b[i]) : 0;
        diff |= static_cast<unsigned char>(ca ^ cb);
    }
    return diff == 0;
}

}  // namespace bloompipe

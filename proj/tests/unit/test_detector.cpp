#include <gtest/gtest.h>

#include "bloompipe/detector.hpp"
#include "bloompipe/detector_service.hpp"
#include "bloompipe/error.hpp"
#include "bloompipe/evaluation.hpp"
#include "httplib.h"
#include "support.hpp"

using namespace bloompipe;
using testing_support::fixture;
using testing_support::read_file;

namespace {

std::vector<BoundingBox> planted() {
    const auto doc = nlohmann::json::parse(read_file(fixture("two_squares.json")));
    std::vector<BoundingBox> out;
    for (const auto& s : doc["squares"]) out.push_back(box_from_json(s));
    return out;
}

void fill(Image& img, int x, int y, int w, int h, Rgb c) {
    for (int j = y; j < y + h; ++j)
        for (int i = x; i < x + w; ++i) img.set(i, j, c);
}

DetectorServiceConfig service_config(std::size_t max_body = 16u << 20) {
    DetectorServiceConfig c;
    c.keys = {"alpha", "beta"};
    c.backend = std::make_shared<ThresholdBackend>();
    c.max_body_bytes = max_body;
    c.threads = 4;
    return c;
}

}  // namespace

TEST(Threshold, FindsPlantedSquares) {
    const Image img = decode_image(read_file(fixture("two_squares.png")));
    const auto dets = detect_threshold(img);
    ASSERT_EQ(dets.size(), 2u);
    const auto truth = planted();
    for (const auto& gt : truth) {
        double best = 0;
        for (const auto& d : dets) best = std::max(best, iou(d.box, gt));
        EXPECT_GE(best, 0.99);
    }
    for (const auto& d : dets) {
        EXPECT_GE(d.score, 0.99);
        EXPECT_EQ(d.label, "bloom");
    }
}

TEST(Threshold, DarkImageHasNoDetections) {
    EXPECT_TRUE(detect_threshold(Image(50, 50)).empty());
}

TEST(Threshold, SmallRegionsAreIgnored) {
    Image img(50, 50);
    fill(img, 10, 10, 2, 5, {255, 255, 255});
    EXPECT_TRUE(detect_threshold(img).empty());
    fill(img, 30, 30, 4, 5, {255, 255, 255});
    EXPECT_EQ(detect_threshold(img).size(), 1u);
}

TEST(Threshold, ConnectivityAndRanking) {
    Image img(40, 40);
    fill(img, 0, 0, 5, 5, {210, 210, 210});
    fill(img, 5, 5, 5, 5, {250, 250, 250});
    ThresholdParams four;
    four.min_area_px = 1;
    const auto split = detect_threshold(img, four);
    ASSERT_EQ(split.size(), 2u);
    EXPECT_GT(split[0].score, split[1].score);
    EXPECT_DOUBLE_EQ(split[0].box.top_x, 5.0 / 40.0);
    ThresholdParams eight = four;
    eight.connectivity = Connectivity::Eight;
    EXPECT_EQ(detect_threshold(img, eight).size(), 1u);
    ThresholdParams capped = four;
    capped.max_boxes = 1;
    EXPECT_EQ(detect_threshold(img, capped).size(), 1u);
}

TEST(Mock, LooksUpExactThenBasename) {
    const auto table = load_fixture_table(fixture("mock_fixtures.json"));
    EXPECT_EQ(detect_mock("e2e_0001.jpg", table).size(), 2u);
    EXPECT_EQ(detect_mock("stream/deep/e2e_0001.jpg", table).size(), 2u);
    EXPECT_EQ(detect_mock("field_530x144.jpg", table).size(), 1u);
    EXPECT_TRUE(detect_mock("unknown.jpg", table).empty());
    EXPECT_DOUBLE_EQ(detect_mock("e2e_0001.jpg", table)[0].score, 0.91);
}

TEST(Mock, RejectsBadFixtures) {
    const char* bad_score =
        R"([{"filename":"a.jpg","boxes":[{"box":{"topX":0.1,"topY":0.1,"bottomX":0.2,"bottomY":0.2},"label":"bloom","score":1.2}]}])";
    EXPECT_THROW(parse_fixture_table(bad_score), Error);
    const char* bad_box =
        R"([{"filename":"a.jpg","boxes":[{"box":{"topX":0.3,"topY":0.1,"bottomX":0.2,"bottomY":0.2},"label":"bloom","score":0.5}]}])";
    EXPECT_THROW(parse_fixture_table(bad_box), Error);
    EXPECT_THROW(parse_fixture_table("{}"), Error);
}

TEST(DetectionJson, CanonicalShape) {
    DetectionResult r{"a.jpg", {Detection{{0.1, 0.2, 0.3, 0.4}, "bloom", 0.5}}};
    const std::string text = to_detection_json(r);
    EXPECT_EQ(text,
              R"({"filename":"a.jpg","boxes":[{"box":{"topX":0.1,"topY":0.2,"bottomX":0.3,"bottomY":0.4},"label":"bloom","score":0.5}]})");
    const auto back = parse_detection_json(text);
    EXPECT_EQ(back.filename, "a.jpg");
    EXPECT_EQ(back.boxes, r.boxes);
    EXPECT_THROW(parse_detection_json(R"({"filename":"a"})"), Error);
}

TEST(ConstantTime, Equality) {
    EXPECT_TRUE(constant_time_equals("abc", "abc"));
    EXPECT_FALSE(constant_time_equals("abc", "abd"));
    EXPECT_FALSE(constant_time_equals("abc", "abcd"));
    EXPECT_TRUE(constant_time_equals("", ""));
}

TEST(DetectorService, ScorePath) {
    DetectorService svc(service_config(4096));
    const std::string png = read_file(fixture("two_squares.png"));
    EXPECT_EQ(svc.score(png, "", "x.png").status, 401);
    EXPECT_EQ(svc.score(png, "gamma", "x.png").status, 401);
    EXPECT_EQ(svc.invocations(), 0u);
    EXPECT_EQ(svc.score("garbage", "alpha", "x.png").status, 422);
    EXPECT_EQ(svc.score(std::string(5000, 'x'), "alpha", "x.png").status, 413);
    EXPECT_EQ(svc.invocations(), 0u);
}

TEST(DetectorService, Http) {
    DetectorService svc(service_config());
    const int port = svc.start();
    httplib::Client cli("127.0.0.1", port);
    const std::string png = read_file(fixture("two_squares.png"));

    auto health = cli.Get("/v1/health");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);

    auto anon = cli.Post("/v1/score", png, "image/png");
    ASSERT_TRUE(anon);
    EXPECT_EQ(anon->status, 401);
    EXPECT_EQ(svc.invocations(), 0u);

    httplib::Headers auth{{"Authorization", "Bearer beta"}, {"X-Filename", "two_squares.png"}};
    auto first = cli.Post("/v1/score", auth, png, "image/png");
    auto second = cli.Post("/v1/score", auth, png, "image/png");
    ASSERT_TRUE(first && second);
    EXPECT_EQ(first->status, 200);
    EXPECT_EQ(first->body, second->body);
    const auto parsed = parse_detection_json(first->body);
    EXPECT_EQ(parsed.filename, "two_squares.png");
    EXPECT_EQ(parsed.boxes.size(), 2u);
    EXPECT_EQ(svc.invocations(), 2u);

    auto garbage = cli.Post("/v1/score", auth, "nope", "image/png");
    ASSERT_TRUE(garbage);
    EXPECT_EQ(garbage->status, 422);

    httplib::Headers wrong{{"Authorization", "Bearer nope"}};
    auto other = cli.Get("/v1/anything", wrong);
    ASSERT_TRUE(other);
    EXPECT_EQ(other->status, 401);
    svc.stop();
}

TEST(DetectorService, RequiresKeysAndBackend) {
    DetectorServiceConfig c = service_config();
    c.keys.clear();
    EXPECT_THROW(DetectorService{c}, Error);
    c = service_config();
    c.backend.reset();
    EXPECT_THROW(DetectorService{c}, Error);
}

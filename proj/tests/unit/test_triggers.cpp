#include <gtest/gtest.h>

#include <mutex>

#include "bloompipe/error.hpp"
#include "bloompipe/expression.hpp"
#include "bloompipe/trigger_engine.hpp"
#include "support.hpp"

using namespace bloompipe;
using namespace std::chrono;
using testing_support::eventually;

namespace {

struct StartedRun {
    std::string pipeline;
    ParameterMap parameters;
    TriggerSource trigger;
};

class FakeRuns : public RunStarter {
public:
    bool has_pipeline(const std::string& name) const override { return name == "bloom-detect"; }
    std::string start_run(const std::string& pipeline, const ParameterMap& params, const TriggerSource& t) override {
        std::lock_guard lock(mutex);
        if (fail) throw std::runtime_error("down");
        runs.push_back({pipeline, params, t});
        return "run-" + std::to_string(runs.size());
    }
    std::size_t count() {
        std::lock_guard lock(mutex);
        return runs.size();
    }
    std::mutex mutex;
    std::vector<StartedRun> runs;
    bool fail = false;
};

TriggerSpec stream_trigger() {
    TriggerSpec s;
    s.name = "stream-trigger";
    s.kind = TriggerKind::Event;
    s.pipeline = "bloom-detect";
    s.event_filter = EventFilter{"stream", "", ".jpg"};
    s.bindings = {{"folder", "@event.container"}, {"file", "@event.path"}};
    return s;
}

TriggerSpec batch_trigger(const std::string& cron = "*/3 * * * *") {
    TriggerSpec s;
    s.name = "batch-trigger";
    s.kind = TriggerKind::Schedule;
    s.pipeline = "bloom-detect";
    s.cron = cron;
    s.bindings = {{"batch_id", "@schedule.fire_time"}};
    return s;
}

BlobEvent created(const std::string& container, const std::string& path) {
    BlobEvent e;
    e.event_id = "e";
    e.container = container;
    e.path = path;
    return e;
}

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return Errc::Http;
}

}  // namespace

TEST(Expression, ParsesAndEvaluates) {
    const auto e = Expression::parse("'annotated/' + @param.file");
    EXPECT_EQ(e.evaluate({{"param.file", "a.jpg"}}), "annotated/a.jpg");
    EXPECT_EQ(e.references(), std::vector<std::string>{"param.file"});
    EXPECT_EQ(Expression::parse("staging").evaluate({}), "staging");
    EXPECT_EQ(Expression::parse("out/ + @event.path + '.x y'").evaluate({{"event.path", "p"}}), "out/p.x y");
    EXPECT_EQ(code_of([] { Expression::parse("@event"); }), Errc::BadBinding);
    EXPECT_EQ(code_of([] { Expression::parse("'open"); }), Errc::BadBinding);
    EXPECT_EQ(code_of([] { Expression::parse("a + "); }), Errc::BadBinding);
    EXPECT_EQ(code_of([] { Expression::parse(""); }), Errc::BadBinding);
    EXPECT_EQ(code_of([] { Expression::parse("@param.file").evaluate({}); }), Errc::BindingEvaluation);
}

TEST(TriggerEngine, EventBindingsSubstituteDirectly) {
    EventBus bus;
    FakeRuns runs;
    ManualClock clock(make_utc(2021, 7, 14, 0, 0, 0));
    TriggerEngine engine(bus, runs, clock);
    engine.register_trigger(stream_trigger());
    bus.publish(created("stream", "july14/f001.jpg"));
    bus.publish(created("batch", "july14/f002.jpg"));
    bus.drain();
    ASSERT_EQ(runs.count(), 1u);
    EXPECT_EQ(runs.runs[0].parameters.at("folder"), "stream");
    EXPECT_EQ(runs.runs[0].parameters.at("file"), "july14/f001.jpg");
    EXPECT_EQ(runs.runs[0].trigger.name, "stream-trigger");
    EXPECT_EQ(runs.runs[0].trigger.kind, "Event");
    EXPECT_EQ(engine.status("stream-trigger").fire_count, 1u);
}

TEST(TriggerEngine, BothKindsListed) {
    EventBus bus;
    FakeRuns runs;
    ManualClock clock(make_utc(2021, 7, 14, 12, 0, 0));
    TriggerEngine engine(bus, runs, clock);
    engine.register_trigger(stream_trigger());
    engine.register_trigger(batch_trigger());
    const auto list = engine.list();
    ASSERT_EQ(list.size(), 2u);
    EXPECT_EQ(engine.status("batch-trigger").next_fire, make_utc(2021, 7, 14, 12, 3, 0));
    EXPECT_FALSE(engine.status("stream-trigger").next_fire.has_value());
}

TEST(TriggerEngine, RegistrationErrors) {
    EventBus bus;
    FakeRuns runs;
    ManualClock clock(make_utc(2021, 7, 14, 0, 0, 0));
    TriggerEngine engine(bus, runs, clock);

    auto bad = batch_trigger();
    bad.bindings = {{"file", "@event.path"}};
    EXPECT_EQ(code_of([&] { engine.register_trigger(bad); }), Errc::BadBinding);

    auto unknown = stream_trigger();
    unknown.pipeline = "nope";
    EXPECT_EQ(code_of([&] { engine.register_trigger(unknown); }), Errc::UnknownPipeline);

    EXPECT_EQ(code_of([&] { engine.register_trigger(batch_trigger("61 * * * *")); }), Errc::CronRange);

    engine.register_trigger(stream_trigger());
    EXPECT_EQ(code_of([&] { engine.register_trigger(stream_trigger()); }), Errc::DuplicateName);

    auto no_filter = stream_trigger();
    no_filter.name = "other";
    no_filter.event_filter.reset();
    EXPECT_EQ(code_of([&] { engine.register_trigger(no_filter); }), Errc::Validation);

    EXPECT_EQ(code_of([&] { engine.enable("ghost"); }), Errc::UnknownTrigger);
}

TEST(TriggerEngine, DisabledTriggerStartsNothing) {
    EventBus bus;
    FakeRuns runs;
    ManualClock clock(make_utc(2021, 7, 14, 0, 0, 0));
    TriggerEngine engine(bus, runs, clock);
    engine.register_trigger(stream_trigger());
    engine.disable("stream-trigger");
    bus.publish(created("stream", "a.jpg"));
    bus.drain();
    EXPECT_EQ(runs.count(), 0u);
    EXPECT_TRUE(bus.dead_letters().empty());
    EXPECT_EQ(code_of([&] { engine.fire("stream-trigger", {}); }), Errc::TriggerDisabled);
    engine.enable("stream-trigger");
    bus.publish(created("stream", "b.jpg"));
    bus.drain();
    EXPECT_EQ(runs.count(), 1u);
}

TEST(TriggerEngine, MissingFieldAtFireTimeStartsNoRun) {
    EventBus bus;
    FakeRuns runs;
    ManualClock clock(make_utc(2021, 7, 14, 0, 0, 0));
    TriggerEngine engine(bus, runs, clock);
    engine.register_trigger(stream_trigger());
    EXPECT_EQ(code_of([&] { engine.fire("stream-trigger", {{"event.container", "stream"}}); }),
              Errc::BindingEvaluation);
    EXPECT_EQ(runs.count(), 0u);
}

TEST(TriggerEngine, OrchestratorFailureSurfaces) {
    EventBus bus;
    FakeRuns runs;
    runs.fail = true;
    ManualClock clock(make_utc(2021, 7, 14, 0, 0, 0));
    TriggerEngine engine(bus, runs, clock);
    engine.register_trigger(stream_trigger());
    EXPECT_EQ(code_of([&] { engine.fire("stream-trigger", {{"event.container", "s"}, {"event.path", "p"}}); }),
              Errc::OrchestratorUnavailable);
}

TEST(TriggerEngine, ScheduleFireTimeBinding) {
    EventBus bus;
    FakeRuns runs;
    ManualClock clock(make_utc(2021, 7, 14, 12, 0, 0));
    TriggerEngine engine(bus, runs, clock);
    engine.register_trigger(batch_trigger());
    EXPECT_EQ(engine.poll(make_utc(2021, 7, 14, 12, 2, 59)), 0u);
    EXPECT_EQ(engine.poll(make_utc(2021, 7, 14, 12, 3, 0)), 1u);
    ASSERT_EQ(runs.count(), 1u);
    EXPECT_EQ(runs.runs[0].parameters.at("batch_id"), "2021-07-14T12:03:00Z");
    EXPECT_EQ(runs.runs[0].trigger.kind, "Schedule");
}

TEST(TriggerEngine, SimulatedDayFiresEveryThreeMinutes) {
    EventBus bus;
    FakeRuns runs;
    const auto start = make_utc(2021, 7, 14, 0, 0, 0);
    ManualClock clock(start - seconds{1});
    TriggerEngine engine(bus, runs, clock);
    engine.register_trigger(batch_trigger());
    for (int s = 0; s <= 24 * 3600 - 1; s += 30) {
        clock.set(start + seconds{s});
        engine.poll(clock.now());
    }
    ASSERT_EQ(runs.count(), 480u);
    for (std::size_t i = 0; i < runs.runs.size(); ++i) {
        EXPECT_EQ(runs.runs[i].parameters.at("batch_id"), format_rfc3339(start + minutes{3 * static_cast<int>(i)}));
    }
}

TEST(TriggerEngine, MissedFiresAreSkippedNotReplayed) {
    EventBus bus;
    FakeRuns runs;
    ManualClock clock(make_utc(2021, 7, 14, 12, 0, 0));
    TriggerEngine engine(bus, runs, clock);
    engine.register_trigger(batch_trigger());
    EXPECT_EQ(engine.poll(make_utc(2021, 7, 14, 13, 0, 30)), 1u);
    EXPECT_EQ(engine.status("batch-trigger").next_fire, make_utc(2021, 7, 14, 13, 3, 0));
    EXPECT_EQ(runs.count(), 1u);
}

TEST(TriggerEngine, BatchSourceFansOutOncePerBlobVersion) {
    EventBus bus;
    FakeRuns runs;
    ManualClock clock(make_utc(2021, 7, 14, 12, 0, 0));
    std::vector<BlobInfo> blobs;
    for (int i = 0; i < 5; ++i) blobs.push_back(BlobInfo{"batch", "img" + std::to_string(i) + ".jpg", "", 1, {}, 1});
    TriggerEngine engine(bus, runs, clock, [&](const std::string&, const std::string&) { return blobs; });
    auto spec = batch_trigger();
    spec.batch_source = BatchSource{"batch", ""};
    spec.bindings = {{"container", "@batch.container"}, {"path", "@batch.path"}};
    engine.register_trigger(spec);
    engine.poll(make_utc(2021, 7, 14, 12, 3, 0));
    EXPECT_EQ(runs.count(), 5u);
    engine.poll(make_utc(2021, 7, 14, 12, 6, 0));
    EXPECT_EQ(runs.count(), 5u);
    blobs[2].version = 2;
    blobs.push_back(BlobInfo{"batch", "new.jpg", "", 1, {}, 1});
    engine.poll(make_utc(2021, 7, 14, 12, 9, 0));
    ASSERT_EQ(runs.count(), 7u);
    EXPECT_EQ(runs.runs[5].parameters.at("path"), "img2.jpg");
    EXPECT_EQ(runs.runs[6].parameters.at("path"), "new.jpg");
}

TEST(TriggerSpecJson, RoundTrip) {
    auto spec = stream_trigger();
    const auto back = trigger_from_json(nlohmann::json::parse(to_json(spec).dump()));
    EXPECT_EQ(back.name, spec.name);
    EXPECT_EQ(back.kind, spec.kind);
    EXPECT_EQ(back.bindings, spec.bindings);
    ASSERT_TRUE(back.event_filter);
    EXPECT_EQ(back.event_filter->path_suffix, ".jpg");
    EXPECT_THROW(trigger_from_json(nlohmann::json{{"name", "x"}, {"kind", "Cron"}, {"pipeline", "p"}}), Error);
}

#include <gtest/gtest.h>

#include <atomic>
#include <mutex>

#include "bloompipe/error.hpp"
#include "bloompipe/event_bus.hpp"
#include "support.hpp"

using namespace bloompipe;
using testing_support::eventually;

namespace {

BlobEvent created(const std::string& container, const std::string& path, const std::string& id = "e1") {
    BlobEvent e;
    e.event_id = id;
    e.kind = EventKind::BlobCreated;
    e.container = container;
    e.path = path;
    return e;
}

EventBus::Options fast() {
    EventBus::Options o;
    o.retry_backoff = Millis{1};
    return o;
}

}  // namespace

TEST(EventFilter, MatchesContainerAffixesAndKind) {
    EventFilter f{"stream", "july/", ".jpg"};
    EXPECT_TRUE(f.matches(created("stream", "july/a.jpg")));
    EXPECT_FALSE(f.matches(created("batch", "july/a.jpg")));
    EXPECT_FALSE(f.matches(created("stream", "june/a.jpg")));
    EXPECT_FALSE(f.matches(created("stream", "july/a.png")));
    auto deleted = created("stream", "july/a.jpg");
    deleted.kind = EventKind::BlobDeleted;
    EXPECT_FALSE(f.matches(deleted));
}

TEST(EventBus, SubscribeRequiresRegisteredTarget) {
    EventBus bus(fast());
    try {
        bus.subscribe({"stream"}, "ghost");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::UnknownTarget);
    }
}

TEST(EventBus, FilteredDeliveryAndFanOut) {
    EventBus bus(fast());
    std::atomic<int> a{0}, b{0};
    bus.register_target("a", [&](const BlobEvent&) { ++a; });
    bus.register_target("b", [&](const BlobEvent&) { ++b; });
    bus.subscribe({"stream", "", ".jpg"}, "a");
    bus.subscribe({"stream"}, "b");

    EXPECT_EQ(bus.publish(created("stream", "x.jpg")), 2u);
    EXPECT_EQ(bus.publish(created("batch", "x.jpg")), 0u);
    EXPECT_EQ(bus.publish(created("stream", "x.png", "e2")), 1u);
    bus.drain();
    EXPECT_EQ(a.load(), 1);
    EXPECT_EQ(b.load(), 2);
    EXPECT_TRUE(bus.dead_letters().empty());
}

TEST(EventBus, RetriesUntilSuccess) {
    EventBus bus(fast());
    std::atomic<int> calls{0};
    bus.register_target("flaky", [&](const BlobEvent&) {
        if (++calls < 3) throw std::runtime_error("not yet");
    });
    bus.subscribe({"stream"}, "flaky", 3);
    bus.publish(created("stream", "a.jpg"));
    bus.drain();
    const auto delivered = bus.delivered();
    ASSERT_EQ(delivered.size(), 1u);
    EXPECT_EQ(delivered[0].attempts, 3);
    EXPECT_EQ(delivered[0].status, DeliveryStatus::Delivered);
    EXPECT_TRUE(bus.dead_letters().empty());
}

TEST(EventBus, ExhaustedRetriesDeadLetterOnce) {
    EventBus bus(fast());
    std::atomic<int> calls{0};
    bus.register_target("broken", [&](const BlobEvent&) {
        ++calls;
        throw std::runtime_error("boom");
    });
    const auto sub = bus.subscribe({"stream"}, "broken", 3);
    bus.publish(created("stream", "a.jpg", "evt-9"));
    bus.drain();
    EXPECT_EQ(calls.load(), 3);
    const auto dead = bus.dead_letters();
    ASSERT_EQ(dead.size(), 1u);
    EXPECT_EQ(dead[0].event_id, "evt-9");
    EXPECT_EQ(dead[0].subscription_id, sub.subscription_id);
    EXPECT_EQ(dead[0].attempts, 3);
    EXPECT_EQ(dead[0].status, DeliveryStatus::DeadLettered);
    EXPECT_EQ(dead[0].last_error, "boom");
    EXPECT_TRUE(bus.delivered().empty());
}

TEST(EventBus, PerSubscriptionOrderIsPublishOrder) {
    EventBus bus(fast());
    std::mutex m;
    std::vector<std::string> seen;
    bus.register_target("t", [&](const BlobEvent& e) {
        std::lock_guard lock(m);
        seen.push_back(e.path);
    });
    bus.subscribe({"stream"}, "t");
    for (int i = 0; i < 500; ++i) bus.publish(created("stream", std::to_string(i), std::to_string(i)));
    bus.drain();
    ASSERT_EQ(seen.size(), 500u);
    for (int i = 0; i < 500; ++i) EXPECT_EQ(seen[i], std::to_string(i));
}

TEST(EventBus, UnsubscribeStopsDelivery) {
    EventBus bus(fast());
    std::atomic<int> n{0};
    bus.register_target("t", [&](const BlobEvent&) { ++n; });
    const auto sub = bus.subscribe({"stream"}, "t");
    bus.publish(created("stream", "a"));
    bus.drain();
    bus.unsubscribe(sub.subscription_id);
    EXPECT_EQ(bus.publish(created("stream", "b")), 0u);
    bus.drain();
    EXPECT_EQ(n.load(), 1);
    EXPECT_TRUE(bus.subscriptions().empty());
}

TEST(EventBus, FullQueueBlocksPublisherInsteadOfDropping) {
    EventBus::Options o = fast();
    o.queue_depth = 2;
    EventBus bus(o);
    std::atomic<bool> release{false};
    std::atomic<int> n{0};
    bus.register_target("slow", [&](const BlobEvent&) {
        while (!release) std::this_thread::sleep_for(std::chrono::milliseconds(1));
        ++n;
    });
    bus.subscribe({"stream"}, "slow");
    std::atomic<int> published{0};
    std::thread producer([&] {
        for (int i = 0; i < 6; ++i) {
            bus.publish(created("stream", std::to_string(i)));
            ++published;
        }
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    EXPECT_LT(published.load(), 6);
    release = true;
    producer.join();
    bus.drain();
    EXPECT_EQ(n.load(), 6);
}

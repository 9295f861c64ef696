#include <gtest/gtest.h>

#include <atomic>
#include <cmath>

#include "bloompipe/compute_pool.hpp"
#include "bloompipe/error.hpp"
#include "support.hpp"

using namespace bloompipe;
using namespace std::chrono_literals;
using testing_support::eventually;

namespace {

PoolConfig config(Millis cold = Millis{0}, Millis idle = Millis{60'000}) {
    PoolConfig c;
    c.cold_start = cold;
    c.idle_timeout = idle;
    return c;
}

ComputePool::Options no_reaper() {
    ComputePool::Options o;
    o.idle_reaper = false;
    return o;
}

}  // namespace

TEST(Autoscale, WorkedExamples) {
    const PoolConfig c = config();
    EXPECT_EQ(autoscale_target({PoolPhase::Ready, 2, 0, 0, {}}, c), 2);
    EXPECT_EQ(autoscale_target({PoolPhase::Ready, 2, 100, 0, {}}, c), 8);
    EXPECT_EQ(autoscale_target({PoolPhase::Ready, 2, 2, 4, {}}, c), 2);
    EXPECT_EQ(autoscale_target({PoolPhase::Ready, 2, 9, 0, {}}, c), 3);
}

TEST(Autoscale, MatchesCeilClampEverywhere) {
    for (int tpw = 1; tpw <= 6; ++tpw) {
        PoolConfig c = config();
        c.tasks_per_worker = tpw;
        for (int q = 0; q <= 60; ++q) {
            for (int r = 0; r <= 8 * tpw; ++r) {
                for (int active : {2, 5, 8}) {
                    const int ceil_load = static_cast<int>(std::ceil(static_cast<double>(q + r) / tpw));
                    int expected = std::min(8, std::max(2, ceil_load));
                    if (expected < active && q > 0) expected = active;
                    EXPECT_EQ(autoscale_target({PoolPhase::Ready, active, q, r, {}}, c), expected);
                }
            }
        }
    }
}

TEST(PoolConfig, Validation) {
    PoolConfig c = config();
    c.min_workers = 9;
    EXPECT_THROW(c.validate(), Error);
    c = config();
    c.tasks_per_worker = 0;
    EXPECT_THROW(c.validate(), Error);
    c = config();
    c.idle_timeout = Millis{0};
    EXPECT_THROW(c.validate(), Error);
}

TEST(ComputePool, ColdStartThenWarmDispatch) {
    SystemClock clock;
    ComputePool pool(config(Millis{300}), clock, no_reaper());
    EXPECT_EQ(pool.state().phase, PoolPhase::Terminated);
    const auto t0 = std::chrono::steady_clock::now();
    auto first = pool.submit([] {});
    first.wait();
    EXPECT_GE(std::chrono::steady_clock::now() - t0, 300ms);
    EXPECT_EQ(pool.state().phase, PoolPhase::Ready);
    EXPECT_EQ(pool.state().active_workers, 2);

    auto second = pool.submit([] {});
    second.wait();
    EXPECT_LT(second.dispatch_latency(), std::chrono::microseconds(100'000));
}

TEST(ComputePool, ScalesToMaxAndBackToMin) {
    SystemClock clock;
    ComputePool pool(config(), clock, no_reaper());
    pool.warm_up();
    std::atomic<bool> release{false};
    std::atomic<int> running{0}, peak{0};
    std::vector<TaskHandle> handles;
    for (int i = 0; i < 64; ++i) {
        handles.push_back(pool.submit([&] {
            const int now = ++running;
            int seen = peak.load();
            while (now > seen && !peak.compare_exchange_weak(seen, now)) {
            }
            while (!release) std::this_thread::sleep_for(1ms);
            --running;
        }));
    }
    ASSERT_TRUE(eventually([&] { return pool.state().running_tasks == 32; }));
    EXPECT_EQ(pool.state().active_workers, 8);
    EXPECT_EQ(pool.state().queued_tasks, 32);
    release = true;
    for (auto& h : handles) h.wait();
    EXPECT_EQ(peak.load(), 32);
    EXPECT_EQ(pool.state().active_workers, 2);
}

TEST(ComputePool, CapacityFollowsActiveWorkers) {
    SystemClock clock;
    PoolConfig c = config();
    c.min_workers = 1;
    c.max_workers = 1;
    c.tasks_per_worker = 2;
    ComputePool pool(c, clock, no_reaper());
    std::atomic<int> running{0}, peak{0};
    std::vector<TaskHandle> handles;
    for (int i = 0; i < 12; ++i) {
        handles.push_back(pool.submit([&] {
            const int now = ++running;
            int seen = peak.load();
            while (now > seen && !peak.compare_exchange_weak(seen, now)) {
            }
            std::this_thread::sleep_for(5ms);
            --running;
        }));
    }
    for (auto& h : handles) h.wait();
    EXPECT_EQ(peak.load(), 2);
}

TEST(ComputePool, IdleTimeoutTerminatesExactlyAtDeadline) {
    ManualClock clock(make_utc(2021, 7, 14, 0, 0, 0));
    ComputePool pool(config(Millis{0}, Millis{60'000}), clock, no_reaper());
    pool.submit([] {}).wait();
    const auto last = pool.state().last_activity_at;
    EXPECT_FALSE(pool.tick_idle(last + Millis{59'999}));
    EXPECT_TRUE(pool.tick_idle(last + Millis{60'000}));
    EXPECT_EQ(pool.state().phase, PoolPhase::Terminated);
    EXPECT_EQ(pool.state().active_workers, 0);
    EXPECT_FALSE(pool.tick_idle(last + Millis{120'000}));
    EXPECT_EQ(pool.state().phase, PoolPhase::Terminated);
}

TEST(ComputePool, BusyPoolNeverTerminates) {
    ManualClock clock(make_utc(2021, 7, 14, 0, 0, 0));
    ComputePool pool(config(), clock, no_reaper());
    std::atomic<bool> release{false};
    auto h = pool.submit([&] {
        while (!release) std::this_thread::sleep_for(1ms);
    });
    ASSERT_TRUE(eventually([&] { return pool.state().running_tasks == 1; }));
    EXPECT_FALSE(pool.tick_idle(clock.now() + Millis{10'000'000}));
    release = true;
    h.wait();
}

TEST(ComputePool, RestartsAfterTermination) {
    ManualClock clock(make_utc(2021, 7, 14, 0, 0, 0));
    ComputePool pool(config(), clock, no_reaper());
    pool.submit([] {}).wait();
    ASSERT_TRUE(pool.tick_idle(clock.now() + Millis{60'000}));
    std::atomic<bool> ran{false};
    pool.submit([&] { ran = true; }).wait();
    EXPECT_TRUE(ran);
    EXPECT_EQ(pool.state().phase, PoolPhase::Ready);
}

TEST(ComputePool, ReaperUsesPoolClock) {
    ManualClock clock(make_utc(2021, 7, 14, 0, 0, 0));
    ComputePool::Options o;
    o.reaper_interval = Millis{5};
    ComputePool pool(config(Millis{0}, Millis{60'000}), clock, o);
    pool.submit([] {}).wait();
    std::this_thread::sleep_for(30ms);
    EXPECT_EQ(pool.state().phase, PoolPhase::Ready);
    clock.advance(Millis{60'000});
    EXPECT_TRUE(eventually([&] { return pool.state().phase == PoolPhase::Terminated; }));
}

TEST(ComputePool, TaskExceptionBecomesTaskPanicked) {
    SystemClock clock;
    ComputePool pool(config(), clock, no_reaper());
    auto h = pool.submit([] { throw std::runtime_error("kaboom"); });
    try {
        h.wait();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::TaskPanicked);
        EXPECT_STREQ(e.what(), "kaboom");
    }
    pool.submit([] {}).wait();
}

TEST(ComputePool, ProvisioningFailureFailsQueuedTasks) {
    SystemClock clock;
    ComputePool::Options o = no_reaper();
    o.provisioner = [](const PoolConfig&) { throw std::runtime_error("no capacity"); };
    ComputePool pool(config(), clock, o);
    auto h = pool.submit([] {});
    try {
        h.wait();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::PoolStartTimeout);
    }
    EXPECT_EQ(pool.state().phase, PoolPhase::Terminated);
}

TEST(ComputePool, ProvisioningPastDeadlineTimesOut) {
    SystemClock clock;
    ComputePool::Options o = no_reaper();
    o.provisioner = [](const PoolConfig&) { std::this_thread::sleep_for(1300ms); };
    ComputePool pool(config(Millis{50}), clock, o);  // deadline max(10 * 50 ms, 1 s)
    const auto t0 = std::chrono::steady_clock::now();
    auto h = pool.submit([] {});
    EXPECT_THROW(h.wait(), Error);
    const auto waited = std::chrono::steady_clock::now() - t0;
    EXPECT_GE(waited, 1000ms);
    EXPECT_LT(waited, 1300ms);
    EXPECT_EQ(pool.state().phase, PoolPhase::Terminated);
}

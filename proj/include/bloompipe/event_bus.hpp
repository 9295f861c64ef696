#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "bloompipe/events.hpp"
#include "bloompipe/time.hpp"

namespace bloompipe {

struct EventFilter {
    std::string container;
    std::string path_prefix;
    std::string path_suffix;
    std::set<EventKind> kinds{EventKind::BlobCreated};

    bool matches(const BlobEvent& event) const;
};

struct Subscription {
    std::string subscription_id;
    EventFilter filter;
    std::string target;
    int max_delivery_attempts = 3;
};

enum class DeliveryStatus { Delivered, DeadLettered };

struct DeliveryRecord {
    std::string event_id;
    std::string subscription_id;
    int attempts = 0;
    DeliveryStatus status = DeliveryStatus::Delivered;
    std::string last_error;
};

std::string_view to_string(DeliveryStatus status);

/// Delivery callback. Throwing signals a failed attempt.
using EventHandler = std::function<void(const BlobEvent&)>;

/// In-process pub/sub hub.
///
/// Each subscription owns a bounded FIFO drained by a dedicated consumer
/// thread, which gives per-subscription ordering while distinct
/// subscriptions deliver in parallel. A full queue blocks the publisher.
class EventBus {
public:
    struct Options {
        std::size_t queue_depth = 10'000;
        Millis retry_backoff{100};
        std::size_t delivered_history = 10'000;
    };

    EventBus();
    explicit EventBus(Options options);
    ~EventBus();

    EventBus(const EventBus&) = delete;
    EventBus& operator=(const EventBus&) = delete;

    void register_target(const std::string& name, EventHandler handler);
    void unregister_target(const std::string& name);
    bool has_target(const std::string& name) const;

    /// Throws Error{UnknownTarget} when the target is not registered.
    Subscription subscribe(const EventFilter& filter, const std::string& target,
                           int max_delivery_attempts = 3);
    void unsubscribe(const std::string& subscription_id);
    std::vector<Subscription> subscriptions() const;

    /// Returns the number of subscriptions the event was enqueued for.
    std::size_t publish(const BlobEvent& event);

    /// Dead-lettered records, oldest first.
    std::vector<DeliveryRecord> dead_letters() const;
    /// Most recent successful deliveries, oldest first (bounded history).
    std::vector<DeliveryRecord> delivered() const;

    /// Blocks until every queue is empty and no delivery is in flight.
    void drain();

    void shutdown();

private:
    struct Channel {
        Subscription subscription;
        std::mutex mutex;
        std::condition_variable not_empty;
        std::condition_variable not_full;
        std::deque<BlobEvent> queue;
        bool busy = false;
        bool closing = false;
        std::thread worker;
    };

    void run_channel(Channel& channel);
    EventHandler handler_for(const std::string& target) const;
    void record(DeliveryRecord rec);

    Options options_;
    mutable std::shared_mutex targets_mutex_;
    std::map<std::string, std::shared_ptr<EventHandler>> targets_;

    mutable std::shared_mutex channels_mutex_;
    std::map<std::string, std::shared_ptr<Channel>> channels_;
    std::uint64_t next_subscription_ = 0;

    mutable std::mutex records_mutex_;
    std::condition_variable idle_cv_;
    std::vector<DeliveryRecord> dead_letters_;
    std::deque<DeliveryRecord> delivered_;
    std::size_t pending_ = 0;
    bool shut_down_ = false;
};

}  // namespace bloompipe

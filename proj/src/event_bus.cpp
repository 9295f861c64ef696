#include "bloompipe/event_bus.hpp"

#include "bloompipe/error.hpp"

namespace bloompipe {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

bool EventFilter::matches(const BlobEvent& event) const {
    return event.container == container && event.path.compare(0, path_prefix.size(), path_prefix) == 0 &&
           ends_with(event.path, path_suffix) && kinds.count(event.kind) > 0;
}

std::string_view to_string(DeliveryStatus status) {
    return status == DeliveryStatus::Delivered ? "Delivered" : "DeadLettered";
}

EventBus::EventBus() : EventBus(Options{}) {}

EventBus::EventBus(Options options) : options_(options) {}

EventBus::~EventBus() { shutdown(); }

void EventBus::register_target(const std::string& name, EventHandler handler) {
    std::unique_lock lock(targets_mutex_);
    targets_[name] = std::make_shared<EventHandler>(std::move(handler));
}

void EventBus::unregister_target(const std::string& name) {
    std::unique_lock lock(targets_mutex_);
    targets_.erase(name);
}

bool EventBus::has_target(const std::string& name) const {
    std::shared_lock lock(targets_mutex_);
    return targets_.count(name) > 0;
}

EventHandler EventBus::handler_for(const std::string& target) const {
    std::shared_lock lock(targets_mutex_);
    auto it = targets_.find(target);
    if (it == targets_.end()) return {};
    return *it->second;
}

Subscription EventBus::subscribe(const EventFilter& filter, const std::string& target,
                                 int max_delivery_attempts) {
    if (filter.container.empty()) {
        throw Error(Errc::InvalidArgument, "subscription filter requires a container");
    }
    if (max_delivery_attempts < 1) {
        throw Error(Errc::InvalidArgument, "max_delivery_attempts must be >= 1");
    }
    if (!has_target(target)) throw Error(Errc::UnknownTarget, "unknown target: " + target);

    auto channel = std::make_shared<Channel>();
    std::unique_lock lock(channels_mutex_);
    if (shut_down_) throw Error(Errc::InvalidArgument, "event bus is shut down");
    channel->subscription = Subscription{"sub-" + std::to_string(++next_subscription_), filter,
                                         target, max_delivery_attempts};
    channel->worker = std::thread([this, ch = channel.get()] { run_channel(*ch); });
    channels_[channel->subscription.subscription_id] = channel;
    return channel->subscription;
}

void EventBus::unsubscribe(const std::string& subscription_id) {
    std::shared_ptr<Channel> channel;
    {
        std::unique_lock lock(channels_mutex_);
        auto it = channels_.find(subscription_id);
        if (it == channels_.end()) return;
        channel = it->second;
        channels_.erase(it);
    }
    {
        std::lock_guard lock(channel->mutex);
        channel->closing = true;
    }
    channel->not_empty.notify_all();
    channel->not_full.notify_all();
    if (channel->worker.joinable()) channel->worker.join();
}

std::vector<Subscription> EventBus::subscriptions() const {
    std::shared_lock lock(channels_mutex_);
    std::vector<Subscription> out;
    for (const auto& [_, ch] : channels_) out.push_back(ch->subscription);
    return out;
}

std::size_t EventBus::publish(const BlobEvent& event) {
    std::vector<std::shared_ptr<Channel>> matched;
    {
        std::shared_lock lock(channels_mutex_);
        for (const auto& [_, ch] : channels_) {
            if (ch->subscription.filter.matches(event)) matched.push_back(ch);
        }
    }
    std::size_t enqueued = 0;
    for (auto& ch : matched) {
        std::unique_lock lock(ch->mutex);
        ch->not_full.wait(lock, [&] { return ch->closing || ch->queue.size() < options_.queue_depth; });
        if (ch->closing) continue;
        {
            std::lock_guard rec(records_mutex_);
            ++pending_;
        }
        ch->queue.push_back(event);
        ++enqueued;
        lock.unlock();
        ch->not_empty.notify_one();
    }
    return enqueued;
}

void EventBus::record(DeliveryRecord rec) {
    std::lock_guard lock(records_mutex_);
    if (rec.status == DeliveryStatus::DeadLettered) {
        dead_letters_.push_back(std::move(rec));
    } else {
        delivered_.push_back(std::move(rec));
        while (delivered_.size() > options_.delivered_history) delivered_.pop_front();
    }
    --pending_;
    if (pending_ == 0) idle_cv_.notify_all();
}

void EventBus::run_channel(Channel& ch) {
    for (;;) {
        BlobEvent event;
        {
            std::unique_lock lock(ch.mutex);
            ch.not_empty.wait(lock, [&] { return ch.closing || !ch.queue.empty(); });
            if (ch.queue.empty()) break;  // closing with nothing left
            event = std::move(ch.queue.front());
            ch.queue.pop_front();
        }
        ch.not_full.notify_one();

        DeliveryRecord rec{event.event_id, ch.subscription.subscription_id, 0,
                           DeliveryStatus::DeadLettered, {}};
        while (rec.attempts < ch.subscription.max_delivery_attempts) {
            if (rec.attempts > 0) {
                std::unique_lock lock(ch.mutex);
                // Closing cuts the backoff short but still lets the attempt run.
                ch.not_empty.wait_for(lock, options_.retry_backoff, [&] { return ch.closing; });
            }
            ++rec.attempts;
            auto handler = handler_for(ch.subscription.target);
            try {
                if (!handler) throw Error(Errc::UnknownTarget, "target gone: " + ch.subscription.target);
                handler(event);
                rec.status = DeliveryStatus::Delivered;
                rec.last_error.clear();
                break;
            } catch (const std::exception& e) {
                rec.last_error = e.what();
            }
        }
        record(std::move(rec));
    }
}

std::vector<DeliveryRecord> EventBus::dead_letters() const {
    std::lock_guard lock(records_mutex_);
    return dead_letters_;
}

std::vector<DeliveryRecord> EventBus::delivered() const {
    std::lock_guard lock(records_mutex_);
    return {delivered_.begin(), delivered_.end()};
}

void EventBus::drain() {
    std::unique_lock lock(records_mutex_);
    idle_cv_.wait(lock, [&] { return pending_ == 0; });
}

void EventBus::shutdown() {
    std::vector<std::string> ids;
    {
        std::unique_lock lock(channels_mutex_);
        shut_down_ = true;
        for (const auto& [id, _] : channels_) ids.push_back(id);
    }
    for (const auto& id : ids) unsubscribe(id);
}

}  // namespace bloompipe

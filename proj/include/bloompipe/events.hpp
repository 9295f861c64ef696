#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

#include "bloompipe/time.hpp"

namespace bloompipe {

enum class EventKind { BlobCreated, BlobDeleted };

std::string_view to_string(EventKind kind);
EventKind parse_event_kind(std::string_view text);

/// Storage lifecycle notification emitted by the blob store.
struct BlobEvent {
    std::string event_id;
    EventKind kind = EventKind::BlobCreated;
    std::string container;
    std::string path;
    std::uint64_t size = 0;
    Timestamp emitted_at{};
};

using EventPublisher = std::function<void(const BlobEvent&)>;

}  // namespace bloompipe

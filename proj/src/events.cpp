#include "bloompipe/events.hpp"

#include <string>

#include "bloompipe/error.hpp"

namespace bloompipe {

std::string_view to_string(EventKind kind) {
    return kind == EventKind::BlobCreated ? "BlobCreated" : "BlobDeleted";
}

EventKind parse_event_kind(std::string_view text) {
    if (text == "BlobCreated") return EventKind::BlobCreated;
    if (text == "BlobDeleted") return EventKind::BlobDeleted;
    throw Error(Errc::InvalidArgument, "unknown event kind: " + std::string(text));
}

}  // namespace bloompipe

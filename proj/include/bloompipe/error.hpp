#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bloompipe {

enum class Errc {
    // blob store
    UnknownContainer,
    InvalidPath,
    InvalidName,
    AlreadyExists,
    NotFound,
    BlobTooLarge,
    StorageFailure,
    // event bus / triggers
    UnknownTarget,
    CronSyntax,
    CronRange,
    NoFireWithinHorizon,
    UnknownTrigger,
    DuplicateName,
    BadBinding,
    BindingEvaluation,
    TriggerDisabled,
    // orchestrator
    UnknownPipeline,
    Validation,
    MissingParameter,
    OrchestratorUnavailable,
    // compute pool
    PoolStartTimeout,
    TaskPanicked,
    // imaging
    Decode,
    Encode,
    BadSliceCount,
    InvalidBox,
    // evaluation
    UnknownImage,
    EmptyGroundTruth,
    Parse,
    // transport / generic
    Unreachable,
    Http,
    InvalidArgument,
};

std::string_view to_string(Errc code);
/// Inverse of to_string; Errc::Http for unknown names.
Errc errc_from_string(std::string_view name);
/// HTTP status used when the error crosses a REST boundary.
int http_status(Errc code);

/// Exception carrying a machine-readable code alongside the message.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace bloompipe

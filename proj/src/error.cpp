#include "bloompipe/error.hpp"

namespace bloompipe {

std::string_view to_string(Errc code) {
    switch (code) {
        case Errc::UnknownContainer: return "UnknownContainer";
        case Errc::InvalidPath: return "InvalidPath";
        case Errc::InvalidName: return "InvalidName";
        case Errc::AlreadyExists: return "AlreadyExists";
        case Errc::NotFound: return "NotFound";
        case Errc::BlobTooLarge: return "BlobTooLarge";
        case Errc::StorageFailure: return "StorageFailure";
        case Errc::UnknownTarget: return "UnknownTarget";
        case Errc::CronSyntax: return "SyntaxError";
        case Errc::CronRange: return "RangeError";
        case Errc::NoFireWithinHorizon: return "NoFireWithinHorizon";
        case Errc::UnknownTrigger: return "UnknownTrigger";
        case Errc::DuplicateName: return "DuplicateName";
        case Errc::BadBinding: return "BadBinding";
        case Errc::BindingEvaluation: return "BindingEvaluationError";
        case Errc::TriggerDisabled: return "TriggerDisabled";
        case Errc::UnknownPipeline: return "UnknownPipeline";
        case Errc::Validation: return "ValidationError";
        case Errc::MissingParameter: return "MissingParameter";
        case Errc::OrchestratorUnavailable: return "OrchestratorUnavailable";
        case Errc::PoolStartTimeout: return "PoolStartTimeout";
        case Errc::TaskPanicked: return "TaskPanicked";
        case Errc::Decode: return "DecodeError";
        case Errc::Encode: return "EncodeError";
        case Errc::BadSliceCount: return "BadSliceCount";
        case Errc::InvalidBox: return "InvalidBox";
        case Errc::UnknownImage: return "UnknownImage";
        case Errc::EmptyGroundTruth: return "EmptyGroundTruth";
        case Errc::Parse: return "ParseError";
        case Errc::Unreachable: return "Unreachable";
        case Errc::Http: return "HttpError";
        case Errc::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

Errc errc_from_string(std::string_view name) {
    for (int i = 0; i <= static_cast<int>(Errc::InvalidArgument); ++i) {
        const auto code = static_cast<Errc>(i);
        if (to_string(code) == name) return code;
    }
    return Errc::Http;
}

int http_status(Errc code) {
    switch (code) {
        case Errc::UnknownContainer:
        case Errc::NotFound:
        case Errc::UnknownTrigger:
        case Errc::UnknownPipeline:
        case Errc::UnknownImage:
            return 404;
        case Errc::AlreadyExists:
        case Errc::DuplicateName:
        case Errc::TriggerDisabled:
            return 409;
        case Errc::BlobTooLarge: return 413;
        case Errc::Decode: return 422;
        case Errc::StorageFailure:
        case Errc::TaskPanicked:
        case Errc::Encode:
            return 500;
        case Errc::OrchestratorUnavailable:
        case Errc::PoolStartTimeout:
        case Errc::Unreachable:
            return 503;
        case Errc::Http: return 502;
        default: return 400;
    }
}

}  // namespace bloompipe

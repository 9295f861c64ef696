#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bloompipe/error.hpp"
#include "bloompipe/imaging.hpp"
#include "bloompipe/time.hpp"
#include "json.hpp"

namespace bloompipe {

using ParameterMap = std::map<std::string, std::string>;

struct Parameter {
    std::string name;
    std::optional<std::string> default_value;
};

/// Container/path pair given as binding expressions.
struct BlobRef {
    std::string container_expr;
    std::string path_expr;
};

struct CopyConfig {
    BlobRef source;
    BlobRef sink;
};

enum class ProcessOp { Compress, Slice, ValidateDims };

struct ProcessConfig {
    ProcessOp op = ProcessOp::Compress;
    int quality = kDefaultJpegQuality;  // compress
    int slices = 5;                     // slice
    std::optional<BlobRef> sink;        // slice: where the strips go
    int width = 0;                      // validate_dims
    int height = 0;
};

struct InferConfig {
    std::string endpoint;
    std::string auth_key_ref;  // environment variable holding the key
    int timeout_ms = 30'000;
    std::optional<std::string> filename_expr;
};

struct RenderConfig {
    std::string detections_from;
    BlobRef sink;
    RenderStyle style;
};

enum class ActivityKind { Copy, Process, Infer, Render };

struct Activity {
    std::string name;
    std::variant<CopyConfig, ProcessConfig, InferConfig, RenderConfig> config;
    int retries = 0;  // extra attempts after a failure, at most 3

    ActivityKind kind() const { return static_cast<ActivityKind>(config.index()); }
};

struct PipelineDefinition {
    std::string name;
    std::vector<Parameter> parameters;
    std::vector<Activity> activities;
};

/// Empty when the definition is valid; otherwise one message per violation.
std::vector<std::string> validate(const PipelineDefinition& def);

std::string_view to_string(ActivityKind kind);
std::string_view to_string(ProcessOp op);

nlohmann::ordered_json to_json(const PipelineDefinition& def);
/// Throws Error{Validation} on schema errors (structure only; call validate()).
PipelineDefinition pipeline_from_json(const nlohmann::json& j);

enum class RunStatus { Queued, InProgress, Succeeded, Failed };
enum class ActivityStatus { InProgress, Succeeded, Failed, Skipped };

std::string_view to_string(RunStatus status);
std::string_view to_string(ActivityStatus status);
RunStatus parse_run_status(std::string_view text);

struct ActivityRecord {
    std::string name;
    ActivityStatus status = ActivityStatus::InProgress;
    std::optional<Timestamp> started_at;
    std::optional<Timestamp> ended_at;
    std::optional<std::string> error;
    int attempts = 0;
};

struct TriggerSource {
    std::string name = "manual";
    std::string kind = "Manual";  // Event | Schedule | Manual
};

struct PipelineRun {
    std::string run_id;
    std::string pipeline;
    TriggerSource trigger;
    ParameterMap parameters;
    RunStatus status = RunStatus::Queued;
    std::vector<ActivityRecord> activities;
    Timestamp created_at{};
    std::optional<Timestamp> started_at;
    std::optional<Timestamp> ended_at;
    std::optional<std::string> error;

    bool terminal() const { return status == RunStatus::Succeeded || status == RunStatus::Failed; }
};

nlohmann::ordered_json to_json(const PipelineRun& run);
PipelineRun run_from_json(const nlohmann::json& j);

/// What triggers need from the orchestrator.
class RunStarter {
public:
    virtual ~RunStarter() = default;
    virtual bool has_pipeline(const std::string& name) const = 0;
    virtual std::string start_run(const std::string& pipeline, const ParameterMap& parameters,
                                  const TriggerSource& trigger) = 0;
};

}  // namespace bloompipe

namespace bloompipe {

/// Error{Validation} carrying every violation found.
class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    std::vector<std::string> problems_;
};

}  // namespace bloompipe

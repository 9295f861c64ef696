#include "bloompipe/pipeline.hpp"

#include <set>

#include "bloompipe/error.hpp"
#include "bloompipe/expression.hpp"

namespace bloompipe {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(ActivityKind kind) {
    switch (kind) {
        case ActivityKind::Copy: return "Copy";
        case ActivityKind::Process: return "Process";
        case ActivityKind::Infer: return "Infer";
        case ActivityKind::Render: return "Render";
    }
    return "Unknown";
}

std::string_view to_string(ProcessOp op) {
    switch (op) {
        case ProcessOp::Compress: return "compress";
        case ProcessOp::Slice: return "slice";
        case ProcessOp::ValidateDims: return "validate_dims";
    }
    return "unknown";
}

std::string_view to_string(RunStatus status) {
    switch (status) {
        case RunStatus::Queued: return "Queued";
        case RunStatus::InProgress: return "InProgress";
        case RunStatus::Succeeded: return "Succeeded";
        case RunStatus::Failed: return "Failed";
    }
    return "Unknown";
}

std::string_view to_string(ActivityStatus status) {
    switch (status) {
        case ActivityStatus::InProgress: return "InProgress";
        case ActivityStatus::Succeeded: return "Succeeded";
        case ActivityStatus::Failed: return "Failed";
        case ActivityStatus::Skipped: return "Skipped";
    }
    return "Unknown";
}

RunStatus parse_run_status(std::string_view text) {
    for (auto s : {RunStatus::Queued, RunStatus::InProgress, RunStatus::Succeeded, RunStatus::Failed}) {
        if (to_string(s) == text) return s;
    }
    throw Error(Errc::InvalidArgument, "unknown run status: " + std::string(text));
}

namespace {

ActivityStatus parse_activity_status(std::string_view text) {
    for (auto s : {ActivityStatus::InProgress, ActivityStatus::Succeeded, ActivityStatus::Failed,
                   ActivityStatus::Skipped}) {
        if (to_string(s) == text) return s;
    }
    throw Error(Errc::Parse, "unknown activity status: " + std::string(text));
}

bool valid_identifier(std::string_view s) {
    if (s.empty() || s.size() > 128) return false;
    for (char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                        c == '_' || c == '-';
        if (!ok) return false;
    }
    return true;
}

void check_expression(const std::string& where, const std::string& source,
                      const std::set<std::string>& params, std::vector<std::string>& problems) {
    try {
        const auto expr = Expression::parse(source);
        for (const auto& ref : expr.references()) {
            if (ref.rfind("param.", 0) != 0) {
                problems.push_back(where + ": only @param.* references are allowed, found @" + ref);
            } else if (!params.count(ref.substr(6))) {
                problems.push_back(where + ": undeclared parameter @" + ref);
            }
        }
    } catch (const Error& e) {
        problems.push_back(where + ": " + e.what());
    }
}

void check_ref(const std::string& where, const BlobRef& ref, const std::set<std::string>& params,
               std::vector<std::string>& problems) {
    check_expression(where + ".container_expr", ref.container_expr, params, problems);
    check_expression(where + ".path_expr", ref.path_expr, params, problems);
}

}  // namespace

std::vector<std::string> validate(const PipelineDefinition& def) {
    std::vector<std::string> problems;
    if (!valid_identifier(def.name)) problems.push_back("pipeline name must match [A-Za-z0-9_-]+");

    std::set<std::string> params;
    for (const auto& p : def.parameters) {
        if (!valid_identifier(p.name)) problems.push_back("bad parameter name '" + p.name + "'");
        if (!params.insert(p.name).second) problems.push_back("duplicate parameter '" + p.name + "'");
    }
    if (def.activities.empty()) problems.push_back("pipeline needs at least one activity");

    std::set<std::string> names;
    std::set<std::string> infer_before;
    bool copied = false;
    for (const auto& a : def.activities) {
        const auto where = "activity '" + a.name + "'";
        if (a.kind() == ActivityKind::Copy) copied = true;
        else if (!copied) problems.push_back(where + ": needs an earlier Copy activity to provide its input");
        if (!valid_identifier(a.name)) problems.push_back(where + ": bad activity name");
        if (!names.insert(a.name).second) problems.push_back(where + ": duplicate activity name");
        if (a.retries < 0 || a.retries > 3) problems.push_back(where + ": retries must be 0-3");

        std::visit(
            [&](const auto& cfg) {
                using T = std::decay_t<decltype(cfg)>;
                if constexpr (std::is_same_v<T, CopyConfig>) {
                    check_ref(where + ".source", cfg.source, params, problems);
                    check_ref(where + ".sink", cfg.sink, params, problems);
                } else if constexpr (std::is_same_v<T, ProcessConfig>) {
                    switch (cfg.op) {
                        case ProcessOp::Compress:
                            if (cfg.quality < 1 || cfg.quality > 100)
                                problems.push_back(where + ": quality must be 1-100");
                            break;
                        case ProcessOp::Slice:
                            if (cfg.slices < 1) problems.push_back(where + ": slices must be >= 1");
                            if (!cfg.sink) problems.push_back(where + ": slice needs a sink");
                            else check_ref(where + ".sink", *cfg.sink, params, problems);
                            break;
                        case ProcessOp::ValidateDims:
                            if (cfg.width < 1 || cfg.height < 1)
                                problems.push_back(where + ": expected dimensions must be >= 1");
                            break;
                    }
                } else if constexpr (std::is_same_v<T, InferConfig>) {
                    if (cfg.endpoint.rfind("http://", 0) != 0)
                        problems.push_back(where + ": endpoint must be an http:// URL");
                    if (cfg.auth_key_ref.empty()) problems.push_back(where + ": auth_key_ref is required");
                    if (cfg.timeout_ms <= 0) problems.push_back(where + ": timeout_ms must be > 0");
                    if (cfg.filename_expr) check_expression(where + ".filename_expr", *cfg.filename_expr, params, problems);
                    infer_before.insert(a.name);
                } else if constexpr (std::is_same_v<T, RenderConfig>) {
                    if (!infer_before.count(cfg.detections_from))
                        problems.push_back(where + ": detections_from must name an earlier Infer activity");
                    check_ref(where + ".sink", cfg.sink, params, problems);
                    if (cfg.style.thickness < 1) problems.push_back(where + ": thickness must be >= 1");
                }
            },
            a.config);
    }
    return problems;
}

namespace {

ordered_json ref_json(const BlobRef& r) {
    return ordered_json{{"container_expr", r.container_expr}, {"path_expr", r.path_expr}};
}

BlobRef ref_from(const json& j) {
    return BlobRef{j.at("container_expr").get<std::string>(), j.at("path_expr").get<std::string>()};
}

ProcessOp parse_op(const std::string& s) {
    if (s == "compress") return ProcessOp::Compress;
    if (s == "slice") return ProcessOp::Slice;
    if (s == "validate_dims") return ProcessOp::ValidateDims;
    throw Error(Errc::Validation, "unknown process op: " + s);
}

std::optional<Timestamp> opt_time(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return parse_rfc3339(j.at(key).get<std::string>());
}

void put_time(ordered_json& j, const char* key, const std::optional<Timestamp>& t) {
    if (t) j[key] = format_rfc3339(*t);
}

}  // namespace

ordered_json to_json(const PipelineDefinition& def) {
    ordered_json j;
    j["name"] = def.name;
    j["parameters"] = ordered_json::array();
    for (const auto& p : def.parameters) {
        ordered_json pj{{"name", p.name}};
        if (p.default_value) pj["default"] = *p.default_value;
        j["parameters"].push_back(pj);
    }
    j["activities"] = ordered_json::array();
    for (const auto& a : def.activities) {
        ordered_json aj;
        aj["name"] = a.name;
        aj["kind"] = to_string(a.kind());
        ordered_json cfg;
        std::visit(
            [&](const auto& c) {
                using T = std::decay_t<decltype(c)>;
                if constexpr (std::is_same_v<T, CopyConfig>) {
                    cfg["source"] = ref_json(c.source);
                    cfg["sink"] = ref_json(c.sink);
                } else if constexpr (std::is_same_v<T, ProcessConfig>) {
                    cfg["op"] = to_string(c.op);
                    ordered_json params = ordered_json::object();
                    switch (c.op) {
                        case ProcessOp::Compress: params["quality"] = c.quality; break;
                        case ProcessOp::Slice:
                            params["slices"] = c.slices;
                            if (c.sink) params["sink"] = ref_json(*c.sink);
                            break;
                        case ProcessOp::ValidateDims:
                            params["width"] = c.width;
                            params["height"] = c.height;
                            break;
                    }
                    cfg["params"] = params;
                } else if constexpr (std::is_same_v<T, InferConfig>) {
                    cfg["endpoint"] = c.endpoint;
                    cfg["auth_key_ref"] = c.auth_key_ref;
                    cfg["timeout_ms"] = c.timeout_ms;
                    if (c.filename_expr) cfg["filename_expr"] = *c.filename_expr;
                } else if constexpr (std::is_same_v<T, RenderConfig>) {
                    cfg["detections_from"] = c.detections_from;
                    cfg["sink"] = ref_json(c.sink);
                    cfg["style"] = ordered_json{{"thickness", c.style.thickness},
                                                {"color", {c.style.color[0], c.style.color[1], c.style.color[2]}},
                                                {"label", c.style.label}};
                }
            },
            a.config);
        aj["config"] = cfg;
        if (a.retries) aj["retries"] = a.retries;
        j["activities"].push_back(aj);
    }
    return j;
}

PipelineDefinition pipeline_from_json(const json& j) {
    PipelineDefinition def;
    try {
        def.name = j.at("name").get<std::string>();
        for (const auto& p : j.value("parameters", json::array())) {
            Parameter param{p.at("name").get<std::string>(), std::nullopt};
            if (p.contains("default") && !p.at("default").is_null()) {
                param.default_value = p.at("default").get<std::string>();
            }
            def.parameters.push_back(std::move(param));
        }
        for (const auto& aj : j.at("activities")) {
            Activity a;
            a.name = aj.at("name").get<std::string>();
            a.retries = aj.value("retries", 0);
            const auto kind = aj.at("kind").get<std::string>();
            const auto& cfg = aj.at("config");
            if (kind == "Copy") {
                a.config = CopyConfig{ref_from(cfg.at("source")), ref_from(cfg.at("sink"))};
            } else if (kind == "Process") {
                ProcessConfig pc;
                pc.op = parse_op(cfg.at("op").get<std::string>());
                const auto params = cfg.value("params", json::object());
                pc.quality = params.value("quality", kDefaultJpegQuality);
                pc.slices = params.value("slices", 5);
                if (params.contains("sink")) pc.sink = ref_from(params.at("sink"));
                pc.width = params.value("width", 0);
                pc.height = params.value("height", 0);
                a.config = pc;
            } else if (kind == "Infer") {
                InferConfig ic;
                ic.endpoint = cfg.at("endpoint").get<std::string>();
                ic.auth_key_ref = cfg.at("auth_key_ref").get<std::string>();
                ic.timeout_ms = cfg.value("timeout_ms", 30'000);
                if (cfg.contains("filename_expr")) ic.filename_expr = cfg.at("filename_expr").get<std::string>();
                a.config = ic;
            } else if (kind == "Render") {
                RenderConfig rc;
                rc.detections_from = cfg.at("detections_from").get<std::string>();
                rc.sink = ref_from(cfg.at("sink"));
                if (cfg.contains("style")) {
                    const auto& s = cfg.at("style");
                    rc.style.thickness = s.value("thickness", rc.style.thickness);
                    rc.style.label = s.value("label", rc.style.label);
                    if (s.contains("color")) {
                        const auto& c = s.at("color");
                        if (!c.is_array() || c.size() != 3) throw Error(Errc::Validation, "style.color must be [r,g,b]");
                        for (int i = 0; i < 3; ++i) {
                            const int v = c.at(i).get<int>();
                            if (v < 0 || v > 255) throw Error(Errc::Validation, "style.color channel outside 0-255");
                            rc.style.color[i] = static_cast<std::uint8_t>(v);
                        }
                    }
                }
                a.config = rc;
            } else {
                throw Error(Errc::Validation, "unknown activity kind: " + kind);
            }
            def.activities.push_back(std::move(a));
        }
    } catch (const json::exception& e) {
        throw Error(Errc::Validation, std::string("pipeline schema: ") + e.what());
    }
    return def;
}

ordered_json to_json(const PipelineRun& run) {
    ordered_json j;
    j["run_id"] = run.run_id;
    j["pipeline"] = run.pipeline;
    j["trigger"] = ordered_json{{"name", run.trigger.name}, {"kind", run.trigger.kind}};
    j["parameters"] = run.parameters;
    j["status"] = to_string(run.status);
    j["activities"] = ordered_json::array();
    for (const auto& a : run.activities) {
        ordered_json aj{{"name", a.name}, {"status", to_string(a.status)}, {"attempts", a.attempts}};
        put_time(aj, "started_at", a.started_at);
        put_time(aj, "ended_at", a.ended_at);
        if (a.error) aj["error"] = *a.error;
        j["activities"].push_back(aj);
    }
    j["created_at"] = format_rfc3339(run.created_at);
    put_time(j, "started_at", run.started_at);
    put_time(j, "ended_at", run.ended_at);
    if (run.error) j["error"] = *run.error;
    return j;
}

PipelineRun run_from_json(const json& j) {
    PipelineRun run;
    try {
        run.run_id = j.at("run_id").get<std::string>();
        run.pipeline = j.at("pipeline").get<std::string>();
        run.trigger.name = j.at("trigger").at("name").get<std::string>();
        run.trigger.kind = j.at("trigger").at("kind").get<std::string>();
        run.parameters = j.at("parameters").get<ParameterMap>();
        run.status = parse_run_status(j.at("status").get<std::string>());
        for (const auto& aj : j.at("activities")) {
            ActivityRecord a;
            a.name = aj.at("name").get<std::string>();
            a.status = parse_activity_status(aj.at("status").get<std::string>());
            a.attempts = aj.value("attempts", 0);
            a.started_at = opt_time(aj, "started_at");
            a.ended_at = opt_time(aj, "ended_at");
            if (aj.contains("error")) a.error = aj.at("error").get<std::string>();
            run.activities.push_back(std::move(a));
        }
        run.created_at = parse_rfc3339(j.at("created_at").get<std::string>());
        run.started_at = opt_time(j, "started_at");
        run.ended_at = opt_time(j, "ended_at");
        if (j.contains("error")) run.error = j.at("error").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(Errc::Parse, std::string("run record: ") + e.what());
    }
    return run;
}

}  // namespace bloompipe

namespace bloompipe {

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
    std::string out = "invalid pipeline";
    for (const auto& p : problems) out += "; " + p;
    return out;
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> problems)
    : Error(Errc::Validation, join_problems(problems)), problems_(std::move(problems)) {}

}  // namespace bloompipe

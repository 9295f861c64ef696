// pipectl: operator CLI for the store, orchestrator and detector services.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "bloompipe/client.hpp"
#include "bloompipe/error.hpp"
#include "bloompipe/evaluation.hpp"
#include "bloompipe/pipeline.hpp"
#include "json.hpp"

using namespace bloompipe;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct Globals {
    std::string store_url;
    std::string orch_url;
    std::string detector_url;
    bool json_out = false;
};

std::string env_or(const char* name, const char* fallback) {
    const char* v = std::getenv(name);
    return v && *v ? v : fallback;
}

std::string read_text(const std::string& path) {
    if (path == "-") return std::string(std::istreambuf_iterator<char>(std::cin), {});
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::InvalidArgument, "cannot read " + path);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

json read_json(const std::string& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw Error(Errc::Parse, path + ": " + e.what());
    }
}

template <typename J>
void print_json(const J& j) {
    std::cout << j.dump(2) << '\n';
}

std::string cell(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return "-";
    if (j[key].is_string()) return j[key].get<std::string>();
    return j[key].dump();
}

void print_runs_table(const json& runs) {
    std::printf("%-28s %-20s %-11s %-24s %s\n", "RUN", "PIPELINE", "STATUS", "CREATED", "TRIGGER");
    for (const auto& r : runs) {
        const auto trigger = r.contains("trigger") ? cell(r["trigger"], "name") : "-";
        std::printf("%-28s %-20s %-11s %-24s %s\n", cell(r, "run_id").c_str(), cell(r, "pipeline").c_str(),
                    cell(r, "status").c_str(), cell(r, "created_at").c_str(), trigger.c_str());
    }
}

void print_run(const json& r) {
    std::printf("run       %s\npipeline  %s\nstatus    %s\ncreated   %s\nstarted   %s\nended     %s\n",
                cell(r, "run_id").c_str(), cell(r, "pipeline").c_str(), cell(r, "status").c_str(),
                cell(r, "created_at").c_str(), cell(r, "started_at").c_str(), cell(r, "ended_at").c_str());
    if (r.contains("error") && !r["error"].is_null()) std::printf("error     %s\n", cell(r, "error").c_str());
    std::printf("\n%-20s %-11s %-8s %-24s %-24s %s\n", "ACTIVITY", "STATUS", "ATTEMPTS", "STARTED", "ENDED", "ERROR");
    for (const auto& a : r.value("activities", json::array())) {
        std::printf("%-20s %-11s %-8s %-24s %-24s %s\n", cell(a, "name").c_str(), cell(a, "status").c_str(),
                    cell(a, "attempts").c_str(), cell(a, "started_at").c_str(), cell(a, "ended_at").c_str(),
                    cell(a, "error").c_str());
    }
}

std::map<std::string, std::string> parse_params(const std::vector<std::string>& items) {
    std::map<std::string, std::string> out;
    for (const auto& item : items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--param", "expected key=value, got " + item);
        out[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pipectl: manage the image pipeline services"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    g.store_url = env_or("PIPE_STORE_URL", "http://127.0.0.1:8081");
    g.orch_url = env_or("PIPE_ORCH_URL", "http://127.0.0.1:8082");
    g.detector_url = env_or("PIPE_DETECTOR_URL", "http://127.0.0.1:8083");
    app.add_option("--store-url", g.store_url, "Store service URL (PIPE_STORE_URL)");
    app.add_option("--orch-url", g.orch_url, "Orchestrator URL (PIPE_ORCH_URL)");
    app.add_option("--detector-url", g.detector_url, "Detector service URL (PIPE_DETECTOR_URL)");
    app.add_flag("--json", g.json_out, "Machine-readable output");

    std::function<void()> action;

    // store
    auto* store = app.add_subcommand("store", "Blob store operations");
    store->require_subcommand(1);
    std::string container, path, file, prefix, content_type, out_file;

    auto* put = store->add_subcommand("put", "Upload a file as a blob");
    put->add_option("--container", container)->required();
    put->add_option("--path", path)->required();
    put->add_option("file", file)->required();
    put->add_option("--content-type", content_type);
    put->callback([&] {
        action = [&] {
            auto bytes = read_text(file);
            if (content_type.empty()) {
                const auto ext = std::filesystem::path(file).extension().string();
                content_type = ext == ".png" ? "image/png"
                               : (ext == ".jpg" || ext == ".jpeg") ? "image/jpeg"
                               : ext == ".json" ? "application/json"
                                                : "application/octet-stream";
            }
            const auto info = StoreClient(g.store_url).put_blob(container, path, std::move(bytes), content_type);
            if (g.json_out) {
                print_json(ordered_json{{"container", info.container}, {"path", info.path}, {"size", info.size},
                                        {"version", info.version}});
            } else {
                std::printf("%s/%s  %llu bytes  v%llu\n", info.container.c_str(), info.path.c_str(),
                            static_cast<unsigned long long>(info.size), static_cast<unsigned long long>(info.version));
            }
        };
    });

    auto* get = store->add_subcommand("get", "Download a blob");
    get->add_option("--container", container)->required();
    get->add_option("--path", path)->required();
    get->add_option("-o,--output", out_file, "Write to file instead of stdout");
    get->callback([&] {
        action = [&] {
            const auto blob = StoreClient(g.store_url).get_blob(container, path);
            if (out_file.empty()) {
                std::cout.write(blob.bytes.data(), static_cast<std::streamsize>(blob.bytes.size()));
            } else {
                std::ofstream out(out_file, std::ios::binary);
                out.write(blob.bytes.data(), static_cast<std::streamsize>(blob.bytes.size()));
                if (!out) throw Error(Errc::StorageFailure, "cannot write " + out_file);
            }
        };
    });

    auto* ls = store->add_subcommand("ls", "List blobs");
    ls->add_option("--container", container)->required();
    ls->add_option("--prefix", prefix);
    ls->callback([&] {
        action = [&] {
            const auto blobs = StoreClient(g.store_url).list_blobs(container, prefix);
            if (g.json_out) {
                auto arr = ordered_json::array();
                for (const auto& b : blobs) {
                    arr.push_back({{"path", b.path}, {"size", b.size}, {"version", b.version},
                                   {"content_type", b.content_type}, {"created_at", format_rfc3339(b.created_at)}});
                }
                print_json(arr);
                return;
            }
            for (const auto& b : blobs) {
                std::printf("%10llu  %-24s  %s\n", static_cast<unsigned long long>(b.size),
                            format_rfc3339(b.created_at).c_str(), b.path.c_str());
            }
        };
    });

    auto* rm = store->add_subcommand("rm", "Delete a blob");
    rm->add_option("--container", container)->required();
    rm->add_option("--path", path)->required();
    rm->callback([&] { action = [&] { StoreClient(g.store_url).delete_blob(container, path); }; });

    std::string name;
    auto* mk = store->add_subcommand("mkcontainer", "Create a container");
    mk->add_option("name", name)->required();
    mk->callback([&] {
        action = [&] {
            StoreClient(g.store_url).create_container(name);
            if (g.json_out) print_json(ordered_json{{"name", name}});
        };
    });

    // pipeline
    auto* pipeline = app.add_subcommand("pipeline", "Pipeline definitions");
    pipeline->require_subcommand(1);
    auto* papply = pipeline->add_subcommand("apply", "Create or replace a pipeline");
    papply->add_option("-f,--file", file, "Definition JSON ('-' for stdin)")->required();
    papply->callback([&] {
        action = [&] {
            const auto res = OrchestratorClient(g.orch_url).apply_pipeline(read_json(file));
            if (g.json_out) print_json(res);
            else std::printf("pipeline %s applied\n", res.value("name", "?").c_str());
        };
    });
    auto* pls = pipeline->add_subcommand("ls", "List pipelines");
    pls->callback([&] {
        action = [&] {
            const auto res = OrchestratorClient(g.orch_url).pipelines();
            if (g.json_out) return print_json(res);
            for (const auto& p : res) {
                std::string kinds;
                for (const auto& a : p.value("activities", json::array())) {
                    if (!kinds.empty()) kinds += " -> ";
                    kinds += a.value("name", "?");
                }
                std::printf("%-24s %s\n", p.value("name", "?").c_str(), kinds.c_str());
            }
        };
    });

    // trigger
    auto* trigger = app.add_subcommand("trigger", "Event and schedule triggers");
    trigger->require_subcommand(1);
    auto* tapply = trigger->add_subcommand("apply", "Register a trigger");
    tapply->add_option("-f,--file", file, "TriggerSpec JSON ('-' for stdin)")->required();
    tapply->callback([&] {
        action = [&] {
            const auto res = OrchestratorClient(g.orch_url).apply_trigger(read_json(file));
            if (g.json_out) print_json(res);
            else std::printf("trigger %s registered\n", res.value("name", "?").c_str());
        };
    });
    for (const bool enable : {true, false}) {
        auto* sub = trigger->add_subcommand(enable ? "enable" : "disable", enable ? "Enable a trigger" : "Disable a trigger");
        sub->add_option("name", name)->required();
        sub->callback([&, enable] {
            action = [&, enable] {
                const auto res = OrchestratorClient(g.orch_url).set_trigger_enabled(name, enable);
                if (g.json_out) print_json(res);
            };
        });
    }
    auto* tls = trigger->add_subcommand("ls", "List triggers");
    tls->callback([&] {
        action = [&] {
            const auto res = OrchestratorClient(g.orch_url).triggers();
            if (g.json_out) return print_json(res);
            std::printf("%-20s %-9s %-20s %-8s %-7s %-24s\n", "NAME", "KIND", "PIPELINE", "ENABLED", "FIRES", "NEXT");
            for (const auto& t : res) {
                std::printf("%-20s %-9s %-20s %-8s %-7s %-24s\n", cell(t, "name").c_str(), cell(t, "kind").c_str(),
                            cell(t, "pipeline").c_str(), cell(t, "enabled").c_str(), cell(t, "fire_count").c_str(),
                            cell(t, "next_fire").c_str());
            }
        };
    });

    // run
    auto* run = app.add_subcommand("run", "Start pipeline runs");
    run->require_subcommand(1);
    std::vector<std::string> params;
    double wait_s = 0;
    auto* rstart = run->add_subcommand("start", "Start a run manually");
    rstart->add_option("pipeline", name)->required();
    rstart->add_option("-p,--param", params, "Parameter key=value (repeatable)");
    rstart->add_option("--wait", wait_s, "Poll until the run ends or this many seconds pass");
    rstart->callback([&] {
        action = [&] {
            OrchestratorClient orch(g.orch_url);
            const auto id = orch.start_run(name, parse_params(params));
            if (wait_s <= 0) {
                if (g.json_out) print_json(ordered_json{{"run_id", id}});
                else std::printf("%s\n", id.c_str());
                return;
            }
            const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(wait_s);
            json r = orch.get_run(id);
            while (r["status"] != "Succeeded" && r["status"] != "Failed" &&
                   std::chrono::steady_clock::now() < deadline) {
                std::this_thread::sleep_for(std::chrono::milliseconds(100));
                r = orch.get_run(id);
            }
            if (g.json_out) print_json(r);
            else print_run(r);
            if (r["status"] != "Succeeded") throw Error(Errc::Http, "run " + id + " ended " + r["status"].dump());
        };
    });

    // runs
    auto* runs = app.add_subcommand("runs", "Run history");
    runs->require_subcommand(1);
    std::string f_pipeline, f_status, f_since;
    std::size_t f_limit = 50, f_offset = 0;
    auto* rls = runs->add_subcommand("ls", "List runs, newest first");
    rls->add_option("--pipeline", f_pipeline);
    rls->add_option("--status", f_status)->check(CLI::IsMember({"Queued", "InProgress", "Succeeded", "Failed"}));
    rls->add_option("--since", f_since, "RFC 3339 UTC timestamp");
    rls->add_option("--limit", f_limit, "0 for all")->capture_default_str();
    rls->add_option("--offset", f_offset);
    rls->callback([&] {
        action = [&] {
            std::map<std::string, std::string> q{{"limit", std::to_string(f_limit)}, {"offset", std::to_string(f_offset)}};
            if (!f_pipeline.empty()) q["pipeline"] = f_pipeline;
            if (!f_status.empty()) q["status"] = f_status;
            if (!f_since.empty()) q["since"] = f_since;
            const auto page = OrchestratorClient(g.orch_url).list_runs(q);
            if (g.json_out) return print_json(page);
            print_runs_table(page["runs"]);
            std::printf("(%zu of %s)\n", page["runs"].size(), cell(page, "total").c_str());
        };
    });
    std::string run_id;
    auto* rshow = runs->add_subcommand("show", "Show one run with its activities");
    rshow->add_option("run_id", run_id)->required();
    rshow->callback([&] {
        action = [&] {
            const auto r = OrchestratorClient(g.orch_url).get_run(run_id);
            if (g.json_out) print_json(r);
            else print_run(r);
        };
    });
    auto* dead = runs->add_subcommand("dead-letters", "Undeliverable events as JSON lines");
    dead->callback([&] {
        action = [&] {
            for (const auto& d : OrchestratorClient(g.orch_url).dead_letters()) std::cout << d.dump() << '\n';
        };
    });

    // ingest
    IngestPlan plan;
    std::string mode = "async";
    auto* ing = app.add_subcommand("ingest", "Upload a directory of files");
    ing->add_option("--dir", plan.source_dir)->required()->check(CLI::ExistingDirectory);
    ing->add_option("--container", plan.container)->required();
    ing->add_option("--prefix", plan.prefix, "Blob path prefix");
    ing->add_option("--mode", mode)->check(CLI::IsMember({"sync", "async"}))->capture_default_str();
    ing->add_option("-c,--concurrency", plan.concurrency)->check(CLI::PositiveNumber)->capture_default_str();
    bool per_file = false;
    ing->add_flag("--files", per_file, "Include per-file results in --json output");
    ing->callback([&] {
        action = [&] {
            plan.mode = mode == "sync" ? IngestMode::Sync : IngestMode::Async;
            const auto summary = ingest(g.store_url, plan);
            if (g.json_out) {
                print_json(to_json(summary, per_file));
            } else {
                for (const auto& f : summary.files) {
                    if (!f.ok) std::fprintf(stderr, "failed %s: %s\n", f.file.c_str(), f.reason.c_str());
                }
                std::printf("%zu succeeded, %zu failed, %llu bytes in %.3f s\n", summary.succeeded, summary.failed,
                            static_cast<unsigned long long>(summary.bytes), summary.wall.count());
            }
            if (summary.failed > 0) throw Error(Errc::Http, std::to_string(summary.failed) + " file(s) failed");
        };
    });

    // bench
    auto* bench = app.add_subcommand("bench", "Benchmarks");
    bench->require_subcommand(1);
    std::filesystem::path bench_dir;
    std::string bench_container;
    int bench_c = 64;
    std::optional<std::int64_t> latency_ms;
    auto* bing = bench->add_subcommand("ingest", "Sync vs async ingestion over the same files");
    bing->add_option("--dir", bench_dir)->required()->check(CLI::ExistingDirectory);
    bing->add_option("--container", bench_container)->required();
    bing->add_option("-c,--concurrency", bench_c)->check(CLI::PositiveNumber)->capture_default_str();
    bing->add_option("--latency-ms", latency_ms, "Injected store latency per PUT (store test mode)");
    bing->callback([&] {
        action = [&] {
            std::optional<Millis> latency;
            if (latency_ms) latency = Millis{*latency_ms};
            const auto report = bench_ingest(g.store_url, bench_dir, bench_container, bench_c, latency);
            if (g.json_out) return print_json(to_json(report));
            std::printf("files %zu  bytes %llu  latency %lld ms  concurrency %d\n", report.files,
                        static_cast<unsigned long long>(report.bytes), static_cast<long long>(report.latency.count()),
                        report.concurrency);
            std::printf("sync   %8.3f s  %8.1f files/s\n", report.sync.wall.count(), report.sync.files_per_s);
            std::printf("async  %8.3f s  %8.1f files/s\n", report.async.wall.count(), report.async.files_per_s);
            std::printf("speedup %.2fx  (bounds: sync %s, async %s)\n", report.speedup,
                        report.sync_bound_ok ? "ok" : "violated", report.async_bound_ok ? "ok" : "violated");
        };
    });

    // eval
    std::filesystem::path pred_dir, gt_file;
    std::string report_out;
    double iou = kDefaultIouThreshold;
    bool strict = false;
    auto* ev = app.add_subcommand("eval", "Score predictions against ground truth");
    ev->add_option("--pred", pred_dir, "Directory of detection JSON files")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--gt", gt_file, "Ground-truth annotations JSON")->required()->check(CLI::ExistingFile);
    ev->add_option("--iou", iou)->capture_default_str();
    ev->add_option("--out", report_out, "Write the report JSON here");
    ev->add_flag("--strict", strict, "Fail on predictions for images without ground truth");
    ev->callback([&] {
        action = [&] {
            const auto report = evaluate_corpus(pred_dir, gt_file, iou, strict);
            const auto j = report_to_json(report);
            if (!report_out.empty()) {
                std::ofstream out(report_out);
                out << j.dump(2) << '\n';
                if (!out) throw Error(Errc::StorageFailure, "cannot write " + report_out);
            }
            if (g.json_out) return print_json(j);
            std::printf("iou>=%.2f  tp %zu  fp %zu  fn %zu\nprecision %.4f  recall %.4f  f1 %.4f  ap %.4f  mAP %.4f\n",
                        report.iou_threshold, report.counts.tp, report.counts.fp, report.counts.fn, report.precision,
                        report.recall, report.f1, report.ap, report.map);
        };
    });

    // pool
    auto* pool = app.add_subcommand("pool", "Compute pool");
    pool->require_subcommand(1);
    auto* pstatus = pool->add_subcommand("status", "Current pool state");
    pstatus->callback([&] {
        action = [&] {
            const auto s = OrchestratorClient(g.orch_url).pool();
            if (g.json_out) return print_json(s);
            std::printf("phase %s  workers %s  running %s  queued %s  last activity %s\n", cell(s, "phase").c_str(),
                        cell(s, "active_workers").c_str(), cell(s, "running_tasks").c_str(),
                        cell(s, "queued_tasks").c_str(), cell(s, "last_activity_at").c_str());
        };
    });

    // detect
    std::string hint;
    auto* det = app.add_subcommand("detect", "Send one image to the detector service");
    det->add_option("file", file)->required()->check(CLI::ExistingFile);
    det->add_option("--filename", hint, "X-Filename hint (defaults to the file name)");
    det->callback([&] {
        action = [&] {
            if (hint.empty()) hint = std::filesystem::path(file).filename().string();
            const auto result = score_remote(g.detector_url, env_or("DETECTOR_KEY", ""), read_text(file), hint);
            if (g.json_out) return print_json(detection_result_to_json(result));
            for (const auto& d : result.boxes) {
                std::printf("%-8s %.3f  [%.4f, %.4f, %.4f, %.4f]\n", d.label.c_str(), d.score, d.box.top_x,
                            d.box.top_y, d.box.bottom_x, d.box.bottom_y);
            }
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 2;
    }

    try {
        if (action) action();
        return 0;
    } catch (const CLI::ValidationError& e) {
        std::cerr << "pipectl: " << e.what() << '\n';
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "pipectl: validation failed\n";
        for (const auto& p : e.problems()) std::cerr << "  - " << p << '\n';
        return 1;
    } catch (const Error& e) {
        std::cerr << "pipectl: " << to_string(e.code()) << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "pipectl: " << e.what() << '\n';
        return 1;
    }
}

#include "coe/servesim.hpp"

#include <algorithm>
#include <fstream>
#include <list>

#include <json.hpp>

namespace coe {

using nlohmann::json;

double copy_time_sec(double params_billions, double bytes_per_param,
                     double bandwidth_bytes_per_sec) {
    if (!(params_billions > 0) || !(bytes_per_param > 0) || !(bandwidth_bytes_per_sec > 0))
        fail(ErrorCategory::validation, "copy_time requires positive inputs");
    return params_billions * 1e9 * bytes_per_param / bandwidth_bytes_per_sec;
}

double expert_footprint_bytes(const Expert& expert, double bytes_per_param) {
    return expert.params_billions * 1e9 * bytes_per_param;
}

std::vector<double> default_token_latencies(const ExpertCatalog& catalog) {
    // 8B runs at ~300 tokens/s, i.e. 3 ms/token; scale linearly with size.
    std::vector<double> latencies;
    latencies.reserve(catalog.size());
    for (const auto& e : catalog.experts) latencies.push_back(0.003 * e.params_billions / 8.0);
    return latencies;
}

std::size_t resident_expert_capacity(std::uint64_t hbm_capacity_bytes, double footprint_bytes) {
    if (!(footprint_bytes > 0)) fail(ErrorCategory::validation, "footprint must be positive");
    return static_cast<std::size_t>(static_cast<double>(hbm_capacity_bytes) / footprint_bytes);
}

void validate_memory_config(const MemoryConfig& config, const ExpertCatalog& catalog) {
    if (!(config.ddr_bandwidth_bytes_per_sec > 0))
        fail(ErrorCategory::validation, "ddr bandwidth must be positive");
    if (!(config.bytes_per_param > 0))
        fail(ErrorCategory::validation, "bytes_per_param must be positive");
    if (config.per_token_latency_sec.size() != catalog.size())
        fail(ErrorCategory::validation, "per_token_latency_sec must have one entry per expert");
    for (double l : config.per_token_latency_sec)
        if (!(l > 0)) fail(ErrorCategory::validation, "per-token latency must be positive");
    for (const auto& e : catalog.experts) {
        if (expert_footprint_bytes(e, config.bytes_per_param) >
            static_cast<double>(config.hbm_capacity_bytes))
            fail(ErrorCategory::validation,
                 "expert '" + e.name + "' does not fit in HBM and is unservable");
    }
    double preload_bytes = 0.0;
    for (std::size_t j : config.preload) {
        if (j >= catalog.size())
            fail(ErrorCategory::validation, "preload expert index out of range");
        preload_bytes += expert_footprint_bytes(catalog.at(j), config.bytes_per_param);
    }
    if (preload_bytes > static_cast<double>(config.hbm_capacity_bytes))
        fail(ErrorCategory::validation, "preloaded experts exceed HBM capacity");
}

SimReport simulate(std::span<const TraceEvent> trace, const MemoryConfig& config,
                   const ExpertCatalog& catalog) {
    validate_memory_config(config, catalog);
    for (std::size_t i = 0; i < trace.size(); ++i) {
        if (trace[i].expert >= catalog.size())
            fail(ErrorCategory::validation, "trace expert index out of range");
        if (trace[i].output_tokens == 0)
            fail(ErrorCategory::validation, "trace event with zero output tokens");
        if (trace[i].arrival_time_sec < 0 ||
            (i > 0 && trace[i].arrival_time_sec < trace[i - 1].arrival_time_sec))
            fail(ErrorCategory::validation, "trace arrival times must be non-decreasing");
    }

    std::vector<double> footprint(catalog.size());
    for (std::size_t j = 0; j < catalog.size(); ++j)
        footprint[j] = expert_footprint_bytes(catalog.at(j), config.bytes_per_param);

    SimReport report;
    report.per_request.reserve(trace.size());
    report.per_expert_load.assign(catalog.size(), 0);

    // HBM residency, most recently used at the front.
    std::list<std::size_t> resident;
    double used_bytes = 0.0;
    for (std::size_t j : config.preload) {
        resident.remove(j);
        resident.push_front(j);
    }
    for (std::size_t j : resident) used_bytes += footprint[j];
    double server_free = 0.0;
    std::size_t hits = 0;

    for (const auto& event : trace) {
        const double start = std::max(event.arrival_time_sec, server_free);
        RequestTiming timing;
        timing.queue_wait = start - event.arrival_time_sec;

        auto it = std::find(resident.begin(), resident.end(), event.expert);
        if (it != resident.end()) {
            timing.hbm_hit = true;
            ++hits;
            resident.erase(it);
            resident.push_front(event.expert);
        } else {
            while (used_bytes + footprint[event.expert] >
                       static_cast<double>(config.hbm_capacity_bytes) &&
                   !resident.empty()) {
                used_bytes -= footprint[resident.back()];
                resident.pop_back();
            }
            resident.push_front(event.expert);
            used_bytes += footprint[event.expert];
            timing.copy_time = footprint[event.expert] / config.ddr_bandwidth_bytes_per_sec;
            report.copy_count++;
            report.copy_seconds += timing.copy_time;
        }

        timing.generation_time = static_cast<double>(event.output_tokens) *
                                 config.per_token_latency_sec[event.expert];
        timing.completion_time = start + timing.copy_time + timing.generation_time;
        server_free = timing.completion_time;

        report.tokens += event.output_tokens;
        report.per_expert_load[event.expert]++;
        report.per_request.push_back(timing);
    }

    report.makespan = server_free;
    report.hbm_hit_rate =
        trace.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(trace.size());
    return report;
}

TieredComparison gpu_vs_tiered_report(std::span<const TraceEvent> trace,
                                      const MemoryConfig& gpu_config,
                                      const MemoryConfig& tiered_config,
                                      const ExpertCatalog& catalog) {
    TieredComparison cmp;
    cmp.gpu = simulate(trace, gpu_config, catalog);
    cmp.tiered = simulate(trace, tiered_config, catalog);
    cmp.makespan_ratio = cmp.tiered.makespan > 0 ? cmp.gpu.makespan / cmp.tiered.makespan : 0.0;
    cmp.copy_ratio =
        cmp.tiered.copy_seconds > 0 ? cmp.gpu.copy_seconds / cmp.tiered.copy_seconds : 0.0;
    return cmp;
}

std::vector<TraceEvent> load_trace(const std::filesystem::path& path,
                                   const ExpertCatalog& catalog) {
    std::ifstream in(path);
    if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
    std::vector<TraceEvent> trace;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            fail(ErrorCategory::format,
                 path.string() + ":" + std::to_string(lineno) + ": malformed trace event");
        TraceEvent event;
        event.arrival_time_sec = j.at("arrival_time_sec").get<double>();
        auto expert = catalog.index_of(j.at("expert").get<std::string>());
        if (!expert)
            fail(ErrorCategory::validation, path.string() + ":" + std::to_string(lineno) +
                                                ": unknown expert in trace");
        event.expert = *expert;
        event.output_tokens = j.at("output_tokens").get<std::uint64_t>();
        trace.push_back(event);
    }
    return trace;
}

void save_trace(std::span<const TraceEvent> trace, const ExpertCatalog& catalog,
                const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCategory::io, "cannot write " + path.string());
    for (const auto& event : trace) {
        out << json{{"arrival_time_sec", event.arrival_time_sec},
                    {"expert", catalog.at(event.expert).name},
                    {"output_tokens", event.output_tokens}}
                   .dump()
            << '\n';
    }
    if (!out) fail(ErrorCategory::io, "write failed for " + path.string());
}

void save_report(const SimReport& report, const ExpertCatalog& catalog,
                 const std::filesystem::path& path) {
    json per_expert;
    for (std::size_t j = 0; j < report.per_expert_load.size(); ++j)
        per_expert[catalog.at(j).name] = report.per_expert_load[j];
    json j{{"requests", report.per_request.size()},
           {"copy_count", report.copy_count},
           {"copy_seconds", report.copy_seconds},
           {"tokens", report.tokens},
           {"makespan", report.makespan},
           {"hbm_hit_rate", report.hbm_hit_rate},
           {"per_expert_load", per_expert}};
    std::ofstream out(path);
    if (!out) fail(ErrorCategory::io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) fail(ErrorCategory::io, "write failed for " + path.string());
}

void save_report_csv(const SimReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCategory::io, "cannot write " + path.string());
    out << "request,queue_wait,copy_time,generation_time,completion_time,hbm_hit\n";
    for (std::size_t i = 0; i < report.per_request.size(); ++i) {
        const auto& r = report.per_request[i];
        out << i << ',' << r.queue_wait << ',' << r.copy_time << ',' << r.generation_time << ','
            << r.completion_time << ',' << (r.hbm_hit ? 1 : 0) << '\n';
    }
    if (!out) fail(ErrorCategory::io, "write failed for " + path.string());
}

}  // namespace coe

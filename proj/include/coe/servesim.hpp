#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "coe/corpus.hpp"

namespace coe {

/// 2^30 bytes; the serving arithmetic is pinned to binary GB so the published
/// copy costs (233 ms over 64 GB/s, 19 ms over 800 GB/s for an 8B expert at
/// 2 bytes per parameter) come out exactly.
inline constexpr double kGiB = 1073741824.0;

inline constexpr double gib_per_sec(double gib) { return gib * kGiB; }

/// Two-tier memory model: all expert weights live in DDR; HBM is an
/// LRU-managed cache of whole experts, refilled at the DDR bandwidth.
struct MemoryConfig {
    std::uint64_t hbm_capacity_bytes = 0;
    double ddr_bandwidth_bytes_per_sec = 0.0;
    double bytes_per_param = 2.0;
    std::vector<double> per_token_latency_sec;  // one entry per catalog expert
    std::vector<std::size_t> preload;  // experts resident at t=0, most recent last
};

/// Seconds to stream one expert's weights across the given bandwidth.
double copy_time_sec(double params_billions, double bytes_per_param,
                     double bandwidth_bytes_per_sec);

double expert_footprint_bytes(const Expert& expert, double bytes_per_param);

/// Token latency heuristic: 3 ms/token for an 8B expert, linear in size.
std::vector<double> default_token_latencies(const ExpertCatalog& catalog);

/// How many experts of the given footprint fit in an HBM region.
std::size_t resident_expert_capacity(std::uint64_t hbm_capacity_bytes, double footprint_bytes);

struct TraceEvent {
    double arrival_time_sec = 0.0;
    std::size_t expert = 0;
    std::uint64_t output_tokens = 0;
};

struct RequestTiming {
    double queue_wait = 0.0;
    double copy_time = 0.0;        // 0 on an HBM hit
    double generation_time = 0.0;
    double completion_time = 0.0;
    bool hbm_hit = false;
};

struct SimReport {
    std::vector<RequestTiming> per_request;
    std::size_t copy_count = 0;
    double copy_seconds = 0.0;
    std::uint64_t tokens = 0;
    double makespan = 0.0;          // completion time of the last request
    double hbm_hit_rate = 0.0;
    std::vector<std::size_t> per_expert_load;
};

void validate_memory_config(const MemoryConfig& config, const ExpertCatalog& catalog);

/// Single-server FIFO replay: a request waits for the server, pays the copy
/// cost when its expert is not resident (evicting LRU experts to make room),
/// then generates tokens at the expert's per-token latency.
SimReport simulate(std::span<const TraceEvent> trace, const MemoryConfig& config,
                   const ExpertCatalog& catalog);

struct TieredComparison {
    SimReport gpu;
    SimReport tiered;
    double makespan_ratio = 0.0;  // gpu / tiered
    double copy_ratio = 0.0;      // gpu copy seconds / tiered copy seconds
};

TieredComparison gpu_vs_tiered_report(std::span<const TraceEvent> trace,
                                      const MemoryConfig& gpu_config,
                                      const MemoryConfig& tiered_config,
                                      const ExpertCatalog& catalog);

// Trace files are line-delimited JSON objects with keys arrival_time_sec,
// expert (catalog name) and output_tokens.
std::vector<TraceEvent> load_trace(const std::filesystem::path& path,
                                   const ExpertCatalog& catalog);
void save_trace(std::span<const TraceEvent> trace, const ExpertCatalog& catalog,
                const std::filesystem::path& path);

void save_report(const SimReport& report, const ExpertCatalog& catalog,
                 const std::filesystem::path& path);
void save_report_csv(const SimReport& report, const std::filesystem::path& path);

}  // namespace coe

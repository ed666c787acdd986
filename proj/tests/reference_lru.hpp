#pragma once

#include <map>
#include <span>
#include <vector>

#include "coe/corpus.hpp"
#include "coe/servesim.hpp"

namespace coe::testing {

/// Independently coded reference LRU replay used as the simulator oracle.
/// Residency is a map from expert to a last-use counter and the victim is
/// found by a linear scan, rather than the recency list the production
/// simulator keeps. Arithmetic matches the model definition exactly so the
/// comparison is event-for-event equality.
struct ReferenceLruSim {
    std::map<std::size_t, std::uint64_t> last_use;
    std::uint64_t clock = 0;

    struct Step {
        double queue_wait, copy_time, generation_time, completion_time;
        bool hit;
    };

    std::vector<Step> run(std::span<const TraceEvent> trace, const MemoryConfig& config,
                          const ExpertCatalog& catalog) {
        std::vector<Step> steps;
        double busy_until = 0.0;
        double resident_bytes = 0.0;
        for (const auto& event : trace) {
            Step step{};
            const double begin =
                event.arrival_time_sec > busy_until ? event.arrival_time_sec : busy_until;
            step.queue_wait = begin - event.arrival_time_sec;
            const double bytes =
                catalog.at(event.expert).params_billions * 1e9 * config.bytes_per_param;
            if (last_use.count(event.expert)) {
                step.hit = true;
                step.copy_time = 0.0;
            } else {
                while (resident_bytes + bytes > double(config.hbm_capacity_bytes) &&
                       !last_use.empty()) {
                    auto victim = last_use.begin();
                    for (auto it = last_use.begin(); it != last_use.end(); ++it)
                        if (it->second < victim->second) victim = it;
                    resident_bytes -=
                        catalog.at(victim->first).params_billions * 1e9 * config.bytes_per_param;
                    last_use.erase(victim);
                }
                resident_bytes += bytes;
                step.copy_time = bytes / config.ddr_bandwidth_bytes_per_sec;
            }
            last_use[event.expert] = clock++;
            step.generation_time =
                double(event.output_tokens) * config.per_token_latency_sec[event.expert];
            step.completion_time = begin + step.copy_time + step.generation_time;
            busy_until = step.completion_time;
            steps.push_back(step);
        }
        return steps;
    }
};

}  // namespace coe::testing

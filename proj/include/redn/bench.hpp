#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "redn/cost_model.hpp"
#include "redn/engine.hpp"

namespace redn {

// Nearest-rank summary statistics over latency samples (microseconds).
struct LatencyStats {
    std::size_t count = 0;
    double mean = 0.0;
    double median = 0.0;
    double p99 = 0.0;
    double min = 0.0;
    double max = 0.0;
};

// Nearest-rank percentile: the ceil(p*n)-th smallest sample. For [1,2,3,4]
// the median is 2. Throws InvalidArgument on empty input.
LatencyStats summarize(std::vector<double> samples);

struct BenchRow {
    std::string scenario;
    std::string param;
    LatencyStats stats;
    double ops_s = 0.0;
};

std::string to_csv(const std::vector<BenchRow>& rows);   // scenario,param,mean_us,median_us,p99_us,ops_s
std::string to_json(const std::vector<BenchRow>& rows);

struct BenchConfig {
    CostModel model;
    std::uint64_t seed = 1;
    std::uint64_t value_size = 64;
    std::vector<unsigned> writer_counts = {0, 1, 4, 16};
    double duration_s = 10.0;
    double crash_at_s = 3.0;
    std::uint32_t ports = 1;
    std::size_t samples = 1000;
    double time_cap_us = 1e6;
};

// --- closed-form latency models (all in µs) -------------------------------

// One network READ of `bytes`: full read latency plus the streaming term.
double ideal_read_latency_us(const CostModel& m, std::uint64_t bytes);
// Offloaded GET: trigger-to-response constant plus streaming of the value.
double redn_get_latency_us(const CostModel& m, std::uint64_t bytes);
// One-sided design: READ of `neighborhood` 32B bucket slots, then READ of
// the value (skipped when the key is absent).
double one_sided_get_latency_us(const CostModel& m, std::uint64_t bytes, bool found = true,
                                unsigned neighborhood = 6);
// Two-sided RPC: trigger + CPU service + dispatch overhead, no contention.
double two_sided_base_latency_us(const CostModel& m, std::uint64_t bytes, bool polling);
// Adds per-writer exponential queueing delay on top of the base latency.
std::vector<double> two_sided_latency_samples(const CostModel& m, std::uint64_t bytes,
                                              bool polling, unsigned n_writers,
                                              std::size_t count, std::uint64_t seed);

// --- engine-backed measurements --------------------------------------------

// One offloaded hash GET on a fresh engine; returns the response latency and
// the trace text (for isolation-invariance checks).
struct EngineGetSample {
    double latency_us = 0.0;
    bool found = false;
    std::string trace_text;
};
EngineGetSample engine_hash_get_once(const BenchConfig& cfg, bool parallel, bool collide);

// --- crash timeline ---------------------------------------------------------

struct CrashSeries {
    double bucket_s = 0.1;
    std::vector<double> direct_ops;     // ops completed per bucket, direct mode
    std::vector<double> fork_hull_ops;  // same with NIC-resident resources
    double direct_outage_s = 0.0;       // span of zero-throughput buckets
    bool fork_hull_has_empty_interval = false;
};
CrashSeries run_crash_timeline(const BenchConfig& cfg);

// --- scenario runners (CSV rows) -------------------------------------------

std::vector<BenchRow> bench_ordering(const BenchConfig& cfg);
std::vector<BenchRow> bench_hash_latency(const BenchConfig& cfg);
std::vector<BenchRow> bench_hash_collision(const BenchConfig& cfg);
std::vector<BenchRow> bench_list(const BenchConfig& cfg);

struct ContentionResult {
    std::vector<BenchRow> rows;
    std::vector<std::string> redn_traces;  // one per writer count, all identical
    double ratio_p99 = 0.0;                // two-sided p99 / offload p99 at max writers
};
ContentionResult bench_contention(const BenchConfig& cfg);

std::vector<BenchRow> bench_crash(const BenchConfig& cfg);
std::vector<BenchRow> bench_throughput(const BenchConfig& cfg);

std::vector<BenchRow> run_scenario(const std::string& name, const BenchConfig& cfg);

}  // namespace redn

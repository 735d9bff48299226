#include "redn/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "redn/offloads.hpp"

#include "json.hpp"

namespace redn {

LatencyStats summarize(std::vector<double> samples) {
    if (samples.empty())
        throw Error(ErrorKind::InvalidArgument, "summarize needs at least one sample");
    std::sort(samples.begin(), samples.end());
    auto nearest_rank = [&](double p) {
        std::size_t rank = static_cast<std::size_t>(std::ceil(p * samples.size()));
        if (rank == 0) rank = 1;
        return samples[rank - 1];
    };
    LatencyStats s;
    s.count = samples.size();
    s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / samples.size();
    s.median = nearest_rank(0.5);
    s.p99 = nearest_rank(0.99);
    s.min = samples.front();
    s.max = samples.back();
    return s;
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

BenchRow row(std::string scenario, std::string param, const std::vector<double>& samples,
             double ops_s = 0.0) {
    BenchRow r;
    r.scenario = std::move(scenario);
    r.param = std::move(param);
    r.stats = summarize(samples);
    r.ops_s = ops_s;
    return r;
}

}  // namespace

std::string to_csv(const std::vector<BenchRow>& rows) {
    std::string out = "scenario,param,mean_us,median_us,p99_us,ops_s\n";
    for (const auto& r : rows)
        out += r.scenario + "," + r.param + "," + fmt(r.stats.mean) + "," + fmt(r.stats.median) +
               "," + fmt(r.stats.p99) + "," + fmt(r.ops_s) + "\n";
    return out;
}

std::string to_json(const std::vector<BenchRow>& rows) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : rows)
        arr.push_back({{"scenario", r.scenario},
                       {"param", r.param},
                       {"mean_us", r.stats.mean},
                       {"median_us", r.stats.median},
                       {"p99_us", r.stats.p99},
                       {"ops_s", r.ops_s}});
    return arr.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Closed-form latency models
// ---------------------------------------------------------------------------

double ideal_read_latency_us(const CostModel& m, std::uint64_t bytes) {
    return m.read_exec_us + m.stream_us(bytes);
}

double redn_get_latency_us(const CostModel& m, std::uint64_t bytes) {
    return m.offload_trigger_us + m.stream_us(bytes);
}

double one_sided_get_latency_us(const CostModel& m, std::uint64_t bytes, bool found,
                                unsigned neighborhood) {
    double metadata = m.read_exec_us + m.stream_us(neighborhood * 32ull);
    if (!found) return metadata;
    return metadata + m.read_exec_us + m.stream_us(bytes);
}

double two_sided_base_latency_us(const CostModel& m, std::uint64_t bytes, bool polling) {
    double dispatch = polling ? m.polling_overhead_us : m.event_wakeup_us;
    return m.offload_trigger_us + m.rpc_service_us + dispatch + m.stream_us(bytes);
}

std::vector<double> two_sided_latency_samples(const CostModel& m, std::uint64_t bytes,
                                              bool polling, unsigned n_writers,
                                              std::size_t count, std::uint64_t seed) {
    double base = two_sided_base_latency_us(m, bytes, polling);
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> backlog(1.0);
    std::vector<double> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        double queueing =
            n_writers == 0 ? 0.0 : m.contention_base_us * n_writers * backlog(rng);
        out.push_back(base + queueing);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Engine-backed one-shot GET
// ---------------------------------------------------------------------------

EngineGetSample engine_hash_get_once(const BenchConfig& cfg, bool parallel, bool collide) {
    Engine e(cfg.model, cfg.seed);
    HostId server = e.add_host("server", 4 << 20);
    HostId client = e.add_host("client", 1 << 20);
    HashTable table = create_hash_table(e, server, 64, cfg.seed * 7 + 1);

    std::uint64_t key = 1;
    while (table.bucket_addr(0, key) == table.bucket_addr(1, key)) ++key;
    if (collide) {
        // Occupy the first-choice bucket so the key lands at its second.
        std::uint64_t dummy = key + 1;
        e.mem_write_be(server, table.bucket_addr(0, key), dummy, 6);
    }
    hash_insert(e, table, key, std::vector<std::uint8_t>(cfg.value_size, 0xAB));

    OffloadProgram prog = setup_hash_get(e, table, client, parallel);
    GetResult res = hash_get(e, prog, table, key, cfg.time_cap_us);

    EngineGetSample s;
    s.latency_us = res.latency_us;
    s.found = res.found;
    s.trace_text = e.trace().to_text();
    return s;
}

// ---------------------------------------------------------------------------
// Crash timeline
// ---------------------------------------------------------------------------

CrashSeries run_crash_timeline(const BenchConfig& cfg) {
    Engine probe(cfg.model, cfg.seed);
    double rate =
        probe.throughput_estimate(2, 1, 3, cfg.value_size, cfg.ports).ops_per_s;

    CrashSeries s;
    std::size_t buckets = static_cast<std::size_t>(std::llround(cfg.duration_s / s.bucket_s));
    double outage_start = cfg.crash_at_s;
    double outage_end = cfg.crash_at_s + cfg.model.bootstrap_s + cfg.model.rebuild_s;
    for (std::size_t i = 0; i < buckets; ++i) {
        double t0 = i * s.bucket_s;
        double t1 = t0 + s.bucket_s;
        // Direct mode: process crash tears registrations down; service is out
        // until the process bootstraps and rebuilds its offload programs.
        double down = std::max(0.0, std::min(t1, outage_end) - std::max(t0, outage_start));
        double up = s.bucket_s - down;
        if (up < s.bucket_s * 1e-9) up = 0.0;  // swallow float residue on full outages
        s.direct_ops.push_back(rate * up);
        // NIC-resident resources survive the process crash.
        s.fork_hull_ops.push_back(rate * s.bucket_s);
    }
    std::size_t zero_buckets = 0;
    for (double v : s.direct_ops)
        if (v == 0.0) ++zero_buckets;
    s.direct_outage_s = zero_buckets * s.bucket_s;
    for (double v : s.fork_hull_ops)
        if (v == 0.0) s.fork_hull_has_empty_interval = true;
    return s;
}

// ---------------------------------------------------------------------------
// Scenario runners
// ---------------------------------------------------------------------------

std::vector<BenchRow> bench_ordering(const BenchConfig& cfg) {
    Engine e(cfg.model, cfg.seed);
    std::vector<BenchRow> rows;
    const std::pair<FetchMode, const char*> modes[] = {
        {FetchMode::batch, "wq_order"},
        {FetchMode::completion_order, "completion_order"},
        {FetchMode::doorbell_order, "doorbell_order"},
    };
    for (auto [mode, name] : modes)
        for (std::uint32_t n = 1; n <= 16; ++n)
            rows.push_back(row("ordering", std::string(name) + ":n=" + std::to_string(n),
                               {e.chain_latency(n, mode)}));
    return rows;
}

std::vector<BenchRow> bench_hash_latency(const BenchConfig& cfg) {
    std::vector<BenchRow> rows;
    for (std::uint64_t size : {std::uint64_t{64}, std::uint64_t{1024}, std::uint64_t{4096},
                               std::uint64_t{65536}}) {
        std::string sz = std::to_string(size);
        rows.push_back(row("hash-lat", "redn:" + sz, {redn_get_latency_us(cfg.model, size)}));
        rows.push_back(
            row("hash-lat", "ideal_read:" + sz, {ideal_read_latency_us(cfg.model, size)}));
        rows.push_back(
            row("hash-lat", "one_sided:" + sz, {one_sided_get_latency_us(cfg.model, size)}));
        rows.push_back(row("hash-lat", "two_sided_polling:" + sz,
                           {two_sided_base_latency_us(cfg.model, size, true)}));
        rows.push_back(row("hash-lat", "two_sided_event:" + sz,
                           {two_sided_base_latency_us(cfg.model, size, false)}));
    }
    return rows;
}

std::vector<BenchRow> bench_hash_collision(const BenchConfig& cfg) {
    std::vector<BenchRow> rows;
    rows.push_back(row("hash-collision", "parallel:bucket1",
                       {engine_hash_get_once(cfg, true, false).latency_us}));
    rows.push_back(row("hash-collision", "parallel:bucket2",
                       {engine_hash_get_once(cfg, true, true).latency_us}));
    rows.push_back(row("hash-collision", "sequential:bucket1",
                       {engine_hash_get_once(cfg, false, false).latency_us}));
    rows.push_back(row("hash-collision", "sequential:bucket2",
                       {engine_hash_get_once(cfg, false, true).latency_us}));
    return rows;
}

std::vector<BenchRow> bench_list(const BenchConfig& cfg) {
    std::vector<BenchRow> rows;
    std::vector<double> break_wrs, nobreak_wrs;
    for (unsigned pos = 1; pos <= kListLength; ++pos) {
        for (bool with_break : {true, false}) {
            Engine e(cfg.model, cfg.seed + pos);
            HostId server = e.add_host("server", 4 << 20);
            HostId client = e.add_host("client", 1 << 20);
            std::vector<std::uint64_t> keys;
            std::vector<std::vector<std::uint8_t>> values;
            for (unsigned i = 0; i < kListLength; ++i) {
                keys.push_back(1000 + i);
                values.push_back(std::vector<std::uint8_t>(cfg.value_size,
                                                           static_cast<std::uint8_t>(i)));
            }
            LinkedList list = create_linked_list(e, server, keys, values);
            OffloadProgram prog = setup_list_traverse(e, list, client, with_break);
            GetResult res = list_get(e, prog, keys[pos - 1], cfg.time_cap_us);
            (with_break ? break_wrs : nobreak_wrs)
                .push_back(static_cast<double>(res.executed_wrs));
            rows.push_back(row("list",
                               std::string(with_break ? "break" : "no_break") +
                                   ":pos=" + std::to_string(pos),
                               {res.latency_us}, static_cast<double>(res.executed_wrs)));
        }
    }
    rows.push_back(row("list", "break:wrs", break_wrs));
    rows.push_back(row("list", "no_break:wrs", nobreak_wrs));
    return rows;
}

ContentionResult bench_contention(const BenchConfig& cfg) {
    ContentionResult out;
    std::vector<double> redn_samples(cfg.samples, redn_get_latency_us(cfg.model, cfg.value_size));
    double redn_p99 = summarize(redn_samples).p99;
    double last_two_sided_p99 = 0.0;
    for (unsigned n : cfg.writer_counts) {
        // The offload path never touches the server CPU, so its engine trace
        // cannot depend on the writer count.
        out.redn_traces.push_back(engine_hash_get_once(cfg, true, false).trace_text);
        std::vector<double> two_sided = two_sided_latency_samples(
            cfg.model, cfg.value_size, true, n, cfg.samples, cfg.seed + 17);
        out.rows.push_back(row("contention", "redn:writers=" + std::to_string(n), redn_samples));
        BenchRow r = row("contention", "two_sided_polling:writers=" + std::to_string(n),
                         two_sided);
        last_two_sided_p99 = r.stats.p99;
        out.rows.push_back(r);
    }
    out.ratio_p99 = last_two_sided_p99 / redn_p99;
    out.rows.push_back(row("contention", "p99_ratio", {out.ratio_p99}));
    return out;
}

std::vector<BenchRow> bench_crash(const BenchConfig& cfg) {
    CrashSeries s = run_crash_timeline(cfg);
    std::vector<BenchRow> rows;
    rows.push_back(row("crash", "direct:bucket_ops", s.direct_ops,
                       *std::min_element(s.direct_ops.begin(), s.direct_ops.end())));
    rows.push_back(row("crash", "fork_hull:bucket_ops", s.fork_hull_ops,
                       *std::min_element(s.fork_hull_ops.begin(), s.fork_hull_ops.end())));
    rows.push_back(row("crash", "direct:outage_s", {s.direct_outage_s}));
    return rows;
}

std::vector<BenchRow> bench_throughput(const BenchConfig& cfg) {
    Engine e(cfg.model, cfg.seed);
    std::vector<BenchRow> rows;
    struct Mix {
        const char* name;
        std::uint32_t c, a, o;
        std::uint64_t bytes;
        std::uint32_t ports;
    };
    const Mix mixes[] = {
        {"hash_get:64B:1port", 2, 1, 3, 64, 1},
        {"hash_get:1KB:1port", 2, 1, 3, 1024, 1},
        {"hash_get:64KB:1port", 2, 1, 3, 65536, 1},
        {"hash_get:64KB:2port", 2, 1, 3, 65536, 2},
        {"if_construct:1port", 1, 1, 3, 8, 1},
        {"recycled_loop:1port", 3, 2, 4, 8, 1},
    };
    for (const Mix& m : mixes) {
        ThroughputEstimate t = e.throughput_estimate(m.c, m.a, m.o, m.bytes, m.ports);
        rows.push_back(row("throughput", std::string(m.name) + "(" + t.bottleneck + ")", {0.0},
                           t.ops_per_s));
    }
    return rows;
}

std::vector<BenchRow> run_scenario(const std::string& name, const BenchConfig& cfg) {
    if (name == "ordering") return bench_ordering(cfg);
    if (name == "hash-lat") return bench_hash_latency(cfg);
    if (name == "hash-collision") return bench_hash_collision(cfg);
    if (name == "list") return bench_list(cfg);
    if (name == "contention") return bench_contention(cfg).rows;
    if (name == "crash") return bench_crash(cfg);
    if (name == "throughput") return bench_throughput(cfg);
    throw Error(ErrorKind::InvalidArgument, "unknown scenario: " + name);
}

}  // namespace redn

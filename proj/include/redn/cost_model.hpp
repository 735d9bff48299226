#pragma once

#include <cstdint>
#include <string>

#include "redn/wr.hpp"

namespace redn {

// How a work request was fetched by a processing unit. The ordering modes
// have different per-verb costs: a batch-prefetched WR is cheapest, a WR
// released by a completion (WAIT) pays a completion-order increment, and a
// WR fetched one-at-a-time from a managed queue (prefetch disabled) pays a
// doorbell-order increment.
enum class FetchMode { batch, completion_order, doorbell_order };

// Calibrated per-verb latency/throughput constants for the simulated NIC,
// plus closed-form helpers for end-to-end benchmark scenarios. All values
// are loadable from a key=value config file; unknown keys are rejected.
struct CostModel {
    // Base latency of a host doorbell ringing a single NOOP, in µs.
    double doorbell_mmio_us = 1.21;
    // Marginal cost of one extra verb within a chain, by ordering mode.
    double per_verb_wq_order_us = 0.17;
    double per_verb_completion_order_us = 0.19;
    double per_verb_doorbell_order_us = 0.54;
    // One-way wire latency between hosts.
    double network_one_way_us = 0.25;
    // Full execution latency of the first verb after an idle doorbell.
    double write_exec_us = 1.6;
    double read_exec_us = 1.8;
    double atomic_exec_us = 1.8;
    double calc_exec_us = 1.8;
    // Per-byte streaming terms. bandwidth_limit_gbps bounds sustained
    // throughput; latency_stream_gbps converts payload size into the
    // marginal latency of one transfer (lower: includes PCIe + DMA setup).
    double bandwidth_limit_gbps = 92.0;
    double latency_stream_gbps = 36.5;
    // End-to-end closed-form constants for benchmark scenarios.
    double offload_trigger_us = 1.88;   // client SEND -> offloaded response visible
    double rpc_service_us = 0.6;        // server-CPU request handling
    double polling_overhead_us = 1.0;   // busy-poll dispatch cost
    double event_wakeup_us = 4.7;       // interrupt/event-channel wakeup cost
    double contention_base_us = 0.85;   // per-competing-writer queueing scale
    // Throughput model.
    double order_verb_pu_us = 0.12;     // PU cost of a WAIT/ENABLE verb
    double pcie_gbps = 100.0;           // host PCIe ceiling (dual-port NICs)
    double atomic_rate_cap = 8.4e6;     // NIC-wide atomics per second
    double copy_rate_cap = 63.0e6;      // NIC-wide copy verbs per second
    std::uint32_t pu_count_per_port = 8;
    // Failover model, in seconds.
    double bootstrap_s = 1.0;
    double rebuild_s = 1.25;

    // Full (idle-path) execution latency of one verb, excluding bytes.
    double verb_exec_us(Opcode op) const;
    // Marginal execution cost of a verb beyond its ordering increment.
    double exec_extra_us(Opcode op) const;
    // Per-verb ordering increment for a given fetch mode.
    double order_increment_us(FetchMode mode) const;
    // Latency contribution of streaming `bytes` payload bytes.
    double stream_us(std::uint64_t bytes) const;
    // Latency of a doorbelled chain of n like verbs in one ordering mode:
    // full first-verb latency plus (n-1) ordering increments.
    double chain_latency_us(std::uint32_t n, Opcode op, FetchMode mode) const;

    // Load key=value overrides from a config file. Blank lines and lines
    // starting with '#' are ignored. Throws ParseError on unknown keys or
    // malformed values.
    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);
};

}  // namespace redn

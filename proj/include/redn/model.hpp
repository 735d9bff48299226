#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "redn/wr.hpp"

namespace redn {

using HostId = std::uint16_t;
using WqId = std::uint16_t;
using QpId = std::uint16_t;
using RegionKey = std::uint32_t;

enum class RegionKind { code, data };
enum class ResourceMode { direct, fork_hull };

struct AccessFlags {
    bool read = true;
    bool write = true;
    bool atomic = true;
};

struct MemoryRegion {
    HostId host = 0;
    std::uint64_t base = 0;
    std::uint64_t length = 0;
    RegionKey key = 0;  // random token, unique across the simulation
    AccessFlags access;
    RegionKind kind = RegionKind::data;

    bool contains(std::uint64_t addr, std::uint64_t len) const {
        return addr >= base && len <= length && addr - base <= length - len;
    }
};

struct Host {
    HostId host_id = 0;
    std::vector<std::uint8_t> memory;
    std::vector<MemoryRegion> regions;
    bool alive = true;
    bool regions_revoked = false;  // direct-mode crash tears down registrations
    ResourceMode resource_mode = ResourceMode::direct;
    std::uint64_t alloc_watermark = 0;  // bump allocator for queues/tables
    std::string name;
};

// Circular buffer of WRs in (registered) host memory. Logical indices are
// monotone; slot of logical index i is i % capacity.
struct WorkQueue {
    WqId wq_id = 0;
    HostId host_id = 0;
    MemoryRegion buffer_region;  // capacity * 64B, kind=code
    std::uint32_t capacity = 0;
    bool managed = false;
    bool recycled = false;  // permits logical indices past posted_count
    std::uint64_t posted_count = 0;
    std::uint64_t head_fetch_index = 0;  // next logical index to fetch
    std::uint64_t enabled_through = 0;   // managed: fetch i requires enabled_through > i
    std::uint64_t doorbelled_through = 0;
    std::optional<QpId> qp;  // bound queue pair, for SEND routing
    std::uint16_t assigned_pu = 0;

    std::uint64_t slot_addr(std::uint64_t logical_index) const {
        return buffer_region.base + (logical_index % capacity) * kWrSize;
    }
};

struct CompletionEntry {
    WqId wq_id = 0;
    std::uint64_t wr_logical_index = 0;
    double timestamp_us = 0.0;
    bool ok = true;
    std::string status;
};

struct CompletionQueue {
    WqId wq_id = 0;  // one CQ per WQ in this model
    std::uint64_t count = 0;  // monotone completion counter (WAIT targets)
    std::vector<CompletionEntry> entries;
};

// Reliable, fixed-latency pipe. SEND on the client side consumes posted
// RECVs on the server side in posting order, and vice versa.
struct QueuePair {
    QpId qp_id = 0;
    HostId client_host = 0;
    HostId server_host = 0;
    WqId send_wq = 0;  // client-side send queue
    WqId recv_wq = 0;  // server-side receive queue
    double link_latency_us = -1.0;  // <0: use cost model default
};

}  // namespace redn

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "redn/cost_model.hpp"
#include "redn/error.hpp"
#include "redn/model.hpp"
#include "redn/wr.hpp"

namespace redn {

// Why a work request executed (who handed it to a processing unit).
enum class Initiator { doorbell, prefetch, wait_release, enable_release, recv_arrival };

enum class FaultKind {
    none,
    out_of_bounds,
    access_denied,
    no_posted_recv,
    dead_host,
    scatter_overflow,
    wait_deadlock,
};

const char* fault_kind_name(FaultKind kind);
const char* initiator_name(Initiator initiator);

enum class CrashMode { process_crash_direct, process_crash_fork_hull, os_panic };

struct ThroughputEstimate {
    double ops_per_s = 0.0;
    std::string bottleneck;  // "NIC PU", "IB bw", "PCIe bw", "atomic cap", "copy cap"
};

struct TraceEntry {
    double time_us = 0.0;
    HostId host = 0;
    WqId wq = 0;
    std::uint64_t logical_index = 0;
    Opcode opcode = Opcode::NOOP;
    std::uint64_t wr_id = 0;
    std::uint32_t length = 0;
    Initiator initiator = Initiator::doorbell;
    FetchMode fetch_mode = FetchMode::batch;
    FaultKind fault = FaultKind::none;
    bool completion_emitted = false;
    std::string note;
};

struct ExecutionTrace {
    std::vector<TraceEntry> entries;
    std::vector<std::string> faults;  // human-readable fault log

    // Payload work requests only: everything a processing unit executed
    // except the WAIT/ENABLE ordering verbs.
    std::size_t executed_payload_count() const;
    std::size_t count_opcode(Opcode op) const;
    std::string to_text() const;
};

struct QuiescenceReport {
    double end_time_us = 0.0;
    bool time_cap_hit = false;
    // WQs that still had a fetched-but-blocked WAIT at quiescence. A
    // pending WAIT is normal for loop programs that break out early.
    std::vector<std::pair<WqId, std::uint64_t>> blocked_waits;
};

// Deterministic discrete-event model of a multi-host RDMA fabric with one
// simulated NIC per host. Work queues live in registered host memory, so
// verbs that write queue memory reprogram pending work requests; managed
// queues fetch one WR at a time (prefetch disabled) and therefore always
// observe such modifications, while unmanaged queues snapshot a doorbelled
// batch up front.
class Engine {
  public:
    explicit Engine(CostModel model = CostModel(), std::uint64_t seed = 1);

    // --- topology -----------------------------------------------------
    HostId add_host(std::string name, std::uint64_t memory_bytes,
                    ResourceMode mode = ResourceMode::direct);
    // Carve `length` bytes out of unallocated host memory and register it.
    MemoryRegion allocate_region(HostId host, std::uint64_t length,
                                 RegionKind kind = RegionKind::data,
                                 AccessFlags access = AccessFlags{});
    // Register an explicit range. Overlap with an existing region is
    // rejected, except that code regions may alias other code regions
    // (a work queue published as a data sink is still one buffer).
    MemoryRegion register_memory_region(HostId host, std::uint64_t base,
                                        std::uint64_t length, RegionKind kind,
                                        AccessFlags access = AccessFlags{},
                                        RegionKey forced_key = 0);
    WqId create_work_queue(HostId host, std::uint32_t capacity, bool managed,
                           bool recycled = false);
    // Wrap a queue around an explicit buffer range (program-file rebuilds).
    WqId create_work_queue_at(HostId host, std::uint64_t base, std::uint32_t capacity,
                              bool managed, bool recycled = false, RegionKey buffer_key = 0);
    QpId create_queue_pair(HostId client, WqId send_wq, HostId server, WqId recv_wq);

    // --- host-side operations ------------------------------------------
    // Append one WR to the queue buffer; returns its logical index. Does
    // not notify the NIC (ring_doorbell does). Recycled queues may keep
    // posting past capacity as long as old slots have executed.
    std::uint64_t post_work_request(WqId wq, const WrDescriptor& wr);
    // Notify the NIC that the next `count` posted WRs are ready (default:
    // everything posted so far).
    void ring_doorbell(WqId wq, std::uint64_t count = UINT64_MAX);
    // Raise enabled_through on a managed queue from the host side (the
    // NIC-side equivalent is an ENABLE verb).
    void host_enable(WqId wq, std::uint64_t count);
    // Crash a host. Default mode follows the host's resource_mode;
    // os_panic behaves like fork_hull (the NIC keeps running on its own).
    void crash_host(HostId host, std::optional<CrashMode> mode = std::nullopt);

    // --- memory access (host CPU view, zero simulated cost) ------------
    void mem_write(HostId host, std::uint64_t addr, const void* data, std::uint64_t len);
    void mem_read(HostId host, std::uint64_t addr, void* data, std::uint64_t len) const;
    std::uint64_t mem_read_u64(HostId host, std::uint64_t addr) const;
    void mem_write_u64(HostId host, std::uint64_t addr, std::uint64_t value);
    void mem_write_be(HostId host, std::uint64_t addr, std::uint64_t value, unsigned bytes);
    std::uint64_t mem_read_be(HostId host, std::uint64_t addr, unsigned bytes) const;

    // --- simulation -----------------------------------------------------
    // Drain all runnable events. Returns when nothing can make progress
    // or virtual time exceeds `time_cap_us` (0 = no cap).
    QuiescenceReport run_until_quiescent(double time_cap_us = 0.0);
    double now() const { return now_us_; }

    // Peak sustainable rate of a chain with the given verb mix, with the
    // limiting factor named. `ports` is 1 or 2; `payload_bytes` is the
    // wire payload per operation.
    ThroughputEstimate throughput_estimate(std::uint32_t copy_verbs, std::uint32_t atomic_verbs,
                                           std::uint32_t order_verbs, std::uint64_t payload_bytes,
                                           std::uint32_t ports = 1) const;
    // Closed-form latency of an n-NOOP chain in one ordering mode; matches
    // trace timestamps exactly.
    double chain_latency(std::uint32_t n, FetchMode mode) const;

    const ExecutionTrace& trace() const { return trace_; }
    void clear_trace() { trace_.entries.clear(); trace_.faults.clear(); }
    const CostModel& cost_model() const { return model_; }
    CostModel& cost_model() { return model_; }

    const Host& host(HostId id) const;
    const WorkQueue& work_queue(WqId id) const;
    const CompletionQueue& completion_queue(WqId id) const;
    const QueuePair& queue_pair(QpId id) const;
    std::size_t host_count() const { return hosts_.size(); }
    std::size_t work_queue_count() const { return wqs_.size(); }
    std::size_t queue_pair_count() const { return qps_.size(); }
    std::optional<std::pair<HostId, MemoryRegion>> resolve_key(RegionKey key) const;
    std::mt19937_64& rng() { return rng_; }

  private:
    struct Event {
        double time_us;
        WqId wq;
        std::uint64_t logical_index;
        std::uint64_t seq;
        std::function<void()> action;
        bool operator>(const Event& other) const {
            if (time_us != other.time_us) return time_us > other.time_us;
            if (wq != other.wq) return wq > other.wq;
            if (logical_index != other.logical_index) return logical_index > other.logical_index;
            return seq > other.seq;
        }
    };
    struct PendingWait {
        std::uint64_t logical_index = 0;
        WqId target_wq = 0;
        std::uint64_t threshold = 0;  // CQ count required to release
        bool active = false;
    };
    struct WqRuntime {
        // Unmanaged: snapshot of WRs taken at doorbell time. A snapshot is
        // what makes later in-place edits of those slots invisible
        // (prefetch incoherence); managed queues re-read memory per fetch.
        std::deque<std::pair<std::uint64_t, WrDescriptor>> batch;
        std::deque<std::uint64_t> recv_pending;  // posted, unconsumed RECVs
        PendingWait wait;
        bool pu_busy = false;
        bool halted = false;
        bool after_wait = false;           // next WR pays completion-order cost
        bool first_after_doorbell = false; // initiator tag for the next WR
        bool idle_path = true;  // next fetched WR pays full verb latency
    };

    Host& host_mut(HostId id);
    WorkQueue& wq_mut(WqId id);
    void schedule(double time_us, WqId wq, std::uint64_t idx, std::function<void()> action);
    void try_fetch(WqId wq);  // advance a queue if its head WR is runnable
    WrDescriptor fetch_wr(WorkQueue& q, std::uint64_t logical_index) const;
    void start_wr(WqId wq, std::uint64_t logical_index, const WrDescriptor& wr,
                  Initiator initiator, FetchMode mode);
    void execute_wr(WqId wq, std::uint64_t logical_index, WrDescriptor wr,
                    Initiator initiator, FetchMode mode, double start_us);
    void complete_wr(WqId wq, std::uint64_t logical_index, const WrDescriptor& wr,
                     double time_us, bool ok, const std::string& status);
    void on_completion(WqId wq);
    void deliver_send(QpId qp, WqId sender_wq, std::uint64_t logical_index,
                      WrDescriptor wr, double arrive_us);
    // Resolve one side of a verb: remote if key != 0, else local.
    std::pair<HostId, std::uint64_t> resolve_side(HostId local, std::uint64_t addr,
                                                  std::uint16_t key) const;
    void check_access(HostId host, std::uint64_t addr, std::uint64_t len,
                      bool need_write, bool need_atomic, WqId wq,
                      std::uint64_t idx, Opcode op);
    void record_fault(WqId wq, std::uint64_t idx, Opcode op, FaultKind kind,
                      const std::string& note);

    CostModel model_;
    std::mt19937_64 rng_;
    std::vector<Host> hosts_;
    std::vector<WorkQueue> wqs_;
    std::vector<CompletionQueue> cqs_;
    std::vector<QueuePair> qps_;
    std::vector<WqRuntime> rt_;
    std::unordered_map<RegionKey, std::pair<HostId, std::size_t>> key_map_;
    std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
    double now_us_ = 0.0;
    std::uint64_t event_seq_ = 0;
    ExecutionTrace trace_;
    double time_cap_us_ = 0.0;
    bool cap_hit_ = false;
};

}  // namespace redn

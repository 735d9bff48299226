#include "redn/engine.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

namespace redn {

namespace {
constexpr std::uint64_t kAllocAlign = 64;
}

const char* fault_kind_name(FaultKind kind) {
    switch (kind) {
        case FaultKind::none: return "none";
        case FaultKind::out_of_bounds: return "out_of_bounds";
        case FaultKind::access_denied: return "access_denied";
        case FaultKind::no_posted_recv: return "no_posted_recv";
        case FaultKind::dead_host: return "dead_host";
        case FaultKind::scatter_overflow: return "scatter_overflow";
        case FaultKind::wait_deadlock: return "wait_deadlock";
    }
    return "?";
}

const char* initiator_name(Initiator initiator) {
    switch (initiator) {
        case Initiator::doorbell: return "doorbell";
        case Initiator::prefetch: return "prefetch";
        case Initiator::wait_release: return "wait_release";
        case Initiator::enable_release: return "enable_release";
        case Initiator::recv_arrival: return "recv_arrival";
    }
    return "?";
}

std::size_t ExecutionTrace::executed_payload_count() const {
    std::size_t n = 0;
    for (const auto& e : entries)
        if (!opcode_is_ordering(e.opcode) && e.opcode != Opcode::RECV) ++n;
    return n;
}

std::size_t ExecutionTrace::count_opcode(Opcode op) const {
    std::size_t n = 0;
    for (const auto& e : entries)
        if (e.opcode == op) ++n;
    return n;
}

std::string ExecutionTrace::to_text() const {
    std::ostringstream out;
    for (const auto& e : entries) {
        out << e.time_us << " host=" << e.host << " wq=" << e.wq << " idx=" << e.logical_index
            << " op=" << opcode_name(e.opcode) << " id=" << e.wr_id << " len=" << e.length
            << " via=" << initiator_name(e.initiator);
        if (e.fault != FaultKind::none) out << " fault=" << fault_kind_name(e.fault);
        if (!e.note.empty()) out << " # " << e.note;
        out << "\n";
    }
    for (const auto& f : faults) out << "fault: " << f << "\n";
    return out.str();
}

Engine::Engine(CostModel model, std::uint64_t seed) : model_(std::move(model)), rng_(seed) {}

Host& Engine::host_mut(HostId id) {
    if (id >= hosts_.size()) throw Error(ErrorKind::InvalidArgument, "unknown host");
    return hosts_[id];
}

const Host& Engine::host(HostId id) const {
    if (id >= hosts_.size()) throw Error(ErrorKind::InvalidArgument, "unknown host");
    return hosts_[id];
}

WorkQueue& Engine::wq_mut(WqId id) {
    if (id >= wqs_.size()) throw Error(ErrorKind::InvalidArgument, "unknown work queue");
    return wqs_[id];
}

const WorkQueue& Engine::work_queue(WqId id) const {
    if (id >= wqs_.size()) throw Error(ErrorKind::InvalidArgument, "unknown work queue");
    return wqs_[id];
}

const CompletionQueue& Engine::completion_queue(WqId id) const {
    if (id >= cqs_.size()) throw Error(ErrorKind::InvalidArgument, "unknown work queue");
    return cqs_[id];
}

const QueuePair& Engine::queue_pair(QpId id) const {
    if (id >= qps_.size()) throw Error(ErrorKind::InvalidArgument, "unknown queue pair");
    return qps_[id];
}

HostId Engine::add_host(std::string name, std::uint64_t memory_bytes, ResourceMode mode) {
    Host h;
    h.host_id = static_cast<HostId>(hosts_.size());
    h.memory.assign(memory_bytes, 0);
    h.resource_mode = mode;
    h.name = std::move(name);
    hosts_.push_back(std::move(h));
    return hosts_.back().host_id;
}

MemoryRegion Engine::allocate_region(HostId host_id, std::uint64_t length, RegionKind kind,
                                     AccessFlags access) {
    Host& h = host_mut(host_id);
    std::uint64_t base = (h.alloc_watermark + kAllocAlign - 1) / kAllocAlign * kAllocAlign;
    if (length == 0 || base + length > h.memory.size())
        throw Error(ErrorKind::InsufficientCapacity,
                    "host " + h.name + " cannot allocate " + std::to_string(length) + " bytes");
    h.alloc_watermark = base + length;
    return register_memory_region(host_id, base, length, kind, access);
}

MemoryRegion Engine::register_memory_region(HostId host_id, std::uint64_t base,
                                            std::uint64_t length, RegionKind kind,
                                            AccessFlags access, RegionKey forced_key) {
    Host& h = host_mut(host_id);
    if (!h.alive) throw Error(ErrorKind::DeadHost, "host is down");
    if (length == 0) throw Error(ErrorKind::InvalidCapacity, "empty region");
    if (base + length > h.memory.size() || base + length < base)
        throw Error(ErrorKind::OutOfBounds, "region outside host memory");
    for (const auto& r : h.regions) {
        bool overlap = base < r.base + r.length && r.base < base + length;
        // Code regions may alias each other: a queue buffer is often also
        // published as a remotely writable target.
        if (overlap && !(kind == RegionKind::code && r.kind == RegionKind::code))
            throw Error(ErrorKind::OverlapViolation, "region overlaps an existing registration");
    }
    MemoryRegion region;
    region.host = host_id;
    region.base = base;
    region.length = length;
    region.access = access;
    region.kind = kind;
    if (forced_key != 0) {
        // Rebuilding a serialized program must reproduce the original keys.
        if (key_map_.count(forced_key) != 0)
            throw Error(ErrorKind::InvalidArgument, "requested protection key already in use");
        region.key = forced_key;
    } else {
        // Protection keys travel in a 16-bit WR field, so draw from [1, 0xFFFF].
        std::uniform_int_distribution<std::uint32_t> dist(1, 0xFFFF);
        do {
            region.key = dist(rng_);
        } while (key_map_.count(region.key) != 0);
    }
    key_map_[region.key] = {host_id, h.regions.size()};
    h.regions.push_back(region);
    return region;
}

WqId Engine::create_work_queue(HostId host_id, std::uint32_t capacity, bool managed,
                               bool recycled) {
    if (capacity == 0) throw Error(ErrorKind::InvalidCapacity, "work queue capacity must be > 0");
    if (recycled && !managed)
        throw Error(ErrorKind::InvalidArgument, "recycled queues require managed mode");
    WorkQueue q;
    q.wq_id = static_cast<WqId>(wqs_.size());
    q.host_id = host_id;
    q.capacity = capacity;
    q.managed = managed;
    q.recycled = recycled;
    q.buffer_region =
        allocate_region(host_id, static_cast<std::uint64_t>(capacity) * kWrSize, RegionKind::code);
    q.assigned_pu = static_cast<std::uint16_t>(q.wq_id % model_.pu_count_per_port);
    wqs_.push_back(q);
    CompletionQueue cq;
    cq.wq_id = q.wq_id;
    cqs_.push_back(std::move(cq));
    rt_.emplace_back();
    return q.wq_id;
}

WqId Engine::create_work_queue_at(HostId host_id, std::uint64_t base, std::uint32_t capacity,
                                  bool managed, bool recycled, RegionKey buffer_key) {
    if (capacity == 0) throw Error(ErrorKind::InvalidCapacity, "work queue capacity must be > 0");
    if (recycled && !managed)
        throw Error(ErrorKind::InvalidArgument, "recycled queues require managed mode");
    WorkQueue q;
    q.wq_id = static_cast<WqId>(wqs_.size());
    q.host_id = host_id;
    q.capacity = capacity;
    q.managed = managed;
    q.recycled = recycled;
    q.buffer_region =
        register_memory_region(host_id, base, static_cast<std::uint64_t>(capacity) * kWrSize,
                               RegionKind::code, AccessFlags{}, buffer_key);
    q.assigned_pu = static_cast<std::uint16_t>(q.wq_id % model_.pu_count_per_port);
    wqs_.push_back(q);
    CompletionQueue cq;
    cq.wq_id = q.wq_id;
    cqs_.push_back(std::move(cq));
    rt_.emplace_back();
    return q.wq_id;
}

QpId Engine::create_queue_pair(HostId client, WqId send_wq, HostId server, WqId recv_wq) {
    if (work_queue(send_wq).host_id != client || work_queue(recv_wq).host_id != server)
        throw Error(ErrorKind::InvalidArgument, "queue pair endpoints must live on their hosts");
    QueuePair qp;
    qp.qp_id = static_cast<QpId>(qps_.size());
    qp.client_host = client;
    qp.server_host = server;
    qp.send_wq = send_wq;
    qp.recv_wq = recv_wq;
    qps_.push_back(qp);
    wqs_[send_wq].qp = qp.qp_id;
    wqs_[recv_wq].qp = qp.qp_id;
    return qp.qp_id;
}

std::uint64_t Engine::post_work_request(WqId wq, const WrDescriptor& wr) {
    WorkQueue& q = wq_mut(wq);
    Host& h = host_mut(q.host_id);
    if (!h.alive) throw Error(ErrorKind::DeadHost, "cannot post to a queue on a down host");
    if (q.posted_count - q.head_fetch_index >= q.capacity ||
        (!q.recycled && q.posted_count >= q.capacity))
        throw Error(ErrorKind::QueueFull, "work queue is full");
    std::uint64_t idx = q.posted_count++;
    WrBytes buf = encode_wr(wr);
    mem_write(q.host_id, q.slot_addr(idx), buf.data(), kWrSize);
    if (wr.opcode == Opcode::RECV) rt_[wq].recv_pending.push_back(idx);
    return idx;
}

void Engine::ring_doorbell(WqId wq, std::uint64_t count) {
    WorkQueue& q = wq_mut(wq);
    Host& h = host_mut(q.host_id);
    if (!h.alive) throw Error(ErrorKind::DeadHost, "cannot ring a doorbell on a down host");
    WqRuntime& rt = rt_[wq];
    std::uint64_t upto = q.posted_count;
    if (count != UINT64_MAX && q.doorbelled_through + count < upto)
        upto = q.doorbelled_through + count;
    bool was_idle = !rt.pu_busy && rt.batch.empty() &&
                    (!q.managed || q.head_fetch_index >= q.doorbelled_through);
    if (!q.managed) {
        // Prefetch: the NIC snapshots every newly doorbelled WR now.
        for (std::uint64_t i = q.doorbelled_through; i < upto; ++i)
            rt.batch.emplace_back(i, fetch_wr(q, i));
    }
    q.doorbelled_through = upto;
    if (was_idle) {
        rt.idle_path = true;
        rt.first_after_doorbell = true;
    }
    schedule(now_us_, wq, q.head_fetch_index, [this, wq] { try_fetch(wq); });
}

void Engine::host_enable(WqId wq, std::uint64_t count) {
    WorkQueue& q = wq_mut(wq);
    if (!q.managed) throw Error(ErrorKind::InvalidArgument, "enable applies to managed queues");
    if (!host(q.host_id).alive) throw Error(ErrorKind::DeadHost, "host is down");
    q.enabled_through += count;
    schedule(now_us_, wq, q.head_fetch_index, [this, wq] { try_fetch(wq); });
}

void Engine::crash_host(HostId host_id, std::optional<CrashMode> mode) {
    Host& h = host_mut(host_id);
    if (!h.alive) throw Error(ErrorKind::AlreadyDead, "host already crashed");
    h.alive = false;
    bool direct = mode ? *mode == CrashMode::process_crash_direct
                       : h.resource_mode == ResourceMode::direct;
    if (direct) {
        // Process teardown revokes registrations and aborts its queues.
        h.regions_revoked = true;
        h.regions.clear();
        for (std::size_t i = 0; i < wqs_.size(); ++i)
            if (wqs_[i].host_id == host_id) rt_[i].halted = true;
    }
    // fork_hull mode: the NIC keeps every region and queue alive; only
    // new host-CPU activity is rejected.
}

void Engine::mem_write(HostId host_id, std::uint64_t addr, const void* data, std::uint64_t len) {
    Host& h = host_mut(host_id);
    if (addr + len > h.memory.size() || addr + len < addr)
        throw Error(ErrorKind::OutOfBounds, "memory write outside host memory");
    std::memcpy(h.memory.data() + addr, data, len);
}

void Engine::mem_read(HostId host_id, std::uint64_t addr, void* data, std::uint64_t len) const {
    const Host& h = host(host_id);
    if (addr + len > h.memory.size() || addr + len < addr)
        throw Error(ErrorKind::OutOfBounds, "memory read outside host memory");
    std::memcpy(data, h.memory.data() + addr, len);
}

std::uint64_t Engine::mem_read_be(HostId host_id, std::uint64_t addr, unsigned bytes) const {
    const Host& h = host(host_id);
    if (addr + bytes > h.memory.size())
        throw Error(ErrorKind::OutOfBounds, "memory read outside host memory");
    return load_be(h.memory.data() + addr, bytes);
}

void Engine::mem_write_be(HostId host_id, std::uint64_t addr, std::uint64_t value, unsigned bytes) {
    Host& h = host_mut(host_id);
    if (addr + bytes > h.memory.size())
        throw Error(ErrorKind::OutOfBounds, "memory write outside host memory");
    store_be(h.memory.data() + addr, value, bytes);
}

std::uint64_t Engine::mem_read_u64(HostId host_id, std::uint64_t addr) const {
    return mem_read_be(host_id, addr, 8);
}

void Engine::mem_write_u64(HostId host_id, std::uint64_t addr, std::uint64_t value) {
    mem_write_be(host_id, addr, value, 8);
}

std::optional<std::pair<HostId, MemoryRegion>> Engine::resolve_key(RegionKey key) const {
    auto it = key_map_.find(key);
    if (it == key_map_.end()) return std::nullopt;
    const Host& h = host(it->second.first);
    if (h.regions_revoked || it->second.second >= h.regions.size()) return std::nullopt;
    return std::make_pair(it->second.first, h.regions[it->second.second]);
}

void Engine::schedule(double time_us, WqId wq, std::uint64_t idx, std::function<void()> action) {
    events_.push(Event{time_us, wq, idx, event_seq_++, std::move(action)});
}

WrDescriptor Engine::fetch_wr(WorkQueue& q, std::uint64_t logical_index) const {
    WrBytes buf;
    mem_read(q.host_id, q.slot_addr(logical_index), buf.data(), kWrSize);
    return decode_wr(buf);
}

void Engine::record_fault(WqId wq, std::uint64_t idx, Opcode op, FaultKind kind,
                          const std::string& note) {
    std::ostringstream msg;
    msg << fault_kind_name(kind) << " wq=" << wq << " idx=" << idx << " op=" << opcode_name(op);
    if (!note.empty()) msg << " (" << note << ")";
    trace_.faults.push_back(msg.str());
}

std::pair<HostId, std::uint64_t> Engine::resolve_side(HostId local, std::uint64_t addr,
                                                      std::uint16_t key) const {
    if (key == 0) return {local, addr};
    auto resolved = resolve_key(key);
    if (!resolved) throw Error(ErrorKind::AccessDenied, "unknown or revoked protection key");
    return {resolved->first, addr};
}

void Engine::check_access(HostId host_id, std::uint64_t addr, std::uint64_t len, bool need_write,
                          bool need_atomic, WqId wq, std::uint64_t idx, Opcode op) {
    (void)wq;
    (void)idx;
    (void)op;
    const Host& h = host(host_id);
    if (h.regions_revoked) throw Error(ErrorKind::AccessDenied, "host registrations revoked");
    if (addr + len > h.memory.size() || addr + len < addr)
        throw Error(ErrorKind::OutOfBounds, "access outside host memory");
    // Region permission flags only bind remote accesses, which arrive with
    // a protection key; callers resolve the key before this check.
    (void)need_write;
    (void)need_atomic;
}

void Engine::try_fetch(WqId wq) {
    WorkQueue& q = wq_mut(wq);
    WqRuntime& rt = rt_[wq];
    if (rt.halted) return;
    for (;;) {
        if (rt.pu_busy) return;
        std::uint64_t idx = 0;
        WrDescriptor wr;
        if (q.managed) {
            idx = q.head_fetch_index;
            bool in_range = q.recycled ? true : idx < q.doorbelled_through;
            if (!in_range || q.enabled_through <= idx) {
                rt.idle_path = true;
                return;
            }
            wr = fetch_wr(q, idx);
        } else {
            if (rt.batch.empty()) {
                rt.idle_path = true;
                return;
            }
            idx = rt.batch.front().first;
            wr = rt.batch.front().second;
        }
        auto advance = [&] {
            if (q.managed)
                ++q.head_fetch_index;
            else {
                rt.batch.pop_front();
                ++q.head_fetch_index;
            }
        };
        if (wr.opcode == Opcode::RECV) {
            // RECVs are consumed by message arrival, not by a processing
            // unit; skip past them.
            advance();
            continue;
        }
        if (wr.opcode == Opcode::WAIT) {
            const CompletionQueue& cq = completion_queue(static_cast<WqId>(wr.target_wq));
            if (cq.count >= wr.wqe_count) {
                advance();
                TraceEntry e;
                e.time_us = now_us_;
                e.host = q.host_id;
                e.wq = wq;
                e.logical_index = idx;
                e.opcode = Opcode::WAIT;
                e.wr_id = wr.id;
                e.initiator = Initiator::wait_release;
                e.fetch_mode = q.managed ? FetchMode::doorbell_order : FetchMode::batch;
                e.completion_emitted = wr.signaled;
                trace_.entries.push_back(std::move(e));
                rt.after_wait = true;
                if (wr.signaled) complete_wr(wq, idx, wr, now_us_, true, "");
                continue;
            }
            rt.wait = PendingWait{idx, static_cast<WqId>(wr.target_wq), wr.wqe_count, true};
            return;
        }
        if (wr.opcode == Opcode::ENABLE) {
            advance();
            TraceEntry e;
            e.time_us = now_us_;
            e.host = q.host_id;
            e.wq = wq;
            e.logical_index = idx;
            e.opcode = Opcode::ENABLE;
            e.wr_id = wr.id;
            e.initiator = rt.after_wait ? Initiator::wait_release : Initiator::enable_release;
            e.completion_emitted = wr.signaled;
            trace_.entries.push_back(std::move(e));
            WqId target = static_cast<WqId>(wr.target_wq);
            if (target < wqs_.size() && wqs_[target].managed) {
                wqs_[target].enabled_through += wr.wqe_count;
                schedule(now_us_, target, wqs_[target].head_fetch_index,
                         [this, target] { try_fetch(target); });
            }
            if (wr.signaled) complete_wr(wq, idx, wr, now_us_, true, "");
            continue;
        }
        // A payload verb: occupy the processing unit until it commits.
        FetchMode mode = rt.after_wait ? FetchMode::completion_order
                                       : (q.managed ? FetchMode::doorbell_order : FetchMode::batch);
        Initiator initiator = Initiator::prefetch;
        if (rt.first_after_doorbell)
            initiator = Initiator::doorbell;
        else if (rt.after_wait)
            initiator = Initiator::wait_release;
        else if (q.managed)
            initiator = Initiator::enable_release;
        rt.after_wait = false;
        rt.first_after_doorbell = false;
        advance();
        start_wr(wq, idx, wr, initiator, mode);
        return;
    }
}

void Engine::start_wr(WqId wq, std::uint64_t logical_index, const WrDescriptor& wr,
                      Initiator initiator, FetchMode mode) {
    WqRuntime& rt = rt_[wq];
    rt.pu_busy = true;
    double latency;
    if (rt.idle_path) {
        latency = model_.verb_exec_us(wr.opcode) + model_.stream_us(wr.length);
        rt.idle_path = false;
    } else {
        latency = model_.order_increment_us(mode) + model_.exec_extra_us(wr.opcode) +
                  model_.stream_us(wr.length);
    }
    double commit = now_us_ + latency;
    schedule(commit, wq, logical_index, [this, wq, logical_index, wr, initiator, mode, commit] {
        execute_wr(wq, logical_index, wr, initiator, mode, commit);
    });
}

void Engine::execute_wr(WqId wq, std::uint64_t logical_index, WrDescriptor wr,
                        Initiator initiator, FetchMode mode, double start_us) {
    (void)start_us;
    WorkQueue& q = wq_mut(wq);
    WqRuntime& rt = rt_[wq];
    rt.pu_busy = false;
    TraceEntry e;
    e.time_us = now_us_;
    e.host = q.host_id;
    e.wq = wq;
    e.logical_index = logical_index;
    e.opcode = wr.opcode;
    e.wr_id = wr.id;
    e.length = static_cast<std::uint32_t>(wr.length);
    e.initiator = initiator;
    e.fetch_mode = mode;
    bool ok = true;
    std::string status;
    try {
        switch (wr.opcode) {
            case Opcode::NOOP:
                break;
            case Opcode::WRITE: {
                auto [dhost, daddr] = resolve_side(q.host_id, wr.dst_addr, wr.remote_key);
                check_access(q.host_id, wr.src_addr, wr.length, false, false, wq, logical_index,
                             wr.opcode);
                check_access(dhost, daddr, wr.length, true, false, wq, logical_index, wr.opcode);
                std::vector<std::uint8_t> buf(wr.length);
                mem_read(q.host_id, wr.src_addr, buf.data(), wr.length);
                mem_write(dhost, daddr, buf.data(), wr.length);
                break;
            }
            case Opcode::WRITE_IMM: {
                // The payload is a literal held in the WR itself (up to 8
                // bytes), not a memory read.
                auto [dhost, daddr] = resolve_side(q.host_id, wr.dst_addr, wr.remote_key);
                unsigned n = wr.length == 0 || wr.length > 8 ? 8u : static_cast<unsigned>(wr.length);
                check_access(dhost, daddr, n, true, false, wq, logical_index, wr.opcode);
                mem_write_be(dhost, daddr, wr.cas_old, n);
                break;
            }
            case Opcode::READ: {
                auto [shost, saddr] = resolve_side(q.host_id, wr.src_addr, wr.remote_key);
                check_access(shost, saddr, wr.length, false, false, wq, logical_index, wr.opcode);
                check_access(q.host_id, wr.dst_addr, wr.length, true, false, wq, logical_index,
                             wr.opcode);
                std::vector<std::uint8_t> buf(wr.length);
                mem_read(shost, saddr, buf.data(), wr.length);
                mem_write(q.host_id, wr.dst_addr, buf.data(), wr.length);
                break;
            }
            case Opcode::SEND: {
                if (!q.qp) throw Error(ErrorKind::InvalidArgument, "send queue has no queue pair");
                check_access(q.host_id, wr.src_addr, wr.length, false, false, wq, logical_index,
                             wr.opcode);
                WrDescriptor copy = wr;
                double arrive = now_us_ + model_.network_one_way_us;
                QpId qp = *q.qp;
                std::uint64_t idx = logical_index;
                schedule(arrive, wq, idx, [this, qp, wq, idx, copy, arrive] {
                    deliver_send(qp, wq, idx, copy, arrive);
                });
                break;
            }
            case Opcode::CAS:
            case Opcode::ADD:
            case Opcode::MAX:
            case Opcode::MIN: {
                auto [dhost, daddr] = resolve_side(q.host_id, wr.dst_addr, wr.remote_key);
                check_access(dhost, daddr, 8, true, true, wq, logical_index, wr.opcode);
                std::uint64_t old = mem_read_be(dhost, daddr, 8);
                std::uint64_t next = old;
                if (wr.opcode == Opcode::CAS)
                    next = (old == wr.cas_old) ? wr.cas_new : old;
                else if (wr.opcode == Opcode::ADD)
                    next = old + wr.cas_old;
                else if (wr.opcode == Opcode::MAX)
                    next = std::max(old, wr.cas_old);
                else
                    next = std::min(old, wr.cas_old);
                if (next != old) mem_write_be(dhost, daddr, next, 8);
                // Atomics return the original value to a local buffer when
                // the WR names one.
                if (wr.src_addr != 0) mem_write_be(q.host_id, wr.src_addr, old, 8);
                break;
            }
            case Opcode::RECV:
            case Opcode::WAIT:
            case Opcode::ENABLE:
                break;  // never dispatched as payload
        }
    } catch (const Error& err) {
        ok = false;
        status = err.what();
        switch (err.kind()) {
            case ErrorKind::OutOfBounds: e.fault = FaultKind::out_of_bounds; break;
            case ErrorKind::AccessDenied:
                e.fault = host(q.host_id).regions_revoked ||
                                  (wr.remote_key != 0 && !resolve_key(wr.remote_key))
                              ? FaultKind::dead_host
                              : FaultKind::access_denied;
                break;
            default: e.fault = FaultKind::access_denied; break;
        }
        record_fault(wq, logical_index, wr.opcode, e.fault, status);
        // A faulted verb wedges its queue, like a queue pair entering the
        // error state.
        rt.halted = true;
    }
    e.note = status;
    e.completion_emitted = wr.signaled;
    trace_.entries.push_back(std::move(e));
    if (wr.signaled) complete_wr(wq, logical_index, wr, now_us_, ok, status);
    if (!rt.halted) schedule(now_us_, wq, q.head_fetch_index, [this, wq] { try_fetch(wq); });
}

void Engine::complete_wr(WqId wq, std::uint64_t logical_index, const WrDescriptor& wr,
                         double time_us, bool ok, const std::string& status) {
    (void)wr;
    CompletionQueue& cq = cqs_[wq];
    cq.count += 1;
    cq.entries.push_back(CompletionEntry{wq, logical_index, time_us, ok, status});
    on_completion(wq);
}

void Engine::on_completion(WqId wq) {
    for (std::size_t i = 0; i < rt_.size(); ++i) {
        WqRuntime& rt = rt_[i];
        if (!rt.wait.active || rt.wait.target_wq != wq) continue;
        // Managed queues re-read the WAIT from memory: its threshold may
        // have been patched in place since it first blocked.
        std::uint64_t threshold = rt.wait.threshold;
        if (wqs_[i].managed) {
            WrDescriptor cur = fetch_wr(wqs_[i], rt.wait.logical_index);
            if (cur.opcode == Opcode::WAIT) threshold = cur.wqe_count;
        }
        if (cqs_[wq].count >= threshold) {
            rt.wait.active = false;
            WqId id = static_cast<WqId>(i);
            schedule(now_us_, id, rt.wait.logical_index, [this, id] { try_fetch(id); });
        }
    }
}

void Engine::deliver_send(QpId qp_id, WqId sender_wq, std::uint64_t logical_index,
                          WrDescriptor wr, double arrive_us) {
    const QueuePair& qp = qps_[qp_id];
    WqId recv_wq = qp.send_wq == sender_wq ? qp.recv_wq : qp.send_wq;
    WorkQueue& rq = wqs_[recv_wq];
    WqRuntime& rrt = rt_[recv_wq];
    if (rrt.halted) return;
    if (rrt.recv_pending.empty()) {
        record_fault(recv_wq, 0, Opcode::RECV, FaultKind::no_posted_recv,
                     "message arrived with no posted receive");
        return;
    }
    std::uint64_t ridx = rrt.recv_pending.front();
    rrt.recv_pending.pop_front();
    // Re-read the RECV now: pre-posted receives are routinely patched in
    // host memory between posting and arrival.
    WrDescriptor recv = fetch_wr(rq, ridx);
    std::vector<std::uint8_t> payload(wr.length);
    if (wr.length) mem_read(wqs_[sender_wq].host_id, wr.src_addr, payload.data(), wr.length);
    TraceEntry e;
    e.time_us = arrive_us;
    e.host = rq.host_id;
    e.wq = recv_wq;
    e.logical_index = ridx;
    e.opcode = Opcode::RECV;
    e.wr_id = recv.id;
    e.length = static_cast<std::uint32_t>(wr.length);
    e.initiator = Initiator::recv_arrival;
    e.completion_emitted = true;
    bool ok = true;
    try {
        if (recv.scatter_desc_addr != 0) {
            std::uint64_t count = mem_read_be(rq.host_id, recv.scatter_desc_addr, 8);
            if (count > kMaxScatterEntries)
                throw Error(ErrorKind::ScatterOverflow, "scatter list too long");
            std::uint64_t off = 0;
            for (std::uint64_t i = 0; i < count && off < payload.size(); ++i) {
                std::uint64_t entry = recv.scatter_desc_addr + 8 + i * 16;
                std::uint64_t addr = mem_read_be(rq.host_id, entry, 8);
                std::uint64_t len = mem_read_be(rq.host_id, entry + 8, 8);
                std::uint64_t n = std::min<std::uint64_t>(len, payload.size() - off);
                if (n) mem_write(rq.host_id, addr, payload.data() + off, n);
                off += n;
            }
        } else if (!payload.empty()) {
            std::uint64_t n = recv.length ? std::min<std::uint64_t>(recv.length, payload.size())
                                          : payload.size();
            mem_write(rq.host_id, recv.dst_addr, payload.data(), n);
        }
    } catch (const Error& err) {
        ok = false;
        e.fault = err.kind() == ErrorKind::ScatterOverflow ? FaultKind::scatter_overflow
                                                           : FaultKind::out_of_bounds;
        record_fault(recv_wq, ridx, Opcode::RECV, e.fault, err.what());
    }
    trace_.entries.push_back(std::move(e));
    complete_wr(recv_wq, ridx, recv, arrive_us, ok, "");
}

QuiescenceReport Engine::run_until_quiescent(double time_cap_us) {
    cap_hit_ = false;
    while (!events_.empty()) {
        Event ev = events_.top();
        if (time_cap_us > 0.0 && ev.time_us > time_cap_us) {
            cap_hit_ = true;
            break;
        }
        events_.pop();
        now_us_ = std::max(now_us_, ev.time_us);
        ev.action();
    }
    QuiescenceReport report;
    report.end_time_us = now_us_;
    report.time_cap_hit = cap_hit_;
    for (std::size_t i = 0; i < rt_.size(); ++i)
        if (rt_[i].wait.active && !rt_[i].halted)
            report.blocked_waits.emplace_back(static_cast<WqId>(i), rt_[i].wait.logical_index);
    return report;
}

ThroughputEstimate Engine::throughput_estimate(std::uint32_t copy_verbs,
                                               std::uint32_t atomic_verbs,
                                               std::uint32_t order_verbs,
                                               std::uint64_t payload_bytes,
                                               std::uint32_t ports) const {
    if (ports != 1 && ports != 2) throw Error(ErrorKind::InvalidArgument, "ports must be 1 or 2");
    // A self-triggering chain is serialized on one processing unit; a
    // dual-port device runs one chain per port.
    double t_pu_us = (copy_verbs + atomic_verbs) * model_.per_verb_doorbell_order_us +
                     order_verbs * model_.order_verb_pu_us;
    if (t_pu_us <= 0.0) throw Error(ErrorKind::InvalidArgument, "empty chain");
    ThroughputEstimate est;
    est.ops_per_s = ports / (t_pu_us * 1e-6);
    est.bottleneck = "NIC PU";
    auto cap = [&](double rate, const char* label) {
        if (rate < est.ops_per_s) {
            est.ops_per_s = rate;
            est.bottleneck = label;
        }
    };
    if (atomic_verbs > 0) cap(model_.atomic_rate_cap / atomic_verbs, "atomic cap");
    if (copy_verbs > 0) cap(model_.copy_rate_cap / copy_verbs, "copy cap");
    if (payload_bytes > 0) {
        double wire_gbps = ports * model_.bandwidth_limit_gbps;
        const char* label = "IB bw";
        if (ports == 2 && model_.pcie_gbps < wire_gbps) {
            wire_gbps = model_.pcie_gbps;
            label = "PCIe bw";
        }
        cap(wire_gbps * 1e9 / (payload_bytes * 8.0), label);
    }
    return est;
}

double Engine::chain_latency(std::uint32_t n, FetchMode mode) const {
    return model_.chain_latency_us(n, Opcode::NOOP, mode);
}

}  // namespace redn

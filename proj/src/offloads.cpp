#include "redn/offloads.hpp"

#include <algorithm>
#include <cstring>

namespace redn {

namespace {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

WrDescriptor make_wait(WqId target, std::uint32_t count) {
    WrDescriptor d;
    d.opcode = Opcode::WAIT;
    d.target_wq = target;
    d.wqe_count = count;
    return d;
}

WrDescriptor make_enable(WqId target, std::uint32_t count, bool signaled = false) {
    WrDescriptor d;
    d.opcode = Opcode::ENABLE;
    d.target_wq = target;
    d.wqe_count = count;
    d.signaled = signaled;
    return d;
}

WrDescriptor make_copy(Opcode op, std::uint64_t src, std::uint64_t len, std::uint64_t dst,
                       std::uint16_t key = 0, bool signaled = false) {
    WrDescriptor d;
    d.opcode = op;
    d.src_addr = src;
    d.length = len;
    d.dst_addr = dst;
    d.remote_key = key;
    d.signaled = signaled;
    return d;
}

// Client link + trigger scatter plumbing, mirroring the construct builders.
struct LinkBuilder {
    Engine& e;
    ConstructPlan& plan;
    std::uint64_t cells_cursor;
    std::uint64_t cells_limit;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> scatter;

    LinkBuilder(Engine& e_, ConstructPlan& plan_, HostId server, HostId client,
                std::uint64_t server_cells_bytes, std::uint64_t client_bytes)
        : e(e_), plan(plan_) {
        MemoryRegion sreg = e.allocate_region(server, server_cells_bytes, RegionKind::data);
        cells_cursor = sreg.base;
        cells_limit = sreg.base + sreg.length;

        MemoryRegion creg = e.allocate_region(client, client_bytes, RegionKind::data);
        plan.server = server;
        plan.client = client;
        plan.client_key = creg.key;
        plan.result_addr = creg.base;
        plan.send_buf_addr = creg.base + ((client_bytes > 128) ? client_bytes - 64 : 64);
        plan.result_sentinel = ~std::uint64_t{0};
        e.mem_write_u64(client, plan.result_addr, plan.result_sentinel);

        plan.recv_wq = e.create_work_queue(server, 4, false);
        plan.send_wq = e.create_work_queue(client, 4, false);
        plan.qp = e.create_queue_pair(client, plan.send_wq, server, plan.recv_wq);
    }

    std::uint64_t cell(std::uint64_t n, std::uint64_t init = 0) {
        std::uint64_t addr = (cells_cursor + 7) / 8 * 8;
        if (addr + n > cells_limit)
            throw Error(ErrorKind::InsufficientCapacity, "offload cell region exhausted");
        cells_cursor = addr + n;
        if (n == 8) e.mem_write_u64(plan.server, addr, init);
        return addr;
    }

    void add_scatter(std::uint64_t addr, std::uint64_t len) {
        if (scatter.size() >= kMaxScatterEntries)
            throw Error(ErrorKind::ScatterOverflow, "trigger needs too many scatter entries");
        scatter.emplace_back(addr, len);
    }

    // Writes the scatter descriptor and posts the trigger RECV.
    void finish() {
        std::uint64_t desc = cell(8 + scatter.size() * 16);
        e.mem_write_be(plan.server, desc, scatter.size(), 8);
        for (std::size_t i = 0; i < scatter.size(); ++i) {
            e.mem_write_be(plan.server, desc + 8 + i * 16, scatter[i].first, 8);
            e.mem_write_be(plan.server, desc + 16 + i * 16, scatter[i].second, 8);
        }
        WrDescriptor recv;
        recv.opcode = Opcode::RECV;
        recv.scatter_desc_addr = desc;
        e.post_work_request(plan.recv_wq, recv);
        plan.wrs.push_back({plan.recv_wq, 0, Opcode::RECV, BudgetClass::none, WrRole::trigger,
                            "trigger recv"});
    }
};

GetResult run_and_collect(Engine& e, const OffloadProgram& prog,
                          const std::vector<std::uint8_t>& payload, double time_cap_us) {
    const ConstructPlan& plan = prog.plan;
    double t0 = e.now();
    std::size_t n0 = e.trace().entries.size();
    post_trigger(e, plan, payload);
    e.run_until_quiescent(time_cap_us);

    GetResult r;
    double resp_time = -1.0;
    for (std::size_t i = n0; i < e.trace().entries.size(); ++i) {
        const TraceEntry& t = e.trace().entries[i];
        if (t.host == plan.server && t.opcode != Opcode::RECV) ++r.executed_wrs;
        for (const auto& [wq, idx] : plan.response_slots)
            if (t.wq == wq && t.logical_index == idx && t.opcode == Opcode::WRITE)
                resp_time = std::max(resp_time, t.time_us);
    }
    std::uint64_t head = e.mem_read_u64(plan.client, plan.result_addr);
    if (head != plan.result_sentinel && resp_time >= 0.0) {
        r.found = true;
        r.latency_us = resp_time - t0;
        if (head >= 8) {
            r.value.resize(head - 8);
            if (!r.value.empty())
                e.mem_read(plan.client, plan.result_addr + 8, r.value.data(), r.value.size());
        }
    } else {
        r.latency_us = e.now() - t0;
    }
    return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Hash table
// ---------------------------------------------------------------------------

std::uint64_t HashTable::bucket_index(unsigned which, std::uint64_t key) const {
    return mix64(key + seed * (which + 1)) % bucket_count;
}

HashTable create_hash_table(Engine& e, HostId host, std::uint32_t bucket_count,
                            std::uint64_t seed, std::uint64_t value_arena_bytes) {
    if (bucket_count == 0)
        throw Error(ErrorKind::InvalidArgument, "hash table needs at least one bucket");
    HashTable t;
    t.host = host;
    t.bucket_count = bucket_count;
    t.seed = seed;
    MemoryRegion buckets = e.allocate_region(host, bucket_count * kBucketStride, RegionKind::data);
    t.bucket_base = buckets.base;
    MemoryRegion arena = e.allocate_region(host, value_arena_bytes, RegionKind::data);
    t.value_cursor = arena.base;
    t.value_limit = arena.base + arena.length;
    return t;
}

bool hash_insert(Engine& e, HashTable& table, std::uint64_t key,
                 const std::vector<std::uint8_t>& value) {
    if (key == 0 || key > kIdMax)
        throw Error(ErrorKind::FieldOverflow, "hash keys must be nonzero 48-bit values");
    std::uint64_t free_addr = 0;
    std::uint64_t slot_addr = 0;
    for (unsigned which = 0; which < 2; ++which) {
        std::uint64_t baddr = table.bucket_addr(which, key);
        std::uint64_t stored = e.mem_read_be(table.host, baddr, 6);
        if (stored == key) { slot_addr = baddr; break; }
        if (stored == 0 && free_addr == 0) free_addr = baddr;
    }
    if (slot_addr == 0) {
        if (free_addr == 0) return false;
        slot_addr = free_addr;
    }
    std::uint64_t total = value.size() + 8;
    std::uint64_t cell = (table.value_cursor + 7) / 8 * 8;
    if (cell + total > table.value_limit)
        throw Error(ErrorKind::InsufficientCapacity, "hash value arena exhausted");
    table.value_cursor = cell + total;
    e.mem_write_be(table.host, cell, total, 8);
    if (!value.empty()) e.mem_write(table.host, cell + 8, value.data(), value.size());
    e.mem_write_be(table.host, slot_addr, key, 6);
    e.mem_write_be(table.host, slot_addr + 6, cell, 8);
    e.mem_write_be(table.host, slot_addr + 14, total, 8);
    return true;
}

// ---------------------------------------------------------------------------
// Hash GET programs
// ---------------------------------------------------------------------------

OffloadProgram setup_hash_get(Engine& e, const HashTable& table, HostId client, bool parallel) {
    OffloadProgram prog;
    prog.kind = parallel ? OffloadKind::hash_parallel : OffloadKind::hash_sequential;
    ConstructPlan& plan = prog.plan;
    LinkBuilder link(e, plan, table.host, client, 4096, 1 << 17);
    HostId server = table.host;

    auto push = [&](WqId wq, const WrDescriptor& d, BudgetClass cls, WrRole role,
                    const char* label) {
        std::uint64_t idx = e.post_work_request(wq, d);
        plan.wrs.push_back({wq, idx, d.opcode, cls, role, label});
        return idx;
    };

    if (parallel) {
        // Two independent probe chains on distinct queues; each reads its
        // candidate bucket, compares the stored key against x, and fires the
        // armed response only on a match.
        for (unsigned p = 0; p < 2; ++p) {
            WqId wq = e.create_work_queue(server, 4, true);
            prog.probe_wqs.push_back(wq);
            const WorkQueue& q = e.work_queue(wq);
            push(wq, make_wait(plan.recv_wq, 1), BudgetClass::ordering, WrRole::core,
                 "probe wait");
            push(wq, make_copy(Opcode::READ, 0, 22, q.slot_addr(3) + wr_field::id, 0, true),
                 BudgetClass::copy, WrRole::core, "bucket read");
            WrDescriptor cas;
            cas.opcode = Opcode::CAS;
            cas.dst_addr = q.slot_addr(3);
            cas.cas_new = encode_word0(Opcode::WRITE, 0);
            push(wq, cas, BudgetClass::atomic, WrRole::core, "key compare");
            push(wq, make_copy(Opcode::NOOP, 0, 0, plan.result_addr,
                               static_cast<std::uint16_t>(plan.client_key), true),
                 BudgetClass::copy, WrRole::response, "armed response");
            plan.response_slots.emplace_back(wq, 3);

            link.add_scatter(q.slot_addr(1) + wr_field::src_addr, 8);
            link.add_scatter(q.slot_addr(2) + wr_field::cas_old + 2, 6);
            link.add_scatter(q.slot_addr(2) + wr_field::cas_new + 2, 6);

            WqId ctl = e.create_work_queue(server, 2, false);
            push(ctl, make_wait(wq, 1), BudgetClass::ordering, WrRole::core, "probe ctl wait");
            push(ctl, make_enable(wq, 2), BudgetClass::ordering, WrRole::core,
                 "probe ctl enable");
            if (plan.ctl_wq == 0) plan.ctl_wq = ctl;
            e.host_enable(wq, 2);
            e.ring_doorbell(wq);
            e.ring_doorbell(ctl);
        }
        plan.main_wq = prog.probe_wqs.front();
        plan.iterations = 2;
    } else {
        // One queue: the second probe is gated on the first compare's
        // completion, so a bucket-2 hit pays the full first probe.
        WqId wq = e.create_work_queue(server, 8, true);
        prog.probe_wqs.push_back(wq);
        plan.main_wq = wq;
        plan.iterations = 2;
        const WorkQueue& q = e.work_queue(wq);
        std::uint64_t staging_h2 = link.cell(8, 0);

        push(wq, make_wait(plan.recv_wq, 1), BudgetClass::ordering, WrRole::core, "probe wait");
        push(wq, make_copy(Opcode::READ, 0, 22, q.slot_addr(3) + wr_field::id),
             BudgetClass::copy, WrRole::core, "bucket 1 read");
        WrDescriptor cas1;
        cas1.opcode = Opcode::CAS;
        cas1.dst_addr = q.slot_addr(3);
        cas1.cas_new = encode_word0(Opcode::WRITE, 0);
        cas1.signaled = true;
        push(wq, cas1, BudgetClass::atomic, WrRole::core, "key compare 1");
        push(wq, make_copy(Opcode::NOOP, 0, 0, plan.result_addr,
                           static_cast<std::uint16_t>(plan.client_key), true),
             BudgetClass::copy, WrRole::response, "armed response 1");
        push(wq, make_copy(Opcode::WRITE, staging_h2, 8, q.slot_addr(5) + wr_field::src_addr),
             BudgetClass::copy, WrRole::core, "stage bucket 2 address");
        push(wq, make_copy(Opcode::READ, 0, 22, q.slot_addr(7) + wr_field::id),
             BudgetClass::copy, WrRole::core, "bucket 2 read");
        WrDescriptor cas2 = cas1;
        cas2.dst_addr = q.slot_addr(7);
        cas2.signaled = false;
        push(wq, cas2, BudgetClass::atomic, WrRole::core, "key compare 2");
        push(wq, make_copy(Opcode::NOOP, 0, 0, plan.result_addr,
                           static_cast<std::uint16_t>(plan.client_key), true),
             BudgetClass::copy, WrRole::response, "armed response 2");
        plan.response_slots.emplace_back(wq, 3);
        plan.response_slots.emplace_back(wq, 7);

        link.add_scatter(q.slot_addr(1) + wr_field::src_addr, 8);
        link.add_scatter(q.slot_addr(2) + wr_field::cas_old + 2, 6);
        link.add_scatter(q.slot_addr(2) + wr_field::cas_new + 2, 6);
        link.add_scatter(staging_h2, 8);
        link.add_scatter(q.slot_addr(6) + wr_field::cas_old + 2, 6);
        link.add_scatter(q.slot_addr(6) + wr_field::cas_new + 2, 6);

        WqId ctl = e.create_work_queue(server, 2, false);
        plan.ctl_wq = ctl;
        push(ctl, make_wait(wq, 1), BudgetClass::ordering, WrRole::core, "probe ctl wait");
        push(ctl, make_enable(wq, 4), BudgetClass::ordering, WrRole::core, "probe ctl enable");
        e.host_enable(wq, 4);
        e.ring_doorbell(wq);
        e.ring_doorbell(ctl);
    }

    plan.payload_chunks = {8, 6, 6, 8, 6, 6};
    link.finish();
    return prog;
}

GetResult hash_get(Engine& e, const OffloadProgram& prog, const HashTable& table,
                   std::uint64_t key, double time_cap_us) {
    std::vector<std::uint8_t> payload(40);
    store_be(payload.data() + 0, table.bucket_addr(0, key), 8);
    store_be(payload.data() + 8, key, 6);
    store_be(payload.data() + 14, key, 6);
    store_be(payload.data() + 20, table.bucket_addr(1, key), 8);
    store_be(payload.data() + 28, key, 6);
    store_be(payload.data() + 34, key, 6);
    return run_and_collect(e, prog, payload, time_cap_us);
}

// ---------------------------------------------------------------------------
// Linked list
// ---------------------------------------------------------------------------

LinkedList create_linked_list(Engine& e, HostId host,
                              const std::vector<std::uint64_t>& keys,
                              const std::vector<std::vector<std::uint8_t>>& values) {
    if (keys.size() != values.size() || keys.empty())
        throw Error(ErrorKind::InvalidArgument, "list needs matching keys and values");
    std::uint64_t value_bytes = 0;
    for (const auto& v : values) value_bytes += (v.size() + 8 + 7) / 8 * 8;
    MemoryRegion reg =
        e.allocate_region(host, keys.size() * kBucketStride + value_bytes + 64, RegionKind::data);
    std::uint64_t node_base = reg.base;
    std::uint64_t cursor = reg.base + keys.size() * kBucketStride;

    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (keys[i] == 0 || keys[i] > kIdMax)
            throw Error(ErrorKind::FieldOverflow, "list keys must be nonzero 48-bit values");
        std::uint64_t cell = (cursor + 7) / 8 * 8;
        std::uint64_t total = values[i].size() + 8;
        cursor = cell + total;
        e.mem_write_be(host, cell, total, 8);
        if (!values[i].empty()) e.mem_write(host, cell + 8, values[i].data(), values[i].size());

        std::uint64_t node = node_base + i * kBucketStride;
        e.mem_write_be(host, node, keys[i], 6);
        e.mem_write_be(host, node + 6, cell, 8);
        e.mem_write_be(host, node + 14, total, 8);
        std::uint64_t next = (i + 1 < keys.size()) ? node_base + (i + 1) * kBucketStride : 0;
        e.mem_write_be(host, node + 22, next, 8);
    }
    LinkedList l;
    l.host = host;
    l.head_addr = node_base;
    l.length = static_cast<unsigned>(keys.size());
    return l;
}

OffloadProgram setup_list_traverse(Engine& e, const LinkedList& list, HostId client,
                                   bool with_break) {
    OffloadProgram prog;
    prog.kind = with_break ? OffloadKind::list_traverse_break : OffloadKind::list_traverse;
    ConstructPlan& plan = prog.plan;
    LinkBuilder link(e, plan, list.host, client, 4096, 1 << 16);
    HostId server = list.host;
    unsigned n = list.length;
    plan.iterations = n;

    std::uint64_t staging = link.cell(32, 0);  // node image: key|ptr|len|next
    std::uint64_t sink = link.cell(8, 0);

    WqId wq = e.create_work_queue(server, 1 + 7 * n, true);
    prog.probe_wqs.push_back(wq);
    plan.main_wq = wq;
    const WorkQueue& q = e.work_queue(wq);

    WqId resp = 0;
    std::uint64_t patch_cell = 0;
    if (with_break) {
        resp = e.create_work_queue(server, 1, true);
        plan.resp_wq = resp;
        patch_cell = link.cell(8, 0);
        std::uint8_t pat[8] = {0};
        store_be(pat + 1, resp, 2);
        store_be(pat + 3, 1, 4);
        e.mem_write(server, patch_cell, pat, 8);
    }

    auto push = [&](WqId w, const WrDescriptor& d, BudgetClass cls, WrRole role,
                    const char* label) {
        std::uint64_t idx = e.post_work_request(w, d);
        plan.wrs.push_back({w, idx, d.opcode, cls, role, label});
        return idx;
    };

    push(wq, make_wait(plan.recv_wq, 1), BudgetClass::ordering, WrRole::trigger, "wait trigger");
    for (unsigned i = 0; i < n; ++i) {
        std::uint64_t b = 1 + 7ull * i;
        // Read node i into the staging image, then fan its fields out: key to
        // the compare's old operand, value src/len to the response, next to
        // the following iteration's read.
        push(wq, make_copy(Opcode::READ, i == 0 ? list.head_addr : 0, kNodeSize, staging),
             BudgetClass::copy, WrRole::core, "node read");
        push(wq, make_copy(Opcode::WRITE, staging, 6, q.slot_addr(b + 4) + wr_field::cas_old + 2),
             BudgetClass::copy, WrRole::core, "key to compare");
        std::uint64_t val_dst = with_break ? e.work_queue(resp).slot_addr(0) + wr_field::src_addr
                                           : q.slot_addr(b + 5) + wr_field::src_addr;
        push(wq, make_copy(Opcode::WRITE, staging + 6, 16, val_dst), BudgetClass::copy,
             WrRole::core, "value to response");
        std::uint64_t next_dst =
            (i + 1 < n) ? q.slot_addr(b + 7) + wr_field::src_addr : sink;
        push(wq, make_copy(Opcode::WRITE, staging + 22, 8, next_dst), BudgetClass::copy,
             WrRole::core, "next to following read");
        WrDescriptor cas;
        cas.opcode = Opcode::CAS;
        cas.dst_addr = q.slot_addr(b + 5);
        cas.cas_new = encode_word0(Opcode::WRITE, 0);
        push(wq, cas, BudgetClass::atomic, WrRole::core, "key compare");
        if (with_break) {
            push(wq, make_copy(Opcode::NOOP, patch_cell, 8,
                               q.slot_addr(b + 6) + wr_field::signaled),
                 BudgetClass::copy, WrRole::core, "armed break");
        } else {
            push(wq, make_copy(Opcode::NOOP, 0, 0, plan.result_addr,
                               static_cast<std::uint16_t>(plan.client_key), true),
                 BudgetClass::copy, WrRole::response, "armed response");
            plan.response_slots.emplace_back(wq, b + 5);
        }
        push(wq, make_enable(wq, (i + 1 < n) ? 7 : 0), BudgetClass::ordering, WrRole::core,
             "iteration enable");
        link.add_scatter(q.slot_addr(b + 5) + wr_field::id, 6);
        plan.payload_chunks.push_back(6);
    }

    if (with_break) {
        push(resp, make_copy(Opcode::WRITE, 0, 0, plan.result_addr,
                             static_cast<std::uint16_t>(plan.client_key), true),
             BudgetClass::copy, WrRole::response, "shared response");
        plan.response_slots.emplace_back(resp, 0);
        e.ring_doorbell(resp);
    }

    e.host_enable(wq, 8);
    e.ring_doorbell(wq);
    link.finish();
    return prog;
}

GetResult list_get(Engine& e, const OffloadProgram& prog, std::uint64_t key,
                   double time_cap_us) {
    std::vector<std::uint8_t> payload;
    for (unsigned w : prog.plan.payload_chunks) {
        std::uint8_t buf[8];
        store_be(buf, key, w);
        payload.insert(payload.end(), buf, buf + w);
    }
    return run_and_collect(e, prog, payload, time_cap_us);
}

// ---------------------------------------------------------------------------
// mov machine
// ---------------------------------------------------------------------------

namespace {

std::uint64_t oracle_load(const MovState& s, std::uint64_t addr) {
    if (addr < s.mem_base || addr + 8 > s.mem_base + s.mem.size())
        throw Error(ErrorKind::OutOfBounds, "mov oracle address out of window");
    std::uint64_t v = 0;
    for (unsigned i = 0; i < 8; ++i) v = (v << 8) | s.mem[addr - s.mem_base + i];
    return v;
}

void oracle_store(MovState& s, std::uint64_t addr, std::uint64_t v) {
    if (addr < s.mem_base || addr + 8 > s.mem_base + s.mem.size())
        throw Error(ErrorKind::OutOfBounds, "mov oracle address out of window");
    for (unsigned i = 0; i < 8; ++i)
        s.mem[addr - s.mem_base + i] = static_cast<std::uint8_t>(v >> (8 * (7 - i)));
}

}  // namespace

MovState interpret_mov(const std::vector<MovInstr>& prog, MovState s, unsigned laps) {
    for (unsigned lap = 0; lap < laps; ++lap) {
        for (const MovInstr& in : prog) {
            std::uint64_t off = in.use_off_reg ? s.regs.at(in.off_reg) : in.constant;
            switch (in.mode) {
                case MovMode::immediate:
                    if (in.is_store)
                        oracle_store(s, s.regs.at(in.dst_reg), in.constant);
                    else
                        s.regs.at(in.dst_reg) = in.constant;
                    break;
                case MovMode::indirect:
                    if (in.is_store)
                        oracle_store(s, s.regs.at(in.dst_reg), s.regs.at(in.src_reg));
                    else
                        s.regs.at(in.dst_reg) = oracle_load(s, s.regs.at(in.src_reg));
                    break;
                case MovMode::indexed:
                    if (in.is_store)
                        oracle_store(s, s.regs.at(in.dst_reg) + off, s.regs.at(in.src_reg));
                    else
                        s.regs.at(in.dst_reg) = oracle_load(s, s.regs.at(in.src_reg) + off);
                    break;
            }
        }
    }
    return s;
}

MovArena make_mov_arena(Engine& e, HostId host, unsigned reg_count, std::uint64_t mem_len) {
    MovArena a;
    a.host = host;
    a.reg_count = reg_count;
    MemoryRegion reg = e.allocate_region(host, reg_count * 8 + mem_len, RegionKind::data);
    a.reg_base = reg.base;
    a.mem_base = reg.base + reg_count * 8;
    a.mem_len = mem_len;
    return a;
}

void load_mov_state(Engine& e, const MovArena& a, const MovState& s) {
    if (s.regs.size() != a.reg_count || s.mem.size() != a.mem_len || s.mem_base != a.mem_base)
        throw Error(ErrorKind::InvalidArgument, "mov state does not match arena layout");
    for (unsigned i = 0; i < a.reg_count; ++i) e.mem_write_u64(a.host, a.reg_base + 8 * i, s.regs[i]);
    if (!s.mem.empty()) e.mem_write(a.host, a.mem_base, s.mem.data(), s.mem.size());
}

MovState read_mov_state(Engine& e, const MovArena& a) {
    MovState s;
    s.regs.resize(a.reg_count);
    for (unsigned i = 0; i < a.reg_count; ++i) s.regs[i] = e.mem_read_u64(a.host, a.reg_base + 8 * i);
    s.mem_base = a.mem_base;
    s.mem.resize(a.mem_len);
    if (a.mem_len) e.mem_read(a.host, a.mem_base, s.mem.data(), a.mem_len);
    return s;
}

namespace {

std::uint64_t reg_addr(const MovArena& a, unsigned r) {
    if (r >= a.reg_count) throw Error(ErrorKind::InvalidArgument, "register index out of range");
    return a.reg_base + 8ull * r;
}

unsigned instr_chain_len(const MovInstr& in) {
    switch (in.mode) {
        case MovMode::immediate: return in.is_store ? 2u : 1u;
        case MovMode::indirect: return 2u;
        case MovMode::indexed: return in.use_off_reg ? 4u : 3u;
    }
    return 0;
}

// Posts the WR sub-chain for one instruction. `base` is the logical index the
// first WR will occupy; uses it to aim patch writes at later slots.
void lower_instr(Engine& e, WqId wq, const MovArena& a, const MovInstr& in,
                 std::uint64_t base) {
    const WorkQueue& q = e.work_queue(wq);
    auto patched_field = [&](std::uint64_t slot, std::uint64_t field) {
        return q.slot_addr(slot) + field;
    };

    if (in.mode == MovMode::immediate && !in.is_store) {
        WrDescriptor w;
        w.opcode = Opcode::WRITE_IMM;
        w.cas_old = in.constant;
        w.length = 8;
        w.dst_addr = reg_addr(a, in.dst_reg);
        e.post_work_request(wq, w);
        return;
    }

    // All remaining forms end in a final data mover whose src or dst field is
    // installed by earlier patch writes in the same doorbell-ordered chain.
    std::uint64_t final_slot = base + instr_chain_len(in) - 1;
    std::uint64_t patched = in.is_store ? wr_field::dst_addr : wr_field::src_addr;

    // Patch the address register into the final WR.
    unsigned addr_reg = in.is_store ? in.dst_reg : in.src_reg;
    e.post_work_request(wq, make_copy(Opcode::WRITE, reg_addr(a, addr_reg), 8,
                                      patched_field(final_slot, patched)));
    if (in.mode == MovMode::indexed) {
        WrDescriptor add;
        add.opcode = Opcode::ADD;
        add.dst_addr = patched_field(final_slot, patched);
        add.cas_old = in.constant;
        if (in.use_off_reg) {
            // Offset register value becomes the ADD operand.
            e.post_work_request(wq, make_copy(Opcode::WRITE, reg_addr(a, in.off_reg), 8,
                                              patched_field(base + 2, wr_field::cas_old)));
            add.cas_old = 0;
        }
        e.post_work_request(wq, add);
    }

    WrDescriptor mover;
    if (in.mode == MovMode::immediate) {
        mover.opcode = Opcode::WRITE_IMM;
        mover.cas_old = in.constant;
        mover.length = 8;
    } else {
        mover.opcode = Opcode::WRITE;
        mover.length = 8;
        if (in.is_store)
            mover.src_addr = reg_addr(a, in.src_reg);
        else
            mover.dst_addr = reg_addr(a, in.dst_reg);
    }
    e.post_work_request(wq, mover);
}

}  // namespace

MovRunResult run_mov_program(Engine& e, const MovArena& arena,
                             const std::vector<MovInstr>& prog, unsigned laps, bool recycle,
                             double time_cap_us) {
    MovRunResult r;
    r.host_assisted = !recycle;
    if (prog.empty() || laps == 0) {
        r.laps = laps;
        return r;
    }
    std::uint64_t chain = 0;
    for (const MovInstr& in : prog) chain += instr_chain_len(in);

    if (!recycle) {
        WqId wq = e.create_work_queue(arena.host, chain * laps, true);
        r.main_wq = wq;
        std::uint64_t base = 0;
        for (unsigned lap = 0; lap < laps; ++lap)
            for (const MovInstr& in : prog) {
                lower_instr(e, wq, arena, in, base);
                base += instr_chain_len(in);
            }
        r.posted_wrs = base;
        e.host_enable(wq, base);
        e.ring_doorbell(wq);
        e.run_until_quiescent(time_cap_us);
        r.laps = laps;
        return r;
    }

    // Recycled frame: WAIT | body | ADD | CAS | READ | READ | ENABLE. The ADD
    // counts laps in the tail ENABLE's id field; when it reaches `laps` the
    // CAS flips that ENABLE to a NOOP, so the control queue is never enabled
    // again and the loop halts after exactly `laps` laps.
    std::uint64_t frame = chain + 6;
    WqId wq = e.create_work_queue(arena.host, frame, true, true);
    WqId ctl = e.create_work_queue(arena.host, 2, true, true);
    r.main_wq = wq;
    const WorkQueue& q = e.work_queue(wq);
    const WorkQueue& qc = e.work_queue(ctl);
    std::uint64_t tail = frame - 1;

    e.post_work_request(wq, make_wait(ctl, 0));
    std::uint64_t base = 1;
    for (const MovInstr& in : prog) {
        lower_instr(e, wq, arena, in, base);
        base += instr_chain_len(in);
    }
    WrDescriptor add;
    add.opcode = Opcode::ADD;
    add.dst_addr = q.slot_addr(tail);
    add.cas_old = 1;
    e.post_work_request(wq, add);
    WrDescriptor cas;
    cas.opcode = Opcode::CAS;
    cas.dst_addr = q.slot_addr(tail);
    cas.cas_old = encode_word0(Opcode::ENABLE, laps);
    cas.cas_new = encode_word0(Opcode::NOOP, laps);
    e.post_work_request(wq, cas);
    e.post_work_request(wq, make_copy(Opcode::READ, q.slot_addr(tail) + 4, 4,
                                      q.slot_addr(0) + wr_field::wqe_count));
    e.post_work_request(wq, make_copy(Opcode::READ, q.slot_addr(tail) + 4, 4,
                                      qc.slot_addr(0) + wr_field::wqe_count));
    e.post_work_request(wq, make_enable(ctl, 2, true));

    e.post_work_request(ctl, make_wait(wq, 1));
    e.post_work_request(ctl, make_enable(wq, static_cast<std::uint32_t>(frame), true));
    r.posted_wrs = frame + 2;

    e.host_enable(wq, frame);
    e.host_enable(ctl, 0);
    e.ring_doorbell(wq);
    e.ring_doorbell(ctl);
    e.run_until_quiescent(time_cap_us);

    WrBytes tail_buf;
    e.mem_read(arena.host, q.slot_addr(tail), tail_buf.data(), kWrSize);
    r.laps = decode_wr(tail_buf).id;
    return r;
}

// ---------------------------------------------------------------------------
// Capability checks
// ---------------------------------------------------------------------------

bool turing_check_memory(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (unsigned trial = 0; trial < 8; ++trial) {
        Engine e(CostModel{}, seed + trial);
        HostId h = e.add_host("nic-host", 1 << 20);
        MovArena a = make_mov_arena(e, h, 8, 256);
        MovState init;
        init.regs.resize(8);
        init.mem_base = a.mem_base;
        init.mem.resize(256);
        for (auto& b : init.mem) b = static_cast<std::uint8_t>(rng());
        // Registers 0..6 hold stable in-window addresses with headroom for
        // the largest indexed displacement; register 7 is a value scratch.
        for (auto& rg : init.regs) rg = a.mem_base + (rng() % 28) * 8;
        load_mov_state(e, a, init);

        std::vector<MovInstr> prog;
        for (unsigned i = 0; i < 12; ++i) {
            MovInstr in;
            in.mode = (rng() % 2) ? MovMode::indirect : MovMode::indexed;
            in.is_store = rng() % 2;
            in.dst_reg = in.is_store ? rng() % 4 : 7;
            in.src_reg = in.is_store ? 4 + rng() % 3 : rng() % 4;
            in.constant = (rng() % 4) * 8;
            prog.push_back(in);
        }

        MovRunResult run = run_mov_program(e, a, prog, 1, false);
        (void)run;
        MovState got = read_mov_state(e, a);
        MovState want = interpret_mov(prog, init, 1);
        if (got.regs != want.regs || got.mem != want.mem) return false;
    }
    return true;
}

bool turing_check_branching(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (unsigned trial = 0; trial < 8; ++trial) {
        Engine e(CostModel{}, seed + trial);
        HostId server = e.add_host("server", 1 << 20);
        HostId client = e.add_host("client", 1 << 20);
        std::uint64_t y = rng() % 1000 + 1;
        std::uint64_t x = (trial % 2) ? y : (rng() % 1000 + 1);
        ConstructPlan plan = build_if(e, server, client, PredicateKind::eq, Operand48{x});
        auto got = run_trigger(e, plan, Operand48{y}, 1e6);
        bool want = (x == y);
        if (!got || (*got == 1) != want) return false;
    }
    return true;
}

bool turing_check_repetition(std::uint64_t seed) {
    Engine e(CostModel{}, seed);
    HostId h = e.add_host("nic-host", 1 << 20);
    MovArena a = make_mov_arena(e, h, 4, 64);
    MovState init;
    init.regs = {a.mem_base, a.mem_base + 8, 0, 0};
    init.mem_base = a.mem_base;
    init.mem.resize(64, 0);
    load_mov_state(e, a, init);

    MovInstr body;  // mem[r1] = r0 each lap
    body.mode = MovMode::indirect;
    body.is_store = true;
    body.dst_reg = 1;
    body.src_reg = 0;
    std::vector<MovInstr> prog = {body};

    std::uint64_t frame = instr_chain_len(body) + 6;
    unsigned laps = static_cast<unsigned>(10 * frame + 5);
    std::size_t trace_before = e.trace().entries.size();
    MovRunResult run = run_mov_program(e, a, prog, laps, true);
    if (run.laps != laps) return false;
    if (run.host_assisted) return false;

    // No host involvement after setup: every executed WR past the initial
    // doorbell batch was released by WAIT/ENABLE machinery.
    unsigned host_initiated = 0;
    for (std::size_t i = trace_before; i < e.trace().entries.size(); ++i) {
        Initiator init_kind = e.trace().entries[i].initiator;
        if (init_kind == Initiator::doorbell || init_kind == Initiator::prefetch)
            ++host_initiated;
    }
    if (host_initiated > 2) return false;

    MovState got = read_mov_state(e, a);
    MovState want = interpret_mov(prog, init, laps);
    return got.regs == want.regs && got.mem == want.mem;
}

}  // namespace redn

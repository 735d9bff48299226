#include "redn/constructs.hpp"

#include <cstring>

namespace redn {

namespace {

// Scratch allocator over a freshly registered server/client data region.
struct Cells {
    Engine& e;
    HostId host;
    std::uint64_t cursor;
    std::uint64_t limit;

    Cells(Engine& e_, HostId host_, std::uint64_t bytes) : e(e_), host(host_) {
        MemoryRegion r = e.allocate_region(host, bytes, RegionKind::data);
        cursor = r.base;
        limit = r.base + r.length;
    }
    std::uint64_t alloc(std::uint64_t n, std::uint64_t init = 0) {
        std::uint64_t addr = (cursor + 7) / 8 * 8;
        if (addr + n > limit)
            throw Error(ErrorKind::InsufficientCapacity, "construct data region exhausted");
        cursor = addr + n;
        if (n == 8) e.mem_write_u64(host, addr, init);
        return addr;
    }
};

struct ScatterList {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> entries;  // addr, len
    void add(std::uint64_t addr, std::uint64_t len) {
        if (entries.size() >= kMaxScatterEntries)
            throw Error(ErrorKind::ScatterOverflow, "trigger needs too many scatter entries");
        entries.emplace_back(addr, len);
    }
    std::uint64_t write(Engine& e, HostId host, Cells& cells) const {
        std::uint64_t desc = cells.alloc(8 + entries.size() * 16);
        e.mem_write_be(host, desc, entries.size(), 8);
        for (std::size_t i = 0; i < entries.size(); ++i) {
            e.mem_write_be(host, desc + 8 + i * 16, entries[i].first, 8);
            e.mem_write_be(host, desc + 16 + i * 16, entries[i].second, 8);
        }
        return desc;
    }
};

// Client-side plumbing shared by every construct: a result cell, a SEND
// staging buffer, and a queue pair whose server-side RECV scatters the
// trigger payload.
void wire_client(Engine& e, ConstructPlan& plan, Cells& server_cells,
                 const ScatterList& scatter) {
    MemoryRegion creg = e.allocate_region(plan.client, 4096, RegionKind::data);
    plan.client_key = creg.key;
    plan.result_addr = creg.base;
    plan.send_buf_addr = creg.base + 64;
    plan.result_sentinel = ~std::uint64_t{0};
    e.mem_write_u64(plan.client, plan.result_addr, plan.result_sentinel);

    plan.recv_wq = e.create_work_queue(plan.server, 4, false);
    plan.send_wq = e.create_work_queue(plan.client, 4, false);
    plan.qp = e.create_queue_pair(plan.client, plan.send_wq, plan.server, plan.recv_wq);

    WrDescriptor recv;
    recv.opcode = Opcode::RECV;
    recv.scatter_desc_addr = scatter.write(e, plan.server, server_cells);
    e.post_work_request(plan.recv_wq, recv);
    plan.wrs.push_back({plan.recv_wq, 0, Opcode::RECV, BudgetClass::none, WrRole::trigger,
                        "trigger recv"});
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

WrDescriptor make_cas(std::uint64_t dst, std::uint64_t old_v, std::uint64_t new_v,
                      bool signaled = false) {
    WrDescriptor d;
    d.opcode = Opcode::CAS;
    d.dst_addr = dst;
    d.cas_old = old_v;
    d.cas_new = new_v;
    d.signaled = signaled;
    return d;
}

}  // namespace

const char* predicate_name(PredicateKind kind) {
    switch (kind) {
        case PredicateKind::eq: return "eq";
        case PredicateKind::gt: return "gt";
        case PredicateKind::lt: return "lt";
    }
    return "?";
}

WrBudget ConstructPlan::budget(WrRole role) const {
    WrBudget b;
    for (const auto& w : wrs) {
        if (w.role != role) continue;
        switch (w.budget_class) {
            case BudgetClass::copy: ++b.copies; break;
            case BudgetClass::atomic: ++b.atomics; break;
            case BudgetClass::ordering: ++b.ordering; break;
            case BudgetClass::none: break;
        }
    }
    return b;
}

WrBudget ConstructPlan::core_budget_per_iteration() const {
    WrBudget b = budget(WrRole::core);
    if (iterations == 0 || b.copies % iterations || b.atomics % iterations ||
        b.ordering % iterations)
        throw Error(ErrorKind::InvalidArgument, "core budget not uniform across iterations");
    return {b.copies / iterations, b.atomics / iterations, b.ordering / iterations};
}

ConstructPlan build_if(Engine& e, HostId server, HostId client, PredicateKind pred,
                       Operand48 y) {
    if (pred == PredicateKind::gt && y.value >= kIdMax)
        throw Error(ErrorKind::FieldOverflow, "gt threshold must fit 48 bits with headroom");
    if (pred == PredicateKind::lt && y.value == 0)
        throw Error(ErrorKind::FieldOverflow, "lt threshold must be positive");

    ConstructPlan plan;
    plan.server = server;
    plan.client = client;
    plan.iterations = 1;

    Cells cells(e, server, 4096);
    std::uint64_t const_one = cells.alloc(8, 1);
    std::uint64_t staging = cells.alloc(8, 0);

    WqId wqa = e.create_work_queue(server, 8, true);
    WqId ctl = e.create_work_queue(server, 4, false);
    plan.main_wq = wqa;
    plan.ctl_wq = ctl;
    const WorkQueue& qa = e.work_queue(wqa);

    ScatterList scatter;
    auto push = [&](const WrDescriptor& d, BudgetClass cls, WrRole role, const char* label) {
        std::uint64_t idx = e.post_work_request(wqa, d);
        plan.wrs.push_back({wqa, idx, d.opcode, cls, role, label});
        return idx;
    };

    push(make_wait(0 /* patched below */, 1), BudgetClass::ordering, WrRole::core, "wait trigger");
    std::uint64_t cas_idx, armed_idx;
    if (pred == PredicateKind::eq) {
        // CAS window: the armed WR's word0 holds NOOP||x after the trigger
        // scatter; compare against NOOP||y.
        cas_idx = push(make_cas(qa.slot_addr(2), encode_word0(Opcode::NOOP, y.value),
                                encode_word0(Opcode::WRITE, 0), true),
                       BudgetClass::atomic, WrRole::core, "conditional cas");
        armed_idx = push(make_copy(Opcode::NOOP, const_one, 8, staging), BudgetClass::copy,
                         WrRole::core, "armed then-write");
        scatter.add(qa.slot_addr(armed_idx) + wr_field::id, 6);
        scatter.add(qa.slot_addr(cas_idx) + wr_field::cas_new + 2, 6);
        plan.payload_chunks = {6, 6};
    } else {
        // Inequality lowers to MAX/MIN staging plus an equality check:
        // x > y  <=>  max(x, y+1) == x, and symmetrically for <.
        std::uint64_t m_cell =
            cells.alloc(8, pred == PredicateKind::gt ? y.value + 1 : y.value - 1);
        WrDescriptor stage;
        stage.opcode = pred == PredicateKind::gt ? Opcode::MAX : Opcode::MIN;
        stage.dst_addr = m_cell;
        std::uint64_t stage_idx = push(stage, BudgetClass::atomic, WrRole::core, "minmax stage");
        push(make_copy(Opcode::READ, m_cell + 2, 6, qa.slot_addr(4) + wr_field::id),
             BudgetClass::copy, WrRole::core, "stage to cas window");
        cas_idx = push(make_cas(qa.slot_addr(4), 0 /* x patched */,
                                encode_word0(Opcode::WRITE, 0), true),
                       BudgetClass::atomic, WrRole::core, "conditional cas");
        armed_idx = push(make_copy(Opcode::NOOP, const_one, 8, staging), BudgetClass::copy,
                         WrRole::core, "armed then-write");
        scatter.add(qa.slot_addr(stage_idx) + wr_field::cas_old, 8);
        scatter.add(qa.slot_addr(cas_idx) + wr_field::cas_old, 8);
        plan.payload_chunks = {8, 8};
    }
    (void)armed_idx;

    wire_client(e, plan, cells, scatter);
    std::uint64_t resp_idx =
        push(make_copy(Opcode::WRITE, staging, 8, plan.result_addr, plan.client_key, true),
             BudgetClass::copy, WrRole::response, "response write");
    plan.response_slots.emplace_back(wqa, resp_idx);

    // Patch the trigger WAIT's target now that the recv queue exists.
    WrBytes head;
    e.mem_read(server, qa.slot_addr(0), head.data(), kWrSize);
    WrDescriptor head_wr = decode_wr(head);
    head_wr.target_wq = plan.recv_wq;
    head = encode_wr(head_wr);
    e.mem_write(server, qa.slot_addr(0), head.data(), kWrSize);

    std::uint64_t c0 = e.post_work_request(ctl, make_wait(wqa, 1));
    plan.wrs.push_back({ctl, c0, Opcode::WAIT, BudgetClass::ordering, WrRole::core, "ctl wait"});
    std::uint64_t c1 = e.post_work_request(ctl, make_enable(wqa, 2));
    plan.wrs.push_back({ctl, c1, Opcode::ENABLE, BudgetClass::ordering, WrRole::core,
                        "ctl enable"});

    e.host_enable(wqa, cas_idx + 1);
    e.ring_doorbell(wqa);
    e.ring_doorbell(ctl);
    return plan;
}

ConstructPlan build_while_unrolled(Engine& e, HostId server, HostId client,
                                   const std::vector<std::uint64_t>& values) {
    std::uint32_t n = static_cast<std::uint32_t>(values.size());
    if (n == 0 || n > kMaxScatterEntries)
        throw Error(ErrorKind::InvalidArgument, "unrolled loop needs 1..16 values");

    ConstructPlan plan;
    plan.server = server;
    plan.client = client;
    plan.iterations = n;

    Cells cells(e, server, 4096);
    WqId wqa = e.create_work_queue(server, 3 * n, true);
    WqId ctl = e.create_work_queue(server, 2 * n, false);
    plan.main_wq = wqa;
    plan.ctl_wq = ctl;
    const WorkQueue& qa = e.work_queue(wqa);

    ScatterList scatter;
    std::vector<std::uint64_t> armed_slots;
    for (std::uint32_t i = 0; i < n; ++i) {
        if (values[i] > kIdMax)
            throw Error(ErrorKind::FieldOverflow, "loop value exceeds 48 bits");
        std::uint64_t idx_cell = cells.alloc(8, i);
        std::uint64_t b = 3ull * i;
        // Iteration i: wait for the previous iteration (or the trigger),
        // compare x against values[i], conditionally answer index i.
        e.post_work_request(wqa, make_wait(i == 0 ? 0 : wqa, i == 0 ? 1 : i));
        plan.wrs.push_back({wqa, b, Opcode::WAIT, BudgetClass::ordering, WrRole::core,
                            "iter wait"});
        e.post_work_request(wqa, make_cas(qa.slot_addr(b + 2),
                                          encode_word0(Opcode::NOOP, values[i]),
                                          encode_word0(Opcode::WRITE, values[i]), true));
        plan.wrs.push_back({wqa, b + 1, Opcode::CAS, BudgetClass::atomic, WrRole::core,
                            "iter cas"});
        e.post_work_request(wqa, make_copy(Opcode::NOOP, idx_cell, 8, 0 /* client, below */));
        plan.wrs.push_back({wqa, b + 2, Opcode::NOOP, BudgetClass::copy, WrRole::core,
                            "iter armed answer"});
        armed_slots.push_back(b + 2);
        scatter.add(qa.slot_addr(b + 2) + wr_field::id, 6);
        plan.payload_chunks.push_back(6);
    }

    wire_client(e, plan, cells, scatter);

    // The armed answers and the trigger wait need client/recv ids that did
    // not exist while posting; patch them in place.
    for (std::uint64_t s : armed_slots) {
        WrBytes buf;
        e.mem_read(server, qa.slot_addr(s), buf.data(), kWrSize);
        WrDescriptor d = decode_wr(buf);
        d.dst_addr = plan.result_addr;
        d.remote_key = static_cast<std::uint16_t>(plan.client_key);
        buf = encode_wr(d);
        e.mem_write(server, qa.slot_addr(s), buf.data(), kWrSize);
        plan.response_slots.emplace_back(wqa, s);
    }
    {
        WrBytes buf;
        e.mem_read(server, qa.slot_addr(0), buf.data(), kWrSize);
        WrDescriptor d = decode_wr(buf);
        d.target_wq = plan.recv_wq;
        buf = encode_wr(d);
        e.mem_write(server, qa.slot_addr(0), buf.data(), kWrSize);
    }

    for (std::uint32_t i = 0; i < n; ++i) {
        std::uint64_t c0 = e.post_work_request(ctl, make_wait(wqa, i));
        plan.wrs.push_back({ctl, c0, Opcode::WAIT, BudgetClass::ordering, WrRole::core,
                            "ctl wait"});
        std::uint64_t c1 = e.post_work_request(ctl, make_enable(wqa, 3));
        plan.wrs.push_back({ctl, c1, Opcode::ENABLE, BudgetClass::ordering, WrRole::core,
                            "ctl enable"});
    }

    e.ring_doorbell(wqa);
    e.ring_doorbell(ctl);
    return plan;
}

ConstructPlan build_while_break(Engine& e, HostId server, HostId client,
                                const std::vector<std::uint64_t>& values) {
    std::uint32_t n = static_cast<std::uint32_t>(values.size());
    if (n == 0 || n > kMaxScatterEntries)
        throw Error(ErrorKind::InvalidArgument, "break loop needs 1..16 values");

    ConstructPlan plan;
    plan.server = server;
    plan.client = client;
    plan.iterations = n;

    Cells cells(e, server, 4096);
    std::uint64_t index_cell = cells.alloc(8, 0);
    std::uint64_t patch_cell = cells.alloc(8, 0);

    WqId wqa = e.create_work_queue(server, 4 * n + 1, true);
    WqId resp = e.create_work_queue(server, 1, true);
    plan.main_wq = wqa;
    plan.resp_wq = resp;
    const WorkQueue& qa = e.work_queue(wqa);

    // Armed break WRs overwrite the next ENABLE's flags word with this
    // pattern: release one WR on the response queue instead of the next
    // iteration.
    {
        std::uint8_t pat[8] = {0};
        store_be(pat + 1, resp, 2);
        store_be(pat + 3, 1, 4);
        e.mem_write(server, patch_cell, pat, 8);
    }

    ScatterList scatter;
    e.post_work_request(wqa, make_wait(0 /* recv, patched below */, 1));
    plan.wrs.push_back({wqa, 0, Opcode::WAIT, BudgetClass::ordering, WrRole::trigger,
                        "wait trigger"});
    for (std::uint32_t i = 0; i < n; ++i) {
        if (values[i] > kIdMax)
            throw Error(ErrorKind::FieldOverflow, "loop value exceeds 48 bits");
        std::uint64_t idx_cell = cells.alloc(8, i);
        std::uint64_t b = 1 + 4ull * i;
        e.post_work_request(wqa, make_copy(Opcode::WRITE, idx_cell, 8, index_cell));
        plan.wrs.push_back({wqa, b, Opcode::WRITE, BudgetClass::copy, WrRole::core,
                            "iter index write"});
        // Compare x (scattered into the break WR's id) with values[i].
        e.post_work_request(wqa, make_cas(qa.slot_addr(b + 2),
                                          encode_word0(Opcode::NOOP, values[i]),
                                          encode_word0(Opcode::WRITE, values[i])));
        plan.wrs.push_back({wqa, b + 1, Opcode::CAS, BudgetClass::atomic, WrRole::core,
                            "iter cas"});
        e.post_work_request(
            wqa, make_copy(Opcode::NOOP, patch_cell, 8,
                           qa.slot_addr(b + 3) + wr_field::signaled));
        plan.wrs.push_back({wqa, b + 2, Opcode::NOOP, BudgetClass::copy, WrRole::core,
                            "iter armed break"});
        e.post_work_request(wqa, make_enable(wqa, i + 1 < n ? 4 : 0));
        plan.wrs.push_back({wqa, b + 3, Opcode::ENABLE, BudgetClass::ordering, WrRole::core,
                            "iter tail enable"});
        scatter.add(qa.slot_addr(b + 2) + wr_field::id, 6);
        plan.payload_chunks.push_back(6);
    }

    wire_client(e, plan, cells, scatter);
    e.post_work_request(resp, make_copy(Opcode::WRITE, index_cell, 8, plan.result_addr,
                                        static_cast<std::uint16_t>(plan.client_key), true));
    plan.wrs.push_back({resp, 0, Opcode::WRITE, BudgetClass::copy, WrRole::response,
                        "shared response"});
    plan.response_slots.emplace_back(resp, 0);
    {
        WrBytes buf;
        e.mem_read(server, qa.slot_addr(0), buf.data(), kWrSize);
        WrDescriptor d = decode_wr(buf);
        d.target_wq = plan.recv_wq;
        buf = encode_wr(d);
        e.mem_write(server, qa.slot_addr(0), buf.data(), kWrSize);
    }

    e.host_enable(wqa, 5);  // the trigger wait plus iteration 0
    e.ring_doorbell(wqa);
    e.ring_doorbell(resp);
    return plan;
}

RecycledLoop make_recyclable(Engine& e, HostId server) {
    RecycledLoop loop;
    ConstructPlan& plan = loop.plan;
    plan.server = server;
    plan.client = server;  // self-running: no client link
    plan.iterations = 1;

    Cells cells(e, server, 1024);
    std::uint64_t lap_cnt = cells.alloc(8, 0);
    std::uint64_t scratch = cells.alloc(8, 0);
    std::uint64_t src_cell = cells.alloc(8, 0xC0FFEE);
    std::uint64_t dst_cell = cells.alloc(8, 0);
    loop.lap_counter_addr = lap_cnt;
    loop.copied_cell_addr = dst_cell;

    WqId wqa = e.create_work_queue(server, 7, true, true);
    WqId ctl = e.create_work_queue(server, 2, true, true);
    plan.main_wq = wqa;
    plan.ctl_wq = ctl;
    const WorkQueue& qa = e.work_queue(wqa);
    const WorkQueue& qc = e.work_queue(ctl);

    auto push = [&](WqId wq, const WrDescriptor& d, BudgetClass cls, const char* label) {
        std::uint64_t idx = e.post_work_request(wq, d);
        plan.wrs.push_back({wq, idx, d.opcode, cls, WrRole::core, label});
        return idx;
    };

    // One lap: gate on the control queue, run the body, bump the lap
    // counter, patch both WAIT thresholds from it, re-trigger control.
    push(wqa, make_wait(ctl, 0), BudgetClass::ordering, "lap entry wait");
    push(wqa, make_cas(scratch, 0, 0), BudgetClass::atomic, "body cas");
    push(wqa, make_copy(Opcode::WRITE, src_cell, 8, dst_cell), BudgetClass::copy, "body copy");
    {
        WrDescriptor add;
        add.opcode = Opcode::ADD;
        add.dst_addr = lap_cnt;
        add.cas_old = 1;
        push(wqa, add, BudgetClass::atomic, "lap counter add");
    }
    push(wqa, make_copy(Opcode::READ, lap_cnt + 4, 4, qa.slot_addr(0) + wr_field::wqe_count),
         BudgetClass::copy, "patch entry wait");
    push(wqa, make_copy(Opcode::READ, lap_cnt + 4, 4, qc.slot_addr(0) + wr_field::wqe_count),
         BudgetClass::copy, "patch control wait");
    push(wqa, make_enable(ctl, 2, true), BudgetClass::ordering, "tail enable");

    push(ctl, make_wait(wqa, 1), BudgetClass::ordering, "control wait");
    push(ctl, make_enable(wqa, 7, true), BudgetClass::ordering, "control enable");

    e.host_enable(wqa, 7);
    e.ring_doorbell(wqa);
    e.ring_doorbell(ctl);
    return loop;
}

void post_trigger(Engine& e, const ConstructPlan& plan,
                  const std::vector<std::uint8_t>& payload) {
    e.mem_write(plan.client, plan.send_buf_addr, payload.data(), payload.size());
    WrDescriptor send;
    send.opcode = Opcode::SEND;
    send.src_addr = plan.send_buf_addr;
    send.length = payload.size();
    send.signaled = true;
    e.post_work_request(plan.send_wq, send);
    e.ring_doorbell(plan.send_wq);
}

std::optional<std::uint64_t> run_trigger(Engine& e, const ConstructPlan& plan, Operand48 x,
                                         double time_cap_us) {
    std::vector<std::uint8_t> payload;
    for (unsigned w : plan.payload_chunks) {
        std::uint8_t buf[8];
        store_be(buf, x.value, w);
        payload.insert(payload.end(), buf, buf + w);
    }
    post_trigger(e, plan, payload);
    e.run_until_quiescent(time_cap_us);
    std::uint64_t result = e.mem_read_u64(plan.client, plan.result_addr);
    if (result == plan.result_sentinel) return std::nullopt;
    return result;
}

}  // namespace redn

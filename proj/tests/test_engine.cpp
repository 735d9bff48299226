#include <cmath>

#include "doctest.h"
#include "redn/engine.hpp"

using namespace redn;

namespace {

WrDescriptor noop(bool signaled = false) {
    WrDescriptor d;
    d.opcode = Opcode::NOOP;
    d.signaled = signaled;
    return d;
}

WrDescriptor wait_on(WqId target, std::uint32_t count) {
    WrDescriptor d;
    d.opcode = Opcode::WAIT;
    d.target_wq = target;
    d.wqe_count = count;
    return d;
}

}  // namespace

TEST_CASE("chain latency matches the closed form in all three ordering modes") {
    for (std::uint32_t n = 1; n <= 64; ++n) {
        // Batch: one doorbell prefetches the whole chain.
        {
            Engine e(CostModel{}, 1);
            HostId h = e.add_host("a", 1 << 20);
            WqId wq = e.create_work_queue(h, n, false);
            for (std::uint32_t i = 0; i < n; ++i) e.post_work_request(wq, noop());
            e.ring_doorbell(wq);
            e.run_until_quiescent();
            REQUIRE(e.trace().entries.size() == n);
            CHECK(e.trace().entries.back().time_us ==
                  doctest::Approx(e.chain_latency(n, FetchMode::batch)).epsilon(1e-12));
        }
        // Doorbell order: managed queue fetches one WR at a time.
        {
            Engine e(CostModel{}, 1);
            HostId h = e.add_host("a", 1 << 20);
            WqId wq = e.create_work_queue(h, n, true);
            for (std::uint32_t i = 0; i < n; ++i) e.post_work_request(wq, noop());
            e.host_enable(wq, n);
            e.ring_doorbell(wq);
            e.run_until_quiescent();
            REQUIRE(e.trace().entries.size() == n);
            CHECK(e.trace().entries.back().time_us ==
                  doctest::Approx(e.chain_latency(n, FetchMode::doorbell_order)).epsilon(1e-12));
        }
        // Completion order: each verb is gated on the previous completion.
        {
            Engine e(CostModel{}, 1);
            HostId h = e.add_host("a", 1 << 20);
            WqId wq = e.create_work_queue(h, 2 * n, false);
            for (std::uint32_t i = 0; i < n; ++i) {
                e.post_work_request(wq, noop(true));
                if (i + 1 < n) e.post_work_request(wq, wait_on(wq, i + 1));
            }
            e.ring_doorbell(wq);
            e.run_until_quiescent();
            double last = 0.0;
            for (const auto& t : e.trace().entries)
                if (t.opcode == Opcode::NOOP) last = t.time_us;
            CHECK(last ==
                  doctest::Approx(e.chain_latency(n, FetchMode::completion_order)).epsilon(1e-12));
        }
    }
}

TEST_CASE("chain latency of an empty chain is rejected") {
    Engine e(CostModel{}, 1);
    CHECK_THROWS_AS(e.chain_latency(0, FetchMode::batch), Error);
}

TEST_CASE("unmanaged queues snapshot at the doorbell; managed queues re-read") {
    // Unmanaged: edits after the doorbell are invisible (prefetch incoherence).
    {
        Engine e(CostModel{}, 1);
        HostId h = e.add_host("a", 1 << 20);
        MemoryRegion data = e.allocate_region(h, 256);
        WqId wq = e.create_work_queue(h, 1, false);
        e.post_work_request(wq, noop());
        e.ring_doorbell(wq);
        WrDescriptor w;
        w.opcode = Opcode::WRITE;
        w.src_addr = data.base;
        w.length = 8;
        w.dst_addr = data.base + 64;
        WrBytes buf = encode_wr(w);
        e.mem_write(h, e.work_queue(wq).slot_addr(0), buf.data(), kWrSize);
        e.run_until_quiescent();
        REQUIRE(e.trace().entries.size() == 1);
        CHECK(e.trace().entries[0].opcode == Opcode::NOOP);
    }
    // Managed: the same edit is picked up (just-in-time fetch).
    {
        Engine e(CostModel{}, 1);
        HostId h = e.add_host("a", 1 << 20);
        MemoryRegion data = e.allocate_region(h, 256);
        e.mem_write_u64(h, data.base, 0xABCD);
        WqId wq = e.create_work_queue(h, 1, true);
        e.post_work_request(wq, noop());
        e.ring_doorbell(wq);
        e.host_enable(wq, 1);
        WrDescriptor w;
        w.opcode = Opcode::WRITE;
        w.src_addr = data.base;
        w.length = 8;
        w.dst_addr = data.base + 64;
        WrBytes buf = encode_wr(w);
        e.mem_write(h, e.work_queue(wq).slot_addr(0), buf.data(), kWrSize);
        e.run_until_quiescent();
        REQUIRE(e.trace().entries.size() == 1);
        CHECK(e.trace().entries[0].opcode == Opcode::WRITE);
        CHECK(e.mem_read_u64(h, data.base + 64) == 0xABCD);
    }
}

TEST_CASE("doorbell count limits how many WRs become visible") {
    Engine e(CostModel{}, 1);
    HostId h = e.add_host("a", 1 << 20);
    WqId wq = e.create_work_queue(h, 4, false);
    for (int i = 0; i < 3; ++i) e.post_work_request(wq, noop());
    e.ring_doorbell(wq, 1);
    e.run_until_quiescent();
    CHECK(e.trace().entries.size() == 1);
    e.ring_doorbell(wq);
    e.run_until_quiescent();
    CHECK(e.trace().entries.size() == 3);
}

TEST_CASE("atomic verbs operate on big-endian 8-byte windows") {
    Engine e(CostModel{}, 1);
    HostId h = e.add_host("a", 1 << 20);
    MemoryRegion data = e.allocate_region(h, 256);
    std::uint64_t cell = data.base;
    std::uint64_t old_out = data.base + 8;
    e.mem_write_u64(h, cell, 100);

    auto run_one = [&](Opcode op, std::uint64_t operand, std::uint64_t swap) {
        WqId wq = e.create_work_queue(h, 1, false);
        WrDescriptor d;
        d.opcode = op;
        d.dst_addr = cell;
        d.src_addr = old_out;
        d.cas_old = operand;
        d.cas_new = swap;
        e.post_work_request(wq, d);
        e.ring_doorbell(wq);
        e.run_until_quiescent();
    };

    run_one(Opcode::ADD, 5, 0);
    CHECK(e.mem_read_u64(h, cell) == 105);
    CHECK(e.mem_read_u64(h, old_out) == 100);  // pre-image reported back
    run_one(Opcode::MAX, 90, 0);
    CHECK(e.mem_read_u64(h, cell) == 105);
    run_one(Opcode::MAX, 200, 0);
    CHECK(e.mem_read_u64(h, cell) == 200);
    run_one(Opcode::MIN, 150, 0);
    CHECK(e.mem_read_u64(h, cell) == 150);
    run_one(Opcode::CAS, 149, 999);  // mismatch: no swap
    CHECK(e.mem_read_u64(h, cell) == 150);
    run_one(Opcode::CAS, 150, 999);  // match: swap
    CHECK(e.mem_read_u64(h, cell) == 999);
}

TEST_CASE("send faults without a posted receive") {
    Engine e(CostModel{}, 1);
    HostId server = e.add_host("server", 1 << 20);
    HostId client = e.add_host("client", 1 << 20);
    MemoryRegion buf = e.allocate_region(client, 256);
    WqId send = e.create_work_queue(client, 4, false);
    WqId recv = e.create_work_queue(server, 4, false);
    e.create_queue_pair(client, send, server, recv);
    WrDescriptor s;
    s.opcode = Opcode::SEND;
    s.src_addr = buf.base;
    s.length = 16;
    e.post_work_request(send, s);
    e.ring_doorbell(send);
    e.run_until_quiescent();
    REQUIRE_FALSE(e.trace().faults.empty());
    CHECK(e.trace().faults[0].find("no_posted_recv") != std::string::npos);
}

TEST_CASE("receive scatter splits the payload across descriptor entries") {
    Engine e(CostModel{}, 1);
    HostId server = e.add_host("server", 1 << 20);
    HostId client = e.add_host("client", 1 << 20);
    MemoryRegion sbuf = e.allocate_region(client, 256);
    MemoryRegion dst = e.allocate_region(server, 512);
    WqId send = e.create_work_queue(client, 4, false);
    WqId recv = e.create_work_queue(server, 4, false);
    e.create_queue_pair(client, send, server, recv);

    // Descriptor: 2 entries, 6B then 10B.
    std::uint64_t desc = dst.base + 256;
    e.mem_write_be(server, desc, 2, 8);
    e.mem_write_be(server, desc + 8, dst.base, 8);
    e.mem_write_be(server, desc + 16, 6, 8);
    e.mem_write_be(server, desc + 24, dst.base + 64, 8);
    e.mem_write_be(server, desc + 32, 10, 8);
    WrDescriptor r;
    r.opcode = Opcode::RECV;
    r.scatter_desc_addr = desc;
    e.post_work_request(recv, r);

    std::uint8_t payload[16];
    for (int i = 0; i < 16; ++i) payload[i] = static_cast<std::uint8_t>(i + 1);
    e.mem_write(client, sbuf.base, payload, 16);
    WrDescriptor s;
    s.opcode = Opcode::SEND;
    s.src_addr = sbuf.base;
    s.length = 16;
    e.post_work_request(send, s);
    e.ring_doorbell(send);
    e.run_until_quiescent();

    std::uint8_t got[10] = {};
    e.mem_read(server, dst.base, got, 6);
    for (int i = 0; i < 6; ++i) CHECK(got[i] == payload[i]);
    e.mem_read(server, dst.base + 64, got, 10);
    for (int i = 0; i < 10; ++i) CHECK(got[i] == payload[6 + i]);
}

TEST_CASE("direct crashes abort queues; NIC-resident resources survive") {
    auto build = [](Engine& e, ResourceMode mode) {
        HostId h = e.add_host("victim", 1 << 20, mode);
        WqId wq = e.create_work_queue(h, 4, false);
        for (int i = 0; i < 3; ++i) e.post_work_request(wq, noop());
        e.ring_doorbell(wq);
        return h;
    };
    {
        Engine e(CostModel{}, 1);
        HostId h = build(e, ResourceMode::direct);
        e.crash_host(h);
        e.run_until_quiescent();
        CHECK(e.trace().entries.empty());
        CHECK_THROWS_AS(e.ring_doorbell(0), Error);
    }
    {
        Engine e(CostModel{}, 1);
        HostId h = build(e, ResourceMode::fork_hull);
        e.crash_host(h);
        e.run_until_quiescent();
        CHECK(e.trace().entries.size() == 3);  // the NIC kept executing
        CHECK_THROWS_AS(e.ring_doorbell(0), Error);  // but the host is gone
        CHECK_THROWS_AS(e.crash_host(h), Error);     // already dead
    }
}

TEST_CASE("identical seeds give byte-identical traces") {
    auto run = [](std::uint64_t seed) {
        Engine e(CostModel{}, seed);
        HostId h = e.add_host("a", 1 << 20);
        MemoryRegion data = e.allocate_region(h, 256);
        WqId wq = e.create_work_queue(h, 8, false);
        for (int i = 0; i < 4; ++i) {
            WrDescriptor d;
            d.opcode = Opcode::WRITE;
            d.src_addr = data.base;
            d.length = 8;
            d.dst_addr = data.base + 64 + 8 * i;
            d.signaled = i % 2;
            e.post_work_request(wq, d);
        }
        e.ring_doorbell(wq);
        e.run_until_quiescent();
        return e.trace().to_text();
    };
    CHECK(run(5) == run(5));
    // The seed feeds protection keys, which do not appear in the trace.
    {
        Engine a(CostModel{}, 5), b(CostModel{}, 6);
        HostId ha = a.add_host("a", 4096), hb = b.add_host("a", 4096);
        CHECK(a.allocate_region(ha, 64).key != b.allocate_region(hb, 64).key);
    }
}

TEST_CASE("quiescence reports blocked waits and time caps") {
    Engine e(CostModel{}, 1);
    HostId h = e.add_host("a", 1 << 20);
    WqId wq = e.create_work_queue(h, 2, false);
    WqId other = e.create_work_queue(h, 1, false);
    e.post_work_request(wq, wait_on(other, 1));  // never satisfied
    e.post_work_request(wq, noop());
    e.ring_doorbell(wq);
    QuiescenceReport rep = e.run_until_quiescent();
    CHECK_FALSE(rep.blocked_waits.empty());
    CHECK_FALSE(rep.time_cap_hit);
}

#include "doctest.h"
#include "redn/engine.hpp"

using namespace redn;

namespace {
Engine fresh() { return Engine(CostModel{}, 7); }
}  // namespace

TEST_CASE("region allocation is aligned and bounded") {
    Engine e = fresh();
    HostId h = e.add_host("a", 4096);
    MemoryRegion r1 = e.allocate_region(h, 100);
    MemoryRegion r2 = e.allocate_region(h, 100);
    CHECK(r2.base % 64 == 0);
    CHECK(r2.base >= r1.base + r1.length);
    CHECK(r1.key != 0);
    CHECK(r1.key != r2.key);
    CHECK_THROWS_AS(e.allocate_region(h, 1 << 20), Error);
}

TEST_CASE("explicit registration rejects overlap, except code over code") {
    Engine e = fresh();
    HostId h = e.add_host("a", 4096);
    e.register_memory_region(h, 0, 256, RegionKind::data);
    CHECK_THROWS_AS(e.register_memory_region(h, 128, 256, RegionKind::data), Error);
    e.register_memory_region(h, 1024, 256, RegionKind::code);
    CHECK_NOTHROW(e.register_memory_region(h, 1024, 128, RegionKind::code));
    CHECK_THROWS_AS(e.register_memory_region(h, 1024, 128, RegionKind::data), Error);
    CHECK_THROWS_AS(e.register_memory_region(h, 4000, 200, RegionKind::data), Error);
}

TEST_CASE("forced keys reproduce and collide loudly") {
    Engine e = fresh();
    HostId h = e.add_host("a", 4096);
    MemoryRegion r = e.register_memory_region(h, 0, 64, RegionKind::data, AccessFlags{}, 77);
    CHECK(r.key == 77);
    auto hit = e.resolve_key(77);
    REQUIRE(hit.has_value());
    CHECK(hit->second.base == 0);
    CHECK_THROWS_AS(e.register_memory_region(h, 128, 64, RegionKind::data, AccessFlags{}, 77),
                    Error);
}

TEST_CASE("work queue creation and capacity limits") {
    Engine e = fresh();
    HostId h = e.add_host("a", 1 << 16);
    CHECK_THROWS_AS(e.create_work_queue(h, 0, false), Error);
    CHECK_THROWS_AS(e.create_work_queue(h, 4, false, true), Error);  // recycled needs managed
    WqId wq = e.create_work_queue(h, 2, false);
    WrDescriptor d;
    d.opcode = Opcode::NOOP;
    e.post_work_request(wq, d);
    e.post_work_request(wq, d);
    CHECK_THROWS_AS(e.post_work_request(wq, d), Error);  // full, nothing executed yet
}

TEST_CASE("queue slots wrap with capacity in recycled mode") {
    Engine e = fresh();
    HostId h = e.add_host("a", 1 << 16);
    WqId wq = e.create_work_queue(h, 4, true, true);
    const WorkQueue& q = e.work_queue(wq);
    CHECK(q.slot_addr(0) == q.buffer_region.base);
    CHECK(q.slot_addr(5) == q.slot_addr(1));
}

TEST_CASE("queue pair getters round-trip") {
    Engine e = fresh();
    HostId server = e.add_host("server", 1 << 16);
    HostId client = e.add_host("client", 1 << 16);
    WqId send = e.create_work_queue(client, 4, false);
    WqId recv = e.create_work_queue(server, 4, false);
    QpId qp = e.create_queue_pair(client, send, server, recv);
    const QueuePair& p = e.queue_pair(qp);
    CHECK(p.client_host == client);
    CHECK(p.server_host == server);
    CHECK(p.send_wq == send);
    CHECK(p.recv_wq == recv);
    CHECK(e.queue_pair_count() == 1);
}

TEST_CASE("big-endian memory helpers agree") {
    Engine e = fresh();
    HostId h = e.add_host("a", 4096);
    e.mem_write_be(h, 64, 0x1122334455ull, 6);
    CHECK(e.mem_read_be(h, 64, 6) == 0x1122334455ull);
    std::uint8_t b = 0;
    e.mem_read(h, 64, &b, 1);
    CHECK(b == 0x00);
    e.mem_read(h, 65, &b, 1);
    CHECK(b == 0x11);
    CHECK_THROWS_AS(e.mem_read_be(h, 4090, 8), Error);
}

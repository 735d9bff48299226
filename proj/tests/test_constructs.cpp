#include <map>
#include <optional>
#include <random>
#include <vector>

#include "doctest.h"
#include "redn/constructs.hpp"

using namespace redn;

namespace {

struct Fixture {
    Engine e{CostModel{}, 7};
    HostId server;
    HostId client;
    Fixture() {
        server = e.add_host("server", 1 << 20);
        client = e.add_host("client", 1 << 20);
    }
};

std::optional<std::uint64_t> eval_if(PredicateKind p, std::uint64_t y, std::uint64_t x,
                                     std::uint64_t seed = 7) {
    Engine e(CostModel{}, seed);
    HostId server = e.add_host("server", 1 << 20);
    HostId client = e.add_host("client", 1 << 20);
    ConstructPlan plan = build_if(e, server, client, p, Operand48(y));
    return run_trigger(e, plan, Operand48(x));
}

}  // namespace

TEST_CASE("static verb budgets of the three constructs") {
    Fixture f;
    SUBCASE("conditional: 1 copy, 1 atomic, 3 ordering") {
        ConstructPlan eq = build_if(f.e, f.server, f.client, PredicateKind::eq, Operand48(100));
        CHECK(eq.budget(WrRole::core) == WrBudget{1, 1, 3});
        // gt/lt stage the comparison through MAX/MIN plus a READ, costing one
        // extra atomic and one extra copy over the equality form.
        for (PredicateKind p : {PredicateKind::gt, PredicateKind::lt}) {
            ConstructPlan plan = build_if(f.e, f.server, f.client, p, Operand48(100));
            WrBudget b = plan.budget(WrRole::core);
            CHECK(b == WrBudget{2, 2, 3});
        }
    }
    SUBCASE("unrolled loop: 1 copy, 1 atomic, 3 ordering per iteration") {
        std::vector<std::uint64_t> vals{10, 20, 30, 40, 50};
        ConstructPlan plan = build_while_unrolled(f.e, f.server, f.client, vals);
        CHECK(plan.iterations == vals.size());
        CHECK(plan.core_budget_per_iteration() == WrBudget{1, 1, 3});
    }
    SUBCASE("recycled loop: 3 copies, 2 atomics, 4 ordering per lap") {
        RecycledLoop loop = make_recyclable(f.e, f.server);
        CHECK(loop.plan.core_budget_per_iteration() == WrBudget{3, 2, 4});
    }
}

TEST_CASE("equality conditional against the oracle") {
    std::mt19937_64 rng(11);
    SUBCASE("small-domain sweep") {
        for (std::uint64_t y : {0ull, 1ull, 7ull, 255ull})
            for (std::uint64_t x = 0; x < 16; ++x) {
                auto r = eval_if(PredicateKind::eq, y, x);
                REQUIRE(r.has_value());
                CHECK(*r == (x == y ? 1u : 0u));
            }
    }
    SUBCASE("random 48-bit operands") {
        for (int i = 0; i < 200; ++i) {
            std::uint64_t y = rng() & kIdMax;
            std::uint64_t x = (i % 4 == 0) ? y : (rng() & kIdMax);
            auto r = eval_if(PredicateKind::eq, y, x);
            REQUIRE(r.has_value());
            CHECK(*r == (x == y ? 1u : 0u));
        }
    }
}

TEST_CASE("ordered conditionals against the oracle, including boundaries") {
    for (std::uint64_t y : {std::uint64_t(1), std::uint64_t(2), std::uint64_t(100), kIdMax - 1}) {
        for (std::uint64_t x : {std::uint64_t(0), y - 1, y, y + 1, kIdMax}) {
            auto gt = eval_if(PredicateKind::gt, y, x);
            REQUIRE(gt.has_value());
            CHECK(*gt == (x > y ? 1u : 0u));
            auto lt = eval_if(PredicateKind::lt, y, x);
            REQUIRE(lt.has_value());
            CHECK(*lt == (x < y ? 1u : 0u));
        }
    }
}

TEST_CASE("ordered conditionals reject unrepresentable thresholds") {
    Fixture f;
    CHECK_THROWS_AS(build_if(f.e, f.server, f.client, PredicateKind::gt, Operand48(kIdMax)),
                    Error);
    CHECK_THROWS_AS(build_if(f.e, f.server, f.client, PredicateKind::lt, Operand48(0)), Error);
    CHECK_THROWS_AS(Operand48(kIdMax + 1), Error);
}

TEST_CASE("unrolled loop returns the index of the matching value") {
    std::vector<std::uint64_t> vals{42, 7, 9000, 3, 0x123456789A};
    for (std::size_t i = 0; i < vals.size(); ++i) {
        Fixture f;
        ConstructPlan plan = build_while_unrolled(f.e, f.server, f.client, vals);
        auto r = run_trigger(f.e, plan, Operand48(vals[i]));
        REQUIRE(r.has_value());
        CHECK(*r == i);
    }
    Fixture f;
    ConstructPlan plan = build_while_unrolled(f.e, f.server, f.client, vals);
    CHECK_FALSE(run_trigger(f.e, plan, Operand48(11111)).has_value());
}

TEST_CASE("break loop returns the match index and stops executing") {
    std::vector<std::uint64_t> vals{5, 6, 7, 8, 9, 10};
    for (std::size_t i = 0; i < vals.size(); ++i) {
        Fixture f;
        ConstructPlan plan = build_while_break(f.e, f.server, f.client, vals);
        f.e.clear_trace();
        auto r = run_trigger(f.e, plan, Operand48(vals[i]));
        REQUIRE(r.has_value());
        CHECK(*r == i);
        // Early exit: later iterations never run, so the trace shrinks as the
        // match moves toward the front.
        std::size_t body = 0;
        for (const auto& t : f.e.trace().entries)
            if (t.wq == plan.main_wq) ++body;
        CHECK(body <= 1 + 4 * (i + 1));
    }
    Fixture f;
    ConstructPlan plan = build_while_break(f.e, f.server, f.client, vals);
    CHECK_FALSE(run_trigger(f.e, plan, Operand48(11111)).has_value());
}

TEST_CASE("break vs unrolled executed-work comparison") {
    std::vector<std::uint64_t> vals{1, 2, 3, 4, 5, 6, 7, 8};
    auto count_server = [](Engine& e, const ConstructPlan& plan) {
        std::size_t n = 0;
        for (const auto& t : e.trace().entries)
            if (t.wq == plan.main_wq || t.wq == plan.ctl_wq || t.wq == plan.resp_wq) ++n;
        return n;
    };
    std::size_t unrolled, broke;
    {
        Fixture f;
        ConstructPlan plan = build_while_unrolled(f.e, f.server, f.client, vals);
        f.e.clear_trace();
        run_trigger(f.e, plan, Operand48(1));  // match at the first value
        unrolled = count_server(f.e, plan);
    }
    {
        Fixture f;
        ConstructPlan plan = build_while_break(f.e, f.server, f.client, vals);
        f.e.clear_trace();
        run_trigger(f.e, plan, Operand48(1));
        broke = count_server(f.e, plan);
    }
    CHECK(broke < unrolled);  // breaking early does visibly less work
}

TEST_CASE("recycled loop runs laps beyond its queue capacity with no host posts") {
    Fixture f;
    RecycledLoop loop = make_recyclable(f.e, f.server);
    std::uint64_t src_probe = 0xCAFE;
    f.e.mem_write_u64(f.server, loop.copied_cell_addr, 0);
    f.e.clear_trace();
    f.e.run_until_quiescent(400.0);  // virtual-time cap ends the infinite loop
    std::uint64_t laps = f.e.mem_read_u64(f.server, loop.lap_counter_addr);
    CHECK(laps > 30);  // far beyond the 7-slot capacity
    (void)src_probe;
    // Zero host involvement: after setup every trace entry is chain-initiated.
    std::size_t host_initiated = 0;
    for (const auto& t : f.e.trace().entries)
        if (t.initiator == Initiator::doorbell) ++host_initiated;
    CHECK(host_initiated <= 2);  // only the two setup doorbells, if traced
}

TEST_CASE("indivisible budgets are rejected") {
    Fixture f;
    ConstructPlan plan = build_if(f.e, f.server, f.client, PredicateKind::eq, Operand48(9));
    plan.iterations = 2;  // 1 copy not divisible by 2
    CHECK_THROWS_AS(plan.core_budget_per_iteration(), Error);
}

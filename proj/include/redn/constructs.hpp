#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "redn/engine.hpp"

namespace redn {

// 48-bit operand carried in a WR's id field — the comparison unit of the
// CAS-based conditional.
struct Operand48 {
    std::uint64_t value = 0;
    explicit Operand48(std::uint64_t v) : value(v) {
        if (v > kIdMax) throw Error(ErrorKind::FieldOverflow, "operand exceeds 48 bits");
    }
};

enum class PredicateKind { eq, gt, lt };
const char* predicate_name(PredicateKind kind);

// Budget classes per chain-cost accounting: copy verbs (WRITE/READ/SEND,
// counting a conditionally armed WR by its armed form), atomic/calc verbs,
// and ordering verbs (WAIT/ENABLE). `none` marks WRs excluded from the
// construct's own budget (trigger and response plumbing).
enum class BudgetClass { none, copy, atomic, ordering };
enum class WrRole { core, trigger, response };

struct PlannedWr {
    WqId wq = 0;
    std::uint64_t index = 0;
    Opcode posted_opcode = Opcode::NOOP;
    BudgetClass budget_class = BudgetClass::none;
    WrRole role = WrRole::core;
    std::string label;
};

struct WrBudget {
    std::uint32_t copies = 0;
    std::uint32_t atomics = 0;
    std::uint32_t ordering = 0;
    bool operator==(const WrBudget&) const = default;
};

// A fully posted self-modifying chain, plus everything a client needs to
// trigger it and read its answer.
struct ConstructPlan {
    HostId server = 0;
    HostId client = 0;
    WqId main_wq = 0;
    WqId ctl_wq = 0;
    WqId resp_wq = 0;  // break loops: holds the shared response WR
    WqId recv_wq = 0;
    WqId send_wq = 0;
    QpId qp = 0;
    std::uint32_t iterations = 1;
    std::vector<PlannedWr> wrs;
    // Client-side result cell and the key that lets the server write it.
    std::uint64_t result_addr = 0;
    RegionKey client_key = 0;
    std::uint64_t result_sentinel = 0;
    // Trigger payload: client staging buffer and the widths (bytes) of the
    // operand copies the RECV scatter expects, each filled with x.
    std::uint64_t send_buf_addr = 0;
    std::vector<unsigned> payload_chunks;
    // (wq, logical index) of WRs whose WRITE execution constitutes the
    // response to the client.
    std::vector<std::pair<WqId, std::uint64_t>> response_slots;

    WrBudget budget(WrRole role) const;
    // Core budget divided by iteration count; throws if not divisible.
    WrBudget core_budget_per_iteration() const;
};

// Conditional: client sends x; server chain answers 1 if pred(x, y) holds,
// else the default 0 — with zero server-CPU involvement after setup.
ConstructPlan build_if(Engine& e, HostId server, HostId client, PredicateKind pred,
                       Operand48 y);

// Unrolled search loop over fixed values: answers the index i of the first
// value equal to x. Every iteration executes whether or not an earlier one
// matched; no response fires when x is absent. values.size() <= 16.
ConstructPlan build_while_unrolled(Engine& e, HostId server, HostId client,
                                   const std::vector<std::uint64_t>& values);

// Search loop with early exit: on a match the armed break WRITE retargets
// the iteration's tail ENABLE at the shared response queue, which both
// releases the response WRITE and stops releasing further iterations.
ConstructPlan build_while_break(Engine& e, HostId server, HostId client,
                                const std::vector<std::uint64_t>& values);

// A loop rewritten to reuse a fixed-capacity WQ forever: the tail patches
// the head/control WAIT thresholds from a lap counter (one ADD plus two
// READs) and an extra ENABLE re-triggers the control queue. Runs until the
// virtual-time cap with zero host activity.
struct RecycledLoop {
    ConstructPlan plan;
    std::uint64_t lap_counter_addr = 0;  // 8B big-endian lap count
    std::uint64_t copied_cell_addr = 0;  // destination of the body's copy
};
RecycledLoop make_recyclable(Engine& e, HostId server);

// Write the trigger payload (x repeated per payload_chunks), post the SEND,
// run to quiescence, and read the client result cell. Returns nullopt if
// the cell still holds the sentinel (no response fired).
std::optional<std::uint64_t> run_trigger(Engine& e, const ConstructPlan& plan, Operand48 x,
                                         double time_cap_us = 0.0);

// Low-level variant for callers that assemble their own payload bytes.
void post_trigger(Engine& e, const ConstructPlan& plan,
                  const std::vector<std::uint8_t>& payload);

}  // namespace redn

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "redn/constructs.hpp"
#include "redn/engine.hpp"

namespace redn {

// Textual program format (one statement per line, '#' comments):
//
//   host <name> <memory_bytes> <direct|fork_hull>
//   region <host> <base> <length> <code|data> <key>
//   wq <host> <base> <capacity> <managed 0|1> <recycled 0|1> <key>
//   qp <client_host> <send_wq> <server_host> <recv_wq>
//   mem <host> <addr> <hex bytes>
//   repost <wq> <count>            # re-register the first <count> slots as posted WRs
//   enable <wq> <count>
//   doorbell <wq> <count>
//   meta trigger <client> <send_wq> <send_buf_addr> <chunk widths...>
//   meta result <client> <addr> <sentinel>
//
// Serialization captures a quiescent, armed program (run the engine to
// quiescence first); parsing replays it into a fresh engine byte-for-byte.

struct TriggerSpec {
    bool present = false;
    HostId client = 0;
    WqId send_wq = 0;
    std::uint64_t send_buf_addr = 0;
    std::vector<unsigned> payload_chunks;
    bool has_result = false;
    HostId result_host = 0;
    std::uint64_t result_addr = 0;
    std::uint64_t result_sentinel = 0;
};

struct ParsedProgram {
    std::unique_ptr<Engine> engine;
    TriggerSpec trigger;
};

// Serializes the whole engine topology/state plus the plan's trigger
// metadata. The engine must be quiescent (no in-flight events).
std::string serialize_program(const Engine& e, const ConstructPlan& plan);

// Rebuilds an engine (with the given cost model and seed) from program text.
// Throws Error(ParseError) with a line diagnostic on malformed input.
ParsedProgram parse_program(const std::string& text, CostModel model = CostModel(),
                            std::uint64_t seed = 1);

// Fires the parsed program's trigger with operand x and returns the result
// cell (or nothing if it still holds the sentinel at quiescence).
std::optional<std::uint64_t> run_parsed_trigger(ParsedProgram& prog, std::uint64_t x,
                                                double time_cap_us = 1e6);

}  // namespace redn

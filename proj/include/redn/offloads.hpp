#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "redn/constructs.hpp"
#include "redn/engine.hpp"

namespace redn {

// ---------------------------------------------------------------------------
// Hash table with two-choice bucket placement.
//
// Bucket layout (32-byte stride): key(6B BE) | value_ptr(8B BE) | value_len(8B
// BE) | 10B pad. The 22-byte prefix byte-matches the id|src_addr|length window
// of a work request, so a single 22B READ of a bucket arms a response WR.
// Values are stored length-prefixed ([total_len 8B BE | bytes]) so one WRITE
// delivers both length and payload; value_len counts the prefix too.
// ---------------------------------------------------------------------------

constexpr std::uint64_t kBucketStride = 32;

struct HashTable {
    HostId host = 0;
    std::uint64_t bucket_base = 0;
    std::uint32_t bucket_count = 0;
    std::uint64_t seed = 0;
    std::uint64_t value_cursor = 0;  // bump allocator inside the value arena
    std::uint64_t value_limit = 0;

    std::uint64_t bucket_index(unsigned which, std::uint64_t key) const;
    std::uint64_t bucket_addr(unsigned which, std::uint64_t key) const {
        return bucket_base + bucket_index(which, key) * kBucketStride;
    }
};

HashTable create_hash_table(Engine& e, HostId host, std::uint32_t bucket_count,
                            std::uint64_t seed, std::uint64_t value_arena_bytes = 1 << 20);

// Two-choice insert; returns false if both candidate buckets are occupied.
// Keys must be nonzero and fit in 48 bits.
bool hash_insert(Engine& e, HashTable& table, std::uint64_t key,
                 const std::vector<std::uint8_t>& value);

// ---------------------------------------------------------------------------
// Linked list: node = key(6B BE) | value_ptr(8B BE) | value_len(8B BE) |
// next_addr(8B BE); next_addr == 0 terminates. Experiments use length 8.
// ---------------------------------------------------------------------------

constexpr std::uint64_t kNodeSize = 30;
constexpr unsigned kListLength = 8;

struct LinkedList {
    HostId host = 0;
    std::uint64_t head_addr = 0;
    unsigned length = 0;
};

LinkedList create_linked_list(Engine& e, HostId host,
                              const std::vector<std::uint64_t>& keys,
                              const std::vector<std::vector<std::uint8_t>>& values);

// ---------------------------------------------------------------------------
// Pre-posted offload programs triggered by a client SEND.
// ---------------------------------------------------------------------------

enum class OffloadKind { hash_parallel, hash_sequential, list_traverse, list_traverse_break };

struct OffloadProgram {
    OffloadKind kind;
    ConstructPlan plan;             // queues, client link, result cell, WR roles
    std::vector<WqId> probe_wqs;    // server queues running probe chains
};

OffloadProgram setup_hash_get(Engine& e, const HashTable& table, HostId client, bool parallel);
OffloadProgram setup_list_traverse(Engine& e, const LinkedList& list, HostId client,
                                   bool with_break);

struct GetResult {
    bool found = false;
    std::vector<std::uint8_t> value;
    double latency_us = 0.0;        // trigger post to response commit
    std::uint64_t executed_wrs = 0; // server-side WRs executed after the trigger
};

GetResult hash_get(Engine& e, const OffloadProgram& prog, const HashTable& table,
                   std::uint64_t key, double time_cap_us = 1e6);
GetResult list_get(Engine& e, const OffloadProgram& prog, std::uint64_t key,
                   double time_cap_us = 1e6);

// ---------------------------------------------------------------------------
// mov-only computation. Registers are memory-resident 8B cells; instructions
// use immediate, indirect, or indexed addressing in load or store direction.
// ---------------------------------------------------------------------------

enum class MovMode { immediate, indirect, indexed };

struct MovInstr {
    MovMode mode = MovMode::immediate;
    bool is_store = false;
    unsigned dst_reg = 0;       // load: destination register; store: address register
    unsigned src_reg = 0;       // store: source register; indirect/indexed load: address register
    bool use_off_reg = false;   // indexed: offset from a register instead of the constant
    unsigned off_reg = 0;
    std::uint64_t constant = 0; // immediate value, or indexed displacement
};

// Plain-code oracle state: 8-byte big-endian cells at absolute addresses.
struct MovState {
    std::vector<std::uint64_t> regs;
    std::uint64_t mem_base = 0;
    std::vector<std::uint8_t> mem;
};

MovState interpret_mov(const std::vector<MovInstr>& prog, MovState state, unsigned laps);

// Engine-side arena holding the same registers and memory window.
struct MovArena {
    HostId host = 0;
    std::uint64_t reg_base = 0;
    unsigned reg_count = 0;
    std::uint64_t mem_base = 0;
    std::uint64_t mem_len = 0;
};

MovArena make_mov_arena(Engine& e, HostId host, unsigned reg_count, std::uint64_t mem_len);
void load_mov_state(Engine& e, const MovArena& arena, const MovState& state);
MovState read_mov_state(Engine& e, const MovArena& arena);

struct MovRunResult {
    std::uint64_t laps = 0;
    bool host_assisted = false;  // true when recycling was disabled
    WqId main_wq = 0;
    std::uint64_t posted_wrs = 0;
};

// Lowers the program onto a managed work queue and runs `laps` repetitions.
// With recycle=true the queue recycles in place and a self-modifying stop
// check halts it after exactly `laps` laps with zero host posts after setup;
// otherwise the chain is posted once per lap up front.
MovRunResult run_mov_program(Engine& e, const MovArena& arena,
                             const std::vector<MovInstr>& prog, unsigned laps, bool recycle,
                             double time_cap_us = 1e7);

// Capability checks: memory addressing (T1), conditional branching (T2),
// repeated execution without host involvement (T3).
bool turing_check_memory(std::uint64_t seed);
bool turing_check_branching(std::uint64_t seed);
bool turing_check_repetition(std::uint64_t seed);

}  // namespace redn

#pragma once

#include <array>
#include <cstdint>

#include "redn/error.hpp"

namespace redn {

// 64-byte work request record. All multi-byte fields are big endian so that
// pointers and keys read out of data structures land directly in WR fields.
//
//   word0  [ 0.. 8)  opcode (2B) || id (6B)       <- one aligned 8B CAS window
//   word1  [ 8..16)  src_addr
//   word2  [16..24)  length
//   word3  [24..32)  dst_addr
//   word4  [32..40)  cas_old / add operand / immediate
//   word5  [40..48)  cas_new
//   word6  [48..56)  signaled (1B) || target_wq (2B) || wqe_count (4B) || reserved (1B)
//   word7  [56..64)  scatter descriptor address (RECV), otherwise
//                    reserved (6B) || remote_key (2B)
//
// Bytes [2..24) are contiguous id||src_addr||length: a single 22-byte READ of
// a bucket's key||ptr||len prefix arms a pre-posted response WR in place.

inline constexpr std::size_t kWrSize = 64;
inline constexpr std::uint64_t kIdMax = (std::uint64_t{1} << 48) - 1;
inline constexpr std::size_t kMaxScatterEntries = 16;

// Byte offsets within a WR slot, used when chains patch each other.
namespace wr_field {
inline constexpr std::size_t word0 = 0;
inline constexpr std::size_t opcode = 0;
inline constexpr std::size_t id = 2;
inline constexpr std::size_t src_addr = 8;
inline constexpr std::size_t length = 16;
inline constexpr std::size_t dst_addr = 24;
inline constexpr std::size_t cas_old = 32;
inline constexpr std::size_t cas_new = 40;
inline constexpr std::size_t signaled = 48;
inline constexpr std::size_t target_wq = 49;
inline constexpr std::size_t wqe_count = 51;
inline constexpr std::size_t word7 = 56;
inline constexpr std::size_t remote_key = 62;
}  // namespace wr_field

enum class Opcode : std::uint16_t {
    NOOP = 0,
    WRITE = 1,
    READ = 2,
    SEND = 3,
    RECV = 4,
    CAS = 5,
    ADD = 6,
    WRITE_IMM = 7,
    MAX = 8,
    MIN = 9,
    WAIT = 10,
    ENABLE = 11,
};

const char* opcode_name(Opcode op);
bool opcode_is_copy(Opcode op);      // WRITE, WRITE_IMM, READ, SEND
bool opcode_is_atomic(Opcode op);    // CAS, ADD, MAX, MIN
bool opcode_is_ordering(Opcode op);  // WAIT, ENABLE
bool opcode_is_write_class(Opcode op);  // SEND, WRITE, WRITE_IMM

struct WrDescriptor {
    Opcode opcode = Opcode::NOOP;
    std::uint64_t id = 0;  // 48-bit; carries no execution semantics
    std::uint64_t src_addr = 0;
    std::uint64_t length = 0;
    std::uint64_t dst_addr = 0;
    std::uint64_t cas_old = 0;  // also ADD operand / WRITE_IMM immediate
    std::uint64_t cas_new = 0;
    bool signaled = false;
    std::uint16_t target_wq = 0;   // WAIT / ENABLE target
    std::uint32_t wqe_count = 0;   // WAIT threshold / ENABLE count
    std::uint16_t remote_key = 0;  // region key for the remote side, 0 = local
    std::uint64_t scatter_desc_addr = 0;  // RECV only

    bool operator==(const WrDescriptor&) const = default;
};

using WrBytes = std::array<std::uint8_t, kWrSize>;

WrBytes encode_wr(const WrDescriptor& d);  // throws FieldOverflow if id >= 2^48
WrDescriptor decode_wr(const WrBytes& bytes);

// The 64-bit value occupying word0 for a given opcode/id pair. This is the
// unit a conditional CAS compares and swaps.
std::uint64_t encode_word0(Opcode op, std::uint64_t id);

// Big-endian helpers shared by the engine and the offload builders.
void store_be(std::uint8_t* p, std::uint64_t v, std::size_t n);
std::uint64_t load_be(const std::uint8_t* p, std::size_t n);

}  // namespace redn

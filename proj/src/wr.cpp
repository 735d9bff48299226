#include "redn/wr.hpp"

namespace redn {

const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::OutOfBounds: return "OutOfBounds";
        case ErrorKind::OverlapViolation: return "OverlapViolation";
        case ErrorKind::AccessDenied: return "AccessDenied";
        case ErrorKind::InvalidCapacity: return "InvalidCapacity";
        case ErrorKind::QueueFull: return "QueueFull";
        case ErrorKind::FieldOverflow: return "FieldOverflow";
        case ErrorKind::NoPostedRecv: return "NoPostedRecv";
        case ErrorKind::DeadHost: return "DeadHost";
        case ErrorKind::AlreadyDead: return "AlreadyDead";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::InsufficientCapacity: return "InsufficientCapacity";
        case ErrorKind::ScatterOverflow: return "ScatterOverflow";
        case ErrorKind::ParseError: return "ParseError";
    }
    return "Unknown";
}

const char* opcode_name(Opcode op) {
    switch (op) {
        case Opcode::NOOP: return "NOOP";
        case Opcode::WRITE: return "WRITE";
        case Opcode::READ: return "READ";
        case Opcode::SEND: return "SEND";
        case Opcode::RECV: return "RECV";
        case Opcode::CAS: return "CAS";
        case Opcode::ADD: return "ADD";
        case Opcode::WRITE_IMM: return "WRITE_IMM";
        case Opcode::MAX: return "MAX";
        case Opcode::MIN: return "MIN";
        case Opcode::WAIT: return "WAIT";
        case Opcode::ENABLE: return "ENABLE";
    }
    return "?";
}

bool opcode_is_copy(Opcode op) {
    return op == Opcode::WRITE || op == Opcode::WRITE_IMM || op == Opcode::READ ||
           op == Opcode::SEND;
}

bool opcode_is_atomic(Opcode op) {
    return op == Opcode::CAS || op == Opcode::ADD || op == Opcode::MAX || op == Opcode::MIN;
}

bool opcode_is_ordering(Opcode op) { return op == Opcode::WAIT || op == Opcode::ENABLE; }

bool opcode_is_write_class(Opcode op) {
    return op == Opcode::SEND || op == Opcode::WRITE || op == Opcode::WRITE_IMM;
}

void store_be(std::uint8_t* p, std::uint64_t v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = static_cast<std::uint8_t>(v >> (8 * (n - 1 - i)));
    }
}

std::uint64_t load_be(const std::uint8_t* p, std::size_t n) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) {
        v = (v << 8) | p[i];
    }
    return v;
}

std::uint64_t encode_word0(Opcode op, std::uint64_t id) {
    return (static_cast<std::uint64_t>(op) << 48) | (id & kIdMax);
}

WrBytes encode_wr(const WrDescriptor& d) {
    if (d.id > kIdMax) {
        throw Error(ErrorKind::FieldOverflow, "id exceeds 48 bits");
    }
    WrBytes b{};
    store_be(b.data() + wr_field::opcode, static_cast<std::uint64_t>(d.opcode), 2);
    store_be(b.data() + wr_field::id, d.id, 6);
    store_be(b.data() + wr_field::src_addr, d.src_addr, 8);
    store_be(b.data() + wr_field::length, d.length, 8);
    store_be(b.data() + wr_field::dst_addr, d.dst_addr, 8);
    store_be(b.data() + wr_field::cas_old, d.cas_old, 8);
    store_be(b.data() + wr_field::cas_new, d.cas_new, 8);
    b[wr_field::signaled] = d.signaled ? 1 : 0;
    store_be(b.data() + wr_field::target_wq, d.target_wq, 2);
    store_be(b.data() + wr_field::wqe_count, d.wqe_count, 4);
    if (d.opcode == Opcode::RECV) {
        store_be(b.data() + wr_field::word7, d.scatter_desc_addr, 8);
    } else {
        store_be(b.data() + wr_field::remote_key, d.remote_key, 2);
    }
    return b;
}

WrDescriptor decode_wr(const WrBytes& b) {
    WrDescriptor d;
    d.opcode = static_cast<Opcode>(load_be(b.data() + wr_field::opcode, 2));
    d.id = load_be(b.data() + wr_field::id, 6);
    d.src_addr = load_be(b.data() + wr_field::src_addr, 8);
    d.length = load_be(b.data() + wr_field::length, 8);
    d.dst_addr = load_be(b.data() + wr_field::dst_addr, 8);
    d.cas_old = load_be(b.data() + wr_field::cas_old, 8);
    d.cas_new = load_be(b.data() + wr_field::cas_new, 8);
    d.signaled = b[wr_field::signaled] != 0;
    d.target_wq = static_cast<std::uint16_t>(load_be(b.data() + wr_field::target_wq, 2));
    d.wqe_count = static_cast<std::uint32_t>(load_be(b.data() + wr_field::wqe_count, 4));
    if (d.opcode == Opcode::RECV) {
        d.scatter_desc_addr = load_be(b.data() + wr_field::word7, 8);
    } else {
        d.remote_key = static_cast<std::uint16_t>(load_be(b.data() + wr_field::remote_key, 2));
    }
    return d;
}

}  // namespace redn

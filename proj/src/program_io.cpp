#include "redn/program_io.hpp"

#include <cstdio>
#include <sstream>

namespace redn {

namespace {

const char* mode_name(ResourceMode m) {
    return m == ResourceMode::direct ? "direct" : "fork_hull";
}

std::string hex_bytes(const std::uint8_t* p, std::size_t n) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(digits[p[i] >> 4]);
        out.push_back(digits[p[i] & 0xF]);
    }
    return out;
}

struct LineParser {
    std::vector<std::string> tok;
    std::size_t line_no;
    std::size_t next = 1;

    [[noreturn]] void fail(const std::string& msg) const {
        throw Error(ErrorKind::ParseError,
                    "line " + std::to_string(line_no) + ": " + msg);
    }
    const std::string& word() {
        if (next >= tok.size()) fail("missing field after '" + tok[next - 1] + "'");
        return tok[next++];
    }
    std::uint64_t num() {
        const std::string& w = word();
        try {
            std::size_t pos = 0;
            std::uint64_t v = std::stoull(w, &pos, 0);
            if (pos != w.size()) fail("malformed number '" + w + "'");
            return v;
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            fail("malformed number '" + w + "'");
        }
        return 0;  // unreachable
    }
    bool done() const { return next >= tok.size(); }
};

}  // namespace

std::string serialize_program(const Engine& e, const ConstructPlan& plan) {
    std::string out = "# rnic program v1\n";
    auto emit = [&](std::initializer_list<std::string> fields) {
        std::string line;
        for (const auto& f : fields) {
            if (!line.empty()) line += ' ';
            line += f;
        }
        out += line + "\n";
    };
    auto n = [](std::uint64_t v) { return std::to_string(v); };

    for (HostId h = 0; h < e.host_count(); ++h) {
        const Host& host = e.host(h);
        if (host.name.find_first_of(" \t") != std::string::npos)
            throw Error(ErrorKind::InvalidArgument, "host names must not contain whitespace");
        emit({"host", host.name, n(host.memory.size()), mode_name(host.resource_mode)});
    }

    // Non-buffer regions; queue buffers are recreated by their wq lines.
    for (HostId h = 0; h < e.host_count(); ++h) {
        for (const MemoryRegion& r : e.host(h).regions) {
            bool is_buffer = false;
            for (WqId w = 0; w < e.work_queue_count() && !is_buffer; ++w) {
                const MemoryRegion& b = e.work_queue(w).buffer_region;
                is_buffer = b.host == h && b.base == r.base && b.key == r.key;
            }
            if (is_buffer) continue;
            emit({"region", n(h), n(r.base), n(r.length),
                  r.kind == RegionKind::code ? "code" : "data", n(r.key)});
        }
    }

    for (WqId w = 0; w < e.work_queue_count(); ++w) {
        const WorkQueue& q = e.work_queue(w);
        if (e.completion_queue(w).count != 0)
            throw Error(ErrorKind::InvalidArgument,
                        "serialize requires a pre-trigger program (completions exist)");
        emit({"wq", n(q.host_id), n(q.buffer_region.base), n(q.capacity),
              q.managed ? "1" : "0", q.recycled ? "1" : "0", n(q.buffer_region.key)});
    }

    for (QpId qp = 0; qp < e.queue_pair_count(); ++qp) {
        const QueuePair& p = e.queue_pair(qp);
        emit({"qp", n(p.client_host), n(p.send_wq), n(p.server_host), n(p.recv_wq)});
    }

    constexpr std::size_t kRow = 32;
    for (HostId h = 0; h < e.host_count(); ++h) {
        const std::vector<std::uint8_t>& mem = e.host(h).memory;
        for (std::size_t off = 0; off < mem.size(); off += kRow) {
            std::size_t len = std::min(kRow, mem.size() - off);
            bool nonzero = false;
            for (std::size_t i = 0; i < len; ++i) nonzero |= mem[off + i] != 0;
            if (nonzero) emit({"mem", n(h), n(off), hex_bytes(mem.data() + off, len)});
        }
    }

    for (WqId w = 0; w < e.work_queue_count(); ++w)
        if (e.work_queue(w).posted_count > 0)
            emit({"repost", n(w), n(e.work_queue(w).posted_count)});
    for (WqId w = 0; w < e.work_queue_count(); ++w)
        if (e.work_queue(w).managed && e.work_queue(w).enabled_through > 0)
            emit({"enable", n(w), n(e.work_queue(w).enabled_through)});
    for (WqId w = 0; w < e.work_queue_count(); ++w)
        if (e.work_queue(w).doorbelled_through > 0)
            emit({"doorbell", n(w), n(e.work_queue(w).doorbelled_through)});

    {
        std::string line = "meta trigger " + n(plan.client) + " " + n(plan.send_wq) + " " +
                           n(plan.send_buf_addr);
        for (unsigned c : plan.payload_chunks) line += " " + n(c);
        out += line + "\n";
    }
    emit({"meta", "result", n(plan.client), n(plan.result_addr), n(plan.result_sentinel)});
    return out;
}

ParsedProgram parse_program(const std::string& text, CostModel model, std::uint64_t seed) {
    ParsedProgram prog;
    prog.engine = std::make_unique<Engine>(model, seed);
    Engine& e = *prog.engine;

    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw.substr(0, raw.find('#'));
        LineParser p;
        p.line_no = line_no;
        std::istringstream ls(line);
        std::string t;
        while (ls >> t) p.tok.push_back(t);
        if (p.tok.empty()) continue;

        try {
        const std::string& cmd = p.tok[0];
        if (cmd == "host") {
            std::string name = p.word();
            std::uint64_t bytes = p.num();
            std::string mode = p.word();
            if (mode != "direct" && mode != "fork_hull") p.fail("unknown resource mode " + mode);
            e.add_host(name, bytes,
                       mode == "direct" ? ResourceMode::direct : ResourceMode::fork_hull);
        } else if (cmd == "region") {
            HostId h = static_cast<HostId>(p.num());
            std::uint64_t base = p.num(), len = p.num();
            std::string kind = p.word();
            if (kind != "code" && kind != "data") p.fail("unknown region kind " + kind);
            RegionKey key = static_cast<RegionKey>(p.num());
            e.register_memory_region(h, base, len,
                                     kind == "code" ? RegionKind::code : RegionKind::data,
                                     AccessFlags{}, key);
        } else if (cmd == "wq") {
            HostId h = static_cast<HostId>(p.num());
            std::uint64_t base = p.num();
            std::uint32_t cap = static_cast<std::uint32_t>(p.num());
            bool managed = p.num() != 0;
            bool recycled = p.num() != 0;
            RegionKey key = static_cast<RegionKey>(p.num());
            e.create_work_queue_at(h, base, cap, managed, recycled, key);
        } else if (cmd == "qp") {
            HostId c = static_cast<HostId>(p.num());
            WqId s = static_cast<WqId>(p.num());
            HostId srv = static_cast<HostId>(p.num());
            WqId r = static_cast<WqId>(p.num());
            e.create_queue_pair(c, s, srv, r);
        } else if (cmd == "mem") {
            HostId h = static_cast<HostId>(p.num());
            std::uint64_t addr = p.num();
            const std::string& hex = p.word();
            if (hex.size() % 2 != 0) p.fail("odd hex digit count");
            std::vector<std::uint8_t> bytes(hex.size() / 2);
            for (std::size_t i = 0; i < bytes.size(); ++i) {
                auto nib = [&](char c) -> int {
                    if (c >= '0' && c <= '9') return c - '0';
                    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
                    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
                    p.fail(std::string("bad hex digit '") + c + "'");
                    return 0;  // unreachable
                };
                bytes[i] = static_cast<std::uint8_t>(nib(hex[2 * i]) << 4 | nib(hex[2 * i + 1]));
            }
            e.mem_write(h, addr, bytes.data(), bytes.size());
        } else if (cmd == "repost") {
            WqId w = static_cast<WqId>(p.num());
            std::uint64_t count = p.num();
            const WorkQueue& q = e.work_queue(w);
            for (std::uint64_t i = 0; i < count; ++i) {
                WrBytes buf;
                e.mem_read(q.host_id, q.slot_addr(i), buf.data(), kWrSize);
                e.post_work_request(w, decode_wr(buf));
            }
        } else if (cmd == "enable") {
            WqId w = static_cast<WqId>(p.num());
            e.host_enable(w, p.num());
        } else if (cmd == "doorbell") {
            WqId w = static_cast<WqId>(p.num());
            e.ring_doorbell(w, p.num());
        } else if (cmd == "meta") {
            const std::string& what = p.word();
            if (what == "trigger") {
                prog.trigger.present = true;
                prog.trigger.client = static_cast<HostId>(p.num());
                prog.trigger.send_wq = static_cast<WqId>(p.num());
                prog.trigger.send_buf_addr = p.num();
                while (!p.done()) prog.trigger.payload_chunks.push_back(
                    static_cast<unsigned>(p.num()));
            } else if (what == "result") {
                prog.trigger.has_result = true;
                prog.trigger.result_host = static_cast<HostId>(p.num());
                prog.trigger.result_addr = p.num();
                prog.trigger.result_sentinel = p.num();
            } else {
                p.fail("unknown meta item " + what);
            }
        } else {
            p.fail("unknown statement '" + cmd + "'");
        }
        } catch (const Error& err) {
            // Surface engine-side rejections (bad ids, overlapping regions,
            // ...) with the offending line, like syntax errors.
            if (err.kind() == ErrorKind::ParseError) throw;
            p.fail(err.what());
        }
    }
    // Settle setup-time fetch events; pre-trigger programs block at time ~0.
    e.run_until_quiescent(0.0);
    return prog;
}

std::optional<std::uint64_t> run_parsed_trigger(ParsedProgram& prog, std::uint64_t x,
                                                double time_cap_us) {
    if (!prog.trigger.present || !prog.trigger.has_result)
        throw Error(ErrorKind::InvalidArgument, "program has no trigger metadata");
    Engine& e = *prog.engine;
    std::vector<std::uint8_t> payload;
    for (unsigned w : prog.trigger.payload_chunks) {
        std::uint8_t buf[8];
        store_be(buf, x, w);
        payload.insert(payload.end(), buf, buf + w);
    }
    e.mem_write(prog.trigger.client, prog.trigger.send_buf_addr, payload.data(), payload.size());
    WrDescriptor send;
    send.opcode = Opcode::SEND;
    send.src_addr = prog.trigger.send_buf_addr;
    send.length = payload.size();
    send.signaled = true;
    e.post_work_request(prog.trigger.send_wq, send);
    e.ring_doorbell(prog.trigger.send_wq);
    e.run_until_quiescent(time_cap_us);
    std::uint64_t result = e.mem_read_u64(prog.trigger.result_host, prog.trigger.result_addr);
    if (result == prog.trigger.result_sentinel) return std::nullopt;
    return result;
}

}  // namespace redn

#include "redn/cost_model.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>

#include "redn/error.hpp"

namespace redn {

double CostModel::verb_exec_us(Opcode op) const {
    switch (op) {
        case Opcode::NOOP:
            return doorbell_mmio_us;
        case Opcode::WRITE:
        case Opcode::WRITE_IMM:
        case Opcode::SEND:
            return write_exec_us;
        case Opcode::READ:
            return read_exec_us;
        case Opcode::CAS:
        case Opcode::ADD:
            return atomic_exec_us;
        case Opcode::MAX:
        case Opcode::MIN:
            return calc_exec_us;
        case Opcode::RECV:
        case Opcode::WAIT:
        case Opcode::ENABLE:
            return 0.0;
    }
    return 0.0;
}

double CostModel::exec_extra_us(Opcode op) const {
    double full = verb_exec_us(op);
    if (full <= 0.0) return 0.0;
    // Marginal execution work beyond the shared doorbell/fetch pipeline.
    return full - doorbell_mmio_us;
}

double CostModel::order_increment_us(FetchMode mode) const {
    switch (mode) {
        case FetchMode::batch:
            return per_verb_wq_order_us;
        case FetchMode::completion_order:
            return per_verb_completion_order_us;
        case FetchMode::doorbell_order:
            return per_verb_doorbell_order_us;
    }
    return per_verb_wq_order_us;
}

double CostModel::stream_us(std::uint64_t bytes) const {
    if (bytes == 0) return 0.0;
    return static_cast<double>(bytes) * 8.0 / (latency_stream_gbps * 1000.0);
}

double CostModel::chain_latency_us(std::uint32_t n, Opcode op, FetchMode mode) const {
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "chain length must be >= 1");
    double first = verb_exec_us(op);
    double extra = exec_extra_us(op);
    return first + static_cast<double>(n - 1) * (order_increment_us(mode) + extra);
}

void CostModel::set(const std::string& key, const std::string& value) {
    double* dp = nullptr;
    if (key == "doorbell_mmio_us") dp = &doorbell_mmio_us;
    else if (key == "per_verb_wq_order_us") dp = &per_verb_wq_order_us;
    else if (key == "per_verb_completion_order_us") dp = &per_verb_completion_order_us;
    else if (key == "per_verb_doorbell_order_us") dp = &per_verb_doorbell_order_us;
    else if (key == "network_one_way_us") dp = &network_one_way_us;
    else if (key == "write_exec_us") dp = &write_exec_us;
    else if (key == "read_exec_us") dp = &read_exec_us;
    else if (key == "atomic_exec_us") dp = &atomic_exec_us;
    else if (key == "calc_exec_us") dp = &calc_exec_us;
    else if (key == "bandwidth_limit_gbps") dp = &bandwidth_limit_gbps;
    else if (key == "latency_stream_gbps") dp = &latency_stream_gbps;
    else if (key == "offload_trigger_us") dp = &offload_trigger_us;
    else if (key == "rpc_service_us") dp = &rpc_service_us;
    else if (key == "polling_overhead_us") dp = &polling_overhead_us;
    else if (key == "event_wakeup_us") dp = &event_wakeup_us;
    else if (key == "contention_base_us") dp = &contention_base_us;
    else if (key == "order_verb_pu_us") dp = &order_verb_pu_us;
    else if (key == "pcie_gbps") dp = &pcie_gbps;
    else if (key == "atomic_rate_cap") dp = &atomic_rate_cap;
    else if (key == "copy_rate_cap") dp = &copy_rate_cap;
    else if (key == "bootstrap_s") dp = &bootstrap_s;
    else if (key == "rebuild_s") dp = &rebuild_s;

    if (key == "pu_count_per_port") {
        std::size_t pos = 0;
        unsigned long v = std::stoul(value, &pos);
        if (pos != value.size() || v == 0)
            throw Error(ErrorKind::ParseError, "bad value for pu_count_per_port: " + value);
        pu_count_per_port = static_cast<std::uint32_t>(v);
        return;
    }
    if (dp == nullptr)
        throw Error(ErrorKind::ParseError, "unknown cost-model key: " + key);
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size())
        throw Error(ErrorKind::ParseError, "bad value for " + key + ": " + value);
    *dp = v;
}

void CostModel::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ParseError, "cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = line;
        if (auto h = s.find('#'); h != std::string::npos) s = s.substr(0, h);
        // trim
        auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        auto e = s.find_last_not_of(" \t\r");
        s = s.substr(b, e - b + 1);
        auto eq = s.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::ParseError,
                        path + ":" + std::to_string(lineno) + ": expected key=value");
        std::string key = s.substr(0, eq);
        std::string value = s.substr(eq + 1);
        auto trim = [](std::string& t) {
            auto tb = t.find_first_not_of(" \t");
            auto te = t.find_last_not_of(" \t");
            t = (tb == std::string::npos) ? std::string() : t.substr(tb, te - tb + 1);
        };
        trim(key);
        trim(value);
        if (key.empty() || value.empty())
            throw Error(ErrorKind::ParseError,
                        path + ":" + std::to_string(lineno) + ": expected key=value");
        try {
            set(key, value);
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            throw Error(ErrorKind::ParseError,
                        path + ":" + std::to_string(lineno) + ": bad value: " + value);
        }
    }
}

}  // namespace redn

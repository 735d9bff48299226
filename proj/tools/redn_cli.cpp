#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "redn/bench.hpp"
#include "redn/offloads.hpp"
#include "redn/program_io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitParseError = 2;
constexpr int kExitEngineError = 3;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw redn::Error(redn::ErrorKind::ParseError, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out) throw redn::Error(redn::ErrorKind::InvalidArgument, "cannot write " + path);
}

redn::CostModel load_model(const std::string& config_flag) {
    redn::CostModel m;
    std::string path = config_flag;
    if (path.empty()) {
        const char* env = std::getenv("REDN_CONFIG");
        if (env) path = env;
    }
    if (!path.empty()) m.load_file(path);
    return m;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-modifying RDMA program model: run programs, benchmarks, demos"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 1;
    double time_cap_us = 1e6;
    app.add_option("--config", config_path, "cost-model key=value config file");
    app.add_option("--seed", seed, "deterministic RNG seed");
    app.add_option("--time-cap-us", time_cap_us, "virtual-time cap per run");

    // --- run -------------------------------------------------------------
    auto* run = app.add_subcommand("run", "execute a program file");
    std::string program_path, trace_path;
    std::optional<std::uint64_t> trigger_x;
    run->add_option("program", program_path, "program file")->required();
    run->add_option("--x", trigger_x, "trigger operand");
    run->add_option("--trace", trace_path, "write the execution trace here");

    // --- bench -----------------------------------------------------------
    auto* bench = app.add_subcommand("bench", "run an experiment scenario");
    std::string scenario, csv_path, json_path;
    std::uint64_t value_size = 64;
    unsigned writers = 16;
    bench->add_option("scenario", scenario,
                      "hash-lat|hash-collision|list|ordering|contention|crash|throughput")
        ->required();
    bench->add_option("--csv", csv_path, "write CSV rows here");
    bench->add_option("--json", json_path, "write a JSON summary here");
    bench->add_option("--size", value_size, "value size in bytes");
    bench->add_option("--writers", writers, "max concurrent writers (contention)");

    // --- demo-turing -------------------------------------------------------
    auto* demo = app.add_subcommand("demo-turing", "run the computability capability checks");
    bool no_recycle = false;
    demo->add_flag("--no-recycle", no_recycle, "run the looped program host-assisted");

    auto* emit = app.add_subcommand("emit", "build a conditional and print it as program text");
    std::string emit_pred = "eq";
    std::uint64_t emit_y = 0;
    emit->add_option("--pred", emit_pred, "predicate: eq, gt, or lt")
        ->check(CLI::IsMember({"eq", "gt", "lt"}));
    emit->add_option("--y", emit_y, "comparison threshold (48-bit)")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        redn::CostModel model = load_model(config_path);

        if (*run) {
            redn::ParsedProgram prog;
            try {
                prog = redn::parse_program(read_file(program_path), model, seed);
            } catch (const redn::Error& err) {
                std::cerr << "parse error: " << err.what() << "\n";
                return kExitParseError;
            }
            if (trigger_x) {
                auto result = redn::run_parsed_trigger(prog, *trigger_x, time_cap_us);
                if (result)
                    std::cout << "result=" << *result << "\n";
                else
                    std::cout << "result=none\n";
            } else {
                prog.engine->run_until_quiescent(time_cap_us);
            }
            if (!trace_path.empty()) write_file(trace_path, prog.engine->trace().to_text());
            return kExitOk;
        }

        if (*bench) {
            redn::BenchConfig cfg;
            cfg.model = model;
            cfg.seed = seed;
            cfg.value_size = value_size;
            cfg.time_cap_us = time_cap_us;
            if (writers != 16) cfg.writer_counts = {0, writers};
            auto rows = redn::run_scenario(scenario, cfg);
            std::string csv = redn::to_csv(rows);
            if (!csv_path.empty())
                write_file(csv_path, csv);
            else
                std::cout << csv;
            if (!json_path.empty()) write_file(json_path, redn::to_json(rows));
            return kExitOk;
        }

        if (*emit) {
            redn::Engine e(model, seed);
            redn::HostId server = e.add_host("server", 1 << 20);
            redn::HostId client = e.add_host("client", 1 << 20);
            redn::PredicateKind pred = emit_pred == "eq"   ? redn::PredicateKind::eq
                                       : emit_pred == "gt" ? redn::PredicateKind::gt
                                                           : redn::PredicateKind::lt;
            redn::ConstructPlan plan =
                redn::build_if(e, server, client, pred, redn::Operand48(emit_y));
            e.run_until_quiescent();  // settle setup events before capture
            std::cout << redn::serialize_program(e, plan);
            return kExitOk;
        }

        if (*demo) {
            bool t1 = redn::turing_check_memory(seed);
            bool t2 = redn::turing_check_branching(seed);
            std::cout << "T1 read/write arbitrary memory: " << (t1 ? "pass" : "FAIL") << "\n";
            std::cout << "T2 conditional branching:       " << (t2 ? "pass" : "FAIL") << "\n";
            if (no_recycle) {
                // Run the looped program with the host re-posting each lap.
                redn::Engine e(model, seed);
                redn::HostId h = e.add_host("nic-host", 1 << 20);
                redn::MovArena a = redn::make_mov_arena(e, h, 4, 64);
                redn::MovState init;
                init.regs = {a.mem_base, a.mem_base + 8, 0, 0};
                init.mem_base = a.mem_base;
                init.mem.resize(64, 0);
                redn::load_mov_state(e, a, init);
                redn::MovInstr body;
                body.mode = redn::MovMode::indirect;
                body.is_store = true;
                body.dst_reg = 1;
                body.src_reg = 0;
                auto r = redn::run_mov_program(e, a, {body}, 8, false, time_cap_us);
                std::cout << "T3 repeated execution:          host-assisted mode ("
                          << r.laps << " laps via host posts)\n";
                return kExitOk;
            }
            bool t3 = redn::turing_check_repetition(seed);
            std::cout << "T3 repeated execution:          " << (t3 ? "pass" : "FAIL") << "\n";
            return (t1 && t2 && t3) ? kExitOk : kExitEngineError;
        }
    } catch (const redn::Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitEngineError;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitEngineError;
    }
    return kExitOk;
}

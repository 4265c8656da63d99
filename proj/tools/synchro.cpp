// Command-line front end: parses a system or trace file, runs the requested
// analysis, and reports in text, JSON, or DOT. Exit codes: 0 analysis ran
// and found nothing wrong (synchronizable / reachable / no deadlock),
// 1 a definite negative or finding, 2 inconclusive at the configured caps,
// 3 usage, parse, or input errors.

#include <chrono>
#include <cstdlib>
#include <limits>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "synchro/deadlock.hpp"
#include "synchro/instrument.hpp"
#include "synchro/json_io.hpp"
#include "synchro/model.hpp"
#include "synchro/sync.hpp"
#include "synchro/trace.hpp"

namespace {

using namespace synchro;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

SystemSpec load_spec(const std::string& path) {
    std::vector<std::string> warnings;
    SystemSpec spec = parse_system(read_file(path), &warnings);
    for (const std::string& w : warnings) std::cerr << path << ": warning: " << w << "\n";
    return spec;
}

size_t default_node_cap() {
    if (const char* env = std::getenv("SYNCHRO_NODE_CAP")) {
        char* end = nullptr;
        unsigned long long v = std::strtoull(env, &end, 10);
        if (end && *end == '\0' && v > 0) return static_cast<size_t>(v);
        std::cerr << "warning: ignoring malformed SYNCHRO_NODE_CAP\n";
    }
    return kDefaultNodeCap;
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    long long ms() const {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now() - start)
            .count();
    }
};

void print_steps(std::ostream& os, const SystemSpec& spec,
                 const std::vector<IndexedAction>& steps, const char* indent) {
    for (const IndexedAction& ia : steps) {
        os << indent;
        if (ia.act.kind == ActKind::Send)
            os << "send " << spec.procs[ia.act.actor].name << "->"
               << spec.procs[ia.act.dest].name;
        else
            os << "recv " << spec.procs[ia.act.actor].name;
        os << " " << spec.payload_name(ia.act.payload) << " #" << ia.mid << "\n";
    }
}

void print_cycle(std::ostream& os, const SystemSpec& spec, const Execution& cex,
                 const CycleReport& rep) {
    Trace t = trace_of(cex);
    ConflictGraph g = build_conflict_graph(t);
    os << "cycle: "
       << (rep.kind == CycleReport::Kind::BadCycle ? "bad cycle" : "oversize cycle")
       << " size " << rep.cycle_size << ":";
    for (int idx : rep.cycle)
        os << " #" << g.nodes[idx].mid << "("
           << spec.payload_name(t.actions.at(g.nodes[idx].send).act.payload) << ")";
    os << "\n";
}

int finish_verdict(const SystemSpec& spec, const Verdict& v, const std::string& format,
                   std::optional<long long> time_ms) {
    if (format == "json") {
        std::cout << verdict_to_json(spec, v, time_ms).dump(2) << "\n";
    } else {
        switch (v.result) {
            case Verdict::Result::Synchronizable:
                std::cout << "Synchronizable(" << v.k << ")\n";
                break;
            case Verdict::Result::Violation:
                std::cout << "Violation(" << v.k << ")\n";
                break;
            case Verdict::Result::NotSynchronizableAnyK:
                std::cout << "NotSynchronizableAnyK: " << v.reason << "\n";
                break;
            case Verdict::Result::Inconclusive:
                std::cout << "Inconclusive: " << v.reason << "\n";
                break;
        }
        if (v.counterexample) {
            if (v.cycle) print_cycle(std::cout, spec, *v.counterexample, *v.cycle);
            std::cout << "counterexample:\n";
            print_steps(std::cout, spec, v.counterexample->steps, "  ");
        }
        std::cout << "configs: " << v.configs << "\n";
        if (time_ms) std::cout << "time: " << *time_ms << " ms\n";
    }
    switch (v.result) {
        case Verdict::Result::Synchronizable: return 0;
        case Verdict::Result::Violation: return 1;
        case Verdict::Result::NotSynchronizableAnyK: return 1;
        case Verdict::Result::Inconclusive: return 2;
    }
    return 3;
}

int run_check(const std::string& path, int k, size_t node_cap, int jobs,
              const std::string& format, bool emit_time) {
    SystemSpec spec = load_spec(path);
    Timer timer;
    Verdict v = check_k_synchronizability(spec, k, node_cap, jobs);
    std::optional<long long> ms;
    if (emit_time) ms = timer.ms();
    return finish_verdict(spec, v, format, ms);
}

int run_min_k(const std::string& path, std::optional<int> cap, size_t node_cap, int jobs,
              const std::string& format, bool emit_time) {
    SystemSpec spec = load_spec(path);
    Timer timer;
    MinKReport rep = min_k_search(spec, cap, node_cap, jobs);
    std::optional<long long> ms;
    if (emit_time) ms = timer.ms();
    if (format == "json") {
        std::cout << min_k_to_json(spec, rep, ms).dump(2) << "\n";
        switch (rep.verdict.result) {
            case Verdict::Result::Synchronizable: return 0;
            case Verdict::Result::Inconclusive: return 2;
            default: return 1;
        }
    }
    std::cout << "flow bounds:\n";
    for (size_t i = 0; i < spec.procs.size(); ++i) {
        const ProcFlowBounds& b = rep.bounds.per_proc[i];
        std::cout << "  " << spec.procs[i].name << ": send ";
        if (b.send_bound)
            std::cout << *b.send_bound;
        else
            std::cout << "unbounded";
        std::cout << ", receive ";
        if (b.receive_bound)
            std::cout << *b.receive_bound;
        else
            std::cout << "unbounded";
        std::cout << "\n";
    }
    std::cout << "flow-bounded: " << (rep.bounds.flow_bounded ? "yes" : "no") << "\n";
    std::cout << "cap: " << rep.cap;
    if (rep.cap_is_auto)
        std::cout << " (auto: (send " << rep.bounds.send_bound << " + receive "
                  << rep.bounds.receive_bound << ") x " << spec.procs.size()
                  << " processes)";
    std::cout << "\n";
    std::cout << "iterations: " << rep.last_k_checked << "\n";
    return finish_verdict(spec, rep.verdict, format, ms);
}

int run_deadlock(const std::string& path, int k, const std::string& kind,
                 size_t node_cap, const std::string& format, bool emit_time) {
    SystemSpec spec = load_spec(path);
    struct Row {
        std::string name;
        DeadlockSearch search;
    };
    std::vector<Row> rows;
    Timer timer;
    if (kind == "empty-buffer" || kind == "all")
        rows.push_back({"empty-buffer", find_empty_buffer_deadlock(spec, k, node_cap)});
    if (kind == "orphan" || kind == "all")
        rows.push_back({"orphan", find_orphan_message(spec, k, node_cap)});
    if (kind == "unspecified-reception" || kind == "all")
        rows.push_back({"unspecified-reception",
                        find_unspecified_reception(spec, k, node_cap)});
    std::optional<long long> ms;
    if (emit_time) ms = timer.ms();

    bool found = false, inconclusive = false;
    for (const Row& r : rows) {
        found |= r.search.outcome == DeadlockSearch::Outcome::Found;
        inconclusive |= r.search.outcome == DeadlockSearch::Outcome::Inconclusive;
    }

    if (format == "json") {
        ojson j;
        j["k"] = k;
        ojson searches = ojson::array();
        for (const Row& r : rows) {
            ojson row = deadlock_to_json(spec, r.search, std::nullopt);
            ojson entry;
            entry["kind"] = r.name;
            for (auto& [key, val] : row.items()) entry[key] = val;
            searches.push_back(std::move(entry));
        }
        j["searches"] = std::move(searches);
        if (ms) j["stats"]["time_ms"] = *ms;
        std::cout << j.dump(2) << "\n";
    } else {
        for (const Row& r : rows) {
            std::cout << r.name << ": ";
            switch (r.search.outcome) {
                case DeadlockSearch::Outcome::None: std::cout << "none\n"; break;
                case DeadlockSearch::Outcome::Inconclusive:
                    std::cout << "inconclusive (node cap)\n";
                    break;
                case DeadlockSearch::Outcome::Found: {
                    const DeadlockReport& rep = *r.search.report;
                    std::cout << "found\n";
                    if (!rep.waiting.empty()) {
                        std::cout << "  waiting:";
                        for (Pid p : rep.waiting) std::cout << " " << spec.procs[p].name;
                        std::cout << "\n";
                    }
                    if (rep.receiver != kNoPid) {
                        std::cout << "  receiver: " << spec.procs[rep.receiver].name
                                  << ", cannot take:";
                        for (Val v : rep.offending)
                            std::cout << " " << spec.payload_name(v);
                        std::cout << "\n";
                    }
                    if (!rep.unmatched_sends.empty()) {
                        std::cout << "  unmatched:\n";
                        print_steps(std::cout, spec, rep.unmatched_sends, "    ");
                    }
                    std::cout << "  witness:\n";
                    print_steps(std::cout, spec, rep.witness.steps, "    ");
                    break;
                }
            }
        }
        if (ms) std::cout << "time: " << *ms << " ms\n";
    }
    if (found) return 1;
    if (inconclusive) return 2;
    return 0;
}

int run_reach(const std::string& path, int k, const std::string& proc,
              const std::string& state, size_t node_cap, const std::string& format,
              bool emit_time) {
    SystemSpec spec = load_spec(path);
    Pid p = spec.pid_of(proc);
    if (p == kNoPid) throw std::runtime_error("unknown process " + proc);
    StateId l = -1;
    for (size_t i = 0; i < spec.procs[p].state_names.size(); ++i)
        if (spec.procs[p].state_names[i] == state) l = static_cast<StateId>(i);
    if (l < 0) throw std::runtime_error("unknown state " + state + " of process " + proc);

    Timer timer;
    ReachResult r = sync_reach_local(spec, k, p, l, node_cap);
    std::optional<long long> ms;
    if (emit_time) ms = timer.ms();

    if (format == "json") {
        std::cout << reach_to_json(spec, p, l, r, ms).dump(2) << "\n";
    } else {
        switch (r.kind) {
            case ReachResult::Kind::Reachable: {
                std::cout << "Reachable: " << proc << " reaches " << state << "\n";
                std::vector<ExchangeLabel> labels = renumber_exchanges(r.witness);
                std::cout << "witness:\n";
                print_steps(std::cout, spec, flatten_exchanges(labels).steps, "  ");
                break;
            }
            case ReachResult::Kind::Unreachable:
                std::cout << "Unreachable: " << proc << " never reaches " << state
                          << " under " << k << "-exchange semantics\n";
                break;
            case ReachResult::Kind::Inconclusive:
                std::cout << "Inconclusive: node cap reached\n";
                break;
        }
        if (ms) std::cout << "time: " << *ms << " ms\n";
    }
    switch (r.kind) {
        case ReachResult::Kind::Reachable: return 0;
        case ReachResult::Kind::Unreachable: return 1;
        case ReachResult::Kind::Inconclusive: return 2;
    }
    return 3;
}

int run_trace(const std::string& path, int k, const std::string& format) {
    ojson j;
    try {
        j = ojson::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    TraceDoc doc = trace_doc_from_json(j);
    Trace t = trace_of(doc.steps);
    SystemSpec shell = shell_spec(doc);
    ConflictGraph g = build_conflict_graph(t);
    std::string dot = cg_to_dot(g, t, &shell);

    std::optional<CausalDeliveryWitness> causal = check_causal_delivery(t);
    CycleReport rep;
    bool sync = false;
    if (!causal) {
        rep = classify(g, k);
        sync = rep.kind == CycleReport::Kind::GoodWithin;
    }

    if (format == "json") {
        ojson out;
        out["k"] = k;
        out["synchronous"] = sync;
        if (causal) {
            ojson c;
            c["s1_mid"] = t.actions[causal->s1].mid;
            c["s2_mid"] = t.actions[causal->s2].mid;
            out["causal_delivery_violation"] = std::move(c);
        } else if (!sync) {
            out["cycle"] = cycle_to_json(rep, g, t, shell);
        }
        out["dot"] = dot;
        std::cout << out.dump(2) << "\n";
    } else if (format == "dot") {
        std::cout << dot;
    } else {
        if (causal) {
            std::cout << "not an asynchronous trace: causal delivery violation (mids "
                      << t.actions[causal->s1].mid << ", " << t.actions[causal->s2].mid
                      << " to the same destination)\n";
        } else if (sync) {
            std::cout << k << "-synchronous\n";
        } else {
            std::cout << "not " << k << "-synchronous: "
                      << (rep.kind == CycleReport::Kind::BadCycle ? "bad cycle"
                                                                  : "oversize cycle")
                      << " (size " << rep.cycle_size << ")\n";
        }
        std::cout << dot;
    }
    return sync ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"k-synchronizability analysis for asynchronous message-passing systems"};
    app.require_subcommand(1);

    std::string path, format = "text", kind = "all", proc, state;
    int k = 1, jobs = 1;
    std::optional<int> cap;
    size_t node_cap = default_node_cap();
    bool emit_time = false;

    const auto at_least_one = CLI::Range(1, std::numeric_limits<int>::max());
    auto add_common = [&](CLI::App* sub, bool with_k) {
        sub->add_option("input", path, "input file")->required();
        if (with_k) sub->add_option("-k", k, "exchange bound")->required()->check(at_least_one);
        sub->add_option("--node-cap", node_cap, "exploration node cap")
            ->check(at_least_one);
        sub->add_flag("--emit-time", emit_time, "include wall-clock time in the report");
    };

    CLI::App* c_check = app.add_subcommand("check", "decide k-synchronizability");
    add_common(c_check, true);
    c_check->add_option("--jobs", jobs, "worker threads")->check(at_least_one);
    c_check->add_option("--format", format, "text or json")
        ->check(CLI::IsMember({"text", "json"}));

    CLI::App* c_min = app.add_subcommand("min-k", "find the least synchronizable k");
    add_common(c_min, false);
    c_min->add_option("--cap", cap, "largest k to try")->check(at_least_one);
    c_min->add_option("--jobs", jobs, "worker threads")->check(at_least_one);
    c_min->add_option("--format", format, "text or json")
        ->check(CLI::IsMember({"text", "json"}));

    CLI::App* c_dead = app.add_subcommand("deadlock", "search for deadlocks");
    add_common(c_dead, true);
    c_dead->add_option("--kind", kind, "which deadlock class")
        ->check(CLI::IsMember({"empty-buffer", "orphan", "unspecified-reception", "all"}));
    c_dead->add_option("--format", format, "text or json")
        ->check(CLI::IsMember({"text", "json"}));

    CLI::App* c_reach = app.add_subcommand("reach", "local state reachability");
    add_common(c_reach, true);
    c_reach->add_option("-p,--process", proc, "process name")->required();
    c_reach->add_option("-s,--state", state, "state name")->required();
    c_reach->add_option("--format", format, "text or json")
        ->check(CLI::IsMember({"text", "json"}));

    CLI::App* c_trace = app.add_subcommand("trace", "analyze a recorded trace");
    c_trace->add_option("input", path, "trace file")->required();
    c_trace->add_option("-k", k, "exchange bound")->required()->check(at_least_one);
    c_trace->add_option("--format", format, "text, json, or dot")
        ->check(CLI::IsMember({"text", "json", "dot"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 3;
    }

    try {
        if (c_check->parsed())
            return run_check(path, k, node_cap, jobs, format, emit_time);
        if (c_min->parsed())
            return run_min_k(path, cap, node_cap, jobs, format, emit_time);
        if (c_dead->parsed())
            return run_deadlock(path, k, kind, node_cap, format, emit_time);
        if (c_reach->parsed())
            return run_reach(path, k, proc, state, node_cap, format, emit_time);
        if (c_trace->parsed()) return run_trace(path, k, format);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 3;
}

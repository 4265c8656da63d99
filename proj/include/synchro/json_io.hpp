#pragma once

// JSON encodings for executions, verdicts, and analysis reports, plus the
// self-contained trace document format. Field order is fixed so identical
// inputs serialize byte-identically.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "synchro/async.hpp"
#include "synchro/deadlock.hpp"
#include "synchro/instrument.hpp"
#include "synchro/model.hpp"
#include "synchro/sync.hpp"
#include "synchro/trace.hpp"

namespace synchro {

using ojson = nlohmann::ordered_json;

// A trace document carries its own name tables, so a trace file can be
// analyzed without the system it came from.
struct TraceDoc {
    std::vector<std::string> processes;
    std::vector<std::string> payloads;
    std::vector<IndexedAction> steps;
};

inline ojson steps_to_json(const std::vector<std::string>& processes,
                           const std::vector<std::string>& payloads,
                           const std::vector<IndexedAction>& steps) {
    ojson arr = ojson::array();
    for (const IndexedAction& ia : steps) {
        ojson s;
        s["kind"] = ia.act.kind == ActKind::Send ? "send" : "recv";
        s["actor"] = processes.at(ia.act.actor);
        if (ia.act.kind == ActKind::Send) s["dest"] = processes.at(ia.act.dest);
        s["payload"] = payloads.at(ia.act.payload);
        s["mid"] = ia.mid;
        arr.push_back(std::move(s));
    }
    return arr;
}

inline ojson execution_to_json(const SystemSpec& spec, const Execution& e) {
    ojson j;
    ojson procs = ojson::array();
    for (const ProcessDef& pd : spec.procs) procs.push_back(pd.name);
    j["processes"] = std::move(procs);
    j["payloads"] = spec.payload_names;
    std::vector<std::string> pnames;
    for (const ProcessDef& pd : spec.procs) pnames.push_back(pd.name);
    j["steps"] = steps_to_json(pnames, spec.payload_names, e.steps);
    return j;
}

inline ojson trace_doc_to_json(const TraceDoc& doc) {
    ojson j;
    j["processes"] = doc.processes;
    j["payloads"] = doc.payloads;
    j["steps"] = steps_to_json(doc.processes, doc.payloads, doc.steps);
    return j;
}

inline TraceDoc trace_doc_from_json(const ojson& j) {
    TraceDoc doc;
    if (!j.is_object() || !j.contains("steps"))
        throw std::runtime_error("trace document: expected an object with steps");
    if (j.contains("processes"))
        doc.processes = j.at("processes").get<std::vector<std::string>>();
    if (j.contains("payloads"))
        doc.payloads = j.at("payloads").get<std::vector<std::string>>();
    auto id_of = [](std::vector<std::string>& table, const std::string& name) {
        for (size_t i = 0; i < table.size(); ++i)
            if (table[i] == name) return static_cast<int>(i);
        table.push_back(name);
        return static_cast<int>(table.size()) - 1;
    };
    for (const ojson& s : j.at("steps")) {
        IndexedAction ia;
        std::string kind = s.at("kind").get<std::string>();
        if (kind == "send")
            ia.act.kind = ActKind::Send;
        else if (kind == "recv")
            ia.act.kind = ActKind::Recv;
        else
            throw std::runtime_error("trace document: step kind must be send or recv");
        ia.act.actor = id_of(doc.processes, s.at("actor").get<std::string>());
        if (ia.act.kind == ActKind::Send)
            ia.act.dest = id_of(doc.processes, s.at("dest").get<std::string>());
        ia.act.payload = id_of(doc.payloads, s.at("payload").get<std::string>());
        ia.mid = s.at("mid").get<Mid>();
        doc.steps.push_back(ia);
    }
    return doc;
}

// Name-table-only system shell, enough for pretty-printing a standalone
// trace document through the spec-based exporters.
inline SystemSpec shell_spec(const TraceDoc& doc) {
    SystemSpec spec;
    spec.name = "trace";
    spec.payload_names = doc.payloads;
    for (const std::string& p : doc.processes) {
        ProcessDef pd;
        pd.name = p;
        pd.initial = 0;
        pd.state_names.push_back("s0");
        pd.rebuild_outgoing();
        spec.procs.push_back(std::move(pd));
    }
    return spec;
}

inline ojson cycle_to_json(const CycleReport& rep, const ConflictGraph& g,
                           const Trace& t, const SystemSpec& spec) {
    ojson j;
    j["kind"] = rep.kind == CycleReport::Kind::BadCycle ? "BadCycle" : "OversizeCycle";
    j["size"] = rep.cycle_size;
    ojson nodes = ojson::array();
    for (int idx : rep.cycle) {
        const CGNode& n = g.nodes.at(idx);
        ojson nd;
        nd["mid"] = n.mid;
        nd["payload"] = spec.payload_name(t.actions.at(n.send).act.payload);
        nd["matched"] = n.matched();
        nodes.push_back(std::move(nd));
    }
    j["nodes"] = std::move(nodes);
    return j;
}

inline const char* verdict_name(Verdict::Result r) {
    switch (r) {
        case Verdict::Result::Synchronizable: return "Synchronizable";
        case Verdict::Result::Violation: return "Violation";
        case Verdict::Result::NotSynchronizableAnyK: return "NotSynchronizableAnyK";
        case Verdict::Result::Inconclusive: return "Inconclusive";
    }
    return "?";
}

inline ojson verdict_to_json(const SystemSpec& spec, const Verdict& v,
                             std::optional<long long> time_ms) {
    ojson j;
    j["result"] = verdict_name(v.result);
    j["k"] = v.k;
    if (v.counterexample) {
        j["counterexample"] = execution_to_json(spec, *v.counterexample);
        if (v.cycle) {
            Trace t = trace_of(*v.counterexample);
            j["cycle"] = cycle_to_json(*v.cycle, build_conflict_graph(t), t, spec);
        }
    }
    if (!v.reason.empty()) j["reason"] = v.reason;
    j["stats"]["configs"] = v.configs;
    if (time_ms) j["stats"]["time_ms"] = *time_ms;
    return j;
}

inline ojson bound_to_json(const std::optional<int>& b) {
    return b ? ojson(*b) : ojson(nullptr);
}

inline ojson min_k_to_json(const SystemSpec& spec, const MinKReport& rep,
                           std::optional<long long> time_ms) {
    ojson j = verdict_to_json(spec, rep.verdict, time_ms);
    ojson bounds;
    bounds["flow_bounded"] = rep.bounds.flow_bounded;
    bounds["send_bound"] =
        rep.bounds.flow_bounded ? ojson(rep.bounds.send_bound) : ojson(nullptr);
    bounds["receive_bound"] =
        rep.bounds.flow_bounded ? ojson(rep.bounds.receive_bound) : ojson(nullptr);
    ojson per = ojson::array();
    for (size_t i = 0; i < spec.procs.size(); ++i) {
        ojson row;
        row["process"] = spec.procs[i].name;
        row["send_bound"] = bound_to_json(rep.bounds.per_proc[i].send_bound);
        row["receive_bound"] = bound_to_json(rep.bounds.per_proc[i].receive_bound);
        per.push_back(std::move(row));
    }
    bounds["per_process"] = std::move(per);
    j["bounds"] = std::move(bounds);
    j["cap"] = rep.cap;
    j["cap_is_auto"] = rep.cap_is_auto;
    j["iterations"] = rep.last_k_checked;
    return j;
}

inline const char* deadlock_kind_name(DeadlockReport::Kind k) {
    switch (k) {
        case DeadlockReport::Kind::EmptyBufferDeadlock: return "EmptyBufferDeadlock";
        case DeadlockReport::Kind::OrphanMessage: return "OrphanMessage";
        case DeadlockReport::Kind::UnspecifiedReception: return "UnspecifiedReception";
    }
    return "?";
}

inline ojson deadlock_to_json(const SystemSpec& spec, const DeadlockSearch& s,
                              std::optional<long long> time_ms) {
    ojson j;
    switch (s.outcome) {
        case DeadlockSearch::Outcome::None: j["outcome"] = "None"; break;
        case DeadlockSearch::Outcome::Found: j["outcome"] = "Found"; break;
        case DeadlockSearch::Outcome::Inconclusive: j["outcome"] = "Inconclusive"; break;
    }
    if (s.report) {
        const DeadlockReport& r = *s.report;
        ojson rep;
        rep["kind"] = deadlock_kind_name(r.kind);
        rep["witness"] = execution_to_json(spec, r.witness);
        if (!r.waiting.empty()) {
            ojson w = ojson::array();
            for (Pid p : r.waiting) w.push_back(spec.procs.at(p).name);
            rep["waiting"] = std::move(w);
        }
        if (!r.unmatched_sends.empty()) {
            std::vector<std::string> pnames;
            for (const ProcessDef& pd : spec.procs) pnames.push_back(pd.name);
            rep["unmatched"] = steps_to_json(pnames, spec.payload_names, r.unmatched_sends);
        }
        if (r.receiver != kNoPid) rep["receiver"] = spec.procs.at(r.receiver).name;
        if (!r.offending.empty()) {
            ojson off = ojson::array();
            for (Val v : r.offending) off.push_back(spec.payload_name(v));
            rep["offending"] = std::move(off);
        }
        j["report"] = std::move(rep);
    }
    j["stats"]["configs"] = s.configs;
    if (time_ms) j["stats"]["time_ms"] = *time_ms;
    return j;
}

inline ojson reach_to_json(const SystemSpec& spec, Pid p, StateId l,
                           const ReachResult& r, std::optional<long long> time_ms) {
    ojson j;
    switch (r.kind) {
        case ReachResult::Kind::Reachable: j["outcome"] = "Reachable"; break;
        case ReachResult::Kind::Unreachable: j["outcome"] = "Unreachable"; break;
        case ReachResult::Kind::Inconclusive: j["outcome"] = "Inconclusive"; break;
    }
    j["process"] = spec.procs.at(p).name;
    j["state"] = spec.procs.at(p).state_names.at(l);
    if (r.kind == ReachResult::Kind::Reachable) {
        std::vector<ExchangeLabel> labels = renumber_exchanges(r.witness);
        j["witness"] = execution_to_json(spec, flatten_exchanges(labels));
    }
    if (time_ms) j["stats"]["time_ms"] = *time_ms;
    return j;
}

}  // namespace synchro

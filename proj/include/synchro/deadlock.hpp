#pragma once

// Deadlock detection over the k-exchange semantics: stuck configurations
// with nothing in flight, messages nobody will ever take, and receivers
// facing a first-in-buffer payload they cannot accept. Sound for systems
// whose asynchronous and k-exchange behaviours agree.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "synchro/async.hpp"
#include "synchro/model.hpp"
#include "synchro/sync.hpp"

namespace synchro {

struct DeadlockReport {
    enum class Kind { EmptyBufferDeadlock, OrphanMessage, UnspecifiedReception };
    Kind kind;
    std::vector<ExchangeLabel> labels;  // witness as replayable exchanges, global mids
    Execution witness;                  // the same witness flattened
    std::vector<Pid> waiting;           // processes stuck in receive states
    std::vector<IndexedAction> unmatched_sends;
    Pid receiver = kNoPid;              // unspecified reception target
    std::vector<Val> offending;         // payloads the receiver cannot take
};

struct DeadlockSearch {
    enum class Outcome { None, Found, Inconclusive };
    Outcome outcome = Outcome::None;
    std::optional<DeadlockReport> report;
    uint64_t configs = 0;
};

// Unmatched sends to p that no other unmatched send to p causally precedes:
// exactly the messages that could sit first in p's buffer.
inline std::vector<IndexedAction> min_unmatched(const Trace& t, Pid p) {
    std::vector<int> cands;
    for (size_t i = 0; i < t.actions.size(); ++i) {
        const IndexedAction& ia = t.actions[i];
        if (ia.act.kind == ActKind::Send && ia.act.dest == p &&
            !t.send_matched(static_cast<int>(i)))
            cands.push_back(static_cast<int>(i));
    }
    std::vector<std::vector<uint64_t>> reach = causal_reach(t);
    std::vector<IndexedAction> out;
    for (int i : cands) {
        bool minimal = true;
        for (int j : cands)
            if (j != i && reach_test(reach, j, i)) {
                minimal = false;
                break;
            }
        if (minimal) out.push_back(t.actions[i]);
    }
    return out;
}

namespace detail {

inline std::vector<ExchangeLabel> dl_labels_to(const std::vector<ExchangeLabel>& vias,
                                               const std::vector<int>& parents, int id) {
    std::vector<ExchangeLabel> labels;
    for (int cur = id; cur >= 0 && parents[cur] >= 0; cur = parents[cur])
        labels.push_back(vias[cur]);
    std::reverse(labels.begin(), labels.end());
    return labels;
}

inline DeadlockReport dl_report(DeadlockReport::Kind kind,
                                std::vector<ExchangeLabel> labels) {
    DeadlockReport rep;
    rep.kind = kind;
    rep.labels = renumber_exchanges(labels);
    rep.witness = flatten_exchanges(rep.labels);
    return rep;
}

}  // namespace detail

// A stuck state reached with nothing left over: some process is waiting to
// receive, everyone is either waiting or done, and no message was dropped on
// the way (all exchanges fully matched, so buffers would be empty).
inline DeadlockSearch find_empty_buffer_deadlock(const SystemSpec& spec, int k,
                                                 size_t node_cap = kDefaultNodeCap) {
    DeadlockSearch res;
    std::vector<SyncConfig> cfgs;
    std::vector<int> parents;
    std::vector<ExchangeLabel> vias;
    std::unordered_map<std::string, int> index;
    std::queue<int> frontier;

    SyncConfig init = initial_sync_config(spec);
    index.emplace(init.key(), 0);
    cfgs.push_back(init);
    parents.push_back(-1);
    vias.push_back({});
    frontier.push(0);

    while (!frontier.empty()) {
        int id = frontier.front();
        frontier.pop();
        SyncConfig cfg = cfgs[id];
        ++res.configs;

        bool any_receiving = false, all_quiet = true;
        for (Pid p = 0; p < spec.proc_count(); ++p) {
            if (is_receiving_state(spec.procs[p], cfg.locals[p]))
                any_receiving = true;
            else if (!is_final_state(spec.procs[p], cfg.locals[p]))
                all_quiet = false;
        }
        if (any_receiving && all_quiet) {
            DeadlockReport rep = detail::dl_report(
                DeadlockReport::Kind::EmptyBufferDeadlock,
                detail::dl_labels_to(vias, parents, id));
            for (Pid p = 0; p < spec.proc_count(); ++p)
                if (is_receiving_state(spec.procs[p], cfg.locals[p])) rep.waiting.push_back(p);
            res.outcome = DeadlockSearch::Outcome::Found;
            res.report = std::move(rep);
            return res;
        }

        bool capped = false;
        k_exchange_successors_visit(spec, cfg, k,
                                    [&](const ExchangeLabel& label, const SyncConfig& next) {
                                        if (capped) return;
                                        if (label.receives.size() != label.sends.size())
                                            return;  // matched executions only
                                        auto [it, fresh] = index.emplace(
                                            next.key(), static_cast<int>(cfgs.size()));
                                        if (!fresh) return;
                                        if (cfgs.size() >= node_cap) {
                                            capped = true;
                                            return;
                                        }
                                        cfgs.push_back(next);
                                        parents.push_back(id);
                                        vias.push_back(label);
                                        frontier.push(it->second);
                                    });
        if (capped) {
            res.outcome = DeadlockSearch::Outcome::Inconclusive;
            return res;
        }
    }
    return res;
}

// A completed run that dropped at least one message: every process is done,
// yet something was sent and never taken. The blocked-sender map is nonempty
// exactly when a send went unmatched, so it doubles as the marker.
inline DeadlockSearch find_orphan_message(const SystemSpec& spec, int k,
                                          size_t node_cap = kDefaultNodeCap) {
    DeadlockSearch res;
    std::vector<SyncConfig> cfgs;
    std::vector<int> parents;
    std::vector<ExchangeLabel> vias;
    std::unordered_map<std::string, int> index;
    std::queue<int> frontier;

    SyncConfig init = initial_sync_config(spec);
    index.emplace(init.key(), 0);
    cfgs.push_back(init);
    parents.push_back(-1);
    vias.push_back({});
    frontier.push(0);

    while (!frontier.empty()) {
        int id = frontier.front();
        frontier.pop();
        SyncConfig cfg = cfgs[id];
        ++res.configs;

        bool dropped = false;
        for (uint64_t b : cfg.blocked) dropped |= b != 0;
        bool all_final = true;
        for (Pid p = 0; p < spec.proc_count(); ++p)
            if (!is_final_state(spec.procs[p], cfg.locals[p])) all_final = false;
        if (dropped && all_final) {
            DeadlockReport rep = detail::dl_report(
                DeadlockReport::Kind::OrphanMessage,
                detail::dl_labels_to(vias, parents, id));
            for (const ExchangeLabel& label : rep.labels) {
                std::vector<char> matched(label.sends.size(), 0);
                for (const IndexedAction& r : label.receives)
                    for (size_t i = 0; i < label.sends.size(); ++i)
                        if (label.sends[i].mid == r.mid) matched[i] = 1;
                for (size_t i = 0; i < label.sends.size(); ++i)
                    if (!matched[i]) rep.unmatched_sends.push_back(label.sends[i]);
            }
            res.outcome = DeadlockSearch::Outcome::Found;
            res.report = std::move(rep);
            return res;
        }

        bool capped = false;
        k_exchange_successors_visit(spec, cfg, k,
                                    [&](const ExchangeLabel& label, const SyncConfig& next) {
                                        if (capped) return;
                                        auto [it, fresh] = index.emplace(
                                            next.key(), static_cast<int>(cfgs.size()));
                                        if (!fresh) return;
                                        if (cfgs.size() >= node_cap) {
                                            capped = true;
                                            return;
                                        }
                                        cfgs.push_back(next);
                                        parents.push_back(id);
                                        vias.push_back(label);
                                        frontier.push(it->second);
                                    });
        if (capped) {
            res.outcome = DeadlockSearch::Outcome::Inconclusive;
            return res;
        }
    }
    return res;
}

// Tracks, per receiver, which payloads ride on dropped sends that nothing
// else dropped-to-the-same-receiver causally precedes; those are the
// payloads that can head the receiver's buffer. cone[p] holds the processes
// causally after some dropped send to p; a dropped send whose sender is
// outside the cone at that point is causally first. Cone growth follows
// message delivery, taking effect after the exchange; within one exchange
// only the sender's own later sends are causally downstream.
inline DeadlockSearch find_unspecified_reception(const SystemSpec& spec, int k,
                                                 size_t node_cap = kDefaultNodeCap) {
    if (spec.payload_names.size() > 64)
        throw std::invalid_argument("unspecified-reception search limited to 64 payloads");
    DeadlockSearch res;
    int np = spec.proc_count();

    struct XNode {
        SyncConfig cfg;
        std::vector<uint64_t> cone;  // per receiver: processes after a dropped send
        std::vector<uint64_t> first_payloads;  // per receiver: possible buffer heads
    };
    auto key_of = [](const XNode& n) {
        std::string key = n.cfg.key();
        key += '#';
        for (size_t i = 0; i < n.cone.size(); ++i) {
            key += std::to_string(n.cone[i]);
            key += ':';
            key += std::to_string(n.first_payloads[i]);
            key += ',';
        }
        return key;
    };

    std::vector<XNode> nodes;
    std::vector<int> parents;
    std::vector<ExchangeLabel> vias;
    std::unordered_map<std::string, int> index;
    std::queue<int> frontier;

    XNode root{initial_sync_config(spec), std::vector<uint64_t>(np, 0),
               std::vector<uint64_t>(np, 0)};
    index.emplace(key_of(root), 0);
    nodes.push_back(std::move(root));
    parents.push_back(-1);
    vias.push_back({});
    frontier.push(0);

    while (!frontier.empty()) {
        int id = frontier.front();
        frontier.pop();
        XNode node = nodes[id];
        ++res.configs;

        for (Pid p = 0; p < np; ++p) {
            if (!is_receiving_state(spec.procs[p], node.cfg.locals[p])) continue;
            uint64_t acceptable = 0;
            for (Val v : receivable_payloads(spec.procs[p], node.cfg.locals[p]))
                acceptable |= 1ull << v;
            uint64_t stuck = node.first_payloads[p] & ~acceptable;
            if (stuck == 0) continue;

            DeadlockReport rep = detail::dl_report(
                DeadlockReport::Kind::UnspecifiedReception,
                detail::dl_labels_to(vias, parents, id));
            rep.receiver = p;
            for (Val v = 0; v < static_cast<Val>(spec.payload_names.size()); ++v)
                if ((stuck >> v) & 1) rep.offending.push_back(v);
            Trace t = trace_of(rep.witness.steps);
            rep.unmatched_sends = min_unmatched(t, p);
            res.outcome = DeadlockSearch::Outcome::Found;
            res.report = std::move(rep);
            return res;
        }

        bool capped = false;
        k_exchange_successors_visit(
            spec, node.cfg, k,
            [&](const ExchangeLabel& label, const SyncConfig& next) {
                if (capped) return;
                std::vector<char> matched(label.sends.size(), 0);
                for (const IndexedAction& r : label.receives) matched[r.mid] = 1;

                XNode child;
                child.cfg = next;
                child.cone = node.cone;
                child.first_payloads = node.first_payloads;
                std::vector<uint64_t> senders_now(np, 0);   // dropped-to-p senders, this label
                std::vector<uint64_t> infected_now(np, 0);  // delivery targets, this label
                for (size_t i = 0; i < label.sends.size(); ++i) {
                    const Action& a = label.sends[i].act;
                    if (!matched[i]) {
                        if (!(((node.cone[a.dest] | senders_now[a.dest]) >> a.actor) & 1))
                            child.first_payloads[a.dest] |= 1ull << a.payload;
                        senders_now[a.dest] |= 1ull << a.actor;
                    } else {
                        for (Pid p = 0; p < np; ++p)
                            if (((node.cone[p] | senders_now[p]) >> a.actor) & 1)
                                infected_now[p] |= 1ull << a.dest;
                    }
                }
                for (Pid p = 0; p < np; ++p)
                    child.cone[p] |= senders_now[p] | infected_now[p];

                auto [it, fresh] = index.emplace(key_of(child), static_cast<int>(nodes.size()));
                if (!fresh) return;
                if (nodes.size() >= node_cap) {
                    capped = true;
                    return;
                }
                nodes.push_back(std::move(child));
                parents.push_back(id);
                vias.push_back(label);
                frontier.push(it->second);
            });
        if (capped) {
            res.outcome = DeadlockSearch::Outcome::Inconclusive;
            return res;
        }
    }
    return res;
}

}  // namespace synchro

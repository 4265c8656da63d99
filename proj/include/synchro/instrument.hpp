#pragma once

// Decision procedure for k-synchronizability: instruments the system with a
// relay process that delays one nondeterministically chosen message, composes
// the k-exchange exploration of the instrumented system with two monitors
// (one excluding interleavings that could not happen under asynchrony, one
// tracking conflict paths), and searches for the least k with a flow-derived
// iteration bound.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <thread>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "synchro/async.hpp"
#include "synchro/model.hpp"
#include "synchro/sync.hpp"
#include "synchro/trace.hpp"

namespace synchro {

// ---------------------------------------------------------------------------
// Delayed system construction
// ---------------------------------------------------------------------------

// sys = base plus one relay process. Every base send gains a sibling send
// that routes the same message to the relay as a (dest, payload) pair; the
// relay accepts one pair, forwards the original payload to the original
// destination, and halts. Pair payloads extend the payload alphabet.
struct DelayedSystem {
    SystemSpec base;
    SystemSpec sys;
    Pid relay = kNoPid;

    Val pair_payload(Pid q, Val v) const {
        return static_cast<Val>(base.payload_names.size()) +
               q * static_cast<Val>(base.payload_names.size()) + v;
    }
    bool is_pair_payload(Val v) const {
        return v >= static_cast<Val>(base.payload_names.size());
    }
    std::pair<Pid, Val> pair_of(Val v) const {
        Val off = v - static_cast<Val>(base.payload_names.size());
        Val nv = static_cast<Val>(base.payload_names.size());
        return {static_cast<Pid>(off / nv), off % nv};
    }

    StateId relay_idle() const { return 0; }
    StateId hold_state(Pid q, Val v) const {
        return 1 + q * static_cast<StateId>(base.payload_names.size()) + v;
    }
    bool is_hold_state(StateId l) const {
        return l >= 1 && l < relay_done();
    }
    std::pair<Pid, Val> hold_of(StateId l) const {
        StateId off = l - 1;
        StateId nv = static_cast<StateId>(base.payload_names.size());
        return {static_cast<Pid>(off / nv), off % nv};
    }
    StateId relay_done() const {
        return 1 + static_cast<StateId>(base.procs.size()) *
                       static_cast<StateId>(base.payload_names.size());
    }
};

inline DelayedSystem build_delayed_system(const SystemSpec& spec) {
    for (const ProcessDef& pd : spec.procs)
        if (pd.name == "pi")
            throw std::invalid_argument("process name \"pi\" is reserved for the relay");

    DelayedSystem ds;
    ds.base = spec;
    ds.sys = spec;
    ds.relay = static_cast<Pid>(spec.procs.size());

    int nv = static_cast<int>(spec.payload_names.size());
    int np = static_cast<int>(spec.procs.size());
    for (Pid q = 0; q < np; ++q)
        for (Val v = 0; v < nv; ++v)
            ds.sys.payload_names.push_back("(" + spec.procs[q].name + "," +
                                           spec.payload_names[v] + ")");

    // sibling sends on every base process
    for (ProcessDef& pd : ds.sys.procs) {
        std::vector<Transition> extra;
        for (const Transition& t : pd.transitions) {
            if (t.kind != ActKind::Send) continue;
            Transition s = t;
            s.peer = ds.relay;
            s.payload = ds.pair_payload(t.peer, t.payload);
            extra.push_back(s);
        }
        pd.transitions.insert(pd.transitions.end(), extra.begin(), extra.end());
        pd.rebuild_outgoing();
    }

    // the relay process itself
    ProcessDef rp;
    rp.name = "pi";
    rp.initial = 0;
    rp.state_names.push_back("idle");
    for (Pid q = 0; q < np; ++q)
        for (Val v = 0; v < nv; ++v)
            rp.state_names.push_back("hold_" + spec.procs[q].name + "_" +
                                     spec.payload_names[v]);
    rp.state_names.push_back("done");
    for (Pid q = 0; q < np; ++q)
        for (Val v = 0; v < nv; ++v) {
            Transition in;
            in.from = ds.relay_idle();
            in.kind = ActKind::Recv;
            in.peer = kNoPid;
            in.payload = ds.pair_payload(q, v);
            in.to = ds.hold_state(q, v);
            rp.transitions.push_back(in);
            Transition out;
            out.from = ds.hold_state(q, v);
            out.kind = ActKind::Send;
            out.peer = q;
            out.payload = v;
            out.to = ds.relay_done();
            rp.transitions.push_back(out);
        }
    rp.rebuild_outgoing();
    ds.sys.procs.push_back(rp);
    return ds;
}

// ---------------------------------------------------------------------------
// Monitor one: interleavings compatible with asynchronous delivery
// ---------------------------------------------------------------------------

// cone = processes that causally depend on the delayed send; receiver = its
// original destination. A matched send by a cone member infects its
// destination; delivering such a send to the receiver would have to happen
// after the delayed message under asynchrony, so it is rejected. Infections
// take effect for the following exchanges: within one exchange every send
// happens before every receive, so same-exchange infection cannot reach back
// into the send phase.
struct CausalMonitorState {
    uint64_t cone = 0;
    Pid receiver = kNoPid;

    friend bool operator==(const CausalMonitorState&, const CausalMonitorState&) = default;
};

inline std::optional<CausalMonitorState> causal_monitor_step(const DelayedSystem& ds,
                                                             const CausalMonitorState& st,
                                                             const ExchangeLabel& label) {
    for (const IndexedAction& s : label.sends)
        if (s.act.actor == ds.relay) return st;  // relay's own exchange passes
    for (const IndexedAction& s : label.sends)
        if (s.act.dest == ds.relay) {
            CausalMonitorState next;
            next.cone = 1ull << s.act.actor;
            next.receiver = ds.pair_of(s.act.payload).first;
            return next;
        }
    if (st.cone == 0) return st;

    std::vector<char> matched(label.sends.size(), 0);
    for (const IndexedAction& r : label.receives) matched[r.mid] = 1;
    CausalMonitorState next = st;
    uint64_t growth = 0;
    for (size_t i = 0; i < label.sends.size(); ++i) {
        const Action& a = label.sends[i].act;
        if (!((st.cone >> a.actor) & 1) || !matched[i]) continue;
        if (a.dest == st.receiver) return std::nullopt;
        growth |= 1ull << a.dest;
    }
    next.cone |= growth;
    return next;
}

// ---------------------------------------------------------------------------
// Monitor two: conflict-path tracking
// ---------------------------------------------------------------------------

// One branch state of the path monitor: the process owning the current path
// endpoint, whether that endpoint is a receive, whether a receive-to-send
// edge was traversed, and how much path budget is left (clamped at zero, so
// zero means "the path already has more than k nodes"). Packed into 32 bits
// for cheap set handling.
namespace violmon {

inline uint32_t pack(Pid conflict, bool last_is_rec, bool saw_rs, int count) {
    return (static_cast<uint32_t>(conflict) << 18) |
           (static_cast<uint32_t>(count) << 2) | (saw_rs ? 2u : 0u) |
           (last_is_rec ? 1u : 0u);
}
inline Pid conflict_of(uint32_t s) { return static_cast<Pid>(s >> 18); }
inline bool last_is_rec(uint32_t s) { return s & 1u; }
inline bool saw_rs(uint32_t s) { return s & 2u; }
inline int count_of(uint32_t s) { return static_cast<int>((s >> 2) & 0xffff); }

// Within one exchange the endpoint can sit on an action of the exchange
// itself; edges into later actions must respect the send-phase order and the
// per-receiver queue order. kind 0 = endpoint predates this exchange, 1 =
// endpoint is the i-th send, 2 = endpoint is the receive matching the i-th
// send.
inline uint64_t extend_key(uint32_t packed, int kind, int idx) {
    return static_cast<uint64_t>(packed) | (static_cast<uint64_t>(kind) << 32) |
           (static_cast<uint64_t>(static_cast<uint32_t>(idx)) << 34);
}

}  // namespace violmon

struct ViolStepResult {
    std::vector<uint32_t> states;
    bool accept = false;
};

// Keeps only the least remaining budget per (conflict, lastIsRec, sawRS):
// smaller budget reaches the acceptance condition whenever a larger one
// would, so larger budgets are dominated.
inline std::vector<uint32_t> viol_normalize(std::vector<uint32_t> states) {
    std::unordered_map<uint32_t, int> best;
    for (uint32_t s : states) {
        uint32_t key = (s & 3u) | (static_cast<uint32_t>(violmon::conflict_of(s)) << 2);
        auto it = best.find(key);
        int c = violmon::count_of(s);
        if (it == best.end() || c < it->second) best[key] = c;
    }
    std::vector<uint32_t> out;
    out.reserve(best.size());
    for (auto& [key, c] : best)
        out.push_back(violmon::pack(static_cast<Pid>(key >> 2), key & 1u, key & 2u, c));
    std::sort(out.begin(), out.end());
    return out;
}

// Advances every tracked branch across one exchange label, spawning every
// way the conflict path may extend through the label's message nodes. The
// label kinds:
//   - send to the relay: path starts at the delayed send;
//   - send by the relay to q: acceptance test, no successor states;
//   - anything else: path extension over the label's nodes to a fixpoint
//     (a path may run through several nodes of one exchange).
inline ViolStepResult viol_monitor_step(const DelayedSystem& ds,
                                        const std::vector<uint32_t>& states,
                                        const ExchangeLabel& label, int k) {
    ViolStepResult res;
    for (const IndexedAction& s : label.sends) {
        if (s.act.dest == ds.relay) {
            res.states.push_back(violmon::pack(s.act.actor, false, false, k));
            return res;
        }
        if (s.act.actor == ds.relay) {
            Pid q = s.act.dest;
            for (uint32_t st : states)
                if (violmon::conflict_of(st) == q &&
                    (violmon::count_of(st) == 0 || violmon::saw_rs(st))) {
                    res.accept = true;
                    break;
                }
            return res;
        }
    }
    if (states.empty()) return res;

    std::vector<char> matched(label.sends.size(), 0);
    for (const IndexedAction& r : label.receives) matched[r.mid] = 1;

    std::unordered_set<uint64_t> seen;
    std::queue<uint64_t> work;
    auto push = [&](uint32_t packed, int kind, int idx) {
        uint64_t key = violmon::extend_key(packed, kind, idx);
        if (seen.insert(key).second) work.push(key);
    };
    for (uint32_t st : states) push(st, 0, 0);

    while (!work.empty()) {
        uint64_t cur = work.front();
        work.pop();
        uint32_t st = static_cast<uint32_t>(cur & 0xffffffffu);
        int kind = static_cast<int>((cur >> 32) & 3u);
        int idx = static_cast<int>(cur >> 34);
        Pid conflict = violmon::conflict_of(st);
        bool lrec = violmon::last_is_rec(st);
        bool srs = violmon::saw_rs(st);
        int count = violmon::count_of(st);
        int dec = count > 0 ? count - 1 : 0;

        for (size_t i = 0; i < label.sends.size(); ++i) {
            const Action& a = label.sends[i].act;
            int ii = static_cast<int>(i);
            // edge ending at the i-th send: endpoint process must be the
            // sender and the endpoint action must precede the send
            if (conflict == a.actor &&
                (kind == 0 || (kind == 1 && idx < ii))) {
                bool rs = srs || lrec;
                push(violmon::pack(a.actor, false, rs, dec), 1, ii);
                if (matched[i]) push(violmon::pack(a.dest, true, rs, dec), 2, ii);
            }
            // edge ending at the matching receive: endpoint process must be
            // the destination; sends of this exchange all precede it, and
            // earlier receives of the same receiver precede it in queue order
            if (matched[i] && conflict == a.dest &&
                (kind == 0 || kind == 1 || (kind == 2 && idx < ii))) {
                push(violmon::pack(a.actor, false, srs, dec), 1, ii);
                push(violmon::pack(a.dest, true, srs, dec), 2, ii);
            }
        }
    }

    std::vector<uint32_t> collapsed;
    collapsed.reserve(seen.size());
    for (uint64_t key : seen) collapsed.push_back(static_cast<uint32_t>(key & 0xffffffffu));
    res.states = viol_normalize(std::move(collapsed));
    return res;
}

// ---------------------------------------------------------------------------
// The k-synchronizability check
// ---------------------------------------------------------------------------

struct Verdict {
    enum class Result { Synchronizable, Violation, NotSynchronizableAnyK, Inconclusive };
    Result result = Result::Inconclusive;
    int k = 0;
    std::optional<Execution> counterexample;
    std::optional<CycleReport> cycle;
    std::string reason;
    uint64_t configs = 0;
};

namespace detail {

// Image of an instrumented execution back in the base system: the send to
// the relay becomes the original send, the relay's forward becomes the
// original receive, everything else keeps its place. Message ids are
// renumbered globally in send order.
inline std::vector<IndexedAction> delayed_image(const DelayedSystem& ds,
                                                const std::vector<ExchangeLabel>& labels) {
    std::vector<IndexedAction> steps;
    Mid next_mid = 0;
    Mid delayed_mid = -1;
    for (const ExchangeLabel& label : labels) {
        bool special = false;
        for (const IndexedAction& s : label.sends) {
            if (s.act.dest == ds.relay) {
                auto [q, v] = ds.pair_of(s.act.payload);
                IndexedAction ia;
                ia.act.kind = ActKind::Send;
                ia.act.actor = s.act.actor;
                ia.act.dest = q;
                ia.act.payload = v;
                ia.mid = delayed_mid = next_mid++;
                steps.push_back(ia);
                special = true;
            } else if (s.act.actor == ds.relay) {
                IndexedAction ia;
                ia.act.kind = ActKind::Recv;
                ia.act.actor = s.act.dest;
                ia.act.dest = kNoPid;
                ia.act.payload = s.act.payload;
                ia.mid = delayed_mid;
                steps.push_back(ia);
                special = true;
            }
        }
        if (special) continue;
        std::vector<Mid> remap(label.sends.size());
        for (size_t i = 0; i < label.sends.size(); ++i) {
            IndexedAction ia = label.sends[i];
            remap[i] = ia.mid = next_mid++;
            steps.push_back(ia);
        }
        for (IndexedAction r : label.receives) {
            r.mid = remap[r.mid];
            steps.push_back(r);
        }
    }
    return steps;
}

struct CandidateOutcome {
    bool genuine = false;
    bool linearize_failed = false;
    Execution exec;
    CycleReport cycle;
};

// An accepting monitor branch is a claim, not a proof: the candidate is
// rebuilt in the base system, linearized under the asynchronous semantics,
// classified independently, and trimmed to the shortest failing prefix.
inline CandidateOutcome validate_candidate(const DelayedSystem& ds,
                                           const std::vector<ExchangeLabel>& labels,
                                           int k) {
    CandidateOutcome out;
    Trace t = trace_of(delayed_image(ds, labels));
    if (check_causal_delivery(t)) return out;  // monitor over-approximation
    std::optional<Execution> exec = async_linearize(ds.base, t);
    if (!exec) {
        out.linearize_failed = true;
        return out;
    }
    CycleReport full = classify(build_conflict_graph(t), k);
    if (full.kind == CycleReport::Kind::GoodWithin) return out;  // spurious accept

    for (size_t len = 1; len <= exec->steps.size(); ++len) {
        std::vector<IndexedAction> prefix(exec->steps.begin(), exec->steps.begin() + len);
        Trace pt = trace_of(prefix);
        CycleReport rep = classify(build_conflict_graph(pt), k);
        if (rep.kind != CycleReport::Kind::GoodWithin) {
            out.genuine = true;
            out.exec.steps = std::move(prefix);
            out.cycle = rep;
            return out;
        }
    }
    out.genuine = true;  // unreachable in practice: the full image failed
    out.exec = *exec;
    out.cycle = full;
    return out;
}

}  // namespace detail

inline Verdict check_k_synchronizability(const SystemSpec& spec, int k,
                                         size_t node_cap = kDefaultNodeCap,
                                         int jobs = 1) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (k > 0xffff) throw std::invalid_argument("k too large for the path monitor");
    DelayedSystem ds = build_delayed_system(spec);
    Pid relay = ds.relay;

    struct PNode {
        SyncConfig cfg;
        uint8_t phase;  // 0 = no delay yet, 1 = relay holds the delayed message
        CausalMonitorState causal;
        std::vector<uint32_t> viol;
        int parent;
        ExchangeLabel via;
    };

    auto key_of = [](const PNode& n) {
        std::string key = n.cfg.key();
        key += '#';
        key += static_cast<char>('0' + n.phase);
        key += '#';
        key += std::to_string(n.causal.cone);
        key += ':';
        key += std::to_string(n.causal.receiver);
        key += '#';
        for (uint32_t s : n.viol) {
            key += std::to_string(s);
            key += ',';
        }
        return key;
    };

    std::vector<PNode> nodes;
    std::unordered_map<std::string, int> index;

    PNode root{initial_sync_config(ds.sys), 0, {}, {}, -1, {}};
    index.emplace(key_of(root), 0);
    nodes.push_back(std::move(root));

    Verdict verdict;
    verdict.k = k;
    bool capped = false;
    bool linearize_failed = false;

    std::vector<int> next_layer;
    auto add_node = [&](PNode&& n) {
        if (capped) return;
        std::string key = key_of(n);
        auto [it, fresh] = index.emplace(std::move(key), static_cast<int>(nodes.size()));
        if (!fresh) return;
        if (nodes.size() >= node_cap) {
            capped = true;
            return;
        }
        next_layer.push_back(it->second);
        nodes.push_back(std::move(n));
    };

    auto labels_to = [&](int id) {
        std::vector<ExchangeLabel> labels;
        for (int cur = id; cur >= 0 && nodes[cur].parent >= 0; cur = nodes[cur].parent)
            labels.push_back(nodes[cur].via);
        std::reverse(labels.begin(), labels.end());
        return labels;
    };

    std::function<bool(Pid, Pid)> allow = [relay](Pid p, Pid dst) {
        return p != relay && dst != relay;
    };

    // moves are generated against a frozen node table, so BFS layers can be
    // expanded by several workers; the merge runs in layer order, keeping
    // results independent of the job count
    struct Moves {
        std::vector<PNode> children;
        std::vector<ExchangeLabel> accepts;
    };
    auto moves_of = [&](int id) {
        Moves out;
        const PNode& node = nodes[id];

        k_exchange_successors_visit(
            ds.sys, node.cfg, k,
            [&](const ExchangeLabel& label, const SyncConfig& next) {
                PNode child;
                child.cfg = next;
                child.phase = node.phase;
                child.parent = id;
                child.via = label;
                if (node.phase == 1) {
                    auto causal = causal_monitor_step(ds, node.causal, label);
                    if (!causal) return;
                    child.causal = *causal;
                    child.viol = viol_monitor_step(ds, node.viol, label, k).states;
                }
                out.children.push_back(std::move(child));
            },
            allow);

        if (node.phase == 0) {
            // delay moves: route one send through the relay, in isolation
            for (Pid p = 0; p < static_cast<Pid>(ds.base.procs.size()); ++p) {
                if ((node.cfg.blocked[relay] >> p) & 1) continue;
                const ProcessDef& pd = ds.base.procs[p];
                for (int ti : pd.outgoing[node.cfg.locals[p]]) {
                    const Transition& t = pd.transitions[ti];
                    if (t.kind != ActKind::Send) continue;
                    ExchangeLabel label;
                    IndexedAction s;
                    s.act.kind = ActKind::Send;
                    s.act.actor = p;
                    s.act.dest = relay;
                    s.act.payload = ds.pair_payload(t.peer, t.payload);
                    s.mid = 0;
                    label.sends.push_back(s);
                    IndexedAction r;
                    r.act.kind = ActKind::Recv;
                    r.act.actor = relay;
                    r.act.payload = s.act.payload;
                    r.mid = 0;
                    label.receives.push_back(r);

                    PNode child;
                    child.cfg.locals = node.cfg.locals;
                    child.cfg.locals[p] = t.to;
                    child.cfg.locals[relay] = ds.hold_state(t.peer, t.payload);
                    child.cfg.blocked =
                        blocked_after(node.cfg.blocked, label.sends, {1});
                    child.phase = 1;
                    child.causal.cone = 1ull << p;
                    child.causal.receiver = t.peer;
                    child.viol.push_back(violmon::pack(p, false, false, k));
                    child.parent = id;
                    child.via = label;
                    out.children.push_back(std::move(child));
                }
            }
        } else if (ds.is_hold_state(node.cfg.locals[relay])) {
            // relay forward: terminal, recorded when the path monitor accepts
            auto [q, v] = ds.hold_of(node.cfg.locals[relay]);
            if ((node.cfg.blocked[q] >> relay) & 1) return out;
            bool receivable = false;
            const ProcessDef& qd = ds.base.procs[q];
            for (int ti : qd.outgoing[node.cfg.locals[q]])
                if (qd.transitions[ti].kind == ActKind::Recv &&
                    qd.transitions[ti].payload == v)
                    receivable = true;
            if (!receivable) return out;

            ExchangeLabel label;
            IndexedAction s;
            s.act.kind = ActKind::Send;
            s.act.actor = relay;
            s.act.dest = q;
            s.act.payload = v;
            s.mid = 0;
            label.sends.push_back(s);
            IndexedAction r;
            r.act.kind = ActKind::Recv;
            r.act.actor = q;
            r.act.payload = v;
            r.mid = 0;
            label.receives.push_back(r);

            if (viol_monitor_step(ds, node.viol, label, k).accept)
                out.accepts.push_back(label);
        }
        return out;
    };

    std::vector<int> layer{0};
    while (!layer.empty() && !capped) {
        std::vector<Moves> results(layer.size());
        auto run = [&](size_t a, size_t b) {
            for (size_t i = a; i < b; ++i) results[i] = moves_of(layer[i]);
        };
        if (jobs > 1 && layer.size() > 1) {
            size_t nw = std::min<size_t>(jobs, layer.size());
            std::vector<std::thread> workers;
            size_t chunk = (layer.size() + nw - 1) / nw;
            for (size_t w = 0; w < nw; ++w)
                workers.emplace_back(run, w * chunk,
                                     std::min(layer.size(), (w + 1) * chunk));
            for (auto& th : workers) th.join();
        } else {
            run(0, layer.size());
        }
        verdict.configs += layer.size();

        next_layer.clear();
        for (size_t i = 0; i < layer.size(); ++i) {
            int id = layer[i];
            for (const ExchangeLabel& accept : results[i].accepts) {
                std::vector<ExchangeLabel> labels = labels_to(id);
                labels.push_back(accept);
                detail::CandidateOutcome cand = detail::validate_candidate(ds, labels, k);
                if (cand.linearize_failed) linearize_failed = true;
                if (cand.genuine) {
                    verdict.result = Verdict::Result::Violation;
                    verdict.counterexample = std::move(cand.exec);
                    verdict.cycle = std::move(cand.cycle);
                    return verdict;
                }
            }
            for (PNode& child : results[i].children) add_node(std::move(child));
        }
        layer = std::move(next_layer);
        next_layer.clear();
    }

    if (capped) {
        verdict.result = Verdict::Result::Inconclusive;
        verdict.reason = "node cap reached at " + std::to_string(node_cap) + " configs";
    } else if (linearize_failed) {
        verdict.result = Verdict::Result::Inconclusive;
        verdict.reason = "a candidate counterexample exceeded the linearization cap";
    } else {
        verdict.result = Verdict::Result::Synchronizable;
    }
    return verdict;
}

// ---------------------------------------------------------------------------
// Flow bounds
// ---------------------------------------------------------------------------

// receive_bound: length of the longest run of consecutive receives on any
// path from the initial state; send_bound: length of the longest run of
// consecutive sends that is immediately followed by a receive. nullopt means
// unbounded. A process that never receives has send_bound 0: no send run is
// ever followed by a receive.
struct ProcFlowBounds {
    std::optional<int> receive_bound;
    std::optional<int> send_bound;
};

inline ProcFlowBounds flow_bounds(const ProcessDef& pd) {
    int ns = pd.state_count();
    std::vector<char> reach(ns, 0);
    {
        std::vector<StateId> stack{pd.initial};
        reach[pd.initial] = 1;
        while (!stack.empty()) {
            StateId l = stack.back();
            stack.pop_back();
            for (int ti : pd.outgoing[l]) {
                StateId to = pd.transitions[ti].to;
                if (!reach[to]) {
                    reach[to] = 1;
                    stack.push_back(to);
                }
            }
        }
    }

    // longest path in an edge-restricted subgraph over the reachable states;
    // nullopt when the subgraph has a cycle
    auto longest = [&](auto edge_ok, auto node_base) -> std::optional<int> {
        std::vector<int> memo(ns, -1), color(ns, 0);
        bool cyclic = false;
        std::function<int(StateId)> go = [&](StateId l) -> int {
            if (color[l] == 1) {
                cyclic = true;
                return 0;
            }
            if (color[l] == 2) return memo[l];
            color[l] = 1;
            int best = node_base(l);
            for (int ti : pd.outgoing[l]) {
                const Transition& t = pd.transitions[ti];
                if (!edge_ok(t)) continue;
                int sub = go(t.to);
                if (cyclic) break;
                if (sub >= 0 && 1 + sub > best) best = 1 + sub;
            }
            color[l] = 2;
            memo[l] = best;
            return best;
        };
        int overall = 0;
        for (StateId l = 0; l < ns; ++l) {
            if (!reach[l]) continue;
            int v = go(l);
            if (cyclic) return std::nullopt;
            if (v > overall) overall = v;
        }
        return overall;
    };

    ProcFlowBounds out;
    out.receive_bound =
        longest([](const Transition& t) { return t.kind == ActKind::Recv; },
                [](StateId) { return 0; });

    // send runs must end at a state with an outgoing receive; states that
    // cannot reach such a state by sends contribute nothing
    std::vector<char> can_recv(ns, 0), lands(ns, 0);
    for (StateId l = 0; l < ns; ++l)
        if (reach[l])
            for (int ti : pd.outgoing[l])
                if (pd.transitions[ti].kind == ActKind::Recv) can_recv[l] = 1;
    {
        // backward closure of can_recv under send edges
        bool changed = true;
        for (StateId l = 0; l < ns; ++l) lands[l] = can_recv[l];
        while (changed) {
            changed = false;
            for (StateId l = 0; l < ns; ++l) {
                if (!reach[l] || lands[l]) continue;
                for (int ti : pd.outgoing[l]) {
                    const Transition& t = pd.transitions[ti];
                    if (t.kind == ActKind::Send && lands[t.to]) {
                        lands[l] = 1;
                        changed = true;
                        break;
                    }
                }
            }
        }
    }
    {
        std::vector<int> memo(ns, -1), color(ns, 0);
        bool cyclic = false;
        std::function<int(StateId)> go = [&](StateId l) -> int {
            if (color[l] == 1) {
                cyclic = true;
                return 0;
            }
            if (color[l] == 2) return memo[l];
            color[l] = 1;
            int best = can_recv[l] ? 0 : std::numeric_limits<int>::min();
            for (int ti : pd.outgoing[l]) {
                const Transition& t = pd.transitions[ti];
                if (t.kind != ActKind::Send || !lands[t.to]) continue;
                int sub = go(t.to);
                if (cyclic) break;
                if (sub >= 0 && 1 + sub > best) best = 1 + sub;
            }
            color[l] = 2;
            memo[l] = best;
            return best;
        };
        int overall = 0;
        bool bad = false;
        for (StateId l = 0; l < ns; ++l) {
            if (!reach[l] || !lands[l]) continue;
            int v = go(l);
            if (cyclic) {
                bad = true;
                break;
            }
            if (v > overall) overall = v;
        }
        out.send_bound = bad ? std::nullopt : std::optional<int>(overall);
    }
    return out;
}

struct SystemFlowBounds {
    std::vector<ProcFlowBounds> per_proc;
    bool flow_bounded = false;
    int send_bound = 0;     // max over processes, meaningful iff flow_bounded
    int receive_bound = 0;  // max over processes, meaningful iff flow_bounded
};

inline SystemFlowBounds system_flow_bounds(const SystemSpec& spec) {
    SystemFlowBounds out;
    out.flow_bounded = true;
    for (const ProcessDef& pd : spec.procs) {
        ProcFlowBounds b = flow_bounds(pd);
        if (!b.send_bound || !b.receive_bound)
            out.flow_bounded = false;
        else {
            out.send_bound = std::max(out.send_bound, *b.send_bound);
            out.receive_bound = std::max(out.receive_bound, *b.receive_bound);
        }
        out.per_proc.push_back(b);
    }
    if (!out.flow_bounded) {
        out.send_bound = 0;
        out.receive_bound = 0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Least-k search
// ---------------------------------------------------------------------------

struct MinKReport {
    Verdict verdict;
    SystemFlowBounds bounds;
    int cap = 0;
    bool cap_is_auto = false;
    int last_k_checked = 0;
};

// Iterates k upward. Definitive negatives arise two ways: a validated
// violation whose conflict cycle has a receive-send edge refutes every k at
// once, and a flow-bounded system that stays violating through the derived
// cap (send_bound + receive_bound) x |P| can never become synchronizable.
// Everything else ends Inconclusive.
inline MinKReport min_k_search(const SystemSpec& spec,
                               std::optional<int> k_cap = std::nullopt,
                               size_t node_cap = kDefaultNodeCap, int jobs = 1) {
    MinKReport rep;
    rep.bounds = system_flow_bounds(spec);

    int auto_cap = 0;
    if (rep.bounds.flow_bounded)
        auto_cap = std::max(
            1, (rep.bounds.send_bound + rep.bounds.receive_bound) *
                   static_cast<int>(spec.procs.size()));
    if (rep.bounds.flow_bounded) {
        rep.cap = k_cap ? std::min(*k_cap, auto_cap) : auto_cap;
        rep.cap_is_auto = !k_cap || *k_cap >= auto_cap;
    } else {
        if (!k_cap)
            throw std::invalid_argument(
                "system is not flow-bounded: an explicit k cap is required");
        rep.cap = *k_cap;
        rep.cap_is_auto = false;
    }
    if (rep.cap < 1)
        throw std::invalid_argument("k cap must be >= 1");

    std::optional<Verdict> last_violation;
    for (int k = 1; k <= rep.cap; ++k) {
        Verdict v = check_k_synchronizability(spec, k, node_cap, jobs);
        rep.last_k_checked = k;
        if (v.result == Verdict::Result::Synchronizable) {
            rep.verdict = std::move(v);
            return rep;
        }
        if (v.result == Verdict::Result::Inconclusive) {
            rep.verdict = std::move(v);
            return rep;
        }
        if (v.cycle && v.cycle->kind == CycleReport::Kind::BadCycle) {
            v.result = Verdict::Result::NotSynchronizableAnyK;
            v.reason = "conflict cycle with a receive-send edge refutes every k";
            rep.verdict = std::move(v);
            return rep;
        }
        last_violation = std::move(v);
    }

    if (rep.bounds.flow_bounded && rep.cap_is_auto) {
        Verdict v = last_violation ? std::move(*last_violation) : Verdict{};
        v.result = Verdict::Result::NotSynchronizableAnyK;
        v.k = rep.cap;
        v.reason = "flow-bounded iteration range 1.." + std::to_string(rep.cap) +
                   " exhausted without a synchronizable k";
        rep.verdict = std::move(v);
        return rep;
    }
    Verdict v = last_violation ? std::move(*last_violation) : Verdict{};
    v.result = Verdict::Result::Inconclusive;
    v.k = rep.cap;
    v.reason = "k cap " + std::to_string(rep.cap) +
               " exhausted; violations so far show no receive-send cycle";
    rep.verdict = std::move(v);
    return rep;
}

}  // namespace synchro

#pragma once

// Asynchronous (unbounded FIFO mailbox) semantics: stepping, bounded
// enumeration of executions, trace extraction, causal delivery, and
// permutation equivalence.

#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "synchro/model.hpp"

namespace synchro {

struct IndexedAction {
    Action act;
    Mid mid = -1;

    friend bool operator==(const IndexedAction&, const IndexedAction&) = default;
    friend auto operator<=>(const IndexedAction&, const IndexedAction&) = default;
};

// One FIFO buffer per receiving process; all senders append to the same
// buffer, so delivery order to a process equals global send order.
struct AsyncConfig {
    std::vector<StateId> locals;
    std::vector<std::deque<std::pair<Mid, Val>>> buffers;

    friend bool operator==(const AsyncConfig&, const AsyncConfig&) = default;
};

inline AsyncConfig initial_async_config(const SystemSpec& spec) {
    AsyncConfig c;
    c.locals.reserve(spec.proc_count());
    for (const ProcessDef& pd : spec.procs) c.locals.push_back(pd.initial);
    c.buffers.resize(spec.proc_count());
    return c;
}

struct Execution {
    std::vector<IndexedAction> steps;

    friend bool operator==(const Execution&, const Execution&) = default;
};

// One exchange: a burst of sends followed by receives of those same sends.
// Shared between the synchronous engine and the trace scheduler.
struct ExchangeLabel {
    std::vector<IndexedAction> sends;
    std::vector<IndexedAction> receives;

    friend bool operator==(const ExchangeLabel&, const ExchangeLabel&) = default;
};

inline Execution flatten_exchanges(const std::vector<ExchangeLabel>& blocks) {
    Execution e;
    for (const ExchangeLabel& b : blocks) {
        e.steps.insert(e.steps.end(), b.sends.begin(), b.sends.end());
        e.steps.insert(e.steps.end(), b.receives.begin(), b.receives.end());
    }
    return e;
}

// Applies one indexed action. Sends require a matching transition and a mid
// unused by any buffered message; receives require a matching transition and
// their mid at the head of the actor's buffer. Nondeterministic transition
// targets are resolved by `delta_choice` (index among the matching
// transitions in declaration order).
inline AsyncConfig async_step(const SystemSpec& spec, const AsyncConfig& c,
                              const IndexedAction& ia, int delta_choice = 0) {
    const Action& a = ia.act;
    if (a.actor < 0 || a.actor >= spec.proc_count())
        throw std::runtime_error("async_step: unknown process");
    const ProcessDef& pd = spec.procs[a.actor];
    StateId l = c.locals[a.actor];
    int seen = 0;
    for (int ti : pd.outgoing[l]) {
        const Transition& t = pd.transitions[ti];
        if (t.kind != a.kind || t.payload != a.payload) continue;
        if (a.kind == ActKind::Send && t.peer != a.dest) continue;
        if (seen++ != delta_choice) continue;
        AsyncConfig next = c;
        if (a.kind == ActKind::Send) {
            for (const auto& buf : c.buffers)
                for (const auto& [m, v] : buf)
                    if (m == ia.mid) throw std::runtime_error("async_step: stale mid");
            next.buffers[a.dest].emplace_back(ia.mid, a.payload);
        } else {
            const auto& buf = c.buffers[a.actor];
            if (buf.empty() || buf.front().first != ia.mid || buf.front().second != a.payload)
                throw std::runtime_error("async_step: wrong buffer head");
            next.buffers[a.actor].pop_front();
        }
        next.locals[a.actor] = t.to;
        return next;
    }
    if (a.kind == ActKind::Recv && !c.buffers[a.actor].empty() &&
        (c.buffers[a.actor].front().first != ia.mid ||
         c.buffers[a.actor].front().second != a.payload))
        throw std::runtime_error("async_step: wrong buffer head");
    if (a.kind == ActKind::Recv && c.buffers[a.actor].empty())
        throw std::runtime_error("async_step: wrong buffer head");
    throw std::runtime_error("async_step: no transition");
}

// Replays an execution from the initial configuration, checking mid
// freshness and matching along the way. Nondeterministic targets follow
// declaration order greedily with backtracking.
inline std::optional<AsyncConfig> try_replay_execution(const SystemSpec& spec,
                                                       const std::vector<IndexedAction>& steps) {
    struct Frame {
        AsyncConfig cfg;
        int choice;
    };
    std::vector<Frame> stack;
    stack.push_back({initial_async_config(spec), 0});
    std::unordered_set<Mid> used;
    std::vector<int> used_at;  // send positions, to roll `used` back on backtrack
    size_t i = 0;
    while (true) {
        if (i == steps.size()) return stack.back().cfg;
        bool advanced = false;
        for (int ch = stack.back().choice;; ++ch) {
            if (steps[i].act.kind == ActKind::Send && used.count(steps[i].mid)) break;
            try {
                AsyncConfig next = async_step(spec, stack.back().cfg, steps[i], ch);
                stack.back().choice = ch + 1;
                stack.push_back({std::move(next), 0});
                if (steps[i].act.kind == ActKind::Send) {
                    used.insert(steps[i].mid);
                    used_at.push_back(static_cast<int>(i));
                }
                ++i;
                advanced = true;
                break;
            } catch (const std::runtime_error&) {
                if (ch > static_cast<int>(spec.procs[steps[i].act.actor].transitions.size()))
                    break;
                // try the next delta choice; give up past the transition count
                continue;
            }
        }
        if (advanced) continue;
        // backtrack
        stack.pop_back();
        if (stack.empty()) return std::nullopt;
        --i;
        if (steps[i].act.kind == ActKind::Send) {
            used.erase(steps[i].mid);
            used_at.pop_back();
        }
    }
}

inline AsyncConfig replay_execution(const SystemSpec& spec,
                                    const std::vector<IndexedAction>& steps) {
    auto r = try_replay_execution(spec, steps);
    if (!r) throw std::runtime_error("execution does not replay");
    return *r;
}

// ---------------------------------------------------------------------------
// Traces

// Actions kept in a linear order consistent with po; po itself is the
// per-process restriction of that order, src pairs equal mids.
struct Trace {
    std::vector<IndexedAction> actions;
    int nprocs = 0;
    std::vector<std::vector<int>> by_proc;  // action indices per process
    std::vector<int> proc_pos;              // index of action within its process
    std::unordered_map<Mid, int> send_idx;
    std::unordered_map<Mid, int> recv_idx;

    int size() const { return static_cast<int>(actions.size()); }
    bool po_before(int a, int b) const {
        return actions[a].act.actor == actions[b].act.actor && proc_pos[a] < proc_pos[b];
    }
    bool is_send(int i) const { return actions[i].act.kind == ActKind::Send; }
    bool send_matched(int i) const { return recv_idx.count(actions[i].mid) != 0; }
    int recv_of(int i) const {
        auto it = recv_idx.find(actions[i].mid);
        return it == recv_idx.end() ? -1 : it->second;
    }

    friend bool operator==(const Trace& a, const Trace& b) {
        if (a.nprocs != b.nprocs) return false;
        if (a.by_proc.size() != b.by_proc.size()) return false;
        for (size_t p = 0; p < a.by_proc.size(); ++p) {
            if (a.by_proc[p].size() != b.by_proc[p].size()) return false;
            for (size_t j = 0; j < a.by_proc[p].size(); ++j)
                if (a.actions[a.by_proc[p][j]] != b.actions[b.by_proc[p][j]]) return false;
        }
        return true;
    }
};

// Builds the trace of a step sequence. Validates well-formedness: unique
// send/recv per mid, receives preceded by their send, matching payload and
// destination. The sequence need not be replayable against any system.
inline Trace trace_of(const std::vector<IndexedAction>& steps) {
    Trace t;
    t.actions = steps;
    int np = 0;
    for (const IndexedAction& ia : steps) np = std::max(np, ia.act.actor + 1);
    for (const IndexedAction& ia : steps)
        if (ia.act.kind == ActKind::Send) np = std::max(np, ia.act.dest + 1);
    t.nprocs = np;
    t.by_proc.resize(np);
    t.proc_pos.resize(steps.size());
    for (int i = 0; i < t.size(); ++i) {
        const IndexedAction& ia = steps[i];
        t.proc_pos[i] = static_cast<int>(t.by_proc[ia.act.actor].size());
        t.by_proc[ia.act.actor].push_back(i);
        if (ia.act.kind == ActKind::Send) {
            if (!t.send_idx.emplace(ia.mid, i).second)
                throw std::runtime_error("trace: duplicate send mid " + std::to_string(ia.mid));
        } else {
            if (!t.recv_idx.emplace(ia.mid, i).second)
                throw std::runtime_error("trace: duplicate receive mid " + std::to_string(ia.mid));
        }
    }
    for (const auto& [mid, ri] : t.recv_idx) {
        auto it = t.send_idx.find(mid);
        if (it == t.send_idx.end())
            throw std::runtime_error("trace: receive without send, mid " + std::to_string(mid));
        int si = it->second;
        if (si > ri) throw std::runtime_error("trace: receive precedes its send");
        if (t.actions[si].act.dest != t.actions[ri].act.actor ||
            t.actions[si].act.payload != t.actions[ri].act.payload)
            throw std::runtime_error("trace: send/receive mismatch on mid " +
                                     std::to_string(mid));
    }
    return t;
}

inline Trace trace_of(const Execution& e) { return trace_of(e.steps); }

// reach[i] = bitset of actions strictly after i in (po + src)+, the causal
// order. Linear scan back-to-front works because po and src edges always
// point forward in the stored order.
inline std::vector<std::vector<uint64_t>> causal_reach(const Trace& t) {
    int n = t.size();
    int words = (n + 63) / 64;
    std::vector<std::vector<uint64_t>> reach(n, std::vector<uint64_t>(words, 0));
    auto merge_into = [&](int a, int b) {  // reach[a] |= {b} | reach[b]
        reach[a][b >> 6] |= 1ull << (b & 63);
        for (int w = 0; w < words; ++w) reach[a][w] |= reach[b][w];
    };
    for (int i = n - 1; i >= 0; --i) {
        const IndexedAction& ia = t.actions[i];
        int pp = t.proc_pos[i];
        const auto& row = t.by_proc[ia.act.actor];
        if (pp + 1 < static_cast<int>(row.size())) merge_into(i, row[pp + 1]);
        if (ia.act.kind == ActKind::Send)
            if (int r = t.recv_of(i); r >= 0) merge_into(i, r);
    }
    return reach;
}

inline bool reach_test(const std::vector<std::vector<uint64_t>>& reach, int a, int b) {
    return (reach[a][b >> 6] >> (b & 63)) & 1;
}

struct CausalDeliveryWitness {
    int s1 = -1, s2 = -1;  // action indices of the offending sends
    int r1 = -1, r2 = -1;  // witness receives; r1 = -1 when s1 unmatched
};

// Holds iff for every pair of sends s1 causally before s2 with the same
// destination: s2 is unmatched, or both are matched and r2 is not
// po-before r1. Returns the first witness otherwise, scanning in stored
// order for determinism.
inline std::optional<CausalDeliveryWitness> check_causal_delivery(const Trace& t) {
    auto reach = causal_reach(t);
    int n = t.size();
    for (int s1 = 0; s1 < n; ++s1) {
        if (!t.is_send(s1)) continue;
        for (int s2 = 0; s2 < n; ++s2) {
            if (s2 == s1 || !t.is_send(s2)) continue;
            if (t.actions[s1].act.dest != t.actions[s2].act.dest) continue;
            if (!reach_test(reach, s1, s2)) continue;
            int r2 = t.recv_of(s2);
            if (r2 < 0) continue;
            int r1 = t.recv_of(s1);
            if (r1 < 0) return CausalDeliveryWitness{s1, s2, -1, r2};
            if (t.po_before(r2, r1)) return CausalDeliveryWitness{s1, s2, r1, r2};
        }
    }
    return std::nullopt;
}

// Two executions are conflict-preserving permutations of each other exactly
// when they have the same trace.
inline bool is_conflict_preserving_permutation(const Execution& a, const Execution& b) {
    if (a.steps.size() != b.steps.size()) return false;
    std::vector<IndexedAction> sa = a.steps, sb = b.steps;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    if (sa != sb) return false;
    return trace_of(a) == trace_of(b);
}

// ---------------------------------------------------------------------------
// Bounded enumeration

// All executions of length <= depth_bound in which no buffer ever exceeds
// buffer_bound, in BFS order (shorter first; siblings in process/transition
// declaration order). The empty execution is included. Message ids are
// assigned sequentially in send order, which canonicalizes executions up to
// consistent renaming. `cap`: give up and return nullopt once more than cap
// executions exist within the bounds.
inline std::optional<std::vector<Execution>> explore_async_capped(const SystemSpec& spec,
                                                                  int buffer_bound,
                                                                  int depth_bound,
                                                                  size_t cap) {
    if (buffer_bound < 1 || depth_bound < 1)
        throw std::invalid_argument("explore_async: bounds must be >= 1");
    struct Node {
        AsyncConfig cfg;
        std::vector<IndexedAction> steps;
        int sends = 0;
    };
    std::vector<Execution> out;
    std::deque<Node> frontier;
    frontier.push_back({initial_async_config(spec), {}, 0});
    out.push_back({});
    while (!frontier.empty()) {
        Node cur = std::move(frontier.front());
        frontier.pop_front();
        if (static_cast<int>(cur.steps.size()) == depth_bound) continue;
        for (Pid p = 0; p < spec.proc_count(); ++p) {
            const ProcessDef& pd = spec.procs[p];
            for (int ti : pd.outgoing[cur.cfg.locals[p]]) {
                const Transition& tr = pd.transitions[ti];
                IndexedAction ia;
                ia.act.kind = tr.kind;
                ia.act.actor = p;
                ia.act.payload = tr.payload;
                Node next;
                if (tr.kind == ActKind::Send) {
                    if (static_cast<int>(cur.cfg.buffers[tr.peer].size()) >= buffer_bound)
                        continue;
                    ia.act.dest = tr.peer;
                    ia.mid = cur.sends;
                    next.cfg = cur.cfg;
                    next.cfg.buffers[tr.peer].emplace_back(ia.mid, tr.payload);
                } else {
                    const auto& buf = cur.cfg.buffers[p];
                    if (buf.empty() || buf.front().second != tr.payload) continue;
                    ia.mid = buf.front().first;
                    next.cfg = cur.cfg;
                    next.cfg.buffers[p].pop_front();
                }
                next.cfg.locals[p] = tr.to;
                next.steps = cur.steps;
                next.steps.push_back(ia);
                next.sends = cur.sends + (tr.kind == ActKind::Send ? 1 : 0);
                out.push_back({next.steps});
                if (out.size() > cap) return std::nullopt;
                frontier.push_back(std::move(next));
            }
        }
    }
    return out;
}

inline std::vector<Execution> explore_async(const SystemSpec& spec, int buffer_bound,
                                            int depth_bound) {
    auto r = explore_async_capped(spec, buffer_bound, depth_bound,
                                  std::numeric_limits<size_t>::max());
    return *r;
}

// ---------------------------------------------------------------------------
// Linearization

// Searches for an interleaving of the trace's actions that replays under the
// asynchronous semantics: per-process order fixed by po, receives must find
// their mid at the buffer head, delta choices explored. Memoized DFS over
// (per-process progress, locals); buffers are derivable from progress.
// Returns a replayable execution or nullopt (none exists or node cap hit).
inline std::optional<Execution> async_linearize(const SystemSpec& spec, const Trace& t,
                                                size_t node_cap = 500000) {
    int np = spec.proc_count();
    if (t.nprocs > np) return std::nullopt;
    struct State {
        std::vector<int> prog;     // next po position per process
        std::vector<StateId> loc;
        AsyncConfig cfg;
        std::vector<IndexedAction> steps;
    };
    auto key_of = [&](const State& st) {
        std::string k;
        k.reserve(st.prog.size() * 8);
        for (int v : st.prog) k += std::to_string(v), k += ',';
        k += '|';
        for (StateId v : st.loc) k += std::to_string(v), k += ',';
        return k;
    };
    std::unordered_set<std::string> dead;
    size_t nodes = 0;

    State init;
    init.prog.assign(np, 0);
    init.cfg = initial_async_config(spec);
    init.loc = init.cfg.locals;

    std::optional<Execution> found;
    auto dfs = [&](auto&& self, State& st) -> bool {
        if (++nodes > node_cap) return false;
        bool done = true;
        for (Pid p = 0; p < np; ++p)
            if (p < t.nprocs && st.prog[p] < static_cast<int>(t.by_proc[p].size())) done = false;
        if (done) {
            found = Execution{st.steps};
            return true;
        }
        std::string key = key_of(st);
        if (dead.count(key)) return false;
        // receives first: draining buffers early keeps the search shallow
        for (int pass = 0; pass < 2; ++pass) {
            for (Pid p = 0; p < np && p < t.nprocs; ++p) {
                if (st.prog[p] >= static_cast<int>(t.by_proc[p].size())) continue;
                const IndexedAction& ia = t.actions[t.by_proc[p][st.prog[p]]];
                bool is_recv = ia.act.kind == ActKind::Recv;
                if ((pass == 0) != is_recv) continue;
                const ProcessDef& pd = spec.procs[p];
                for (int ti : pd.outgoing[st.loc[p]]) {
                    const Transition& tr = pd.transitions[ti];
                    if (tr.kind != ia.act.kind || tr.payload != ia.act.payload) continue;
                    if (tr.kind == ActKind::Send && tr.peer != ia.act.dest) continue;
                    if (is_recv) {
                        const auto& buf = st.cfg.buffers[p];
                        if (buf.empty() || buf.front().first != ia.mid) continue;
                    }
                    State next = st;
                    if (is_recv)
                        next.cfg.buffers[p].pop_front();
                    else
                        next.cfg.buffers[ia.act.dest].emplace_back(ia.mid, ia.act.payload);
                    next.loc[p] = tr.to;
                    next.cfg.locals = next.loc;
                    next.prog[p]++;
                    next.steps.push_back(ia);
                    if (self(self, next)) return true;
                }
            }
        }
        dead.insert(std::move(key));
        return false;
    };
    dfs(dfs, init);
    return found;
}

}  // namespace synchro

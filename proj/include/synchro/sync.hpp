#pragma once

// k-synchronous semantics: exchange transitions over configurations that
// carry a blocked-sender map, exchange enumeration, replay of given exchange
// labels, and explicit-state reachability.

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "synchro/async.hpp"
#include "synchro/model.hpp"

namespace synchro {

// blocked[q] is a bitmask over sender process ids; bit p set means q will
// never again accept a message from p (p had a message to q dropped, or
// learned from such a process). Grows monotonically along every execution.
struct SyncConfig {
    std::vector<StateId> locals;
    std::vector<uint64_t> blocked;

    friend bool operator==(const SyncConfig&, const SyncConfig&) = default;

    std::string key() const {
        std::string k;
        k.reserve(locals.size() * 3 + blocked.size() * 8);
        for (StateId l : locals) {
            k += std::to_string(l);
            k += ',';
        }
        k += '|';
        for (uint64_t b : blocked) {
            k += std::to_string(b);
            k += ',';
        }
        return k;
    }
};

inline SyncConfig initial_sync_config(const SystemSpec& spec) {
    if (spec.proc_count() > 64)
        throw std::invalid_argument("sync semantics limited to 64 processes");
    SyncConfig c;
    for (const ProcessDef& pd : spec.procs) c.locals.push_back(pd.initial);
    c.blocked.assign(spec.proc_count(), 0);
    return c;
}

// Blocked-map update for one exchange. Unmatched sends block their sender
// at the destination. A MATCHED send by a blocked sender extends the block
// to its destination: the destination receives a message causally behind
// the dropped one, so its own later sends must not reach the starved
// process either. Unmatched sends never extend (nobody receives them, so
// no causal chain runs through the destination). Sends are processed in
// label order: an orphan makes its sender's later sends in the same
// exchange propagate (program order carries the chain), while extension
// hits do not cascade within the exchange (their receives all happen after
// the send phase).
inline std::vector<uint64_t> blocked_after(const std::vector<uint64_t>& blocked,
                                           const std::vector<IndexedAction>& sends,
                                           const std::vector<char>& matched) {
    std::vector<uint64_t> next = blocked;
    std::vector<uint64_t> taint = blocked;  // old map plus earlier orphans
    for (size_t i = 0; i < sends.size(); ++i) {
        Pid p = sends[i].act.actor, q = sends[i].act.dest;
        if (matched[i]) {
            for (size_t qq = 0; qq < blocked.size(); ++qq)
                if (taint[qq] & (1ull << p)) next[qq] |= 1ull << q;
        } else {
            next[q] |= 1ull << p;
            taint[q] |= 1ull << p;
        }
    }
    return next;
}

// Replays one exchange label from c: sends must follow delta in order, every
// receive must take the current head of its receiver's per-exchange queue
// (receives can only skip a suffix), matched sends need unblocked senders.
// Local message ids within the label pair receives to sends. Returns the
// successor or nullopt with a reason.
inline std::optional<SyncConfig> replay_exchange(const SystemSpec& spec, const SyncConfig& c,
                                                 const ExchangeLabel& label, int k,
                                                 std::string* why = nullptr) {
    auto fail = [&](const std::string& m) -> std::optional<SyncConfig> {
        if (why) *why = m;
        return std::nullopt;
    };
    if (label.sends.empty()) return fail("exchange has no sends");
    if (static_cast<int>(label.sends.size()) > k) return fail("more than k sends");
    if (label.sends.size() + label.receives.size() > 2 * static_cast<size_t>(k))
        return fail("exchange longer than 2k");

    std::vector<StateId> loc = c.locals;
    // send phase
    for (const IndexedAction& ia : label.sends) {
        const Action& a = ia.act;
        if (a.kind != ActKind::Send) return fail("receive in send phase");
        const ProcessDef& pd = spec.procs[a.actor];
        bool ok = false;
        for (int ti : pd.outgoing[loc[a.actor]]) {
            const Transition& t = pd.transitions[ti];
            if (t.kind == ActKind::Send && t.peer == a.dest && t.payload == a.payload) {
                loc[a.actor] = t.to;
                ok = true;
                break;
            }
        }
        if (!ok) return fail("send not enabled");
    }
    // pair receives with sends by mid
    std::vector<char> matched(label.sends.size(), 0);
    std::vector<std::deque<int>> queue(spec.proc_count());  // send indices per receiver
    for (int i = 0; i < static_cast<int>(label.sends.size()); ++i)
        queue[label.sends[i].act.dest].push_back(i);
    for (const IndexedAction& ia : label.receives) {
        const Action& a = ia.act;
        if (a.kind != ActKind::Recv) return fail("send in receive phase");
        auto& q = queue[a.actor];
        if (q.empty()) return fail("receive with empty exchange queue");
        int si = q.front();
        if (label.sends[si].mid != ia.mid) return fail("receive skips the queue head");
        if (label.sends[si].act.payload != a.payload) return fail("payload mismatch");
        if (c.blocked[a.actor] & (1ull << label.sends[si].act.actor))
            return fail("sender is blocked at this destination");
        const ProcessDef& pd = spec.procs[a.actor];
        bool ok = false;
        for (int ti : pd.outgoing[loc[a.actor]]) {
            const Transition& t = pd.transitions[ti];
            if (t.kind == ActKind::Recv && t.payload == a.payload) {
                loc[a.actor] = t.to;
                ok = true;
                break;
            }
        }
        if (!ok) return fail("receive not enabled");
        q.pop_front();
        matched[si] = 1;
    }
    SyncConfig next;
    next.locals = std::move(loc);
    next.blocked = blocked_after(c.blocked, label.sends, matched);
    return next;
}

// Nondeterministic receive targets make replay_exchange's greedy first-match
// delta choice incomplete; this variant searches delta choices.
inline std::optional<SyncConfig> replay_exchange_nd(const SystemSpec& spec, const SyncConfig& c,
                                                    const ExchangeLabel& label, int k) {
    if (label.sends.empty() || static_cast<int>(label.sends.size()) > k) return std::nullopt;
    std::function<std::optional<std::vector<StateId>>(std::vector<StateId>, size_t)> run_sends =
        [&](std::vector<StateId> loc, size_t i) -> std::optional<std::vector<StateId>> {
        if (i == label.sends.size()) return loc;
        const Action& a = label.sends[i].act;
        if (a.kind != ActKind::Send) return std::nullopt;
        const ProcessDef& pd = spec.procs[a.actor];
        for (int ti : pd.outgoing[loc[a.actor]]) {
            const Transition& t = pd.transitions[ti];
            if (t.kind != ActKind::Send || t.peer != a.dest || t.payload != a.payload) continue;
            std::vector<StateId> next = loc;
            next[a.actor] = t.to;
            if (auto r = run_sends(std::move(next), i + 1)) return r;
        }
        return std::nullopt;
    };
    auto sent = run_sends(c.locals, 0);
    if (!sent) return std::nullopt;

    std::vector<std::deque<int>> queue(spec.proc_count());
    for (int i = 0; i < static_cast<int>(label.sends.size()); ++i)
        queue[label.sends[i].act.dest].push_back(i);
    std::vector<char> matched(label.sends.size(), 0);
    std::function<std::optional<SyncConfig>(std::vector<StateId>, size_t)> run_recv =
        [&](std::vector<StateId> loc, size_t i) -> std::optional<SyncConfig> {
        if (i == label.receives.size()) {
            SyncConfig next;
            next.locals = std::move(loc);
            next.blocked = blocked_after(c.blocked, label.sends, matched);
            return next;
        }
        const Action& a = label.receives[i].act;
        if (a.kind != ActKind::Recv) return std::nullopt;
        auto& q = queue[a.actor];
        if (q.empty()) return std::nullopt;
        int si = q.front();
        if (label.sends[si].mid != label.receives[i].mid ||
            label.sends[si].act.payload != a.payload)
            return std::nullopt;
        if (c.blocked[a.actor] & (1ull << label.sends[si].act.actor)) return std::nullopt;
        const ProcessDef& pd = spec.procs[a.actor];
        for (int ti : pd.outgoing[loc[a.actor]]) {
            const Transition& t = pd.transitions[ti];
            if (t.kind != ActKind::Recv || t.payload != a.payload) continue;
            std::vector<StateId> next = loc;
            next[a.actor] = t.to;
            q.pop_front();
            matched[si] = 1;
            if (auto r = run_recv(std::move(next), i + 1)) return r;
            matched[si] = 0;
            q.push_front(si);
        }
        return std::nullopt;
    };
    return run_recv(*sent, 0);
}

// All distinct successors of one label over every delta choice in both
// phases. replay_exchange_nd stops at the first complete replay, which can
// strand a multi-block replay in a dead end; folding blocks over this set
// instead decides replayability of a whole schedule.
inline std::vector<SyncConfig> replay_exchange_all(const SystemSpec& spec, const SyncConfig& c,
                                                   const ExchangeLabel& label, int k) {
    std::vector<SyncConfig> out;
    if (label.sends.empty() || static_cast<int>(label.sends.size()) > k) return out;
    std::unordered_set<std::string> seen;
    std::vector<std::deque<int>> queue(spec.proc_count());
    for (int i = 0; i < static_cast<int>(label.sends.size()); ++i)
        queue[label.sends[i].act.dest].push_back(i);
    std::vector<char> matched(label.sends.size(), 0);

    std::function<void(std::vector<StateId>, size_t)> run_recv = [&](std::vector<StateId> loc,
                                                                     size_t i) {
        if (i == label.receives.size()) {
            SyncConfig next;
            next.locals = std::move(loc);
            next.blocked = blocked_after(c.blocked, label.sends, matched);
            if (seen.insert(next.key()).second) out.push_back(std::move(next));
            return;
        }
        const Action& a = label.receives[i].act;
        if (a.kind != ActKind::Recv) return;
        auto& q = queue[a.actor];
        if (q.empty()) return;
        int si = q.front();
        if (label.sends[si].mid != label.receives[i].mid ||
            label.sends[si].act.payload != a.payload)
            return;
        if (c.blocked[a.actor] & (1ull << label.sends[si].act.actor)) return;
        const ProcessDef& pd = spec.procs[a.actor];
        for (int ti : pd.outgoing[loc[a.actor]]) {
            const Transition& t = pd.transitions[ti];
            if (t.kind != ActKind::Recv || t.payload != a.payload) continue;
            std::vector<StateId> next = loc;
            next[a.actor] = t.to;
            q.pop_front();
            matched[si] = 1;
            run_recv(std::move(next), i + 1);
            matched[si] = 0;
            q.push_front(si);
        }
    };
    std::function<void(std::vector<StateId>, size_t)> run_sends = [&](std::vector<StateId> loc,
                                                                      size_t i) {
        if (i == label.sends.size()) {
            run_recv(std::move(loc), 0);
            return;
        }
        const Action& a = label.sends[i].act;
        if (a.kind != ActKind::Send) return;
        const ProcessDef& pd = spec.procs[a.actor];
        for (int ti : pd.outgoing[loc[a.actor]]) {
            const Transition& t = pd.transitions[ti];
            if (t.kind != ActKind::Send || t.peer != a.dest || t.payload != a.payload) continue;
            std::vector<StateId> next = loc;
            next[a.actor] = t.to;
            run_sends(std::move(next), i + 1);
        }
    };
    run_sends(c.locals, 0);
    return out;
}

// ---------------------------------------------------------------------------
// Exchange enumeration

// All (label, successor) pairs from c with at most k sends. Send
// interleavings are enumerated exhaustively in (process, transition) order;
// distinct interleavings are distinct labels because they order each
// receiver's queue differently. The receive phase is canonical: receivers in
// process id order, each consuming a queue prefix, stopping early at will
// and necessarily at the first message from a blocked sender; delta
// nondeterminism is branched. Message ids are label-local, 0..sends-1 in
// send order.
inline void k_exchange_successors_visit(
    const SystemSpec& spec, const SyncConfig& c, int k,
    const std::function<void(const ExchangeLabel&, const SyncConfig&)>& visit,
    const std::function<bool(Pid, Pid)>& allow_send = nullptr) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    int np = spec.proc_count();

    std::vector<IndexedAction> sends;
    std::vector<StateId> loc = c.locals;

    // receive phase over a fixed send sequence
    auto do_receives = [&]() {
        std::vector<std::vector<int>> queue(np);
        for (int i = 0; i < static_cast<int>(sends.size()); ++i)
            queue[sends[i].act.dest].push_back(i);
        // per receiver, enumerate (consumed prefix, delta path, final state)
        struct Opt {
            std::vector<int> taken;  // send indices received, in queue order
            StateId final_state;
        };
        std::vector<std::vector<Opt>> options(np);
        for (Pid q = 0; q < np; ++q) {
            const ProcessDef& pd = spec.procs[q];
            std::vector<int> taken;
            std::function<void(StateId, size_t)> rec = [&](StateId l, size_t qi) {
                options[q].push_back({taken, l});
                if (qi == queue[q].size()) return;
                int si = queue[q][qi];
                if (c.blocked[q] & (1ull << sends[si].act.actor)) return;  // queue blocked here
                for (int ti : pd.outgoing[l]) {
                    const Transition& t = pd.transitions[ti];
                    if (t.kind != ActKind::Recv || t.payload != sends[si].act.payload) continue;
                    taken.push_back(si);
                    rec(t.to, qi + 1);
                    taken.pop_back();
                }
            };
            rec(loc[q], 0);
        }
        // cartesian product over receivers in pid order
        std::vector<size_t> pick(np, 0);
        while (true) {
            ExchangeLabel label;
            label.sends = sends;
            SyncConfig next;
            next.locals = loc;
            std::vector<char> matched(sends.size(), 0);
            bool too_long = false;
            size_t total = sends.size();
            for (Pid q = 0; q < np; ++q) {
                const Opt& o = options[q][pick[q]];
                for (int si : o.taken) {
                    IndexedAction r;
                    r.act.kind = ActKind::Recv;
                    r.act.actor = q;
                    r.act.payload = sends[si].act.payload;
                    r.mid = sends[si].mid;
                    label.receives.push_back(r);
                    matched[si] = 1;
                }
                total += o.taken.size();
                next.locals[q] = o.final_state;
            }
            too_long = total > 2 * static_cast<size_t>(k);
            if (!too_long) {
                next.blocked = blocked_after(c.blocked, sends, matched);
                visit(label, next);
            }
            int q = np - 1;
            while (q >= 0 && ++pick[q] == options[q].size()) pick[q--] = 0;
            if (q < 0) break;
        }
    };

    // send phase: DFS over sequences of length 1..k
    std::function<void()> send_dfs = [&]() {
        if (!sends.empty()) do_receives();
        if (static_cast<int>(sends.size()) == k) return;
        for (Pid p = 0; p < np; ++p) {
            const ProcessDef& pd = spec.procs[p];
            StateId l = loc[p];
            for (int ti : pd.outgoing[l]) {
                const Transition& t = pd.transitions[ti];
                if (t.kind != ActKind::Send) continue;
                if (allow_send && !allow_send(p, t.peer)) continue;
                IndexedAction ia;
                ia.act.kind = ActKind::Send;
                ia.act.actor = p;
                ia.act.dest = t.peer;
                ia.act.payload = t.payload;
                ia.mid = static_cast<Mid>(sends.size());
                sends.push_back(ia);
                loc[p] = t.to;
                send_dfs();
                loc[p] = l;
                sends.pop_back();
            }
        }
    };
    send_dfs();

    // receive-phase locals of processes that did not send are c.locals;
    // loc is restored by the DFS above, nothing else to do
}

inline std::vector<std::pair<ExchangeLabel, SyncConfig>> k_exchange_successors(
    const SystemSpec& spec, const SyncConfig& c, int k) {
    std::vector<std::pair<ExchangeLabel, SyncConfig>> out;
    k_exchange_successors_visit(spec, c, k,
                                [&](const ExchangeLabel& l, const SyncConfig& s) {
                                    out.emplace_back(l, s);
                                });
    return out;
}

// ---------------------------------------------------------------------------
// Reachability

struct SyncEdge {
    int label = -1;  // index into SyncReachGraph::labels
    int target = -1;
};

struct SyncReachGraph {
    std::vector<SyncConfig> configs;  // BFS discovery order, initial first
    std::vector<std::vector<SyncEdge>> edges;
    std::vector<ExchangeLabel> labels;
    bool capped = false;  // node cap was hit; graph incomplete
    size_t explored = 0;
};

inline constexpr size_t kDefaultNodeCap = 1000000;

// Full reachable k-synchronous transition system, BFS with canonical config
// deduplication. `jobs` > 1 expands each BFS layer's successor sets in
// parallel; the merge is in frontier order so results are identical to the
// sequential run.
inline SyncReachGraph explore_sync(const SystemSpec& spec, int k,
                                   size_t node_cap = kDefaultNodeCap, int jobs = 1) {
    SyncReachGraph g;
    std::unordered_map<std::string, int> seen;
    SyncConfig init = initial_sync_config(spec);
    g.configs.push_back(init);
    g.edges.emplace_back();
    seen.emplace(init.key(), 0);
    std::vector<int> frontier{0};
    while (!frontier.empty()) {
        std::vector<std::vector<std::pair<ExchangeLabel, SyncConfig>>> layer(frontier.size());
        auto expand = [&](size_t a, size_t b) {
            for (size_t i = a; i < b; ++i)
                layer[i] = k_exchange_successors(spec, g.configs[frontier[i]], k);
        };
        if (jobs > 1 && frontier.size() > 1) {
            size_t nt = std::min<size_t>(jobs, frontier.size());
            std::vector<std::thread> ths;
            size_t chunk = (frontier.size() + nt - 1) / nt;
            for (size_t t = 0; t < nt; ++t)
                ths.emplace_back(expand, t * chunk,
                                 std::min(frontier.size(), (t + 1) * chunk));
            for (auto& th : ths) th.join();
        } else {
            expand(0, frontier.size());
        }
        std::vector<int> next_frontier;
        for (size_t i = 0; i < frontier.size(); ++i) {
            int src = frontier[i];
            for (auto& [label, succ] : layer[i]) {
                std::string key = succ.key();
                auto [it, fresh] = seen.emplace(key, static_cast<int>(g.configs.size()));
                if (fresh) {
                    if (g.configs.size() >= node_cap) {
                        g.capped = true;
                        g.explored = g.configs.size();
                        return g;
                    }
                    g.configs.push_back(succ);
                    g.edges.emplace_back();
                    next_frontier.push_back(it->second);
                }
                g.labels.push_back(label);
                g.edges[src].push_back({static_cast<int>(g.labels.size()) - 1, it->second});
            }
        }
        frontier = std::move(next_frontier);
    }
    g.explored = g.configs.size();
    return g;
}

struct ReachResult {
    enum class Kind { Reachable, Unreachable, Inconclusive } kind = Kind::Unreachable;
    std::vector<ExchangeLabel> witness;
};

// Is some k-synchronous configuration with locals[p] = l reachable? BFS with
// parent pointers; the witness is the exchange sequence to the first hit.
inline ReachResult sync_reach_local(const SystemSpec& spec, int k, Pid p, StateId l,
                                    size_t node_cap = kDefaultNodeCap) {
    if (p < 0 || p >= spec.proc_count()) throw std::invalid_argument("unknown process");
    if (l < 0 || l >= spec.procs[p].state_count()) throw std::invalid_argument("unknown state");
    struct Node {
        SyncConfig cfg;
        int parent = -1;
        ExchangeLabel via;
    };
    std::vector<Node> nodes;
    std::unordered_map<std::string, int> seen;
    nodes.push_back({initial_sync_config(spec), -1, {}});
    seen.emplace(nodes[0].cfg.key(), 0);
    auto witness_of = [&](int i) {
        std::vector<ExchangeLabel> w;
        for (int x = i; x > 0; x = nodes[x].parent) w.push_back(nodes[x].via);
        std::reverse(w.begin(), w.end());
        return w;
    };
    if (nodes[0].cfg.locals[p] == l) return {ReachResult::Kind::Reachable, {}};
    size_t head = 0;
    while (head < nodes.size()) {
        int cur = static_cast<int>(head++);
        SyncConfig cfg = nodes[cur].cfg;
        std::optional<ReachResult> found;
        k_exchange_successors_visit(
            spec, cfg, k, [&](const ExchangeLabel& label, const SyncConfig& succ) {
                if (found) return;
                auto [it, fresh] = seen.emplace(succ.key(), static_cast<int>(nodes.size()));
                if (!fresh) return;
                nodes.push_back({succ, cur, label});
                if (succ.locals[p] == l)
                    found = ReachResult{ReachResult::Kind::Reachable,
                                        witness_of(static_cast<int>(nodes.size()) - 1)};
            });
        if (found) return *found;
        if (nodes.size() >= node_cap) return {ReachResult::Kind::Inconclusive, {}};
    }
    return {ReachResult::Kind::Unreachable, {}};
}

// ---------------------------------------------------------------------------
// Executions assembled from exchanges

// Renumbers label-local message ids into globally fresh ones, in send order
// across the sequence, rebinding receives to their sends.
inline std::vector<ExchangeLabel> renumber_exchanges(const std::vector<ExchangeLabel>& blocks) {
    std::vector<ExchangeLabel> out = blocks;
    Mid next = 0;
    for (ExchangeLabel& b : out) {
        std::unordered_map<Mid, Mid> remap;
        for (IndexedAction& s : b.sends) {
            remap[s.mid] = next;
            s.mid = next++;
        }
        for (IndexedAction& r : b.receives) r.mid = remap.at(r.mid);
    }
    return out;
}

// Depth-first enumeration of k-synchronous executions with at most
// max_actions flattened actions; exchanges and configs follow the canonical
// successor order, so output is deterministic. Executions are emitted as
// renumbered exchange sequences, prefix-closed (the empty one included).
inline std::vector<std::vector<ExchangeLabel>> enumerate_sync_executions(
    const SystemSpec& spec, int k, int max_actions, size_t cap = 200000) {
    std::vector<std::vector<ExchangeLabel>> out;
    std::vector<ExchangeLabel> cur;
    bool overflow = false;
    std::function<void(const SyncConfig&, int)> dfs = [&](const SyncConfig& c, int used) {
        if (overflow) return;
        out.push_back(renumber_exchanges(cur));
        if (out.size() > cap) {
            overflow = true;
            return;
        }
        k_exchange_successors_visit(spec, c, k,
                                    [&](const ExchangeLabel& label, const SyncConfig& succ) {
            if (overflow) return;
            int len = static_cast<int>(label.sends.size() + label.receives.size());
            if (used + len > max_actions) return;
            cur.push_back(label);
            dfs(succ, used + len);
            cur.pop_back();
        });
    };
    dfs(initial_sync_config(spec), 0);
    if (overflow) throw std::runtime_error("enumerate_sync_executions: cap exceeded");
    return out;
}

}  // namespace synchro

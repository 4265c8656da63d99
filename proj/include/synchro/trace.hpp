#pragma once

// Conflict graphs over traces: construction, cycle classification via
// strongly connected components, the k-synchrony test, and scheduling of a
// k-synchronous witness execution from the component structure.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "synchro/async.hpp"

namespace synchro {

// Edge label bits: first letter = kind of the earlier action, second = kind
// of the later one.
enum : uint8_t { kSS = 1, kSR = 2, kRS = 4, kRR = 8 };

struct CGNode {
    int send = -1;  // action index in the trace
    int recv = -1;  // -1 for unmatched sends
    Mid mid = -1;

    bool matched() const { return recv >= 0; }
};

struct ConflictGraph {
    std::vector<CGNode> nodes;                   // sorted by mid
    std::vector<std::map<int, uint8_t>> adj;     // adj[u][v] = label mask
    std::vector<int> node_of_action;             // action index -> node, -1 for none

    int size() const { return static_cast<int>(nodes.size()); }
};

inline ConflictGraph build_conflict_graph(const Trace& t) {
    ConflictGraph g;
    g.node_of_action.assign(t.size(), -1);
    for (int i = 0; i < t.size(); ++i) {
        if (!t.is_send(i)) continue;
        CGNode n;
        n.send = i;
        n.recv = t.recv_of(i);
        n.mid = t.actions[i].mid;
        g.nodes.push_back(n);
    }
    std::sort(g.nodes.begin(), g.nodes.end(),
              [](const CGNode& a, const CGNode& b) { return a.mid < b.mid; });
    g.adj.resize(g.nodes.size());
    for (int v = 0; v < g.size(); ++v) {
        g.node_of_action[g.nodes[v].send] = v;
        if (g.nodes[v].matched()) g.node_of_action[g.nodes[v].recv] = v;
    }
    for (const auto& row : t.by_proc) {
        for (size_t i = 0; i < row.size(); ++i) {
            int u = g.node_of_action[row[i]];
            if (u < 0) continue;
            uint8_t first = t.is_send(row[i]) ? 0 : 1;
            for (size_t j = i + 1; j < row.size(); ++j) {
                int v = g.node_of_action[row[j]];
                if (v < 0 || v == u) continue;
                uint8_t second = t.is_send(row[j]) ? 0 : 1;
                g.adj[u][v] |= static_cast<uint8_t>(1u << (first * 2 + second));
            }
            // the self-send case: both endpoints of one node on one process
            if (t.is_send(row[i]) && g.nodes[u].matched() &&
                t.actions[row[i]].act.dest == t.actions[row[i]].act.actor)
                g.adj[u][u] |= kSR;
        }
    }
    return g;
}

namespace detail {

// Iterative Tarjan; component ids are assigned so that every edge goes from
// lower or equal component id to... no ordering guarantee is used, callers
// sort components themselves.
inline std::vector<int> scc_of(const ConflictGraph& g, int* count_out) {
    int n = g.size();
    std::vector<int> comp(n, -1), low(n), num(n, -1), stk;
    std::vector<char> on(n, 0);
    int idx = 0, comps = 0;
    struct Frame {
        int v;
        std::map<int, uint8_t>::const_iterator it;
    };
    for (int root = 0; root < n; ++root) {
        if (num[root] >= 0) continue;
        std::vector<Frame> frames;
        frames.push_back({root, g.adj[root].begin()});
        num[root] = low[root] = idx++;
        stk.push_back(root);
        on[root] = 1;
        while (!frames.empty()) {
            Frame& f = frames.back();
            if (f.it != g.adj[f.v].end()) {
                int w = f.it->first;
                ++f.it;
                if (num[w] < 0) {
                    num[w] = low[w] = idx++;
                    stk.push_back(w);
                    on[w] = 1;
                    frames.push_back({w, g.adj[w].begin()});
                } else if (on[w]) {
                    low[f.v] = std::min(low[f.v], num[w]);
                }
            } else {
                int v = f.v;
                frames.pop_back();
                if (!frames.empty()) low[frames.back().v] = std::min(low[frames.back().v], low[v]);
                if (low[v] == num[v]) {
                    while (true) {
                        int w = stk.back();
                        stk.pop_back();
                        on[w] = 0;
                        comp[w] = comps;
                        if (w == v) break;
                    }
                    ++comps;
                }
            }
        }
    }
    *count_out = comps;
    return comp;
}

// Shortest path from `from` to `to` using only nodes of component c.
inline std::vector<int> path_in_scc(const ConflictGraph& g, const std::vector<int>& comp,
                                    int c, int from, int to) {
    if (from == to) return {from};
    std::vector<int> prev(g.size(), -2);
    std::queue<int> q;
    q.push(from);
    prev[from] = -1;
    while (!q.empty()) {
        int v = q.front();
        q.pop();
        for (const auto& [w, lbl] : g.adj[v]) {
            if (comp[w] != c || prev[w] != -2) continue;
            prev[w] = v;
            if (w == to) {
                std::vector<int> path;
                for (int x = to; x != -1; x = prev[x]) path.push_back(x);
                std::reverse(path.begin(), path.end());
                return path;
            }
            q.push(w);
        }
    }
    return {};
}

}  // namespace detail

struct CycleReport {
    enum class Kind { GoodWithin, BadCycle, OversizeCycle } kind = Kind::GoodWithin;
    int k = 0;
    std::vector<int> cycle;      // node indices; closed walk, last edge back to front
    int cycle_size = 0;          // number of distinct nodes on the walk
    std::vector<int> scc_sizes;  // descending
};

// A cycle is bad iff it contains an RS edge; it is oversize for k iff it
// visits more than k nodes. Closed walks over one SCC realize both notions,
// so: bad iff an RS edge has both ends in one SCC, oversize iff some SCC has
// more than k nodes. Bad wins when both apply (it refutes every k).
inline CycleReport classify(const ConflictGraph& g, int k) {
    if (k < 1) throw std::invalid_argument("classify: k must be >= 1");
    CycleReport rep;
    rep.k = k;
    int comps = 0;
    std::vector<int> comp = detail::scc_of(g, &comps);
    std::vector<int> size_of(comps, 0);
    for (int v = 0; v < g.size(); ++v) ++size_of[comp[v]];
    rep.scc_sizes = size_of;
    std::sort(rep.scc_sizes.rbegin(), rep.scc_sizes.rend());

    // bad: RS edge inside a component; witness = shortest cycle through it
    for (int u = 0; u < g.size(); ++u) {
        for (const auto& [v, lbl] : g.adj[u]) {
            if (!(lbl & kRS) || comp[u] != comp[v]) continue;
            rep.kind = CycleReport::Kind::BadCycle;
            rep.cycle = detail::path_in_scc(g, comp, comp[u], v, u);
            std::vector<int> distinct = rep.cycle;
            std::sort(distinct.begin(), distinct.end());
            distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
            rep.cycle_size = static_cast<int>(distinct.size());
            return rep;
        }
    }
    // oversize: a component with more than k nodes; witness = closed walk
    // visiting all of its nodes
    for (int c = 0; c < comps; ++c) {
        if (size_of[c] <= k) continue;
        std::vector<int> members;
        for (int v = 0; v < g.size(); ++v)
            if (comp[v] == c) members.push_back(v);
        std::vector<int> walk;
        for (size_t i = 0; i < members.size(); ++i) {
            std::vector<int> seg = detail::path_in_scc(g, comp, c, members[i],
                                                       members[(i + 1) % members.size()]);
            walk.insert(walk.end(), seg.begin(), seg.end() - 1);
        }
        rep.kind = CycleReport::Kind::OversizeCycle;
        rep.cycle = walk;
        rep.cycle_size = size_of[c];
        return rep;
    }
    return rep;
}

class CausalityError : public std::runtime_error {
  public:
    explicit CausalityError(const std::string& m) : std::runtime_error(m) {}
};

// True iff every conflict-graph cycle of t is good and fits k exchanges.
// Requires causal delivery, the hypothesis of the characterization; traces
// violating it get a distinct error rather than a boolean.
inline bool is_k_synchronous_trace(const Trace& t, int k) {
    if (auto w = check_causal_delivery(t))
        throw CausalityError("trace violates causal delivery (sends at positions " +
                             std::to_string(w->s1) + " and " + std::to_string(w->s2) +
                             "), k-synchrony characterization inapplicable");
    return classify(build_conflict_graph(t), k).kind == CycleReport::Kind::GoodWithin;
}

// ---------------------------------------------------------------------------
// Scheduling

// Emits a k-synchronous execution with the given trace: one exchange per
// strongly connected component, components in topological order, within a
// component sends first (ordered by program order, receive order at shared
// destinations, and matched-before-unmatched per destination), receives as a
// subsequence in send order. Ties broken by minimal mid.
inline std::vector<ExchangeLabel> schedule_k_exchanges(const Trace& t, int k) {
    if (!is_k_synchronous_trace(t, k))
        throw std::invalid_argument("schedule_k_exchanges: trace is not k-synchronous");
    ConflictGraph g = build_conflict_graph(t);
    int comps = 0;
    std::vector<int> comp = detail::scc_of(g, &comps);

    // condensation topological order, sources first, tie-break min mid
    std::vector<int> indeg(comps, 0);
    std::vector<std::vector<int>> cadj(comps);
    for (int u = 0; u < g.size(); ++u)
        for (const auto& [v, lbl] : g.adj[u])
            if (comp[u] != comp[v]) cadj[comp[u]].push_back(comp[v]);
    for (auto& row : cadj) {
        std::sort(row.begin(), row.end());
        row.erase(std::unique(row.begin(), row.end()), row.end());
        for (int c : row) ++indeg[c];
    }
    std::vector<Mid> comp_mid(comps, std::numeric_limits<Mid>::max());
    for (int v = 0; v < g.size(); ++v)
        comp_mid[comp[v]] = std::min(comp_mid[comp[v]], g.nodes[v].mid);
    using QE = std::pair<Mid, int>;
    std::priority_queue<QE, std::vector<QE>, std::greater<>> ready;
    for (int c = 0; c < comps; ++c)
        if (indeg[c] == 0) ready.push({comp_mid[c], c});
    std::vector<int> corder;
    while (!ready.empty()) {
        int c = ready.top().second;
        ready.pop();
        corder.push_back(c);
        for (int d : cadj[c])
            if (--indeg[d] == 0) ready.push({comp_mid[d], d});
    }
    if (static_cast<int>(corder.size()) != comps)
        throw std::logic_error("schedule_k_exchanges: condensation not acyclic");

    std::vector<std::vector<int>> members(comps);
    for (int v = 0; v < g.size(); ++v) members[comp[v]].push_back(v);

    std::vector<ExchangeLabel> blocks;
    for (int c : corder) {
        const std::vector<int>& vs = members[c];
        int m = static_cast<int>(vs.size());
        // local order constraints between the component's sends
        std::vector<std::vector<int>> before(m);
        auto add_edge = [&](int a, int b) { before[a].push_back(b); };
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) {
                if (i == j) continue;
                int si = g.nodes[vs[i]].send, sj = g.nodes[vs[j]].send;
                if (t.po_before(si, sj)) add_edge(i, j);  // program order of the senders
                int ri = g.nodes[vs[i]].recv, rj = g.nodes[vs[j]].recv;
                if (ri >= 0 && rj >= 0 && t.po_before(ri, rj)) add_edge(i, j);  // FIFO
                // a dropped message must not sit in front of a delivered one
                if (t.actions[si].act.dest == t.actions[sj].act.dest && ri >= 0 && rj < 0)
                    add_edge(i, j);
            }
        }
        std::vector<int> ind(m, 0);
        for (int i = 0; i < m; ++i)
            for (int j : before[i]) ++ind[j];
        std::priority_queue<QE, std::vector<QE>, std::greater<>> rq;
        for (int i = 0; i < m; ++i)
            if (ind[i] == 0) rq.push({g.nodes[vs[i]].mid, i});
        std::vector<int> order;
        while (!rq.empty()) {
            int i = rq.top().second;
            rq.pop();
            order.push_back(i);
            for (int j : before[i])
                if (--ind[j] == 0) rq.push({g.nodes[vs[j]].mid, j});
        }
        if (static_cast<int>(order.size()) != m)
            throw std::runtime_error(
                "schedule_k_exchanges: component not schedulable (trace not realizable "
                "under the asynchronous semantics)");
        ExchangeLabel blk;
        for (int i : order) blk.sends.push_back(t.actions[g.nodes[vs[i]].send]);
        for (int i : order)
            if (g.nodes[vs[i]].matched())
                blk.receives.push_back(t.actions[g.nodes[vs[i]].recv]);
        if (static_cast<int>(blk.sends.size()) > k)
            throw std::logic_error("schedule_k_exchanges: component larger than k");
        blocks.push_back(std::move(blk));
    }
    return blocks;
}

// ---------------------------------------------------------------------------
// Export

inline std::string cg_to_dot(const ConflictGraph& g, const Trace& t,
                             const SystemSpec* spec = nullptr) {
    std::ostringstream os;
    os << "digraph conflict {\n";
    for (int v = 0; v < g.size(); ++v) {
        const CGNode& n = g.nodes[v];
        Val pv = t.actions[n.send].act.payload;
        std::string pay = spec ? spec->payload_name(pv) : "v" + std::to_string(pv);
        os << "  n" << v << " [label=\"" << n.mid << ":" << pay << (n.matched() ? "" : "!")
           << "\"];\n";
    }
    static const char* names[4] = {"SS", "SR", "RS", "RR"};
    for (int u = 0; u < g.size(); ++u) {
        for (const auto& [v, lbl] : g.adj[u]) {
            os << "  n" << u << " -> n" << v << " [label=\"";
            bool first = true;
            for (int b = 0; b < 4; ++b)
                if (lbl & (1u << b)) {
                    if (!first) os << ",";
                    os << names[b];
                    first = false;
                }
            os << "\"";
            if (lbl & kRS) os << " style=bold";
            os << "];\n";
        }
    }
    os << "}\n";
    return os.str();
}

}  // namespace synchro

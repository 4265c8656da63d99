#pragma once

// Static system description: a family of communicating state machines,
// the text format they are written in, and structural validation.

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace synchro {

using Pid = int;
using Val = int;
using StateId = int;
using Mid = int;

inline constexpr Pid kNoPid = -1;

enum class ActKind { Send, Recv };

// A send carries (actor, dest, payload); a receive carries (actor, payload)
// and leaves dest = kNoPid.
struct Action {
    ActKind kind = ActKind::Send;
    Pid actor = kNoPid;
    Pid dest = kNoPid;
    Val payload = -1;

    friend bool operator==(const Action&, const Action&) = default;
    friend auto operator<=>(const Action&, const Action&) = default;
};

struct Transition {
    StateId from = -1;
    ActKind kind = ActKind::Send;
    Pid peer = kNoPid;  // destination process for sends, unused for receives
    Val payload = -1;
    StateId to = -1;

    friend bool operator==(const Transition&, const Transition&) = default;
};

struct ProcessDef {
    std::string name;
    std::vector<std::string> state_names;  // declaration order; initial included
    StateId initial = 0;
    std::vector<Transition> transitions;   // declaration order
    // outgoing[s] = indices into transitions, in declaration order
    std::vector<std::vector<int>> outgoing;

    friend bool operator==(const ProcessDef& a, const ProcessDef& b) {
        return a.name == b.name && a.state_names == b.state_names &&
               a.initial == b.initial && a.transitions == b.transitions;
    }

    StateId state_count() const { return static_cast<StateId>(state_names.size()); }

    void rebuild_outgoing() {
        outgoing.assign(state_names.size(), {});
        for (int i = 0; i < static_cast<int>(transitions.size()); ++i)
            outgoing[transitions[i].from].push_back(i);
    }
};

struct SystemSpec {
    std::string name;
    std::vector<std::string> payload_names;
    std::vector<ProcessDef> procs;

    friend bool operator==(const SystemSpec& a, const SystemSpec& b) {
        return a.name == b.name && a.payload_names == b.payload_names && a.procs == b.procs;
    }

    int proc_count() const { return static_cast<int>(procs.size()); }
    int payload_count() const { return static_cast<int>(payload_names.size()); }

    Pid pid_of(std::string_view n) const {
        for (int i = 0; i < proc_count(); ++i)
            if (procs[i].name == n) return i;
        return kNoPid;
    }
    Val payload_of(std::string_view n) const {
        for (int i = 0; i < payload_count(); ++i)
            if (payload_names[i] == n) return i;
        return -1;
    }
    const std::string& payload_name(Val v) const { return payload_names[v]; }
    const std::string& proc_name(Pid p) const { return procs[p].name; }
};

class ParseError : public std::runtime_error {
  public:
    ParseError(int line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    explicit ParseError(const std::string& all) : std::runtime_error(all), line_(0) {}
    int line() const { return line_; }

  private:
    int line_;
};

namespace detail {

inline bool is_ident(std::string_view s) {
    if (s.empty()) return false;
    if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    for (char c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    return true;
}

struct Line {
    int no;
    std::vector<std::string> tok;
};

inline std::vector<Line> tokenize(std::string_view text) {
    std::vector<Line> out;
    int no = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        std::string_view raw = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos
                                                                              : eol - pos);
        ++no;
        if (size_t h = raw.find('#'); h != std::string_view::npos) raw = raw.substr(0, h);
        Line ln{no, {}};
        std::string cur;
        for (char c : raw) {
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!cur.empty()) ln.tok.push_back(std::move(cur)), cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        if (!cur.empty()) ln.tok.push_back(std::move(cur));
        if (!ln.tok.empty()) out.push_back(std::move(ln));
        if (eol == std::string_view::npos) break;
        pos = eol + 1;
    }
    return out;
}

}  // namespace detail

// Parses the system description format:
//
//   system <name>
//   payloads v1 v2 ...
//   process <pid> initial <state>
//     state <state>
//       send <payload> to <pid> goto <state>
//       recv <payload> goto <state>
//   end
//
// '#' starts a comment. Identifiers match [A-Za-z_][A-Za-z0-9_]*. The
// identifier "pi" is reserved for the instrumentation helper process and is
// rejected wherever it appears. All errors are collected and reported
// together, each prefixed with its line number. Self-sends are legal but
// reported through `warnings`.
inline SystemSpec parse_system(std::string_view text,
                               std::vector<std::string>* warnings = nullptr) {
    using detail::Line;
    std::vector<Line> lines = detail::tokenize(text);
    std::vector<std::string> errors;
    auto err = [&](int no, const std::string& m) {
        errors.push_back("line " + std::to_string(no) + ": " + m);
    };
    auto ident = [&](int no, const std::string& t, const char* what) -> std::string {
        if (!detail::is_ident(t)) {
            err(no, std::string("invalid ") + what + " '" + t + "'");
            return t;
        }
        if (t == "pi") err(no, std::string("reserved identifier 'pi' used as ") + what);
        return t;
    };

    SystemSpec spec;
    bool saw_system = false;

    // Raw transition with unresolved names; resolved after all declarations
    // are known so forward references work.
    struct RawTrans {
        int line;
        int proc;
        std::string from;
        ActKind kind;
        std::string peer;
        std::string payload;
        std::string to;
    };
    struct RawProc {
        int line;
        std::string name;
        std::string initial;
        std::vector<std::pair<int, std::string>> states;  // (line, name) declaration order
    };
    std::vector<RawProc> rprocs;
    std::vector<RawTrans> rtrans;
    int cur_proc = -1;      // index into rprocs, -1 outside process blocks
    std::string cur_state;  // current `state` block, empty if none

    for (const Line& ln : lines) {
        const std::string& kw = ln.tok[0];
        if (kw == "system") {
            if (saw_system) err(ln.no, "duplicate 'system' line");
            if (ln.tok.size() != 2) {
                err(ln.no, "expected: system <name>");
                continue;
            }
            spec.name = ident(ln.no, ln.tok[1], "system name");
            saw_system = true;
        } else if (kw == "payloads") {
            if (ln.tok.size() < 2) err(ln.no, "expected: payloads <name>...");
            for (size_t i = 1; i < ln.tok.size(); ++i) {
                std::string v = ident(ln.no, ln.tok[i], "payload name");
                if (std::find(spec.payload_names.begin(), spec.payload_names.end(), v) !=
                    spec.payload_names.end())
                    err(ln.no, "duplicate payload '" + v + "'");
                else
                    spec.payload_names.push_back(v);
            }
        } else if (kw == "process") {
            if (ln.tok.size() != 4 || ln.tok[2] != "initial") {
                err(ln.no, "expected: process <name> initial <state>");
                continue;
            }
            RawProc rp;
            rp.line = ln.no;
            rp.name = ident(ln.no, ln.tok[1], "process name");
            rp.initial = ident(ln.no, ln.tok[3], "state name");
            for (const RawProc& q : rprocs)
                if (q.name == rp.name) err(ln.no, "duplicate process '" + rp.name + "'");
            rprocs.push_back(std::move(rp));
            cur_proc = static_cast<int>(rprocs.size()) - 1;
            cur_state.clear();
        } else if (kw == "end") {
            if (ln.tok.size() != 1) err(ln.no, "unexpected tokens after 'end'");
            if (cur_proc < 0) err(ln.no, "'end' outside a process block");
            cur_proc = -1;
            cur_state.clear();
        } else if (kw == "state") {
            if (cur_proc < 0) {
                err(ln.no, "'state' outside a process block");
                continue;
            }
            if (ln.tok.size() != 2) {
                err(ln.no, "expected: state <name>");
                continue;
            }
            cur_state = ident(ln.no, ln.tok[1], "state name");
            for (const auto& [l, s] : rprocs[cur_proc].states)
                if (s == cur_state)
                    err(ln.no, "duplicate state '" + cur_state + "' in process '" +
                                   rprocs[cur_proc].name + "'");
            rprocs[cur_proc].states.emplace_back(ln.no, cur_state);
        } else if (kw == "send" || kw == "recv") {
            if (cur_proc < 0 || cur_state.empty()) {
                err(ln.no, "'" + kw + "' outside a state block");
                continue;
            }
            RawTrans rt;
            rt.line = ln.no;
            rt.proc = cur_proc;
            rt.from = cur_state;
            if (kw == "send") {
                if (ln.tok.size() != 6 || ln.tok[2] != "to" || ln.tok[4] != "goto") {
                    err(ln.no, "expected: send <payload> to <process> goto <state>");
                    continue;
                }
                rt.kind = ActKind::Send;
                rt.payload = ident(ln.no, ln.tok[1], "payload name");
                rt.peer = ident(ln.no, ln.tok[3], "process name");
                rt.to = ident(ln.no, ln.tok[5], "state name");
            } else {
                if (ln.tok.size() != 4 || ln.tok[2] != "goto") {
                    err(ln.no, "expected: recv <payload> goto <state>");
                    continue;
                }
                rt.kind = ActKind::Recv;
                rt.payload = ident(ln.no, ln.tok[1], "payload name");
                rt.to = ident(ln.no, ln.tok[3], "state name");
            }
            rtrans.push_back(std::move(rt));
        } else {
            err(ln.no, "unknown directive '" + kw + "'");
        }
    }

    if (!saw_system && errors.empty()) errors.push_back("missing 'system' line");
    if (rprocs.empty() && errors.empty()) errors.push_back("no processes declared");

    // Resolve names. The initial state counts as declared even without a
    // `state` block so a process can consist of a single final state.
    for (RawProc& rp : rprocs) {
        ProcessDef pd;
        pd.name = rp.name;
        bool initial_declared = false;
        for (const auto& [l, s] : rp.states) {
            if (s == rp.initial) initial_declared = true;
            pd.state_names.push_back(s);
        }
        if (!initial_declared) pd.state_names.insert(pd.state_names.begin(), rp.initial);
        pd.initial = static_cast<StateId>(
            std::find(pd.state_names.begin(), pd.state_names.end(), rp.initial) -
            pd.state_names.begin());
        spec.procs.push_back(std::move(pd));
    }
    for (const RawTrans& rt : rtrans) {
        ProcessDef& pd = spec.procs[rt.proc];
        Transition t;
        t.kind = rt.kind;
        auto state_id = [&](const std::string& s) -> StateId {
            auto it = std::find(pd.state_names.begin(), pd.state_names.end(), s);
            if (it == pd.state_names.end()) {
                err(rt.line, "undeclared state '" + s + "' in process '" + pd.name + "'");
                return -1;
            }
            return static_cast<StateId>(it - pd.state_names.begin());
        };
        t.from = state_id(rt.from);
        t.to = state_id(rt.to);
        t.payload = spec.payload_of(rt.payload);
        if (t.payload < 0) err(rt.line, "undeclared payload '" + rt.payload + "'");
        if (rt.kind == ActKind::Send) {
            t.peer = spec.pid_of(rt.peer);
            if (t.peer == kNoPid)
                err(rt.line, "undeclared process '" + rt.peer + "'");
            else if (t.peer == rt.proc && warnings)
                warnings->push_back("line " + std::to_string(rt.line) + ": process '" +
                                    pd.name + "' sends to itself");
        }
        if (t.from >= 0 && t.to >= 0 && t.payload >= 0 &&
            (rt.kind == ActKind::Recv || t.peer != kNoPid))
            pd.transitions.push_back(t);
    }

    if (!errors.empty()) {
        std::string all;
        for (size_t i = 0; i < errors.size(); ++i) {
            if (i) all += '\n';
            all += errors[i];
        }
        throw ParseError(all);
    }
    for (ProcessDef& pd : spec.procs) pd.rebuild_outgoing();
    return spec;
}

// Canonical text form; parse_system(print_system(s)) == s.
inline std::string print_system(const SystemSpec& spec) {
    std::ostringstream os;
    os << "system " << spec.name << "\n";
    if (!spec.payload_names.empty()) {
        os << "payloads";
        for (const std::string& v : spec.payload_names) os << ' ' << v;
        os << "\n";
    }
    for (const ProcessDef& pd : spec.procs) {
        os << "\nprocess " << pd.name << " initial " << pd.state_names[pd.initial] << "\n";
        for (StateId s = 0; s < pd.state_count(); ++s) {
            os << "  state " << pd.state_names[s] << "\n";
            for (int ti : pd.outgoing[s]) {
                const Transition& t = pd.transitions[ti];
                if (t.kind == ActKind::Send)
                    os << "    send " << spec.payload_name(t.payload) << " to "
                       << spec.proc_name(t.peer) << " goto " << pd.state_names[t.to] << "\n";
                else
                    os << "    recv " << spec.payload_name(t.payload) << " goto "
                       << pd.state_names[t.to] << "\n";
            }
        }
        os << "end\n";
    }
    return os.str();
}

// All transitions of process p leaving local state l, as (action, target).
inline std::vector<std::pair<Action, StateId>> enabled_actions(const SystemSpec& spec, Pid p,
                                                               StateId l) {
    if (p < 0 || p >= spec.proc_count()) throw std::out_of_range("unknown process id");
    const ProcessDef& pd = spec.procs[p];
    if (l < 0 || l >= pd.state_count()) throw std::out_of_range("unknown state id");
    std::vector<std::pair<Action, StateId>> out;
    for (int ti : pd.outgoing[l]) {
        const Transition& t = pd.transitions[ti];
        Action a;
        a.kind = t.kind;
        a.actor = p;
        a.dest = t.kind == ActKind::Send ? t.peer : kNoPid;
        a.payload = t.payload;
        out.emplace_back(a, t.to);
    }
    return out;
}

// True if state l of process p has at least one outgoing transition and all
// of them are receives.
inline bool is_receiving_state(const ProcessDef& pd, StateId l) {
    if (pd.outgoing[l].empty()) return false;
    for (int ti : pd.outgoing[l])
        if (pd.transitions[ti].kind != ActKind::Recv) return false;
    return true;
}

// True if state l has no outgoing transitions.
inline bool is_final_state(const ProcessDef& pd, StateId l) { return pd.outgoing[l].empty(); }

// Payloads receivable by process p at state l.
inline std::vector<Val> receivable_payloads(const ProcessDef& pd, StateId l) {
    std::vector<Val> out;
    for (int ti : pd.outgoing[l]) {
        const Transition& t = pd.transitions[ti];
        if (t.kind == ActKind::Recv &&
            std::find(out.begin(), out.end(), t.payload) == out.end())
            out.push_back(t.payload);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace synchro

// Top-level acceptance checks. Each test covers one numbered criterion and
// prints a single PASS or FAIL line for it, so the suite output doubles as
// the release checklist.
#include <gtest/gtest.h>

#include <json.hpp>

#include <chrono>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "synchro/deadlock.hpp"
#include "synchro/instrument.hpp"
#include "synchro/json_io.hpp"
#include "testutil.hpp"

namespace synchro {
namespace {

using testutil::load_model;
using testutil::random_system_for_seed;

void report(int n, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << n << ": " << detail
              << std::endl;
}

long long ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - t0)
        .count();
}

Trace load_trace(const std::string& name) {
    TraceDoc doc =
        trace_doc_from_json(ojson::parse(testutil::read_text(testutil::models_dir() + "/" + name)));
    return trace_of(doc.steps);
}

// 1: the bundled least-k values, found with default settings
TEST(Acceptance, C1LeastKOnBundledModels) {
    struct Row {
        const char* model;
        int want;
    };
    const Row rows[] = {
        {"commit.mps", 1},
        {"elevator_dashed.mps", 2},
        {"replication.mps", 4},
    };
    std::ostringstream detail;
    bool ok = true;
    for (const Row& r : rows) {
        auto t0 = std::chrono::steady_clock::now();
        MinKReport rep = min_k_search(load_model(r.model));
        long long ms = ms_since(t0);
        bool good = rep.verdict.result == Verdict::Result::Synchronizable &&
                    rep.verdict.k == r.want;
        ok &= good;
        detail << r.model << " min_k="
               << (rep.verdict.result == Verdict::Result::Synchronizable
                       ? std::to_string(rep.verdict.k)
                       : std::string("?"))
               << " (" << ms << " ms)  ";
        EXPECT_TRUE(good) << r.model << " expected " << r.want;
    }
    report(1, ok, detail.str());
}

// 2: on random systems, enumerated k-synchronous executions pass the trace
// test, and asynchronous executions whose trace passes it are rebuilt by the
// scheduler into an equivalent, replayable exchange form
TEST(Acceptance, C2RandomSystemsRoundTrip) {
    const int kSystems = 200;
    int sync_execs = 0, async_traces = 0, scheduled = 0, skipped = 0;
    std::string first_error;
    bool ok = true;
    auto fail = [&](const std::string& m) {
        if (first_error.empty()) first_error = m;
        ok = false;
    };

    for (int seed = 1; seed <= kSystems; ++seed) {
        SystemSpec s = random_system_for_seed(static_cast<unsigned>(seed));
        std::string tag = "seed " + std::to_string(seed);

        std::optional<std::vector<Execution>> async =
            explore_async_capped(s, 2, 6, 20000);
        if (!async) ++skipped;

        for (int k = 1; k <= 3; ++k) {
            std::vector<std::vector<ExchangeLabel>> execs;
            try {
                execs = enumerate_sync_executions(s, k, 6, 100000);
            } catch (const std::runtime_error&) {
                ++skipped;
                continue;
            }
            for (const std::vector<ExchangeLabel>& labels : execs) {
                Execution e = flatten_exchanges(labels);
                ++sync_execs;
                if (!is_k_synchronous_trace(trace_of(e), k))
                    fail(tag + ": enumerated " + std::to_string(k) +
                         "-exchange execution fails the trace test");
            }
            if (!async) continue;
            for (const Execution& e : *async) {
                Trace t = trace_of(e);
                if (check_causal_delivery(t)) continue;
                ++async_traces;
                if (!is_k_synchronous_trace(t, k)) continue;
                std::vector<ExchangeLabel> labels;
                try {
                    labels = schedule_k_exchanges(t, k);
                } catch (const std::exception& ex) {
                    fail(tag + ": scheduler rejected a passing trace: " + ex.what());
                    continue;
                }
                ++scheduled;
                Execution f = flatten_exchanges(labels);
                if (!(trace_of(f) == t))
                    fail(tag + ": scheduled execution is not the same trace");
                std::vector<SyncConfig> frontier = {initial_sync_config(s)};
                for (const ExchangeLabel& b : labels) {
                    std::vector<SyncConfig> next;
                    std::set<std::string> seen;
                    for (const SyncConfig& sc : frontier)
                        for (SyncConfig& nc : replay_exchange_all(s, sc, b, k))
                            if (seen.insert(nc.key()).second) next.push_back(std::move(nc));
                    frontier = std::move(next);
                    if (frontier.empty()) break;
                }
                if (frontier.empty())
                    fail(tag + ": scheduled execution does not replay as exchanges");
            }
        }
    }
    std::ostringstream detail;
    detail << kSystems << " systems, k in {1,2,3}: " << sync_execs
           << " enumerated executions, " << scheduled << "/" << async_traces
           << " scheduler round trips, " << skipped << " skipped by caps";
    if (!ok) detail << "; first error: " << first_error;
    report(2, ok, detail.str());
    EXPECT_TRUE(ok) << first_error;
}

// 3: the instrumented check never disagrees with bounded asynchronous
// exploration
TEST(Acceptance, C3MonitorAgreesWithBoundedOracle) {
    const int kSystems = 120;
    int compared = 0, skipped = 0, discrepancies = 0;
    std::string first_error;

    for (int seed = 1; seed <= kSystems; ++seed) {
        SystemSpec s = random_system_for_seed(static_cast<unsigned>(seed));
        std::optional<std::vector<Execution>> async =
            explore_async_capped(s, 2, 6, 20000);
        if (!async) {
            ++skipped;
            continue;
        }
        for (int k = 1; k <= 2; ++k) {
            Verdict v;
            try {
                v = check_k_synchronizability(s, k, 50000);
            } catch (const std::exception& ex) {
                ++discrepancies;
                if (first_error.empty())
                    first_error = "seed " + std::to_string(seed) + ": check threw: " + ex.what();
                continue;
            }
            if (v.result == Verdict::Result::Inconclusive) {
                ++skipped;
                continue;
            }
            ++compared;

            bool oracle_violation = false;
            for (const Execution& e : *async) {
                Trace t = trace_of(e);
                if (check_causal_delivery(t)) continue;
                if (!is_k_synchronous_trace(t, k)) {
                    oracle_violation = true;
                    break;
                }
            }
            std::string err;
            if (v.result == Verdict::Result::Synchronizable && oracle_violation)
                err = "claims synchronizable but bounded search found a violation";
            if (v.result == Verdict::Result::Violation) {
                if (!v.counterexample || !try_replay_execution(s, v.counterexample->steps))
                    err = "violation counterexample does not replay";
                else if (is_k_synchronous_trace(trace_of(*v.counterexample), k))
                    err = "violation counterexample passes the trace test";
            }
            if (!err.empty()) {
                ++discrepancies;
                if (first_error.empty())
                    first_error = "seed " + std::to_string(seed) + ", k=" +
                                  std::to_string(k) + ": " + err;
            }
        }
    }
    bool ok = discrepancies == 0;
    std::ostringstream detail;
    detail << compared << " verdicts compared, " << skipped << " skipped, "
           << discrepancies << " discrepancies";
    if (!ok) detail << "; first: " << first_error;
    report(3, ok, detail.str());
    EXPECT_TRUE(ok) << first_error;
}

// 4: bounded asynchronous exploration never produces a causal delivery
// violation, on random systems and on the bundled models
TEST(Acceptance, C4CausalDeliveryUniversal) {
    uint64_t traces = 0, violations = 0;
    auto scan = [&](const SystemSpec& s) {
        std::optional<std::vector<Execution>> async = explore_async_capped(s, 2, 6, 20000);
        if (!async) return;
        for (const Execution& e : *async) {
            ++traces;
            if (check_causal_delivery(trace_of(e))) ++violations;
        }
    };
    for (int seed = 1; seed <= 200; ++seed)
        scan(random_system_for_seed(static_cast<unsigned>(seed)));
    for (const char* m : {"commit.mps", "elevator.mps", "elevator_dashed.mps",
                          "replication.mps", "german_style.mps", "osr_style.mps",
                          "decid_ex.mps", "producer_consumer.mps", "mutual_wait.mps",
                          "orphan.mps", "unspec_recv.mps"})
        scan(load_model(m));

    bool ok = violations == 0 && traces > 0;
    std::ostringstream detail;
    detail << traces << " explored executions, " << violations
           << " causal delivery violations";
    report(4, ok, detail.str());
    EXPECT_TRUE(ok);
}

// 5: the recorded executions behave exactly as documented
TEST(Acceptance, C5GoldenTraces) {
    bool ok = true;
    std::ostringstream detail;

    {
        Trace t = load_trace("commit_exec.trace");
        ConflictGraph g = build_conflict_graph(t);
        CycleReport rep = classify(g, 1);
        bool good = g.nodes.size() == 6 && rep.kind == CycleReport::Kind::GoodWithin &&
                    rep.scc_sizes.front() == 1 && is_k_synchronous_trace(t, 1);
        ok &= good;
        detail << "commit run: 6 nodes acyclic 1-synchronous ("
               << (good ? "yes" : "NO") << ")  ";
        EXPECT_TRUE(good);
    }
    {
        Trace t = load_trace("elevator_exec2.trace");
        CycleReport rep = classify(build_conflict_graph(t), 1);
        bool good = rep.kind == CycleReport::Kind::OversizeCycle && rep.cycle_size == 2 &&
                    !is_k_synchronous_trace(t, 1) && is_k_synchronous_trace(t, 2);
        ok &= good;
        detail << "elevator run: size-2 cycle, 2- but not 1-synchronous ("
               << (good ? "yes" : "NO") << ")  ";
        EXPECT_TRUE(good);
    }
    {
        Trace t = load_trace("rs_cycle.trace");
        CycleReport rep = classify(build_conflict_graph(t), 1);
        bool good = rep.kind == CycleReport::Kind::BadCycle;
        for (int k = 1; k <= 10; ++k) good &= !is_k_synchronous_trace(t, k);
        ok &= good;
        detail << "receive-send cycle: bad for every k up to 10 ("
               << (good ? "yes" : "NO") << ")";
        EXPECT_TRUE(good);
    }
    report(5, ok, detail.str());
}

// 6: each deadlock class is found on its model, with a replayable witness,
// and none are reported on the clean protocol
TEST(Acceptance, C6DeadlockTrio) {
    bool ok = true;
    std::ostringstream detail;

    auto witness_replays = [](const SystemSpec& s, const DeadlockSearch& r) {
        if (r.outcome != DeadlockSearch::Outcome::Found || !r.report) return false;
        SyncConfig cfg = initial_sync_config(s);
        for (const ExchangeLabel& label : r.report->labels) {
            std::optional<SyncConfig> next = replay_exchange(s, cfg, label, 1);
            if (!next) return false;
            cfg = *next;
        }
        return try_replay_execution(s, r.report->witness.steps).has_value();
    };

    {
        SystemSpec s = load_model("mutual_wait.mps");
        bool good = witness_replays(s, find_empty_buffer_deadlock(s, 1));
        ok &= good;
        detail << "empty-buffer (" << (good ? "found" : "MISSING") << ")  ";
        EXPECT_TRUE(good);
    }
    {
        SystemSpec s = load_model("orphan.mps");
        DeadlockSearch r = find_orphan_message(s, 1);
        bool good = witness_replays(s, r) && !r.report->unmatched_sends.empty();
        ok &= good;
        detail << "orphan (" << (good ? "found" : "MISSING") << ")  ";
        EXPECT_TRUE(good);
    }
    {
        SystemSpec s = load_model("unspec_recv.mps");
        DeadlockSearch r = find_unspecified_reception(s, 1);
        bool good = witness_replays(s, r) && !r.report->offending.empty();
        ok &= good;
        detail << "unspecified reception (" << (good ? "found" : "MISSING") << ")  ";
        EXPECT_TRUE(good);
    }
    {
        SystemSpec s = load_model("commit.mps");
        bool good =
            find_empty_buffer_deadlock(s, 1).outcome == DeadlockSearch::Outcome::None &&
            find_orphan_message(s, 1).outcome == DeadlockSearch::Outcome::None &&
            find_unspecified_reception(s, 1).outcome == DeadlockSearch::Outcome::None;
        ok &= good;
        detail << "commit clean (" << (good ? "yes" : "NO") << ")";
        EXPECT_TRUE(good);
    }
    report(6, ok, detail.str());
}

// 7: flow bounds on the bundled models
TEST(Acceptance, C7FlowBounds) {
    bool ok = true;
    std::ostringstream detail;

    {
        SystemSpec s = load_model("commit.mps");
        SystemFlowBounds b = system_flow_bounds(s);
        bool good = b.flow_bounded && b.send_bound <= 2 && b.receive_bound <= 2;
        ok &= good;
        detail << "commit bounded " << b.send_bound << "/" << b.receive_bound << " ("
               << (good ? "yes" : "NO") << ")  ";
        EXPECT_TRUE(good);
    }
    {
        SystemSpec s = load_model("elevator.mps");
        SystemFlowBounds b = system_flow_bounds(s);
        bool good = !b.flow_bounded &&
                    !b.per_proc[s.pid_of("e")].receive_bound.has_value();
        ok &= good;
        detail << "elevator receive-unbounded (" << (good ? "yes" : "NO") << ")  ";
        EXPECT_TRUE(good);
    }
    {
        SystemSpec s = load_model("decid_ex.mps");
        bool good = !system_flow_bounds(s).flow_bounded;
        ok &= good;
        detail << "ping-pong not flow-bounded (" << (good ? "yes" : "NO") << ")";
        EXPECT_TRUE(good);
    }
    report(7, ok, detail.str());
}

}  // namespace
}  // namespace synchro

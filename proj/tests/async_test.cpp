#include "synchro/async.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "synchro/json_io.hpp"
#include "testutil.hpp"

using namespace synchro;
using testutil::load_model;
using testutil::model_path;
using testutil::read_text;

namespace {

IndexedAction send_act(Pid from, Pid to, Val v, Mid m) {
    return {{ActKind::Send, from, to, v}, m};
}
IndexedAction recv_act(Pid by, Val v, Mid m) { return {{ActKind::Recv, by, kNoPid, v}, m}; }

std::vector<IndexedAction> load_trace_steps_raw(const std::string& file) {
    return trace_doc_from_json(ojson::parse(read_text(model_path(file)))).steps;
}

// Trace documents carry their own name tables; renumber into the system's.
std::vector<IndexedAction> load_trace_steps(const SystemSpec& spec, const std::string& file) {
    TraceDoc doc = trace_doc_from_json(ojson::parse(read_text(model_path(file))));
    std::vector<IndexedAction> out = doc.steps;
    for (IndexedAction& ia : out) {
        ia.act.actor = spec.pid_of(doc.processes.at(ia.act.actor));
        if (ia.act.kind == ActKind::Send)
            ia.act.dest = spec.pid_of(doc.processes.at(ia.act.dest));
        ia.act.payload = spec.payload_of(doc.payloads.at(ia.act.payload));
    }
    return out;
}

TEST(Async, StepSendThenReceive) {
    SystemSpec s = load_model("producer_consumer.mps");
    AsyncConfig c0 = initial_async_config(s);
    AsyncConfig c1 = async_step(s, c0, send_act(0, 1, 0, 0));
    ASSERT_EQ(c1.buffers[1].size(), 1u);
    EXPECT_EQ(c1.buffers[1][0].first, 0);
    AsyncConfig c2 = async_step(s, c1, recv_act(1, 0, 0));
    EXPECT_TRUE(c2.buffers[1].empty());
}

TEST(Async, ReceiveRequiresQueueHead) {
    SystemSpec s = load_model("producer_consumer.mps");
    AsyncConfig c = initial_async_config(s);
    c = async_step(s, c, send_act(0, 1, 0, 0));
    c = async_step(s, c, send_act(0, 1, 0, 1));
    EXPECT_THROW(async_step(s, c, recv_act(1, 0, 1)), std::runtime_error);
    AsyncConfig d = async_step(s, c, recv_act(1, 0, 0));
    ASSERT_EQ(d.buffers[1].size(), 1u);
    EXPECT_EQ(d.buffers[1][0].first, 1);
}

TEST(Async, ProducerConsumerEnumeration) {
    SystemSpec s = load_model("producer_consumer.mps");
    auto execs = explore_async_capped(s, 2, 4, 100000);
    ASSERT_TRUE(execs.has_value());
    // Depth 4, buffer bound 2: every execution is a prefix of some
    // interleaving of sends with in-order receives.
    std::set<size_t> lens;
    for (const Execution& e : *execs) {
        lens.insert(e.steps.size());
        EXPECT_TRUE(try_replay_execution(s, e.steps).has_value());
    }
    EXPECT_TRUE(lens.count(0));
    EXPECT_TRUE(lens.count(4));
    // Valid send/receive sequences with 0 <= pending <= 2 per prefix:
    // 1 empty + 1 + 2 + 2 + 4 per length.
    EXPECT_EQ(execs->size(), 10u);
}

TEST(Async, BufferBoundRespected) {
    SystemSpec s = load_model("producer_consumer.mps");
    auto execs = explore_async_capped(s, 1, 6, 100000);
    ASSERT_TRUE(execs.has_value());
    for (const Execution& e : *execs) {
        AsyncConfig c = initial_async_config(s);
        for (const IndexedAction& ia : e.steps) {
            c = async_step(s, c, ia);
            EXPECT_LE(c.buffers[1].size(), 1u);
        }
    }
}

TEST(Async, CommitExecContained) {
    SystemSpec s = load_model("commit.mps");
    std::vector<IndexedAction> steps = load_trace_steps(s, "commit_exec.trace");
    ASSERT_EQ(steps.size(), 12u);
    EXPECT_TRUE(try_replay_execution(s, steps).has_value());
    auto execs = explore_async_capped(s, 1, 12, 2000000);
    ASSERT_TRUE(execs.has_value());
    bool found = false;
    for (const Execution& e : *execs)
        if (e.steps == steps) found = true;
    EXPECT_TRUE(found);
}

TEST(Async, TraceWellFormednessChecks) {
    EXPECT_THROW(trace_of({recv_act(0, 0, 0)}), std::runtime_error);
    EXPECT_THROW(trace_of({send_act(0, 1, 0, 0), send_act(0, 1, 0, 0)}),
                 std::runtime_error);
    EXPECT_THROW(trace_of({send_act(0, 1, 0, 0), recv_act(0, 0, 0)}),
                 std::runtime_error);  // receive at the wrong process
    Trace t = trace_of({send_act(0, 1, 0, 0), recv_act(1, 0, 0)});
    EXPECT_EQ(t.nprocs, 2);
    EXPECT_TRUE(t.send_matched(0));
    EXPECT_EQ(t.recv_of(0), 1);
}

TEST(Async, PoAndSrcOrder) {
    std::vector<IndexedAction> steps = load_trace_steps_raw("elevator_exec2.trace");
    Trace t = trace_of(steps);
    // Program order within e: action 1 (recv closeDoor) precedes action 7
    // (send open).
    EXPECT_TRUE(t.po_before(1, 7));
    EXPECT_FALSE(t.po_before(7, 1));
    auto reach = causal_reach(t);
    // Send of mid 0 causally precedes the crossed receive of mid 3 through
    // the chain of matched messages.
    EXPECT_TRUE(reach_test(reach, 0, 8));
    // The last receive does not causally precede the first send.
    EXPECT_FALSE(reach_test(reach, 9, 0));
}

TEST(Async, CausalDeliverySatisfiedOnFigures) {
    for (const char* f : {"commit_exec.trace", "elevator_exec2.trace", "rs_cycle.trace"}) {
        Trace t = trace_of(load_trace_steps_raw(f));
        EXPECT_FALSE(check_causal_delivery(t).has_value()) << f;
    }
}

TEST(Async, CausalDeliveryViolationDetected) {
    // p sends v1 then v2 to q; q receives them out of order. Not a valid
    // mailbox behavior: the same-sender pair must arrive in send order.
    std::vector<IndexedAction> steps = {
        send_act(0, 1, 0, 0),
        send_act(0, 1, 0, 1),
        recv_act(1, 0, 1),
        recv_act(1, 0, 0),
    };
    Trace t = trace_of(steps);
    auto w = check_causal_delivery(t);
    ASSERT_TRUE(w.has_value());
    EXPECT_EQ(t.actions[w->s1].mid, 0);
    EXPECT_EQ(t.actions[w->s2].mid, 1);
}

TEST(Async, CausalDeliveryThroughChain) {
    // a sends m1 to c, then a sends m2 to b, b forwards m3 to c; receiving
    // m3 before m1 at c violates causal delivery through the chain.
    std::vector<IndexedAction> steps = {
        send_act(0, 2, 0, 0),
        send_act(0, 1, 0, 1),
        recv_act(1, 0, 1),
        send_act(1, 2, 0, 2),
        recv_act(2, 0, 2),
        recv_act(2, 0, 0),
    };
    Trace t = trace_of(steps);
    EXPECT_TRUE(check_causal_delivery(t).has_value());
}

TEST(Async, ReplayDeterminism) {
    SystemSpec s = load_model("commit.mps");
    std::vector<IndexedAction> steps = load_trace_steps(s, "commit_exec.trace");
    AsyncConfig a = replay_execution(s, steps);
    AsyncConfig b = replay_execution(s, steps);
    EXPECT_EQ(a.locals, b.locals);
    for (Pid p = 0; p < s.proc_count(); ++p) EXPECT_EQ(a.buffers[p], b.buffers[p]);
}

TEST(Async, ConflictPreservingPermutation) {
    SystemSpec s = load_model("commit.mps");
    std::vector<IndexedAction> steps = load_trace_steps(s, "commit_exec.trace");
    // Delaying a receive past an independent send is conflict preserving.
    std::vector<IndexedAction> delayed = steps;
    std::swap(delayed[3], delayed[4]);  // recv write at n1 after send write n2
    ASSERT_TRUE(try_replay_execution(s, delayed).has_value());
    EXPECT_TRUE(is_conflict_preserving_permutation({steps}, {delayed}));
    // A strict prefix is not a permutation at all.
    Execution prefix{std::vector<IndexedAction>(steps.begin(), steps.end() - 2)};
    EXPECT_FALSE(is_conflict_preserving_permutation({steps}, prefix));
}

TEST(Async, LinearizeFigureTraces) {
    SystemSpec commit = load_model("commit.mps");
    Trace t = trace_of(load_trace_steps(commit, "commit_exec.trace"));
    auto e = async_linearize(commit, t);
    ASSERT_TRUE(e.has_value());
    EXPECT_TRUE(try_replay_execution(commit, e->steps).has_value());
    EXPECT_TRUE(is_conflict_preserving_permutation(*e, {t.actions}));

    SystemSpec dashed = load_model("elevator_dashed.mps");
    Trace t2 = trace_of(load_trace_steps(dashed, "elevator_exec2.trace"));
    auto e2 = async_linearize(dashed, t2);
    ASSERT_TRUE(e2.has_value());
    EXPECT_TRUE(is_conflict_preserving_permutation(*e2, {t2.actions}));
}

TEST(Async, LinearizeRejectsForeignTrace) {
    // The commit system cannot produce the rs_cycle trace shape.
    SystemSpec commit = load_model("commit.mps");
    std::vector<IndexedAction> steps = {
        send_act(0, 1, 0, 0),
        recv_act(1, 0, 0),
    };
    // payload 0 = update sent by process 0 (c) to 1 (m): replayable.
    EXPECT_TRUE(async_linearize(commit, trace_of(steps)).has_value());
    std::vector<IndexedAction> wrong = {
        send_act(1, 0, 0, 0),  // manager starts by sending update: impossible
        recv_act(0, 0, 0),
    };
    EXPECT_FALSE(async_linearize(commit, trace_of(wrong)).has_value());
}

TEST(Async, ExploreIncludesEmptyExecution) {
    SystemSpec s = load_model("orphan.mps");
    auto execs = explore_async_capped(s, 1, 3, 1000);
    ASSERT_TRUE(execs.has_value());
    ASSERT_FALSE(execs->empty());
    EXPECT_TRUE((*execs)[0].steps.empty());
    // p can send v; q never receives it.
    bool one_send = false;
    for (const Execution& e : *execs)
        if (e.steps.size() == 1 && e.steps[0].act.kind == ActKind::Send) one_send = true;
    EXPECT_TRUE(one_send);
    EXPECT_EQ(execs->size(), 2u);
}

TEST(Async, FlattenExchanges) {
    ExchangeLabel ex;
    ex.sends = {send_act(0, 1, 0, 0)};
    ex.receives = {recv_act(1, 0, 0)};
    Execution e = flatten_exchanges({ex});
    ASSERT_EQ(e.steps.size(), 2u);
    EXPECT_EQ(e.steps[0].act.kind, ActKind::Send);
    EXPECT_EQ(e.steps[1].act.kind, ActKind::Recv);
}

}  // namespace

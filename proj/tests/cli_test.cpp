// End-to-end tests for the command line tool: exit codes, text output,
// JSON shapes, and determinism. The binary path arrives in SYNCHRO_BIN.
#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "testutil.hpp"

namespace {

using nlohmann::json;

struct RunResult {
    int code = -1;
    std::string out;  // stdout and stderr merged
};

std::string bin() {
    const char* b = std::getenv("SYNCHRO_BIN");
    if (!b) throw std::runtime_error("SYNCHRO_BIN is not set");
    return b;
}

std::string model(const std::string& name) {
    return synchro::testutil::models_dir() + "/" + name;
}

// args is a shell fragment; an env prefix may precede the binary
RunResult run(const std::string& args, const std::string& env = "") {
    std::string cmd = env.empty() ? "" : env + " ";
    cmd += bin() + " " + args + " 2>&1";
    FILE* f = popen(cmd.c_str(), "r");
    if (!f) throw std::runtime_error("popen failed");
    RunResult r;
    char buf[4096];
    size_t n;
    while ((n = fread(buf, 1, sizeof buf, f)) > 0) r.out.append(buf, n);
    int status = pclose(f);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

json run_json(const std::string& args, int want_code) {
    RunResult r = run(args);
    EXPECT_EQ(r.code, want_code) << r.out;
    return json::parse(r.out);
}

TEST(Cli, CheckCommitText) {
    RunResult r = run("check " + model("commit.mps") + " -k 1");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("Synchronizable(1)"), std::string::npos);
    EXPECT_NE(r.out.find("configs: "), std::string::npos);
    EXPECT_EQ(r.out.find("time: "), std::string::npos);
}

TEST(Cli, CheckViolationText) {
    RunResult r = run("check " + model("elevator_dashed.mps") + " -k 1");
    EXPECT_EQ(r.code, 1) << r.out;
    EXPECT_NE(r.out.find("Violation(1)"), std::string::npos);
    EXPECT_NE(r.out.find("cycle: "), std::string::npos);
    EXPECT_NE(r.out.find("send "), std::string::npos);
    EXPECT_NE(r.out.find("recv "), std::string::npos);

    EXPECT_EQ(run("check " + model("elevator_dashed.mps") + " -k 2").code, 0);
}

TEST(Cli, CheckJsonShape) {
    json j = run_json("check " + model("commit.mps") + " -k 1 --format json", 0);
    EXPECT_EQ(j["result"], "Synchronizable");
    EXPECT_EQ(j["k"], 1);
    EXPECT_GT(j["stats"]["configs"].get<uint64_t>(), 0u);
    EXPECT_FALSE(j["stats"].contains("time_ms"));

    json t = run_json("check " + model("commit.mps") + " -k 1 --format json --emit-time", 0);
    EXPECT_TRUE(t["stats"].contains("time_ms"));

    json v = run_json("check " + model("elevator_dashed.mps") + " -k 1 --format json", 1);
    EXPECT_EQ(v["result"], "Violation");
    EXPECT_EQ(v["cycle"]["kind"], "OversizeCycle");
    EXPECT_EQ(v["cycle"]["size"], 2);
    EXPECT_FALSE(v["counterexample"]["steps"].empty());
}

TEST(Cli, CheckOutputIsDeterministic) {
    std::string cmd = "check " + model("elevator_dashed.mps") + " -k 1 --format json";
    RunResult a = run(cmd);
    RunResult b = run(cmd);
    EXPECT_EQ(a.out, b.out);

    RunResult c = run(cmd + " --jobs 4");
    EXPECT_EQ(a.out, c.out);
}

TEST(Cli, MinKCommitText) {
    RunResult r = run("min-k " + model("commit.mps"));
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("flow bounds:"), std::string::npos);
    EXPECT_NE(r.out.find("flow-bounded: yes"), std::string::npos);
    EXPECT_NE(r.out.find("cap: 16"), std::string::npos);
    EXPECT_NE(r.out.find("iterations: 1"), std::string::npos);
    EXPECT_NE(r.out.find("Synchronizable(1)"), std::string::npos);
}

TEST(Cli, MinKUnboundedNeedsCap) {
    RunResult r = run("min-k " + model("decid_ex.mps"));
    EXPECT_EQ(r.code, 3) << r.out;
    EXPECT_NE(r.out.find("error: "), std::string::npos);

    RunResult capped = run("min-k " + model("decid_ex.mps") + " --cap 2");
    EXPECT_EQ(capped.code, 2) << capped.out;
    EXPECT_NE(capped.out.find("Inconclusive"), std::string::npos);
    EXPECT_NE(capped.out.find("flow-bounded: no"), std::string::npos);
}

TEST(Cli, MinKReplicationJson) {
    json j = run_json("min-k " + model("replication.mps") + " --format json", 0);
    EXPECT_EQ(j["result"], "Synchronizable");
    EXPECT_EQ(j["k"], 4);
    EXPECT_EQ(j["cap"], 10);
    EXPECT_EQ(j["cap_is_auto"], true);
    EXPECT_EQ(j["iterations"], 4);
    EXPECT_EQ(j["bounds"]["flow_bounded"], true);
    EXPECT_EQ(j["bounds"]["per_process"].size(), 5u);
}

TEST(Cli, DeadlockMutualWait) {
    RunResult r = run("deadlock " + model("mutual_wait.mps") + " -k 1");
    EXPECT_EQ(r.code, 1) << r.out;
    EXPECT_NE(r.out.find("empty-buffer"), std::string::npos);

    json j = run_json("deadlock " + model("mutual_wait.mps") + " -k 1 --format json", 1);
    ASSERT_EQ(j["searches"].size(), 3u);
    EXPECT_EQ(j["searches"][0]["kind"], "empty-buffer");
    EXPECT_EQ(j["searches"][0]["outcome"], "Found");
    EXPECT_FALSE(j["searches"][0]["report"]["witness"]["steps"].empty());
    EXPECT_EQ(j["searches"][1]["kind"], "orphan");
    EXPECT_EQ(j["searches"][2]["kind"], "unspecified-reception");
}

TEST(Cli, DeadlockKindSelection) {
    json j = run_json("deadlock " + model("orphan.mps") + " -k 1 --kind orphan --format json", 1);
    ASSERT_EQ(j["searches"].size(), 1u);
    EXPECT_EQ(j["searches"][0]["kind"], "orphan");
    EXPECT_EQ(j["searches"][0]["outcome"], "Found");
    EXPECT_EQ(j["searches"][0]["report"]["kind"], "OrphanMessage");

    // the same model holds no empty-buffer deadlock
    EXPECT_EQ(run("deadlock " + model("orphan.mps") + " -k 1 --kind empty-buffer").code, 0);
}

TEST(Cli, DeadlockCommitClean) {
    RunResult r = run("deadlock " + model("commit.mps") + " -k 1");
    EXPECT_EQ(r.code, 0) << r.out;
}

TEST(Cli, ReachCommand) {
    RunResult r = run("reach " + model("commit.mps") + " -k 1 -p c -s Done");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("Reachable"), std::string::npos);

    // the door's post-reset state needs the crossed round, out of reach at k=1
    RunResult u = run("reach " + model("elevator_dashed.mps") + " -k 1 -p d -s DDone");
    EXPECT_EQ(u.code, 1) << u.out;
    EXPECT_NE(u.out.find("Unreachable"), std::string::npos);
    EXPECT_EQ(run("reach " + model("elevator_dashed.mps") + " -k 2 -p d -s DDone").code, 0);

    json j = run_json("reach " + model("commit.mps") + " -k 1 -p m -s M6 --format json", 0);
    EXPECT_EQ(j["outcome"], "Reachable");
    EXPECT_EQ(j["process"], "m");
    EXPECT_EQ(j["state"], "M6");
    EXPECT_FALSE(j["witness"]["steps"].empty());

    RunResult bad = run("reach " + model("commit.mps") + " -k 1 -p nobody -s X");
    EXPECT_EQ(bad.code, 3) << bad.out;
    EXPECT_NE(bad.out.find("error: "), std::string::npos);
}

TEST(Cli, TraceCommand) {
    RunResult ok = run("trace " + model("commit_exec.trace") + " -k 1");
    EXPECT_EQ(ok.code, 0) << ok.out;
    EXPECT_NE(ok.out.find("1-synchronous"), std::string::npos);
    EXPECT_NE(ok.out.find("digraph"), std::string::npos);

    RunResult bad = run("trace " + model("rs_cycle.trace") + " -k 1");
    EXPECT_EQ(bad.code, 1) << bad.out;
    EXPECT_NE(bad.out.find("not 1-synchronous"), std::string::npos);

    json j = run_json("trace " + model("elevator_exec2.trace") + " -k 1 --format json", 1);
    EXPECT_EQ(j["k"], 1);
    EXPECT_EQ(j["synchronous"], false);
    EXPECT_EQ(j["cycle"]["size"], 2);
    EXPECT_TRUE(j.contains("dot"));
    json j2 = run_json("trace " + model("elevator_exec2.trace") + " -k 2 --format json", 0);
    EXPECT_EQ(j2["synchronous"], true);

    RunResult dot = run("trace " + model("rs_cycle.trace") + " -k 1 --format dot");
    EXPECT_EQ(dot.code, 1) << dot.out;
    EXPECT_EQ(dot.out.rfind("digraph", 0), 0u) << dot.out;

    // a system description is not a trace document
    RunResult wrong = run("trace " + model("commit.mps") + " -k 1");
    EXPECT_EQ(wrong.code, 3) << wrong.out;
    EXPECT_NE(wrong.out.find("error: "), std::string::npos);
}

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run("").code, 3);
    EXPECT_EQ(run("check").code, 3);                                    // missing input and -k
    EXPECT_EQ(run("check " + model("commit.mps")).code, 3);             // missing -k
    EXPECT_EQ(run("check " + model("commit.mps") + " -k 0").code, 3);   // k must be positive
    EXPECT_EQ(run("check " + model("commit.mps") + " -k 1 --format yaml").code, 3);
    EXPECT_EQ(run("check " + model("commit.mps") + " -k 1 --bogus").code, 3);
    EXPECT_EQ(run("frobnicate").code, 3);
    EXPECT_EQ(run("check /nonexistent.mps -k 1").code, 3);
    // dot output exists only for traces
    EXPECT_EQ(run("check " + model("commit.mps") + " -k 1 --format dot").code, 3);

    EXPECT_EQ(run("--help").code, 0);
    EXPECT_EQ(run("check --help").code, 0);
    EXPECT_NE(run("--help").out.find("Usage"), std::string::npos);
}

TEST(Cli, NodeCapEnvAndFlag) {
    // small env cap stops the search before a verdict
    RunResult r = run("check " + model("decid_ex.mps") + " -k 1", "SYNCHRO_NODE_CAP=3");
    EXPECT_EQ(r.code, 2) << r.out;
    EXPECT_NE(r.out.find("Inconclusive"), std::string::npos);

    // the flag overrides the environment
    RunResult f = run("check " + model("decid_ex.mps") + " -k 1 --node-cap 3",
                      "SYNCHRO_NODE_CAP=1000000");
    EXPECT_EQ(f.code, 2) << f.out;

    // a malformed value warns and falls back to the default
    RunResult m = run("check " + model("decid_ex.mps") + " -k 1", "SYNCHRO_NODE_CAP=abc");
    EXPECT_EQ(m.code, 1) << m.out;
    EXPECT_NE(m.out.find("warning: ignoring malformed SYNCHRO_NODE_CAP"), std::string::npos);
}

}  // namespace

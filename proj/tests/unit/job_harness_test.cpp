// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <thread>

#include "oracles.hpp"
#include "qrmi/job_harness.hpp"
#include "test_support.hpp"

namespace qrmi {
namespace {

using namespace std::chrono_literals;
using testing::env_from;

RegistryConfig two_devices(double fail_prob = 0.0) {
  return parse_config(R"({"version":1,"resources":[
    {"id":"qpu0","backend":"simulated","lanes":1,
     "device":{"num_qubits":5,"exec_time_per_shot_ms":0.1,"seed":3,
               "fault_injection":{"fail_task_prob":)" +
                      std::to_string(fail_prob) + R"(}}},
    {"id":"qpu1","backend":"simulated","lanes":2,"device":{"num_qubits":5,"seed":4}}]})");
}

ScriptStep submit_bell(std::int64_t shots, std::size_t token = 0) {
  ScriptStep s;
  s.kind = ScriptStep::Kind::kSubmit;
  s.payload = testing::bell_payload(shots, 42);
  s.token_index = token;
  return s;
}

ScriptStep await_last() {
  ScriptStep s;
  s.kind = ScriptStep::Kind::kAwait;
  return s;
}

ScriptStep exit_with(int code) {
  ScriptStep s;
  s.kind = ScriptStep::Kind::kExit;
  s.exit_code = code;
  return s;
}

JobSpec job(std::int64_t id, std::optional<std::string> resource, std::size_t count = 1) {
  JobSpec spec;
  spec.job_id = id;
  if (count > 0) {
    spec.requested.push_back(
        {resource ? std::optional<ResourceId>(ResourceId(*resource)) : std::nullopt, count});
  }
  spec.acquire_timeout = 10s;
  return spec;
}

class HarnessTest : public ::testing::Test {
 protected:
  void open(double fail_prob = 0.0) {
    registry_ = Registry::open(two_devices(fail_prob), {nullptr, env_from({}), 1});
    harness_ = std::make_unique<JobHarness>(*registry_, env_from({{"MY_API_KEY", "k-123"}}));
  }
  void SetUp() override { open(); }

  std::unique_ptr<Registry> registry_;
  std::unique_ptr<JobHarness> harness_;
};

TEST_F(HarnessTest, PrologueAcquiresOneTokenPerUnit) {
  auto ctx = JobContext::from_spec(job(1, "qpu0"));
  auto r = harness_->run_prologue(ctx);
  EXPECT_TRUE(r.ok) << r.detail;
  EXPECT_EQ(ctx.tokens.size(), 1u);
  EXPECT_EQ(ctx.phase, JobPhase::kPrologued);
  EXPECT_EQ(ctx.env.at("QRMI_MIDDLEWARE"), "up");
  EXPECT_EQ(registry_->pool(ResourceId("qpu0"))->holder_count(), 1u);
  harness_->run_epilogue(ctx);
}

TEST_F(HarnessTest, MissingSecretFailsWithoutHoldingTokens) {
  auto spec = job(1, "qpu0");
  spec.secrets = {{"api", "NOT_SET_ANYWHERE"}};
  auto ctx = JobContext::from_spec(spec);
  auto r = harness_->run_prologue(ctx);
  EXPECT_FALSE(r.ok);
  ASSERT_TRUE(r.error);
  EXPECT_EQ(*r.error, ErrorCode::kSecretMissing);
  EXPECT_TRUE(ctx.tokens.empty());
  EXPECT_EQ(ctx.phase, JobPhase::kFailed);
  EXPECT_EQ(registry_->pool(ResourceId("qpu0"))->holder_count(), 0u);
}

TEST_F(HarnessTest, PartialAcquireIsRolledBack) {
  // Two units of a one-lane device cannot both be held; the first is released.
  auto spec = job(1, "qpu0", 2);
  spec.acquire_timeout = 0ms;
  auto ctx = JobContext::from_spec(spec);
  auto r = harness_->run_prologue(ctx);
  EXPECT_FALSE(r.ok);
  ASSERT_TRUE(r.error);
  EXPECT_EQ(*r.error, ErrorCode::kAcquireTimeout);
  EXPECT_TRUE(ctx.tokens.empty());
  EXPECT_EQ(registry_->pool(ResourceId("qpu0"))->holder_count(), 0u);
}

TEST_F(HarnessTest, SecretsStayOutOfTheEnvironment) {
  auto spec = job(5, "qpu1");
  spec.secrets = {{"api", "MY_API_KEY"}};
  auto ctx = harness_->run_job(spec);
  EXPECT_EQ(ctx.phase, JobPhase::kDone);
  for (const auto& [k, v] : ctx.env) EXPECT_EQ(v.find("k-123"), std::string::npos) << k;
  EXPECT_TRUE(ctx.resolved_secrets.empty());
}

TEST_F(HarnessTest, SecondJobWaitsForFirstEpilogue) {
  auto first = JobContext::from_spec(job(1, "qpu0"));
  ASSERT_TRUE(harness_->run_prologue(first).ok);

  JobContext second = JobContext::from_spec(job(2, "qpu0"));
  std::thread t([&] { harness_->run_prologue(second); });
  auto pool = registry_->pool(ResourceId("qpu0"));
  while (pool->queue_length() == 0) std::this_thread::sleep_for(1ms);
  EXPECT_EQ(second.phase, JobPhase::kCreated);
  const std::string first_token = first.tokens.at(0).token;
  harness_->run_epilogue(first);
  t.join();
  EXPECT_EQ(second.phase, JobPhase::kPrologued);
  harness_->run_epilogue(second);

  auto events = pool->events();
  auto replay = oracle::replay_lock_log(events, 1);
  EXPECT_TRUE(replay.ok) << replay.violation;
  EXPECT_EQ(replay.grant_order, (std::vector<std::string>{"job-1", "job-2"}));
  // job-2 is granted by the hand-off right after job-1's release.
  auto released = std::find_if(events.begin(), events.end(), [&](const LockEvent& e) {
    return e.kind == LockEventKind::kReleased && e.token == first_token;
  });
  ASSERT_NE(released, events.end());
  ASSERT_NE(released + 1, events.end());
  EXPECT_EQ((released + 1)->kind, LockEventKind::kGranted);
  EXPECT_EQ((released + 1)->requester, "job-2");
}

TEST_F(HarnessTest, TaskInitInjectsIdentifiers) {
  auto spec = job(77, "qpu0");
  spec.options = {{"--qpu-shots", "100"}, {"qpu-log-level", "debug"}};
  auto ctx = JobContext::from_spec(spec);
  ASSERT_TRUE(harness_->run_prologue(ctx).ok);
  ASSERT_TRUE(harness_->run_task_init(ctx).ok);
  EXPECT_EQ(ctx.phase, JobPhase::kTaskInit);
  EXPECT_EQ(ctx.env.at("QRMI_RESOURCE_ID"), "qpu0");
  EXPECT_EQ(ctx.env.at("QRMI_BACKEND_TYPE"), "simulated");
  EXPECT_EQ(ctx.env.at("QRMI_TOKEN_COUNT"), "1");
  EXPECT_EQ(ctx.env.at("QRMI_JOB_ID"), "77");
  EXPECT_EQ(ctx.env.at("QRMI_TOKEN_0"), ctx.tokens[0].token);
  EXPECT_EQ(ctx.env.at("QRMI_OPT_QPU_SHOTS"), "100");
  EXPECT_EQ(ctx.env.at("QRMI_OPT_QPU_LOG_LEVEL"), "debug");
  harness_->run_epilogue(ctx);
}

TEST_F(HarnessTest, UnknownOptionIsRejected) {
  auto spec = job(1, "qpu0");
  spec.options = {{"--qpu-flavor", "x"}};
  auto ctx = JobContext::from_spec(spec);
  ASSERT_TRUE(harness_->run_prologue(ctx).ok);
  auto r = harness_->run_task_init(ctx);
  EXPECT_FALSE(r.ok);
  ASSERT_TRUE(r.error);
  EXPECT_EQ(*r.error, ErrorCode::kInvalidOption);
  EXPECT_EQ(ctx.phase, JobPhase::kFailed);
  harness_->run_epilogue(ctx);
  EXPECT_EQ(registry_->pool(ResourceId("qpu0"))->holder_count(), 0u);
}

TEST_F(HarnessTest, TwoTokensOnOneDevice) {
  auto ctx = JobContext::from_spec(job(3, "qpu1", 2));
  ASSERT_TRUE(harness_->run_prologue(ctx).ok);
  ASSERT_TRUE(harness_->run_task_init(ctx).ok);
  EXPECT_EQ(ctx.env.at("QRMI_TOKEN_COUNT"), "2");
  EXPECT_NE(ctx.env.at("QRMI_TOKEN_0"), ctx.env.at("QRMI_TOKEN_1"));
  EXPECT_EQ(ctx.env.at("QRMI_RESOURCE_ID"), "qpu1");
  auto r = harness_->run_epilogue(ctx);
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(registry_->pool(ResourceId("qpu1"))->holder_count(), 0u);
}

TEST_F(HarnessTest, AnyQpuPrefersAFreeDevice) {
  auto a = JobContext::from_spec(job(1, "qpu0"));
  ASSERT_TRUE(harness_->run_prologue(a).ok);
  auto b = JobContext::from_spec(job(2, std::nullopt));
  ASSERT_TRUE(harness_->run_prologue(b).ok);
  EXPECT_EQ(b.tokens[0].resource.str(), "qpu1");
  harness_->run_epilogue(a);
  harness_->run_epilogue(b);
}

TEST_F(HarnessTest, BellScriptStoresCounts) {
  auto spec = job(9, "qpu0");
  spec.script = {submit_bell(1000), await_last(), exit_with(0)};
  auto ctx = harness_->run_job(spec);
  EXPECT_EQ(ctx.exit_status, 0);
  EXPECT_EQ(ctx.phase, JobPhase::kDone);
  ASSERT_EQ(ctx.results.size(), 1u);
  std::uint64_t total = 0;
  for (const auto& [k, v] : ctx.results[0]) {
    EXPECT_TRUE(k == "00" || k == "11") << k;
    total += v;
  }
  EXPECT_EQ(total, 1000u);
  EXPECT_EQ(ctx.observed_resources, std::vector<ResourceId>{ResourceId("qpu0")});
  EXPECT_EQ(registry_->pool(ResourceId("qpu0"))->holder_count(), 0u);
}

TEST_F(HarnessTest, NonZeroExitStillRunsEpilogue) {
  auto spec = job(9, "qpu0");
  spec.script = {exit_with(1)};
  auto ctx = harness_->run_job(spec);
  EXPECT_EQ(ctx.exit_status, 1);
  EXPECT_EQ(ctx.phase, JobPhase::kFailed);
  ASSERT_EQ(ctx.hooks.size(), 3u);
  EXPECT_EQ(ctx.hooks.back().hook, HookKind::kEpilogue);
  EXPECT_TRUE(ctx.hooks.back().ok);
  EXPECT_EQ(registry_->pool(ResourceId("qpu0"))->holder_count(), 0u);
}

TEST(HarnessFaultTest, FailedTaskExitsNonZeroAndReleases) {
  auto registry = Registry::open(two_devices(1.0), {nullptr, env_from({}), 1});
  JobHarness harness(*registry, env_from({}));
  auto spec = job(4, "qpu0");
  spec.script = {submit_bell(10), await_last()};
  auto ctx = harness.run_job(spec);
  EXPECT_EQ(ctx.exit_status, 1);
  EXPECT_EQ(ctx.phase, JobPhase::kFailed);
  EXPECT_EQ(registry->pool(ResourceId("qpu0"))->holder_count(), 0u);
}

TEST_F(HarnessTest, QuantumOnlyJob) {
  auto spec = job(2, "qpu1");
  spec.script = {submit_bell(100), await_last()};
  auto ctx = harness_->run_job(spec);
  EXPECT_EQ(ctx.exit_status, 0);
  EXPECT_EQ(ctx.results.size(), 1u);
}

TEST_F(HarnessTest, DoubleEpilogueIsNoOp) {
  auto ctx = JobContext::from_spec(job(1, "qpu1", 2));
  ASSERT_TRUE(harness_->run_prologue(ctx).ok);
  EXPECT_TRUE(harness_->run_epilogue(ctx).ok);
  std::size_t recorded = ctx.hooks.size();
  auto again = harness_->run_epilogue(ctx);
  EXPECT_TRUE(again.ok);
  EXPECT_EQ(again.detail, "no-op");
  EXPECT_EQ(ctx.hooks.size(), recorded);
  EXPECT_TRUE(ctx.tokens.empty());
  EXPECT_EQ(ctx.phase, JobPhase::kDone);
}

TEST_F(HarnessTest, EpilogueWithoutPrologueDoesNothing) {
  auto ctx = JobContext::from_spec(job(1, "qpu0"));
  auto r = harness_->run_epilogue(ctx);
  EXPECT_FALSE(r.ok);
  EXPECT_TRUE(ctx.hooks.empty());
}

TEST_F(HarnessTest, HooksFollowContextKind) {
  auto order = [&](ContextKind kind) {
    auto spec = job(1, "qpu1");
    spec.context = kind;
    std::vector<HookKind> out;
    for (const auto& h : harness_->run_job(spec).hooks) out.push_back(h.hook);
    return out;
  };
  using H = HookKind;
  EXPECT_TRUE(order(ContextKind::kAllocator).empty());
  EXPECT_EQ(order(ContextKind::kJobScript), (std::vector<H>{H::kPrologue, H::kEpilogue}));
  EXPECT_EQ(order(ContextKind::kLocal), (std::vector<H>{H::kPrologue, H::kTaskInit, H::kEpilogue}));
  EXPECT_EQ(order(ContextKind::kRemote), (std::vector<H>{H::kPrologue, H::kTaskInit, H::kEpilogue}));
}

TEST_F(HarnessTest, HookTraceIsJsonLines) {
  auto spec = job(12, "qpu0");
  auto ctx = harness_->run_job(spec);
  auto text = hook_trace_jsonl(ctx);
  std::size_t lines = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    auto j = nlohmann::json::parse(text.substr(start, end - start));
    EXPECT_EQ(j.at("job_id"), 12);
    EXPECT_TRUE(j.contains("hook"));
    EXPECT_TRUE(j.contains("ok"));
    ++lines;
    start = end + 1;
  }
  EXPECT_EQ(lines, ctx.hooks.size());
}

TEST(HarnessParseTest, Gres) {
  EXPECT_EQ(parse_gres("qpu"), 1u);
  EXPECT_EQ(parse_gres("qpu:3"), 3u);
  EXPECT_EQ(parse_gres("QPU:2"), 2u);
  EXPECT_QRMI_ERROR(parse_gres("gpu:1"), ErrorCode::kValidationError);
  EXPECT_QRMI_ERROR(parse_gres("qpu:x"), ErrorCode::kValidationError);
}

TEST(HarnessParseTest, JobSpecFromJson) {
  auto spec = job_spec_from_json(nlohmann::json::parse(R"({
    "job_id": 8, "gres": "qpu:2", "resource": "qpu1", "context": "remote",
    "options": {"--qpu-shots": 50}, "secrets": {"api": "KEY_VAR"}, "timeout_ms": 250,
    "script": [{"op":"submit","circuit":"qubits 1\nh 0\nmeasure_all\n","shots":5},
               {"op":"await"}, {"op":"classical","duration_ms":3}, {"op":"exit","code":2}]
  })"));
  EXPECT_EQ(spec.job_id, 8);
  ASSERT_EQ(spec.requested.size(), 1u);
  EXPECT_EQ(spec.requested[0].count, 2u);
  EXPECT_EQ(spec.requested[0].resource->str(), "qpu1");
  EXPECT_EQ(spec.context, ContextKind::kRemote);
  EXPECT_EQ(spec.options.at("--qpu-shots"), "50");
  EXPECT_EQ(spec.secrets.at("api"), "KEY_VAR");
  EXPECT_EQ(spec.acquire_timeout, 250ms);
  ASSERT_EQ(spec.script.size(), 4u);
  EXPECT_EQ(spec.script[0].payload.shots, 5);
  EXPECT_EQ(spec.script[2].duration, Millis{3});
  EXPECT_EQ(spec.script[3].exit_code, 2);
  EXPECT_QRMI_ERROR(script_step_from_json(nlohmann::json::parse(R"({"op":"dance"})")),
                    ErrorCode::kValidationError);
}

}  // namespace
}  // namespace qrmi

// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "oracles.hpp"
#include "qrmi/cluster_sim.hpp"
#include "test_support.hpp"

namespace qrmi {
namespace {

RegistryConfig devices(std::size_t lanes_a, std::size_t lanes_b, double per_shot = 0.1) {
  nlohmann::json j = {{"version", 1}, {"resources", nlohmann::json::array()}};
  for (auto [id, lanes] : {std::pair{"qpuA", lanes_a}, std::pair{"qpuB", lanes_b}}) {
    j["resources"].push_back({{"id", id},
                              {"backend", "simulated"},
                              {"lanes", lanes},
                              {"device", {{"num_qubits", 3}, {"exec_time_per_shot_ms", per_shot}}}});
  }
  return config_from_json(j);
}

std::vector<ScriptStep> bell_script(std::int64_t shots) {
  ScriptStep submit;
  submit.kind = ScriptStep::Kind::kSubmit;
  submit.payload = testing::bell_payload(shots);
  ScriptStep wait;
  wait.kind = ScriptStep::Kind::kAwait;
  return {submit, wait};
}

SimJob make_job(std::int64_t id, std::int64_t arrival, int cores, std::size_t qpus,
                std::optional<std::string> resource, std::int64_t classical,
                std::int64_t shots = 0) {
  SimJob j;
  j.job_id = id;
  j.arrival = Millis{arrival};
  j.cores = cores;
  j.qpu_count = qpus;
  if (resource) j.qpu_resource = ResourceId(*resource);
  j.duration_classical = Millis{classical};
  if (qpus > 0 && shots > 0) j.script = bell_script(shots);
  return j;
}

Millis event_time(const SimTrace& t, std::int64_t job, SimEventKind kind) {
  for (const auto& e : t.events) {
    if (e.job_id == job && e.kind == kind) return e.time;
  }
  ADD_FAILURE() << "no " << to_string(kind) << " for job " << job;
  return Millis{-1};
}

// Sweep over every allocation boundary: node cores never oversubscribed and
// each lane held by at most one job at a time.
void expect_capacity_respected(const SimTrace& t, const ClusterSpec& c) {
  std::map<std::string, int> node_cap;
  for (const auto& n : c.nodes) node_cap[n.name] = n.cores;
  std::set<std::int64_t> times;
  for (const auto& a : t.allocations) times.insert(a.start.count());
  for (auto time : times) {
    std::map<std::string, int> used;
    for (const auto& a : t.allocations) {
      if (a.start.count() <= time && time < a.end.count()) {
        std::string key = a.lane ? a.resource + "/" + std::to_string(*a.lane) : a.resource;
        used[key] += a.lane ? 1 : a.cores;
      }
    }
    for (const auto& [key, n] : used) {
      int cap = node_cap.count(key) ? node_cap[key] : 1;
      EXPECT_LE(n, cap) << key << " at t=" << time;
    }
  }
}

ClusterSpec cluster(std::vector<int> cores, RegistryConfig reg,
                    SchedulingPolicy policy = SchedulingPolicy::kFifo) {
  ClusterSpec c;
  for (std::size_t i = 0; i < cores.size(); ++i) c.nodes.push_back({"n" + std::to_string(i), cores[i]});
  c.registry = std::move(reg);
  c.policy = policy;
  return c;
}

TEST(ClusterSimTest, SingleJobStartsOnArrival) {
  auto c = cluster({4}, devices(1, 1));
  auto t = simulate(c, {make_job(1, 37, 2, 1, "qpuA", 5, 100)}, 1);
  ASSERT_TRUE(t.all_finished());
  EXPECT_EQ(event_time(t, 1, SimEventKind::kStarted), Millis{37});
  // 5 ms classical then a 100 shot task at 0.1 ms per shot.
  EXPECT_EQ(event_time(t, 1, SimEventKind::kFinished),
            Millis{37 + 5 + oracle::task_ms(100, 0.1)});
  EXPECT_EQ(t.exit_status.at(1), 0);
  EXPECT_EQ(t.makespan, Millis{5 + oracle::task_ms(100, 0.1)});
}

TEST(ClusterSimTest, PipelineMakespanMatchesOracle) {
  auto c = cluster({8}, devices(2, 2));
  std::vector<SimJob> jobs;
  for (int i = 0; i < 20; ++i) jobs.push_back(make_job(i + 1, 0, 0, 1, std::nullopt, 0, 1000));
  auto t = simulate(c, jobs, 42);
  ASSERT_TRUE(t.all_finished());
  const std::int64_t d = oracle::task_ms(1000, 0.1);
  EXPECT_EQ(t.makespan.count(), oracle::pipeline_makespan(20, 4, d));
  expect_capacity_respected(t, c);
}

TEST(ClusterSimTest, UnknownResourceIsNamed) {
  auto c = cluster({4}, devices(1, 1));
  try {
    simulate(c, {make_job(1, 0, 1, 1, "qpuZ", 1, 10)}, 1);
    FAIL() << "expected SpecError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSpecError);
    EXPECT_NE(std::string(e.what()).find("qpuZ"), std::string::npos) << e.what();
  }
}

TEST(ClusterSimTest, RejectsInvalidWorkloads) {
  auto c = cluster({4}, devices(1, 1));
  EXPECT_QRMI_ERROR(simulate(c, {make_job(1, 0, 5, 0, std::nullopt, 1)}, 1), ErrorCode::kSpecError);
  EXPECT_QRMI_ERROR(simulate(c, {make_job(1, 0, 0, 0, std::nullopt, 1)}, 1), ErrorCode::kSpecError);
  EXPECT_QRMI_ERROR(simulate(c, {make_job(1, 0, 1, 2, "qpuA", 1, 10)}, 1), ErrorCode::kSpecError);
  EXPECT_QRMI_ERROR(simulate(c, {make_job(1, 0, 1, 0, std::nullopt, 1),
                                 make_job(1, 3, 1, 0, std::nullopt, 1)},
                             1),
                    ErrorCode::kSpecError);
  auto empty = cluster({}, devices(1, 1));
  EXPECT_QRMI_ERROR(simulate(empty, {make_job(1, 0, 0, 1, "qpuA", 0, 10)}, 1), ErrorCode::kSpecError);
}

TEST(ClusterSimTest, UtilizationTrivialCases) {
  auto c = cluster({4}, devices(1, 1));
  auto t = simulate(c, {make_job(1, 0, 4, 0, std::nullopt, 50)}, 1);
  auto u = utilization(t, c);
  EXPECT_DOUBLE_EQ(u.at("node:n0"), 1.0);
  EXPECT_DOUBLE_EQ(u.at("qpu:qpuA/lane0"), 0.0);
  EXPECT_DOUBLE_EQ(u.at("qpu:qpuB/lane0"), 0.0);
}

TEST(ClusterSimTest, FifoHeadBlocksLaterJobs) {
  auto c = cluster({4}, devices(1, 1));
  auto t = simulate(c,
                    {make_job(1, 0, 4, 0, std::nullopt, 100), make_job(2, 1, 4, 0, std::nullopt, 10),
                     make_job(3, 2, 0, 1, "qpuA", 0, 10)},
                    1);
  ASSERT_TRUE(t.all_finished());
  EXPECT_EQ(event_time(t, 2, SimEventKind::kStarted), Millis{100});
  // Strict FIFO: job 3 fits but waits behind job 2.
  EXPECT_GE(event_time(t, 3, SimEventKind::kStarted), Millis{100});
}

TEST(ClusterSimTest, BackfillRunsSmallJobsPastBlockedHead) {
  auto c = cluster({4}, devices(1, 1), SchedulingPolicy::kBackfill);
  auto t = simulate(c,
                    {make_job(1, 0, 3, 0, std::nullopt, 100), make_job(2, 1, 4, 0, std::nullopt, 10),
                     make_job(3, 2, 0, 1, "qpuA", 0, 10)},
                    1);
  ASSERT_TRUE(t.all_finished());
  EXPECT_EQ(event_time(t, 3, SimEventKind::kStarted), Millis{2});
  EXPECT_EQ(event_time(t, 2, SimEventKind::kStarted), Millis{100});
  expect_capacity_respected(t, c);
}

TEST(ClusterSimTest, EventsAreOrderedPerJob) {
  auto c = cluster({4, 4}, devices(1, 2));
  std::vector<SimJob> jobs;
  for (int i = 0; i < 6; ++i) jobs.push_back(make_job(i + 1, i * 3, 3, 1, std::nullopt, 7, 50));
  auto t = simulate(c, jobs, 5);
  ASSERT_TRUE(t.all_finished());
  const std::vector<SimEventKind> expected = {
      SimEventKind::kSubmitted, SimEventKind::kStarted, SimEventKind::kPrologueDone,
      SimEventKind::kTaskDone, SimEventKind::kEpilogueDone, SimEventKind::kFinished};
  for (const auto& j : jobs) {
    std::vector<SimEventKind> seen;
    Millis last{0};
    for (const auto& e : t.events) {
      if (e.job_id != j.job_id || e.kind == SimEventKind::kBlocked) continue;
      seen.push_back(e.kind);
      EXPECT_GE(e.time, last);
      last = e.time;
    }
    EXPECT_EQ(seen, expected) << "job " << j.job_id;
  }
}

// Random workloads: capacity, FIFO start order, work conservation at the
// queue head, and bit-identical replays.
class ClusterSimProperty : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(ClusterSimProperty, InvariantsHold) {
  std::mt19937_64 rng(GetParam());
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto c = cluster({pick(1, 4), pick(1, 4)}, devices(pick(1, 2), pick(1, 3), 0.05));
  const int total = c.nodes[0].cores + c.nodes[1].cores;
  std::vector<SimJob> jobs;
  std::int64_t arrival = 0;
  for (int i = 0; i < 25; ++i) {
    arrival += pick(0, 20);
    int cores = pick(0, total);
    std::size_t qpus = pick(0, 1);
    if (cores == 0 && qpus == 0) cores = 1;
    std::optional<std::string> res;
    if (qpus && pick(0, 1)) res = pick(0, 1) ? "qpuA" : "qpuB";
    jobs.push_back(make_job(i + 1, arrival, cores, qpus, res, pick(0, 30), pick(1, 400)));
  }
  auto t = simulate(c, jobs, GetParam());
  ASSERT_TRUE(t.all_finished());
  expect_capacity_respected(t, c);

  // FIFO: starts are in arrival order.
  Millis prev{0};
  for (const auto& j : jobs) {
    Millis s = event_time(t, j.job_id, SimEventKind::kStarted);
    EXPECT_GE(s, prev) << "job " << j.job_id;
    EXPECT_GE(s, j.arrival);
    prev = s;
  }

  // A job that arrives to an empty queue with its resources free starts at once.
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    const auto& j = jobs[k];
    if (k > 0 && event_time(t, jobs[k - 1].job_id, SimEventKind::kStarted) > j.arrival) continue;
    int busy = 0;
    std::map<std::string, int> lanes_busy;
    for (const auto& a : t.allocations) {
      if (a.job_id != j.job_id && a.start <= j.arrival && j.arrival < a.end) {
        if (a.lane) {
          ++lanes_busy[a.resource];
        } else {
          busy += a.cores;
        }
      }
    }
    bool qpu_free = true;
    if (j.qpu_count) {
      auto lanes = [&](const std::string& id) {
        for (const auto& e : c.registry.resources) {
          if (e.id.str() == id) return static_cast<int>(e.lanes);
        }
        return 0;
      };
      if (j.qpu_resource) {
        qpu_free = lanes_busy[j.qpu_resource->str()] < lanes(j.qpu_resource->str());
      } else {
        qpu_free = lanes_busy["qpuA"] < lanes("qpuA") || lanes_busy["qpuB"] < lanes("qpuB");
      }
    }
    if (total - busy >= j.cores && qpu_free) {
      EXPECT_EQ(event_time(t, j.job_id, SimEventKind::kStarted), j.arrival) << "job " << j.job_id;
    }
  }

  auto again = simulate(c, jobs, GetParam());
  EXPECT_EQ(trace_jsonl(t), trace_jsonl(again));
}

INSTANTIATE_TEST_SUITE_P(Seeds, ClusterSimProperty, ::testing::Range<std::uint64_t>(1, 21));

TEST(ClusterSimTest, ScenarioFromJsonExpandsCount) {
  auto s = scenario_from_json(nlohmann::json::parse(R"({
    "cluster": {"nodes": [{"name": "n0", "cores": 2}],
                "registry": {"version": 1, "resources": [{"id": "q", "backend": "simulated", "lanes": 1}]}},
    "policy": "backfill", "seed": 3,
    "jobs": [{"job_id": 10, "count": 3, "arrival_ms": 4, "cores": 1, "gres": "qpu:1", "resource": "any",
              "script": []}]
  })"));
  ASSERT_EQ(s.jobs.size(), 3u);
  EXPECT_EQ(s.jobs[2].job_id, 12);
  EXPECT_EQ(s.jobs[1].arrival, Millis{4});
  EXPECT_FALSE(s.jobs[0].qpu_resource);
  EXPECT_EQ(s.cluster.policy, SchedulingPolicy::kBackfill);
  EXPECT_EQ(s.seed, 3u);
  EXPECT_QRMI_ERROR(scenario_from_json(nlohmann::json::parse(R"({"jobs": []})")), ErrorCode::kSpecError);
}

TEST(ClusterSimTest, BundledScenariosFinish) {
  for (const char* name : {"pipeline_20.json", "hybrid_small.json"}) {
    auto s = load_scenario(testing::source_dir() / "scenarios" / name);
    auto t = simulate(s.cluster, s.jobs, s.seed);
    EXPECT_TRUE(t.all_finished()) << name;
    expect_capacity_respected(t, s.cluster);
    for (const auto& [id, code] : t.exit_status) EXPECT_EQ(code, 0) << name << " job " << id;
    for (const auto& [u_key, u] : utilization(t, s.cluster)) {
      EXPECT_GE(u, 0.0) << u_key;
      EXPECT_LE(u, 1.0) << u_key;
    }
  }
}

TEST(ClusterSimTest, TraceJsonlHasOneLinePerEvent) {
  auto c = cluster({2}, devices(1, 1));
  auto t = simulate(c, {make_job(1, 0, 1, 1, "qpuB", 2, 20)}, 1);
  auto text = trace_jsonl(t);
  std::size_t n = std::count(text.begin(), text.end(), '\n');
  EXPECT_EQ(n, t.events.size());
  auto first = nlohmann::json::parse(text.substr(0, text.find('\n')));
  EXPECT_EQ(first.at("kind"), "Submitted");
  EXPECT_EQ(first.at("job_id"), 1);
}

}  // namespace
}  // namespace qrmi

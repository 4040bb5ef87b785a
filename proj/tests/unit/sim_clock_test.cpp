// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <vector>

#include "qrmi/sim_clock.hpp"

namespace qrmi {
namespace {

TEST(SimClockTest, RunsEventsInTimeThenInsertionOrder) {
  SimClock clock;
  std::vector<int> order;
  clock.schedule_at(Millis{5}, [&] { order.push_back(2); });
  clock.schedule_at(Millis{1}, [&] { order.push_back(1); });
  clock.schedule_at(Millis{5}, [&] { order.push_back(3); });
  EXPECT_EQ(clock.pending(), 3u);
  EXPECT_EQ(clock.next_event_time(), Millis{1});
  EXPECT_EQ(clock.run_all(), 3u);
  EXPECT_EQ(order, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(clock.now(), Millis{5});
}

TEST(SimClockTest, AdvanceStopsAtLimitAndSetsNow) {
  SimClock clock;
  int fired = 0;
  clock.schedule_at(Millis{10}, [&] { ++fired; });
  clock.schedule_at(Millis{20}, [&] { ++fired; });
  clock.advance_to(Millis{15});
  EXPECT_EQ(fired, 1);
  EXPECT_EQ(clock.now(), Millis{15});
  clock.advance_by(Millis{5});
  EXPECT_EQ(fired, 2);
  EXPECT_EQ(clock.now(), Millis{20});
}

TEST(SimClockTest, EventsMayScheduleMoreEventsAtTheSameInstant) {
  SimClock clock;
  std::vector<Millis> seen;
  clock.schedule_at(Millis{3}, [&] {
    seen.push_back(clock.now());
    clock.schedule_after(Millis{0}, [&] { seen.push_back(clock.now()); });
  });
  clock.advance_to(Millis{3});
  EXPECT_EQ(seen, (std::vector<Millis>{Millis{3}, Millis{3}}));
}

TEST(SimClockTest, CancelRemovesPendingEventOnly) {
  SimClock clock;
  bool fired = false;
  auto id = clock.schedule_after(Millis{2}, [&] { fired = true; });
  EXPECT_TRUE(clock.cancel(id));
  EXPECT_FALSE(clock.cancel(id));
  clock.run_all();
  EXPECT_FALSE(fired);
  EXPECT_FALSE(clock.step());
}

TEST(SimClockTest, TimeNeverMovesBackward) {
  SimClock clock;
  clock.advance_to(Millis{10});
  clock.advance_to(Millis{4});
  EXPECT_EQ(clock.now(), Millis{10});
  bool fired = false;
  clock.schedule_at(Millis{2}, [&] { fired = true; });
  clock.step();
  EXPECT_TRUE(fired);
  EXPECT_EQ(clock.now(), Millis{10});
}

}  // namespace
}  // namespace qrmi

// Copyright 2026 The mros Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <atomic>
#include <deque>
#include <json.hpp>
#include <map>
#include <mutex>
#include <set>

#include "mros/fault.hpp"
#include "mros/services.hpp"
#include "node_fixture.hpp"

namespace mros {
namespace {

using testing::BrokerFixture;
using testing::eventually;
using testing::Spinner;

class NodeTest : public BrokerFixture {};

TEST_F(NodeTest, PublishedIntReachesSubscriber) {
  auto node = make_node("n");
  std::vector<std::pair<std::int64_t, MessageInfo>> got;
  auto sub = node->subscribe({"count", PayloadType::kInt64, {}}, [&](const Value& v, const MessageInfo& i) {
    got.emplace_back(std::get<std::int64_t>(v), i);
  });
  auto pub = node->advertise({"count", PayloadType::kInt64, {}});
  EXPECT_EQ(pub.publish(Value{std::int64_t{7}}), 1u);
  ASSERT_TRUE(node->spin_until([&] { return !got.empty(); }, Millis(2000)));
  EXPECT_EQ(got[0].first, 7);
  EXPECT_EQ(got[0].second.topic, "count");
  EXPECT_EQ(got[0].second.sequence, 1u);
  EXPECT_EQ(got[0].second.payload_type, PayloadType::kInt64);
  EXPECT_EQ(got[0].second.stream, pub.stream());
  EXPECT_EQ(got[0].second.encoded_size, 46u + 5u + 8u);
  EXPECT_GE(got[0].second.timestamp_receive, got[0].second.timestamp_send);
}

TEST_F(NodeTest, WrongTypedPublishIsRejectedBeforeSending) {
  auto node = make_node("n");
  int calls = 0;
  auto sub = node->subscribe({"count", PayloadType::kInt64, {}},
                             [&](const Value&, const MessageInfo&) { ++calls; });
  auto pub = node->advertise({"count", PayloadType::kInt64, {}});
  const auto before = broker->stats();
  EXPECT_THROW(pub.publish(Value{std::string("hi")}), TypeMismatchError);
  EXPECT_THROW(pub.publish_encoded(PayloadType::kStringUtf8, {'h', 'i'}), TypeMismatchError);
  node->spin_for(Millis(100));
  const auto after = broker->stats();
  EXPECT_EQ(after.data_delivered + after.data_unmatched, before.data_delivered + before.data_unmatched);
  EXPECT_EQ(calls, 0);
  // The failed attempts consumed no sequence numbers.
  EXPECT_EQ(pub.publish(Value{std::int64_t{1}}), 1u);
}

TEST_F(NodeTest, TwoPublishersKeepIndependentSequenceStreams) {
  auto a = make_node("a");
  auto b = make_node("b");
  auto s = make_node("s");
  std::multiset<std::tuple<std::uint64_t, std::uint64_t, std::int64_t>> seen;
  QosProfile deep;
  deep.history_depth = 256;
  auto sub = s->subscribe({"topic", PayloadType::kInt64, deep}, [&](const Value& v, const MessageInfo& i) {
    seen.emplace(i.stream, i.sequence, std::get<std::int64_t>(v));
  });
  auto pa = a->advertise({"topic", PayloadType::kInt64, {}});
  auto pb = b->advertise({"topic", PayloadType::kInt64, {}});
  std::multiset<std::tuple<std::uint64_t, std::uint64_t, std::int64_t>> expected;
  for (std::int64_t i = 1; i <= 50; ++i) {
    pa.publish(Value{i});
    pb.publish(Value{1000 + i});
    expected.emplace(pa.stream(), i, i);
    expected.emplace(pb.stream(), i, 1000 + i);
  }
  ASSERT_TRUE(s->spin_until([&] { return seen.size() == expected.size(); }, Millis(3000)));
  EXPECT_EQ(seen, expected);
}

TEST_F(NodeTest, LateSubscriberSeesOnlyLaterMessages) {
  auto node = make_node("n");
  auto pub = node->advertise({"late", PayloadType::kInt64, {}});
  for (std::int64_t i = 0; i < 5; ++i) pub.publish(Value{i});
  std::vector<std::int64_t> got;
  auto sub = node->subscribe({"late", PayloadType::kInt64, {}},
                             [&](const Value& v, const MessageInfo&) { got.push_back(std::get<std::int64_t>(v)); });
  for (std::int64_t i = 5; i < 8; ++i) pub.publish(Value{i});
  ASSERT_TRUE(node->spin_until([&] { return got.size() >= 3; }, Millis(2000)));
  node->spin_for(Millis(50));
  EXPECT_EQ(got, (std::vector<std::int64_t>{5, 6, 7}));
}

class QueueDepthTest : public BrokerFixture, public ::testing::WithParamInterface<std::size_t> {};

TEST_P(QueueDepthTest, BoundedQueueKeepsNewest) {
  const std::size_t depth = GetParam();
  const std::int64_t published = 10;
  auto node = make_node("n");
  QosProfile qos;
  qos.history_depth = depth;
  std::vector<std::int64_t> got;
  auto sub = node->subscribe({"burst", PayloadType::kInt64, qos},
                             [&](const Value& v, const MessageInfo&) { got.push_back(std::get<std::int64_t>(v)); });
  auto pub = node->advertise({"burst", PayloadType::kInt64, {}});
  for (std::int64_t i = 1; i <= published; ++i) pub.publish(Value{i});
  ASSERT_TRUE(eventually([&] { return sub.received() == static_cast<std::uint64_t>(published); }));

  // Enqueue/evict simulation of a drop-oldest queue.
  std::deque<std::int64_t> sim;
  for (std::int64_t i = 1; i <= published; ++i) {
    sim.push_back(i);
    if (sim.size() > depth) sim.pop_front();
  }
  node->spin_for(Millis(100));
  EXPECT_EQ(got, std::vector<std::int64_t>(sim.begin(), sim.end()));
  EXPECT_EQ(sub.dropped(), static_cast<std::uint64_t>(published) - sim.size());
}

INSTANTIATE_TEST_SUITE_P(Depths, QueueDepthTest, ::testing::Values(1, 4));

TEST_F(NodeTest, UnsubscribeStopsCallbacks) {
  auto node = make_node("n");
  int calls = 0;
  auto sub = node->subscribe({"t", PayloadType::kBool, {}}, [&](const Value&, const MessageInfo&) { ++calls; });
  auto pub = node->advertise({"t", PayloadType::kBool, {}});
  pub.publish(Value{true});
  ASSERT_TRUE(eventually([&] { return sub.received() == 1; }));
  sub.unsubscribe();  // also discards the queued message
  pub.publish(Value{true});
  node->spin_for(Millis(150));
  EXPECT_EQ(calls, 0);
  EXPECT_TRUE(eventually([&] { return broker->graph().topics.at(0).subscribers == 0; }));
}

TEST_F(NodeTest, MismatchedPayloadTypeIsCountedNotDelivered) {
  auto node = make_node("n");
  int calls = 0;
  auto sub = node->subscribe({"x", PayloadType::kInt64, {}}, [&](const Value&, const MessageInfo&) { ++calls; });
  auto pub = node->advertise({"x", PayloadType::kStringUtf8, {}});
  pub.publish(Value{std::string("nope")});
  ASSERT_TRUE(eventually([&] { return sub.type_mismatches() == 1; }));
  node->spin_for(Millis(50));
  EXPECT_EQ(calls, 0);
  EXPECT_EQ(node->stats().type_mismatches, 1u);
}

TEST_F(NodeTest, MixedTypeStormNeverDeliversAForeignType) {
  auto pubn = make_node("p");
  auto subn = make_node("s");
  const std::vector<std::pair<std::string, PayloadType>> topics = {
      {"storm/a", PayloadType::kInt64},
      {"storm/b", PayloadType::kFloat64},
      {"storm/c", PayloadType::kStringUtf8},
      {"storm/d", PayloadType::kBool}};
  std::map<PayloadType, int> delivered;
  std::vector<Subscription> subs;
  bool foreign = false;
  QosProfile deep;
  deep.history_depth = 1024;
  for (const auto& [name, type] : topics) {
    subs.push_back(subn->subscribe({"storm/*", type, deep}, [&, type = type](const Value& v, const MessageInfo&) {
      if (type_of(v) != type) foreign = true;
      ++delivered[type];
    }));
  }
  std::vector<Publisher> pubs;
  for (const auto& [name, type] : topics) pubs.push_back(pubn->advertise({name, type, {}}));

  std::mt19937_64 rng(11);
  std::map<PayloadType, int> expected;
  const int total = 400;
  for (int i = 0; i < total; ++i) {
    const std::size_t k = rng() % topics.size();
    Value v;
    switch (topics[k].second) {
      case PayloadType::kInt64: v = static_cast<std::int64_t>(rng()); break;
      case PayloadType::kFloat64: v = static_cast<double>(rng() % 1000) / 7.0; break;
      case PayloadType::kStringUtf8: v = std::to_string(rng()); break;
      default: v = (rng() & 1) != 0; break;
    }
    pubs[k].publish(v);
    ++expected[topics[k].second];
  }
  ASSERT_TRUE(subn->spin_until(
      [&] {
        int n = 0;
        for (const auto& [t, c] : delivered) n += c;
        return n == total;
      },
      Millis(5000)));
  EXPECT_FALSE(foreign);
  EXPECT_EQ(delivered, expected);
  for (std::size_t k = 0; k < topics.size(); ++k) {
    EXPECT_EQ(subs[k].type_mismatches(), static_cast<std::uint64_t>(total - expected[topics[k].second]));
  }
}

TEST_F(NodeTest, TopicNamesAreValidated) {
  auto node = make_node("n");
  EXPECT_THROW(node->advertise({"__hidden", PayloadType::kInt64, {}}), std::invalid_argument);
  EXPECT_THROW(node->advertise({"bad name", PayloadType::kInt64, {}}), std::invalid_argument);
  EXPECT_THROW(node->advertise({"a/*", PayloadType::kInt64, {}}), std::invalid_argument);
  EXPECT_THROW(node->subscribe({"__param/x", PayloadType::kInt64, {}}, [](const Value&, const MessageInfo&) {}),
               std::invalid_argument);
  QosProfile bad = QosProfile::reliable();
  bad.max_retries = 0;
  EXPECT_THROW(node->advertise({"ok", PayloadType::kInt64, bad}), std::invalid_argument);
}

TEST_F(NodeTest, ConflictingAdvertisementIsRejectedByBroker) {
  auto a = make_node("a");
  auto b = make_node("b");
  auto first = a->advertise({"shared", PayloadType::kInt64, {}});
  EXPECT_THROW(b->advertise({"shared", PayloadType::kStringUtf8, {}}), NodeError);
  EXPECT_NO_THROW(b->advertise({"shared", PayloadType::kInt64, {}}));
}

TEST_F(NodeTest, NodeNamesAreUniqueAndValidated) {
  auto a = make_node("robot");
  EXPECT_THROW(make_node("robot"), NodeError);
  EXPECT_THROW(make_node("/robot"), std::invalid_argument);
  EXPECT_THROW(make_node("ro bot"), std::invalid_argument);
  EXPECT_THROW(make_node(""), std::invalid_argument);
  a.reset();
  EXPECT_TRUE(eventually([&] { return broker->graph().nodes.empty(); }));
  EXPECT_NO_THROW(make_node("robot"));
}

TEST_F(NodeTest, UnreachableBrokerThrows) {
  NodeOptions o;
  o.broker = EndpointAddress::inproc("nobody_home");
  EXPECT_THROW(Node("n", o), NodeError);
}

TEST_F(NodeTest, GraphCountsMatchLiveHandles) {
  auto a = make_node("a");
  auto b = make_node("b");
  auto noop = [](const Value&, const MessageInfo&) {};
  auto p1 = a->advertise({"g/one", PayloadType::kInt64, {}});
  auto p2 = b->advertise({"g/one", PayloadType::kInt64, {}});
  auto p3 = a->advertise({"g/two", PayloadType::kFloat64, {}});
  auto s1 = b->subscribe({"g/one", PayloadType::kInt64, {}}, noop);
  auto s2 = a->subscribe({"g/two", PayloadType::kFloat64, {}}, noop);
  auto s3 = b->subscribe({"g/two", PayloadType::kFloat64, {}}, noop);

  auto counts = [&] {
    std::map<std::string, std::pair<int, int>> m;
    for (const auto& t : a->graph().topics) m[t.name] = {t.publishers, t.subscribers};
    return m;
  };
  using Counts = std::map<std::string, std::pair<int, int>>;
  EXPECT_EQ(counts(), (Counts{{"g/one", {2, 1}}, {"g/two", {1, 2}}}));
  const auto g = a->graph();
  EXPECT_EQ(std::set<std::string>(g.nodes.begin(), g.nodes.end()), (std::set<std::string>{"a", "b"}));

  p2.shutdown();
  s3.unsubscribe();
  EXPECT_TRUE(eventually([&] { return counts() == Counts{{"g/one", {1, 1}}, {"g/two", {1, 1}}}; }));
}

TEST_F(NodeTest, TimerFiresAtItsPeriod) {
  auto node = make_node("n");
  std::vector<TimePoint> fires;
  const auto start = SteadyClock::now();
  auto timer = node->create_timer(Millis(50), [&] { fires.push_back(SteadyClock::now()); });
  node->spin_for(Millis(525));
  const auto n = fires.size();
  EXPECT_GE(n, 9u);
  EXPECT_LE(n, 11u);
  // Cadence is anchored at creation: fire k lands near start + k * period.
  for (std::size_t k = 0; k < fires.size(); ++k) {
    const auto ideal = start + Millis(50) * static_cast<int>(k + 1);
    EXPECT_GE(fires[k] - ideal, -Millis(5));
    EXPECT_LT(fires[k] - ideal, Millis(40));
  }
  timer.cancel();
  const auto fired = timer.fired();
  node->spin_for(Millis(150));
  EXPECT_EQ(timer.fired(), fired);
}

TEST_F(NodeTest, ConcurrentPublishersKeepPerStreamOrder) {
  auto p = make_node("p");
  auto s = make_node("s");
  std::map<std::uint64_t, std::vector<std::uint64_t>> seqs;
  QosProfile deep;
  deep.history_depth = 8192;
  auto sub = s->subscribe({"mt", PayloadType::kInt64, deep},
                          [&](const Value&, const MessageInfo& i) { seqs[i.stream].push_back(i.sequence); });
  auto pub = p->advertise({"mt", PayloadType::kInt64, {}});
  const int threads = 4, per = 500;
  {
    std::vector<std::jthread> workers;
    for (int t = 0; t < threads; ++t) {
      workers.emplace_back([&] {
        for (int i = 0; i < per; ++i) pub.publish(Value{std::int64_t{i}});
      });
    }
  }
  ASSERT_TRUE(s->spin_until([&] { return seqs[pub.stream()].size() == threads * per; }, Millis(5000)));
  const auto& v = seqs[pub.stream()];
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], i + 1) << i;
}

// RateController

TEST(RateControllerTest, NominalCadenceIsExact) {
  const TimePoint epoch{};
  RateController rate(Millis(100), epoch);
  TimePoint now = epoch;
  for (std::uint64_t k = 1; k <= 20; ++k) {
    const auto step = rate.next(now);
    EXPECT_EQ(step.cycle, k);
    EXPECT_EQ(step.deadline, epoch + Millis(100) * static_cast<int>(k));
    EXPECT_TRUE(step.sleep);
    now = step.deadline + Millis(20);  // 20 ms of work
  }
}

TEST(RateControllerTest, OverrunSkipsMissedCycles) {
  const TimePoint epoch{};
  RateController rate(Millis(100), epoch);
  // Work of 250 ms during the first cycle.
  const auto step = rate.next(epoch + Millis(250));
  EXPECT_EQ(step.deadline, epoch + Millis(300));
  EXPECT_EQ(step.cycle, 3u);
  EXPECT_TRUE(step.sleep);
  // Behind by less than a period: no sleep, the cycle still advances by one.
  RateController slight(Millis(100), epoch);
  const auto late = slight.next(epoch + Millis(150));
  EXPECT_EQ(late.cycle, 1u);
  EXPECT_FALSE(late.sleep);
  EXPECT_EQ(slight.next(epoch + Millis(160)).deadline, epoch + Millis(200));
}

// Linear search over deadlines, written independently of the controller.
struct RateOracle {
  Nanos period;
  std::uint64_t cycle = 0;
  std::pair<std::uint64_t, bool> next(Nanos now) {
    const Nanos due = period * static_cast<std::int64_t>(cycle + 1);
    if (now <= due) return {++cycle, true};
    if (now - due < period) return {++cycle, false};
    std::uint64_t k = cycle + 1;
    while (period * static_cast<std::int64_t>(k) <= now) ++k;
    cycle = k;
    return {k, true};
  }
};

TEST(RateControllerTest, RandomWorkloadsMatchDeadlineOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Nanos period = Millis(1 + rng() % 200);
    const TimePoint epoch = TimePoint{} + Nanos(rng() % 1'000'000'000);
    RateController rate(period, epoch);
    RateOracle oracle{period};
    Nanos now{0};
    for (int step = 0; step < 500; ++step) {
      now += Nanos(rng() % static_cast<std::uint64_t>(period.count() * 4));
      const auto got = rate.next(epoch + now);
      const auto [cycle, sleep] = oracle.next(now);
      ASSERT_EQ(got.cycle, cycle);
      ASSERT_EQ(got.sleep, sleep);
      ASSERT_EQ(got.deadline - epoch, period * static_cast<std::int64_t>(cycle));
      if (got.sleep) now = got.deadline - epoch;
    }
  }
}

TEST(RateControllerTest, DeadlinesHaveNoCumulativeDrift) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 10000; ++i) {
    const Nanos period(1 + rng() % 1'000'000'000);
    const TimePoint epoch = TimePoint{} + Nanos(rng() % 1'000'000'000'000);
    const std::uint64_t k = rng() % 1'000'000;
    RateController rate(period, epoch);
    ASSERT_EQ(rate.deadline(k) - epoch, period * static_cast<std::int64_t>(k));
  }
}

TEST(RateControllerTest, FiftyIdleCyclesSpanFiveSeconds) {
  RateController rate(Millis(100));
  const auto start = rate.epoch();
  TimePoint last{};
  for (int i = 0; i < 50; ++i) last = rate.sleep();
  const auto wall = SteadyClock::now() - start;
  EXPECT_EQ(last - start, Millis(5000));
  EXPECT_GE(wall, Millis(4500));
  EXPECT_LE(wall, Millis(5500));
}

TEST(RateControllerTest, RejectsNonPositivePeriod) {
  EXPECT_THROW(RateController(Nanos{0}), std::invalid_argument);
}

// Parameters

TEST_F(NodeTest, ParameterDefaultTypeAndRangeChecks) {
  auto node = make_node("n");
  node->declare_parameter({"max_speed", PayloadType::kInt64, Value{std::int64_t{10}}, ParameterRange{0.0, 100.0, {}}});
  EXPECT_EQ(node->get_parameter("max_speed"), Value{std::int64_t{10}});
  try {
    node->set_parameter("max_speed", Value{3.5});
    FAIL() << "type mismatch accepted";
  } catch (const ParameterError& e) {
    EXPECT_EQ(e.reason(), ParameterError::Reason::kTypeMismatch);
  }
  EXPECT_EQ(node->get_parameter("max_speed"), Value{std::int64_t{10}});
  try {
    node->set_parameter("max_speed", Value{std::int64_t{101}});
    FAIL() << "out of range accepted";
  } catch (const ParameterError& e) {
    EXPECT_EQ(e.reason(), ParameterError::Reason::kValidation);
  }
  node->set_parameter("max_speed", Value{std::int64_t{100}});
  EXPECT_EQ(node->get_parameter("max_speed"), Value{std::int64_t{100}});

  auto reason = [&](auto&& fn) {
    try {
      fn();
    } catch (const ParameterError& e) {
      return e.reason();
    }
    return static_cast<ParameterError::Reason>(-1);
  };
  using R = ParameterError::Reason;
  EXPECT_EQ(reason([&] { node->get_parameter("nope"); }), R::kUnknown);
  EXPECT_EQ(reason([&] { node->set_parameter("nope", Value{true}); }), R::kUnknown);
  EXPECT_EQ(reason([&] { node->declare_parameter({"max_speed", PayloadType::kInt64, Value{std::int64_t{1}}, {}}); }),
            R::kAlreadyDeclared);
  EXPECT_EQ(reason([&] { node->declare_parameter({"img", PayloadType::kImage, Value{Image{}}, {}}); }), R::kInvalidDecl);
  EXPECT_EQ(reason([&] { node->declare_parameter({"d", PayloadType::kInt64, Value{std::int64_t{-1}}, ParameterRange{0.0, {}, {}}}); }),
            R::kInvalidDecl);
  EXPECT_EQ(reason([&] { node->declare_parameter({"b", PayloadType::kBool, Value{true}, ParameterRange{}}); }),
            R::kInvalidDecl);
}

TEST_F(NodeTest, StoredParametersAlwaysSatisfyTheirDeclaration) {
  auto node = make_node("n");
  const std::vector<ParameterDecl> decls = {
      {"i", PayloadType::kInt64, Value{std::int64_t{0}}, ParameterRange{-50.0, 50.0, {}}},
      {"f", PayloadType::kFloat64, Value{0.0}, ParameterRange{0.0, 1.0, {}}},
      {"s", PayloadType::kStringUtf8, Value{std::string("x")}, ParameterRange{{}, {}, 4}},
      {"b", PayloadType::kBool, Value{false}, std::nullopt}};
  for (const auto& d : decls) node->declare_parameter(d);
  std::mt19937_64 rng(21);
  auto random_value = [&]() -> Value {
    switch (rng() % 4) {
      case 0: return static_cast<std::int64_t>(rng() % 200) - 100;
      case 1: return static_cast<double>(rng() % 300) / 100.0 - 1.0;
      case 2: return std::string(rng() % 8, 'z');
      default: return (rng() & 1) != 0;
    }
  };
  for (int i = 0; i < 5000; ++i) {
    const auto& d = decls[rng() % decls.size()];
    try {
      node->set_parameter(d.name, random_value());
    } catch (const ParameterError&) {
    }
    for (const auto& check : decls) {
      ASSERT_NO_THROW(check_parameter(check, node->get_parameter(check.name)));
    }
  }
}

TEST(ParameterCodecTest, SetRequestRoundTrips) {
  const Bytes b = encode_parameter_set("gain", Value{2.5});
  ASSERT_EQ(b.size(), 2u + 4u + 1u + 8u);
  EXPECT_EQ(b[0], 0);
  EXPECT_EQ(b[1], 4);
  EXPECT_EQ(b[6], static_cast<std::uint8_t>(PayloadType::kFloat64));
  const auto [name, value] = decode_parameter_set(b);
  EXPECT_EQ(name, "gain");
  EXPECT_EQ(value, Value{2.5});
  EXPECT_THROW(decode_parameter_set(ByteView(b.data(), 3)), CodecError);
  EXPECT_EQ(parameter_service("arm", "get"), "__param/arm/get");
}

TEST_F(NodeTest, ParametersAreReachableThroughServices) {
  auto host = make_node("host");
  auto remote = make_node("remote");
  host->declare_parameter({"max_speed", PayloadType::kInt64, Value{std::int64_t{10}}, ParameterRange{0.0, 100.0, {}}});
  host->declare_parameter({"label", PayloadType::kStringUtf8, Value{std::string("arm")}, {}});
  Spinner spin(*host);

  auto get = get_remote_parameter(*remote, "host", "max_speed");
  ASSERT_EQ(get.wait(Millis(2000)), TokenState::kReady);
  EXPECT_EQ(get.result(), Value{std::int64_t{10}});

  auto wrong = set_remote_parameter(*remote, "host", "max_speed", Value{3.5});
  ASSERT_EQ(wrong.wait(Millis(2000)), TokenState::kFailed);
  EXPECT_NE(wrong.error().find("INT64"), std::string::npos);

  auto high = set_remote_parameter(*remote, "host", "max_speed", Value{std::int64_t{101}});
  ASSERT_EQ(high.wait(Millis(2000)), TokenState::kFailed);

  auto ok = set_remote_parameter(*remote, "host", "max_speed", Value{std::int64_t{42}});
  ASSERT_EQ(ok.wait(Millis(2000)), TokenState::kReady);
  EXPECT_EQ(ok.result(), Value{true});
  EXPECT_TRUE(eventually([&] { return host->get_parameter("max_speed") == Value{std::int64_t{42}}; }));

  auto unknown = get_remote_parameter(*remote, "host", "nope");
  ASSERT_EQ(unknown.wait(Millis(2000)), TokenState::kFailed);

  auto list = list_remote_parameters(*remote, "host");
  ASSERT_EQ(list.wait(Millis(2000)), TokenState::kReady);
  const auto names = nlohmann::json::parse(std::get<std::string>(list.result())).get<std::vector<std::string>>();
  EXPECT_EQ(names, (std::vector<std::string>{"label", "max_speed"}));
}

// Recovery

class RecoveryTest : public BrokerFixture {
 protected:
  BrokerConfig broker_config() const override {
    BrokerConfig cfg;
    cfg.recovery_window = Millis(1500);
    return cfg;
  }
};

TEST_F(RecoveryTest, BrokerRestartRestoresRegistrationsAndDelivery) {
  std::vector<NodeState> states;
  std::mutex m;
  NodeOptions o;
  o.on_state_change = [&](NodeState s) {
    std::lock_guard lock(m);
    states.push_back(s);
  };
  auto pubn = make_node("p", o);
  auto subn = make_node("s");
  std::set<std::int64_t> got;
  auto sub = subn->subscribe({"r", PayloadType::kInt64, QosProfile::reliable()},
                             [&](const Value& v, const MessageInfo&) { got.insert(std::get<std::int64_t>(v)); });
  auto pub = pubn->advertise({"r", PayloadType::kInt64, QosProfile::reliable()});
  const auto before = pubn->graph();

  pub.publish(Value{std::int64_t{1}});
  ASSERT_TRUE(subn->spin_until([&] { return got.count(1) != 0; }, Millis(2000)));

  broker->stop();
  ASSERT_TRUE(eventually([&] { return pubn->state() == NodeState::kReconnecting; }));
  pub.publish(Value{std::int64_t{2}});  // sent into the outage
  std::this_thread::sleep_for(Millis(300));
  start_broker();
  ASSERT_TRUE(eventually([&] {
    return pubn->state() == NodeState::kConnected && subn->state() == NodeState::kConnected;
  }));
  pub.publish(Value{std::int64_t{3}});
  ASSERT_TRUE(subn->spin_until([&] { return got.size() == 3; }, Millis(5000)));
  EXPECT_EQ(got, (std::set<std::int64_t>{1, 2, 3}));

  EXPECT_TRUE(eventually([&] { return pubn->graph() == before; }));
  EXPECT_EQ(pubn->stats().reconnects, 1u);
  std::lock_guard lock(m);
  EXPECT_EQ(states, (std::vector<NodeState>{NodeState::kConnected, NodeState::kReconnecting, NodeState::kConnected}));
}

TEST_F(NodeTest, SteadyHeartbeatsNeverTriggerReconnect) {
  broker->stop();
  BrokerConfig cfg;
  cfg.heartbeat_interval = Millis(50);
  broker = Broker::serve(EndpointAddress::inproc(address_name()), cfg);
  NodeOptions o;
  o.heartbeat_interval = Millis(50);
  auto node = make_node("n", o);
  std::this_thread::sleep_for(Millis(1000));
  EXPECT_EQ(node->stats().reconnects, 0u);
  EXPECT_EQ(node->state(), NodeState::kConnected);
}

TEST_F(NodeTest, SilentBrokerTriggersReconnect) {
  broker->stop();
  BrokerConfig cfg;
  cfg.heartbeat_interval = Millis(10000);  // the broker stays quiet
  broker = Broker::serve(EndpointAddress::inproc(address_name()), cfg);
  NodeOptions o;
  o.heartbeat_interval = Millis(50);
  auto node = make_node("n", o);
  EXPECT_TRUE(eventually([&] { return node->stats().reconnects >= 1; }, Millis(3000)));
}

TEST_F(NodeTest, ExhaustedReconnectBudgetFailsTheNode) {
  NodeOptions o;
  o.reconnect.max_attempts = 2;
  o.reconnect.base = Millis(10);
  o.reconnect.max = Millis(20);
  std::atomic<bool> failed{false};
  o.on_state_change = [&](NodeState s) {
    if (s == NodeState::kFailed) failed = true;
  };
  auto node = make_node("n", o);
  auto pub = node->advertise({"t", PayloadType::kInt64, {}});
  broker->stop();
  ASSERT_TRUE(eventually([&] { return node->state() == NodeState::kFailed; }));
  EXPECT_TRUE(failed);
  EXPECT_THROW(pub.publish(Value{std::int64_t{1}}), NodeError);
}

TEST_F(NodeTest, OutageBeyondRetryBudgetReportsDeliveryFailures) {
  auto node = make_node("n");
  QosProfile qos = QosProfile::reliable();
  qos.max_retries = 2;
  qos.ack_timeout = Millis(30);
  qos.backoff_base = Millis(10);
  qos.backoff_max = Millis(20);
  auto pub = node->advertise({"t", PayloadType::kInt64, qos});
  std::set<std::uint64_t> failed;
  pub.on_delivery_failed([&](std::uint64_t seq) { failed.insert(seq); });
  broker->stop();
  ASSERT_TRUE(eventually([&] { return node->state() == NodeState::kReconnecting; }));
  for (std::int64_t i = 0; i < 3; ++i) pub.publish(Value{i});
  ASSERT_TRUE(node->spin_until([&] { return failed.size() == 3; }, Millis(3000)));
  EXPECT_EQ(failed, (std::set<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(pub.delivery_failures(), 3u);
  EXPECT_EQ(pub.in_flight(), 0u);
}

TEST_F(NodeTest, ReliableDeliveryUnderLossIsExactlyOnceInOrder) {
  std::shared_ptr<FaultyConnection> faulty;
  NodeOptions po;
  po.connection_decorator = [&](std::shared_ptr<Connection> c) {
    faulty = wrap_with_faults(std::move(c), {});
    return faulty;
  };
  auto p = make_node("p", po);
  auto s = make_node("s");
  QosProfile qos = QosProfile::reliable();
  qos.history_depth = 4096;
  qos.ack_timeout = Millis(20);
  qos.backoff_base = Millis(10);
  qos.backoff_max = Millis(100);
  qos.max_retries = 10;
  std::vector<std::int64_t> got;
  auto sub = s->subscribe({"lossy", PayloadType::kInt64, qos},
                          [&](const Value& v, const MessageInfo&) { got.push_back(std::get<std::int64_t>(v)); });
  auto pub = p->advertise({"lossy", PayloadType::kInt64, qos});
  faulty->set_profile({0.2, 0.05, Millis(0), Millis(0), 3});
  const int n = 1000;
  for (std::int64_t i = 0; i < n; ++i) pub.publish(Value{i});
  ASSERT_TRUE(s->spin_until([&] { return got.size() >= static_cast<std::size_t>(n); }, Millis(20000)));
  s->spin_for(Millis(200));
  ASSERT_EQ(got.size(), static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) ASSERT_EQ(got[i], i);
  EXPECT_GT(faulty->counters().dropped, 0u);
  EXPECT_GT(pub.retransmissions(), 0u);
  EXPECT_EQ(pub.delivery_failures(), 0u);
}

TEST_F(NodeTest, HandlesOutliveTheirNode) {
  auto node = make_node("n");
  auto pub = node->advertise({"t", PayloadType::kInt64, {}});
  auto sub = node->subscribe({"t", PayloadType::kInt64, {}}, [](const Value&, const MessageInfo&) {});
  auto timer = node->create_timer(Millis(10), [] {});
  node.reset();
  EXPECT_THROW(pub.publish(Value{std::int64_t{1}}), NodeError);
  sub.unsubscribe();
  timer.cancel();
}

}  // namespace
}  // namespace mros

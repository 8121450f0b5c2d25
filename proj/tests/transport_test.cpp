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

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdlib>
#include <map>
#include <random>
#include <sstream>

#include "mros/broker.hpp"
#include "mros/frame_queue.hpp"
#include "mros/transport.hpp"
#include "test_util.hpp"

namespace mros {
namespace {

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, '/')) parts.push_back(part);
  return parts;
}

// Segment-wise reference matcher.
bool oracle_matches(const std::string& pattern, const std::string& topic) {
  auto p = split(pattern);
  auto t = split(topic);
  if (!p.empty() && p.back() == "*") {
    p.pop_back();
    if (t.size() <= p.size()) return false;
    return std::equal(p.begin(), p.end(), t.begin());
  }
  return p == t;
}

TEST(TopicTest, GrammarBoundaries) {
  EXPECT_TRUE(is_valid_topic_name("chatter"));
  EXPECT_TRUE(is_valid_topic_name("robot1/cam_0/image"));
  EXPECT_FALSE(is_valid_topic_name(""));
  EXPECT_FALSE(is_valid_topic_name("/chatter"));
  EXPECT_FALSE(is_valid_topic_name("chatter/"));
  EXPECT_FALSE(is_valid_topic_name("a//b"));
  EXPECT_FALSE(is_valid_topic_name("a-b"));
  EXPECT_FALSE(is_valid_topic_name("a/*"));
  EXPECT_TRUE(is_valid_topic_pattern("a/*"));
  EXPECT_FALSE(is_valid_topic_pattern("*"));
  EXPECT_FALSE(is_valid_topic_pattern("a/*/b"));
}

TEST(TopicTest, MatcherAgreesWithSegmentOracle) {
  std::mt19937_64 rng(17);
  const std::vector<std::string> segs{"a", "b", "ab", "c1", "_"};
  auto random_name = [&](int max_depth) {
    std::string s = segs[rng() % segs.size()];
    const int depth = static_cast<int>(rng() % max_depth);
    for (int i = 0; i < depth; ++i) s += "/" + segs[rng() % segs.size()];
    return s;
  };
  int positives = 0;
  for (int i = 0; i < 20000; ++i) {
    std::string pattern = random_name(3);
    if (rng() % 2) pattern += "/*";
    const std::string topic = random_name(4);
    const bool expected = oracle_matches(pattern, topic);
    positives += expected;
    ASSERT_EQ(topic_matches(pattern, topic), expected) << pattern << " vs " << topic;
  }
  EXPECT_GT(positives, 100);
}

TEST(AddressTest, ParsesSchemes) {
  auto a = EndpointAddress::parse("tcp://10.0.0.2:9000");
  EXPECT_EQ(a.scheme, EndpointAddress::Scheme::kTcp);
  EXPECT_EQ(a.host(), "10.0.0.2");
  EXPECT_EQ(a.port(), 9000);
  EXPECT_EQ(EndpointAddress::parse("localhost:7447"), EndpointAddress::tcp("localhost", 7447));
  auto i = EndpointAddress::parse("inproc://bus");
  EXPECT_EQ(i, EndpointAddress::inproc("bus"));
  EXPECT_EQ(i.to_string(), "inproc://bus");
  EXPECT_THROW(EndpointAddress::parse("tcp://host"), std::invalid_argument);
  EXPECT_THROW(EndpointAddress::parse("tcp://host:99999"), std::invalid_argument);
  EXPECT_THROW(EndpointAddress::parse("inproc://"), std::invalid_argument);
}

TEST(AddressTest, EnvironmentOverridesDefault) {
  ::unsetenv(kBrokerEnvVar);
  EXPECT_EQ(EndpointAddress::from_environment(), EndpointAddress::tcp("127.0.0.1", 7447));
  ::setenv(kBrokerEnvVar, "inproc://envbus", 1);
  EXPECT_EQ(EndpointAddress::from_environment(), EndpointAddress::inproc("envbus"));
  ::unsetenv(kBrokerEnvVar);
}

TEST(FrameQueueTest, BoundedDataBlocksThenReportsFull) {
  FrameQueue q(2);
  Frame data;
  data.topic = "t";
  EXPECT_EQ(q.push(data), FrameQueue::PushResult::kOk);
  EXPECT_EQ(q.push(data), FrameQueue::PushResult::kOk);
  EXPECT_EQ(q.push(data, Millis(5)), FrameQueue::PushResult::kFull);
  Frame hb;
  hb.kind = FrameKind::kHeartbeat;
  EXPECT_EQ(q.push(hb, Millis(5)), FrameQueue::PushResult::kOk);
  std::vector<Frame> out;
  EXPECT_TRUE(q.pop_all(out, Millis(1)));
  EXPECT_EQ(out.size(), 3u);
  q.close();
  EXPECT_EQ(q.push(data), FrameQueue::PushResult::kClosed);
  EXPECT_FALSE(q.pop_all(out, Millis(1)));
}

TEST(ConnectTest, RefusedWhenNoBroker) {
  EXPECT_THROW(connect(EndpointAddress::inproc("nobody_here")), TransportError);
  EXPECT_THROW(connect(EndpointAddress::tcp("127.0.0.1", 1)), TransportError);
}

Frame sub_frame(const std::string& pattern, std::uint64_t handle) {
  Frame f;
  f.kind = FrameKind::kSub;
  f.topic = pattern;
  f.sequence = handle;
  f.payload_type = PayloadType::kBytes;
  return f;
}

Frame data(const std::string& topic, std::uint64_t seq, std::size_t size = 8) {
  Frame f;
  f.kind = FrameKind::kData;
  f.payload_type = PayloadType::kBytes;
  f.topic = topic;
  f.sequence = seq;
  f.payload.assign(size, static_cast<std::uint8_t>(seq));
  return f;
}

std::vector<Frame> drain_data(Connection& c, std::size_t want, Millis timeout = Millis(3000)) {
  std::vector<Frame> got;
  const auto deadline = SteadyClock::now() + timeout;
  while (got.size() < want && SteadyClock::now() < deadline) {
    std::vector<Frame> batch;
    if (!c.recv_frames(batch, Millis(20))) break;
    for (auto& f : batch) {
      if (f.kind == FrameKind::kData) got.push_back(std::move(f));
    }
  }
  return got;
}

class TransportFanOut : public ::testing::TestWithParam<std::string> {};

TEST_P(TransportFanOut, EveryMatchingSubscriberGetsEveryFrameInOrder) {
  auto broker = Broker::serve(EndpointAddress::parse(GetParam()));
  auto addr = broker->address();
  auto pub = connect(addr);
  std::vector<std::shared_ptr<Connection>> subs;
  for (const char* pattern : {"sensors/*", "sensors/imu", "other"}) {
    subs.push_back(connect(addr));
    subs.back()->send_frame(sub_frame(pattern, 1));
  }
  ASSERT_TRUE(testing::eventually([&] { return broker->graph().topics.size() >= 3; }));
  constexpr int kCount = 500;
  for (int i = 1; i <= kCount; ++i) pub->send_frame(data("sensors/imu", i, 1000));
  for (int s = 0; s < 2; ++s) {
    auto got = drain_data(*subs[s], kCount);
    ASSERT_EQ(got.size(), static_cast<std::size_t>(kCount)) << "subscriber " << s;
    for (int i = 0; i < kCount; ++i) {
      ASSERT_EQ(got[i], data("sensors/imu", i + 1, 1000));
    }
  }
  EXPECT_TRUE(drain_data(*subs[2], 1, Millis(100)).empty());
}

INSTANTIATE_TEST_SUITE_P(Schemes, TransportFanOut,
                         ::testing::Values("inproc://fanout", "tcp://127.0.0.1:0"));

class TransportScheme : public ::testing::TestWithParam<std::string> {
 protected:
  std::string address() const {
    const std::string p = GetParam();
    if (p != "inproc") return p;
    return "inproc://" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name());
  }
};

TEST_P(TransportScheme, ConcurrentSendersNeverInterleaveFrames) {
  auto broker = Broker::serve(EndpointAddress::parse(address()));
  auto pub = connect(broker->address());
  auto sub = connect(broker->address());
  sub->send_frame(sub_frame("a/*", 1));
  ASSERT_TRUE(testing::eventually([&] { return !broker->graph().topics.empty(); }));
  constexpr int kPerThread = 2000;
  {
    std::vector<std::jthread> senders;
    for (const char* topic : {"a/x", "a/y"}) {
      senders.emplace_back([&pub, topic] {
        for (int i = 1; i <= kPerThread; ++i) ASSERT_TRUE(pub->send_frame(data(topic, i, 300 + i % 64)));
      });
    }
  }
  auto got = drain_data(*sub, 2 * kPerThread, Millis(10000));
  ASSERT_EQ(got.size(), 2u * kPerThread);
  std::map<std::string, std::uint64_t> last;
  for (const auto& f : got) {
    ASSERT_EQ(f, data(f.topic, f.sequence, 300 + f.sequence % 64));
    ASSERT_EQ(f.sequence, last[f.topic] + 1);
    last[f.topic] = f.sequence;
  }
}

TEST_P(TransportScheme, ClosingAConnectionRemovesItsBrokerState) {
  auto broker = Broker::serve(EndpointAddress::parse(address()));
  auto c = connect(broker->address());
  c->send_frame(sub_frame("gone", 1));
  Frame adv;
  adv.kind = FrameKind::kAdvertise;
  adv.payload_type = PayloadType::kInt64;
  adv.topic = "also_gone";
  adv.sequence = 2;
  adv.payload = {static_cast<std::uint8_t>(AdvertiseRole::kTopic)};
  c->send_frame(adv);
  ASSERT_TRUE(testing::eventually([&] { return broker->graph().topics.size() == 2; }));
  c->close();
  EXPECT_TRUE(testing::eventually([&] { return broker->graph().topics.empty(); }));
  EXPECT_FALSE(c->send_frame(data("gone", 1)));
}

INSTANTIATE_TEST_SUITE_P(Schemes, TransportScheme, ::testing::Values("inproc", "tcp://127.0.0.1:0"),
                         [](const auto& info) { return info.param == "inproc" ? "inproc" : "tcp"; });

TEST(TcpTest, GarbageClosesSessionWithoutCrashingBroker) {
  auto broker = Broker::serve(EndpointAddress::tcp("127.0.0.1", 0));
  auto good = connect(broker->address());
  good->send_frame(sub_frame("t", 1));
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(broker->address().port());
  sa.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ASSERT_EQ(::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa), 0);
  const char junk[] = "GET / HTTP/1.1\r\n\r\n";
  ASSERT_GT(::send(fd, junk, sizeof junk, 0), 0);
  // The broker hangs up on the bad peer.
  char buf[256];
  ssize_t n;
  while ((n = ::recv(fd, buf, sizeof buf, 0)) > 0) {
  }
  EXPECT_EQ(n, 0);
  ::close(fd);
  auto pub = connect(broker->address());
  pub->send_frame(data("t", 1));
  EXPECT_EQ(drain_data(*good, 1).size(), 1u);
}

TEST(TcpTest, BrokerStopClosesClients) {
  auto broker = Broker::serve(EndpointAddress::tcp("127.0.0.1", 0));
  auto c = connect(broker->address());
  broker->stop();
  std::vector<Frame> out;
  EXPECT_TRUE(testing::eventually([&] { return !c->recv_frames(out, Millis(10)); }));
  EXPECT_FALSE(c->is_open());
}

}  // namespace
}  // namespace mros

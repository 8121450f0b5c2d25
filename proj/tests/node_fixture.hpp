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

#pragma once

#include <gtest/gtest.h>

#include <memory>
#include <string>
#include <thread>

#include "mros/broker.hpp"
#include "mros/node.hpp"
#include "test_util.hpp"

namespace mros::testing {

/// Spins a node's executor on a background thread for the lifetime of the object.
class Spinner {
 public:
  explicit Spinner(Node& node) : thread_([&node](std::stop_token st) { node.spin(st); }) {}

 private:
  std::jthread thread_;
};

/// A fresh in-process broker per test, with the recovery window disabled.
class BrokerFixture : public ::testing::Test {
 protected:
  void SetUp() override { start_broker(); }
  void TearDown() override {
    if (broker) broker->stop();
  }

  void start_broker() {
    BrokerConfig cfg = broker_config();
    broker = Broker::serve(EndpointAddress::inproc(address_name()), cfg);
  }
  virtual BrokerConfig broker_config() const {
    BrokerConfig cfg;
    cfg.recovery_window = Millis(0);
    return cfg;
  }
  static std::string address_name() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    return std::string(info->test_suite_name()) + "." + info->name();
  }

  NodeOptions options() const {
    NodeOptions o;
    o.broker = EndpointAddress::inproc(address_name());
    return o;
  }
  std::unique_ptr<Node> make_node(const std::string& name) {
    return std::make_unique<Node>(name, options());
  }
  std::unique_ptr<Node> make_node(const std::string& name, NodeOptions o) {
    o.broker = EndpointAddress::inproc(address_name());
    return std::make_unique<Node>(name, std::move(o));
  }

  std::unique_ptr<Broker> broker;
};

}  // namespace mros::testing

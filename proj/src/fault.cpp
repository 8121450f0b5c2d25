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

#include "mros/fault.hpp"

#include <stdexcept>

namespace mros {

void FaultProfile::validate() const {
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(drop_probability)) throw std::invalid_argument("drop_probability not in [0,1]");
  if (!in_unit(duplicate_probability)) {
    throw std::invalid_argument("duplicate_probability not in [0,1]");
  }
  if (delay_min.count() < 0 || delay_max.count() < 0) {
    throw std::invalid_argument("delays must be nonnegative");
  }
  if (delay_min > delay_max) throw std::invalid_argument("delay_min exceeds delay_max");
}

FaultyConnection::FaultyConnection(std::shared_ptr<Connection> inner, FaultProfile profile)
    : inner_(std::move(inner)), profile_(profile), engine_(profile.seed) {
  profile_.validate();
}

FaultyConnection::~FaultyConnection() {
  if (delayer_) delayer_->stop();
}

void FaultyConnection::set_profile(const FaultProfile& profile) {
  profile.validate();
  std::lock_guard lock(mutex_);
  profile_ = profile;
  engine_.seed(profile.seed);
}

bool FaultyConnection::send_frame(const Frame& frame) {
  std::lock_guard lock(mutex_);
  ++counters_.offered;
  if (!inner_->is_open()) return false;
  if (unit_interval(engine_) < profile_.drop_probability) {
    ++counters_.dropped;
    return true;  // lost on the wire, not a local failure
  }
  int copies = 1;
  if (unit_interval(engine_) < profile_.duplicate_probability) {
    copies = 2;
    ++counters_.duplicated;
  }
  bool ok = true;
  for (int i = 0; i < copies; ++i) {
    Nanos delay = profile_.delay_min;
    if (profile_.delay_max > profile_.delay_min) {
      const double span = static_cast<double>(Nanos(profile_.delay_max - profile_.delay_min).count());
      delay += Nanos(static_cast<Nanos::rep>(unit_interval(engine_) * span));
    }
    ++counters_.forwarded;
    if (delay.count() == 0) {
      ok = inner_->send_frame(frame) && ok;
    } else {
      if (!delayer_) delayer_ = std::make_unique<TimerQueue>();
      std::weak_ptr<Connection> target = inner_;
      delayer_->schedule_after(delay, [target, frame] {
        if (auto c = target.lock()) c->send_frame(frame);
      });
    }
  }
  return ok;
}

void FaultyConnection::close() { inner_->close(); }

FaultyConnection::Counters FaultyConnection::counters() const {
  std::lock_guard lock(mutex_);
  return counters_;
}

std::shared_ptr<FaultyConnection> wrap_with_faults(std::shared_ptr<Connection> connection,
                                                   const FaultProfile& profile) {
  return std::make_shared<FaultyConnection>(std::move(connection), profile);
}

}  // namespace mros

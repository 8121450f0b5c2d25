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

#include "mros/executor.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <stdexcept>

namespace mros {

void SchedulerConfig::validate() const {
  if (sched_period <= Nanos::zero()) throw std::invalid_argument("sched_period must be positive");
  if (base_weight < 1) throw std::invalid_argument("base_weight must be at least 1");
}

Nanos compute_time_slice(std::uint32_t weight, std::uint64_t total_weight,
                         const SchedulerConfig& config) {
  if (total_weight == 0) total_weight = weight;
  const unsigned __int128 num =
      static_cast<unsigned __int128>(config.sched_period.count()) * weight;
  // Round half up.
  const auto slice = static_cast<Nanos::rep>((2 * num + total_weight) / (2 * total_weight));
  return std::max(Nanos(slice), Nanos(kMinGranularity));
}

Nanos account(Nanos vruntime, std::uint32_t weight, Nanos real_runtime,
              const SchedulerConfig& config) {
  if (real_runtime <= Nanos::zero() || weight == 0) return vruntime;
  const __int128 delta =
      static_cast<__int128>(real_runtime.count()) * config.base_weight / weight;
  return vruntime + Nanos(static_cast<Nanos::rep>(delta));
}

// --- CfsRunQueue ----------------------------------------------------------------

CfsRunQueue::CfsRunQueue(SchedulerConfig config) : config_(config) { config_.validate(); }

void CfsRunQueue::add(EntityId id, std::uint32_t weight) {
  if (weight < 1) throw std::invalid_argument("entity weight must be at least 1");
  if (!entities_.emplace(id, State{weight}).second) {
    throw std::invalid_argument("duplicate entity id");
  }
}

void CfsRunQueue::remove(EntityId id) {
  auto it = entities_.find(id);
  if (it == entities_.end()) return;
  if (it->second.ready) {
    ready_.erase({it->second.vruntime, id});
    ready_weight_ -= it->second.weight;
  }
  if (it->second.running) running_.erase({it->second.vruntime, id});
  entities_.erase(it);
}

void CfsRunQueue::enqueue(EntityId id) {
  State& s = entities_.at(id);
  if (s.ready || s.running) return;
  const Nanos basis = ready_.empty() ? floor_ : ready_.begin()->first;
  s.vruntime = std::max(s.vruntime, basis);
  s.ready = true;
  ready_.emplace(s.vruntime, id);
  ready_weight_ += s.weight;
}

std::optional<CfsRunQueue::Pick> CfsRunQueue::pick_next() {
  if (ready_.empty()) return std::nullopt;
  const auto [vruntime, id] = *ready_.begin();
  State& s = entities_.at(id);
  const Pick pick{id, compute_time_slice(s.weight, ready_weight_, config_)};
  if (trace_) {
    PickTrace t{id, vruntime, std::nullopt, pick.slice};
    if (ready_.size() > 1) t.others_min = std::next(ready_.begin())->first;
    trace_(t);
  }
  ready_.erase(ready_.begin());
  ready_weight_ -= s.weight;
  s.ready = false;
  s.running = true;
  running_.emplace(vruntime, id);
  advance_floor();
  return pick;
}

void CfsRunQueue::charge(EntityId id, Nanos real_runtime, bool still_ready) {
  auto it = entities_.find(id);
  if (it == entities_.end()) return;
  State& s = it->second;
  if (!s.running) return;
  running_.erase({s.vruntime, id});
  s.vruntime = account(s.vruntime, s.weight, real_runtime, config_);
  s.running = false;
  if (still_ready) {
    // Requeue at its own vruntime; it already sits at or above the floor.
    s.ready = true;
    ready_.emplace(s.vruntime, id);
    ready_weight_ += s.weight;
  }
  advance_floor();
}

void CfsRunQueue::advance_floor() {
  std::optional<Nanos> low;
  if (!ready_.empty()) low = ready_.begin()->first;
  if (!running_.empty()) low = low ? std::min(*low, running_.begin()->first) : running_.begin()->first;
  if (low) floor_ = std::max(floor_, *low);
}

bool CfsRunQueue::is_ready(EntityId id) const { return entities_.at(id).ready; }
bool CfsRunQueue::is_running(EntityId id) const { return entities_.at(id).running; }
Nanos CfsRunQueue::vruntime(EntityId id) const { return entities_.at(id).vruntime; }
std::uint32_t CfsRunQueue::weight(EntityId id) const { return entities_.at(id).weight; }

const EntityStats* RunStats::find(EntityId id) const {
  for (const auto& e : entities) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

namespace {

// Returns false when the callback threw.
bool run_isolated(const Executor::Work& work, const std::string& name) {
  try {
    work();
    return true;
  } catch (const std::exception& e) {
    spdlog::error("callback of '{}' threw: {}", name, e.what());
  } catch (...) {
    spdlog::error("callback of '{}' threw a non-standard exception", name);
  }
  return false;
}

}  // namespace

// --- CfsExecutor ----------------------------------------------------------------

CfsExecutor::CfsExecutor(SchedulerConfig config) : runqueue_(config) {}

EntityId CfsExecutor::add_entity(std::string name, std::uint32_t weight, std::size_t queue_depth) {
  std::lock_guard lock(mutex_);
  const EntityId id = next_id_++;
  runqueue_.add(id, weight);
  Entity e{std::move(name), weight, queue_depth, {}, {}};
  e.stats.id = id;
  e.stats.name = e.name;
  e.stats.weight = weight;
  entities_.emplace(id, std::move(e));
  return id;
}

void CfsExecutor::remove_entity(EntityId id) {
  std::deque<Work> discarded;  // destroyed outside the lock
  std::lock_guard lock(mutex_);
  auto it = entities_.find(id);
  if (it == entities_.end()) return;
  discarded.swap(it->second.queue);
  entities_.erase(it);
  runqueue_.remove(id);
}

bool CfsExecutor::post(EntityId id, Work work) {
  {
    std::lock_guard lock(mutex_);
    auto it = entities_.find(id);
    if (it == entities_.end()) return false;
    Entity& e = it->second;
    if (e.depth != 0 && e.queue.size() >= e.depth) {
      e.queue.pop_front();
      ++e.stats.dropped;
    }
    e.queue.push_back(std::move(work));
    runqueue_.enqueue(id);
  }
  cv_.notify_one();
  return true;
}

void CfsExecutor::set_trace(std::function<void(const PickTrace&)> trace) {
  std::lock_guard lock(mutex_);
  runqueue_.set_trace(std::move(trace));
}

bool CfsExecutor::run_one_pick(std::unique_lock<std::mutex>& lock, Nanos wait,
                               const std::stop_token* stop) {
  auto pick = runqueue_.pick_next();
  if (!pick) {
    if (wait <= Nanos::zero()) return false;
    auto ready = [&] { return runqueue_.ready_count() > 0 || woken_; };
    if (stop != nullptr) {
      cv_.wait_for(lock, *stop, wait, ready);
    } else {
      cv_.wait_for(lock, wait, ready);
    }
    woken_ = false;
    pick = runqueue_.pick_next();
    if (!pick) return false;
  }
  const EntityId id = pick->id;
  ++picks_;
  ++entities_.at(id).stats.picks;
  const TimePoint start = SteadyClock::now();
  Nanos elapsed{0};
  for (;;) {
    auto it = entities_.find(id);
    if (it == entities_.end() || it->second.queue.empty()) break;
    Work work = std::move(it->second.queue.front());
    it->second.queue.pop_front();
    const std::string name = it->second.name;
    lock.unlock();
    const bool ok = run_isolated(work, name);
    work = nullptr;
    lock.lock();
    elapsed = SteadyClock::now() - start;
    it = entities_.find(id);
    if (it == entities_.end()) break;
    ++it->second.stats.executed;
    if (!ok) ++it->second.stats.exceptions;
    if (elapsed >= pick->slice) break;
  }
  auto it = entities_.find(id);
  if (it != entities_.end()) {
    runqueue_.charge(id, elapsed, !it->second.queue.empty());
    it->second.stats.runtime += elapsed;
    it->second.stats.vruntime = runqueue_.vruntime(id);
  }
  return true;
}

void CfsExecutor::spin(std::stop_token stop) {
  std::unique_lock lock(mutex_);
  const TimePoint start = SteadyClock::now();
  while (!stop.stop_requested()) run_one_pick(lock, Millis(100), &stop);
  wall_ += SteadyClock::now() - start;
}

bool CfsExecutor::spin_until(const std::function<bool()>& done, Nanos timeout) {
  const TimePoint start = SteadyClock::now();
  const TimePoint deadline = start + timeout;
  bool result = false;
  for (;;) {
    if (done()) {
      result = true;
      break;
    }
    const TimePoint now = SteadyClock::now();
    if (now >= deadline) break;
    std::unique_lock lock(mutex_);
    run_one_pick(lock, std::min<Nanos>(deadline - now, Millis(5)), nullptr);
  }
  std::lock_guard lock(mutex_);
  wall_ += SteadyClock::now() - start;
  return result;
}

bool CfsExecutor::spin_once(Nanos timeout) {
  std::unique_lock lock(mutex_);
  return run_one_pick(lock, timeout, nullptr);
}

void CfsExecutor::wake() {
  {
    std::lock_guard lock(mutex_);
    woken_ = true;
  }
  cv_.notify_all();
}

RunStats CfsExecutor::stats() const {
  std::lock_guard lock(mutex_);
  RunStats out;
  out.picks = picks_;
  out.wall = wall_;
  for (const auto& [id, e] : entities_) out.entities.push_back(e.stats);
  return out;
}

std::size_t CfsExecutor::pending(EntityId id) const {
  std::lock_guard lock(mutex_);
  auto it = entities_.find(id);
  return it == entities_.end() ? 0 : it->second.queue.size();
}

// --- FifoExecutor ---------------------------------------------------------------

EntityId FifoExecutor::add_entity(std::string name, std::uint32_t weight, std::size_t queue_depth) {
  if (weight < 1) throw std::invalid_argument("entity weight must be at least 1");
  std::lock_guard lock(mutex_);
  const EntityId id = next_id_++;
  Entity e{queue_depth, 0, {}};
  e.stats.id = id;
  e.stats.name = std::move(name);
  e.stats.weight = weight;
  entities_.emplace(id, std::move(e));
  return id;
}

void FifoExecutor::remove_entity(EntityId id) {
  std::vector<Work> discarded;
  std::lock_guard lock(mutex_);
  if (entities_.erase(id) == 0) return;
  for (auto it = queue_.begin(); it != queue_.end();) {
    if (it->id == id) {
      discarded.push_back(std::move(it->work));
      it = queue_.erase(it);
    } else {
      ++it;
    }
  }
}

bool FifoExecutor::post(EntityId id, Work work) {
  {
    std::lock_guard lock(mutex_);
    auto it = entities_.find(id);
    if (it == entities_.end()) return false;
    Entity& e = it->second;
    if (e.depth != 0 && e.queued >= e.depth) {
      auto oldest = std::find_if(queue_.begin(), queue_.end(),
                                 [&](const Item& item) { return item.id == id; });
      queue_.erase(oldest);
      --e.queued;
      ++e.stats.dropped;
    }
    queue_.push_back(Item{id, next_serial_++, std::move(work)});
    ++e.queued;
  }
  cv_.notify_one();
  return true;
}

bool FifoExecutor::run_one(std::unique_lock<std::mutex>& lock, Nanos wait,
                           const std::stop_token* stop) {
  if (queue_.empty()) {
    if (wait <= Nanos::zero()) return false;
    auto ready = [&] { return !queue_.empty() || woken_; };
    if (stop != nullptr) {
      cv_.wait_for(lock, *stop, wait, ready);
    } else {
      cv_.wait_for(lock, wait, ready);
    }
    woken_ = false;
    if (queue_.empty()) return false;
  }
  Item item = std::move(queue_.front());
  queue_.pop_front();
  Entity& e = entities_.at(item.id);
  --e.queued;
  ++e.stats.picks;
  ++picks_;
  const std::string name = e.stats.name;
  lock.unlock();
  const TimePoint start = SteadyClock::now();
  const bool ok = run_isolated(item.work, name);
  const Nanos elapsed = SteadyClock::now() - start;
  item.work = nullptr;
  lock.lock();
  auto it = entities_.find(item.id);
  if (it != entities_.end()) {
    ++it->second.stats.executed;
    if (!ok) ++it->second.stats.exceptions;
    it->second.stats.runtime += elapsed;
  }
  return true;
}

void FifoExecutor::spin(std::stop_token stop) {
  std::unique_lock lock(mutex_);
  const TimePoint start = SteadyClock::now();
  while (!stop.stop_requested()) run_one(lock, Millis(100), &stop);
  wall_ += SteadyClock::now() - start;
}

bool FifoExecutor::spin_until(const std::function<bool()>& done, Nanos timeout) {
  const TimePoint start = SteadyClock::now();
  const TimePoint deadline = start + timeout;
  bool result = false;
  for (;;) {
    if (done()) {
      result = true;
      break;
    }
    const TimePoint now = SteadyClock::now();
    if (now >= deadline) break;
    std::unique_lock lock(mutex_);
    run_one(lock, std::min<Nanos>(deadline - now, Millis(5)), nullptr);
  }
  std::lock_guard lock(mutex_);
  wall_ += SteadyClock::now() - start;
  return result;
}

bool FifoExecutor::spin_once(Nanos timeout) {
  std::unique_lock lock(mutex_);
  return run_one(lock, timeout, nullptr);
}

void FifoExecutor::wake() {
  {
    std::lock_guard lock(mutex_);
    woken_ = true;
  }
  cv_.notify_all();
}

RunStats FifoExecutor::stats() const {
  std::lock_guard lock(mutex_);
  RunStats out;
  out.picks = picks_;
  out.wall = wall_;
  for (const auto& [id, e] : entities_) out.entities.push_back(e.stats);
  return out;
}

std::size_t FifoExecutor::pending(EntityId id) const {
  std::lock_guard lock(mutex_);
  auto it = entities_.find(id);
  return it == entities_.end() ? 0 : it->second.queued;
}

std::shared_ptr<Executor> make_executor(ExecutorKind kind, SchedulerConfig config) {
  if (kind == ExecutorKind::kFifo) return std::make_shared<FifoExecutor>();
  return std::make_shared<CfsExecutor>(config);
}

}  // namespace mros

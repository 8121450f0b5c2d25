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

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stop_token>
#include <string>
#include <vector>

#include "mros/clock.hpp"

namespace mros {

using EntityId = std::uint64_t;

struct SchedulerConfig {
  Nanos sched_period = Millis(20);
  std::uint32_t base_weight = 1024;

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

inline constexpr Nanos kMinGranularity = std::chrono::microseconds(100);

/// sched_period * weight / total_weight, rounded to the nearest nanosecond and
/// floored at kMinGranularity.
Nanos compute_time_slice(std::uint32_t weight, std::uint64_t total_weight,
                         const SchedulerConfig& config);

/// vruntime + base_weight / weight * real_runtime, truncated toward zero.
Nanos account(Nanos vruntime, std::uint32_t weight, Nanos real_runtime,
              const SchedulerConfig& config);

/// One scheduling decision, as reported to a trace hook.
struct PickTrace {
  EntityId id = 0;
  Nanos vruntime{0};
  std::optional<Nanos> others_min;  // lowest vruntime among the other ready entities
  Nanos slice{0};
};

/// Ready set ordered by (vruntime, id). Not thread-safe; the executors lock around it.
class CfsRunQueue {
 public:
  explicit CfsRunQueue(SchedulerConfig config = {});

  void add(EntityId id, std::uint32_t weight);
  void remove(EntityId id);

  /// Marks `id` ready. Its vruntime becomes max(own, placement basis), where the
  /// basis is the lowest ready vruntime, or the queue floor when nothing is ready.
  void enqueue(EntityId id);

  struct Pick {
    EntityId id;
    Nanos slice;
  };
  /// Takes the minimum entity out of the ready set. nullopt when idle.
  std::optional<Pick> pick_next();

  /// Charges `real_runtime` to the entity returned by pick_next and requeues it if `still_ready`.
  void charge(EntityId id, Nanos real_runtime, bool still_ready);

  bool contains(EntityId id) const { return entities_.count(id) != 0; }
  bool is_ready(EntityId id) const;
  bool is_running(EntityId id) const;
  Nanos vruntime(EntityId id) const;
  std::uint32_t weight(EntityId id) const;
  std::uint64_t ready_weight() const { return ready_weight_; }
  std::size_t ready_count() const { return ready_.size(); }
  /// Monotonic lower bound used to place entities when nothing is ready.
  Nanos floor() const { return floor_; }

  void set_trace(std::function<void(const PickTrace&)> trace) { trace_ = std::move(trace); }
  const SchedulerConfig& config() const { return config_; }

 private:
  struct State {
    std::uint32_t weight;
    Nanos vruntime{0};
    bool ready = false;
    bool running = false;
  };
  void advance_floor();

  SchedulerConfig config_;
  std::map<EntityId, State> entities_;
  std::set<std::pair<Nanos, EntityId>> ready_;
  std::set<std::pair<Nanos, EntityId>> running_;
  std::uint64_t ready_weight_ = 0;
  Nanos floor_{0};
  std::function<void(const PickTrace&)> trace_;
};

struct EntityStats {
  EntityId id = 0;
  std::string name;
  std::uint32_t weight = 0;
  Nanos runtime{0};  // cumulative measured execution time
  Nanos vruntime{0};
  std::uint64_t picks = 0;
  std::uint64_t executed = 0;
  std::uint64_t exceptions = 0;
  std::uint64_t dropped = 0;  // evicted by a bounded queue
};

struct RunStats {
  std::vector<EntityStats> entities;
  std::uint64_t picks = 0;
  Nanos wall{0};

  const EntityStats* find(EntityId id) const;
};

/// Runs queued callbacks of registered entities. Work may be posted from any
/// thread; callbacks run only on the thread inside spin.
class Executor {
 public:
  using Work = std::function<void()>;

  virtual ~Executor() = default;

  /// `queue_depth` 0 means unbounded; otherwise the oldest pending item is evicted on overflow.
  virtual EntityId add_entity(std::string name, std::uint32_t weight = 1024,
                              std::size_t queue_depth = 0) = 0;
  /// Pending work is discarded. Safe to call from inside a callback.
  virtual void remove_entity(EntityId id) = 0;

  /// False if `id` is unknown. Evictions are counted in the entity stats.
  virtual bool post(EntityId id, Work work) = 0;

  /// Runs until `stop` is requested.
  virtual void spin(std::stop_token stop) = 0;
  /// Runs until `done()` holds (checked between slices) or `timeout` passes.
  virtual bool spin_until(const std::function<bool()>& done, Nanos timeout) = 0;
  void spin_for(Nanos duration) {
    spin_until([] { return false; }, duration);
  }
  /// Runs pending work for at most one pick, waiting up to `timeout` for some.
  virtual bool spin_once(Nanos timeout) = 0;

  /// Wakes a spin blocked waiting for work.
  virtual void wake() = 0;

  virtual RunStats stats() const = 0;
  virtual std::size_t pending(EntityId id) const = 0;
};

/// Picks the ready entity with the least virtual runtime and runs its work
/// for one time slice.
class CfsExecutor final : public Executor {
 public:
  explicit CfsExecutor(SchedulerConfig config = {});

  EntityId add_entity(std::string name, std::uint32_t weight = 1024,
                      std::size_t queue_depth = 0) override;
  void remove_entity(EntityId id) override;
  bool post(EntityId id, Work work) override;
  void spin(std::stop_token stop) override;
  bool spin_until(const std::function<bool()>& done, Nanos timeout) override;
  bool spin_once(Nanos timeout) override;
  void wake() override;
  RunStats stats() const override;
  std::size_t pending(EntityId id) const override;

  /// Called under the executor lock at every pick.
  void set_trace(std::function<void(const PickTrace&)> trace);

 private:
  struct Entity {
    std::string name;
    std::uint32_t weight;
    std::size_t depth;
    std::deque<Work> queue;
    EntityStats stats;
  };

  bool run_one_pick(std::unique_lock<std::mutex>& lock, Nanos wait, const std::stop_token* stop);

  mutable std::mutex mutex_;
  std::condition_variable_any cv_;
  CfsRunQueue runqueue_;
  std::map<EntityId, Entity> entities_;
  EntityId next_id_ = 1;
  std::uint64_t picks_ = 0;
  Nanos wall_{0};
  bool woken_ = false;
};

/// Runs callbacks strictly in posting order, ignoring weights.
class FifoExecutor final : public Executor {
 public:
  EntityId add_entity(std::string name, std::uint32_t weight = 1024,
                      std::size_t queue_depth = 0) override;
  void remove_entity(EntityId id) override;
  bool post(EntityId id, Work work) override;
  void spin(std::stop_token stop) override;
  bool spin_until(const std::function<bool()>& done, Nanos timeout) override;
  bool spin_once(Nanos timeout) override;
  void wake() override;
  RunStats stats() const override;
  std::size_t pending(EntityId id) const override;

 private:
  struct Item {
    EntityId id;
    std::uint64_t serial;
    Work work;
  };
  struct Entity {
    std::size_t depth;
    std::size_t queued = 0;
    EntityStats stats;
  };

  bool run_one(std::unique_lock<std::mutex>& lock, Nanos wait, const std::stop_token* stop);

  mutable std::mutex mutex_;
  std::condition_variable_any cv_;
  std::deque<Item> queue_;
  std::map<EntityId, Entity> entities_;
  EntityId next_id_ = 1;
  std::uint64_t next_serial_ = 0;
  std::uint64_t picks_ = 0;
  Nanos wall_{0};
  bool woken_ = false;
};

enum class ExecutorKind { kCfs, kFifo };

std::shared_ptr<Executor> make_executor(ExecutorKind kind, SchedulerConfig config = {});

}  // namespace mros

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wms/domain.hpp"

namespace wms::dashboard {

// All aggregates ignore trashed tasks.

struct Summary {
  std::uint64_t total_tasks = 0;
  std::uint64_t todo_count = 0;
  std::uint64_t in_progress_count = 0;  // "active processes"
  std::uint64_t done_count = 0;

  /// done / total, 0 for an empty project.
  [[nodiscard]] double completion_ratio() const noexcept {
    return total_tasks == 0 ? 0.0
                            : static_cast<double>(done_count) / static_cast<double>(total_tasks);
  }

  friend bool operator==(const Summary&, const Summary&) = default;
};

inline constexpr std::string_view kUnassigned = "unassigned";

struct WorkloadRow {
  std::string assignee_id;  // kUnassigned for tasks without assignees
  std::string assignee_name;
  std::uint64_t todo_count = 0;
  std::uint64_t in_progress_count = 0;
  std::uint64_t done_count = 0;
  std::uint64_t total = 0;

  friend bool operator==(const WorkloadRow&, const WorkloadRow&) = default;
};

struct PriorityBreakdown {
  std::uint64_t high_count = 0;
  std::uint64_t medium_count = 0;
  std::uint64_t low_count = 0;

  friend bool operator==(const PriorityBreakdown&, const PriorityBreakdown&) = default;
};

struct ActivityItem {
  std::string task_id;
  std::string task_title;
  std::size_t index = 0;  // position in the task's activity list
  ActivityEntry entry;

  friend bool operator==(const ActivityItem&, const ActivityItem&) = default;
};

inline constexpr std::size_t kMaxRecentActivity = 100;

[[nodiscard]] Summary summary(std::span<const Task> tasks);

/// One row per active account (even when idle), per inactive or unknown
/// assignee that still holds live tasks, and an `unassigned` row when any
/// live task has no assignee. A task with k assignees counts once in each of
/// the k rows. Ordered by total desc, name asc, id asc.
[[nodiscard]] std::vector<WorkloadRow> workload_by_assignee(std::span<const Task> tasks,
                                                            std::span<const UserAccount> accounts);

[[nodiscard]] PriorityBreakdown priority_breakdown(std::span<const Task> tasks);

/// The n most recent entries ordered by (at desc, task id asc, index desc).
/// Throws InvalidValue unless n is in [1, 100].
[[nodiscard]] std::vector<ActivityItem> recent_activity(std::span<const Task> tasks, std::size_t n);

void to_json(Json& j, const Summary& v);
void to_json(Json& j, const WorkloadRow& v);
void to_json(Json& j, const PriorityBreakdown& v);
void to_json(Json& j, const ActivityItem& v);

}  // namespace wms::dashboard

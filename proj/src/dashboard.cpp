#include "wms/dashboard.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "wms/error.hpp"

namespace wms::dashboard {

namespace {

void count_status(TaskStatus s, std::uint64_t& todo, std::uint64_t& in_progress,
                  std::uint64_t& done) {
  switch (s) {
    case TaskStatus::Todo: ++todo; break;
    case TaskStatus::InProgress: ++in_progress; break;
    case TaskStatus::Done: ++done; break;
  }
}

}  // namespace

Summary summary(std::span<const Task> tasks) {
  Summary s;
  for (const auto& t : tasks) {
    if (t.trashed) continue;
    ++s.total_tasks;
    count_status(t.status, s.todo_count, s.in_progress_count, s.done_count);
  }
  return s;
}

std::vector<WorkloadRow> workload_by_assignee(std::span<const Task> tasks,
                                              std::span<const UserAccount> accounts) {
  std::map<std::string, WorkloadRow> rows;
  std::map<std::string, const UserAccount*> by_id;
  for (const auto& a : accounts) {
    by_id[a.id] = &a;
    if (a.active) rows[a.id] = WorkloadRow{a.id, a.name, 0, 0, 0, 0};
  }

  WorkloadRow unassigned{std::string(kUnassigned), std::string(kUnassigned), 0, 0, 0, 0};
  for (const auto& t : tasks) {
    if (t.trashed) continue;
    if (t.assignee_ids.empty()) {
      count_status(t.status, unassigned.todo_count, unassigned.in_progress_count,
                   unassigned.done_count);
      ++unassigned.total;
      continue;
    }
    for (const auto& id : t.assignee_ids) {
      auto [it, inserted] = rows.try_emplace(id);
      if (inserted) {
        auto account = by_id.find(id);
        it->second.assignee_id = id;
        it->second.assignee_name = account != by_id.end() ? account->second->name : std::string();
      }
      auto& row = it->second;
      count_status(t.status, row.todo_count, row.in_progress_count, row.done_count);
      ++row.total;
    }
  }

  std::vector<WorkloadRow> out;
  out.reserve(rows.size() + 1);
  for (auto& [id, row] : rows) out.push_back(std::move(row));
  if (unassigned.total > 0) out.push_back(std::move(unassigned));
  std::sort(out.begin(), out.end(), [](const WorkloadRow& a, const WorkloadRow& b) {
    return std::tie(b.total, a.assignee_name, a.assignee_id) <
           std::tie(a.total, b.assignee_name, b.assignee_id);
  });
  return out;
}

PriorityBreakdown priority_breakdown(std::span<const Task> tasks) {
  PriorityBreakdown b;
  for (const auto& t : tasks) {
    if (t.trashed) continue;
    switch (t.priority) {
      case Priority::High: ++b.high_count; break;
      case Priority::Medium: ++b.medium_count; break;
      case Priority::Low: ++b.low_count; break;
    }
  }
  return b;
}

std::vector<ActivityItem> recent_activity(std::span<const Task> tasks, std::size_t n) {
  if (n < 1 || n > kMaxRecentActivity) {
    fail(Errc::InvalidValue, "n must be between 1 and " + std::to_string(kMaxRecentActivity));
  }
  std::vector<ActivityItem> items;
  for (const auto& t : tasks) {
    if (t.trashed) continue;
    for (std::size_t i = 0; i < t.activity.size(); ++i) {
      items.push_back(ActivityItem{t.id, t.title, i, t.activity[i]});
    }
  }
  const auto before = [](const ActivityItem& a, const ActivityItem& b) {
    if (a.entry.at != b.entry.at) return a.entry.at > b.entry.at;
    if (a.task_id != b.task_id) return a.task_id < b.task_id;
    return a.index > b.index;
  };
  const auto keep = std::min(n, items.size());
  std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(keep), items.end(),
                    before);
  items.resize(keep);
  return items;
}

void to_json(Json& j, const Summary& v) {
  j = Json{{"total_tasks", v.total_tasks},
           {"todo_count", v.todo_count},
           {"in_progress_count", v.in_progress_count},
           {"done_count", v.done_count},
           {"completion_ratio", v.completion_ratio()}};
}

void to_json(Json& j, const WorkloadRow& v) {
  j = Json{{"assignee_id", v.assignee_id},     {"assignee_name", v.assignee_name},
           {"todo_count", v.todo_count},       {"in_progress_count", v.in_progress_count},
           {"done_count", v.done_count},       {"total", v.total}};
}

void to_json(Json& j, const PriorityBreakdown& v) {
  j = Json{{"high_count", v.high_count}, {"medium_count", v.medium_count},
           {"low_count", v.low_count}};
}

void to_json(Json& j, const ActivityItem& v) {
  j = Json{{"task_id", v.task_id},
           {"task_title", v.task_title},
           {"index", v.index},
           {"at", format_rfc3339(v.entry.at)},
           {"actor_id", v.entry.actor_id},
           {"kind", to_string(v.entry.kind)},
           {"detail", v.entry.detail}};
}

}  // namespace wms::dashboard

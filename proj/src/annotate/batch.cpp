#include "nlf/annotate/batch.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include <fmt/format.h>

#include "nlf/gateway/chat.hpp"

namespace nlf::annotate {

std::string_view to_string(CheckpointState state) {
  switch (state) {
    case CheckpointState::InProgress:
      return "in_progress";
    case CheckpointState::Completed:
      return "completed";
    case CheckpointState::Invalid:
      return "invalid";
    case CheckpointState::Aborted:
      return "aborted";
  }
  return "in_progress";
}

CheckpointState parse_checkpoint_state(std::string_view text) {
  if (text == "in_progress") return CheckpointState::InProgress;
  if (text == "completed") return CheckpointState::Completed;
  if (text == "invalid") return CheckpointState::Invalid;
  if (text == "aborted") return CheckpointState::Aborted;
  throw InvalidArgument(fmt::format("unknown checkpoint state '{}'", text));
}

void to_json(Json& j, const CheckpointEntry& e) {
  j = Json{{"sample_id", e.sample_id}, {"state", std::string(to_string(e.state))}, {"turns_so_far", e.turns_so_far}};
  if (e.record) j["record"] = *e.record;
  if (e.outcome) j["outcome"] = std::string(to_string(*e.outcome));
  if (!e.error.empty()) j["error"] = e.error;
}

void from_json(const Json& j, CheckpointEntry& e) {
  e.sample_id = require_string(j, "sample_id");
  e.state = parse_checkpoint_state(require_string(j, "state"));
  e.turns_so_far = j.value("turns_so_far", std::vector<InteractionTurn>{});
  e.record.reset();
  if (j.contains("record")) e.record = j.at("record").get<FeedbackRecord>();
  e.outcome.reset();
  if (j.contains("outcome")) e.outcome = parse_outcome(j.at("outcome").get<std::string>());
  e.error = j.value("error", "");
}

CheckpointStore::CheckpointStore(fs::path path) : path_(std::move(path)) {
  if (fs::exists(path_)) {
    for (const auto& row : read_jsonl_tolerant(path_)) {
      try {
        auto entry = row.get<CheckpointEntry>();
        latest_[entry.sample_id] = std::move(entry);
      } catch (const std::exception&) {
        // a line that parsed as JSON but not as an entry is as good as torn
      }
    }
  }
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  appender_ = std::make_unique<JsonlAppender>(path_);
}

void CheckpointStore::append(const CheckpointEntry& entry) {
  appender_->append(Json(entry));
  std::lock_guard lock(mu_);
  latest_[entry.sample_id] = entry;
}

Json RunReport::to_json() const {
  Json counts = Json::object();
  for (const auto& [outcome, n] : outcomes) counts[std::string(annotate::to_string(outcome))] = n;
  return Json{{"completed", completed},       {"invalid", invalid},         {"aborted", aborted},
              {"skipped", skipped},           {"outcomes", counts},         {"invalid_ids", invalid_ids},
              {"aborted_ids", aborted_ids}};
}

std::vector<FeedbackRecord> completed_records(const CheckpointStore& store) {
  std::vector<FeedbackRecord> out;
  for (const auto& [id, entry] : store.entries()) {
    if (entry.state == CheckpointState::Completed && entry.record) out.push_back(*entry.record);
  }
  return out;  // map order is id order
}

RunReport run_batch(std::vector<Sample> samples, const WorkerFactory& factory, const BatchOptions& options) {
  options.policy.validate();
  if (options.workers < 1) throw InvalidArgument("workers must be >= 1");
  std::sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (samples[i].id == samples[i - 1].id) throw InvalidArgument(fmt::format("duplicate sample id '{}'", samples[i].id));
  }

  CheckpointStore store(options.checkpoint_path);
  RunReport report;
  std::vector<std::pair<const Sample*, std::vector<InteractionTurn>>> pending;
  for (const auto& s : samples) {
    auto it = store.entries().find(s.id);
    if (it == store.entries().end()) {
      pending.emplace_back(&s, std::vector<InteractionTurn>{});
    } else if (it->second.state == CheckpointState::Completed || it->second.state == CheckpointState::Invalid) {
      ++report.skipped;
    } else {
      pending.emplace_back(&s, it->second.turns_so_far);
    }
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex fatal_mu;
  std::exception_ptr fatal;

  auto worker = [&] {
    try {
      auto generator = factory.generator();
      auto annotator = factory.annotator();
      while (!stop.load()) {
        const auto i = next.fetch_add(1);
        if (i >= pending.size()) break;
        const Sample& sample = *pending[i].first;
        auto observer = [&](std::span<const InteractionTurn> turns) {
          store.append({sample.id, CheckpointState::InProgress, {turns.begin(), turns.end()}, {}, {}, {}});
        };
        auto result = run_trajectory(sample, options.policy, *generator, *annotator, pending[i].second, observer);
        CheckpointEntry entry{sample.id, CheckpointState::Completed, result.generated, result.record, result.outcome,
                              result.error};
        if (result.status == TrajectoryStatus::Invalid) entry.state = CheckpointState::Invalid;
        if (result.status == TrajectoryStatus::Aborted) entry.state = CheckpointState::Aborted;
        store.append(entry);
      }
    } catch (...) {
      stop.store(true);
      std::lock_guard lock(fatal_mu);
      if (!fatal) fatal = std::current_exception();
    }
  };

  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(options.workers), std::max<std::size_t>(pending.size(), 1));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  for (const auto& s : samples) {
    auto it = store.entries().find(s.id);
    if (it == store.entries().end()) continue;
    const auto& e = it->second;
    switch (e.state) {
      case CheckpointState::Completed:
        ++report.completed;
        if (e.outcome) ++report.outcomes[*e.outcome];
        break;
      case CheckpointState::Invalid:
        ++report.invalid;
        report.invalid_ids.push_back(s.id);
        break;
      case CheckpointState::Aborted:
      case CheckpointState::InProgress:
        ++report.aborted;
        report.aborted_ids.push_back(s.id);
        break;
    }
  }
  if (!options.output_path.empty()) {
    std::vector<Json> rows;
    for (const auto& r : completed_records(store)) rows.emplace_back(r);
    write_jsonl(options.output_path, rows);
  }
  return report;
}

}  // namespace nlf::annotate

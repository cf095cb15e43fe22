#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "nlf/annotate/engine.hpp"
#include "nlf/core/io.hpp"

namespace nlf::annotate {

enum class CheckpointState { InProgress, Completed, Invalid, Aborted };

std::string_view to_string(CheckpointState state);
CheckpointState parse_checkpoint_state(std::string_view text);

struct CheckpointEntry {
  std::string sample_id;
  CheckpointState state = CheckpointState::InProgress;
  std::vector<InteractionTurn> turns_so_far;
  std::optional<FeedbackRecord> record;
  std::optional<TrajectoryOutcome> outcome;
  std::string error;
};

void to_json(Json& j, const CheckpointEntry& e);
void from_json(const Json& j, CheckpointEntry& e);

/// Append-only JSONL checkpoint. The last line for an id wins; a torn final line from a
/// crash is skipped on load.
class CheckpointStore {
 public:
  explicit CheckpointStore(fs::path path);

  void append(const CheckpointEntry& entry);
  [[nodiscard]] const std::map<std::string, CheckpointEntry>& entries() const noexcept { return latest_; }
  [[nodiscard]] const fs::path& path() const noexcept { return path_; }

 private:
  fs::path path_;
  std::map<std::string, CheckpointEntry> latest_;
  std::unique_ptr<JsonlAppender> appender_;
  std::mutex mu_;
};

struct RunReport {
  std::size_t completed = 0;
  std::size_t invalid = 0;
  std::size_t aborted = 0;
  std::size_t skipped = 0;  // already finished by an earlier run
  std::map<TrajectoryOutcome, std::size_t> outcomes;
  std::vector<std::string> invalid_ids;
  std::vector<std::string> aborted_ids;

  [[nodiscard]] Json to_json() const;
};

/// Builds the per-worker generator and annotator; each worker thread gets its own pair.
struct WorkerFactory {
  std::function<std::unique_ptr<ResponseGenerator>()> generator;
  std::function<std::unique_ptr<TurnAnnotator>()> annotator;
};

struct BatchOptions {
  TurnPolicy policy;
  int workers = 1;
  fs::path checkpoint_path;
  fs::path output_path;  // completed records as JSONL, sorted by id
};

/// Annotates every sample, resuming from the checkpoint when it exists. Completed and
/// invalid samples are never re-run; aborted and in-progress ones resume from their last
/// checkpointed turn. The output file is rewritten from the checkpoint, so it is identical
/// regardless of worker count or restarts. AuthError stops the whole run.
RunReport run_batch(std::vector<Sample> samples, const WorkerFactory& factory, const BatchOptions& options);

/// Completed records in the checkpoint, sorted by id.
std::vector<FeedbackRecord> completed_records(const CheckpointStore& store);

}  // namespace nlf::annotate

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "nlf/dataset/splits.hpp"
#include "nlf/judge/parse.hpp"

namespace nlf::dataset {

VisualDependenceFilter make_visual_dependence_filter(std::shared_ptr<gateway::ChatClient> client,
                                                     const prompts::PromptRegistry& registry,
                                                     std::string judge_model, int parallelism) {
  if (parallelism < 1) throw InvalidArgument("parallelism must be >= 1");
  return [client, &registry, judge_model, parallelism](std::span<const SplitSample> batch) {
    std::vector<char> keep(batch.size(), 0);
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr failure;
    auto work = [&] {
      try {
        for (auto i = next.fetch_add(1); i < batch.size(); i = next.fetch_add(1)) {
          const auto prompt = registry.render(prompts::ids::kVisualDependenceFilter,
                                              {{"query", batch[i].question}, {"reference", batch[i].ground_truth}});
          const judge::ReplySource source = [&](std::string_view reminder) {
            const auto text = reminder.empty() ? prompt : prompt + "\n\n" + std::string(reminder);
            return client->complete(gateway::ChatRequest::single_turn(judge_model, text, 0.0, 16)).content;
          };
          const auto outcome = judge::parse_with_retry<judge::YesNoVerdict>(judge::parse_yes_no, source, 3,
                                                                            judge::kYesNoReminder);
          // "Yes" means the question is answerable blind.
          keep[i] = outcome.verdict && !outcome.verdict->value ? 1 : 0;
        }
      } catch (...) {
        next.store(batch.size());
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    };
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(parallelism), batch.size());
    {
      std::vector<std::jthread> threads;
      for (std::size_t t = 1; t < n; ++t) threads.emplace_back(work);
      work();
    }
    if (failure) std::rethrow_exception(failure);
    return std::vector<bool>(keep.begin(), keep.end());
  };
}

}  // namespace nlf::dataset

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nlf/core/types.hpp"
#include "nlf/core/util.hpp"
#include "nlf/serialize/sequence.hpp"

namespace nlf::condlm {

/// Two disjoint symbol distributions for the toy model: good responses draw from
/// g0..g{K-1}, bad ones from b0..b{K-1}, captions from c0..c{K-1}. All three are Zipf
/// shaped (p_i proportional to 1/(i+1)).
struct SyntheticSpec {
  std::size_t symbols = 6;
  std::size_t response_length = 5;
  std::size_t records = 120;
  std::size_t captions = 60;
  std::uint64_t seed = 1;

  void validate() const;
};

class SymbolDistribution {
 public:
  SymbolDistribution(std::string prefix, std::size_t size);

  [[nodiscard]] const std::vector<std::string>& symbols() const noexcept { return symbols_; }
  [[nodiscard]] double probability(std::string_view token) const;
  [[nodiscard]] std::vector<std::string> sample(Rng& rng, std::size_t n) const;
  /// Mean per-token log probability; tokens outside the support count as log(1e-6).
  [[nodiscard]] double mean_log_prob(std::span<const std::string> tokens) const;

 private:
  std::string prefix_;
  std::vector<std::string> symbols_;
  std::vector<double> probs_;
};

inline constexpr std::string_view kSyntheticBadCritique = "Wrong symbols here.";
inline constexpr std::string_view kSyntheticMixedCritique = "Some symbols still wrong.";

struct SyntheticTask {
  SymbolDistribution good;
  SymbolDistribution bad;
  SymbolDistribution caption;
  std::vector<FeedbackRecord> records;
  std::vector<serialize::CaptionPair> captions;

  /// Critique-conditioned prefix of a rating-1 turn: <bad> [Wrong symbols here.]
  [[nodiscard]] static std::vector<std::string> bad_prefix();
  /// Shared context for conditioning probes.
  [[nodiscard]] std::vector<std::string> probe_context() const;
};

/// Records alternate helpfulness and honesty aspects. Every record opens with a bad turn (rating 1), half continue with a mixed turn
/// (rating 2), and all end with a good ground truth.
SyntheticTask make_synthetic_task(const SyntheticSpec& spec);

}  // namespace nlf::condlm

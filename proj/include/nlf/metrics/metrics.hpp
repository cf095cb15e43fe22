#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "nlf/core/error.hpp"
#include "nlf/core/json.hpp"

namespace nlf::metrics {

class EmptyCorpus : public Error {
 public:
  using Error::Error;
};
class EmptySet : public Error {
 public:
  using Error::Error;
};
class LengthMismatch : public Error {
 public:
  using Error::Error;
};
class ZeroVariance : public Error {
 public:
  using Error::Error;
};

/// Canonical object names and the phrases that refer to them. Phrases are matched as
/// lowercase word sequences; every canonical name is also one of its own phrases.
class ObjectLexicon {
 public:
  ObjectLexicon() = default;
  /// {canonical: [synonym, ...]}
  static ObjectLexicon from_json(const Json& j);
  static ObjectLexicon load(const std::string& path);
  /// The 80 COCO object categories with common synonyms.
  static ObjectLexicon coco();

  void add(const std::string& canonical, const std::vector<std::string>& synonyms);

  [[nodiscard]] const std::set<std::string>& canonical_objects() const noexcept { return canonical_; }
  /// Canonical name for a phrase (after normalization), or the lowercased input if unknown.
  [[nodiscard]] std::string canonicalize(std::string_view phrase) const;

  struct Phrase {
    std::vector<std::string> words;
    std::string canonical;
  };
  /// Longest phrases first, ties by text.
  [[nodiscard]] const std::vector<Phrase>& phrases() const noexcept { return phrases_; }

 private:
  std::set<std::string> canonical_;
  std::vector<Phrase> phrases_;
};

/// Lowercase alphanumeric words of a caption.
std::vector<std::string> caption_words(std::string_view text);

/// Forms a word may take in singular: the word itself, suffix-rule stems (-ies, -ves, -es,
/// -s) and a short irregular table.
std::vector<std::string> singular_forms(const std::string& word);

/// Longest-match, case-insensitive scan; matched words are consumed so "hot dog stand"
/// yields {hot dog} and never {dog}.
std::set<std::string> extract_objects(std::string_view caption, const ObjectLexicon& lexicon);

struct ChairItem {
  std::string caption;
  std::set<std::string> annotated;
};

struct CaptionObjects {
  std::set<std::string> mentioned;
  std::set<std::string> hallucinated;
};

enum class ChairVariant {
  Original,     // hallucinated / mentioned, pooled over the corpus
  Paraphrased,  // per caption hallucinated / annotated, averaged over captions
};

struct ChairResult {
  double chair_i = 0.0;
  double chair_s = 0.0;
  std::vector<CaptionObjects> per_caption;
};

void to_json(Json& j, const ChairResult& r);

/// Throws EmptyCorpus for no items.
ChairResult chair(std::span<const ChairItem> items, const ObjectLexicon& lexicon,
                  ChairVariant variant = ChairVariant::Original);

/// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of average ranks. Throws LengthMismatch, ZeroVariance, or
/// InvalidArgument for fewer than 2 pairs.
double spearman(std::span<const double> x, std::span<const double> y);

struct HelpfulnessSummary {
  double raw_mean = 0.0;  // judge scale, 0-10
  double scaled = 0.0;    // raw_mean * 10
};

HelpfulnessSummary aggregate_helpfulness(std::span<const double> scores);
/// 100 x fraction true per key over all verdicts that carry the key.
std::map<std::string, double> aggregate_binary_percent(std::span<const std::map<std::string, bool>> verdicts);
double aggregate_vqa_accuracy(const std::vector<bool>& yes);

struct AgreementRow {
  std::string id;
  double judge = 0.0;
  double human = 0.0;
};

struct AgreementReport {
  std::size_t n = 0;
  double spearman = 0.0;
  double exact_agreement = 0.0;  // fraction of rows with judge == human
  double mean_abs_difference = 0.0;
};

void to_json(Json& j, const AgreementReport& r);

/// Judge-vs-human comparison over a paired table.
AgreementReport analyze_agreement(std::span<const AgreementRow> rows);

}  // namespace nlf::metrics

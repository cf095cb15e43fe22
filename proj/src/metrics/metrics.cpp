#include "nlf/metrics/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "nlf/core/io.hpp"

namespace nlf::metrics {

namespace {

const std::map<std::string, std::string>& irregular_plurals() {
  static const std::map<std::string, std::string> table = {
      {"men", "man"},     {"women", "woman"}, {"people", "person"}, {"children", "child"},
      {"mice", "mouse"},  {"geese", "goose"}, {"teeth", "tooth"},   {"feet", "foot"},
  };
  return table;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

bool word_matches(const std::string& caption_word, const std::string& lexicon_word) {
  if (caption_word == lexicon_word) return true;
  const auto forms = singular_forms(caption_word);
  return std::find(forms.begin(), forms.end(), lexicon_word) != forms.end();
}

}  // namespace

std::vector<std::string> caption_words(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      word += static_cast<char>(std::tolower(u));
    } else if (!word.empty()) {
      out.push_back(std::move(word));
      word.clear();
    }
  }
  if (!word.empty()) out.push_back(std::move(word));
  return out;
}

std::vector<std::string> singular_forms(const std::string& w) {
  std::vector<std::string> out{w};
  if (auto it = irregular_plurals().find(w); it != irregular_plurals().end()) out.push_back(it->second);
  auto ends = [&](std::string_view s) { return w.size() > s.size() + 1 && w.ends_with(s); };
  const auto stem = [&](std::size_t n) { return w.substr(0, w.size() - n); };
  if (ends("ies")) out.push_back(stem(3) + "y");
  if (ends("ves")) {
    out.push_back(stem(3) + "f");
    out.push_back(stem(3) + "fe");
  }
  if (ends("es")) out.push_back(stem(2));
  if (ends("s") && !ends("ss")) out.push_back(stem(1));
  return out;
}

ObjectLexicon ObjectLexicon::from_json(const Json& j) {
  if (!j.is_object()) throw InvalidArgument("lexicon must be a JSON object {canonical: [synonyms]}");
  ObjectLexicon lex;
  for (const auto& [name, syns] : j.items()) lex.add(name, syns.get<std::vector<std::string>>());
  return lex;
}

ObjectLexicon ObjectLexicon::load(const std::string& path) { return from_json(Json::parse(read_text(path))); }

ObjectLexicon ObjectLexicon::coco() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> table = {
      {"person", {"man", "woman", "boy", "girl", "child", "kid", "people", "player", "lady", "guy", "baby"}},
      {"bicycle", {"bike", "cycle"}},
      {"car", {"automobile", "taxi", "sedan"}},
      {"motorcycle", {"motorbike", "scooter"}},
      {"airplane", {"plane", "jet", "aircraft", "airliner"}},
      {"bus", {}},
      {"train", {"locomotive"}},
      {"truck", {"pickup", "lorry"}},
      {"boat", {"ship", "sailboat", "kayak", "canoe"}},
      {"traffic light", {"stoplight", "traffic signal"}},
      {"fire hydrant", {"hydrant"}},
      {"stop sign", {}},
      {"parking meter", {"meter"}},
      {"bench", {}},
      {"bird", {"pigeon", "seagull", "duck", "parrot"}},
      {"cat", {"kitten", "kitty"}},
      {"dog", {"puppy", "pup"}},
      {"horse", {"pony"}},
      {"sheep", {"lamb", "ram"}},
      {"cow", {"cattle", "calf", "bull"}},
      {"elephant", {}},
      {"bear", {}},
      {"zebra", {}},
      {"giraffe", {}},
      {"backpack", {"rucksack"}},
      {"umbrella", {"parasol"}},
      {"handbag", {"purse"}},
      {"tie", {"necktie"}},
      {"suitcase", {"luggage"}},
      {"frisbee", {}},
      {"skis", {"ski"}},
      {"snowboard", {}},
      {"sports ball", {"ball", "football", "soccer ball", "baseball", "basketball"}},
      {"kite", {}},
      {"baseball bat", {"bat"}},
      {"baseball glove", {"glove", "mitt"}},
      {"skateboard", {}},
      {"surfboard", {"surf board"}},
      {"tennis racket", {"racket", "racquet"}},
      {"bottle", {}},
      {"wine glass", {}},
      {"cup", {"mug"}},
      {"fork", {}},
      {"knife", {}},
      {"spoon", {}},
      {"bowl", {}},
      {"banana", {}},
      {"apple", {}},
      {"sandwich", {"burger", "sub"}},
      {"orange", {}},
      {"broccoli", {}},
      {"carrot", {}},
      {"hot dog", {"hotdog"}},
      {"pizza", {}},
      {"donut", {"doughnut"}},
      {"cake", {"cupcake"}},
      {"chair", {"stool"}},
      {"couch", {"sofa"}},
      {"potted plant", {"plant", "houseplant"}},
      {"bed", {}},
      {"dining table", {"table", "desk"}},
      {"toilet", {}},
      {"tv", {"television", "monitor"}},
      {"laptop", {"computer", "notebook"}},
      {"mouse", {}},
      {"remote", {"remote control"}},
      {"keyboard", {}},
      {"cell phone", {"phone", "cellphone", "smartphone"}},
      {"microwave", {}},
      {"oven", {"stove"}},
      {"toaster", {}},
      {"sink", {}},
      {"refrigerator", {"fridge"}},
      {"book", {"novel"}},
      {"clock", {}},
      {"vase", {}},
      {"scissors", {}},
      {"teddy bear", {"teddy"}},
      {"hair drier", {"hair dryer", "hairdryer", "blow dryer"}},
      {"toothbrush", {}},
  };
  ObjectLexicon lex;
  for (const auto& [name, syns] : table) lex.add(name, syns);
  return lex;
}

void ObjectLexicon::add(const std::string& canonical, const std::vector<std::string>& synonyms) {
  const auto name = join(caption_words(canonical));
  if (name.empty()) throw InvalidArgument(fmt::format("lexicon entry '{}' has no words", canonical));
  canonical_.insert(name);
  auto push = [&](const std::string& phrase) {
    auto words = caption_words(phrase);
    if (words.empty()) throw InvalidArgument(fmt::format("synonym '{}' of '{}' has no words", phrase, canonical));
    for (const auto& p : phrases_) {
      if (p.words == words) {
        if (p.canonical != name) {
          throw InvalidArgument(fmt::format("phrase '{}' maps to both '{}' and '{}'", phrase, p.canonical, name));
        }
        return;
      }
    }
    phrases_.push_back({std::move(words), name});
  };
  push(name);
  for (const auto& s : synonyms) push(s);
  std::sort(phrases_.begin(), phrases_.end(), [](const Phrase& a, const Phrase& b) {
    if (a.words.size() != b.words.size()) return a.words.size() > b.words.size();
    return a.words < b.words;
  });
}

std::string ObjectLexicon::canonicalize(std::string_view phrase) const {
  const auto words = caption_words(phrase);
  for (const auto& p : phrases_) {
    if (p.words.size() != words.size()) continue;
    bool ok = true;
    for (std::size_t k = 0; k < words.size() && ok; ++k) ok = word_matches(words[k], p.words[k]);
    if (ok) return p.canonical;
  }
  return join(words);
}

std::set<std::string> extract_objects(std::string_view caption, const ObjectLexicon& lexicon) {
  const auto words = caption_words(caption);
  std::set<std::string> out;
  std::size_t i = 0;
  while (i < words.size()) {
    const ObjectLexicon::Phrase* hit = nullptr;
    for (const auto& p : lexicon.phrases()) {
      if (i + p.words.size() > words.size()) continue;
      bool ok = true;
      for (std::size_t k = 0; k < p.words.size() && ok; ++k) ok = word_matches(words[i + k], p.words[k]);
      if (ok) {
        hit = &p;
        break;  // phrases are longest first
      }
    }
    if (hit) {
      out.insert(hit->canonical);
      i += hit->words.size();
    } else {
      ++i;
    }
  }
  return out;
}

void to_json(Json& j, const ChairResult& r) {
  Json per = Json::array();
  for (const auto& c : r.per_caption) per.push_back({{"mentioned", c.mentioned}, {"hallucinated", c.hallucinated}});
  j = Json{{"chair_i", r.chair_i}, {"chair_s", r.chair_s}, {"per_caption", per}};
}

ChairResult chair(std::span<const ChairItem> items, const ObjectLexicon& lexicon, ChairVariant variant) {
  if (items.empty()) throw EmptyCorpus("CHAIR needs at least one caption");
  ChairResult out;
  std::size_t mentioned = 0;
  std::size_t hallucinated = 0;
  std::size_t bad_captions = 0;
  double paraphrased_sum = 0.0;
  for (const auto& item : items) {
    std::set<std::string> truth;
    for (const auto& a : item.annotated) truth.insert(lexicon.canonicalize(a));
    CaptionObjects c;
    c.mentioned = extract_objects(item.caption, lexicon);
    for (const auto& m : c.mentioned) {
      if (!truth.contains(m)) c.hallucinated.insert(m);
    }
    mentioned += c.mentioned.size();
    hallucinated += c.hallucinated.size();
    bad_captions += c.hallucinated.empty() ? 0 : 1;
    paraphrased_sum += static_cast<double>(c.hallucinated.size()) / static_cast<double>(std::max<std::size_t>(truth.size(), 1));
    out.per_caption.push_back(std::move(c));
  }
  if (variant == ChairVariant::Original) {
    out.chair_i = mentioned == 0 ? 0.0 : static_cast<double>(hallucinated) / static_cast<double>(mentioned);
  } else {
    out.chair_i = paraphrased_sum / static_cast<double>(items.size());
  }
  out.chair_s = static_cast<double>(bad_captions) / static_cast<double>(items.size());
  return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw LengthMismatch(fmt::format("spearman: {} vs {} values", x.size(), y.size()));
  if (x.size() < 2) throw InvalidArgument("spearman needs at least 2 pairs");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;  // ranks always average to this
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mean;
    const double dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw ZeroVariance("spearman: one input has no variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

HelpfulnessSummary aggregate_helpfulness(std::span<const double> scores) {
  if (scores.empty()) throw EmptySet("no helpfulness scores");
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  return {mean, mean * 10.0};
}

std::map<std::string, double> aggregate_binary_percent(std::span<const std::map<std::string, bool>> verdicts) {
  if (verdicts.empty()) throw EmptySet("no binary verdicts");
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& v : verdicts) {
    for (const auto& [k, b] : v) {
      auto& [yes, all] = counts[k];
      yes += b ? 1 : 0;
      ++all;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [k, c] : counts) out[k] = 100.0 * static_cast<double>(c.first) / static_cast<double>(c.second);
  return out;
}

double aggregate_vqa_accuracy(const std::vector<bool>& yes) {
  if (yes.empty()) throw EmptySet("no VQA verdicts");
  const auto n = std::count(yes.begin(), yes.end(), true);
  return 100.0 * static_cast<double>(n) / static_cast<double>(yes.size());
}

void to_json(Json& j, const AgreementReport& r) {
  j = Json{{"n", r.n}, {"spearman", r.spearman}, {"exact_agreement", r.exact_agreement},
           {"mean_abs_difference", r.mean_abs_difference}};
}

AgreementReport analyze_agreement(std::span<const AgreementRow> rows) {
  if (rows.empty()) throw EmptySet("no agreement rows");
  std::vector<double> judge;
  std::vector<double> human;
  AgreementReport out;
  out.n = rows.size();
  double exact = 0.0;
  double diff = 0.0;
  for (const auto& r : rows) {
    judge.push_back(r.judge);
    human.push_back(r.human);
    exact += r.judge == r.human ? 1.0 : 0.0;
    diff += std::abs(r.judge - r.human);
  }
  out.spearman = spearman(judge, human);
  out.exact_agreement = exact / static_cast<double>(rows.size());
  out.mean_abs_difference = diff / static_cast<double>(rows.size());
  return out;
}

}  // namespace nlf::metrics

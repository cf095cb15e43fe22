#include "nlf/prompts/registry.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "nlf/core/io.hpp"
#include "nlf/core/util.hpp"

#ifndef NLF_TEMPLATE_DIR
#define NLF_TEMPLATE_DIR "templates"
#endif

namespace nlf::prompts {

namespace {

bool slot_head(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }
bool slot_tail(char c) { return slot_head(c) || (c >= '0' && c <= '9'); }

// Length of the slot name starting after '{' at `pos`, or 0 if this brace opens no slot.
std::size_t slot_name_length(std::string_view body, std::size_t pos) {
  std::size_t i = pos + 1;
  if (i >= body.size() || !slot_head(body[i])) return 0;
  while (i < body.size() && slot_tail(body[i])) ++i;
  if (i >= body.size() || body[i] != '}') return 0;
  return i - pos - 1;
}

}  // namespace

std::string_view annotation_template(Aspect aspect) {
  switch (aspect) {
    case Aspect::Helpfulness:
      return ids::kHelpfulnessAnnotation;
    case Aspect::Honesty:
      return ids::kHonestyAnnotation;
    case Aspect::Harmlessness:
      return ids::kHarmlessnessAnnotation;
  }
  return ids::kHelpfulnessAnnotation;
}

std::vector<std::string> find_slots(std::string_view body) {
  std::vector<std::string> out;
  for (std::size_t pos = body.find('{'); pos != std::string_view::npos; pos = body.find('{', pos + 1)) {
    if (const auto len = slot_name_length(body, pos); len > 0) {
      out.emplace_back(body.substr(pos + 1, len));
    }
  }
  return out;
}

PromptRegistry PromptRegistry::load_directory(const fs::path& dir) {
  PromptRegistry registry;
  registry.merge_directory(dir);
  return registry;
}

fs::path PromptRegistry::builtin_directory() { return fs::path(NLF_TEMPLATE_DIR); }

PromptRegistry PromptRegistry::builtin() { return load_directory(builtin_directory()); }

void PromptRegistry::merge_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(fmt::format("template directory {} not found", dir.string()));
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) add(file.stem().string(), read_text(file));
}

void PromptRegistry::add(std::string template_id, std::string body) {
  if (templates_.contains(template_id)) {
    throw InvalidArgument(fmt::format("template '{}' registered twice", template_id));
  }
  PromptTemplate t;
  for (auto& slot : find_slots(body)) {
    if (!t.required_slots.insert(slot).second) {
      throw InvalidArgument(
          fmt::format("template '{}' uses slot {{{}}} more than once", template_id, slot));
    }
  }
  t.template_id = template_id;
  t.sha256 = sha256_hex(body);
  t.body = std::move(body);
  templates_.emplace(std::move(template_id), std::move(t));
}

const PromptTemplate& PromptRegistry::get(std::string_view template_id) const {
  auto it = templates_.find(template_id);
  if (it == templates_.end()) throw UnknownTemplate(fmt::format("unknown template '{}'", template_id));
  return it->second;
}

bool PromptRegistry::contains(std::string_view template_id) const {
  return templates_.find(template_id) != templates_.end();
}

std::vector<std::string> PromptRegistry::template_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, t] : templates_) out.push_back(id);
  return out;
}

std::string PromptRegistry::render(std::string_view template_id,
                                   const std::map<std::string, std::string>& slots) const {
  const auto& t = get(template_id);
  for (const auto& name : t.required_slots) {
    if (!slots.contains(name)) {
      throw MissingSlot(fmt::format("template '{}' needs slot {{{}}}", template_id, name));
    }
  }
  for (const auto& [name, value] : slots) {
    if (!t.required_slots.contains(name)) {
      throw UnexpectedSlot(fmt::format("template '{}' has no slot {{{}}}", template_id, name));
    }
  }

  std::string out;
  const std::string_view body = t.body;
  std::size_t copied = 0;
  for (std::size_t pos = body.find('{'); pos != std::string_view::npos; pos = body.find('{', pos + 1)) {
    const auto len = slot_name_length(body, pos);
    if (len == 0) continue;
    out.append(body.substr(copied, pos - copied));
    out.append(slots.at(std::string(body.substr(pos + 1, len))));
    copied = pos + len + 2;
    pos = copied - 1;
  }
  out.append(body.substr(copied));
  return out;
}

std::map<std::string, std::string> PromptRegistry::digests() const {
  std::map<std::string, std::string> out;
  for (const auto& [id, t] : templates_) out.emplace(id, t.sha256);
  return out;
}

std::string summarize_critique_prompt(const PromptRegistry& registry, std::string_view reason) {
  if (trim(reason).empty()) throw InvalidArgument("cannot summarize an empty reason");
  return registry.render(ids::kCritiqueSummarize, {{"reason", std::string(reason)}});
}

}  // namespace nlf::prompts

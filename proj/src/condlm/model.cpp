#include "nlf/condlm/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

namespace nlf::condlm {

namespace {

using serialize::ControlKind;
using serialize::TrainingSequence;

void log_softmax_inplace(std::vector<double>& s) {
  const double m = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double v : s) z += std::exp(v - m);
  const double lz = m + std::log(z);
  for (double& v : s) v -= lz;
}

}  // namespace

void to_json(Json& j, const FeatureSpec& s) {
  j = Json{{"window", s.window}, {"verbalizer", s.verbalizer}, {"critique", s.critique}};
}

void from_json(const Json& j, FeatureSpec& s) {
  s.window = j.value("window", 2);
  s.verbalizer = j.value("verbalizer", true);
  s.critique = j.value("critique", true);
  if (s.window < 0) throw InvalidArgument("feature window must be >= 0");
}

CondLM::CondLM(std::vector<std::string> vocabulary, std::vector<std::string> features, FeatureSpec spec)
    : vocab_(std::move(vocabulary)), features_(std::move(features)), spec_(spec) {
  if (vocab_.empty()) throw InvalidArgument("empty vocabulary");
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!vocab_index_.emplace(vocab_[i], i).second) throw InvalidArgument(fmt::format("duplicate token '{}'", vocab_[i]));
  }
  if (!vocab_index_.contains(std::string(kUnknown))) throw InvalidArgument("vocabulary lacks <unk>");
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (!feature_index_.emplace(features_[i], i).second) {
      throw InvalidArgument(fmt::format("duplicate feature '{}'", features_[i]));
    }
  }
  w_.assign(features_.size() * vocab_.size(), 0.0);
}

std::vector<std::string> CondLM::feature_names(std::span<const std::string> prefix) const {
  std::vector<std::string> out{"bias"};
  for (int k = 1; k <= spec_.window; ++k) {
    const auto n = static_cast<std::size_t>(k);
    out.push_back(fmt::format("p{}={}", k, n <= prefix.size() ? prefix[prefix.size() - n] : std::string("<s>")));
  }
  if (spec_.verbalizer || spec_.critique) {
    std::string verb = "none";
    std::string crit = "none";
    bool have_verb = false;
    bool have_crit = false;
    for (auto it = prefix.rbegin(); it != prefix.rend() && !(have_verb && have_crit); ++it) {
      const auto c = serialize::parse_control(*it);
      if (!c) continue;
      if (c->kind == ControlKind::VerbalizerOpen && !have_verb) {
        verb = *it;
        have_verb = true;
      } else if (c->kind == ControlKind::CritiqueOpen && !have_crit) {
        crit = *it;
        have_crit = true;
      }
    }
    if (spec_.verbalizer) out.push_back("verb=" + verb);
    if (spec_.critique) out.push_back("crit=" + crit);
  }
  return out;
}

std::vector<std::size_t> CondLM::active_features(std::span<const std::string> prefix) const {
  std::vector<std::size_t> out;
  for (const auto& name : feature_names(prefix)) {
    if (auto it = feature_index_.find(name); it != feature_index_.end()) out.push_back(it->second);
  }
  return out;
}

std::size_t CondLM::token_index(std::string_view token) const {
  if (auto it = vocab_index_.find(std::string(token)); it != vocab_index_.end()) return it->second;
  return vocab_index_.at(std::string(kUnknown));
}

std::vector<double> CondLM::distribution(std::span<const std::string> prefix) const {
  const auto active = active_features(prefix);
  return distribution(std::span<const std::size_t>(active));
}

std::vector<double> CondLM::distribution(std::span<const std::size_t> active) const {
  const std::size_t v = vocab_.size();
  std::vector<double> s(v, 0.0);
  for (auto f : active) {
    const double* row = w_.data() + f * v;
    for (std::size_t i = 0; i < v; ++i) s[i] += row[i];
  }
  log_softmax_inplace(s);
  for (double& x : s) x = std::exp(x);
  return s;
}

CondLM CondLM::build(std::span<const TrainingSequence> corpus, FeatureSpec spec) {
  std::set<std::string> vocab{std::string(kUnknown)};
  for (const auto& s : corpus) {
    for (const auto& t : s.tokens) {
      if (!serialize::is_control(t)) vocab.insert(t);
    }
  }
  // Feature names depend only on the spec, so a throwaway instance can name them.
  const CondLM namer({std::string(kUnknown)}, {}, spec);
  std::set<std::string> feats;
  for (const auto& s : corpus) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      if (!s.loss_mask[i]) continue;
      for (auto& f : namer.feature_names(std::span<const std::string>(s.tokens.data(), i))) feats.insert(std::move(f));
    }
  }
  return CondLM({vocab.begin(), vocab.end()}, {feats.begin(), feats.end()}, spec);
}

Json CondLM::to_json() const {
  std::vector<std::vector<double>> rows;
  for (std::size_t f = 0; f < features_.size(); ++f) {
    rows.emplace_back(w_.begin() + static_cast<std::ptrdiff_t>(f * vocab_.size()),
                      w_.begin() + static_cast<std::ptrdiff_t>((f + 1) * vocab_.size()));
  }
  return Json{{"vocabulary", vocab_}, {"feature_spec", spec_}, {"features", features_}, {"weights", rows}};
}

CondLM CondLM::from_json(const Json& j) {
  CondLM m(j.at("vocabulary").get<std::vector<std::string>>(), j.at("features").get<std::vector<std::string>>(),
           j.at("feature_spec").get<FeatureSpec>());
  const auto rows = j.at("weights").get<std::vector<std::vector<double>>>();
  if (rows.size() != m.feature_count()) throw InvalidArgument("checkpoint weight rows do not match features");
  for (std::size_t f = 0; f < rows.size(); ++f) {
    if (rows[f].size() != m.vocab_size()) throw InvalidArgument("checkpoint weight row has the wrong width");
    std::copy(rows[f].begin(), rows[f].end(), m.w_.begin() + static_cast<std::ptrdiff_t>(f * m.vocab_size()));
  }
  return m;
}

CompiledBatch compile(const CondLM& model, std::span<const TrainingSequence> batch) {
  CompiledBatch out;
  for (const auto& s : batch) {
    if (s.tokens.size() != s.loss_mask.size()) {
      throw InvalidArgument(fmt::format("sequence '{}' has mismatched mask", s.record_id));
    }
    const bool reg = s.sample_kind == serialize::SampleKind::Regularization;
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      if (!s.loss_mask[i]) continue;
      out.positions.push_back({model.active_features(std::span<const std::string>(s.tokens.data(), i)),
                               model.token_index(s.tokens[i]), reg});
      ++n;
    }
    if (n == 0) throw EmptyMask(fmt::format("sequence '{}' has no masked tokens", s.record_id));
    (reg ? out.regularization_tokens : out.feedback_tokens) += n;
  }
  return out;
}

namespace {

// Shared pass for loss and gradient; grad may be null.
LossValue accumulate(const CondLM& model, const CompiledBatch& batch, double alpha, std::vector<double>* grad) {
  const std::size_t v = model.vocab_size();
  const auto& w = model.weights();
  const double scale_f = batch.feedback_tokens ? 1.0 / static_cast<double>(batch.feedback_tokens) : 0.0;
  const double scale_r = batch.regularization_tokens ? 1.0 / static_cast<double>(batch.regularization_tokens) : 0.0;
  double nll_f = 0.0;
  double nll_r = 0.0;
  std::vector<double> s(v);
  for (const auto& p : batch.positions) {
    std::fill(s.begin(), s.end(), 0.0);
    for (auto f : p.features) {
      const double* row = w.data() + f * v;
      for (std::size_t i = 0; i < v; ++i) s[i] += row[i];
    }
    log_softmax_inplace(s);
    (p.regularization ? nll_r : nll_f) -= s[p.target];
    if (!grad) continue;
    const double scale = p.regularization ? alpha * scale_r : scale_f;
    if (scale == 0.0) continue;
    for (std::size_t i = 0; i < v; ++i) s[i] = std::exp(s[i]) * scale;
    s[p.target] -= scale;
    for (auto f : p.features) {
      double* row = grad->data() + f * v;
      for (std::size_t i = 0; i < v; ++i) row[i] += s[i];
    }
  }
  LossValue out;
  out.feedback = nll_f * scale_f;
  out.regularization = nll_r * scale_r;
  out.total = out.feedback + alpha * out.regularization;
  return out;
}

}  // namespace

LossValue loss(const CondLM& model, const CompiledBatch& batch, double alpha) {
  return accumulate(model, batch, alpha, nullptr);
}

LossValue loss(const CondLM& model, std::span<const TrainingSequence> batch, double alpha) {
  return loss(model, compile(model, batch), alpha);
}

std::vector<double> gradient(const CondLM& model, const CompiledBatch& batch, double alpha, LossValue* value) {
  std::vector<double> g(model.weights().size(), 0.0);
  const auto l = accumulate(model, batch, alpha, &g);
  if (value) *value = l;
  return g;
}

void TrainConfig::validate() const {
  loss.validate();
  if (!std::isfinite(step_size) || step_size < 0.0) throw InvalidArgument("step_size must be finite and >= 0");
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (!std::isfinite(init_scale) || init_scale < 0.0) throw InvalidArgument("init_scale must be finite and >= 0");
}

void to_json(Json& j, const TrainConfig& c) {
  j = Json{{"step_size", c.step_size}, {"epochs", c.epochs}, {"alpha", c.loss.alpha}, {"seed", c.seed},
           {"init_scale", c.init_scale}};
}

void from_json(const Json& j, TrainConfig& c) {
  c.step_size = j.value("step_size", c.step_size);
  c.epochs = j.value("epochs", c.epochs);
  c.loss.alpha = j.value("alpha", c.loss.alpha);
  c.seed = j.value("seed", c.seed);
  c.init_scale = j.value("init_scale", c.init_scale);
}

std::vector<LossPoint> train(CondLM& model, std::span<const TrainingSequence> corpus, const TrainConfig& config) {
  config.validate();
  if (config.init_scale > 0.0) {
    Rng rng(config.seed);
    for (double& x : model.weights()) x = config.init_scale * rng.normal();
  }
  const auto batch = compile(model, corpus);
  std::vector<LossPoint> curve;
  auto check = [&](int epoch, const LossValue& v) {
    if (!std::isfinite(v.total)) throw DivergenceDetected(fmt::format("loss became non-finite at epoch {}", epoch));
    curve.push_back({epoch, v});
  };
  for (int e = 0; e < config.epochs; ++e) {
    LossValue v;
    const auto g = gradient(model, batch, config.loss.alpha, &v);
    check(e, v);
    auto& w = model.weights();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= config.step_size * g[i];
  }
  check(config.epochs, loss(model, batch, config.loss.alpha));
  return curve;
}

std::string loss_curve_csv(std::span<const LossPoint> curve) {
  std::string out = "epoch,O_f,O_r,O\n";
  for (const auto& p : curve) {
    out += fmt::format("{},{:.10g},{:.10g},{:.10g}\n", p.epoch, p.value.feedback, p.value.regularization, p.value.total);
  }
  return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InvalidArgument("distributions differ in size");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(kl, 0.0);
}

std::vector<double> conditioning_kl(const CondLM& model, std::span<const std::string> context,
                                    std::span<const std::string> prefix_a, std::span<const std::string> prefix_b,
                                    std::span<const std::string> continuation) {
  std::vector<std::string> a(context.begin(), context.end());
  std::vector<std::string> b(context.begin(), context.end());
  a.insert(a.end(), prefix_a.begin(), prefix_a.end());
  b.insert(b.end(), prefix_b.begin(), prefix_b.end());
  std::vector<double> out;
  for (std::size_t t = 0;; ++t) {
    out.push_back(kl_divergence(model.distribution(a), model.distribution(b)));
    if (t == continuation.size()) break;
    a.push_back(continuation[t]);
    b.push_back(continuation[t]);
  }
  return out;
}

std::vector<std::string> generate(const CondLM& model, std::vector<std::string> prefix, std::size_t length, Rng* rng) {
  const std::size_t unk = model.token_index(CondLM::kUnknown);
  for (std::size_t n = 0; n < length; ++n) {
    auto p = model.distribution(prefix);
    p[unk] = 0.0;
    std::size_t pick = 0;
    if (rng == nullptr) {
      pick = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    } else {
      double total = 0.0;
      for (double x : p) total += x;
      double u = rng->uniform() * total;
      pick = p.size() - 1;
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        pick = i;
        if ((u -= p[i]) < 0.0) break;
      }
    }
    prefix.push_back(model.vocabulary()[pick]);
  }
  return prefix;
}

}  // namespace nlf::condlm

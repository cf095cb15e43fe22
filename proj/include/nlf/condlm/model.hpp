#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "nlf/core/json.hpp"
#include "nlf/core/types.hpp"
#include "nlf/core/util.hpp"
#include "nlf/serialize/sequence.hpp"

namespace nlf::condlm {

class EmptyMask : public Error {
 public:
  using Error::Error;
};

class DivergenceDetected : public Error {
 public:
  using Error::Error;
};

/// Which context facts feed the softmax: the previous `window` tokens, the most recent
/// rating control token, and the most recent critique token. A bias feature is always on.
struct FeatureSpec {
  int window = 2;
  bool verbalizer = true;
  bool critique = true;

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

void to_json(Json& j, const FeatureSpec& s);
void from_json(const Json& j, FeatureSpec& s);

/// Log-linear next-token model: p(v | context) = softmax_v(sum over active features f of W[f][v]).
class CondLM {
 public:
  static constexpr std::string_view kUnknown = "<unk>";

  CondLM(std::vector<std::string> vocabulary, std::vector<std::string> features, FeatureSpec spec);

  /// Vocabulary = every non-control token in the corpus plus <unk>; features = every feature
  /// active at some masked position. Weights start at zero (uniform predictions).
  static CondLM build(std::span<const serialize::TrainingSequence> corpus, FeatureSpec spec = {});

  [[nodiscard]] std::size_t vocab_size() const noexcept { return vocab_.size(); }
  [[nodiscard]] std::size_t feature_count() const noexcept { return features_.size(); }
  [[nodiscard]] const std::vector<std::string>& vocabulary() const noexcept { return vocab_; }
  [[nodiscard]] const std::vector<std::string>& features() const noexcept { return features_; }
  [[nodiscard]] const FeatureSpec& spec() const noexcept { return spec_; }

  /// Feature names describing the context before the next token.
  [[nodiscard]] std::vector<std::string> feature_names(std::span<const std::string> prefix) const;
  /// Indices of known active features; unseen ones are dropped.
  [[nodiscard]] std::vector<std::size_t> active_features(std::span<const std::string> prefix) const;
  [[nodiscard]] std::size_t token_index(std::string_view token) const;

  [[nodiscard]] std::vector<double> distribution(std::span<const std::string> prefix) const;
  [[nodiscard]] std::vector<double> distribution(std::span<const std::size_t> active) const;

  /// Row-major [feature][vocab].
  [[nodiscard]] std::vector<double>& weights() noexcept { return w_; }
  [[nodiscard]] const std::vector<double>& weights() const noexcept { return w_; }
  [[nodiscard]] double& weight(std::size_t feature, std::size_t token) { return w_[feature * vocab_.size() + token]; }

  [[nodiscard]] Json to_json() const;
  static CondLM from_json(const Json& j);

 private:
  std::vector<std::string> vocab_;
  std::vector<std::string> features_;
  FeatureSpec spec_;
  std::unordered_map<std::string, std::size_t> vocab_index_;
  std::unordered_map<std::string, std::size_t> feature_index_;
  std::vector<double> w_;
};

/// Masked positions of a batch resolved against a model once, so training epochs only do
/// arithmetic.
struct CompiledBatch {
  struct Position {
    std::vector<std::size_t> features;
    std::size_t target;
    bool regularization;
  };
  std::vector<Position> positions;
  std::size_t feedback_tokens = 0;
  std::size_t regularization_tokens = 0;
};

/// Throws EmptyMask if any sequence has no masked token.
CompiledBatch compile(const CondLM& model, std::span<const serialize::TrainingSequence> batch);

struct LossValue {
  double feedback = 0.0;        // O_f
  double regularization = 0.0;  // O_r
  double total = 0.0;           // O = O_f + alpha * O_r
};

/// O_f and O_r are token means of the negative log-likelihood over masked tokens of each
/// sample kind (0 when the batch has none of that kind).
LossValue loss(const CondLM& model, const CompiledBatch& batch, double alpha);
LossValue loss(const CondLM& model, std::span<const serialize::TrainingSequence> batch, double alpha);

/// dO/dW, same layout as CondLM::weights().
std::vector<double> gradient(const CondLM& model, const CompiledBatch& batch, double alpha,
                             LossValue* value = nullptr);

struct TrainConfig {
  double step_size = 1.0;
  int epochs = 200;
  LossSpec loss;
  std::uint64_t seed = 0;
  double init_scale = 0.0;  // >0 draws initial weights from N(0, init_scale^2) with `seed`

  void validate() const;
};

void to_json(Json& j, const TrainConfig& c);
void from_json(const Json& j, TrainConfig& c);

struct LossPoint {
  int epoch = 0;
  LossValue value;
};

/// Full-batch gradient descent. The curve has one point per epoch, starting with the
/// untouched model at epoch 0. Throws DivergenceDetected on a non-finite loss.
std::vector<LossPoint> train(CondLM& model, std::span<const serialize::TrainingSequence> corpus,
                             const TrainConfig& config);

std::string loss_curve_csv(std::span<const LossPoint> curve);

/// KL(p || q) in nats; terms with p = 0 contribute nothing.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Per position t of `continuation` (and once before it), KL between the next-token
/// distributions after context + prefix_a + continuation[:t] and context + prefix_b + continuation[:t].
std::vector<double> conditioning_kl(const CondLM& model, std::span<const std::string> context,
                                    std::span<const std::string> prefix_a, std::span<const std::string> prefix_b,
                                    std::span<const std::string> continuation);

/// Extends `prefix` by `length` tokens: greedy when rng is null, sampled otherwise. <unk> is
/// never emitted.
std::vector<std::string> generate(const CondLM& model, std::vector<std::string> prefix, std::size_t length,
                                  Rng* rng = nullptr);

}  // namespace nlf::condlm

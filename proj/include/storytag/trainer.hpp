#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "storytag/corpus.hpp"
#include "storytag/evaluator.hpp"
#include "storytag/multiview.hpp"

namespace storytag {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainingConfig {
  int epochs = 50;
  double learning_rate = 0.2;
  double momentum = 0.9;
  double l2_lambda = 0.15;
  int batch_size = 32;
  std::uint64_t seed = 13;
  int max_steps = 0;  // stop after this many updates when > 0
  double bn_momentum = 0.1;
  DocumentCaps synopsis_caps = kSynopsisCaps;
  DocumentCaps summary_caps = kSummaryCaps;
  ModelConfig model;

  void validate() const;
};

/// Strict JSON mapping; unknown keys raise std::invalid_argument naming the key.
nlohmann::json to_json(const TrainingConfig& config);
TrainingConfig training_config_from_json(const nlohmann::json& j, TrainingConfig base = {});

/// One movie ready for the model.
struct Example {
  std::string id;
  HierDocument synopsis;
  HierDocument review;
  LabelTarget target;
  TagSet gold;
  std::size_t review_count = 0;
};

std::vector<Example> prepare_examples(std::span<const MovieRecord> records, const SummaryTable& summaries,
                                      const TokenVocabulary& vocab, const TagVocabulary& tags,
                                      const TrainingConfig& config, std::optional<Split> split = std::nullopt);

/// KL(target || predicted) with predicted clamped at 1e-12 and 0 log 0 = 0.
double kl_loss(const Eigen::VectorXd& predicted, const LabelTarget& target);

struct BatchLoss {
  double kl = 0.0;       // mean over the batch
  double penalty = 0.0;  // lambda * ||theta||^2 over decayed weights
  double total() const { return kl + penalty; }
  nn::Gradients gradients;  // of the mean KL only
  std::vector<nn::BatchStatistics> batch_statistics;
};

/// Forward and backward pass for one batch.
BatchLoss compute_batch_loss(const StoryTagger& model, std::span<const Example* const> batch, double l2_lambda,
                             bool training, std::mt19937_64* rng);

/// Momentum SGD: v = rho * v + (g + 2 * lambda * theta); theta -= eta * v.
class MomentumSgd {
 public:
  MomentumSgd(double learning_rate, double momentum, double l2_lambda)
      : lr_(learning_rate), momentum_(momentum), l2_(l2_lambda) {}

  void step(ParameterStore& params, const nn::Gradients& grads);

  std::map<std::string, nn::Matrix>& velocity() { return velocity_; }
  const std::map<std::string, nn::Matrix>& velocity() const { return velocity_; }

 private:
  double lr_, momentum_, l2_;
  std::map<std::string, nn::Matrix> velocity_;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_f1_at_3 = 0.0;
  std::size_t val_tl_at_3 = 0;
  double wall_seconds = 0.0;
  int steps = 0;
};

nlohmann::json to_json(const EpochRecord& r);

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  TrainingConfig config;
  TokenVocabulary vocab;
  TagVocabulary tags;
  ParameterStore params;
  std::map<std::string, nn::Matrix> optimizer_state;
  int epoch = 0;
  int steps = 0;
  std::vector<EpochRecord> history;

  StoryTagger model() const { return StoryTagger(config.model, params); }
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
std::vector<char> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint deserialize_checkpoint(std::span<const char> bytes);

struct TrainResult {
  Checkpoint best;  // highest validation F1@3
  Checkpoint last;  // state after the final epoch, for resuming
};

struct TrainOptions {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(int step, double loss)> on_step;
  const Checkpoint* resume = nullptr;
};

/// Trains from `train` and selects on `val` (F1@3; the final epoch wins
/// when `val` is empty).
TrainResult train(std::span<const Example> train, std::span<const Example> val, const TrainingConfig& config,
                  const TokenVocabulary& vocab, const TagVocabulary& tags, const TrainOptions& options = {});

/// Ranked tag predictions for every example.
std::vector<ModelOutput> predict_examples(const StoryTagger& model, std::span<const Example> examples,
                                          int batch_size = 64);

}  // namespace storytag

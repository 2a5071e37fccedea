#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "storytag/han_encoder.hpp"

namespace storytag {

/// How the synopsis and review views reach the output layer.
enum class FusionMode {
  synopsis_only,  // single-view HAN + MIL
  merge_texts,    // one encoder over synopsis followed by the review summary
  concat,         // [d_ps, d_r]
  gated,          // z * tanh(W_ps d_ps) + (1 - z) * tanh(W_r d_r)
};

std::string_view to_string(FusionMode mode);
std::optional<FusionMode> parse_fusion_mode(std::string_view name);
bool has_review_view(FusionMode mode);

struct ModelConfig {
  EncoderConfig encoder;
  int vocab_size = 2;
  FusionMode mode = FusionMode::gated;
  int fusion_width = 0;  // gated width; 0 means 2 * hidden
  double embedding_init = 0.1;

  int gate_width() const { return fusion_width > 0 ? fusion_width : 2 * encoder.hidden; }
  void validate() const;
};

struct ModelInput {
  const HierDocument* synopsis = nullptr;
  const HierDocument* review = nullptr;  // may be the empty-text document
};

struct ModelOutput {
  nn::Vector tag_distribution;
  DocumentEncoding synopsis;                // the merged document in merge_texts mode
  std::optional<DocumentEncoding> review;   // present for concat and gated
  std::optional<nn::Vector> gate;           // present for gated
  FusionMode mode = FusionMode::gated;
};

struct ForwardPass {
  nn::Var probabilities;  // K x D
  EncodedBatch synopsis;
  std::optional<EncodedBatch> review;
  std::optional<nn::Var> gate;  // F x D
};

/// Appends the sentences of `b` after those of `a`. The placeholder
/// sentence of an empty document is skipped.
HierDocument merge_documents(const HierDocument& a, const HierDocument& b);
bool is_placeholder_document(const HierDocument& doc);

/// [d_ps, d_r].
nn::Vector fuse_concat(const nn::Vector& d_ps, const nn::Vector& d_r);

struct GatedFusion {
  nn::Vector fused;
  nn::Vector gate;
};

GatedFusion fuse_gated(const nn::Vector& d_ps, const nn::Vector& d_r, const nn::Matrix& w_ps, const nn::Matrix& w_r,
                       const nn::Matrix& w_z);

/// Gated fusion recorded on a tape; returns {h, z}.
std::pair<nn::Var, nn::Var> gated_fusion(nn::Var d_ps, nn::Var d_r, nn::Var w_ps, nn::Var w_r, nn::Var w_z);

/// Full multi-view tagger: embedding table, one encoder per view, fusion and
/// output layer.
class StoryTagger {
 public:
  StoryTagger(const ModelConfig& config, std::uint64_t seed);
  /// Rebuilds a tagger around tensors restored from a checkpoint.
  StoryTagger(const ModelConfig& config, ParameterStore params);
  StoryTagger(const StoryTagger& other);
  StoryTagger& operator=(const StoryTagger& other);
  StoryTagger(StoryTagger&&) = delete;

  ForwardPass forward(nn::Tape& tape, std::span<const ModelInput> batch, bool training,
                      std::mt19937_64* rng) const;

  /// Inference with running batch-norm statistics and no dropout.
  std::vector<ModelOutput> predict_batch(std::span<const ModelInput> batch) const;
  ModelOutput predict(const HierDocument& synopsis, const HierDocument& review) const;

  /// Folds batch statistics from a training pass into the running averages.
  void apply_batch_statistics(const std::vector<nn::BatchStatistics>& stats, double momentum = 0.1);

  /// Overwrites embedding columns from a whitespace-separated text table
  /// ("word v1 ... vd"). Returns the number of vocabulary tokens found.
  std::size_t load_pretrained_embeddings(const std::filesystem::path& path, const TokenVocabulary& vocab);

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }
  const nn::Parameter& embedding() const { return params_.at("embedding"); }
  const ViewEncoder& synopsis_encoder() const { return synopsis_; }
  const ViewEncoder& review_encoder() const { return review_; }

 private:
  void bind();

  ModelConfig config_;
  ParameterStore params_;
  ViewEncoder synopsis_;
  ViewEncoder review_;
};

struct GateStats {
  double synopsis_fraction = 0.0;  // share of gate components with z > 0.5
  double review_fraction = 0.0;    // share with z <= 0.5
  std::size_t instances = 0;
  std::size_t components = 0;
};

/// Gate activation shares over the outputs selected by `include`. Throws
/// when nothing is selected or a selected output has no gate.
GateStats gate_activation_stats(std::span<const ModelOutput> outputs,
                                const std::function<bool(std::size_t)>& include);

}  // namespace storytag

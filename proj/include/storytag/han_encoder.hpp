#pragma once

#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "storytag/autodiff.hpp"
#include "storytag/corpus.hpp"
#include "storytag/parameters.hpp"

namespace storytag {

struct EncoderConfig {
  int embedding_dim = 300;
  int hidden = 32;     // LSTM units per direction
  int attention = 0;   // 0 means 2 * hidden
  int num_tags = static_cast<int>(TagVocabulary::kStandardSize);
  bool batch_norm = true;
  double dropout = 0.5;

  int attention_width() const { return attention > 0 ? attention : 2 * hidden; }
  /// Width of a view's document vector: [d_h', mil_summary].
  int doc_width() const { return 2 * hidden + num_tags; }
};

/// Additive attention: weights = softmax(v · tanh(W s + b)) over positions.
struct AttentionParams {
  const nn::Parameter* projection;  // A x 2H
  const nn::Parameter* bias;        // A x 1
  const nn::Parameter* context;     // 1 x A
};

struct AttentionResult {
  nn::Vector context;
  nn::Vector weights;  // masked positions hold exactly 0
};

/// Attention pooling over the columns of `states`; positions with
/// mask[t] == false are excluded. Throws if every position is masked.
AttentionResult attend(const nn::Matrix& states, const AttentionParams& params, const std::vector<bool>& mask);

/// Per-view attention weights, padded to the document caps.
struct AttentionMap {
  nn::Matrix word_weights;      // L x T (rows: sentences, T = longest sentence)
  nn::Vector sentence_weights;  // L
  std::vector<int> lengths;     // valid words per row

  bool is_masked(Eigen::Index sentence, Eigen::Index word) const {
    return word >= lengths[static_cast<std::size_t>(sentence)];
  }
};

struct DocumentEncoding {
  nn::Vector doc_vector;              // [d_h', mil_summary]
  nn::Matrix sentence_vectors;        // 2H x L, word-level sentence representations
  nn::Matrix sentence_predictions;    // K x L, each column a distribution
  nn::Vector mil_summary;             // K
  AttentionMap attention;
};

/// Graph values for a batch of documents encoded by one view.
struct EncodedBatch {
  nn::Var doc_vectors;           // doc_width x D
  nn::Var sentence_vectors;      // 2H x S (after batch norm)
  nn::Var word_weights;          // 1 x W
  nn::Var sentence_weights;      // 1 x S
  nn::Var sentence_predictions;  // K x S
  nn::Var mil_summary;           // K x D
  std::vector<int> sentences_per_doc;
  std::vector<int> words_per_sentence;

  /// Copies document `d` out of the batch.
  DocumentEncoding extract(std::size_t d) const;
};

/// Word-level and sentence-level BiLSTM+attention encoder for one view,
/// with the per-sentence prediction head used for MIL aggregation.
class ViewEncoder {
 public:
  ViewEncoder() = default;
  /// Registers this view's parameters under `prefix` in `store`.
  ViewEncoder(std::string prefix, const EncoderConfig& config, ParameterStore& store, std::mt19937_64& rng);
  /// Binds to already-registered parameters.
  ViewEncoder(std::string prefix, const EncoderConfig& config, const ParameterStore& store);

  /// Encodes documents as one packed batch. `rng` is required when
  /// training with dropout.
  EncodedBatch encode(nn::Tape& tape, const nn::Parameter& embedding, std::span<const HierDocument* const> docs,
                      bool training, std::mt19937_64* rng) const;

  /// Sentence representation sh_i and its word attention row.
  std::pair<nn::Vector, nn::Vector> encode_sentence(std::span<const int> ids, const nn::Parameter& embedding) const;

  /// Inference-mode encoding of a single document.
  DocumentEncoding encode_document(const HierDocument& doc, const nn::Parameter& embedding) const;

  AttentionParams word_attention() const { return word_att_; }
  AttentionParams sentence_attention() const { return sent_att_; }
  const EncoderConfig& config() const { return config_; }

 private:
  void bind(const ParameterStore& store);

  std::string prefix_;
  EncoderConfig config_;
  nn::LstmParams word_fwd_{}, word_bwd_{}, sent_fwd_{}, sent_bwd_{};
  AttentionParams word_att_{}, sent_att_{};
  nn::BatchNormParams word_bn_{}, sent_bn_{};
  const nn::Parameter* pred_w_ = nullptr;
  const nn::Parameter* pred_b_ = nullptr;
};

/// Attention scores v · tanh(W s + b) for each column of `states` (1 x N).
nn::Var attention_scores(nn::Var states, const AttentionParams& params);

}  // namespace storytag

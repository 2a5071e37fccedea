#include "storytag/han_encoder.hpp"

#include <stdexcept>

namespace storytag {

using nn::Matrix;
using nn::Var;
using nn::Vector;
using Init = ParameterStore::Init;

Var attention_scores(Var states, const AttentionParams& params) {
  nn::Tape& tape = *states.node()->tape;
  Var projected = nn::tanh(nn::add_bias(nn::matmul(tape.param(*params.projection), states), tape.param(*params.bias)));
  return nn::matmul(tape.param(*params.context), projected);
}

AttentionResult attend(const Matrix& states, const AttentionParams& params, const std::vector<bool>& mask) {
  if (static_cast<Eigen::Index>(mask.size()) != states.cols()) throw std::invalid_argument("mask length mismatch");
  std::vector<Eigen::Index> keep;
  for (std::size_t t = 0; t < mask.size(); ++t) {
    if (mask[t]) keep.push_back(static_cast<Eigen::Index>(t));
  }
  if (keep.empty()) throw std::invalid_argument("attention over a fully masked sequence");
  Matrix selected(states.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) selected.col(static_cast<Eigen::Index>(k)) = states.col(keep[k]);

  nn::Tape tape(false);
  Var s = tape.constant(selected);
  const int len[] = {static_cast<int>(keep.size())};
  Var w = nn::segment_softmax(attention_scores(s, params), len);
  Var ctx = nn::segment_weighted_sum(s, w, len);

  AttentionResult out{ctx.value().col(0), Vector::Zero(states.cols())};
  for (std::size_t k = 0; k < keep.size(); ++k) out.weights(keep[k]) = w.value()(0, static_cast<Eigen::Index>(k));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void add_lstm(ParameterStore& store, const std::string& name, int input, int hidden, std::mt19937_64& rng) {
  store.add(name + ".wx", 4 * hidden, input, Init::xavier, rng);
  store.add(name + ".wh", 4 * hidden, hidden, Init::xavier, rng);
  auto& b = store.add(name + ".b", 4 * hidden, 1, Init::zeros, rng);
  b.value.middleRows(hidden, hidden).setOnes();  // forget gate
  b.decay = false;
}

void add_attention(ParameterStore& store, const std::string& name, int input, int width, std::mt19937_64& rng) {
  store.add(name + ".w", width, input, Init::xavier, rng);
  store.add(name + ".b", width, 1, Init::zeros, rng).decay = false;
  store.add(name + ".v", 1, width, Init::uniform, rng, 0.1);
}

void add_batch_norm(ParameterStore& store, const std::string& name, int width, std::mt19937_64& rng) {
  store.add(name + ".gamma", width, 1, Init::ones, rng).decay = false;
  store.add(name + ".beta", width, 1, Init::zeros, rng).decay = false;
  store.buffer(name + ".mean", Matrix::Zero(width, 1));
  store.buffer(name + ".var", Matrix::Ones(width, 1));
}

nn::LstmParams lstm_of(const ParameterStore& s, const std::string& name) {
  return {&s.at(name + ".wx"), &s.at(name + ".wh"), &s.at(name + ".b")};
}

AttentionParams attention_of(const ParameterStore& s, const std::string& name) {
  return {&s.at(name + ".w"), &s.at(name + ".b"), &s.at(name + ".v")};
}

nn::BatchNormParams batch_norm_of(const ParameterStore& s, const std::string& name) {
  return {&s.at(name + ".gamma"), &s.at(name + ".beta"), &s.at(name + ".mean"), &s.at(name + ".var")};
}

std::vector<Eigen::Index> offsets_of(const std::vector<int>& lengths) {
  std::vector<Eigen::Index> out;
  Eigen::Index o = 0;
  for (int l : lengths) {
    out.push_back(o);
    o += l;
  }
  return out;
}

}  // namespace

ViewEncoder::ViewEncoder(std::string prefix, const EncoderConfig& config, ParameterStore& store, std::mt19937_64& rng)
    : prefix_(std::move(prefix)), config_(config) {
  const int h = config.hidden;
  add_lstm(store, prefix_ + ".word.fwd", config.embedding_dim, h, rng);
  add_lstm(store, prefix_ + ".word.bwd", config.embedding_dim, h, rng);
  add_attention(store, prefix_ + ".word.att", 2 * h, config.attention_width(), rng);
  if (config.batch_norm) add_batch_norm(store, prefix_ + ".word.bn", 2 * h, rng);
  add_lstm(store, prefix_ + ".sent.fwd", 2 * h, h, rng);
  add_lstm(store, prefix_ + ".sent.bwd", 2 * h, h, rng);
  add_attention(store, prefix_ + ".sent.att", 2 * h, config.attention_width(), rng);
  if (config.batch_norm) add_batch_norm(store, prefix_ + ".sent.bn", 2 * h, rng);
  store.add(prefix_ + ".sent.pred.w", config.num_tags, 2 * h, Init::xavier, rng);
  store.add(prefix_ + ".sent.pred.b", config.num_tags, 1, Init::zeros, rng).decay = false;
  bind(store);
}

ViewEncoder::ViewEncoder(std::string prefix, const EncoderConfig& config, const ParameterStore& store)
    : prefix_(std::move(prefix)), config_(config) {
  bind(store);
}

void ViewEncoder::bind(const ParameterStore& store) {
  word_fwd_ = lstm_of(store, prefix_ + ".word.fwd");
  word_bwd_ = lstm_of(store, prefix_ + ".word.bwd");
  word_att_ = attention_of(store, prefix_ + ".word.att");
  sent_fwd_ = lstm_of(store, prefix_ + ".sent.fwd");
  sent_bwd_ = lstm_of(store, prefix_ + ".sent.bwd");
  sent_att_ = attention_of(store, prefix_ + ".sent.att");
  if (config_.batch_norm) {
    word_bn_ = batch_norm_of(store, prefix_ + ".word.bn");
    sent_bn_ = batch_norm_of(store, prefix_ + ".sent.bn");
  }
  pred_w_ = &store.at(prefix_ + ".sent.pred.w");
  pred_b_ = &store.at(prefix_ + ".sent.pred.b");
}

EncodedBatch ViewEncoder::encode(nn::Tape& tape, const nn::Parameter& embedding,
                                 std::span<const HierDocument* const> docs, bool training,
                                 std::mt19937_64* rng) const {
  if (docs.empty()) throw std::invalid_argument("encode needs at least one document");
  EncodedBatch out;
  std::vector<int> ids;
  for (const HierDocument* doc : docs) {
    if (doc->sentences.empty()) throw std::invalid_argument("cannot encode an empty document");
    out.sentences_per_doc.push_back(static_cast<int>(doc->sentences.size()));
    for (const auto& s : doc->sentences) {
      if (s.empty()) throw std::invalid_argument("cannot encode an empty sentence");
      out.words_per_sentence.push_back(static_cast<int>(s.size()));
      ids.insert(ids.end(), s.begin(), s.end());
    }
  }
  const double drop = training ? config_.dropout : 0.0;
  if (drop > 0.0 && rng == nullptr) throw std::invalid_argument("dropout needs a random generator");

  Var words = tape.embed(embedding, ids);
  Var word_states = nn::bilstm(words, out.words_per_sentence, word_fwd_, word_bwd_);
  out.word_weights = nn::segment_softmax(attention_scores(word_states, word_att_), out.words_per_sentence);
  Var sentences = nn::segment_weighted_sum(word_states, out.word_weights, out.words_per_sentence);
  if (config_.batch_norm) sentences = nn::batch_norm(sentences, word_bn_, training);
  out.sentence_vectors = sentences;
  if (drop > 0.0) sentences = nn::dropout(sentences, drop, *rng);

  Var sentence_states = nn::bilstm(sentences, out.sentences_per_doc, sent_fwd_, sent_bwd_);
  out.sentence_weights = nn::segment_softmax(attention_scores(sentence_states, sent_att_), out.sentences_per_doc);
  Var doc_context = nn::segment_weighted_sum(sentence_states, out.sentence_weights, out.sentences_per_doc);
  if (config_.batch_norm) doc_context = nn::batch_norm(doc_context, sent_bn_, training);

  out.sentence_predictions =
      nn::softmax_cols(nn::add_bias(nn::matmul(tape.param(*pred_w_), sentence_states), tape.param(*pred_b_)));
  out.mil_summary = nn::segment_weighted_sum(out.sentence_predictions, out.sentence_weights, out.sentences_per_doc);
  const Var parts[] = {doc_context, out.mil_summary};
  out.doc_vectors = nn::concat_rows(parts);
  return out;
}

DocumentEncoding EncodedBatch::extract(std::size_t d) const {
  const auto sent_off = offsets_of(sentences_per_doc);
  const auto word_off = offsets_of(words_per_sentence);
  const auto first = sent_off.at(d);
  const int count = sentences_per_doc.at(d);

  DocumentEncoding enc;
  const auto col = static_cast<Eigen::Index>(d);
  enc.doc_vector = doc_vectors.value().col(col);
  enc.mil_summary = mil_summary.value().col(col);
  enc.sentence_vectors = sentence_vectors.value().middleCols(first, count);
  enc.sentence_predictions = sentence_predictions.value().middleCols(first, count);
  enc.attention.sentence_weights = sentence_weights.value().row(0).segment(first, count).transpose();

  int longest = 0;
  for (int i = 0; i < count; ++i) longest = std::max(longest, words_per_sentence[static_cast<std::size_t>(first + i)]);
  enc.attention.word_weights = Matrix::Zero(count, longest);
  for (int i = 0; i < count; ++i) {
    const auto s = static_cast<std::size_t>(first + i);
    const int len = words_per_sentence[s];
    enc.attention.lengths.push_back(len);
    enc.attention.word_weights.row(i).head(len) = word_weights.value().row(0).segment(word_off[s], len);
  }
  return enc;
}

std::pair<Vector, Vector> ViewEncoder::encode_sentence(std::span<const int> ids, const nn::Parameter& embedding) const {
  if (ids.empty()) throw std::invalid_argument("cannot encode an empty sentence");
  nn::Tape tape(false);
  const int len[] = {static_cast<int>(ids.size())};
  Var states = nn::bilstm(tape.embed(embedding, ids), len, word_fwd_, word_bwd_);
  Var weights = nn::segment_softmax(attention_scores(states, word_att_), len);
  Var sh = nn::segment_weighted_sum(states, weights, len);
  return {sh.value().col(0), weights.value().row(0).transpose()};
}

DocumentEncoding ViewEncoder::encode_document(const HierDocument& doc, const nn::Parameter& embedding) const {
  nn::Tape tape(false);
  const HierDocument* docs[] = {&doc};
  return encode(tape, embedding, docs, false, nullptr).extract(0);
}

}  // namespace storytag

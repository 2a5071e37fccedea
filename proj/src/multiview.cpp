#include "storytag/multiview.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace storytag {

using nn::Matrix;
using nn::Var;
using nn::Vector;
using Init = ParameterStore::Init;

std::string_view to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::synopsis_only:
      return "synopsis_only";
    case FusionMode::merge_texts:
      return "merge_texts";
    case FusionMode::concat:
      return "concat";
    case FusionMode::gated:
      return "gated";
  }
  return "gated";
}

std::optional<FusionMode> parse_fusion_mode(std::string_view name) {
  if (name == "synopsis_only") return FusionMode::synopsis_only;
  if (name == "merge_texts") return FusionMode::merge_texts;
  if (name == "concat") return FusionMode::concat;
  if (name == "gated") return FusionMode::gated;
  return std::nullopt;
}

bool has_review_view(FusionMode mode) { return mode == FusionMode::concat || mode == FusionMode::gated; }

void ModelConfig::validate() const {
  if (vocab_size < 2) throw std::invalid_argument("vocab_size must include the reserved ids");
  if (encoder.embedding_dim < 1 || encoder.hidden < 1 || encoder.num_tags < 1) {
    throw std::invalid_argument("encoder widths must be positive");
  }
  if (encoder.dropout < 0.0 || encoder.dropout >= 1.0) throw std::invalid_argument("dropout must be in [0, 1)");
}

bool is_placeholder_document(const HierDocument& doc) {
  return doc.sentences.size() == 1 && doc.sentences[0].size() == 1 &&
         doc.sentences[0][0] == TokenVocabulary::kUnkId && !doc.tokens.empty() &&
         doc.tokens[0][0] == TokenVocabulary::kUnkToken;
}

HierDocument merge_documents(const HierDocument& a, const HierDocument& b) {
  HierDocument out = a;
  out.caps.max_sentences = a.caps.max_sentences + b.caps.max_sentences;
  out.caps.max_words = std::max(a.caps.max_words, b.caps.max_words);
  if (is_placeholder_document(b)) return out;
  if (is_placeholder_document(a)) {
    out.sentences.clear();
    out.tokens.clear();
    out.lengths.clear();
  }
  out.sentences.insert(out.sentences.end(), b.sentences.begin(), b.sentences.end());
  out.tokens.insert(out.tokens.end(), b.tokens.begin(), b.tokens.end());
  out.lengths.insert(out.lengths.end(), b.lengths.begin(), b.lengths.end());
  return out;
}

Vector fuse_concat(const Vector& d_ps, const Vector& d_r) {
  Vector out(d_ps.size() + d_r.size());
  out << d_ps, d_r;
  return out;
}

std::pair<Var, Var> gated_fusion(Var d_ps, Var d_r, Var w_ps, Var w_r, Var w_z) {
  Var h_ps = nn::tanh(nn::matmul(w_ps, d_ps));
  Var h_r = nn::tanh(nn::matmul(w_r, d_r));
  const Var both[] = {d_ps, d_r};
  Var z = nn::sigmoid(nn::matmul(w_z, nn::concat_rows(both)));
  Var h = nn::add(nn::mul(z, h_ps), nn::mul(nn::one_minus(z), h_r));
  return {h, z};
}

GatedFusion fuse_gated(const Vector& d_ps, const Vector& d_r, const Matrix& w_ps, const Matrix& w_r,
                       const Matrix& w_z) {
  if (w_ps.cols() != d_ps.size() || w_r.cols() != d_r.size() || w_z.cols() != d_ps.size() + d_r.size() ||
      w_ps.rows() != w_r.rows() || w_z.rows() != w_ps.rows()) {
    throw std::invalid_argument("gated fusion shape mismatch");
  }
  nn::Tape tape(false);
  auto [h, z] = gated_fusion(tape.constant(d_ps), tape.constant(d_r), tape.constant(w_ps), tape.constant(w_r),
                             tape.constant(w_z));
  return {h.value().col(0), z.value().col(0)};
}

// ---------------------------------------------------------------------------

StoryTagger::StoryTagger(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto& enc = config_.encoder;
  params_.add("embedding", enc.embedding_dim, config_.vocab_size, Init::uniform, rng, config_.embedding_init).decay =
      false;
  synopsis_ = ViewEncoder("synopsis", enc, params_, rng);
  if (has_review_view(config_.mode)) review_ = ViewEncoder("review", enc, params_, rng);

  const int dv = enc.doc_width();
  int fused = dv;
  if (config_.mode == FusionMode::concat) fused = 2 * dv;
  if (config_.mode == FusionMode::gated) {
    const int f = config_.gate_width();
    params_.add("fusion.w_ps", f, dv, Init::xavier, rng);
    params_.add("fusion.w_r", f, dv, Init::xavier, rng);
    params_.add("fusion.w_z", f, 2 * dv, Init::xavier, rng);
    fused = f;
  }
  params_.add("output.w", enc.num_tags, fused, Init::xavier, rng);
  params_.add("output.b", enc.num_tags, 1, Init::zeros, rng).decay = false;
}

StoryTagger::StoryTagger(const ModelConfig& config, ParameterStore params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  bind();
}

StoryTagger::StoryTagger(const StoryTagger& other) : config_(other.config_), params_(other.params_) { bind(); }

StoryTagger& StoryTagger::operator=(const StoryTagger& other) {
  if (this != &other) {
    config_ = other.config_;
    params_ = other.params_;
    bind();
  }
  return *this;
}

void StoryTagger::bind() {
  synopsis_ = ViewEncoder("synopsis", config_.encoder, params_);
  if (has_review_view(config_.mode)) review_ = ViewEncoder("review", config_.encoder, params_);
  const auto& emb = params_.at("embedding").value;
  if (emb.rows() != config_.encoder.embedding_dim || emb.cols() != config_.vocab_size) {
    throw std::invalid_argument("embedding table does not match the model configuration");
  }
}

ForwardPass StoryTagger::forward(nn::Tape& tape, std::span<const ModelInput> batch, bool training,
                                 std::mt19937_64* rng) const {
  if (batch.empty()) throw std::invalid_argument("forward needs a non-empty batch");
  const auto& emb = params_.at("embedding");
  std::vector<const HierDocument*> synopses;
  std::vector<const HierDocument*> reviews;
  std::vector<HierDocument> merged;
  for (const auto& in : batch) {
    if (in.synopsis == nullptr) throw std::invalid_argument("missing synopsis document");
    synopses.push_back(in.synopsis);
    reviews.push_back(in.review);
  }
  if (config_.mode == FusionMode::merge_texts) {
    merged.reserve(batch.size());
    for (const auto& in : batch) merged.push_back(in.review ? merge_documents(*in.synopsis, *in.review) : *in.synopsis);
    for (std::size_t i = 0; i < merged.size(); ++i) synopses[i] = &merged[i];
  }
  if (has_review_view(config_.mode)) {
    for (const auto* r : reviews) {
      if (r == nullptr) throw std::invalid_argument("missing review document (use the empty-text document)");
    }
  }

  ForwardPass pass{Var{}, synopsis_.encode(tape, emb, synopses, training, rng), std::nullopt, std::nullopt};
  Var fused = pass.synopsis.doc_vectors;
  if (has_review_view(config_.mode)) {
    pass.review = review_.encode(tape, emb, reviews, training, rng);
    if (config_.mode == FusionMode::concat) {
      const Var parts[] = {pass.synopsis.doc_vectors, pass.review->doc_vectors};
      fused = nn::concat_rows(parts);
    } else {
      auto [h, z] = gated_fusion(pass.synopsis.doc_vectors, pass.review->doc_vectors,
                                 tape.param(params_.at("fusion.w_ps")), tape.param(params_.at("fusion.w_r")),
                                 tape.param(params_.at("fusion.w_z")));
      fused = h;
      pass.gate = z;
    }
  }
  const double drop = training ? config_.encoder.dropout : 0.0;
  if (drop > 0.0) fused = nn::dropout(fused, drop, *rng);
  Var logits = nn::add_bias(nn::matmul(tape.param(params_.at("output.w")), fused), tape.param(params_.at("output.b")));
  pass.probabilities = nn::softmax_cols(logits);
  return pass;
}

std::vector<ModelOutput> StoryTagger::predict_batch(std::span<const ModelInput> batch) const {
  nn::Tape tape(false);
  ForwardPass pass = forward(tape, batch, false, nullptr);
  std::vector<ModelOutput> outputs;
  outputs.reserve(batch.size());
  for (std::size_t d = 0; d < batch.size(); ++d) {
    ModelOutput out;
    out.mode = config_.mode;
    out.tag_distribution = pass.probabilities.value().col(static_cast<Eigen::Index>(d));
    out.synopsis = pass.synopsis.extract(d);
    if (pass.review) out.review = pass.review->extract(d);
    if (pass.gate) out.gate = pass.gate->value().col(static_cast<Eigen::Index>(d));
    outputs.push_back(std::move(out));
  }
  return outputs;
}

ModelOutput StoryTagger::predict(const HierDocument& synopsis, const HierDocument& review) const {
  const ModelInput in[] = {{&synopsis, &review}};
  return std::move(predict_batch(in).front());
}

void StoryTagger::apply_batch_statistics(const std::vector<nn::BatchStatistics>& stats, double momentum) {
  for (const auto& s : stats) {
    auto& mean = const_cast<nn::Parameter*>(s.running_mean)->value;
    auto& var = const_cast<nn::Parameter*>(s.running_var)->value;
    mean = (1.0 - momentum) * mean + momentum * s.mean;
    var = (1.0 - momentum) * var + momentum * s.unbiased_var;
  }
}

std::size_t StoryTagger::load_pretrained_embeddings(const std::filesystem::path& path, const TokenVocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embeddings file " + path.string());
  auto& table = params_.at("embedding").value;
  std::size_t found = 0;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (!vocab.contains(word)) continue;
    Vector v(table.rows());
    Eigen::Index k = 0;
    double x = 0.0;
    while (k < v.size() && ss >> x) v(k++) = x;
    if (k != v.size()) continue;
    table.col(vocab.id(word)) = v;
    ++found;
  }
  return found;
}

GateStats gate_activation_stats(std::span<const ModelOutput> outputs, const std::function<bool(std::size_t)>& include) {
  GateStats stats;
  std::size_t active = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (!include(i)) continue;
    if (!outputs[i].gate) throw std::invalid_argument("gate statistics need gated-mode outputs");
    const auto& z = *outputs[i].gate;
    ++stats.instances;
    stats.components += static_cast<std::size_t>(z.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) active += z(k) > 0.5 ? 1 : 0;
  }
  if (stats.instances == 0) throw std::invalid_argument("no outputs matched the gate statistics filter");
  stats.synopsis_fraction = static_cast<double>(active) / static_cast<double>(stats.components);
  stats.review_fraction = 1.0 - stats.synopsis_fraction;
  return stats;
}

}  // namespace storytag

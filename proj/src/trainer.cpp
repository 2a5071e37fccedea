#include "storytag/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "storytag/text.hpp"

namespace storytag {

using nlohmann::json;

void TrainingConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (!(l2_lambda >= 0.0)) throw std::invalid_argument("l2_lambda must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (max_steps < 0) throw std::invalid_argument("max_steps must be >= 0");
  if (synopsis_caps.max_sentences < 1 || synopsis_caps.max_words < 1 || summary_caps.max_sentences < 1 ||
      summary_caps.max_words < 1) {
    throw std::invalid_argument("document caps must be positive");
  }
  model.validate();
}

// ---------------------------------------------------------------------------
// Config JSON

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw std::invalid_argument("unknown configuration key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

json caps_json(DocumentCaps c) { return json::array({c.max_sentences, c.max_words}); }

DocumentCaps caps_from(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument(key + " must be [max_sentences, max_words]");
  return {j[0].get<int>(), j[1].get<int>()};
}

}  // namespace

json to_json(const TrainingConfig& c) {
  const auto& e = c.model.encoder;
  return json{{"epochs", c.epochs},
              {"learning_rate", c.learning_rate},
              {"momentum", c.momentum},
              {"l2_lambda", c.l2_lambda},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"max_steps", c.max_steps},
              {"bn_momentum", c.bn_momentum},
              {"synopsis_caps", caps_json(c.synopsis_caps)},
              {"summary_caps", caps_json(c.summary_caps)},
              {"model",
               {{"mode", std::string(to_string(c.model.mode))},
                {"vocab_size", c.model.vocab_size},
                {"embedding_dim", e.embedding_dim},
                {"hidden", e.hidden},
                {"attention", e.attention},
                {"num_tags", e.num_tags},
                {"batch_norm", e.batch_norm},
                {"dropout", e.dropout},
                {"fusion_width", c.model.fusion_width},
                {"embedding_init", c.model.embedding_init}}}};
}

TrainingConfig training_config_from_json(const json& j, TrainingConfig c) {
  check_keys(j,
             {"epochs", "learning_rate", "momentum", "l2_lambda", "batch_size", "seed", "max_steps", "bn_momentum",
              "synopsis_caps", "summary_caps", "model"},
             "");
  if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
  if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
  if (j.contains("momentum")) c.momentum = j["momentum"].get<double>();
  if (j.contains("l2_lambda")) c.l2_lambda = j["l2_lambda"].get<double>();
  if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("max_steps")) c.max_steps = j["max_steps"].get<int>();
  if (j.contains("bn_momentum")) c.bn_momentum = j["bn_momentum"].get<double>();
  if (j.contains("synopsis_caps")) c.synopsis_caps = caps_from(j["synopsis_caps"], "synopsis_caps");
  if (j.contains("summary_caps")) c.summary_caps = caps_from(j["summary_caps"], "summary_caps");
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m,
               {"mode", "vocab_size", "embedding_dim", "hidden", "attention", "num_tags", "batch_norm", "dropout",
                "fusion_width", "embedding_init"},
               "model");
    if (m.contains("mode")) {
      auto mode = parse_fusion_mode(m["mode"].get<std::string>());
      if (!mode) throw std::invalid_argument("unknown fusion mode '" + m["mode"].get<std::string>() + "'");
      c.model.mode = *mode;
    }
    if (m.contains("vocab_size")) c.model.vocab_size = m["vocab_size"].get<int>();
    if (m.contains("embedding_dim")) c.model.encoder.embedding_dim = m["embedding_dim"].get<int>();
    if (m.contains("hidden")) c.model.encoder.hidden = m["hidden"].get<int>();
    if (m.contains("attention")) c.model.encoder.attention = m["attention"].get<int>();
    if (m.contains("num_tags")) c.model.encoder.num_tags = m["num_tags"].get<int>();
    if (m.contains("batch_norm")) c.model.encoder.batch_norm = m["batch_norm"].get<bool>();
    if (m.contains("dropout")) c.model.encoder.dropout = m["dropout"].get<double>();
    if (m.contains("fusion_width")) c.model.fusion_width = m["fusion_width"].get<int>();
    if (m.contains("embedding_init")) c.model.embedding_init = m["embedding_init"].get<double>();
  }
  return c;
}

json to_json(const EpochRecord& r) {
  return json{{"epoch", r.epoch},           {"train_loss", r.train_loss}, {"val_f1_at_3", r.val_f1_at_3},
              {"val_tl_at_3", r.val_tl_at_3}, {"wall_seconds", r.wall_seconds}, {"steps", r.steps}};
}

// ---------------------------------------------------------------------------
// Data and loss

std::vector<Example> prepare_examples(std::span<const MovieRecord> records, const SummaryTable& summaries,
                                      const TokenVocabulary& vocab, const TagVocabulary& tags,
                                      const TrainingConfig& config, std::optional<Split> split) {
  std::vector<Example> out;
  for (const auto& r : records) {
    if (split && r.split != *split) continue;
    Example e;
    e.id = r.id;
    e.synopsis = segment_and_index(r.synopsis, vocab, config.synopsis_caps);
    e.review = segment_and_index(summary_for(summaries, r.id), vocab, config.summary_caps);
    e.target = encode_labels(r.gold_tags, tags);
    e.gold = tag_set_of(r.gold_tags, tags);
    e.review_count = r.reviews.size();
    out.push_back(std::move(e));
  }
  return out;
}

double kl_loss(const Eigen::VectorXd& predicted, const LabelTarget& target) {
  if (predicted.size() != target.distribution.size()) throw std::invalid_argument("kl_loss size mismatch");
  double loss = 0.0;
  for (Eigen::Index i = 0; i < predicted.size(); ++i) {
    const double t = target.distribution(i);
    if (t > 0.0) loss += t * (std::log(t) - std::log(std::max(predicted(i), 1e-12)));
  }
  return loss;
}

BatchLoss compute_batch_loss(const StoryTagger& model, std::span<const Example* const> batch, double l2_lambda,
                             bool training, std::mt19937_64* rng) {
  nn::Tape tape(true);
  std::vector<ModelInput> inputs;
  inputs.reserve(batch.size());
  const auto k = model.config().encoder.num_tags;
  nn::Matrix targets(k, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    inputs.push_back({&batch[i]->synopsis, &batch[i]->review});
    if (batch[i]->target.distribution.size() != k) throw std::invalid_argument("target width mismatch");
    targets.col(static_cast<Eigen::Index>(i)) = batch[i]->target.distribution;
  }
  ForwardPass pass = model.forward(tape, inputs, training, rng);
  nn::Var loss = nn::scale(nn::kl_divergence(pass.probabilities, targets), 1.0 / static_cast<double>(batch.size()));
  tape.backward(loss);
  BatchLoss out;
  out.kl = loss.value()(0, 0);
  out.penalty = l2_lambda * model.parameters().decayed_norm_squared();
  out.gradients = tape.take_gradients();
  out.batch_statistics = std::move(tape.batch_statistics());
  return out;
}

void MomentumSgd::step(ParameterStore& params, const nn::Gradients& grads) {
  for (auto& [name, p] : params.items()) {
    if (!p.trainable) continue;
    nn::Matrix g = grads.dense_of(p);
    if (p.decay && l2_ > 0.0) g += 2.0 * l2_ * p.value;
    auto [it, fresh] = velocity_.try_emplace(name, nn::Matrix::Zero(p.value.rows(), p.value.cols()));
    it->second = momentum_ * it->second + g;
    p.value -= lr_ * it->second;
  }
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::span<const Example> examples, int batch_size,
                                                   std::mt19937_64& rng) {
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  // Bucket by synopsis length to limit padding work.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return examples[a].synopsis.num_sentences() / 5 < examples[b].synopsis.num_sentences() / 5;
  });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  // A lone trailing example would leave batch norm with no variance.
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

Checkpoint snapshot(const StoryTagger& model, const MomentumSgd& opt, const TrainingConfig& config,
                    const TokenVocabulary& vocab, const TagVocabulary& tags, int epoch, int steps,
                    const std::vector<EpochRecord>& history) {
  Checkpoint c;
  c.config = config;
  c.vocab = vocab;
  c.tags = tags;
  c.params = model.parameters();
  c.optimizer_state = opt.velocity();
  c.epoch = epoch;
  c.steps = steps;
  c.history = history;
  return c;
}

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::uint64_t out[1];
  seq.generate(reinterpret_cast<std::uint32_t*>(out), reinterpret_cast<std::uint32_t*>(out) + 2);
  return out[0];
}

}  // namespace

std::vector<ModelOutput> predict_examples(const StoryTagger& model, std::span<const Example> examples,
                                          int batch_size) {
  std::vector<ModelOutput> outputs;
  outputs.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); i += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(examples.size(), i + static_cast<std::size_t>(batch_size));
    std::vector<ModelInput> inputs;
    for (std::size_t j = i; j < end; ++j) inputs.push_back({&examples[j].synopsis, &examples[j].review});
    for (auto& o : model.predict_batch(inputs)) outputs.push_back(std::move(o));
  }
  return outputs;
}

TrainResult train(std::span<const Example> train_set, std::span<const Example> val, const TrainingConfig& config,
                  const TokenVocabulary& vocab, const TagVocabulary& tags, const TrainOptions& options) {
  config.validate();
  if (train_set.empty()) throw TrainingError("no training examples");
  if (config.model.vocab_size != static_cast<int>(vocab.size())) {
    throw TrainingError("model vocab_size " + std::to_string(config.model.vocab_size) +
                        " does not match the token vocabulary (" + std::to_string(vocab.size()) + ")");
  }
  if (config.model.encoder.num_tags != static_cast<int>(tags.size())) {
    throw TrainingError("model num_tags does not match the tag vocabulary");
  }

  const Checkpoint* resume = options.resume;
  StoryTagger model = resume ? StoryTagger(config.model, resume->params) : StoryTagger(config.model, config.seed);
  MomentumSgd opt(config.learning_rate, config.momentum, config.l2_lambda);
  std::vector<EpochRecord> history;
  int start_epoch = 0;
  int steps = 0;
  if (resume) {
    opt.velocity() = resume->optimizer_state;
    history = resume->history;
    start_epoch = resume->epoch;
    steps = resume->steps;
  }

  std::optional<Checkpoint> best;
  double best_f1 = -1.0;
  if (resume) {
    for (const auto& r : history) best_f1 = std::max(best_f1, r.val_f1_at_3);
    best = *resume;
  }

  const bool step_limited = config.max_steps > 0;
  for (int epoch = start_epoch + 1; epoch <= config.epochs; ++epoch) {
    if (step_limited && steps >= config.max_steps) break;
    const auto started = std::chrono::steady_clock::now();
    std::mt19937_64 rng(epoch_seed(config.seed, epoch));
    const auto batches = make_batches(train_set, config.batch_size, rng);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      if (step_limited && steps >= config.max_steps) break;
      std::vector<const Example*> batch;
      for (auto i : batches[b]) batch.push_back(&train_set[i]);
      BatchLoss loss = compute_batch_loss(model, batch, config.l2_lambda, true, &rng);
      if (!std::isfinite(loss.total())) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch " << b << " (parameter norm "
            << std::sqrt(model.parameters().decayed_norm_squared()) << ")";
        throw TrainingError(msg.str());
      }
      model.apply_batch_statistics(loss.batch_statistics, config.bn_momentum);
      opt.step(model.parameters(), loss.gradients);
      ++steps;
      loss_sum += loss.total();
      ++loss_count;
      if (options.on_step) options.on_step(steps, loss.total());
    }

    EpochRecord record;
    record.epoch = epoch;
    record.steps = steps;
    record.train_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
    if (!val.empty()) {
      const auto outputs = predict_examples(model, val);
      std::vector<TagSet> preds, golds;
      for (std::size_t i = 0; i < val.size(); ++i) {
        const auto ranked = top_k(outputs[i].tag_distribution, 3);
        preds.push_back(make_tag_set(ranked));
        golds.push_back(val[i].gold);
      }
      record.val_f1_at_3 = micro_f1(preds, golds);
      record.val_tl_at_3 = tags_learned(preds);
    }
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    history.push_back(record);
    if (options.on_epoch) options.on_epoch(record);

    if (val.empty() || record.val_f1_at_3 > best_f1) {
      best_f1 = record.val_f1_at_3;
      best = snapshot(model, opt, config, vocab, tags, epoch, steps, history);
    }
  }

  TrainResult result;
  result.last = snapshot(model, opt, config, vocab, tags, history.empty() ? start_epoch : history.back().epoch, steps,
                         history);
  result.best = best ? std::move(*best) : result.last;
  result.best.history = history;
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint container
//
//   "STAGCKPT" | u32 version | u64 header length | header JSON
//   | u64 n | n x (u32 len, token bytes)          token vocabulary
//   | u64 n | n x (u32 len, tag bytes)            tag vocabulary
//   | u64 n | n x tensor                          model tensors
//   | u64 n | n x tensor                          optimizer state
//   | "END."
// tensor = u32 name length, name, u8 flags (1 decay, 2 trainable), i64 rows,
// i64 cols, rows*cols little-endian f64 in column-major order.

namespace {

constexpr char kMagic[8] = {'S', 'T', 'A', 'G', 'C', 'K', 'P', 'T'};
constexpr char kTrailer[4] = {'E', 'N', 'D', '.'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename T>
  void pod(T v) {
    raw(&v, sizeof(T));
  }
  void str32(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void tensor(const std::string& name, const nn::Matrix& m, std::uint8_t flags) {
    str32(name);
    pod<std::uint8_t>(flags);
    pod<std::int64_t>(m.rows());
    pod<std::int64_t>(m.cols());
    raw(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  std::vector<char>& bytes() { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const char> bytes) : bytes_(bytes) {}
  void raw(void* out, std::size_t n) {
    if (n > bytes_.size() - pos_) throw CheckpointError("checkpoint is truncated");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T pod() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  std::string str(std::size_t n) {
    if (n > bytes_.size() - pos_) throw CheckpointError("checkpoint is truncated");
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::string str32() { return str(pod<std::uint32_t>()); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

struct RawTensor {
  std::string name;
  std::uint8_t flags;
  nn::Matrix value;
};

RawTensor read_tensor(Reader& r) {
  RawTensor t;
  t.name = r.str32();
  t.flags = r.pod<std::uint8_t>();
  const auto rows = r.pod<std::int64_t>();
  const auto cols = r.pod<std::int64_t>();
  if (rows < 0 || cols < 0 || (cols > 0 && static_cast<std::uint64_t>(rows) > r.remaining() / sizeof(double) / static_cast<std::uint64_t>(cols))) {
    throw CheckpointError("checkpoint is truncated or corrupt (tensor " + t.name + ")");
  }
  t.value.resize(rows, cols);
  r.raw(t.value.data(), static_cast<std::size_t>(rows * cols) * sizeof(double));
  return t;
}

}  // namespace

std::vector<char> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.pod<std::uint32_t>(Checkpoint::kVersion);
  json header{{"config", to_json(ckpt.config)},
              {"epoch", ckpt.epoch},
              {"steps", ckpt.steps},
              {"min_doc_freq", ckpt.vocab.min_doc_freq()}};
  header["history"] = json::array();
  for (const auto& r : ckpt.history) header["history"].push_back(to_json(r));
  const std::string h = header.dump();
  w.pod<std::uint64_t>(h.size());
  w.raw(h.data(), h.size());

  w.pod<std::uint64_t>(ckpt.vocab.size());
  for (const auto& t : ckpt.vocab.tokens()) w.str32(t);
  w.pod<std::uint64_t>(ckpt.tags.size());
  for (const auto& t : ckpt.tags.tags()) w.str32(t);
  w.pod<std::uint64_t>(ckpt.params.items().size());
  for (const auto& [name, p] : ckpt.params.items()) {
    w.tensor(name, p.value, static_cast<std::uint8_t>((p.decay ? 1 : 0) | (p.trainable ? 2 : 0)));
  }
  w.pod<std::uint64_t>(ckpt.optimizer_state.size());
  for (const auto& [name, m] : ckpt.optimizer_state) w.tensor(name, m, 0);
  w.raw(kTrailer, sizeof(kTrailer));
  return std::move(w.bytes());
}

Checkpoint deserialize_checkpoint(std::span<const char> bytes) {
  Reader r(bytes);
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw CheckpointError("not a storytag checkpoint");
  const auto version = r.pod<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected version " +
                          std::to_string(Checkpoint::kVersion) + ")");
  }
  Checkpoint c;
  const auto header_len = r.pod<std::uint64_t>();
  if (header_len > r.remaining()) throw CheckpointError("checkpoint is truncated");
  json header;
  int min_doc_freq = 10;
  try {
    header = json::parse(r.str(header_len));
    c.config = training_config_from_json(header.at("config"));
    c.epoch = header.at("epoch").get<int>();
    c.steps = header.at("steps").get<int>();
    min_doc_freq = header.value("min_doc_freq", 10);
    for (const auto& h : header.at("history")) {
      EpochRecord e;
      e.epoch = h.at("epoch").get<int>();
      e.train_loss = h.at("train_loss").get<double>();
      e.val_f1_at_3 = h.at("val_f1_at_3").get<double>();
      e.val_tl_at_3 = h.at("val_tl_at_3").get<std::size_t>();
      e.wall_seconds = h.at("wall_seconds").get<double>();
      e.steps = h.at("steps").get<int>();
      c.history.push_back(e);
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }

  auto count = [&r](const char* what) {
    const auto n = r.pod<std::uint64_t>();
    if (n > r.remaining()) throw CheckpointError(std::string("checkpoint is truncated (") + what + ")");
    return n;
  };
  std::vector<std::string> tokens;
  for (auto n = count("tokens"); n > 0; --n) tokens.push_back(r.str32());
  if (tokens.size() < 2 || tokens[0] != TokenVocabulary::kUnkToken || tokens[1] != kNumberToken) {
    throw CheckpointError("checkpoint vocabulary lacks reserved ids");
  }
  tokens.erase(tokens.begin(), tokens.begin() + 2);
  std::vector<std::string> tags;
  for (auto n = count("tags"); n > 0; --n) tags.push_back(r.str32());
  for (auto n = count("tensors"); n > 0; --n) {
    auto t = read_tensor(r);
    auto& slot = c.params.items()[t.name];
    slot.value = std::move(t.value);
    slot.decay = (t.flags & 1) != 0;
    slot.trainable = (t.flags & 2) != 0;
  }
  for (auto n = count("optimizer"); n > 0; --n) {
    auto t = read_tensor(r);
    c.optimizer_state[t.name] = std::move(t.value);
  }
  char trailer[4];
  r.raw(trailer, sizeof(trailer));
  if (std::memcmp(trailer, kTrailer, sizeof(kTrailer)) != 0 || r.remaining() != 0) {
    throw CheckpointError("checkpoint has a corrupt trailer");
  }
  c.vocab = TokenVocabulary(std::move(tokens), min_doc_freq);
  c.tags = TagVocabulary(std::move(tags));
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace storytag

// storytag: command-line pipeline for story tagging.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "storytag/attention_export.hpp"
#include "storytag/corpus.hpp"
#include "storytag/evaluator.hpp"
#include "storytag/miner.hpp"
#include "storytag/summarizer.hpp"
#include "storytag/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace storytag;

namespace {

constexpr const char* kSeedEnv = "STORYTAG_SEED";

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes next to the target and renames, so a failed command never leaves a
// half-written output behind.
void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CliError("cannot write " + path.string());
    out << content;
    if (!out.flush()) throw CliError("cannot write " + path.string());
  }
  fs::rename(tmp, path);
}

/// One review per non-empty line.
std::vector<std::string> read_reviews(const fs::path& path) {
  std::vector<std::string> reviews;
  std::istringstream in(read_file(path));
  for (std::string line; std::getline(in, line);) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) reviews.push_back(line);
  }
  return reviews;
}

LoadedCorpus load_corpus_checked(const fs::path& path) {
  if (!fs::exists(path)) throw CliError("corpus file not found: " + path.string());
  auto loaded = load_dataset(path);
  for (const auto& e : loaded.report.errors) std::cerr << path.string() << ": " << e << "\n";
  return loaded;
}

const MovieRecord& find_movie(const std::vector<MovieRecord>& records, const std::string& id) {
  for (const auto& r : records)
    if (r.id == id) return r;
  throw CliError("movie '" + id + "' not found in the corpus");
}

std::optional<Split> split_option(const std::string& name) {
  if (name == "all") return std::nullopt;
  auto s = parse_split(name);
  if (!s) throw CliError("unknown split '" + name + "'");
  return s;
}

json stats_to_json(const DatasetStats& stats, const LoadReport& report) {
  json j;
  for (const auto& [split, s] : stats.splits) {
    j["splits"][std::string(to_string(split))] = {
        {"instances", s.instances},
        {"tags_per_instance", s.tags_per_instance},
        {"reviews_per_movie", s.reviews_per_movie},
        {"synopsis_sentences_per_doc", s.synopsis_sentences_per_doc},
        {"synopsis_words_per_sentence", s.synopsis_words_per_sentence},
        {"summary_sentences_per_doc", s.summary_sentences_per_doc},
        {"summary_words_per_sentence", s.summary_words_per_sentence}};
  }
  j["load"] = {{"lines", report.lines}, {"accepted", report.accepted}, {"rejected", report.rejected},
               {"errors", report.errors}};
  return j;
}

json document_to_json(const HierDocument& d) { return d.sentences; }

// ---------------------------------------------------------------------------

struct PreprocessArgs {
  std::string corpus, out, summaries;
  int min_doc_freq = 10;
};

void cmd_preprocess(const PreprocessArgs& a) {
  auto loaded = load_corpus_checked(a.corpus);
  SummaryTable summaries;
  if (!a.summaries.empty()) summaries = load_summaries(a.summaries);
  auto vocab = build_token_vocab(loaded.records, summaries, a.min_doc_freq);
  const auto& tags = TagVocabulary::standard();

  std::ostringstream vocab_text, tags_text, indexed;
  for (const auto& t : vocab.tokens()) vocab_text << t << "\n";
  for (const auto& t : tags.tags()) tags_text << t << "\n";
  for (const auto& r : loaded.records) {
    json row{{"id", r.id},
             {"split", std::string(to_string(r.split))},
             {"tags", tag_set_of(r.gold_tags, tags)},
             {"synopsis", document_to_json(segment_and_index(r.synopsis, vocab, kSynopsisCaps))},
             {"review", document_to_json(segment_and_index(summary_for(summaries, r.id), vocab, kSummaryCaps))}};
    indexed << row.dump() << "\n";
  }
  const auto stats = stats_to_json(dataset_stats(loaded.records, summaries), loaded.report);

  const fs::path out(a.out);
  write_atomic(out / "vocab.txt", vocab_text.str());
  write_atomic(out / "tags.txt", tags_text.str());
  write_atomic(out / "indexed.jsonl", indexed.str());
  write_atomic(out / "stats.json", stats.dump(2) + "\n");
  std::cerr << "preprocess: " << loaded.records.size() << " records, " << vocab.size() << " tokens -> " << a.out
            << "\n";
}

// ---------------------------------------------------------------------------

struct SummarizeArgs {
  std::string corpus, out;
  double ratio = 0.2;
  int max_sentences = 120;
};

void cmd_summarize(const SummarizeArgs& a) {
  auto loaded = load_corpus_checked(a.corpus);
  SummaryConfig config;
  config.target_ratio = a.ratio;
  config.max_sentences = a.max_sentences;
  config.validate();
  std::ostringstream out;
  for (const auto& r : loaded.records)
    out << json{{"id", r.id}, {"summary", summarize_reviews(r.reviews, config)}}.dump() << "\n";
  write_atomic(a.out, out.str());
  std::cerr << "summarize: " << loaded.records.size() << " movies -> " << a.out << "\n";
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, max_steps;
  std::string mode;
  bool resume = false;
};

/// Keys the train command reads itself; everything else is a training setting.
struct RunFiles {
  std::string corpus, summaries, vocab, checkpoint, log, embeddings;
};

void cmd_train(const TrainArgs& a) {
  json j;
  try {
    j = json::parse(read_file(a.config));
  } catch (const json::parse_error& e) {
    throw CliError(a.config + ": " + e.what());
  }
  if (!j.is_object()) throw CliError(a.config + ": configuration must be an object");
  RunFiles files;
  for (auto [key, field] : {std::pair{"corpus", &files.corpus}, std::pair{"summaries", &files.summaries},
                            std::pair{"vocab", &files.vocab}, std::pair{"checkpoint", &files.checkpoint},
                            std::pair{"log", &files.log}, std::pair{"embeddings", &files.embeddings}}) {
    if (j.contains(key)) {
      *field = j[key].get<std::string>();
      j.erase(key);
    }
  }
  if (files.corpus.empty() || files.checkpoint.empty())
    throw CliError("configuration needs 'corpus' and 'checkpoint'");
  if (files.log.empty()) files.log = files.checkpoint + ".log.jsonl";

  TrainingConfig config = training_config_from_json(j);
  if (const char* env = std::getenv(kSeedEnv)) config.seed = std::stoull(env);
  if (a.seed) config.seed = *a.seed;
  if (a.epochs) config.epochs = *a.epochs;
  if (a.max_steps) config.max_steps = *a.max_steps;
  if (!a.mode.empty()) {
    auto m = parse_fusion_mode(a.mode);
    if (!m) throw CliError("unknown fusion mode '" + a.mode + "'");
    config.model.mode = *m;
  }

  auto loaded = load_corpus_checked(files.corpus);
  SummaryTable summaries;
  if (!files.summaries.empty()) summaries = load_summaries(files.summaries);
  const auto& tags = TagVocabulary::standard();
  TokenVocabulary vocab = files.vocab.empty() ? build_token_vocab(loaded.records, summaries)
                                              : TokenVocabulary::load(files.vocab);
  config.model.vocab_size = static_cast<int>(vocab.size());
  config.model.encoder.num_tags = static_cast<int>(tags.size());
  config.validate();

  const auto train_set = prepare_examples(loaded.records, summaries, vocab, tags, config, Split::train);
  const auto val_set = prepare_examples(loaded.records, summaries, vocab, tags, config, Split::val);

  std::optional<Checkpoint> resume;
  const fs::path last_path = files.checkpoint + ".last";
  if (a.resume) {
    if (!fs::exists(last_path)) throw CliError("nothing to resume: " + last_path.string() + " does not exist");
    resume = load_checkpoint(last_path);
    if (!(resume->vocab == vocab)) throw CliError("resume checkpoint was trained with a different vocabulary");
  }

  std::string log_text;
  if (resume && fs::exists(files.log)) log_text = read_file(files.log);
  TrainOptions opts;
  opts.resume = resume ? &*resume : nullptr;
  opts.on_epoch = [&](const EpochRecord& r) {
    log_text += to_json(r).dump() + "\n";
    std::cerr << "epoch " << r.epoch << " loss " << r.train_loss << " val F1@3 " << r.val_f1_at_3 << " TL@3 "
              << r.val_tl_at_3 << "\n";
  };

  Checkpoint seeded;
  if (!files.embeddings.empty() && !resume) {
    // Pretrained vectors enter as a resume point at epoch 0.
    StoryTagger model(config.model, config.seed);
    const auto found = model.load_pretrained_embeddings(files.embeddings, vocab);
    std::cerr << "embeddings: " << found << " of " << vocab.size() << " tokens found\n";
    seeded.config = config;
    seeded.vocab = vocab;
    seeded.tags = tags;
    seeded.params = model.parameters();
    opts.resume = &seeded;
  }
  const auto result = train(train_set, val_set, config, vocab, tags, opts);

  save_checkpoint(result.best, files.checkpoint);
  save_checkpoint(result.last, last_path);
  write_atomic(files.log, log_text);
  std::cerr << "train: best epoch " << result.best.epoch << " -> " << files.checkpoint << "\n";
}

// ---------------------------------------------------------------------------

struct ModelInputs {
  HierDocument synopsis, review;
  std::size_t review_count = 0;
};

ModelInputs inputs_from_files(const Checkpoint& ckpt, const std::string& synopsis_file,
                              const std::string& reviews_file) {
  ModelInputs in;
  in.synopsis = segment_and_index(read_file(synopsis_file), ckpt.vocab, ckpt.config.synopsis_caps);
  std::string summary;
  if (!reviews_file.empty()) {
    const auto reviews = read_reviews(reviews_file);
    in.review_count = reviews.size();
    summary = summarize_reviews(reviews);
  }
  in.review = segment_and_index(summary, ckpt.vocab, ckpt.config.summary_caps);
  return in;
}

struct PredictArgs {
  std::string checkpoint, synopsis, reviews;
  int k = 5;
};

void cmd_predict(const PredictArgs& a) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  const auto in = inputs_from_files(ckpt, a.synopsis, a.reviews);
  const auto model = ckpt.model();
  const auto out = model.predict(in.synopsis, in.review);
  if (a.k < 1 || a.k > static_cast<int>(ckpt.tags.size())) throw CliError("k must be between 1 and the tag count");
  std::ostringstream text;
  for (auto t : top_k(out.tag_distribution, a.k)) {
    char prob[32];
    std::snprintf(prob, sizeof(prob), "%.6f", out.tag_distribution(static_cast<Eigen::Index>(t)));
    text << ckpt.tags.tag(t) << "\t" << prob << "\n";
  }
  std::cout << text.str();
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string checkpoint, corpus, summaries, out, predictions, compare, split = "test";
  bool most_frequent = false;
};

void cmd_evaluate(const EvaluateArgs& a) {
  auto loaded = load_corpus_checked(a.corpus);
  SummaryTable summaries;
  if (!a.summaries.empty()) summaries = load_summaries(a.summaries);
  const auto& tags = TagVocabulary::standard();
  const auto split = split_option(a.split);

  std::vector<TagSet> golds;
  std::vector<std::size_t> review_counts;
  for (const auto& r : loaded.records) {
    if (split && r.split != *split) continue;
    golds.push_back(tag_set_of(r.gold_tags, tags));
    review_counts.push_back(r.reviews.size());
  }
  if (golds.empty()) throw CliError("no records in split '" + a.split + "'");

  std::vector<std::vector<std::size_t>> rankings;
  EvalReport report;
  if (a.most_frequent) {
    const auto ranked = most_frequent_baseline(loaded.records, tags, 5);
    rankings.assign(golds.size(), ranked);
    report = evaluate_rankings(rankings, golds);
    // The baseline assigns its own top-k list at every k.
    for (int k : {3, 5}) {
      const auto top = make_tag_set(most_frequent_baseline(loaded.records, tags, k));
      std::vector<TagSet> preds(golds.size(), top);
      report.f1_at_k[k] = micro_f1(preds, golds);
      report.tl_at_k[k] = tags_learned(preds);
      report.predictions[k] = preds;
    }
  } else {
    if (a.checkpoint.empty()) throw CliError("evaluate needs --checkpoint or --most-frequent");
    const auto ckpt = load_checkpoint(a.checkpoint);
    const auto model = ckpt.model();
    const auto examples = prepare_examples(loaded.records, summaries, ckpt.vocab, tags, ckpt.config, split);
    const auto outputs = predict_examples(model, examples);
    for (const auto& o : outputs) rankings.push_back(top_k(o.tag_distribution, 5));
    report = evaluate_rankings(rankings, golds);
    if (ckpt.config.model.mode == FusionMode::gated) {
      report.gate = gate_activation_stats(outputs, [](std::size_t) { return true; });
    }
    if (!a.compare.empty()) {
      // Review-count analysis against a single-view checkpoint, at top-3.
      const auto other = load_checkpoint(a.compare);
      const auto other_examples =
          prepare_examples(loaded.records, summaries, other.vocab, tags, other.config, split);
      const auto other_out = predict_examples(other.model(), other_examples);
      std::vector<TagSet> mv, so;
      for (std::size_t i = 0; i < outputs.size(); ++i) {
        mv.push_back(make_tag_set(top_k(outputs[i].tag_distribution, 3)));
        so.push_back(make_tag_set(top_k(other_out[i].tag_distribution, 3)));
      }
      report.review_bins = analyze_by_review_count(mv, so, golds, review_counts);
    }
  }

  write_atomic(a.out, report_to_json(report, tags, false) + "\n");
  if (!a.predictions.empty()) {
    std::ostringstream dump;
    std::size_t i = 0;
    for (const auto& r : loaded.records) {
      if (split && r.split != *split) continue;
      json row{{"id", r.id}};
      for (const auto& [k, preds] : report.predictions) {
        json names = json::array();
        for (auto t : preds[i]) names.push_back(tags.tag(t));
        row["top" + std::to_string(k)] = names;
      }
      dump << row.dump() << "\n";
      ++i;
    }
    write_atomic(a.predictions, dump.str());
  }
  std::cerr << "evaluate: F1@3 " << report.f1_at_k.at(3) << " F1@5 " << report.f1_at_k.at(5) << " TL@3 "
            << report.tl_at_k.at(3) << " TL@5 " << report.tl_at_k.at(5) << "\n";
}

// ---------------------------------------------------------------------------

json mined_to_json(const std::string& id, const MinedTagset& mined) {
  json tags = json::array();
  for (const auto& c : mined.provenance)
    tags.push_back({{"tag", c.token}, {"gamma", c.gamma}, {"sentence", c.sentence_index}, {"word", c.word_index}});
  return {{"id", id}, {"cutoff", mined.cutoff}, {"tags", tags}};
}

struct MineArgs {
  std::string checkpoint, synopsis, reviews, corpus, summaries, out, split = "all";
};

void cmd_mine(const MineArgs& a) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  if (!has_review_view(ckpt.config.model.mode))
    throw CliError("mining reads review attention; use a concat or gated checkpoint");
  const auto model = ckpt.model();
  std::ostringstream out;
  if (!a.corpus.empty()) {
    auto loaded = load_corpus_checked(a.corpus);
    SummaryTable summaries;
    if (!a.summaries.empty()) summaries = load_summaries(a.summaries);
    const auto split = split_option(a.split);
    const auto examples = prepare_examples(loaded.records, summaries, ckpt.vocab, ckpt.tags, ckpt.config, split);
    for (const auto& e : examples) {
      if (e.review_count == 0 || is_placeholder_document(e.review)) continue;
      out << mined_to_json(e.id, mine_tags(model.predict(e.synopsis, e.review), e.review, ckpt.tags)).dump()
          << "\n";
    }
  } else {
    if (a.synopsis.empty()) throw CliError("mine needs --synopsis or --corpus");
    if (a.reviews.empty()) throw CliError("complementary tags require reviews");
    const auto in = inputs_from_files(ckpt, a.synopsis, a.reviews);
    if (in.review_count == 0) throw CliError("complementary tags require reviews");
    out << mined_to_json(fs::path(a.synopsis).stem().string(),
                         mine_tags(model.predict(in.synopsis, in.review), in.review, ckpt.tags))
               .dump()
        << "\n";
  }
  if (a.out.empty()) {
    std::cout << out.str();
  } else {
    write_atomic(a.out, out.str());
  }
}

// ---------------------------------------------------------------------------

struct ExportArgs {
  std::string checkpoint, movie_id, corpus, summaries, synopsis, reviews, out, html;
};

void cmd_export_attention(const ExportArgs& a) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  const auto model = ckpt.model();
  std::string id;
  ModelInputs in;
  if (!a.movie_id.empty()) {
    if (a.corpus.empty()) throw CliError("--movie-id needs --corpus");
    auto loaded = load_corpus_checked(a.corpus);
    SummaryTable summaries;
    if (!a.summaries.empty()) summaries = load_summaries(a.summaries);
    const auto& r = find_movie(loaded.records, a.movie_id);
    id = r.id;
    in.synopsis = segment_and_index(r.synopsis, ckpt.vocab, ckpt.config.synopsis_caps);
    in.review = segment_and_index(summary_for(summaries, r.id), ckpt.vocab, ckpt.config.summary_caps);
  } else {
    if (a.synopsis.empty()) throw CliError("export-attention needs --movie-id or --synopsis");
    id = fs::path(a.synopsis).stem().string();
    in = inputs_from_files(ckpt, a.synopsis, a.reviews);
  }
  const auto e = build_attention_export(id, model.predict(in.synopsis, in.review), in.synopsis, in.review, ckpt.tags);
  const fs::path html = a.html.empty() ? fs::path(a.out).replace_extension(".html") : fs::path(a.html);
  write_atomic(a.out, to_json(e).dump(2) + "\n");
  write_atomic(html, render_highlight_html(e));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"storytag: multi-view story tagging"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "build vocabularies, indexed documents and corpus statistics");
  p->add_option("--corpus", pre.corpus, "corpus file (JSON lines)")->required();
  p->add_option("--out", pre.out, "output directory")->required();
  p->add_option("--summaries", pre.summaries, "review summaries file");
  p->add_option("--min-doc-freq", pre.min_doc_freq, "minimum training document frequency")->check(CLI::PositiveNumber);

  SummarizeArgs sum;
  auto* s = app.add_subcommand("summarize", "summarize each movie's reviews with TextRank");
  s->add_option("--corpus", sum.corpus)->required();
  s->add_option("--out", sum.out, "summaries file (JSON lines)")->required();
  s->add_option("--ratio", sum.ratio, "fraction of sentences kept");
  s->add_option("--max-sentences", sum.max_sentences);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a tagger from a JSON configuration");
  t->add_option("--config", tr.config)->required();
  t->add_option("--seed", tr.seed, std::string("random seed (overrides ") + kSeedEnv + ")");
  t->add_option("--epochs", tr.epochs);
  t->add_option("--max-steps", tr.max_steps);
  t->add_option("--mode", tr.mode, "synopsis_only, merge_texts, concat or gated");
  t->add_flag("--resume", tr.resume, "continue from <checkpoint>.last");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "score top-3 and top-5 predictions");
  e->add_option("--checkpoint", ev.checkpoint);
  e->add_flag("--most-frequent", ev.most_frequent, "score the most-frequent-tags baseline instead");
  e->add_option("--corpus", ev.corpus)->required();
  e->add_option("--summaries", ev.summaries);
  e->add_option("--split", ev.split, "train, val, test or all");
  e->add_option("--out", ev.out, "report file (JSON)")->required();
  e->add_option("--predictions", ev.predictions, "per-instance predictions (JSON lines)");
  e->add_option("--compare", ev.compare, "synopsis-only checkpoint for the review-count analysis");

  PredictArgs pr;
  auto* d = app.add_subcommand("predict", "predict tags for one narrative");
  d->add_option("--checkpoint", pr.checkpoint)->required();
  d->add_option("--synopsis", pr.synopsis, "synopsis text file")->required();
  d->add_option("--reviews", pr.reviews, "reviews file, one review per line");
  d->add_option("-k", pr.k, "number of tags");

  MineArgs mi;
  auto* m = app.add_subcommand("mine", "mine complementary tags from review attention");
  m->add_option("--checkpoint", mi.checkpoint)->required();
  m->add_option("--synopsis", mi.synopsis);
  m->add_option("--reviews", mi.reviews);
  m->add_option("--corpus", mi.corpus, "mine every movie with reviews");
  m->add_option("--summaries", mi.summaries);
  m->add_option("--split", mi.split);
  m->add_option("--out", mi.out, "report file (JSON lines); stdout when omitted");

  ExportArgs ex;
  auto* x = app.add_subcommand("export-attention", "export attention weights and a highlight page");
  x->add_option("--checkpoint", ex.checkpoint)->required();
  x->add_option("--movie-id", ex.movie_id);
  x->add_option("--corpus", ex.corpus);
  x->add_option("--summaries", ex.summaries);
  x->add_option("--synopsis", ex.synopsis);
  x->add_option("--reviews", ex.reviews);
  x->add_option("--out", ex.out, "export file (JSON)")->required();
  x->add_option("--html", ex.html, "highlight page (default: --out with .html)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*p) cmd_preprocess(pre);
    if (*s) cmd_summarize(sum);
    if (*t) cmd_train(tr);
    if (*e) cmd_evaluate(ev);
    if (*d) cmd_predict(pr);
    if (*m) cmd_mine(mi);
    if (*x) cmd_export_attention(ex);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}

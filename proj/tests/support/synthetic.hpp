#pragma once

// Generators shared by unit and acceptance tests.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "storytag/corpus.hpp"
#include "storytag/han_encoder.hpp"
#include "storytag/multiview.hpp"
#include "storytag/summarizer.hpp"
#include "storytag/trainer.hpp"

namespace storytag::testing {

struct SyntheticSpec {
  int documents = 400;
  int held_out = 100;
  int planted_tags = 8;
  int tags_per_document = 3;
  int synopsis_keywords = 5;      // signature words per tag, synopsis view
  int keywords_per_document = 3;  // of those, planted per positive document
  int review_keywords = 3;        // signature words per tag, review view
  int sentences = 6;
  int words_per_sentence = 9;
  int filler_vocabulary = 150;
  std::uint64_t seed = 7;
};

inline std::string letters(int value, int width) {
  std::string s;
  for (int i = 0; i < width; ++i) {
    s.push_back(static_cast<char>('a' + value % 26));
    value /= 26;
  }
  return s;
}

/// Tag indices used for planting, spread over the standard vocabulary.
inline std::vector<std::size_t> planted_tag_indices(int count) {
  std::vector<std::size_t> out;
  for (int t = 0; t < count; ++t) out.push_back(static_cast<std::size_t>((t * 9 + 3) % 71));
  return out;
}

inline std::string synopsis_keyword(int tag, int k) { return "sig" + letters(tag, 1) + letters(k, 1); }
inline std::string review_keyword(int tag, int k) { return "rev" + letters(tag, 1) + letters(k, 1); }

inline std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

/// Text of `sentences` sentences of filler words with `planted` words spread
/// over random positions.
inline std::string planted_text(const std::vector<std::string>& planted, const SyntheticSpec& spec,
                                std::mt19937_64& rng) {
  std::uniform_int_distribution<int> filler(0, spec.filler_vocabulary - 1);
  std::vector<std::vector<std::string>> sentences(static_cast<std::size_t>(spec.sentences));
  for (auto& s : sentences) {
    for (int w = 0; w < spec.words_per_sentence; ++w) s.push_back("fill" + letters(filler(rng), 2));
  }
  std::uniform_int_distribution<int> pick_sentence(0, spec.sentences - 1);
  for (const auto& word : planted) {
    auto& s = sentences[static_cast<std::size_t>(pick_sentence(rng))];
    std::uniform_int_distribution<std::size_t> pos(0, s.size());
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(pos(rng)), word);
  }
  std::string text;
  for (auto& s : sentences) {
    s[0] = capitalize(s[0]);
    for (std::size_t i = 0; i < s.size(); ++i) text += (i ? " " : "") + s[i];
    text += ". ";
  }
  return text;
}

/// Corpus where each positive tag plants 3 of its 5 synopsis keywords and
/// its review keywords. The last `held_out` records form the test split.
inline std::vector<MovieRecord> synthetic_corpus(const SyntheticSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  const auto tag_ids = planted_tag_indices(spec.planted_tags);
  const auto& vocab = TagVocabulary::standard();
  std::vector<MovieRecord> records;
  for (int d = 0; d < spec.documents; ++d) {
    std::vector<int> tags(static_cast<std::size_t>(spec.planted_tags));
    for (int t = 0; t < spec.planted_tags; ++t) tags[static_cast<std::size_t>(t)] = t;
    std::shuffle(tags.begin(), tags.end(), rng);
    tags.resize(static_cast<std::size_t>(spec.tags_per_document));

    std::vector<std::string> syn_words;
    std::vector<std::string> rev_words;
    MovieRecord r;
    r.id = "m" + std::to_string(d);
    for (int t : tags) {
      r.gold_tags.push_back(vocab.tag(tag_ids[static_cast<std::size_t>(t)]));
      std::vector<int> ks(static_cast<std::size_t>(spec.synopsis_keywords));
      for (int k = 0; k < spec.synopsis_keywords; ++k) ks[static_cast<std::size_t>(k)] = k;
      std::shuffle(ks.begin(), ks.end(), rng);
      for (int k = 0; k < spec.keywords_per_document; ++k) syn_words.push_back(synopsis_keyword(t, ks[static_cast<std::size_t>(k)]));
      for (int k = 0; k < spec.review_keywords; ++k) rev_words.push_back(review_keyword(t, k));
    }
    r.synopsis = planted_text(syn_words, spec, rng);
    r.reviews.push_back(planted_text(rev_words, spec, rng));
    r.split = d >= spec.documents - spec.held_out ? Split::test : Split::train;
    records.push_back(std::move(r));
  }
  return records;
}

/// Random hierarchical document over ids [0, vocab).
inline HierDocument random_document(std::mt19937_64& rng, int vocab, int max_sentences, int max_words) {
  std::uniform_int_distribution<int> ns(1, max_sentences), nw(1, max_words), id(0, vocab - 1);
  HierDocument doc;
  doc.caps = {max_sentences, max_words};
  const int l = ns(rng);
  for (int i = 0; i < l; ++i) {
    std::vector<int> s;
    std::vector<std::string> toks;
    const int t = nw(rng);
    for (int j = 0; j < t; ++j) {
      s.push_back(id(rng));
      toks.push_back("w" + std::to_string(s.back()));
    }
    doc.sentences.push_back(std::move(s));
    doc.tokens.push_back(std::move(toks));
    doc.lengths.push_back(t);
  }
  return doc;
}

inline ModelConfig tiny_model_config(FusionMode mode, int num_tags = 7) {
  ModelConfig c;
  c.vocab_size = 20;
  c.mode = mode;
  c.encoder.embedding_dim = 4;
  c.encoder.hidden = 3;
  c.encoder.num_tags = num_tags;
  c.encoder.dropout = 0.0;
  c.encoder.batch_norm = true;
  c.embedding_init = 0.5;
  return c;
}

inline LabelTarget random_target(std::mt19937_64& rng, int num_tags) {
  std::uniform_int_distribution<int> count(1, std::min(3, num_tags));
  std::uniform_int_distribution<int> tag(0, num_tags - 1);
  Eigen::VectorXd t = Eigen::VectorXd::Zero(num_tags);
  const int n = count(rng);
  for (int i = 0; i < n; ++i) t(tag(rng)) = 1.0;
  t /= t.sum();
  return {t};
}

}  // namespace storytag::testing

namespace storytag::testing {

/// A small end-to-end setup: synthetic records, review summaries, token
/// vocabulary and a training config sized for unit tests.
struct SmallSetup {
  std::vector<MovieRecord> records;
  SummaryTable summaries;
  TokenVocabulary vocab;
  TrainingConfig config;
  std::vector<Example> train;
  std::vector<Example> test;
};

inline SmallSetup small_setup(const SyntheticSpec& spec, FusionMode mode, int embedding = 8, int hidden = 6) {
  SmallSetup s;
  s.records = synthetic_corpus(spec);
  for (const auto& r : s.records) s.summaries[r.id] = summarize_reviews(r.reviews, {0.5, 120, 0.85, 1e-6, 100});
  s.vocab = build_token_vocab(s.records, s.summaries, 2);
  const auto& tags = TagVocabulary::standard();
  s.config.model.mode = mode;
  s.config.model.vocab_size = static_cast<int>(s.vocab.size());
  s.config.model.encoder.embedding_dim = embedding;
  s.config.model.encoder.hidden = hidden;
  s.config.model.encoder.num_tags = static_cast<int>(tags.size());
  s.train = prepare_examples(s.records, s.summaries, s.vocab, tags, s.config, Split::train);
  s.test = prepare_examples(s.records, s.summaries, s.vocab, tags, s.config, Split::test);
  return s;
}

}  // namespace storytag::testing

#include "storytag/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "storytag/text.hpp"

namespace storytag {

using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "train";
}

std::optional<Split> parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val" || name == "validation" || name == "dev") return Split::val;
  if (name == "test") return Split::test;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// TagVocabulary

TagVocabulary::TagVocabulary(std::vector<std::string> tags) : tags_(std::move(tags)) {
  for (std::size_t i = 0; i < tags_.size(); ++i) {
    if (!index_.emplace(tags_[i], i).second) throw CorpusError("duplicate tag: " + tags_[i]);
  }
}

const TagVocabulary& TagVocabulary::standard() {
  static const TagVocabulary vocab({
      "absurd", "action", "adult comedy", "allegory", "alternate history", "alternate reality",
      "anti war", "atmospheric", "autobiographical", "avant garde", "blaxploitation", "bleak",
      "boring", "brainwashing", "christian film", "claustrophobic", "clever", "comedy", "comic",
      "cruelty", "cult", "cute", "dark", "depressing", "dramatic", "entertaining", "fantasy",
      "feel-good", "flashback", "good versus evil", "gothic", "grindhouse film", "haunting",
      "historical", "historical fiction", "home movie", "horror", "humor", "insanity", "inspiring",
      "intrigue", "magical realism", "melodrama", "murder", "mystery", "neo noir", "non fiction",
      "paranormal", "philosophical", "plot twist", "pornographic", "prank", "psychedelic",
      "psychological", "queer", "realism", "revenge", "romantic", "sadist", "satire", "sci-fi",
      "sentimental", "storytelling", "stupid", "suicidal", "suspenseful", "thought-provoking",
      "tragedy", "violence", "western", "whimsical",
  });
  return vocab;
}

std::optional<std::size_t> TagVocabulary::index_of(std::string_view tag) const {
  auto it = index_.find(std::string(tag));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void TagVocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write " + path.string());
  for (const auto& t : tags_) out << t << '\n';
  if (!out) throw CorpusError("write failed: " + path.string());
}

TagVocabulary TagVocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot read " + path.string());
  std::vector<std::string> tags;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) tags.push_back(line);
  }
  return TagVocabulary(std::move(tags));
}

// ---------------------------------------------------------------------------
// TokenVocabulary

TokenVocabulary::TokenVocabulary() : TokenVocabulary({}, 10) {}

TokenVocabulary::TokenVocabulary(std::vector<std::string> tokens, int min_doc_freq)
    : min_doc_freq_(min_doc_freq) {
  tokens_.emplace_back(kUnkToken);
  tokens_.emplace_back(kNumberToken);
  index_.emplace(tokens_[0], kUnkId);
  index_.emplace(tokens_[1], kNumberId);
  for (auto& t : tokens) {
    if (t.empty() || index_.contains(t)) continue;
    index_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(std::move(t));
  }
}

int TokenVocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

bool TokenVocabulary::contains(std::string_view token) const { return index_.contains(std::string(token)); }

void TokenVocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw CorpusError("write failed: " + path.string());
}

TokenVocabulary TokenVocabulary::load(const std::filesystem::path& path, int min_doc_freq) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot read " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  if (tokens.size() < 2 || tokens[0] != kUnkToken || tokens[1] != kNumberToken) {
    throw CorpusError("vocabulary file " + path.string() + " lacks the reserved ids 0 and 1");
  }
  tokens.erase(tokens.begin(), tokens.begin() + 2);
  return TokenVocabulary(std::move(tokens), min_doc_freq);
}

// ---------------------------------------------------------------------------
// Loading

namespace {

std::vector<std::string> read_tags(const json& value) {
  std::vector<std::string> out;
  auto add = [&](std::string tag) {
    auto b = tag.find_first_not_of(" \t");
    auto e = tag.find_last_not_of(" \t");
    if (b == std::string::npos) return;
    tag = tag.substr(b, e - b + 1);
    if (std::find(out.begin(), out.end(), tag) == out.end()) out.push_back(std::move(tag));
  };
  if (value.is_array()) {
    for (const auto& t : value) add(t.get<std::string>());
  } else if (value.is_string()) {
    std::stringstream ss(value.get<std::string>());
    std::string tag;
    while (std::getline(ss, tag, ',')) add(tag);
  } else {
    throw CorpusError("field 'tags' must be an array or a comma-separated string");
  }
  return out;
}

MovieRecord parse_record(const json& j, const TagVocabulary& tags) {
  for (const char* field : {"id", "synopsis", "tags", "split"}) {
    if (!j.contains(field)) throw CorpusError(std::string("missing required field '") + field + "'");
  }
  MovieRecord r;
  r.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
  r.synopsis = j.at("synopsis").get<std::string>();
  if (j.contains("reviews") && !j.at("reviews").is_null()) {
    for (const auto& rv : j.at("reviews")) r.reviews.push_back(rv.get<std::string>());
  }
  r.gold_tags = read_tags(j.at("tags"));
  if (r.gold_tags.empty()) throw CorpusError("empty gold tag set");
  for (const auto& t : r.gold_tags) {
    if (!tags.contains(t)) throw CorpusError("tag '" + t + "' is not in the tag vocabulary");
  }
  auto split = parse_split(j.at("split").get<std::string>());
  if (!split) throw CorpusError("unknown split '" + j.at("split").get<std::string>() + "'");
  r.split = *split;
  return r;
}

}  // namespace

LoadedCorpus parse_dataset(std::istream& in, const TagVocabulary& tags) {
  LoadedCorpus out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++out.report.lines;
    try {
      out.records.push_back(parse_record(json::parse(line), tags));
      ++out.report.accepted;
    } catch (const std::exception& e) {
      ++out.report.rejected;
      out.report.errors.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

LoadedCorpus load_dataset(const std::filesystem::path& path, const TagVocabulary& tags) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open corpus file " + path.string());
  return parse_dataset(in, tags);
}

// ---------------------------------------------------------------------------
// Vocabulary, indexing, labels

TokenVocabulary build_token_vocab(std::span<const MovieRecord> records, const SummaryTable& summaries,
                                  int min_doc_freq) {
  std::unordered_map<std::string, int> doc_freq;
  std::size_t train_docs = 0;
  auto count = [&](std::string_view text) {
    auto toks = normalize_text(text);
    std::set<std::string> distinct(toks.begin(), toks.end());
    for (const auto& t : distinct) ++doc_freq[t];
  };
  for (const auto& r : records) {
    if (r.split != Split::train) continue;
    ++train_docs;
    count(r.synopsis);
    if (auto it = summaries.find(r.id); it != summaries.end()) count(it->second);
  }
  if (train_docs == 0) throw CorpusError("cannot build a vocabulary from an empty training set");

  std::vector<std::pair<std::string, int>> kept;
  for (auto& [tok, df] : doc_freq) {
    if (df >= min_doc_freq && tok != kNumberToken && tok != TokenVocabulary::kUnkToken) kept.emplace_back(tok, df);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, df] : kept) tokens.push_back(std::move(tok));
  return TokenVocabulary(std::move(tokens), min_doc_freq);
}

int HierDocument::max_length() const {
  int m = 0;
  for (int l : lengths) m = std::max(m, l);
  return m;
}

HierDocument segment_and_index(std::string_view text, const TokenVocabulary& vocab, DocumentCaps caps) {
  if (caps.max_sentences <= 0 || caps.max_words <= 0) throw CorpusError("document caps must be positive");
  HierDocument doc;
  doc.caps = caps;
  for (const auto& sentence : split_sentences(text)) {
    if (static_cast<int>(doc.sentences.size()) >= caps.max_sentences) break;
    auto toks = normalize_text(sentence);
    if (toks.empty()) continue;
    if (static_cast<int>(toks.size()) > caps.max_words) toks.resize(static_cast<std::size_t>(caps.max_words));
    std::vector<int> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(vocab.id(t));
    doc.lengths.push_back(static_cast<int>(ids.size()));
    doc.sentences.push_back(std::move(ids));
    doc.tokens.push_back(std::move(toks));
  }
  if (doc.sentences.empty()) {
    doc.sentences.push_back({TokenVocabulary::kUnkId});
    doc.tokens.push_back({std::string(TokenVocabulary::kUnkToken)});
    doc.lengths.push_back(1);
  }
  return doc;
}

LabelTarget encode_labels(std::span<const std::string> gold_tags, const TagVocabulary& tags) {
  if (gold_tags.empty()) throw CorpusError("cannot encode an empty gold tag set");
  std::set<std::size_t> indices;
  for (const auto& t : gold_tags) {
    auto idx = tags.index_of(t);
    if (!idx) throw CorpusError("tag '" + t + "' is not in the tag vocabulary");
    indices.insert(*idx);
  }
  LabelTarget target{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(tags.size()))};
  const double mass = 1.0 / static_cast<double>(indices.size());
  for (auto i : indices) target.distribution(static_cast<Eigen::Index>(i)) = mass;
  return target;
}

// ---------------------------------------------------------------------------
// Stats and summaries

namespace {

struct TextCounts {
  std::size_t sentences = 0;
  std::size_t words = 0;
};

TextCounts count_text(std::string_view text) {
  TextCounts c;
  for (const auto& s : split_sentences(text)) {
    auto toks = normalize_text(s);
    auto words = std::count_if(toks.begin(), toks.end(), [](const auto& t) { return !is_punctuation_token(t); });
    if (toks.empty()) continue;
    ++c.sentences;
    c.words += static_cast<std::size_t>(words);
  }
  return c;
}

double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

}  // namespace

DatasetStats dataset_stats(std::span<const MovieRecord> records, const SummaryTable& summaries) {
  struct Acc {
    std::size_t n = 0, tags = 0, reviews = 0;
    TextCounts syn, sum;
    std::size_t sum_docs = 0;
  };
  std::map<Split, Acc> acc;
  for (const auto& r : records) {
    auto& a = acc[r.split];
    ++a.n;
    a.tags += r.gold_tags.size();
    a.reviews += r.reviews.size();
    auto s = count_text(r.synopsis);
    a.syn.sentences += s.sentences;
    a.syn.words += s.words;
    if (auto it = summaries.find(r.id); it != summaries.end()) {
      auto c = count_text(it->second);
      a.sum.sentences += c.sentences;
      a.sum.words += c.words;
      ++a.sum_docs;
    }
  }
  DatasetStats stats;
  for (const auto& [split, a] : acc) {
    SplitStats s;
    s.instances = a.n;
    s.tags_per_instance = ratio(static_cast<double>(a.tags), static_cast<double>(a.n));
    s.reviews_per_movie = ratio(static_cast<double>(a.reviews), static_cast<double>(a.n));
    s.synopsis_sentences_per_doc = ratio(static_cast<double>(a.syn.sentences), static_cast<double>(a.n));
    s.synopsis_words_per_sentence = ratio(static_cast<double>(a.syn.words), static_cast<double>(a.syn.sentences));
    s.summary_sentences_per_doc = ratio(static_cast<double>(a.sum.sentences), static_cast<double>(a.sum_docs));
    s.summary_words_per_sentence = ratio(static_cast<double>(a.sum.words), static_cast<double>(a.sum.sentences));
    stats.splits[split] = s;
  }
  return stats;
}

void save_summaries(const SummaryTable& summaries, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write " + path.string());
  for (const auto& [id, text] : summaries) out << json{{"id", id}, {"summary", text}}.dump() << '\n';
  if (!out) throw CorpusError("write failed: " + path.string());
}

SummaryTable load_summaries(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open summaries file " + path.string());
  SummaryTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = json::parse(line);
      table[j.at("id").get<std::string>()] = j.at("summary").get<std::string>();
    } catch (const std::exception& e) {
      throw CorpusError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return table;
}

std::string_view summary_for(const SummaryTable& summaries, const std::string& id) {
  auto it = summaries.find(id);
  return it == summaries.end() ? std::string_view{} : std::string_view{it->second};
}

}  // namespace storytag

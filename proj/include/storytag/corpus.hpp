#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace storytag {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { train, val, test };

std::string_view to_string(Split split);
std::optional<Split> parse_split(std::string_view name);

/// One tagged narrative: synopsis, raw reviews and gold tags.
struct MovieRecord {
  std::string id;
  std::string synopsis;
  std::vector<std::string> reviews;
  std::vector<std::string> gold_tags;  // distinct, in file order
  Split split = Split::train;
};

/// Review summaries keyed by movie id.
using SummaryTable = std::map<std::string, std::string>;

/// Closed tag set. Position in `tags()` is the output index of the model and
/// the tie-breaking order everywhere.
class TagVocabulary {
 public:
  static constexpr std::size_t kStandardSize = 71;

  TagVocabulary() = default;
  explicit TagVocabulary(std::vector<std::string> tags);

  /// The 71 story tags in their canonical (alphabetical) order.
  static const TagVocabulary& standard();

  std::size_t size() const { return tags_.size(); }
  const std::vector<std::string>& tags() const { return tags_; }
  const std::string& tag(std::size_t index) const { return tags_.at(index); }
  std::optional<std::size_t> index_of(std::string_view tag) const;
  bool contains(std::string_view tag) const { return index_of(tag).has_value(); }

  void save(const std::filesystem::path& path) const;
  static TagVocabulary load(const std::filesystem::path& path);

  bool operator==(const TagVocabulary& other) const { return tags_ == other.tags_; }

 private:
  std::vector<std::string> tags_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Token ↔ id mapping. Ids 0 (unknown) and 1 (number placeholder) are reserved.
class TokenVocabulary {
 public:
  static constexpr int kUnkId = 0;
  static constexpr int kNumberId = 1;
  static constexpr std::string_view kUnkToken = "<unk>";

  TokenVocabulary();
  TokenVocabulary(std::vector<std::string> tokens, int min_doc_freq);

  std::size_t size() const { return tokens_.size(); }
  int min_doc_freq() const { return min_doc_freq_; }
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// One token per line; line number is the id.
  void save(const std::filesystem::path& path) const;
  static TokenVocabulary load(const std::filesystem::path& path, int min_doc_freq = 10);

  bool operator==(const TokenVocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int min_doc_freq_ = 10;
};

struct DocumentCaps {
  int max_sentences = 50;
  int max_words = 25;
};

inline constexpr DocumentCaps kSynopsisCaps{50, 25};
inline constexpr DocumentCaps kSummaryCaps{120, 30};

/// A document as sentences of token ids. Sentences are stored unpadded;
/// `lengths[i] == sentences[i].size()` is the pre-padding length.
struct HierDocument {
  std::vector<std::vector<int>> sentences;
  std::vector<std::vector<std::string>> tokens;  // normalized surface form per position
  std::vector<int> lengths;
  DocumentCaps caps;

  std::size_t num_sentences() const { return sentences.size(); }
  int max_length() const;
};

/// Normalized target distribution over the tag vocabulary.
struct LabelTarget {
  Eigen::VectorXd distribution;
};

struct LoadReport {
  std::size_t lines = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::vector<std::string> errors;  // "line N: reason"
};

struct LoadedCorpus {
  std::vector<MovieRecord> records;
  LoadReport report;
};

/// Reads line-delimited JSON records {id, synopsis, reviews, tags, split}.
/// Bad lines are rejected and counted; unknown tags are rejected against
/// `tags`. Throws CorpusError only when the file cannot be read.
LoadedCorpus load_dataset(const std::filesystem::path& path,
                          const TagVocabulary& tags = TagVocabulary::standard());
LoadedCorpus parse_dataset(std::istream& in, const TagVocabulary& tags = TagVocabulary::standard());

/// Builds the token vocabulary from train-split synopses and review
/// summaries, keeping tokens found in at least `min_doc_freq` documents.
/// Records from other splits are ignored.
TokenVocabulary build_token_vocab(std::span<const MovieRecord> records, const SummaryTable& summaries,
                                  int min_doc_freq = 10);

/// Segments, normalizes, truncates and indexes one document. Text with no
/// sentences becomes a single unknown-token sentence.
HierDocument segment_and_index(std::string_view text, const TokenVocabulary& vocab, DocumentCaps caps);

LabelTarget encode_labels(std::span<const std::string> gold_tags, const TagVocabulary& tags);

struct SplitStats {
  std::size_t instances = 0;
  double tags_per_instance = 0.0;
  double reviews_per_movie = 0.0;
  double synopsis_sentences_per_doc = 0.0;
  double synopsis_words_per_sentence = 0.0;
  double summary_sentences_per_doc = 0.0;
  double summary_words_per_sentence = 0.0;
};

struct DatasetStats {
  std::map<Split, SplitStats> splits;
};

DatasetStats dataset_stats(std::span<const MovieRecord> records, const SummaryTable& summaries = {});

/// Summaries file: one {"id", "summary"} object per line.
void save_summaries(const SummaryTable& summaries, const std::filesystem::path& path);
SummaryTable load_summaries(const std::filesystem::path& path);

/// Looks up a summary, returning "" for movies without one.
std::string_view summary_for(const SummaryTable& summaries, const std::string& id);

}  // namespace storytag

#include "storytag/miner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "storytag/text.hpp"

namespace storytag {

std::vector<ScoredCandidate> importance_scores(const AttentionMap& attention, const HierDocument& doc) {
  const auto rows = static_cast<std::size_t>(attention.word_weights.rows());
  if (rows != doc.sentences.size() || static_cast<std::size_t>(attention.sentence_weights.size()) != rows ||
      attention.lengths.size() != rows) {
    throw std::invalid_argument("attention map does not match the document's sentence count");
  }
  std::vector<ScoredCandidate> out;
  for (std::size_t i = 0; i < rows; ++i) {
    const int len = doc.lengths[i];
    if (attention.lengths[i] != len || len > attention.word_weights.cols() ||
        doc.sentences[i].size() != static_cast<std::size_t>(len)) {
      throw std::invalid_argument("attention mask does not match sentence " + std::to_string(i));
    }
    const auto ri = static_cast<Eigen::Index>(i);
    for (int j = 0; j < len; ++j) {
      const double gamma = attention.word_weights(ri, j) * attention.sentence_weights(ri) * static_cast<double>(len);
      const auto& tok = doc.tokens.size() > i ? doc.tokens[i][static_cast<std::size_t>(j)]
                                              : std::string(TokenVocabulary::kUnkToken);
      out.push_back({tok, gamma, i, static_cast<std::size_t>(j)});
    }
  }
  return out;
}

double local_slope(std::span<const double> s, std::size_t p) {
  if (p < 2 || p + 2 >= s.size()) throw std::out_of_range("slope needs two neighbours on each side");
  return (-2.0 * s[p - 2] - s[p - 1] + s[p + 1] + 2.0 * s[p + 2]) / 10.0;
}

std::size_t cutoff_index(std::span<const double> sorted_scores, double threshold) {
  for (std::size_t i = 1; i < sorted_scores.size(); ++i) {
    if (sorted_scores[i] > sorted_scores[i - 1]) throw std::invalid_argument("scores must be sorted descending");
  }
  const auto n = sorted_scores.size();
  if (n < 5) return n;
  for (std::size_t p = 2; p + 2 < n; ++p) {
    if (std::abs(local_slope(sorted_scores, p)) < threshold) return p;
  }
  return n;
}

const std::unordered_set<std::string>& default_stoplist() {
  static const std::unordered_set<std::string> words = {
      "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "you're", "you've", "you'll", "you'd",
      "your", "yours", "yourself", "yourselves", "he", "him", "his", "himself", "she", "she's", "her", "hers",
      "herself", "it", "it's", "its", "itself", "they", "them", "their", "theirs", "themselves", "what", "which",
      "who", "whom", "this", "that", "that'll", "these", "those", "am", "is", "are", "was", "were", "be", "been",
      "being", "have", "has", "had", "having", "do", "does", "did", "doing", "a", "an", "the", "and", "but", "if",
      "or", "because", "as", "until", "while", "of", "at", "by", "for", "with", "about", "against", "between",
      "into", "through", "during", "before", "after", "above", "below", "to", "from", "up", "down", "in", "out",
      "on", "off", "over", "under", "again", "further", "then", "once", "here", "there", "when", "where", "why",
      "how", "all", "any", "both", "each", "few", "more", "most", "other", "some", "such", "no", "nor", "not",
      "only", "own", "same", "so", "than", "too", "very", "s", "t", "can", "will", "just", "don", "don't",
      "should", "should've", "now", "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren", "aren't", "couldn",
      "couldn't", "didn", "didn't", "doesn", "doesn't", "hadn", "hadn't", "hasn", "hasn't", "haven", "haven't",
      "isn", "isn't", "ma", "mightn", "mightn't", "mustn", "mustn't", "needn", "needn't", "shan", "shan't",
      "shouldn", "shouldn't", "wasn", "wasn't", "weren", "weren't", "won", "won't", "wouldn", "wouldn't",
  };
  return words;
}

MinedTagset mine_tags(const ModelOutput& output, const HierDocument& review, const TagVocabulary& tags,
                      const std::unordered_set<std::string>& stoplist) {
  if (!output.review) throw std::invalid_argument("mining needs a model output with a review view");
  MinedTagset mined;
  if (is_placeholder_document(review)) return mined;

  auto candidates = importance_scores(output.review->attention, review);
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const ScoredCandidate& a, const ScoredCandidate& b) { return a.gamma > b.gamma; });
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (const auto& c : candidates) scores.push_back(c.gamma);
  mined.cutoff = cutoff_index(scores);

  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < mined.cutoff; ++i) {
    const auto& c = candidates[i];
    const bool unknown = review.sentences[c.sentence_index][c.word_index] == TokenVocabulary::kUnkId;
    if (unknown || c.token == kNumberToken || is_punctuation_token(c.token) ||
        stoplist.contains(c.token) || tags.contains(c.token)) {
      continue;
    }
    if (!seen.insert(c.token).second) continue;
    mined.tags.push_back(c.token);
    mined.provenance.push_back(c);
  }
  return mined;
}

}  // namespace storytag

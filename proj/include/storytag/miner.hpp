#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "storytag/corpus.hpp"
#include "storytag/han_encoder.hpp"
#include "storytag/multiview.hpp"

namespace storytag {

struct ScoredCandidate {
  std::string token;
  double gamma = 0.0;
  std::size_t sentence_index = 0;
  std::size_t word_index = 0;
};

/// Complementary tags mined from review attention, best first.
struct MinedTagset {
  std::vector<std::string> tags;
  std::vector<ScoredCandidate> provenance;  // parallel to `tags`
  std::size_t cutoff = 0;                   // candidates kept before filtering
};

inline constexpr double kSlopeThreshold = 5e-3;

/// gamma_ij = word weight * sentence weight * sentence length, one candidate
/// per unmasked position, in document order.
std::vector<ScoredCandidate> importance_scores(const AttentionMap& attention, const HierDocument& doc);

/// Least-squares slope of the five points centred on `p`.
double local_slope(std::span<const double> sorted_scores, std::size_t p);

/// First position p >= 2 whose local slope magnitude is below `threshold`;
/// the list length when none is, or when fewer than 5 scores are given.
/// Throws std::invalid_argument on input that is not sorted descending.
std::size_t cutoff_index(std::span<const double> sorted_scores, double threshold = kSlopeThreshold);

/// English function words (the widely used NLTK list).
const std::unordered_set<std::string>& default_stoplist();

/// Ranks review words by importance, cuts at the slope knee, drops stop
/// words, punctuation, placeholders and predefined tags, then removes
/// duplicates keeping the highest-scoring occurrence.
MinedTagset mine_tags(const ModelOutput& output, const HierDocument& review, const TagVocabulary& tags,
                      const std::unordered_set<std::string>& stoplist = default_stoplist());

}  // namespace storytag

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace storytag {

struct SummaryConfig {
  double target_ratio = 0.2;
  int max_sentences = 120;
  double damping = 0.85;
  double tol = 1e-6;
  int max_iter = 100;

  void validate() const;
};

/// Similarity of two tokenized sentences: shared distinct tokens over
/// ln|s1| + ln|s2|. Zero when the denominator is not positive.
double sentence_similarity(const std::vector<std::string>& s1, const std::vector<std::string>& s2);

/// Undirected weighted sentence graph with a cached weight matrix.
class SentenceGraph {
 public:
  explicit SentenceGraph(std::vector<std::vector<std::string>> nodes);
  /// Graph over an explicit weight matrix (symmetric, non-negative, zero diagonal).
  explicit SentenceGraph(Eigen::MatrixXd weights);

  Eigen::Index size() const { return weights_.rows(); }
  const Eigen::MatrixXd& weights() const { return weights_; }
  const std::vector<std::vector<std::string>>& nodes() const { return nodes_; }

 private:
  std::vector<std::vector<std::string>> nodes_;
  Eigen::MatrixXd weights_;
};

/// Weighted PageRank from a uniform start:
///   s_i = (1 - d) / n + d * sum_j w_ji / (sum_k w_jk) * s_j
/// Nodes without edges keep (1 - d) / n. A single node scores 1.
Eigen::VectorXd pagerank(const SentenceGraph& graph, const SummaryConfig& config = {});

/// Indices of the sentences a TextRank summary keeps, in input order.
/// Exact duplicates (same token sequence) share the node of their first
/// occurrence; empty sentences never get selected.
std::vector<std::size_t> select_summary_sentences(const std::vector<std::vector<std::string>>& sentences,
                                                  const SummaryConfig& config = {});

/// Extractive summary of all reviews of one movie, one sentence per line in
/// original order. An empty review list gives "".
std::string summarize_reviews(const std::vector<std::string>& reviews, const SummaryConfig& config = {});

}  // namespace storytag

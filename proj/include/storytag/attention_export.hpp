#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "storytag/corpus.hpp"
#include "storytag/multiview.hpp"

namespace storytag {

struct ExportedSentence {
  double weight = 0.0;
  std::vector<std::string> tokens;
  std::vector<double> word_weights;
  std::optional<std::string> top_tag;  // most probable tag of this sentence's own prediction
};

struct ExportedView {
  std::string name;  // "synopsis", "review" or "merged"
  std::vector<ExportedSentence> sentences;
};

/// Attention highlight data for one movie.
struct AttentionExport {
  std::string movie_id;
  std::vector<ExportedView> views;
};

AttentionExport build_attention_export(const std::string& movie_id, const ModelOutput& output,
                                       const HierDocument& synopsis, const HierDocument& review,
                                       const TagVocabulary& tags);

nlohmann::json to_json(const AttentionExport& e);
AttentionExport attention_export_from_json(const nlohmann::json& j);

/// Self-contained HTML page shading each word by its weight divided by the
/// largest word weight of its view.
std::string render_highlight_html(const AttentionExport& e);

}  // namespace storytag

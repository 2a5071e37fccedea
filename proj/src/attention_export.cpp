#include "storytag/attention_export.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace storytag {

using nlohmann::json;

namespace {

ExportedView export_view(std::string name, const DocumentEncoding& enc, const HierDocument& doc,
                         const TagVocabulary& tags) {
  if (static_cast<std::size_t>(enc.attention.sentence_weights.size()) != doc.sentences.size()) {
    throw std::invalid_argument("encoding does not match document for view " + name);
  }
  ExportedView view{std::move(name), {}};
  for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
    const auto ri = static_cast<Eigen::Index>(i);
    ExportedSentence s;
    s.weight = enc.attention.sentence_weights(ri);
    s.tokens = doc.tokens[i];
    for (int j = 0; j < doc.lengths[i]; ++j) s.word_weights.push_back(enc.attention.word_weights(ri, j));
    Eigen::Index best = 0;
    enc.sentence_predictions.col(ri).maxCoeff(&best);
    s.top_tag = tags.tag(static_cast<std::size_t>(best));
    view.sentences.push_back(std::move(s));
  }
  return view;
}

std::string escape_html(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out.push_back(c);
    }
  }
  return out;
}

}  // namespace

AttentionExport build_attention_export(const std::string& movie_id, const ModelOutput& output,
                                       const HierDocument& synopsis, const HierDocument& review,
                                       const TagVocabulary& tags) {
  AttentionExport e;
  e.movie_id = movie_id;
  if (output.mode == FusionMode::merge_texts) {
    e.views.push_back(export_view("merged", output.synopsis, merge_documents(synopsis, review), tags));
  } else {
    e.views.push_back(export_view("synopsis", output.synopsis, synopsis, tags));
  }
  if (output.review) e.views.push_back(export_view("review", *output.review, review, tags));
  return e;
}

json to_json(const AttentionExport& e) {
  json views = json::array();
  for (const auto& v : e.views) {
    json sentences = json::array();
    for (const auto& s : v.sentences) {
      json js{{"weight", s.weight}, {"tokens", s.tokens}, {"word_weights", s.word_weights}};
      if (s.top_tag) js["top_tag"] = *s.top_tag;
      sentences.push_back(std::move(js));
    }
    views.push_back({{"view", v.name}, {"sentences", std::move(sentences)}});
  }
  return {{"movie_id", e.movie_id}, {"views", std::move(views)}};
}

AttentionExport attention_export_from_json(const json& j) {
  AttentionExport e;
  e.movie_id = j.at("movie_id").get<std::string>();
  for (const auto& jv : j.at("views")) {
    ExportedView v;
    v.name = jv.at("view").get<std::string>();
    for (const auto& js : jv.at("sentences")) {
      ExportedSentence s;
      s.weight = js.at("weight").get<double>();
      s.tokens = js.at("tokens").get<std::vector<std::string>>();
      s.word_weights = js.at("word_weights").get<std::vector<double>>();
      if (s.tokens.size() != s.word_weights.size()) throw std::invalid_argument("token and weight counts differ");
      if (js.contains("top_tag")) s.top_tag = js.at("top_tag").get<std::string>();
      v.sentences.push_back(std::move(s));
    }
    e.views.push_back(std::move(v));
  }
  return e;
}

std::string render_highlight_html(const AttentionExport& e) {
  std::ostringstream html;
  html << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" << escape_html(e.movie_id)
       << "</title>\n<style>body{font-family:sans-serif;max-width:60em;margin:2em auto;line-height:1.8}"
          ".s{display:block;margin:.3em 0;padding-left:.5em;border-left:.6em solid}"
          ".tag{font-size:.75em;color:#555;margin-left:.5em}</style></head><body>\n";
  html << "<h1>" << escape_html(e.movie_id) << "</h1>\n";
  char color[64];
  for (const auto& v : e.views) {
    double max_word = 0.0;
    double max_sentence = 0.0;
    for (const auto& s : v.sentences) {
      max_sentence = std::max(max_sentence, s.weight);
      for (double w : s.word_weights) max_word = std::max(max_word, w);
    }
    html << "<h2>" << escape_html(v.name) << "</h2>\n<div>\n";
    for (const auto& s : v.sentences) {
      const double si = max_sentence > 0 ? s.weight / max_sentence : 0.0;
      std::snprintf(color, sizeof(color), "rgba(30,90,200,%.3f)", si);
      html << "<span class=\"s\" style=\"border-color:" << color << "\" title=\"" << s.weight << "\">";
      for (std::size_t k = 0; k < s.tokens.size(); ++k) {
        const double wi = max_word > 0 ? s.word_weights[k] / max_word : 0.0;
        std::snprintf(color, sizeof(color), "rgba(230,60,40,%.3f)", wi);
        html << "<span style=\"background:" << color << "\" title=\"" << s.word_weights[k] << "\">"
             << escape_html(s.tokens[k]) << "</span> ";
      }
      if (s.top_tag) html << "<span class=\"tag\">[" << escape_html(*s.top_tag) << "]</span>";
      html << "</span>\n";
    }
    html << "</div>\n";
  }
  html << "</body></html>\n";
  return html.str();
}

}  // namespace storytag

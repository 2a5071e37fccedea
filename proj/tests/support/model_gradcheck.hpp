#pragma once

// Finite-difference check of the full tagger on the tiny configuration.

#include <map>
#include <random>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "storytag/multiview.hpp"
#include "synthetic.hpp"

namespace storytag::testing {

struct ModelGradResult {
  std::map<std::string, double> per_tensor;  // max relative error per tensor
  double worst = 0.0;
  std::string worst_entry;
};

/// Mean KL over a batch of `docs` random documents (vocab 20, d_emb 4, H 3,
/// at most 2 sentences of 3 words), batch norm in training mode, no dropout.
inline ModelGradResult model_gradient_check(FusionMode mode, std::uint64_t seed, int docs = 3, int num_tags = 7) {
  auto config = tiny_model_config(mode, num_tags);
  StoryTagger model(config, seed);
  std::mt19937_64 rng(seed + 1);
  std::vector<HierDocument> syn, rev;
  Eigen::MatrixXd targets(num_tags, docs);
  for (int d = 0; d < docs; ++d) {
    syn.push_back(random_document(rng, config.vocab_size, 2, 3));
    rev.push_back(random_document(rng, config.vocab_size, 2, 3));
    targets.col(d) = random_target(rng, num_tags).distribution;
  }
  std::vector<ModelInput> batch;
  for (int d = 0; d < docs; ++d) batch.push_back({&syn[static_cast<std::size_t>(d)], &rev[static_cast<std::size_t>(d)]});

  auto loss = [&](nn::Tape& tape) {
    auto pass = model.forward(tape, batch, true, nullptr);
    return nn::scale(nn::kl_divergence(pass.probabilities, targets), 1.0 / docs);
  };

  ModelGradResult result;
  for (auto& [name, p] : model.parameters().items()) {
    if (!p.trainable) continue;
    // Perturbing an unused tensor (the review encoder in single-view modes)
    // must leave the loss unchanged, so every tensor is checked.
    auto r = check_gradients(loss, {{name, &p}});
    result.per_tensor[name] = r.max_rel_error;
    if (r.max_rel_error >= result.worst) {
      result.worst = r.max_rel_error;
      result.worst_entry = r.worst;
    }
  }
  return result;
}

}  // namespace storytag::testing

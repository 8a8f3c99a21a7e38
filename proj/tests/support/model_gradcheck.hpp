#pragma once

#include <vector>

#include "acrec/nn/gradcheck.hpp"
#include "acrec/train.hpp"
#include "small_workspace.hpp"

namespace acrec::fixture {

// BPR loss of a double-precision model over one query, its positive and
// `n_neg` unread negatives.
inline nn::GradCheckReport model_grad_check(pipeline::Workspace& ws, const ModelConfig& config,
                                            std::size_t samples_per_param, int n_neg = 3) {
  auto model = make_model<double>(config, 7);
  const auto& queries = ws.queries(Split::train);
  const Query& q = queries.at(queries.size() / 2);
  Rng neg_rng(13);
  auto negatives = train::sample_negatives(q, n_neg, ws.store.n_books(), neg_rng);
  std::vector<int> candidates = {q.positive};
  candidates.insert(candidates.end(), negatives.begin(), negatives.end());
  auto loss = [&] {
    Rng rng(0);
    return train::bpr_loss(model->forward(ws.store, q, candidates, false, rng));
  };
  return nn::grad_check(loss, model->params(), {1e-5, samples_per_param, 17});
}

}  // namespace acrec::fixture

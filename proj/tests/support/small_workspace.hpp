#pragma once

#include "acrec/pipeline.hpp"

namespace acrec::fixture {

inline synth::SynthConfig small_synth(std::uint64_t seed = 1) {
  synth::SynthConfig c;
  c.n_books = 160;
  c.n_users = 8;
  c.seed = seed;
  return c;
}

inline embed::EmbeddingProviderConfig small_provider(int dim = 32) {
  embed::EmbeddingProviderConfig p;
  p.kind = embed::ProviderKind::hash;
  p.dim = dim;
  return p;
}

inline pipeline::Workspace small_workspace(std::uint64_t seed = 1, int dim = 32) {
  return pipeline::synthetic_workspace(small_synth(seed), small_provider(dim));
}

// Toy dimensions: d_hidden = 3 * d_proj + d_rating.
inline ModelConfig toy_model(int d_raw, ModelKind kind = ModelKind::acrec) {
  ModelConfig m;
  m.kind = kind;
  m.d_raw = d_raw;
  m.d_proj = 4;
  m.d_rating = 4;
  m.d_hidden = 16;
  m.blocks = 2;
  m.heads = 2;
  m.ffn_inner = 12;
  m.window = 4;
  m.d_ac = 4;
  m.fcn_hidden = {8, 6};
  m.fcn_proj = {3, 4, 4};
  m.fcn_width = 8;
  m.dropout = 0.0;
  return m;
}

}  // namespace acrec::fixture

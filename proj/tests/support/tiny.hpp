#pragma once

// Small datasets and configs that train in milliseconds per step.

#include "dino/data.hpp"
#include "dino/trainer.hpp"

namespace dino::test {

inline ToyDomainSpec tiny_toy(ToyDirection d = ToyDirection::informative_target) {
  ToyDomainSpec s;
  s.image_size = 16;
  s.grid = 2;
  s.colors = 2;
  s.shapes = 2;
  s.textures = 2;
  s.direction = d;
  return s;
}

inline TrainConfig tiny_config(TrainMode mode = TrainMode::unidirectional) {
  TrainConfig c;
  c.mode = mode;
  c.encoder_layers = 3;
  c.base_width = 2;
  c.branch_layer = 2;
  c.batch_size = 4;
  c.steps = 6;
  c.checkpoint_every = 3;
  c.learning_rate = 1e-3;
  return c;
}

inline TrainState tiny_state(const TrainConfig& cfg, const PairedDataset& data) {
  const auto s = data.get(0);
  return make_train_state(cfg, static_cast<int>(s.x.size(0)), static_cast<int>(s.y.size(0)),
                          static_cast<int>(s.x.size(-1)));
}

inline Batch tiny_batch(const PairedDataset& data, std::int64_t step = 0, int batch = 4) {
  return make_batch(data, batch_indices(data.train_indices(), batch, 0, step));
}

}  // namespace dino::test

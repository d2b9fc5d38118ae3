#pragma once

#include "micas/config.hpp"

// A run small enough to train end to end in well under a second.
inline micas::RunConfig tiny_run_config() {
  micas::RunConfig c = micas::RunConfig::desk();
  c.points = 32;
  c.centers = 4;
  c.patch_size = 4;
  c.candidates = 4;
  c.d1 = 8;
  c.d2 = 8;
  c.hidden = 8;
  c.sampler_epochs = 3;
  c.sampler_batch = 2;
  c.ranker_epochs = 3;
  c.ranker_batch = 2;
  c.train_per_level = 1;
  c.test_per_level = 1;
  c.bank_per_task = 6;
  c.levels = {1, 3};
  c.seed = 17;
  return c;
}

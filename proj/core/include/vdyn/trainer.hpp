#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "vdyn/corpus.hpp"
#include "vdyn/model.hpp"
#include "vdyn/rng.hpp"

namespace vdyn {

struct TrainOptions {
  int steps = 1000;
  int batch_size = 32;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double warmup_frac = 0.1;  // linear warmup, then linear decay to zero
  int log_every = 50;
};

struct TrainLogRow {
  std::int64_t step = 0;  // 1-based, equals optimizer step count after the update
  double loss = 0.0;
  double lr = 0.0;
  long long clamped = 0;  // occurrence floor hits in this step's forward pass
};

// Minibatch MLE driver. Batches are drawn with replacement, so an interrupted
// run resumed from a checkpoint (parameters, Adam moments, step count, RNG
// state) replays the exact remaining schedule.
class Trainer {
 public:
  Trainer(TrainableModel& model, const std::vector<Sample>& data, TrainOptions opt,
          std::uint64_t seed);

  // Runs optimizer steps until the model's step counter reaches until_step.
  void run(std::int64_t until_step,
           const std::function<void(const TrainLogRow&)>& on_log = {});
  void run(const std::function<void(const TrainLogRow&)>& on_log = {});

  double lr_at(std::int64_t step_index) const;  // 0-based index of the upcoming step
  double last_loss() const { return last_loss_; }

  Rng& rng() { return rng_; }

 private:
  TrainableModel& model_;
  const std::vector<Sample>& data_;
  TrainOptions opt_;
  Rng rng_;
  double last_loss_ = 0.0;
};

}  // namespace vdyn

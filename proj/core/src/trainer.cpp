#include "vdyn/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "vdyn/errors.hpp"
#include "vdyn/tape.hpp"

namespace vdyn {

Trainer::Trainer(TrainableModel& model, const std::vector<Sample>& data,
                 TrainOptions opt, std::uint64_t seed)
    : model_(model), data_(data), opt_(opt), rng_(seed) {
  // steps == 0 is allowed: it produces a checkpoint of the initialization.
  if (opt_.steps < 0) throw config_error("trainer: steps must be >= 0");
  if (opt_.batch_size < 1) throw config_error("trainer: batch_size must be >= 1");
  if (data_.empty()) throw data_error("trainer: no training samples");
}

double Trainer::lr_at(std::int64_t step_index) const {
  const std::int64_t total = opt_.steps;
  std::int64_t warm = static_cast<std::int64_t>(std::ceil(opt_.warmup_frac * total));
  warm = std::max<std::int64_t>(warm, 1);
  warm = std::min(warm, total);
  double mult;
  if (step_index < warm) {
    mult = static_cast<double>(step_index + 1) / static_cast<double>(warm);
  } else if (step_index >= total) {
    mult = 0.0;
  } else if (total == warm) {
    mult = 1.0;
  } else {
    mult = static_cast<double>(total - step_index) / static_cast<double>(total - warm);
  }
  return opt_.lr * mult;
}

void Trainer::run(std::int64_t until_step,
                  const std::function<void(const TrainLogRow&)>& on_log) {
  ParameterStore& store = model_.params();
  while (store.step() < until_step) {
    const std::int64_t step_index = store.step();  // 0-based
    std::vector<const Sample*> batch(opt_.batch_size);
    for (int b = 0; b < opt_.batch_size; b++) {
      batch[b] = &data_[rng_.uniform_int(data_.size())];
    }

    Graph g;
    ForwardStats stats;
    NodeId loss = model_.loss_node(g, batch, &stats);
    const double loss_value = g.value(loss).data[0];

    store.zero_grads();
    g.backward(loss);
    const double lr = lr_at(step_index);
    store.adam_step(lr, opt_.beta1, opt_.beta2, opt_.eps);

    last_loss_ = loss_value;
    const std::int64_t done = store.step();
    if (on_log && (done % opt_.log_every == 0 || done == until_step || done == 1)) {
      on_log(TrainLogRow{done, loss_value, lr, stats.clamped});
    }
  }
}

void Trainer::run(const std::function<void(const TrainLogRow&)>& on_log) {
  run(opt_.steps, on_log);
}

}  // namespace vdyn

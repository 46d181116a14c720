#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vdyn/tensor.hpp"

namespace vdyn {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
};

// Owns every trainable array of a model plus the Adam state. Params live at
// stable addresses (unique_ptr per entry) so graphs can hold Param* across
// later insertions.
class ParameterStore {
 public:
  Param& add(const std::string& name, Tensor init);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Param*> all();
  std::vector<const Param*> all() const;
  std::size_t count() const { return items_.size(); }
  std::size_t numel() const;

  void zero_grads();

  // One optimizer step over every param; lr arrives pre-multiplied by any
  // schedule. Standard bias-corrected Adam.
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

 private:
  std::vector<std::unique_ptr<Param>> items_;
  std::map<std::string, std::size_t> index_;
  std::int64_t step_ = 0;
};

// Binary checkpoint: magic "VDM1", then the canonical config echo, then the
// named float64 arrays (little-endian, key-sorted). Exact layout in README.
struct Checkpoint {
  std::string config_echo;
  std::map<std::string, Tensor> arrays;
};

void save_checkpoint(const ParameterStore& store, const std::string& config_echo,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Copies arrays back into an already-constructed store; shapes and the full
// name set must match (value/adam_m/adam_v per param plus optim.step).
void restore_params(ParameterStore& store, const Checkpoint& ckpt);

}  // namespace vdyn

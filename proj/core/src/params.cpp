#include "vdyn/params.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "vdyn/detail/binio.hpp"
#include "vdyn/errors.hpp"

namespace vdyn {

Param& ParameterStore::add(const std::string& name, Tensor init) {
  if (index_.count(name))
    throw std::invalid_argument("ParameterStore: duplicate param '" + name + "'");
  auto p = std::make_unique<Param>();
  p->name = name;
  p->grad = Tensor::zeros(init.shape);
  p->adam_m = Tensor::zeros(init.shape);
  p->adam_v = Tensor::zeros(init.shape);
  p->value = std::move(init);
  index_[name] = items_.size();
  items_.push_back(std::move(p));
  return *items_.back();
}

Param& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::invalid_argument("ParameterStore: no param '" + name + "'");
  return *items_[it->second];
}

const Param& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::invalid_argument("ParameterStore: no param '" + name + "'");
  return *items_[it->second];
}

bool ParameterStore::contains(const std::string& name) const {
  return index_.count(name) != 0;
}

std::vector<Param*> ParameterStore::all() {
  std::vector<Param*> out;
  out.reserve(items_.size());
  for (auto& p : items_) out.push_back(p.get());
  return out;
}

std::vector<const Param*> ParameterStore::all() const {
  std::vector<const Param*> out;
  out.reserve(items_.size());
  for (auto& p : items_) out.push_back(p.get());
  return out;
}

std::size_t ParameterStore::numel() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p->value.size();
  return n;
}

void ParameterStore::zero_grads() {
  for (auto& p : items_)
    std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

void ParameterStore::adam_step(double lr, double beta1, double beta2, double eps) {
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  for (auto& p : items_) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      p->adam_m[i] = beta1 * p->adam_m[i] + (1.0 - beta1) * g;
      p->adam_v[i] = beta2 * p->adam_v[i] + (1.0 - beta2) * g * g;
      const double mhat = p->adam_m[i] / bc1;
      const double vhat = p->adam_v[i] / bc2;
      p->value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

namespace {

using detail::read_f64;
using detail::read_u32;
using detail::write_f64;
using detail::write_u32;

constexpr char kModelMagic[4] = {'V', 'D', 'M', '1'};

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::string& config_echo,
                     const std::string& path) {
  std::map<std::string, const Tensor*> arrays;
  for (const Param* p : store.all()) {
    arrays[p->name] = &p->value;
    arrays[p->name + ".adam_m"] = &p->adam_m;
    arrays[p->name + ".adam_v"] = &p->adam_v;
  }
  const Tensor step_t = Tensor::scalar(static_cast<double>(store.step()));
  arrays["optim.step"] = &step_t;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot open checkpoint for writing: " + path);
  os.write(kModelMagic, 4);
  write_u32(os, static_cast<std::uint32_t>(config_echo.size()));
  os.write(config_echo.data(), static_cast<std::streamsize>(config_echo.size()));
  write_u32(os, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, t] : arrays) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t->shape.size()));
    for (std::size_t d : t->shape) write_u32(os, static_cast<std::uint32_t>(d));
    for (double v : t->data) write_f64(os, v);
  }
  if (!os) throw data_error("write failed for checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kModelMagic, 4) != 0)
    throw data_error("not a model checkpoint (bad magic): " + path);

  Checkpoint ckpt;
  const std::uint32_t echo_len = read_u32(is);
  ckpt.config_echo.resize(echo_len);
  is.read(ckpt.config_echo.data(), echo_len);
  const std::uint32_t n_arrays = read_u32(is);
  for (std::uint32_t a = 0; a < n_arrays && is; ++a) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t ndim = read_u32(is);
    std::vector<std::size_t> shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) shape[d] = read_u32(is);
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = read_f64(is);
    ckpt.arrays.emplace(std::move(name), std::move(t));
  }
  if (!is) throw data_error("truncated checkpoint: " + path);
  return ckpt;
}

void restore_params(ParameterStore& store, const Checkpoint& ckpt) {
  auto fetch = [&](const std::string& name) -> const Tensor& {
    auto it = ckpt.arrays.find(name);
    if (it == ckpt.arrays.end())
      throw data_error("checkpoint is missing array '" + name + "'");
    return it->second;
  };
  std::size_t used = 0;
  for (Param* p : store.all()) {
    for (auto [suffix, dst] : {std::pair{std::string{}, &p->value},
                               std::pair{std::string{".adam_m"}, &p->adam_m},
                               std::pair{std::string{".adam_v"}, &p->adam_v}}) {
      const Tensor& src = fetch(p->name + suffix);
      if (src.shape != dst->shape)
        throw data_error("checkpoint array '" + p->name + suffix + "' has shape " +
                         src.shape_string() + ", model expects " + dst->shape_string());
      *dst = src;
      ++used;
    }
  }
  store.set_step(static_cast<std::int64_t>(fetch("optim.step")[0]));
  ++used;
  if (used != ckpt.arrays.size())
    throw data_error("checkpoint has arrays the model does not declare");
}

}  // namespace vdyn

#include "dopacast/nn/checkpoint.hpp"

#include <cstring>

#include "dopacast/errors.hpp"

namespace dopacast::nn {

NamedTensor to_named(const std::string& name, const torch::Tensor& tensor) {
  auto t = tensor.detach().cpu().contiguous();
  NamedTensor out;
  out.name = name;
  if (t.scalar_type() == torch::kFloat64) {
    out.dtype = "float64";
  } else {
    t = t.to(torch::kFloat32);
    out.dtype = "float32";
  }
  out.shape.assign(t.sizes().begin(), t.sizes().end());
  out.bytes.resize(static_cast<std::size_t>(t.numel()) * t.element_size());
  if (!out.bytes.empty()) std::memcpy(out.bytes.data(), t.data_ptr(), out.bytes.size());
  return out;
}

torch::Tensor from_named(const NamedTensor& named) {
  const auto dtype = named.dtype == "float64" ? torch::kFloat64 : torch::kFloat32;
  auto t = torch::empty(named.shape, torch::TensorOptions().dtype(dtype));
  if (static_cast<std::size_t>(t.numel()) * t.element_size() != named.bytes.size()) {
    throw IoError("tensor '" + named.name + "': byte count does not match its shape");
  }
  if (!named.bytes.empty()) std::memcpy(t.data_ptr(), named.bytes.data(), named.bytes.size());
  return t;
}

std::vector<NamedTensor> module_tensors(const torch::nn::Module& module, const std::string& prefix) {
  std::vector<NamedTensor> out;
  for (const auto& p : module.named_parameters()) out.push_back(to_named(prefix + p.key(), p.value()));
  for (const auto& b : module.named_buffers()) out.push_back(to_named(prefix + b.key(), b.value()));
  return out;
}

void load_module_tensors(torch::nn::Module& module, const Container& container, const std::string& prefix) {
  torch::NoGradGuard no_grad;
  auto load = [&](const std::string& key, torch::Tensor& target) {
    const auto* named = container.find(prefix + key);
    if (named == nullptr) throw IoError("checkpoint is missing tensor '" + prefix + key + "'");
    auto t = from_named(*named);
    if (!t.sizes().equals(target.sizes())) throw IoError("checkpoint tensor '" + prefix + key + "' has the wrong shape");
    target.copy_(t);
  };
  for (auto& p : module.named_parameters()) load(p.key(), p.value());
  for (auto& b : module.named_buffers()) load(b.key(), b.value());
}

void append(std::vector<NamedTensor>& into, std::vector<NamedTensor> more) {
  for (auto& t : more) into.push_back(std::move(t));
}

}  // namespace dopacast::nn

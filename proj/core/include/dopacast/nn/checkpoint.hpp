#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "dopacast/io.hpp"

namespace dopacast::nn {

NamedTensor to_named(const std::string& name, const torch::Tensor& tensor);
torch::Tensor from_named(const NamedTensor& named);

/// Parameters and buffers of `module`, names prefixed with `prefix`.
std::vector<NamedTensor> module_tensors(const torch::nn::Module& module, const std::string& prefix);

/// Copies tensors named `prefix + name` into the module. Throws IoError on a
/// missing entry or a shape mismatch.
void load_module_tensors(torch::nn::Module& module, const Container& container, const std::string& prefix);

void append(std::vector<NamedTensor>& into, std::vector<NamedTensor> more);

}  // namespace dopacast::nn

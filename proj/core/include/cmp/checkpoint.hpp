#pragma once

#include <filesystem>
#include <vector>

#include "cmp/nn.hpp"
#include "cmp/tensor.hpp"

namespace cmp {

/// Writes `manifest.csv` (name,shape in order) and one headerless CSV per
/// tensor (`<name>.csv`, one matrix row per line) into `dir`.
void save_parameters(const std::vector<Parameter>& params, const std::filesystem::path& dir);

/// Reads a directory written by save_parameters.
std::vector<Parameter> load_parameters(const std::filesystem::path& dir);

/// Replaces the model's parameter values; names and shapes must match.
void load_into(Model& model, const std::vector<Parameter>& params);

/// CSV `node_id,label,e_0,...,e_{d-1}`.
void write_embeddings(const std::filesystem::path& path, const Tensor& embeddings,
                      const std::vector<int>& labels);

}  // namespace cmp

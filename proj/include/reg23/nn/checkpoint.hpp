#pragma once

#include <map>
#include <string>
#include <vector>

#include "reg23/nn/autodiff.hpp"

namespace reg23::nn {

/// Checkpoint = text manifest (.nnh: config lines, then one line per param
/// or buffer with name and shape) plus a raw little-endian f32 payload
/// (.nnp) in manifest order. Loading is strict: names and shapes must match.
void save_checkpoint(const std::string& header_path,
                     const std::map<std::string, std::string>& config,
                     const std::vector<Param*>& params,
                     const std::vector<std::pair<std::string, Tensor*>>& buffers);

std::map<std::string, std::string> load_checkpoint(
    const std::string& header_path, const std::vector<Param*>& params,
    const std::vector<std::pair<std::string, Tensor*>>& buffers);

/// Reads only the config lines of a checkpoint manifest.
std::map<std::string, std::string> read_checkpoint_config(
    const std::string& header_path);

}  // namespace reg23::nn

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsgen/tensor.hpp"

namespace tsgen {

class ParamStore;

/// Versioned binary checkpoint: magic header, config echo, then a flat
/// payload of named tensors. Writing the result of load() back out
/// reproduces the file byte for byte.
struct Checkpoint {
    std::string config_echo;
    std::vector<std::pair<std::string, Tensor>> tensors;

    Tensor find(const std::string& name) const;
    bool has(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Convenience bridges to a parameter store.
Checkpoint checkpoint_from_params(const ParamStore& params, const std::string& config_echo);
void load_into_params(const Checkpoint& ckpt, ParamStore& params);

}  // namespace tsgen

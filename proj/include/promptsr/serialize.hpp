#pragma once

// Binary formats. A tensor is a little-endian float32 stream prefixed by rank
// and shape (u32 each); a checkpoint is ordered (name, tensor) records.

#include <iosfwd>
#include <map>

#include "promptsr/model.hpp"

namespace promptsr::serialize {

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void write_checkpoint(const std::string& path, nn::ParamRegistry& params);

struct Checkpoint {
    std::vector<std::pair<std::string, Tensor>> records;
};

Checkpoint read_checkpoint(const std::string& path);

// copies checkpoint values into the registry; names and shapes must match
// exactly, errors name the offending layer
void apply_checkpoint(const Checkpoint& ckpt, nn::ParamRegistry& params);

}  // namespace promptsr::serialize

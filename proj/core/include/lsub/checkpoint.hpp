#pragma once

#include "lsub/network.hpp"
#include "lsub/param_vector.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace lsub {

/// On-disk checkpoint: a `key = value` text manifest plus one sibling blob of
/// little-endian float64 values per parameter vector, in segment order.
///
///   format = lsub-checkpoint
///   version = 1
///   network = dense(4,8) relu dense(8,3) softmax_head
///   input_dim = 4
///   num_classes = 3
///   param_count = 67
///   segment.0 = 0 dense_weight 0 32
///   ...
///   kind = line
///   vectors = 2
///   vector.0 = run.v0.bin
struct Checkpoint {
    NetworkSpec spec;
    /// "params" for a single network, otherwise a subspace kind tag.
    std::string kind = "params";
    std::vector<ParamVector> vectors;
    /// Free-form extra keys, written after the fixed ones.
    std::map<std::string, std::string> extra;
};

/// Writes `manifest` and blobs named `<stem>.v<i>.bin` next to it.
void save_checkpoint(const std::filesystem::path& manifest, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& manifest);

/// Parses `key = value` lines; blank lines and lines starting with '#' are skipped.
std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path);

} // namespace lsub

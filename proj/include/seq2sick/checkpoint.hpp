#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seq2sick/model.hpp"

namespace seq2sick {

/// Binary checkpoint layout (all integers u32, all reals f64, little-endian):
///
///   "S2SK" | version | d | hidden | |src vocab| | |tgt vocab|
///   src_embedding    |src| x d
///   tgt_embedding    |tgt| x d
///   encoder.input    4H x d
///   encoder.recurrent 4H x H
///   encoder.bias     4H
///   decoder.input    4H x (d + H)
///   decoder.recurrent 4H x H
///   decoder.bias     4H
///   output           |tgt| x H
///   output_bias      |tgt|
///
/// Matrices are written row-major. Gate blocks are ordered input, forget,
/// output, candidate.
inline constexpr char kCheckpointMagic[4] = {'S', '2', 'S', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<unsigned char> serialize_checkpoint(const ModelParams& params);
ModelParams deserialize_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace seq2sick

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "docgraph/autodiff.hpp"

namespace docgraph {

struct NamedMatrix {
  std::string name;
  ad::Matrix value;
};

// DGPT parameter container, the DGEM layout with a different magic:
//   magic "DGPT" | version u16 | d u32 | count u64 |
//   per matrix: name_len u16 | name bytes | rows u32 | cols u32 | rows*cols float32
// `d` carries the model input dimension. Values are stored as float32.
struct Checkpoint {
  std::uint32_t input_dim = 0;
  std::vector<NamedMatrix> params;

  const ad::Matrix& at(std::string_view name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
std::size_t write_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace docgraph

#include "docgraph/checkpoint.hpp"

#include <cmath>
#include <limits>

#include "docgraph/detail/binio.hpp"
#include "docgraph/embedstore.hpp"
#include "docgraph/error.hpp"

namespace docgraph {

namespace {
constexpr char kMagic[4] = {'D', 'G', 'P', 'T'};
}

const ad::Matrix& Checkpoint::at(std::string_view name) const {
  for (const auto& p : params)
    if (p.name == name) return p.value;
  throw FormatError(FormatErrc::Malformed, "checkpoint has no parameter '" + std::string(name) + "'");
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  detail::ByteWriter w;
  w.magic({kMagic, 4});
  w.u16(embed::kFormatVersion);
  w.u32(ckpt.input_dim);
  w.u64(ckpt.params.size());
  for (const auto& p : ckpt.params) {
    if (p.name.size() > std::numeric_limits<std::uint16_t>::max())
      throw FormatError(FormatErrc::Malformed, "parameter name too long");
    w.u16(static_cast<std::uint16_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.u32(static_cast<std::uint32_t>(p.value.rows));
    w.u32(static_cast<std::uint32_t>(p.value.cols));
    for (double v : p.value.data) {
      const auto f = static_cast<float>(v);
      if (!std::isfinite(f))
        throw FormatError(FormatErrc::NonFiniteValue, "parameter '" + p.name + "' is not finite in float32");
      w.f32(f);
    }
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kMagic, 4))
    throw FormatError(FormatErrc::BadMagic, "not a DGPT checkpoint");
  detail::ByteReader r(bytes);
  r.str(4, "magic");
  const auto version = r.u16("version");
  if (version != embed::kFormatVersion)
    throw FormatError(FormatErrc::VersionMismatch,
                      "DGPT version " + std::to_string(version) + " is not supported");
  Checkpoint ckpt;
  ckpt.input_dim = r.u32("input dimension");
  const auto count = r.u64("parameter count");
  for (std::uint64_t k = 0; k < count; ++k) {
    NamedMatrix p;
    p.name = r.str(r.u16("name length"), "name");
    const std::size_t rows = r.u32("rows");
    const std::size_t cols = r.u32("cols");
    r.need(rows * cols * sizeof(float), "parameter payload");
    p.value = ad::Matrix(rows, cols);
    for (auto& v : p.value.data) {
      const float f = r.f32("parameter payload");
      if (!std::isfinite(f))
        throw FormatError(FormatErrc::NonFiniteValue, "parameter '" + p.name + "' has a non-finite entry");
      v = f;
    }
    ckpt.params.push_back(std::move(p));
  }
  if (!r.at_end())
    throw FormatError(FormatErrc::Malformed, "trailing bytes after last parameter");
  return ckpt;
}

std::size_t write_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto bytes = encode_checkpoint(ckpt);
  detail::write_file(path, bytes);
  return bytes.size();
}

Checkpoint read_checkpoint(const std::string& path) {
  try {
    return decode_checkpoint(detail::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(e.code(), path + ": " + e.what());
  }
}

}  // namespace docgraph

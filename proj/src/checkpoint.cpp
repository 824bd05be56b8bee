#include "refvos/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace refvos {

namespace {
constexpr char kMagic[4] = {'R', 'V', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw InputError("checkpoint: truncated file " + path);
  return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const nn::ParamStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("checkpoint: cannot write " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(params.all().size()));
  for (const auto& p : params.all()) {
    const std::string& name = p.name();
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(p.rank()));
    for (int d : p.shape()) write_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.numel() * sizeof(double)));
  }
  if (!out) throw InputError("checkpoint: write failed for " + path);
}

void load_checkpoint(const std::string& path, nn::ParamStore& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw InputError("checkpoint: bad magic in " + path);
  const std::uint32_t version = read_u32(in, path);
  if (version != kVersion)
    throw InputError("checkpoint: unsupported version " + std::to_string(version) + " in " + path);
  const std::uint32_t count = read_u32(in, path);
  if (count != params.all().size())
    throw InputError("checkpoint: parameter count " + std::to_string(count) + " does not match model (" +
                     std::to_string(params.all().size()) + ")");
  for (Tensor p : params.all()) {  // handle copies share storage
    const std::uint32_t name_len = read_u32(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw InputError("checkpoint: truncated file " + path);
    if (name != p.name())
      throw InputError("checkpoint: parameter name mismatch, expected '" + p.name() + "', found '" + name + "'");
    const std::uint32_t ndim = read_u32(in, path);
    Shape shape(ndim);
    for (auto& d : shape) d = static_cast<int>(read_u32(in, path));
    if (shape != p.shape())
      throw InputError("checkpoint: shape mismatch for parameter '" + p.name() + "': file " + shape_str(shape) +
                       " vs model " + shape_str(p.shape()));
    in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(p.numel() * sizeof(double)));
    if (!in) throw InputError("checkpoint: truncated file " + path);
  }
}

}  // namespace refvos

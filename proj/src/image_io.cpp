#include "refvos/image_io.hpp"

#include <cstring>
#include <fstream>

namespace refvos {
namespace data {

namespace {

// Skips whitespace and '#' comments between header fields.
int next_header_int(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) throw InputError("malformed header in " + path);
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = in.get();
  }
  return v;
}

}  // namespace

void write_ppm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '6') throw InputError(path + " is not a binary PPM (P6)");
  int w = next_header_int(in, path);
  int h = next_header_int(in, path);
  int maxv = next_header_int(in, path);
  if (maxv != 255) throw InputError(path + ": unsupported max value " + std::to_string(maxv));
  Image img(h, w);
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.rgb.size()))
    throw InputError(path + ": truncated pixel data");
  return img;
}

void write_pgm(const std::string& path, const metrics::BinaryMask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << "P5\n" << mask.w << " " << mask.h << "\n255\n";
  std::vector<std::uint8_t> bytes(mask.v.size());
  for (std::size_t i = 0; i < mask.v.size(); ++i) bytes[i] = mask.v[i] ? 255 : 0;
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

metrics::BinaryMask read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '5') throw InputError(path + " is not a binary PGM (P5)");
  int w = next_header_int(in, path);
  int h = next_header_int(in, path);
  int maxv = next_header_int(in, path);
  if (maxv != 255) throw InputError(path + ": unsupported max value " + std::to_string(maxv));
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(h) * w);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw InputError(path + ": truncated pixel data");
  metrics::BinaryMask mask(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) mask.v[i] = bytes[i] >= 128 ? 1 : 0;
  return mask;
}

void write_audio_raw(const std::string& path, const std::vector<double>& samples) {
  static_assert(sizeof(float) == 4);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  std::vector<float> f(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) f[i] = static_cast<float>(samples[i]);
  out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * 4));
}

std::vector<double> read_audio_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw InputError("cannot open " + path);
  std::streamsize bytes = in.tellg();
  if (bytes % 4 != 0) throw InputError(path + ": size not a multiple of 4");
  in.seekg(0);
  std::vector<float> f(static_cast<std::size_t>(bytes / 4));
  in.read(reinterpret_cast<char*>(f.data()), bytes);
  std::vector<double> out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = static_cast<double>(f[i]);
  return out;
}

}  // namespace data
}  // namespace refvos

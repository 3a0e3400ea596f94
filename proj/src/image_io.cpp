#include "arta/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace arta {

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void spill(const std::string& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write " + path);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw InputError("failed writing " + path);
}

struct Header {
  std::string magic;
  int width = 0, height = 0, maxval = 0;
  std::size_t data_offset = 0;
};

// Netpbm header: magic, width, height, maxval separated by whitespace, with
// '#' comments allowed, then exactly one whitespace byte.
Header parse_header(const std::string& bytes) {
  Header h;
  std::size_t pos = 0;
  auto skip = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto token = [&] {
    skip();
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  auto number = [&](const char* what) {
    const std::string t = token();
    if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; }))
      throw InputError(std::string("netpbm: bad ") + what);
    return std::stoi(t);
  };
  h.magic = token();
  h.width = number("width");
  h.height = number("height");
  h.maxval = number("maxval");
  if (pos >= bytes.size()) throw InputError("netpbm: missing pixel data");
  h.data_offset = pos + 1;
  if (h.width <= 0 || h.height <= 0) throw InputError("netpbm: empty image");
  return h;
}

}  // namespace

Image pad_image(const Image& img, int height, int width) {
  if (height < img.height || width < img.width) throw ContractError("pad_image: target is smaller");
  Image out(height, width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, c);
  return out;
}

std::string encode_ppm(const Image& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.rgb.size());
  for (double v : img.rgb)
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  return out;
}

Image decode_ppm(const std::string& bytes) {
  const Header h = parse_header(bytes);
  if (h.magic != "P6") throw InputError("ppm: expected P6, got '" + h.magic + "'");
  if (h.maxval != 255) throw InputError("ppm: only maxval 255 is supported");
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height * 3;
  if (bytes.size() < h.data_offset + n) throw InputError("ppm: truncated pixel data");
  Image img(h.height, h.width);
  for (std::size_t i = 0; i < n; ++i)
    img.rgb[i] = static_cast<unsigned char>(bytes[h.data_offset + i]) / 255.0;
  return img;
}

std::string encode_pgm16(const LabelMap& labels) {
  std::string out =
      "P5\n" + std::to_string(labels.width) + " " + std::to_string(labels.height) + "\n65535\n";
  for (std::uint16_t v : labels.labels) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

LabelMap decode_pgm16(const std::string& bytes) {
  const Header h = parse_header(bytes);
  if (h.magic != "P5") throw InputError("pgm: expected P5, got '" + h.magic + "'");
  if (h.maxval != 65535) throw InputError("pgm: label maps must be 16-bit (maxval 65535)");
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() < h.data_offset + 2 * n) throw InputError("pgm: truncated pixel data");
  LabelMap m(h.height, h.width);
  for (std::size_t i = 0; i < n; ++i) {
    const auto hi = static_cast<unsigned char>(bytes[h.data_offset + 2 * i]);
    const auto lo = static_cast<unsigned char>(bytes[h.data_offset + 2 * i + 1]);
    m.labels[i] = static_cast<std::uint16_t>((hi << 8) | lo);
  }
  return m;
}

void write_ppm(const std::string& path, const Image& img) { spill(path, encode_ppm(img)); }
Image read_ppm(const std::string& path) { return decode_ppm(slurp(path)); }
void write_pgm16(const std::string& path, const LabelMap& labels) { spill(path, encode_pgm16(labels)); }
LabelMap read_pgm16(const std::string& path) { return decode_pgm16(slurp(path)); }

}  // namespace arta

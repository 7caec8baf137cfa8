#include "regioncl/image.hpp"

#include <cmath>
#include <fstream>

namespace regioncl {

void write_ppm(const std::string& path, ImageView img) {
  if (img.ch != 3) throw std::invalid_argument("write_ppm: need a 3-channel image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ppm: cannot open " + path);
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  const std::int64_t plane = static_cast<std::int64_t>(img.h) * img.w;
  std::vector<unsigned char> row(static_cast<std::size_t>(img.w) * 3);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c) {
        float v = img.data[c * plane + static_cast<std::int64_t>(y) * img.w + x];
        v = std::min(std::max(v, 0.f), 1.f);
        row[static_cast<std::size_t>(x) * 3 + static_cast<std::size_t>(c)] =
            static_cast<unsigned char>(std::lround(v * 255.f));
      }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw std::runtime_error("write_ppm: short write to " + path);
}

namespace {
int ppm_int(std::istream& in) {
  // skips whitespace and '#' comment lines, as the format allows
  int c = in.get();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#')
      while (c != EOF && c != '\n') c = in.get();
    c = in.get();
  }
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw std::runtime_error("read_ppm: malformed header");
  return value;
}
}  // namespace

ImageBatch read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_ppm: cannot open " + path);
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '6')
    throw std::runtime_error("read_ppm: " + path + " is not a P6 file");
  const int w = ppm_int(in);
  const int h = ppm_int(in);
  const int maxval = ppm_int(in);
  if (maxval != 255) throw std::runtime_error("read_ppm: only maxval 255 is supported");
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw std::runtime_error("read_ppm: truncated pixel data in " + path);
  auto img = ImageBatch::zeros(1, 3, h, w);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (std::int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      img.data[static_cast<std::size_t>(c * plane + i)] =
          static_cast<float>(raw[static_cast<std::size_t>(i * 3 + c)]) / 255.f;
  return img;
}

}  // namespace regioncl

#include "strand/image.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace strand {

void save_image(const Image& img, const std::string& path) {
  if (img.width <= 0 || img.height <= 0)
    throw std::invalid_argument("save_image: empty image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_image: cannot open " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) * 3);
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const auto rgb = img.rgb(u, v);
      for (int c = 0; c < 3; ++c) {
        const double q = std::round(std::clamp(rgb(c), 0.0, 1.0) * 255.0);
        row[static_cast<std::size_t>(u) * 3 + static_cast<std::size_t>(c)] =
            static_cast<std::uint8_t>(q);
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw std::runtime_error("save_image: write failed for " + path);
}

namespace {
int read_ppm_token(std::istream& in) {
  // Skips whitespace and '#' comments, then reads one non-negative integer.
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value = -1;
  in >> value;
  if (!in || value < 0) throw std::runtime_error("load_image: malformed PPM header");
  return value;
}
}  // namespace

Image load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_image: cannot open " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '6') throw std::runtime_error("load_image: not a P6 PPM: " + path);
  const int w = read_ppm_token(in);
  const int h = read_ppm_token(in);
  const int maxval = read_ppm_token(in);
  if (w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("load_image: unsupported PPM dimensions/maxval in " + path);
  in.get();  // single whitespace after maxval

  Image img(w, h);
  std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (in.gcount() != static_cast<std::streamsize>(data.size()))
    throw std::runtime_error("load_image: truncated pixel data in " + path);
  for (Eigen::Index i = 0; i < img.n_pixels(); ++i)
    for (int c = 0; c < 3; ++c)
      img.pixels(i, c) = data[static_cast<std::size_t>(i) * 3 + static_cast<std::size_t>(c)] / 255.0;
  return img;
}

}  // namespace strand

#include "lbw/image.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace lbw {

Image::Image(int h, int w, int ch, double fill)
    : height(h), width(w), channels(ch),
      pix(static_cast<std::size_t>(h) * w * ch, fill) {
  if (h < 1 || w < 1 || (ch != 1 && ch != 3))
    throw invalid_argument("Image: bad dimensions");
}

namespace {

// Skips whitespace and '#' comment lines between header fields.
void skip_pnm_space(std::istream& in, uint64_t& offset) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      while (c != EOF && c != '\n') {
        in.get();
        ++offset;
        c = in.peek();
      }
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      in.get();
      ++offset;
    } else {
      return;
    }
  }
}

int read_pnm_int(std::istream& in, uint64_t& offset) {
  skip_pnm_space(in, offset);
  int value = 0;
  bool any = false;
  int c;
  while ((c = in.peek()) != EOF && c >= '0' && c <= '9') {
    in.get();
    ++offset;
    value = value * 10 + (c - '0');
    any = true;
    if (value > 1 << 26) throw format_error("pnm: header value out of range", offset);
  }
  if (!any) throw format_error("pnm: expected integer in header", offset);
  return value;
}

}  // namespace

Image read_pnm(std::istream& in) {
  uint64_t offset = 0;
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (!in || m0 != 'P' || (m1 != '5' && m1 != '6'))
    throw format_error("pnm: bad magic, want P5 or P6", 0);
  offset = 2;
  const int channels = (m1 == '6') ? 3 : 1;
  const int w = read_pnm_int(in, offset);
  const int h = read_pnm_int(in, offset);
  const int maxval = read_pnm_int(in, offset);
  if (w < 1 || h < 1) throw format_error("pnm: bad dimensions", offset);
  if (maxval != 255) throw format_error("pnm: only maxval 255 supported", offset);
  // Exactly one whitespace byte separates the header from the raster.
  int sep = in.get();
  ++offset;
  if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n')
    throw format_error("pnm: missing raster separator", offset);

  Image img(h, w, channels);
  std::vector<unsigned char> raw(img.size());
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw format_error("pnm: truncated raster", offset + static_cast<uint64_t>(in.gcount()));
  for (std::size_t i = 0; i < raw.size(); ++i) img.pix[i] = raw[i] / 255.0;
  return img;
}

Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw invalid_argument("cannot open image file: " + path);
  return read_pnm(in);
}

void write_pnm(const Image& img, std::ostream& out) {
  if (img.channels != 1 && img.channels != 3)
    throw invalid_argument("write_pnm: channels must be 1 or 3");
  out << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    double v = img.pix[i];
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

void write_pnm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw invalid_argument("cannot open image file for writing: " + path);
  write_pnm(img, out);
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace lbw

#include "hires/image.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "hires/ops.hpp"

namespace hires {

ImageBuffer::ImageBuffer(int64_t h, int64_t w, int64_t c, float fill_value)
    : height(h), width(w), channels(c),
      data(static_cast<size_t>(h * w * c), fill_value) {
  if (h < 1 || w < 1 || (c != 1 && c != 3))
    throw std::invalid_argument("image dims must be >= 1 with 1 or 3 channels");
}

bool ImageBuffer::same_pixels(const ImageBuffer& other) const {
  return height == other.height && width == other.width &&
         channels == other.channels && data == other.data;
}

ImageBuffer resize_image(const ImageBuffer& img, int64_t h2, int64_t w2) {
  Tensor<float> t({img.height, img.width, img.channels},
                  std::vector<float>(img.data));
  Tensor<float> r = ops::resize_bilinear(t, h2, w2);
  ImageBuffer out(h2, w2, img.channels);
  out.data.assign(r.data(), r.data() + r.numel());
  return out;
}

std::string encode_pnm(const ImageBuffer& img) {
  std::string out;
  out += img.channels == 3 ? "P6\n" : "P5\n";
  out += std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.data.size());
  for (float v : img.data) {
    const float clamped = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    out.push_back(static_cast<char>(
        static_cast<unsigned char>(std::lround(clamped * 255.0f))));
  }
  return out;
}

namespace {

void skip_pnm_space(const std::string& s, size_t& i) {
  while (i < s.size()) {
    if (s[i] == '#') {
      while (i < s.size() && s[i] != '\n') ++i;
    } else if (std::isspace(static_cast<unsigned char>(s[i]))) {
      ++i;
    } else {
      break;
    }
  }
}

int64_t parse_pnm_int(const std::string& s, size_t& i) {
  skip_pnm_space(s, i);
  int64_t v = 0;
  bool any = false;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
    v = v * 10 + (s[i] - '0');
    ++i;
    any = true;
  }
  if (!any) throw std::runtime_error("malformed PNM header");
  return v;
}

}  // namespace

ImageBuffer decode_pnm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw std::runtime_error("not a binary PGM/PPM stream");
  const int64_t channels = bytes[1] == '6' ? 3 : 1;
  size_t i = 2;
  const int64_t w = parse_pnm_int(bytes, i);
  const int64_t h = parse_pnm_int(bytes, i);
  const int64_t maxval = parse_pnm_int(bytes, i);
  if (maxval != 255) throw std::runtime_error("only maxval 255 is supported");
  ++i;  // single whitespace after maxval
  const size_t need = static_cast<size_t>(h * w * channels);
  if (bytes.size() - i < need) throw std::runtime_error("truncated PNM payload");
  ImageBuffer img(h, w, channels);
  for (size_t k = 0; k < need; ++k)
    img.data[k] = static_cast<float>(static_cast<unsigned char>(bytes[i + k])) / 255.0f;
  return img;
}

void write_pnm(const std::string& path, const ImageBuffer& img) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  const std::string bytes = encode_pnm(img);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

ImageBuffer read_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_pnm(bytes);
}

}  // namespace hires

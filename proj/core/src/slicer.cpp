#include "hires/slicer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace hires {

namespace {

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

int64_t scaled_dim(int64_t dim, double s) {
  return std::max<int64_t>(1, static_cast<int64_t>(std::floor(static_cast<double>(dim) * s)));
}

}  // namespace

GridSpec compute_grid(int64_t height, int64_t width, int64_t r, int64_t max_slices) {
  if (height < 1 || width < 1 || r < 1 || max_slices < 1)
    throw std::invalid_argument("compute_grid: all arguments must be >= 1");

  GridSpec g;
  g.r = r;
  g.scale_applied = 1.0;
  int64_t h = height, w = width;

  int64_t m0 = ceil_div(h, r);
  int64_t n0 = ceil_div(w, r);

  if (m0 * n0 > max_slices) {
    // Scan candidate grid shapes (a, b) with a*b <= cap for the largest
    // uniform shrink factor that makes the input fit a*r x b*r.
    double best = 0.0;
    for (int64_t a = 1; a <= max_slices; ++a) {
      for (int64_t b = 1; a * b <= max_slices; ++b) {
        const double s = std::min(
            {1.0, static_cast<double>(a * r) / static_cast<double>(h),
             static_cast<double>(b * r) / static_cast<double>(w)});
        best = std::max(best, s);
      }
    }
    g.scale_applied = best;
    h = scaled_dim(height, best);
    w = scaled_dim(width, best);
    m0 = ceil_div(h, r);
    n0 = ceil_div(w, r);
  }

  g.scaled_h = h;
  g.scaled_w = w;

  if (4 * m0 * n0 <= max_slices) {
    g.m = 2 * m0;
    g.n = 2 * n0;
    g.quadrupled = true;
  } else {
    g.m = m0;
    g.n = n0;
    g.quadrupled = false;
  }
  g.canvas_h = g.m * r;
  g.canvas_w = g.n * r;
  if (g.m * g.n > max_slices)
    throw std::logic_error("compute_grid: slice cap violated after rescale");
  return g;
}

ImageBuffer pad_to_canvas(const ImageBuffer& img, const GridSpec& grid) {
  ImageBuffer src = img;
  if (grid.scale_applied < 1.0)
    src = resize_image(img, scaled_dim(img.height, grid.scale_applied),
                       scaled_dim(img.width, grid.scale_applied));
  if (src.height > grid.canvas_h || src.width > grid.canvas_w)
    throw std::logic_error("pad_to_canvas: image exceeds canvas");
  ImageBuffer canvas(grid.canvas_h, grid.canvas_w, src.channels, 0.0f);
  const int64_t top = (grid.canvas_h - src.height) / 2;
  const int64_t left = (grid.canvas_w - src.width) / 2;
  for (int64_t y = 0; y < src.height; ++y)
    for (int64_t x = 0; x < src.width; ++x)
      for (int64_t c = 0; c < src.channels; ++c)
        canvas.at(top + y, left + x, c) = src.at(y, x, c);
  return canvas;
}

std::vector<ImageBuffer> extract_slices(const ImageBuffer& canvas, const GridSpec& grid) {
  if (canvas.height != grid.canvas_h || canvas.width != grid.canvas_w)
    throw std::invalid_argument("extract_slices: canvas does not match grid");
  std::vector<ImageBuffer> slices;
  slices.reserve(static_cast<size_t>(grid.m * grid.n));
  for (int64_t row = 0; row < grid.m; ++row)
    for (int64_t col = 0; col < grid.n; ++col) {
      ImageBuffer s(grid.r, grid.r, canvas.channels);
      for (int64_t y = 0; y < grid.r; ++y)
        for (int64_t x = 0; x < grid.r; ++x)
          for (int64_t c = 0; c < canvas.channels; ++c)
            s.at(y, x, c) = canvas.at(row * grid.r + y, col * grid.r + x, c);
      slices.push_back(std::move(s));
    }
  return slices;
}

ImageBuffer stitch_slices(const std::vector<ImageBuffer>& slices, const GridSpec& grid) {
  if (static_cast<int64_t>(slices.size()) != grid.m * grid.n)
    throw std::invalid_argument("stitch_slices: slice count does not match grid");
  ImageBuffer canvas(grid.canvas_h, grid.canvas_w, slices[0].channels);
  for (int64_t row = 0; row < grid.m; ++row)
    for (int64_t col = 0; col < grid.n; ++col) {
      const ImageBuffer& s = slices[static_cast<size_t>(row * grid.n + col)];
      if (s.height != grid.r || s.width != grid.r)
        throw std::invalid_argument("stitch_slices: slice dims do not match grid");
      for (int64_t y = 0; y < grid.r; ++y)
        for (int64_t x = 0; x < grid.r; ++x)
          for (int64_t c = 0; c < canvas.channels; ++c)
            canvas.at(row * grid.r + y, col * grid.r + x, c) = s.at(y, x, c);
    }
  return canvas;
}

ImageBuffer lowres_view(const ImageBuffer& img, int64_t r) {
  int64_t new_h, new_w;
  if (img.height >= img.width) {
    new_h = r;
    new_w = std::max<int64_t>(
        1, static_cast<int64_t>(std::llround(
               static_cast<double>(img.width) * static_cast<double>(r) /
               static_cast<double>(img.height))));
  } else {
    new_w = r;
    new_h = std::max<int64_t>(
        1, static_cast<int64_t>(std::llround(
               static_cast<double>(img.height) * static_cast<double>(r) /
               static_cast<double>(img.width))));
  }
  ImageBuffer resized = resize_image(img, new_h, new_w);
  ImageBuffer canvas(r, r, img.channels, 0.0f);
  const int64_t top = (r - new_h) / 2;
  const int64_t left = (r - new_w) / 2;
  for (int64_t y = 0; y < new_h; ++y)
    for (int64_t x = 0; x < new_w; ++x)
      for (int64_t c = 0; c < img.channels; ++c)
        canvas.at(top + y, left + x, c) = resized.at(y, x, c);
  return canvas;
}

std::string gridspec_to_json(const GridSpec& grid) {
  nlohmann::json j;
  j["r"] = grid.r;
  j["m"] = grid.m;
  j["n"] = grid.n;
  j["quadrupled"] = grid.quadrupled;
  j["canvas_h"] = grid.canvas_h;
  j["canvas_w"] = grid.canvas_w;
  j["scale_applied"] = grid.scale_applied;
  return j.dump();
}

GridSpec gridspec_from_json(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  GridSpec g;
  g.r = j.at("r").get<int64_t>();
  g.m = j.at("m").get<int64_t>();
  g.n = j.at("n").get<int64_t>();
  g.quadrupled = j.at("quadrupled").get<bool>();
  g.canvas_h = j.at("canvas_h").get<int64_t>();
  g.canvas_w = j.at("canvas_w").get<int64_t>();
  g.scale_applied = j.at("scale_applied").get<double>();
  return g;
}

}  // namespace hires

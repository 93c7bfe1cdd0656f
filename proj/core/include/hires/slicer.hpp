#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hires/image.hpp"

namespace hires {

// Slicing geometry for one input. canvas is always an exact multiple of the
// base resolution; scale_applied records the pre-resize factor used when the
// raw grid would exceed the slice cap (1.0 otherwise).
struct GridSpec {
  int64_t r = 0;        // base resolution (slice side)
  int64_t m = 0;        // slice rows
  int64_t n = 0;        // slice cols
  bool quadrupled = false;
  int64_t canvas_h = 0;  // m * r
  int64_t canvas_w = 0;  // n * r
  double scale_applied = 1.0;
  // Input dims after the scale_applied resize; not serialized.
  int64_t scaled_h = 0;
  int64_t scaled_w = 0;
};

// Grid selection: m0 = ceil(H/r), n0 = ceil(W/r); double both dims when the
// quadrupled count still fits the cap; when even the raw grid exceeds the
// cap, pre-rescale by the largest factor <= 1 whose grid fits and re-apply.
GridSpec compute_grid(int64_t height, int64_t width, int64_t r, int64_t max_slices);

// Centers the image on a black canvas of canvas_h x canvas_w, applying the
// grid's pre-resize first when scale_applied < 1.
ImageBuffer pad_to_canvas(const ImageBuffer& img, const GridSpec& grid);

// Row-major r x r tiles; slice k = row * n + col.
std::vector<ImageBuffer> extract_slices(const ImageBuffer& canvas, const GridSpec& grid);

// Inverse of extract_slices.
ImageBuffer stitch_slices(const std::vector<ImageBuffer>& slices, const GridSpec& grid);

// Aspect-preserving resize so the longer side equals r, centered on a black
// r x r canvas.
ImageBuffer lowres_view(const ImageBuffer& img, int64_t r);

std::string gridspec_to_json(const GridSpec& grid);
GridSpec gridspec_from_json(const std::string& json_text);

}  // namespace hires

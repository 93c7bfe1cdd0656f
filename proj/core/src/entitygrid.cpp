#include "hires/entitygrid.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "hires/rng.hpp"
#include "hires/serialize.hpp"
#include "font5x7.hpp"

namespace fs = std::filesystem;

namespace hires {
namespace entitygrid {

const std::array<int, 5> kEdgePositions = {2, 4, 5, 6, 8};
const std::array<int, 4> kCenterPositions = {1, 3, 7, 9};

const char* entity_kind_name(EntityKind k) {
  switch (k) {
    case EntityKind::text: return "text";
    case EntityKind::digit: return "digit";
    case EntityKind::object: return "object";
    case EntityKind::shape: return "shape";
    case EntityKind::relpos: return "relpos";
  }
  return "?";
}

const char* task_name(Task t) {
  switch (t) {
    case Task::identification: return "identification";
    case Task::position: return "position";
    case Task::counting: return "counting";
  }
  return "?";
}

Task task_from_name(const std::string& s) {
  if (s == "identification") return Task::identification;
  if (s == "position") return Task::position;
  if (s == "counting") return Task::counting;
  throw std::invalid_argument("unknown task: " + s);
}

namespace {

EntityKind kind_from_name(const std::string& s) {
  if (s == "text") return EntityKind::text;
  if (s == "digit") return EntityKind::digit;
  if (s == "object") return EntityKind::object;
  if (s == "shape") return EntityKind::shape;
  if (s == "relpos") return EntityKind::relpos;
  throw std::invalid_argument("unknown entity kind: " + s);
}

struct Rgb {
  float r, g, b;
};

constexpr Rgb kBlack{0.0f, 0.0f, 0.0f};
constexpr Rgb kRed{0.85f, 0.1f, 0.1f};
constexpr Rgb kGreen{0.1f, 0.6f, 0.15f};
constexpr Rgb kYellow{0.95f, 0.85f, 0.1f};
constexpr Rgb kBlue{0.15f, 0.3f, 0.8f};
constexpr Rgb kBrown{0.45f, 0.3f, 0.1f};
constexpr Rgb kGray{0.3f, 0.3f, 0.35f};
constexpr Rgb kWhite{1.0f, 1.0f, 1.0f};

// Icon primitives with offsets/extents as fractions of the base resolution.
struct Prim {
  enum Type { rect, circle, tri } type;
  double dx, dy;  // center offset
  double a, b;    // half extents (circle: a = radius)
  Rgb color;
};

std::vector<Prim> icon_prims(const std::string& label) {
  if (label == "ball")
    return {{Prim::circle, 0, 0, 0.125, 0.125, kRed},
            {Prim::rect, 0, 0, 0.125, 0.02, kWhite}};
  if (label == "tree")
    return {{Prim::rect, 0, 0.07, 0.022, 0.06, kBrown},
            {Prim::circle, 0, -0.04, 0.09, 0.09, kGreen}};
  if (label == "cup")
    return {{Prim::rect, 0, 0, 0.08, 0.09, kBlue},
            {Prim::rect, 0.105, 0, 0.025, 0.045, kBlue}};
  if (label == "flag")
    return {{Prim::rect, -0.08, 0, 0.012, 0.12, kGray},
            {Prim::rect, 0.0, -0.07, 0.068, 0.045, kRed}};
  if (label == "traffic light")
    return {{Prim::rect, 0, 0, 0.05, 0.13, kGray},
            {Prim::circle, 0, -0.085, 0.035, 0.035, kRed},
            {Prim::circle, 0, 0, 0.035, 0.035, kYellow},
            {Prim::circle, 0, 0.085, 0.035, 0.035, kGreen}};
  if (label == "stop sign")
    return {{Prim::circle, 0, 0, 0.12, 0.12, kRed},
            {Prim::rect, 0, 0, 0.085, 0.025, kWhite}};
  if (label == "circle") return {{Prim::circle, 0, 0, 0.125, 0.125, kBlack}};
  if (label == "triangle") return {{Prim::tri, 0, 0, 0.125, 0.125, kBlack}};
  if (label == "rectangle") return {{Prim::rect, 0, 0, 0.14, 0.085, kBlack}};
  throw std::invalid_argument("no icon for label: " + label);
}

int64_t frac_px(double f, int64_t r) {
  return static_cast<int64_t>(std::llround(f * static_cast<double>(r)));
}

int64_t glyph_scale(const std::string& label, int64_t r) {
  const int64_t units = 6 * static_cast<int64_t>(label.size()) - 1;
  const int64_t budget = r / 2 - 2;
  return std::max<int64_t>(1, budget / units);
}

void put_px(ImageBuffer& img, int64_t x, int64_t y, const Rgb& c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  img.at(y, x, 0) = c.r;
  img.at(y, x, 1) = c.g;
  img.at(y, x, 2) = c.b;
}

void fill_rect(ImageBuffer& img, int64_t cx, int64_t cy, int64_t hw, int64_t hh, const Rgb& c) {
  for (int64_t y = cy - hh; y <= cy + hh; ++y)
    for (int64_t x = cx - hw; x <= cx + hw; ++x) put_px(img, x, y, c);
}

void fill_circle(ImageBuffer& img, int64_t cx, int64_t cy, int64_t rad, const Rgb& c) {
  for (int64_t y = cy - rad; y <= cy + rad; ++y)
    for (int64_t x = cx - rad; x <= cx + rad; ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= rad * rad) put_px(img, x, y, c);
}

// Isoceles triangle, apex up: apex (cx, cy-hh), base corners (cx +- hw, cy+hh).
void fill_triangle(ImageBuffer& img, int64_t cx, int64_t cy, int64_t hw, int64_t hh, const Rgb& c) {
  for (int64_t y = cy - hh; y <= cy + hh; ++y) {
    const double t = static_cast<double>(y - (cy - hh)) / static_cast<double>(2 * hh);
    const int64_t half = static_cast<int64_t>(std::llround(t * static_cast<double>(hw)));
    for (int64_t x = cx - half; x <= cx + half; ++x) put_px(img, x, y, c);
  }
}

void draw_label(ImageBuffer& img, const std::string& label, int64_t cx, int64_t cy,
                int64_t scale, const Rgb& c) {
  const int64_t w = (6 * static_cast<int64_t>(label.size()) - 1) * scale;
  const int64_t h = 7 * scale;
  int64_t x0 = cx - w / 2;
  const int64_t y0 = cy - h / 2;
  for (char ch : label) {
    const Glyph* g = find_glyph(ch);
    if (!g) throw std::invalid_argument(std::string("no glyph for '") + ch + "'");
    for (int row = 0; row < kGlyphHeight; ++row)
      for (int col = 0; col < kGlyphWidth; ++col)
        if (g->rows[row] & (1 << (kGlyphWidth - 1 - col)))
          for (int64_t sy = 0; sy < scale; ++sy)
            for (int64_t sx = 0; sx < scale; ++sx)
              put_px(img, x0 + col * scale + sx, y0 + row * scale + sy, c);
    x0 += 6 * scale;
  }
}

void draw_entity(ImageBuffer& img, const EntitySpec& e, int64_t cx, int64_t cy, int64_t r) {
  if (e.kind == EntityKind::text || e.kind == EntityKind::digit) {
    draw_label(img, e.label, cx, cy, glyph_scale(e.label, r), kBlack);
    return;
  }
  for (const Prim& p : icon_prims(e.label)) {
    const int64_t px = cx + frac_px(p.dx, r);
    const int64_t py = cy + frac_px(p.dy, r);
    switch (p.type) {
      case Prim::rect: fill_rect(img, px, py, frac_px(p.a, r), frac_px(p.b, r), p.color); break;
      case Prim::circle: fill_circle(img, px, py, frac_px(p.a, r), p.color); break;
      case Prim::tri: fill_triangle(img, px, py, frac_px(p.a, r), frac_px(p.b, r), p.color); break;
    }
  }
}

int task_index(Task t) {
  switch (t) {
    case Task::identification: return 0;
    case Task::position: return 1;
    case Task::counting: return 2;
  }
  return 0;
}

// Grid coordinates of a position (col, row in 0..2).
std::pair<int, int> grid_coords(int position) {
  return {(position - 1) % 3, (position - 1) / 3};
}

bool diagonal_tie(int pa, int pb) {
  const auto [ax, ay] = grid_coords(pa);
  const auto [bx, by] = grid_coords(pb);
  return std::abs(ax - bx) == std::abs(ay - by);
}

// Partial Fisher-Yates draw of k distinct values from `pool`.
std::vector<int> draw_without_replacement(Rng& rng, std::vector<int> pool, int k) {
  std::vector<int> out;
  out.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    const int64_t j = i + rng.uniform_int(static_cast<int64_t>(pool.size()) - i);
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    out.push_back(pool[static_cast<size_t>(i)]);
  }
  return out;
}

std::vector<std::string> catalog_labels(int64_t r) {
  std::vector<std::string> labels;
  for (const EntitySpec& e : catalog_for_resolution(r)) labels.push_back(e.label);
  return labels;
}

}  // namespace

std::pair<int64_t, int64_t> entity_extent(const EntitySpec& e, int64_t r) {
  if (e.kind == EntityKind::text || e.kind == EntityKind::digit) {
    const int64_t s = glyph_scale(e.label, r);
    const int64_t w = (6 * static_cast<int64_t>(e.label.size()) - 1) * s;
    const int64_t h = 7 * s;
    return {(w + 1) / 2, (h + 1) / 2};
  }
  int64_t hw = 0, hh = 0;
  for (const Prim& p : icon_prims(e.label)) {
    hw = std::max(hw, std::llabs(frac_px(p.dx, r)) + frac_px(p.a, r));
    hh = std::max(hh, std::llabs(frac_px(p.dy, r)) + frac_px(p.type == Prim::circle ? p.a : p.b, r));
  }
  return {hw, hh};
}

std::array<Placement, 9> position_centers(int64_t r) {
  if (r < 1) throw std::invalid_argument("position_centers: r must be >= 1");
  std::array<Placement, 9> out;
  for (int p = 1; p <= 9; ++p) {
    const auto [gx, gy] = grid_coords(p);
    out[static_cast<size_t>(p - 1)] = {p, (gx + 1) * r / 2, (gy + 1) * r / 2};
  }
  return out;
}

std::vector<EntitySpec> entity_catalog() {
  std::vector<EntitySpec> cat;
  int id = 0;
  auto add = [&](EntityKind k, const char* label) { cat.push_back({id++, k, label}); };
  add(EntityKind::text, "apple");
  add(EntityKind::text, "house");
  add(EntityKind::text, "tiger");
  add(EntityKind::text, "cloud");
  add(EntityKind::text, "bread");
  add(EntityKind::digit, "0.596");
  add(EntityKind::digit, "3.14");
  add(EntityKind::digit, "42");
  add(EntityKind::digit, "7.25");
  add(EntityKind::digit, "108");
  add(EntityKind::shape, "circle");
  add(EntityKind::shape, "triangle");
  add(EntityKind::shape, "rectangle");
  add(EntityKind::object, "ball");
  add(EntityKind::object, "tree");
  add(EntityKind::object, "cup");
  add(EntityKind::object, "flag");
  add(EntityKind::relpos, "traffic light");
  add(EntityKind::relpos, "stop sign");
  return cat;
}

std::vector<EntitySpec> catalog_for_resolution(int64_t r) {
  std::vector<EntitySpec> out;
  for (const EntitySpec& e : entity_catalog()) {
    const auto [hw, hh] = entity_extent(e, r);
    // Half-extent strictly below r/4 keeps any two distinct positions
    // (spacing r/2) overlap-free.
    if (hw <= r / 4 - 1 && hh <= r / 4 - 1) out.push_back(e);
  }
  if (out.size() < 4)
    throw std::invalid_argument("resolution too small: fewer than 4 entities fit");
  return out;
}

namespace {

SampledEntities sample_impl(uint64_t seed, Task task, int64_t r, int probe) {
  Rng rng(seed);
  const std::vector<EntitySpec> catalog = catalog_for_resolution(r);
  auto pick_entity = [&] {
    return catalog[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(catalog.size())))];
  };
  std::vector<int> all_positions = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<int> others;
  for (int p = 1; p <= 9; ++p)
    if (p != probe) others.push_back(p);

  SampledEntities s;
  switch (task) {
    case Task::identification: {
      s.entities = {pick_entity()};
      s.positions = probe > 0 ? std::vector<int>{probe}
                              : draw_without_replacement(rng, all_positions, 1);
      break;
    }
    case Task::counting: {
      s.entities = {pick_entity()};
      const int k = 1 + static_cast<int>(rng.uniform_int(4));
      if (probe > 0) {
        s.positions = {probe};
        auto rest = draw_without_replacement(rng, others, k - 1);
        s.positions.insert(s.positions.end(), rest.begin(), rest.end());
      } else {
        s.positions = draw_without_replacement(rng, all_positions, k);
      }
      break;
    }
    case Task::position: {
      EntitySpec a = pick_entity();
      EntitySpec b = pick_entity();
      for (int guard = 0; b.label == a.label; ++guard) {
        if (guard > 64) throw std::runtime_error("cannot draw two distinct entities");
        b = pick_entity();
      }
      s.entities = {a, b};
      for (int guard = 0;; ++guard) {
        if (probe > 0) {
          s.positions = {probe, draw_without_replacement(rng, others, 1)[0]};
        } else {
          s.positions = draw_without_replacement(rng, all_positions, 2);
        }
        if (!diagonal_tie(s.positions[0], s.positions[1])) break;
        if (guard > 64) {
          // Deterministic fallback: first non-tied partner in numeric order.
          for (int p : (probe > 0 ? others : all_positions))
            if (p != s.positions[0] && !diagonal_tie(s.positions[0], p)) {
              s.positions[1] = p;
              break;
            }
          break;
        }
      }
      break;
    }
  }
  return s;
}

}  // namespace

SampledEntities sample_entities(uint64_t seed, Task task, int64_t r) {
  return sample_impl(seed, task, r, 0);
}

SampledEntities sample_entities_at(uint64_t seed, Task task, int64_t r, int probe_position) {
  if (probe_position < 1 || probe_position > 9)
    throw std::invalid_argument("probe position must be in [1,9]");
  return sample_impl(seed, task, r, probe_position);
}

ImageBuffer render_image(const std::vector<std::pair<EntitySpec, int>>& placed, int64_t r) {
  const auto centers = position_centers(r);
  // Reject overlapping bounding boxes; the generator resamples on failure.
  for (size_t i = 0; i < placed.size(); ++i)
    for (size_t j = i + 1; j < placed.size(); ++j) {
      const auto [wi, hi] = entity_extent(placed[i].first, r);
      const auto [wj, hj] = entity_extent(placed[j].first, r);
      const auto& ci = centers[static_cast<size_t>(placed[i].second - 1)];
      const auto& cj = centers[static_cast<size_t>(placed[j].second - 1)];
      if (std::llabs(ci.cx - cj.cx) < wi + wj && std::llabs(ci.cy - cj.cy) < hi + hj)
        throw std::runtime_error("entity bounding boxes overlap");
    }
  ImageBuffer img(2 * r, 2 * r, 3, 1.0f);
  for (const auto& [entity, pos] : placed) {
    if (pos < 1 || pos > 9) throw std::invalid_argument("position out of range");
    const Placement& c = centers[static_cast<size_t>(pos - 1)];
    draw_entity(img, entity, c.cx, c.cy, r);
  }
  return img;
}

QAItem gen_qa(Task task, const std::vector<EntitySpec>& entities,
              const std::vector<int>& positions, uint64_t seed, int64_t r) {
  QAItem item;
  item.task = task;
  item.seed = seed;
  Rng rng(seed);

  std::string answer_text;
  std::vector<std::string> distractor_space;
  switch (task) {
    case Task::identification: {
      if (entities.size() != 1 || positions.size() != 1)
        throw std::invalid_argument("identification takes one entity at one position");
      item.question = "What is the object in the picture?";
      answer_text = entities[0].label;
      distractor_space = catalog_labels(r);
      item.entities = {{entities[0], positions[0]}};
      item.probe_position = positions[0];
      break;
    }
    case Task::position: {
      if (entities.size() != 2 || positions.size() != 2)
        throw std::invalid_argument("position takes two entities at two positions");
      const auto centers = position_centers(r);
      const auto& ci = centers[static_cast<size_t>(positions[0] - 1)];
      const auto& cj = centers[static_cast<size_t>(positions[1] - 1)];
      const int64_t dx = ci.cx - cj.cx, dy = ci.cy - cj.cy;
      if (std::llabs(dx) == std::llabs(dy))
        throw std::invalid_argument("ambiguous relative position (equal axis dominance)");
      if (std::llabs(dx) > std::llabs(dy))
        answer_text = dx < 0 ? "left" : "right";
      else
        answer_text = dy < 0 ? "above" : "below";
      item.question = "Where is " + entities[0].label + " at " + entities[1].label +
                      " in the picture?";
      distractor_space = {"left", "right", "above", "below"};
      item.entities = {{entities[0], positions[0]}, {entities[1], positions[1]}};
      item.probe_position = positions[0];
      break;
    }
    case Task::counting: {
      if (entities.size() != 1 || positions.empty() || positions.size() > 4)
        throw std::invalid_argument("counting takes one entity at 1..4 positions");
      item.question = "How many " + entities[0].label + " are in the picture?";
      answer_text = std::to_string(positions.size());
      distractor_space = {"1", "2", "3", "4"};
      for (int p : positions) item.entities.emplace_back(entities[0], p);
      item.probe_position = positions[0];
      break;
    }
  }

  std::vector<std::string> pool;
  for (const std::string& s : distractor_space)
    if (s != answer_text) pool.push_back(s);
  if (pool.size() < 3) throw std::logic_error("answer space too small for 3 distractors");
  std::vector<int> picks = draw_without_replacement(
      rng, [&] {
        std::vector<int> idx(pool.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
        return idx;
      }(), 3);

  std::array<std::string, 4> options = {answer_text, pool[static_cast<size_t>(picks[0])],
                                        pool[static_cast<size_t>(picks[1])],
                                        pool[static_cast<size_t>(picks[2])]};
  // Fisher-Yates shuffle of the four options.
  for (int i = 3; i > 0; --i) {
    const int64_t j = rng.uniform_int(i + 1);
    std::swap(options[static_cast<size_t>(i)], options[static_cast<size_t>(j)]);
  }
  item.options = options;
  for (int i = 0; i < 4; ++i)
    if (options[static_cast<size_t>(i)] == answer_text) item.answer = static_cast<char>('A' + i);
  return item;
}

EvalReport make_report(const std::array<double, 9>& per_position) {
  EvalReport r;
  r.per_position = per_position;
  double edge = 0.0, center = 0.0;
  for (int p : kEdgePositions) edge += per_position[static_cast<size_t>(p - 1)];
  for (int p : kCenterPositions) center += per_position[static_cast<size_t>(p - 1)];
  r.acc_edge = edge / static_cast<double>(kEdgePositions.size());
  r.acc_center = center / static_cast<double>(kCenterPositions.size());
  double mean = 0.0;
  for (double a : per_position) mean += a;
  mean /= 9.0;
  double var = 0.0;
  for (double a : per_position) var += (a - mean) * (a - mean);
  r.acc_mean = mean;
  r.acc_std = std::sqrt(var / 9.0);
  if (r.acc_center > 0.0) {
    r.discrepancy1 = r.acc_edge / r.acc_center;
    r.discrepancy2 = (r.acc_edge - r.acc_center) / r.acc_center;
    r.discrepancy2_abs = std::abs(*r.discrepancy2);
  }
  return r;
}

EvalReport evaluate(const std::map<std::string, char>& predictions,
                    const std::vector<QAItem>& items,
                    const std::map<std::string, int>& position_of) {
  // correct/total per (task, position)
  std::array<std::array<int64_t, 9>, 3> correct{};
  std::array<std::array<int64_t, 9>, 3> total{};
  for (const QAItem& item : items) {
    auto pit = predictions.find(item.image_id);
    if (pit == predictions.end())
      throw std::invalid_argument("missing prediction for " + item.image_id);
    auto posit = position_of.find(item.image_id);
    if (posit == position_of.end())
      throw std::invalid_argument("missing probe position for " + item.image_id);
    const int p = posit->second;
    if (p < 1 || p > 9) throw std::invalid_argument("probe position out of range");
    const int t = task_index(item.task);
    total[static_cast<size_t>(t)][static_cast<size_t>(p - 1)] += 1;
    if (pit->second == item.answer)
      correct[static_cast<size_t>(t)][static_cast<size_t>(p - 1)] += 1;
  }
  std::array<double, 9> per_position{};
  for (int p = 0; p < 9; ++p) {
    double acc = 0.0;
    int tasks_present = 0;
    for (int t = 0; t < 3; ++t) {
      if (total[static_cast<size_t>(t)][static_cast<size_t>(p)] == 0) continue;
      acc += static_cast<double>(correct[static_cast<size_t>(t)][static_cast<size_t>(p)]) /
             static_cast<double>(total[static_cast<size_t>(t)][static_cast<size_t>(p)]);
      ++tasks_present;
    }
    if (tasks_present == 0)
      throw std::invalid_argument("no items at position " + std::to_string(p + 1));
    per_position[static_cast<size_t>(p)] = acc / static_cast<double>(tasks_present);
  }
  return make_report(per_position);
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["a_p"] = report.per_position;
  j["acc_edge"] = report.acc_edge;
  j["acc_center"] = report.acc_center;
  j["acc_mean"] = report.acc_mean;
  j["acc_std"] = report.acc_std;
  j["discrepancy1"] = report.discrepancy1 ? nlohmann::json(*report.discrepancy1)
                                          : nlohmann::json(nullptr);
  j["discrepancy2"] = report.discrepancy2 ? nlohmann::json(*report.discrepancy2)
                                          : nlohmann::json(nullptr);
  j["discrepancy2_abs"] = report.discrepancy2_abs ? nlohmann::json(*report.discrepancy2_abs)
                                                  : nlohmann::json(nullptr);
  j["positions_edge"] = kEdgePositions;
  j["positions_center"] = kCenterPositions;
  j["notes"] =
      "acc_std is the population standard deviation of the 9 per-position "
      "task-averaged accuracies; discrepancy2 is signed, discrepancy2_abs its magnitude";
  return j.dump();
}

GeneratedItem generate_item(const CorpusSpec& spec, Task task, int probe_position, int index) {
  const uint64_t item_seed =
      mix_seed(mix_seed(mix_seed(spec.seed, static_cast<uint64_t>(task_index(task))),
                        static_cast<uint64_t>(probe_position)),
               static_cast<uint64_t>(index));
  GeneratedItem out;
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 16)
      throw std::runtime_error("could not place entities without overlap");
    const uint64_t attempt_seed = mix_seed(item_seed, static_cast<uint64_t>(attempt));
    SampledEntities s = sample_entities_at(attempt_seed, task, spec.r, probe_position);
    std::vector<std::pair<EntitySpec, int>> placed;
    if (task == Task::counting) {
      for (int p : s.positions) placed.emplace_back(s.entities[0], p);
    } else {
      for (size_t i = 0; i < s.entities.size(); ++i)
        placed.emplace_back(s.entities[i], s.positions[i]);
    }
    try {
      out.image = render_image(placed, spec.r);
    } catch (const std::runtime_error&) {
      continue;  // overlap; retry with a fresh draw
    }
    out.item = gen_qa(task, s.entities, s.positions, mix_seed(attempt_seed, 0x9a), spec.r);
    break;
  }
  char id[64];
  std::snprintf(id, sizeof(id), "%s_p%d_%04d", task_name(task), probe_position, index);
  out.item.image_id = id;
  out.item.image_path = std::string("images/") + id + ".ppm";
  return out;
}

void generate_corpus(const CorpusSpec& spec,
                     const std::function<void(const GeneratedItem&)>& sink) {
  for (Task task : spec.tasks)
    for (int p = 1; p <= 9; ++p)
      for (int i = 0; i < spec.per_cell; ++i) sink(generate_item(spec, task, p, i));
}

std::string manifest_to_json(const CorpusManifest& m) {
  nlohmann::json j;
  j["r"] = m.spec.r;
  j["per_cell"] = m.spec.per_cell;
  j["seed"] = m.spec.seed;
  nlohmann::json tasks = nlohmann::json::array();
  for (Task t : m.spec.tasks) tasks.push_back(task_name(t));
  j["tasks"] = std::move(tasks);
  j["total_items"] = m.total_items;
  j["generator_version"] = m.generator_version;
  return j.dump(2) + "\n";
}

CorpusManifest manifest_from_json(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  CorpusManifest m;
  m.spec.r = j.at("r").get<int64_t>();
  m.spec.per_cell = j.at("per_cell").get<int>();
  m.spec.seed = j.at("seed").get<uint64_t>();
  m.spec.tasks.clear();
  for (const auto& t : j.at("tasks")) m.spec.tasks.push_back(task_from_name(t.get<std::string>()));
  m.total_items = j.at("total_items").get<int>();
  m.generator_version = j.at("generator_version").get<std::string>();
  return m;
}

std::string item_to_json_line(const QAItem& item) {
  nlohmann::json j;
  j["task"] = task_name(item.task);
  j["image_id"] = item.image_id;
  nlohmann::json ents = nlohmann::json::array();
  for (const auto& [e, p] : item.entities) {
    nlohmann::json je;
    je["kind"] = entity_kind_name(e.kind);
    je["label"] = e.label;
    je["position"] = p;
    ents.push_back(std::move(je));
  }
  j["entities"] = std::move(ents);
  j["question"] = item.question;
  j["options"] = item.options;
  j["answer"] = std::string(1, item.answer);
  j["seed"] = item.seed;
  j["probe_position"] = item.probe_position;
  j["image"] = item.image_path;
  return j.dump();
}

QAItem item_from_json_line(const std::string& line) {
  const nlohmann::json j = nlohmann::json::parse(line);
  QAItem item;
  item.task = task_from_name(j.at("task").get<std::string>());
  item.image_id = j.at("image_id").get<std::string>();
  for (const auto& je : j.at("entities")) {
    EntitySpec e;
    e.kind = kind_from_name(je.at("kind").get<std::string>());
    e.label = je.at("label").get<std::string>();
    item.entities.emplace_back(e, je.at("position").get<int>());
  }
  item.question = j.at("question").get<std::string>();
  const auto opts = j.at("options");
  for (size_t i = 0; i < 4; ++i) item.options[i] = opts.at(i).get<std::string>();
  item.answer = j.at("answer").get<std::string>().at(0);
  item.seed = j.at("seed").get<uint64_t>();
  item.probe_position = j.at("probe_position").get<int>();
  item.image_path = j.at("image").get<std::string>();
  return item;
}

CorpusManifest write_corpus(const CorpusSpec& spec, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  std::string jsonl;
  int total = 0;
  generate_corpus(spec, [&](const GeneratedItem& g) {
    atomic_write_file((fs::path(dir) / g.item.image_path).string(), encode_pnm(g.image));
    jsonl += item_to_json_line(g.item);
    jsonl += "\n";
    ++total;
  });
  CorpusManifest m;
  m.spec = spec;
  m.total_items = total;
  atomic_write_file((fs::path(dir) / "corpus.jsonl").string(), jsonl);
  atomic_write_file((fs::path(dir) / "manifest.json").string(), manifest_to_json(m));
  return m;
}

Corpus load_corpus(const std::string& dir) {
  Corpus c;
  c.dir = dir;
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw std::runtime_error("cannot open corpus manifest in " + dir);
  std::string mtext((std::istreambuf_iterator<char>(mf)), std::istreambuf_iterator<char>());
  c.manifest = manifest_from_json(mtext);
  std::ifstream f(fs::path(dir) / "corpus.jsonl");
  if (!f) throw std::runtime_error("cannot open corpus.jsonl in " + dir);
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    c.items.push_back(item_from_json_line(line));
  }
  if (static_cast<int>(c.items.size()) != c.manifest.total_items)
    throw std::runtime_error("corpus.jsonl item count does not match manifest");
  return c;
}

std::map<std::string, char> read_predictions_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::map<std::string, char> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    out[j.at("image_id").get<std::string>()] = j.at("option").get<std::string>().at(0);
  }
  return out;
}

std::string predictions_to_jsonl(const std::map<std::string, char>& predictions) {
  std::string out;
  for (const auto& [id, opt] : predictions) {
    nlohmann::json j;
    j["image_id"] = id;
    j["option"] = std::string(1, opt);
    out += j.dump();
    out += "\n";
  }
  return out;
}

}  // namespace entitygrid
}  // namespace hires

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hires/image.hpp"

namespace hires {
namespace entitygrid {

enum class EntityKind { text, digit, object, shape, relpos };
enum class Task { identification, position, counting };

const char* entity_kind_name(EntityKind k);
const char* task_name(Task t);
Task task_from_name(const std::string& s);

struct EntitySpec {
  int id = 0;
  EntityKind kind = EntityKind::text;
  std::string label;
};

// One of the nine lattice points on the 2R x 2R canvas, numbered row-major
// 1..9 over centers {R/2, R, 3R/2} x {R/2, R, 3R/2}.
struct Placement {
  int position = 0;  // 1..9
  int64_t cx = 0;
  int64_t cy = 0;
};

struct QAItem {
  Task task = Task::identification;
  std::string image_id;
  std::vector<std::pair<EntitySpec, int>> entities;  // (entity, position)
  std::string question;
  std::array<std::string, 4> options;
  char answer = 'A';  // option letter
  uint64_t seed = 0;
  int probe_position = 0;
  std::string image_path;
};

struct EvalReport {
  std::array<double, 9> per_position{};  // task-averaged accuracy per position
  double acc_edge = 0.0;
  double acc_center = 0.0;
  double acc_mean = 0.0;
  double acc_std = 0.0;  // population std over the 9 per-position accuracies
  std::optional<double> discrepancy1;      // edge / center
  std::optional<double> discrepancy2;      // (edge - center) / center, signed
  std::optional<double> discrepancy2_abs;
};

// Positions on slice boundaries of the 2x2 slicing (x = R or y = R).
extern const std::array<int, 5> kEdgePositions;    // {2,4,5,6,8}
extern const std::array<int, 4> kCenterPositions;  // {1,3,7,9}

std::array<Placement, 9> position_centers(int64_t r);

// The full entity catalog, filtered to entities whose rendering fits inside
// one grid cell at resolution r (half-extent < r/4 keeps any two distinct
// positions overlap-free).
std::vector<EntitySpec> entity_catalog();
std::vector<EntitySpec> catalog_for_resolution(int64_t r);

// Free sampling: identification/counting pick one entity, position picks
// two distinct ones; positions uniform without replacement from 1..9.
struct SampledEntities {
  std::vector<EntitySpec> entities;
  std::vector<int> positions;
};
SampledEntities sample_entities(uint64_t seed, Task task, int64_t r);
// Bucketed variant pinning the probe entity's position.
SampledEntities sample_entities_at(uint64_t seed, Task task, int64_t r, int probe_position);

// Deterministic rasterization on a white 2R x 2R canvas. Throws after
// bounded retries if entity bounding boxes cannot be placed overlap-free
// (the caller resamples positions between retries).
ImageBuffer render_image(const std::vector<std::pair<EntitySpec, int>>& placed, int64_t r);

// Bounding box half extents of an entity's rendering.
std::pair<int64_t, int64_t> entity_extent(const EntitySpec& e, int64_t r);

QAItem gen_qa(Task task, const std::vector<EntitySpec>& entities,
              const std::vector<int>& positions, uint64_t seed, int64_t r);

// Metric arithmetic over a per-position accuracy table.
EvalReport make_report(const std::array<double, 9>& per_position);

// predictions: image_id -> chosen option letter. position_of: image_id ->
// probe position. Accuracy at a position is the equal-weight mean over the
// tasks that have items there.
EvalReport evaluate(const std::map<std::string, char>& predictions,
                    const std::vector<QAItem>& items,
                    const std::map<std::string, int>& position_of);

std::string report_to_json(const EvalReport& report);

struct CorpusSpec {
  int64_t r = 224;
  int per_cell = 100;  // items per task per position
  uint64_t seed = 0;
  std::vector<Task> tasks = {Task::identification, Task::position, Task::counting};
};

struct CorpusManifest {
  CorpusSpec spec;
  int total_items = 0;
  std::string generator_version = "1";
};

struct GeneratedItem {
  QAItem item;
  ImageBuffer image;
};

GeneratedItem generate_item(const CorpusSpec& spec, Task task, int probe_position, int index);

// Streams every item of the corpus in a fixed order (task-major, then
// position, then index). The sink receives the item plus its rendered image.
void generate_corpus(const CorpusSpec& spec,
                     const std::function<void(const GeneratedItem&)>& sink);

// Writes manifest.json, corpus.jsonl and images/<id>.ppm under dir.
CorpusManifest write_corpus(const CorpusSpec& spec, const std::string& dir);

std::string manifest_to_json(const CorpusManifest& m);
CorpusManifest manifest_from_json(const std::string& json_text);

std::string item_to_json_line(const QAItem& item);
QAItem item_from_json_line(const std::string& line);

struct Corpus {
  CorpusManifest manifest;
  std::vector<QAItem> items;
  std::string dir;
};
Corpus load_corpus(const std::string& dir);

std::map<std::string, char> read_predictions_jsonl(const std::string& path);
std::string predictions_to_jsonl(const std::map<std::string, char>& predictions);

}  // namespace entitygrid
}  // namespace hires

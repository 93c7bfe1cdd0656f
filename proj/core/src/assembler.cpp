#include "hires/assembler.hpp"

#include <stdexcept>

#include <json.hpp>

namespace hires {

const char* span_tag_name(SpanTag tag) {
  switch (tag) {
    case SpanTag::lowres: return "lowres";
    case SpanTag::sep_global: return "sep_global";
    case SpanTag::slice: return "slice";
    case SpanTag::sep_slice: return "sep_slice";
    case SpanTag::sep_row: return "sep_row";
  }
  return "?";
}

namespace {

SpanTag span_tag_from_name(const std::string& s) {
  if (s == "lowres") return SpanTag::lowres;
  if (s == "sep_global") return SpanTag::sep_global;
  if (s == "slice") return SpanTag::slice;
  if (s == "sep_slice") return SpanTag::sep_slice;
  if (s == "sep_row") return SpanTag::sep_row;
  throw std::invalid_argument("unknown span tag: " + s);
}

}  // namespace

std::string layout_to_json(const std::vector<Span>& layout) {
  nlohmann::json spans = nlohmann::json::array();
  int64_t total = 0;
  for (const Span& s : layout) {
    nlohmann::json j;
    j["tag"] = span_tag_name(s.tag);
    j["offset"] = s.offset;
    j["length"] = s.length;
    if (s.tag == SpanTag::slice) j["slice_index"] = s.slice_index;
    spans.push_back(std::move(j));
    total += s.length;
  }
  nlohmann::json out;
  out["spans"] = std::move(spans);
  out["total_tokens"] = total;
  return out.dump();
}

std::vector<Span> layout_from_json(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  std::vector<Span> layout;
  for (const auto& s : j.at("spans")) {
    Span sp;
    sp.tag = span_tag_from_name(s.at("tag").get<std::string>());
    sp.offset = s.at("offset").get<int64_t>();
    sp.length = s.at("length").get<int64_t>();
    sp.slice_index = s.contains("slice_index") ? s.at("slice_index").get<int64_t>() : -1;
    layout.push_back(sp);
  }
  return layout;
}

}  // namespace hires

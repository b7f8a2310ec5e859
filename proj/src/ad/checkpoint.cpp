#include "mmroute/ad/checkpoint.hpp"

#include "mmroute/errors.hpp"
#include "mmroute/io/csv.hpp"

namespace mmroute::ad {

using nlohmann::json;

json checkpoint_json(const std::vector<ConstSection>& sections) {
  json doc;
  doc["format"] = "mmroute-checkpoint";
  doc["version"] = kCheckpointVersion;
  json secs = json::object();
  for (const auto& s : sections) {
    json list = json::array();
    for (const Tensor* t : s.tensors) {
      const Matrix& v = t->values();
      std::vector<double> flat;
      flat.reserve(static_cast<std::size_t>(v.size()));
      for (Index r = 0; r < v.rows(); ++r)
        for (Index c = 0; c < v.cols(); ++c) flat.push_back(v(r, c));
      list.push_back({{"name", t->name()}, {"shape", {v.rows(), v.cols()}}, {"values", flat}});
    }
    secs[s.key] = std::move(list);
  }
  doc["sections"] = std::move(secs);
  return doc;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<ConstSection>& sections) {
  io::write_text(path, checkpoint_json(sections).dump());
}

void load_checkpoint(const json& doc, const std::vector<Section>& sections) {
  if (!doc.contains("version")) throw IoError("checkpoint has no version field");
  if (doc["version"].get<int>() != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + doc["version"].dump());
  const json& secs = doc.at("sections");
  for (const auto& s : sections) {
    if (!secs.contains(s.key)) throw IoError("checkpoint lacks section '" + s.key + "'");
    const json& list = secs.at(s.key);
    for (Tensor* t : s.tensors) {
      const json* found = nullptr;
      for (const auto& e : list)
        if (e.at("name").get<std::string>() == t->name()) found = &e;
      if (!found) throw IoError("section '" + s.key + "' lacks tensor '" + t->name() + "'");
      const auto shape = found->at("shape").get<std::vector<Index>>();
      const auto values = found->at("values").get<std::vector<double>>();
      if (shape.size() != 2 || shape[0] != t->values().rows() || shape[1] != t->values().cols())
        throw ShapeError("checkpoint tensor '" + t->name() + "' has shape " +
                         found->at("shape").dump() + ", model expects " + to_string(t->shape()));
      if (static_cast<Index>(values.size()) != shape[0] * shape[1])
        throw IoError("checkpoint tensor '" + t->name() + "' value count mismatch");
      Matrix& v = t->values();
      for (Index r = 0; r < v.rows(); ++r)
        for (Index c = 0; c < v.cols(); ++c)
          v(r, c) = values[static_cast<std::size_t>(r * v.cols() + c)];
    }
  }
}

void load_checkpoint(const std::filesystem::path& path, const std::vector<Section>& sections) {
  json doc;
  try {
    doc = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  load_checkpoint(doc, sections);
}

}  // namespace mmroute::ad

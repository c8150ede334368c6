#include "layerprobe/manifest.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "layerprobe/error.hpp"

namespace layerprobe {

using nlohmann::json;

namespace {

LabelDefinition parse_label_definition(const std::string& name, const json& j) {
  LabelDefinition def;
  def.questionnaire = j.value("questionnaire", name);
  if (!j.contains("threshold") || !j["threshold"].is_number()) {
    throw ConfigError("label '" + name + "': numeric threshold required");
  }
  def.threshold = j["threshold"].get<double>();
  const std::string rule = j.value("rule", "score >= threshold");
  if (rule == "score >= threshold" || rule == ">=" || rule == "score ≥ threshold") {
    def.inclusive = true;
  } else if (rule == "score > threshold" || rule == ">") {
    def.inclusive = false;
  } else {
    throw ConfigError("label '" + name + "': unknown rule '" + rule + "'");
  }
  return def;
}

RecordingRecord parse_record(const json& j,
                             const std::map<std::string, LabelDefinition>& defs) {
  RecordingRecord r;
  r.recording_id = j.at("recording_id").get<std::string>();
  r.speaker_id = j.value("speaker_id", r.recording_id);
  r.duration_s = j.at("duration_s").get<double>();
  if (j.contains("task")) r.task = task_from_string(j["task"].get<std::string>());
  if (j.contains("labels")) {
    for (const auto& [name, value] : j["labels"].items()) {
      if (!defs.contains(name)) {
        throw ConfigError("recording '" + r.recording_id + "': unknown label '" +
                          name + "'");
      }
      r.labels[name] = value.get<bool>();
    }
  }
  // Questionnaire scores fill in any label not given explicitly.
  if (j.contains("scores")) {
    const auto& scores = j["scores"];
    for (const auto& [name, def] : defs) {
      if (r.labels.contains(name) || !scores.contains(def.questionnaire)) continue;
      r.labels[name] = def.apply(scores[def.questionnaire].get<double>());
    }
  }
  if (j.contains("split")) {
    const auto s = j["split"].get<std::string>();
    if (s == "train") {
      r.split = Split::Train;
    } else if (s == "test") {
      r.split = Split::Test;
    } else {
      throw ConfigError("recording '" + r.recording_id + "': split must be train|test");
    }
  }
  if (j.contains("fold")) r.fold = j["fold"].get<int>();
  return r;
}

}  // namespace

std::string to_string(Task t) {
  return t == Task::Elicited ? "elicited" : "spontaneous";
}

Task task_from_string(const std::string& s) {
  if (s == "elicited" || s == "cv") return Task::Elicited;
  if (s == "spontaneous" || s == "ov") return Task::Spontaneous;
  throw ConfigError("unknown task '" + s + "'");
}

const RecordingRecord* Manifest::find(const std::string& recording_id) const {
  for (const auto& r : records) {
    if (r.recording_id == recording_id) return &r;
  }
  return nullptr;
}

void check_manifest(const Manifest& m) {
  std::set<std::string> ids;
  for (const auto& r : m.records) {
    if (!ids.insert(r.recording_id).second) {
      throw ConfigError("duplicate recording_id '" + r.recording_id + "'");
    }
    if (!(r.duration_s > 0.0) || !std::isfinite(r.duration_s)) {
      throw ConfigError("recording '" + r.recording_id + "': duration_s must be > 0");
    }
    for (const auto& [name, _] : r.labels) {
      if (!m.label_definitions.contains(name)) {
        throw ConfigError("recording '" + r.recording_id + "': unknown label '" +
                          name + "'");
      }
    }
  }

  // speaker -> set of groups (fold index, or 0/1 for train/test)
  std::map<std::string, std::set<int>> speaker_groups;
  if (m.protocol.kind == DatasetProtocol::Kind::KFold) {
    if (m.protocol.k < 2) throw ConfigError("kfold protocol needs k >= 2");
    for (const auto& r : m.records) {
      if (!r.fold) {
        throw ConfigError("recording '" + r.recording_id + "': missing fold index");
      }
      if (*r.fold < 0 || *r.fold >= m.protocol.k) {
        throw ConfigError("recording '" + r.recording_id + "': fold index " +
                          std::to_string(*r.fold) + " out of range [0, " +
                          std::to_string(m.protocol.k) + ")");
      }
      speaker_groups[r.speaker_id].insert(*r.fold);
    }
  } else {
    for (const auto& r : m.records) {
      if (!r.split) {
        throw ConfigError("recording '" + r.recording_id + "': missing split");
      }
      speaker_groups[r.speaker_id].insert(*r.split == Split::Train ? 0 : 1);
    }
  }
  if (m.speaker_disjoint) {
    for (const auto& [speaker, groups] : speaker_groups) {
      if (groups.size() > 1) {
        throw ConfigError("speaker '" + speaker + "' appears in more than one " +
                          (m.protocol.kind == DatasetProtocol::Kind::KFold
                               ? std::string("fold")
                               : std::string("split")));
      }
    }
  }
}

Manifest parse_manifest(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
  }
  Manifest m;
  try {
    for (const auto& [name, def] : doc.at("label_definitions").items()) {
      m.label_definitions[name] = parse_label_definition(name, def);
    }
    const auto& proto = doc.at("protocol");
    const std::string kind =
        proto.is_string() ? proto.get<std::string>() : proto.at("kind").get<std::string>();
    if (kind == "holdout") {
      m.protocol.kind = DatasetProtocol::Kind::HoldoutSplit;
    } else if (kind == "kfold") {
      m.protocol.kind = DatasetProtocol::Kind::KFold;
      m.protocol.k = proto.at("k").get<int>();
    } else {
      throw ConfigError("unknown protocol kind '" + kind + "'");
    }
    m.speaker_disjoint = doc.value("speaker_disjoint", false);
    if (doc.contains("layers")) m.layers = doc["layers"].get<std::vector<std::uint32_t>>();
    for (const auto& rec : doc.at("records")) {
      m.records.push_back(parse_record(rec, m.label_definitions));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed manifest: ") + e.what());
  }
  check_manifest(m);
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str());
}

std::string manifest_to_json(const Manifest& m) {
  json doc;
  doc["label_definitions"] = json::object();
  for (const auto& [name, def] : m.label_definitions) {
    doc["label_definitions"][name] = {
        {"questionnaire", def.questionnaire},
        {"threshold", def.threshold},
        {"rule", def.inclusive ? "score >= threshold" : "score > threshold"}};
  }
  if (m.protocol.kind == DatasetProtocol::Kind::KFold) {
    doc["protocol"] = {{"kind", "kfold"}, {"k", m.protocol.k}};
  } else {
    doc["protocol"] = {{"kind", "holdout"}};
  }
  doc["speaker_disjoint"] = m.speaker_disjoint;
  if (!m.layers.empty()) doc["layers"] = m.layers;
  doc["records"] = json::array();
  for (const auto& r : m.records) {
    json jr = {{"recording_id", r.recording_id},
               {"speaker_id", r.speaker_id},
               {"duration_s", r.duration_s},
               {"task", to_string(r.task)},
               {"labels", r.labels}};
    if (r.split) jr["split"] = *r.split == Split::Train ? "train" : "test";
    if (r.fold) jr["fold"] = *r.fold;
    doc["records"].push_back(std::move(jr));
  }
  return doc.dump(2) + "\n";
}

void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << manifest_to_json(m);
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

std::vector<std::uint32_t> resolve_layers(const Manifest& m,
                                          const EmbeddingStore& store,
                                          const std::vector<std::uint32_t>& requested) {
  if (!requested.empty()) return requested;
  if (!m.layers.empty()) return m.layers;
  if (m.records.empty()) return {};
  return store.layers_for(m.records.front().recording_id);
}

ValidationReport validate_manifest(const Manifest& m, const EmbeddingStore& store,
                                   const ValidationOptions& options) {
  ValidationReport report;
  const auto layers = resolve_layers(m, store, options.layers);
  if (layers.empty() && !m.records.empty()) {
    report.errors.push_back({m.records.front().recording_id,
                             "no embedding layers found in store"});
  }
  for (const auto& r : m.records) {
    for (auto layer : layers) {
      const std::string where = "layer " + std::to_string(layer) + ": ";
      if (!store.contains(r.recording_id, layer)) {
        report.errors.push_back(
            {r.recording_id, where + "missing file " +
                                 embedding_file_name(r.recording_id, layer)});
        continue;
      }
      std::shared_ptr<const EmbeddingSequence> seq;
      try {
        seq = store.load(r.recording_id, layer);
      } catch (const Error& e) {
        report.errors.push_back({r.recording_id, where + e.what()});
        continue;
      }
      const double implied = seq->duration_s();
      if (std::abs(implied - r.duration_s) > kDurationTolerance * r.duration_s) {
        report.errors.push_back(
            {r.recording_id, where + "duration mismatch: file implies " +
                                 std::to_string(implied) + " s, manifest says " +
                                 std::to_string(r.duration_s) + " s"});
      }
    }
    if (options.min_window_s && r.duration_s < *options.min_window_s) {
      report.warnings.push_back(
          {r.recording_id, "shorter (" + std::to_string(r.duration_s) +
                               " s) than the smallest window (" +
                               std::to_string(*options.min_window_s) + " s)"});
    }
  }
  return report;
}

ValidationReport validate_manifest(const Manifest& m,
                                   const std::filesystem::path& store_root,
                                   const ValidationOptions& options) {
  return validate_manifest(m, EmbeddingStore(store_root), options);
}

}  // namespace layerprobe

#include "diqa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "diqa/errors.hpp"

namespace diqa {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// Splits one CSV line, honouring double-quoted fields.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(trim(field));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

double parse_number(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(what + ": '" + text + "' is not a finite number");
  }
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
    case Split::kUnassigned:
      return "unassigned";
  }
  return "unassigned";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  if (text.empty() || text == "unassigned") return Split::kUnassigned;
  throw ValidationError("unknown split '" + std::string(text) + "'");
}

std::string to_string(Orientation orientation) {
  return orientation == Orientation::kHigherIsBetter ? "higher_is_better" : "higher_is_worse";
}

Orientation parse_orientation(std::string_view text) {
  if (text == "higher_is_better") return Orientation::kHigherIsBetter;
  if (text == "higher_is_worse") return Orientation::kHigherIsWorse;
  throw ValidationError("unknown orientation '" + std::string(text) + "'");
}

void ScoreScale::validate() const {
  if (!(max > min)) throw ValidationError("score scale needs max > min");
}

DatasetDescriptor DatasetDescriptor::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open descriptor '" + path.string() + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  auto get = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ValidationError("descriptor '" + path.string() + "' lacks '" + key + "'");
    return it->second;
  };
  DatasetDescriptor d;
  d.scale.min = parse_number(get("scale_min"), "scale_min");
  d.scale.max = parse_number(get("scale_max"), "scale_max");
  d.scale.orientation = parse_orientation(get("orientation"));
  d.scale.validate();
  auto count = [&](const std::string& key) {
    const double v = parse_number(get(key), key);
    if (v < 0 || v != std::floor(v)) throw ValidationError(key + " must be a non-negative integer");
    return static_cast<int>(v);
  };
  d.counts = {count("train_groups"), count("val_groups"), count("test_groups")};
  return d;
}

void DatasetDescriptor::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write descriptor '" + path.string() + "'");
  out << "scale_min=" << scale.min << "\nscale_max=" << scale.max << "\norientation=" << to_string(scale.orientation)
      << "\ntrain_groups=" << counts.train << "\nval_groups=" << counts.val << "\ntest_groups=" << counts.test << "\n";
}

double map_score(double raw, const ScoreScale& scale) {
  scale.validate();
  if (!(raw >= scale.min && raw <= scale.max)) {
    throw ValidationError("score " + std::to_string(raw) + " outside [" + std::to_string(scale.min) + ", " +
                          std::to_string(scale.max) + "]");
  }
  const double t = (raw - scale.min) / (scale.max - scale.min);
  return 100.0 * (scale.orientation == Orientation::kHigherIsBetter ? 1.0 - t : t);
}

std::vector<ImageRecord> load_manifest(const std::filesystem::path& path, const ScoreScale& scale,
                                       bool require_reference) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  auto where = [&](int line_no) { return path.string() + ":" + std::to_string(line_no) + ": "; };

  std::vector<std::string> header;
  std::map<std::string, std::size_t> column;
  std::vector<ImageRecord> records;
  std::unordered_set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto fields = split_csv(t);
    if (header.empty()) {
      header = fields;
      for (std::size_t i = 0; i < header.size(); ++i) column[header[i]] = i;
      for (const char* required : {"id", "distorted_path", "reference_path", "raw_score", "reference_group"}) {
        if (!column.contains(required)) {
          throw ValidationError(where(line_no) + "manifest header lacks column '" + required + "'");
        }
      }
      continue;
    }
    if (fields.size() != header.size()) {
      throw ValidationError(where(line_no) + "expected " + std::to_string(header.size()) + " fields, found " +
                            std::to_string(fields.size()));
    }
    auto get = [&](const std::string& name) -> const std::string& { return fields[column.at(name)]; };
    ImageRecord r;
    r.id = get("id");
    if (r.id.empty()) throw ValidationError(where(line_no) + "empty id");
    if (!ids.insert(r.id).second) throw ValidationError(where(line_no) + "duplicate id '" + r.id + "'");
    if (get("distorted_path").empty()) throw ValidationError(where(line_no) + "empty distorted_path");
    r.distorted_path = resolve(get("distorted_path"));
    if (!get("reference_path").empty()) r.reference_path = resolve(get("reference_path"));
    if (require_reference && !r.reference_path) {
      throw ValidationError(where(line_no) + "record '" + r.id + "' has no reference_path but the model is FR");
    }
    try {
      r.raw_score = parse_number(get("raw_score"), "raw_score");
      r.mapped_score = map_score(r.raw_score, scale);
    } catch (const ValidationError& e) {
      throw ValidationError(where(line_no) + "record '" + r.id + "': " + e.what());
    }
    r.reference_group = get("reference_group").empty() ? r.id : get("reference_group");
    for (std::size_t i = 0; i < header.size(); ++i) {
      const auto& name = header[i];
      if (name == "split") {
        try {
          r.split = parse_split(fields[i]);
        } catch (const ValidationError& e) {
          throw ValidationError(where(line_no) + e.what());
        }
      } else if (name != "id" && name != "distorted_path" && name != "reference_path" && name != "raw_score" &&
                 name != "reference_group") {
        r.attributes[name] = fields[i];
      }
    }
    records.push_back(std::move(r));
  }
  if (header.empty()) throw ValidationError(path.string() + ": manifest has no header row");
  return records;
}

void save_manifest(const std::filesystem::path& path, const std::vector<ImageRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  std::set<std::string> extra;
  for (const auto& r : records) {
    for (const auto& [k, v] : r.attributes) extra.insert(k);
  }
  const bool with_split = std::any_of(records.begin(), records.end(),
                                      [](const ImageRecord& r) { return r.split != Split::kUnassigned; });
  out << "id,distorted_path,reference_path,raw_score,reference_group";
  if (with_split) out << ",split";
  for (const auto& k : extra) out << ',' << csv_field(k);
  out << '\n';
  for (const auto& r : records) {
    char score[64];
    std::snprintf(score, sizeof score, "%.17g", r.raw_score);
    out << csv_field(r.id) << ',' << csv_field(r.distorted_path.generic_string()) << ','
        << csv_field(r.reference_path ? r.reference_path->generic_string() : "") << ',' << score << ','
        << csv_field(r.reference_group);
    if (with_split) out << ',' << to_string(r.split);
    for (const auto& k : extra) {
      auto it = r.attributes.find(k);
      out << ',' << csv_field(it == r.attributes.end() ? "" : it->second);
    }
    out << '\n';
  }
}

void split_by_reference(std::vector<ImageRecord>& records, SplitCounts counts, Rng& rng) {
  if (counts.train < 0 || counts.val < 0 || counts.test < 0) throw ValidationError("split counts must be >= 0");
  std::set<std::string> unique_groups;
  for (const auto& r : records) unique_groups.insert(r.reference_group);
  std::vector<std::string> groups(unique_groups.begin(), unique_groups.end());
  const auto requested = static_cast<std::size_t>(counts.train + counts.val + counts.test);
  if (requested > groups.size()) {
    throw ValidationError("split requests " + std::to_string(requested) + " reference groups but only " +
                          std::to_string(groups.size()) + " exist");
  }
  std::shuffle(groups.begin(), groups.end(), rng);
  std::map<std::string, Split> assignment;
  std::size_t k = 0;
  for (int i = 0; i < counts.train; ++i) assignment[groups[k++]] = Split::kTrain;
  for (int i = 0; i < counts.val; ++i) assignment[groups[k++]] = Split::kVal;
  for (int i = 0; i < counts.test; ++i) assignment[groups[k++]] = Split::kTest;
  for (auto& r : records) {
    auto it = assignment.find(r.reference_group);
    r.split = it == assignment.end() ? Split::kUnassigned : it->second;
  }
}

bool fully_split(const std::vector<ImageRecord>& records) {
  return !records.empty() && std::all_of(records.begin(), records.end(),
                                         [](const ImageRecord& r) { return r.split != Split::kUnassigned; });
}

std::vector<ImageRecord> select_split(const std::vector<ImageRecord>& records, Split split) {
  std::vector<ImageRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [split](const ImageRecord& r) { return r.split == split; });
  return out;
}

}  // namespace diqa

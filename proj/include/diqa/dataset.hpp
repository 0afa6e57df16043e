#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "diqa/rng.hpp"

namespace diqa {

enum class Split { kUnassigned, kTrain, kVal, kTest };
enum class Orientation { kHigherIsBetter, kHigherIsWorse };

std::string to_string(Split split);
Split parse_split(std::string_view text);
std::string to_string(Orientation orientation);
Orientation parse_orientation(std::string_view text);

/// Native score range of a dataset.
struct ScoreScale {
  double min = 0.0;
  double max = 100.0;
  Orientation orientation = Orientation::kHigherIsWorse;
  void validate() const;
};

/// Number of reference groups assigned to each split.
struct SplitCounts {
  int train = 0;
  int val = 0;
  int test = 0;
};

/// Key-value dataset descriptor: `scale_min`, `scale_max`, `orientation`,
/// `train_groups`, `val_groups`, `test_groups`.
struct DatasetDescriptor {
  ScoreScale scale;
  SplitCounts counts;

  static DatasetDescriptor load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// One quality-annotated image.
struct ImageRecord {
  std::string id;
  std::filesystem::path distorted_path;
  std::optional<std::filesystem::path> reference_path;
  double raw_score = 0.0;
  /// Common scale [0,100], higher means more distorted.
  double mapped_score = 0.0;
  std::string reference_group;
  Split split = Split::kUnassigned;
  /// Extra manifest columns (e.g. a distortion type used for per-group reports).
  std::map<std::string, std::string> attributes;
};

/// Affine map of a native score onto [0,100] with 0 = best and 100 = worst.
double map_score(double raw, const ScoreScale& scale);

/**
 * Reads a manifest CSV with header `id,distorted_path,reference_path,raw_score,reference_group`
 * (any order; extra columns are kept as attributes, and an optional `split` column
 * pre-assigns splits). Relative paths resolve against the manifest's directory;
 * `#` lines are comments. An empty reference_group defaults to the record id.
 */
std::vector<ImageRecord> load_manifest(const std::filesystem::path& path, const ScoreScale& scale,
                                       bool require_reference);

/// Writes records back out in manifest form (paths as given, attributes appended).
void save_manifest(const std::filesystem::path& path, const std::vector<ImageRecord>& records);

/// Assigns splits by shuffling reference groups; all records of a group share one tag.
/// Groups beyond train+val+test stay unassigned.
void split_by_reference(std::vector<ImageRecord>& records, SplitCounts counts, Rng& rng);

/// True when every record already carries a split tag.
bool fully_split(const std::vector<ImageRecord>& records);

std::vector<ImageRecord> select_split(const std::vector<ImageRecord>& records, Split split);

}  // namespace diqa

#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ppmae/dataio/image.hpp"

namespace ppmae::data {

enum class Split { train, val, test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

// Task-1 classes: 0 reduced, 1 stable, 2 worsened, 3 other.
inline constexpr int kTask1Classes = 4;
// Task-2 drops "other".
inline constexpr int kTask2Classes = 3;

// One manifest row: a registered (t0, t1) pair referenced by path.
struct PairRecord {
  std::string case_id;
  std::string patient_id;
  std::filesystem::path image_t0;  // as written in the CSV (relative to the manifest)
  std::filesystem::path image_t1;
  std::optional<int> label_task1;
  std::optional<int> label_task2;
  Split split = Split::train;
  std::optional<int> fold;

  bool operator==(const PairRecord&) const = default;
};

struct Manifest {
  std::filesystem::path source_dir;
  std::vector<PairRecord> rows;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

// A pair with pixels loaded.
struct PairSample {
  std::string case_id;
  std::string patient_id;
  GrayImage image_t0;
  GrayImage image_t1;
  std::optional<int> label_task1;
  std::optional<int> label_task2;
  Split split = Split::train;
  std::optional<int> fold;
};

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kManifestHeader =
    "case_id,patient_id,image_t0_path,image_t1_path,label_task1,label_task2,split,fold";

Manifest load_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

// Throws ImageError when t0/t1 dimensions differ.
PairSample load_pair(const Manifest& manifest, const PairRecord& row);
std::vector<PairSample> load_pairs(const Manifest& manifest);

// Patient-level fold assignment: patients are shuffled with `seed` and dealt
// round-robin, so fold sizes differ by at most one patient.
void split_folds(Manifest& manifest, int k_folds, std::uint64_t seed);
void split_folds(std::vector<PairSample>& samples, int k_folds, std::uint64_t seed);

}  // namespace ppmae::data

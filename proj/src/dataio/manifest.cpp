#include "ppmae/dataio/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ppmae/util/parallel.hpp"
#include "ppmae/util/rng.hpp"

namespace ppmae::data {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::optional<int> parse_optional_int(const std::string& field, const char* name, std::size_t row, int lo,
                                      int hi) {
  if (field.empty()) return std::nullopt;
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(field, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != field.size()) {
    throw ManifestError("manifest row " + std::to_string(row) + ": field " + name + " is not an integer: '" +
                        field + "'");
  }
  if (v < lo || v > hi) {
    throw ManifestError("manifest row " + std::to_string(row) + ": field " + name + "=" + std::to_string(v) +
                        " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return v;
}

std::vector<int> assign_folds(const std::vector<std::string>& patients, int k_folds, std::uint64_t seed) {
  if (k_folds < 2) throw std::invalid_argument("split_folds: k_folds must be >= 2");
  std::vector<std::string> unique;
  std::set<std::string> seen;
  for (const auto& p : patients) {
    if (seen.insert(p).second) unique.push_back(p);
  }
  if (unique.size() < static_cast<std::size_t>(k_folds)) {
    throw std::invalid_argument("split_folds: " + std::to_string(unique.size()) + " patients for " +
                                std::to_string(k_folds) + " folds");
  }
  Rng rng(hash_seed({seed, 0x666f6c64ULL}));
  rng.shuffle(unique);
  std::map<std::string, int> fold_of;
  for (std::size_t i = 0; i < unique.size(); ++i) fold_of[unique[i]] = static_cast<int>(i % k_folds);
  std::vector<int> out;
  out.reserve(patients.size());
  for (const auto& p : patients) out.push_back(fold_of.at(p));
  return out;
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ManifestError("unknown split '" + s + "'");
}

std::filesystem::path Manifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : source_dir / p;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  Manifest m;
  m.source_dir = path.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw ManifestError("manifest " + path.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) {
    throw ManifestError("manifest " + path.string() + ": unexpected header '" + line + "'");
  }
  std::set<std::string> ids;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 8) {
      throw ManifestError("manifest row " + std::to_string(row) + ": expected 8 fields, got " +
                          std::to_string(f.size()));
    }
    PairRecord r;
    r.case_id = f[0];
    r.patient_id = f[1];
    if (r.case_id.empty() || r.patient_id.empty()) {
      throw ManifestError("manifest row " + std::to_string(row) + ": case_id and patient_id are required");
    }
    if (!ids.insert(r.case_id).second) {
      throw ManifestError("manifest row " + std::to_string(row) + ": duplicate case_id " + r.case_id);
    }
    r.image_t0 = f[2];
    r.image_t1 = f[3];
    r.label_task1 = parse_optional_int(f[4], "label_task1", row, 0, kTask1Classes - 1);
    r.label_task2 = parse_optional_int(f[5], "label_task2", row, 0, kTask2Classes - 1);
    try {
      r.split = parse_split(f[6]);
    } catch (const ManifestError&) {
      throw ManifestError("manifest row " + std::to_string(row) + ": field split has unknown value '" + f[6] +
                          "'");
    }
    r.fold = parse_optional_int(f[7], "fold", row, 0, 1 << 20);
    for (const auto* p : {&r.image_t0, &r.image_t1}) {
      if (!std::filesystem::exists(m.resolve(*p))) {
        throw ManifestError("manifest row " + std::to_string(row) + ": missing file " + m.resolve(*p).string());
      }
    }
    m.rows.push_back(std::move(r));
  }
  return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ManifestError("cannot write manifest " + path.string());
  auto opt = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); };
  out << kManifestHeader << '\n';
  for (const auto& r : manifest.rows) {
    out << r.case_id << ',' << r.patient_id << ',' << r.image_t0.generic_string() << ','
        << r.image_t1.generic_string() << ',' << opt(r.label_task1) << ',' << opt(r.label_task2) << ','
        << to_string(r.split) << ',' << opt(r.fold) << '\n';
  }
  if (!out) throw ManifestError("short write to " + path.string());
}

PairSample load_pair(const Manifest& manifest, const PairRecord& row) {
  PairSample s;
  s.case_id = row.case_id;
  s.patient_id = row.patient_id;
  s.image_t0 = load_image(manifest.resolve(row.image_t0));
  s.image_t1 = load_image(manifest.resolve(row.image_t1));
  if (!s.image_t0.same_size(s.image_t1)) {
    throw ImageError("case " + row.case_id + ": t0 and t1 dimensions differ");
  }
  s.label_task1 = row.label_task1;
  s.label_task2 = row.label_task2;
  s.split = row.split;
  s.fold = row.fold;
  return s;
}

std::vector<PairSample> load_pairs(const Manifest& manifest) {
  std::vector<PairSample> out(manifest.rows.size());
  parallel_for(out.size(), [&](std::size_t i) { out[i] = load_pair(manifest, manifest.rows[i]); });
  return out;
}

void split_folds(Manifest& manifest, int k_folds, std::uint64_t seed) {
  std::vector<std::string> patients;
  for (const auto& r : manifest.rows) patients.push_back(r.patient_id);
  const auto folds = assign_folds(patients, k_folds, seed);
  for (std::size_t i = 0; i < folds.size(); ++i) manifest.rows[i].fold = folds[i];
}

void split_folds(std::vector<PairSample>& samples, int k_folds, std::uint64_t seed) {
  std::vector<std::string> patients;
  for (const auto& s : samples) patients.push_back(s.patient_id);
  const auto folds = assign_folds(patients, k_folds, seed);
  for (std::size_t i = 0; i < folds.size(); ++i) samples[i].fold = folds[i];
}

}  // namespace ppmae::data

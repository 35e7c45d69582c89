#pragma once
// Dataset ingestion and encoding: CSV -> standardized numeric matrix with
// one-hot categoricals, stratified splitting, and uniform-noise column
// injection. Each raw column becomes one Shapley "player"; a categorical's
// indicator columns form a single atomically-masked group.
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "shapnn/matrix.hpp"
#include "shapnn/rng.hpp"

namespace shapnn::data {

enum class ColumnKind { kNumeric, kCategorical };

// What to do with a missing cell in this column.
enum class MissingPolicy { kImputeMean, kMissingCategory };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
  std::vector<std::string> vocabulary;  // categorical only; ends with "__missing__"
  MissingPolicy missing = MissingPolicy::kImputeMean;
  bool synthetic = false;  // injected noise column
};

struct ColumnSchema {
  std::vector<Column> columns;

  void validate() const;  // unique names; non-empty vocab for categoricals

  // Scans the file once: a column is numeric when every non-missing cell
  // parses as a double; otherwise categorical with a sorted vocabulary
  // (plus "__missing__"). The label column is excluded.
  static ColumnSchema infer_from_csv(const std::string& path,
                                     const std::string& label_column);
};

// Per encoded column; one-hot columns carry identity stats (mean 0, std 1).
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct PlayerGroup {
  std::string name;
  std::vector<std::size_t> encoded_cols;
  bool synthetic = false;
};

struct EncodedDataset {
  Matrix X;  // [n x n_encoded], standardized
  std::vector<int> y;
  int n_classes = 0;
  ColumnSchema schema;  // feature columns only
  std::vector<std::string> class_names;
  std::vector<std::string> encoded_names;
  std::vector<PlayerGroup> players;
  NormStats stats;
  std::size_t unseen_category_count = 0;

  std::size_t n() const { return X.rows; }
  std::size_t n_encoded() const { return X.cols; }
  std::size_t n_players() const { return players.size(); }
};

// Loads and encodes a CSV with a header row. Numeric columns are
// standardized with this file's stats (the loaded file is the training
// source; splits inherit the stats). Missing numerics are imputed with the
// column mean; missing or unseen categoricals map to "__missing__" and bump
// the warning counter.
EncodedDataset load_csv(const std::string& path, const ColumnSchema& schema,
                        const std::string& label_column);

// Test-time ingestion: reuses previously computed stats and class names.
EncodedDataset load_csv(const std::string& path, const ColumnSchema& schema,
                        const std::string& label_column, const NormStats& stats,
                        const std::vector<std::string>& class_names);

// Stratified, disjoint, deterministic under seed. Fractions must be
// non-negative and sum to 1.
std::array<EncodedDataset, 3> split(const EncodedDataset& ds, double f_train,
                                    double f_val, double f_test,
                                    std::uint64_t seed);

// Appends round(fraction * n_players) standardized Uniform(0,1) columns,
// flagged synthetic; original columns stay bit-identical.
EncodedDataset inject_noise_features(const EncodedDataset& ds, double fraction,
                                     std::uint64_t seed);

// Census-style synthetic table for benchmarking when no real income extract
// is on disk: mixed numeric/categorical columns, an imbalanced binary income
// label (~25% positive) driven by a logistic score with a
// married-by-education interaction. Written as a raw CSV so it flows through
// the ordinary ingestion path.
void write_adult_like_csv(const std::string& path, std::size_t rows,
                          std::uint64_t seed);

// Wraps pre-built arrays (synthetic data, streams) as an EncodedDataset with
// one numeric player per column and identity stats.
EncodedDataset from_arrays(Matrix X, std::vector<int> y, int n_classes,
                           const std::vector<std::string>& names = {});

// Selects a row subset (copying); keeps schema/stats/players.
EncodedDataset take_rows(const EncodedDataset& ds,
                         const std::vector<std::size_t>& idx);

}  // namespace shapnn::data

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "shapnn/data.hpp"

using namespace shapnn;
using namespace shapnn::data;

namespace {

std::string data_path(const std::string& name) {
  const char* dir = std::getenv("SHAPNN_DATA_DIR");
  return std::string(dir ? dir : "data") + "/" + name;
}

std::string write_temp_csv(const std::string& name, const std::string& body) {
  std::string path = "/tmp/shapnn_test_" + name;
  std::ofstream out(path);
  out << body;
  return path;
}

EncodedDataset load_iris() {
  std::string path = data_path("iris.csv");
  ColumnSchema schema = ColumnSchema::infer_from_csv(path, "species");
  return load_csv(path, schema, "species");
}

}  // namespace

TEST_CASE("iris loads with expected shape and classes") {
  EncodedDataset ds = load_iris();
  CHECK(ds.n() == 150);
  CHECK(ds.n_encoded() == 4);
  CHECK(ds.n_players() == 4);
  CHECK(ds.n_classes == 3);
  REQUIRE(ds.class_names.size() == 3);
  // Class names are sorted, so label ids are reproducible across loads.
  CHECK(ds.class_names[0] == "setosa");
  CHECK(ds.class_names[1] == "versicolor");
  CHECK(ds.class_names[2] == "virginica");
  for (const auto& col : ds.schema.columns)
    CHECK(col.kind == ColumnKind::kNumeric);
  std::size_t per_class[3] = {0, 0, 0};
  for (int label : ds.y) per_class[label]++;
  CHECK(per_class[0] == 50);
  CHECK(per_class[1] == 50);
  CHECK(per_class[2] == 50);
}

TEST_CASE("numeric columns are standardized to zero mean and unit variance") {
  EncodedDataset ds = load_iris();
  for (std::size_t j = 0; j < ds.n_encoded(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < ds.n(); ++i) mean += ds.X(i, j);
    mean /= static_cast<double>(ds.n());
    double var = 0.0;
    for (std::size_t i = 0; i < ds.n(); ++i)
      var += (ds.X(i, j) - mean) * (ds.X(i, j) - mean);
    var /= static_cast<double>(ds.n());
    CHECK(std::fabs(mean) <= 1e-9);
    CHECK(std::fabs(var - 1.0) <= 1e-9);
  }
}

TEST_CASE("schema inference separates numeric and categorical columns") {
  std::string path = write_temp_csv("infer.csv",
                                    "age,color,label\n"
                                    "1.5,red,yes\n"
                                    "2.5,blue,no\n"
                                    "3.5,red,yes\n");
  ColumnSchema schema = ColumnSchema::infer_from_csv(path, "label");
  REQUIRE(schema.columns.size() == 2);
  CHECK(schema.columns[0].name == "age");
  CHECK(schema.columns[0].kind == ColumnKind::kNumeric);
  CHECK(schema.columns[1].name == "color");
  CHECK(schema.columns[1].kind == ColumnKind::kCategorical);
  // Sorted vocabulary with the reserved missing bucket last.
  REQUIRE(schema.columns[1].vocabulary.size() == 3);
  CHECK(schema.columns[1].vocabulary[0] == "blue");
  CHECK(schema.columns[1].vocabulary[1] == "red");
  CHECK(schema.columns[1].vocabulary[2] == "__missing__");
}

TEST_CASE("categoricals one-hot encode and group into a single player") {
  std::string path = write_temp_csv("onehot.csv",
                                    "age,color,label\n"
                                    "1.0,red,yes\n"
                                    "2.0,blue,no\n"
                                    "3.0,green,yes\n");
  ColumnSchema schema = ColumnSchema::infer_from_csv(path, "label");
  EncodedDataset ds = load_csv(path, schema, "label");
  // 1 numeric + 4 one-hot (blue, green, red, __missing__) = 5 encoded columns,
  // but only 2 players.
  CHECK(ds.n_encoded() == 5);
  CHECK(ds.n_players() == 2);
  CHECK(ds.players[1].encoded_cols.size() == 4);
  // Row 0 is "red": exactly the red indicator fires within the group.
  double red = ds.X(0, 3);  // columns: age, color=blue, color=green, color=red
  CHECK(red == 1.0);
  CHECK(ds.X(0, 1) == 0.0);
  CHECK(ds.X(0, 2) == 0.0);
  CHECK(ds.X(0, 4) == 0.0);
}

TEST_CASE("missing cells impute the column mean deterministically") {
  std::string body =
      "v,label\n"
      "1.0,a\n"
      "?,b\n"
      "3.0,a\n"
      "5.0,b\n";
  std::string path = write_temp_csv("missing.csv", body);
  ColumnSchema schema = ColumnSchema::infer_from_csv(path, "label");
  EncodedDataset a = load_csv(path, schema, "label");
  EncodedDataset b = load_csv(path, schema, "label");
  // Imputed value equals the observed mean (3.0), i.e. exactly 0 after
  // standardization, and reloads are bit-identical.
  CHECK(a.X(1, 0) == 0.0);
  for (std::size_t i = 0; i < a.X.a.size(); ++i) CHECK(a.X.a[i] == b.X.a[i]);
}

TEST_CASE("unseen categories at reuse time map to the missing bucket") {
  std::string train = write_temp_csv("train_cat.csv",
                                     "c,label\n"
                                     "red,a\n"
                                     "blue,b\n");
  std::string test = write_temp_csv("test_cat.csv",
                                    "c,label\n"
                                    "purple,a\n");
  ColumnSchema schema = ColumnSchema::infer_from_csv(train, "label");
  EncodedDataset tr = load_csv(train, schema, "label");
  EncodedDataset te = load_csv(test, schema, "label", tr.stats, tr.class_names);
  CHECK(te.unseen_category_count == 1);
  // vocab columns: blue, red, __missing__ -> the missing indicator fires.
  CHECK(te.X(0, 2) == 1.0);
}

TEST_CASE("constant numeric columns standardize to zero, not NaN") {
  std::string path = write_temp_csv("const.csv",
                                    "v,w,label\n"
                                    "7.0,1.0,a\n"
                                    "7.0,2.0,b\n"
                                    "7.0,3.0,a\n");
  ColumnSchema schema = ColumnSchema::infer_from_csv(path, "label");
  EncodedDataset ds = load_csv(path, schema, "label");
  for (std::size_t i = 0; i < ds.n(); ++i) {
    CHECK(ds.X(i, 0) == 0.0);
    CHECK(std::isfinite(ds.X(i, 0)));
  }
}

TEST_CASE("split is stratified, disjoint, and deterministic") {
  EncodedDataset ds = load_iris();
  auto parts = split(ds, 0.6, 0.2, 0.2, 17);
  CHECK(parts[0].n() == 90);
  CHECK(parts[1].n() == 30);
  CHECK(parts[2].n() == 30);
  for (const auto& part : parts) {
    std::size_t per_class[3] = {0, 0, 0};
    for (int label : part.y) per_class[label]++;
    // Exact stratification: 150 rows split 50/50/50 by class.
    CHECK(per_class[0] == per_class[1]);
    CHECK(per_class[1] == per_class[2]);
  }
  auto again = split(ds, 0.6, 0.2, 0.2, 17);
  for (int p = 0; p < 3; ++p)
    for (std::size_t i = 0; i < parts[p].X.a.size(); ++i)
      CHECK(parts[p].X.a[i] == again[p].X.a[i]);
  auto other = split(ds, 0.6, 0.2, 0.2, 18);
  bool any_diff = false;
  for (std::size_t i = 0; i < parts[0].X.a.size() && !any_diff; ++i)
    any_diff = parts[0].X.a[i] != other[0].X.a[i];
  CHECK(any_diff);
}

TEST_CASE("split partitions every row exactly once") {
  EncodedDataset ds = load_iris();
  auto parts = split(ds, 0.5, 0.25, 0.25, 3);
  // Rows are unique within iris up to measurement duplicates, so count by
  // feature signature instead of identity.
  std::multiset<std::string> seen;
  for (const auto& part : parts)
    for (std::size_t i = 0; i < part.n(); ++i) {
      std::string key;
      for (std::size_t j = 0; j < part.n_encoded(); ++j)
        key += std::to_string(part.X(i, j)) + "|";
      seen.insert(key);
    }
  std::multiset<std::string> all;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    std::string key;
    for (std::size_t j = 0; j < ds.n_encoded(); ++j)
      key += std::to_string(ds.X(i, j)) + "|";
    all.insert(key);
  }
  CHECK(seen == all);
}

TEST_CASE("degenerate split fractions are allowed when non-negative") {
  EncodedDataset ds = load_iris();
  auto parts = split(ds, 1.0, 0.0, 0.0, 5);
  CHECK(parts[0].n() == 150);
  CHECK(parts[1].n() == 0);
  CHECK(parts[2].n() == 0);
  CHECK_THROWS_AS(split(ds, 1.2, -0.2, 0.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(split(ds, 0.5, 0.2, 0.2, 5), std::invalid_argument);
}

TEST_CASE("every active split receives at least one row per class") {
  // Tiny dataset: 2 classes x 3 rows with a three-way split.
  std::string path = write_temp_csv("tiny_split.csv",
                                    "v,label\n"
                                    "1,a\n2,a\n3,a\n4,b\n5,b\n6,b\n");
  ColumnSchema schema = ColumnSchema::infer_from_csv(path, "label");
  EncodedDataset ds = load_csv(path, schema, "label");
  auto parts = split(ds, 0.34, 0.33, 0.33, 9);
  for (const auto& part : parts) {
    std::size_t per_class[2] = {0, 0};
    for (int label : part.y) per_class[label]++;
    CHECK(per_class[0] >= 1);
    CHECK(per_class[1] >= 1);
  }
}

TEST_CASE("noise injection appends the requested number of synthetic players") {
  EncodedDataset ds = load_iris();
  EncodedDataset noisy = inject_noise_features(ds, 0.5, 21);
  CHECK(noisy.n_players() == 6);  // round(0.5 * 4) = 2 extra
  CHECK(noisy.n_encoded() == 6);
  CHECK(noisy.players[4].synthetic);
  CHECK(noisy.players[5].synthetic);
  CHECK(noisy.schema.columns[4].name == "noise_0");
  CHECK_FALSE(noisy.players[0].synthetic);
  // Original columns stay bit-identical.
  for (std::size_t i = 0; i < ds.n(); ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(noisy.X(i, j) == ds.X(i, j));
  // Injection at 100% doubles the player count.
  EncodedDataset full = inject_noise_features(ds, 1.0, 21);
  CHECK(full.n_players() == 8);
  // Deterministic under the seed.
  EncodedDataset again = inject_noise_features(ds, 0.5, 21);
  for (std::size_t i = 0; i < noisy.X.a.size(); ++i)
    CHECK(noisy.X.a[i] == again.X.a[i]);
}

TEST_CASE("injected noise is uniform on [0,1] before standardization") {
  EncodedDataset ds = load_iris();
  EncodedDataset noisy = inject_noise_features(ds, 1.0, 33);
  for (std::size_t j = 4; j < noisy.n_encoded(); ++j) {
    std::vector<double> raw(noisy.n());
    for (std::size_t i = 0; i < noisy.n(); ++i)
      raw[i] = noisy.X(i, j) * noisy.stats.stddev[j] + noisy.stats.mean[j];
    std::sort(raw.begin(), raw.end());
    double d = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      CHECK(raw[i] >= 0.0);
      CHECK(raw[i] <= 1.0);
      double lo = static_cast<double>(i) / raw.size();
      double hi = static_cast<double>(i + 1) / raw.size();
      d = std::max({d, std::fabs(raw[i] - lo), std::fabs(hi - raw[i])});
    }
    // Kolmogorov-Smirnov critical value at alpha=0.01 for n=150.
    CHECK(d <= 0.1329256433750338);
  }
}

TEST_CASE("from_arrays wraps matrices with identity stats") {
  Matrix X(2, 3);
  X.set_row(0, {1.0, 2.0, 3.0});
  X.set_row(1, {4.0, 5.0, 6.0});
  EncodedDataset ds = from_arrays(X, {0, 1}, 2, {"a", "b", "c"});
  CHECK(ds.n() == 2);
  CHECK(ds.n_players() == 3);
  CHECK(ds.encoded_names[1] == "b");
  CHECK(ds.stats.mean[0] == 0.0);
  CHECK(ds.stats.stddev[0] == 1.0);
  CHECK(ds.X(1, 2) == 6.0);
}

TEST_CASE("take_rows copies the requested subset in order") {
  EncodedDataset ds = load_iris();
  EncodedDataset sub = take_rows(ds, {5, 70, 120});
  REQUIRE(sub.n() == 3);
  CHECK(sub.y[0] == ds.y[5]);
  CHECK(sub.y[1] == ds.y[70]);
  CHECK(sub.y[2] == ds.y[120]);
  for (std::size_t j = 0; j < ds.n_encoded(); ++j)
    CHECK(sub.X(2, j) == ds.X(120, j));
}

TEST_CASE("reloading with saved stats reproduces the encoding exactly") {
  std::string path = data_path("iris.csv");
  ColumnSchema schema = ColumnSchema::infer_from_csv(path, "species");
  EncodedDataset first = load_csv(path, schema, "species");
  EncodedDataset second =
      load_csv(path, schema, "species", first.stats, first.class_names);
  REQUIRE(second.n() == first.n());
  for (std::size_t i = 0; i < first.X.a.size(); ++i)
    CHECK(second.X.a[i] == first.X.a[i]);
  CHECK(second.y == first.y);
}

TEST_CASE("missing label rows are rejected") {
  std::string path = write_temp_csv("badlabel.csv",
                                    "v,label\n"
                                    "1.0,a\n"
                                    "2.0,\n");
  ColumnSchema schema = ColumnSchema::infer_from_csv(path, "label");
  CHECK_THROWS_AS(load_csv(path, schema, "label"), std::runtime_error);
}

TEST_CASE("nonexistent file raises a readable error") {
  ColumnSchema schema;
  CHECK_THROWS_AS(load_csv("/nonexistent/nope.csv", schema, "label"),
                  std::runtime_error);
  CHECK_THROWS_AS(ColumnSchema::infer_from_csv("/nonexistent/nope.csv", "label"),
                  std::runtime_error);
}

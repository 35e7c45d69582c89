#include "shapnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace shapnn::data {

namespace {

constexpr const char* kMissingToken = "__missing__";

bool cell_is_missing(const std::string& s) {
  return s.empty() || s == "?" || s == "NA" || s == "nan";
}

bool parse_double(const std::string& s, double* out) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
      ++pos;
    if (pos != s.size()) return false;
    *out = v;
    return true;
  } catch (...) {
    return false;
  }
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  for (std::string& s : cells) {
    std::size_t b = s.find_first_not_of(" \t");
    std::size_t e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
  }
  return cells;
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

RawTable read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  RawTable t;
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty file: " + path);
  t.header = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells = split_line(line);
    if (cells.size() != t.header.size())
      throw std::runtime_error(path + ": row " +
                               std::to_string(t.rows.size() + 2) + " has " +
                               std::to_string(cells.size()) +
                               " cells, header has " +
                               std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

std::size_t find_column(const std::vector<std::string>& header,
                        const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw std::invalid_argument("unknown column: " + name);
}

}  // namespace

void ColumnSchema::validate() const {
  std::set<std::string> seen;
  for (const Column& c : columns) {
    if (!seen.insert(c.name).second)
      throw std::invalid_argument("duplicate column name: " + c.name);
    if (c.kind == ColumnKind::kCategorical && c.vocabulary.empty())
      throw std::invalid_argument("categorical column with empty vocabulary: " +
                                  c.name);
  }
}

ColumnSchema ColumnSchema::infer_from_csv(const std::string& path,
                                          const std::string& label_column) {
  RawTable t = read_table(path);
  std::size_t label_idx = find_column(t.header, label_column);
  ColumnSchema schema;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (c == label_idx) continue;
    Column col;
    col.name = t.header[c];
    bool numeric = true;
    std::set<std::string> vocab;
    for (const auto& row : t.rows) {
      const std::string& cell = row[c];
      if (cell_is_missing(cell)) continue;
      double v;
      if (!parse_double(cell, &v)) numeric = false;
      vocab.insert(cell);
    }
    if (numeric) {
      col.kind = ColumnKind::kNumeric;
      col.missing = MissingPolicy::kImputeMean;
    } else {
      col.kind = ColumnKind::kCategorical;
      col.missing = MissingPolicy::kMissingCategory;
      col.vocabulary.assign(vocab.begin(), vocab.end());
      col.vocabulary.push_back(kMissingToken);
    }
    schema.columns.push_back(std::move(col));
  }
  schema.validate();
  return schema;
}

namespace {

EncodedDataset encode_table(const RawTable& t, const ColumnSchema& schema,
                            const std::string& label_column,
                            const NormStats* reuse_stats,
                            const std::vector<std::string>* reuse_classes) {
  schema.validate();
  std::size_t label_idx = find_column(t.header, label_column);
  std::vector<std::size_t> col_idx;
  for (const Column& c : schema.columns) col_idx.push_back(find_column(t.header, c.name));

  EncodedDataset ds;
  ds.schema = schema;

  // Label encoding: sorted vocabulary for determinism, or the provided one.
  if (reuse_classes) {
    ds.class_names = *reuse_classes;
  } else {
    std::set<std::string> labels;
    for (const auto& row : t.rows) labels.insert(row[label_idx]);
    ds.class_names.assign(labels.begin(), labels.end());
    for (const std::string& name : ds.class_names)
      if (cell_is_missing(name))
        throw std::runtime_error("label column '" + label_column +
                                 "' contains a missing value");
  }
  std::map<std::string, int> label_of;
  for (std::size_t i = 0; i < ds.class_names.size(); ++i)
    label_of[ds.class_names[i]] = static_cast<int>(i);
  ds.n_classes = static_cast<int>(ds.class_names.size());

  // Encoded layout and player groups.
  std::size_t n_enc = 0;
  for (const Column& c : schema.columns) {
    PlayerGroup g;
    g.name = c.name;
    g.synthetic = c.synthetic;
    if (c.kind == ColumnKind::kNumeric) {
      ds.encoded_names.push_back(c.name);
      g.encoded_cols.push_back(n_enc++);
    } else {
      for (const std::string& v : c.vocabulary) {
        ds.encoded_names.push_back(c.name + "=" + v);
        g.encoded_cols.push_back(n_enc++);
      }
    }
    ds.players.push_back(std::move(g));
  }

  std::size_t n = t.rows.size();
  ds.X = Matrix(n, n_enc);
  ds.y.resize(n);

  // First pass: raw values; numeric missing marked NaN for later imputation.
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = t.rows[r];
    auto it = label_of.find(row[label_idx]);
    if (it == label_of.end())
      throw std::runtime_error("unseen label at row " + std::to_string(r + 2) +
                               ": " + row[label_idx]);
    ds.y[r] = it->second;
    std::size_t e = 0;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const Column& col = schema.columns[c];
      const std::string& cell = row[col_idx[c]];
      if (col.kind == ColumnKind::kNumeric) {
        double v;
        if (cell_is_missing(cell)) {
          v = std::nan("");
        } else if (!parse_double(cell, &v)) {
          throw std::runtime_error("unparseable numeric cell '" + cell +
                                   "' in column " + col.name + " at row " +
                                   std::to_string(r + 2));
        }
        ds.X(r, e++) = v;
      } else {
        std::size_t hit = col.vocabulary.size() - 1;  // "__missing__"
        if (!cell_is_missing(cell)) {
          auto vit = std::find(col.vocabulary.begin(), col.vocabulary.end(), cell);
          if (vit != col.vocabulary.end()) {
            hit = static_cast<std::size_t>(vit - col.vocabulary.begin());
          } else {
            ++ds.unseen_category_count;
          }
        }
        for (std::size_t v = 0; v < col.vocabulary.size(); ++v)
          ds.X(r, e++) = v == hit ? 1.0 : 0.0;
      }
    }
  }

  // Impute numeric NaNs with the column mean, then standardize.
  ds.stats.mean.assign(n_enc, 0.0);
  ds.stats.stddev.assign(n_enc, 1.0);
  std::size_t e = 0;
  for (const Column& col : schema.columns) {
    if (col.kind != ColumnKind::kNumeric) {
      e += col.vocabulary.size();
      continue;
    }
    double mean, sd;
    if (reuse_stats) {
      mean = reuse_stats->mean[e];
      sd = reuse_stats->stddev[e];
    } else {
      double sum = 0.0;
      std::size_t cnt = 0;
      for (std::size_t r = 0; r < n; ++r)
        if (!std::isnan(ds.X(r, e))) {
          sum += ds.X(r, e);
          ++cnt;
        }
      mean = cnt ? sum / static_cast<double>(cnt) : 0.0;
      double ss = 0.0;
      for (std::size_t r = 0; r < n; ++r)
        if (!std::isnan(ds.X(r, e))) {
          double d = ds.X(r, e) - mean;
          ss += d * d;
        }
      sd = cnt ? std::sqrt(ss / static_cast<double>(cnt)) : 1.0;
      if (sd < 1e-12) sd = 1.0;  // constant column: clamp to avoid div by zero
    }
    for (std::size_t r = 0; r < n; ++r) {
      double v = std::isnan(ds.X(r, e)) ? mean : ds.X(r, e);
      ds.X(r, e) = (v - mean) / sd;
    }
    ds.stats.mean[e] = mean;
    ds.stats.stddev[e] = sd;
    ++e;
  }
  if (reuse_stats) ds.stats = *reuse_stats;
  return ds;
}

}  // namespace

EncodedDataset load_csv(const std::string& path, const ColumnSchema& schema,
                        const std::string& label_column) {
  return encode_table(read_table(path), schema, label_column, nullptr, nullptr);
}

EncodedDataset load_csv(const std::string& path, const ColumnSchema& schema,
                        const std::string& label_column, const NormStats& stats,
                        const std::vector<std::string>& class_names) {
  return encode_table(read_table(path), schema, label_column, &stats,
                      &class_names);
}

EncodedDataset take_rows(const EncodedDataset& ds,
                         const std::vector<std::size_t>& idx) {
  EncodedDataset out = ds;
  out.X = Matrix(idx.size(), ds.X.cols);
  out.y.resize(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy(ds.X.row(idx[r]), ds.X.row(idx[r]) + ds.X.cols, out.X.row(r));
    out.y[r] = ds.y[idx[r]];
  }
  return out;
}

std::array<EncodedDataset, 3> split(const EncodedDataset& ds, double f_train,
                                    double f_val, double f_test,
                                    std::uint64_t seed) {
  const double fr[3] = {f_train, f_val, f_test};
  double sum = f_train + f_val + f_test;
  for (double f : fr)
    if (f < 0.0)
      throw std::invalid_argument("split: fractions must be non-negative");
  if (std::fabs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split: fractions sum to " +
                                std::to_string(sum) + ", expected 1");
  std::size_t active = 0;
  for (double f : fr) active += (f > 0.0);

  std::vector<std::vector<std::size_t>> by_class(ds.n_classes);
  for (std::size_t r = 0; r < ds.n(); ++r) by_class[ds.y[r]].push_back(r);
  for (int k = 0; k < ds.n_classes; ++k)
    if (by_class[k].size() < active)
      throw std::invalid_argument("split: class " + ds.class_names[k] + " has " +
                                  std::to_string(by_class[k].size()) +
                                  " samples, fewer than " +
                                  std::to_string(active) + " splits");

  Rng rng(seed);
  std::vector<std::size_t> parts[3];
  for (int k = 0; k < ds.n_classes; ++k) {
    auto idx = by_class[k];
    rng.shuffle(idx);
    std::size_t n_k = idx.size();
    // Largest-remainder allocation, then guarantee each active split a row.
    std::size_t counts[3];
    double rem[3];
    std::size_t assigned = 0;
    for (int p = 0; p < 3; ++p) {
      double want = fr[p] * static_cast<double>(n_k);
      counts[p] = static_cast<std::size_t>(want);
      rem[p] = want - static_cast<double>(counts[p]);
      assigned += counts[p];
    }
    while (assigned < n_k) {
      int best = 0;
      for (int p = 1; p < 3; ++p)
        if (rem[p] > rem[best]) best = p;
      ++counts[best];
      rem[best] = -1.0;
      ++assigned;
    }
    for (int p = 0; p < 3; ++p)
      if (fr[p] > 0.0 && counts[p] == 0) {
        int donor = 0;
        for (int q = 1; q < 3; ++q)
          if (counts[q] > counts[donor]) donor = q;
        --counts[donor];
        ++counts[p];
      }
    std::size_t off = 0;
    for (int p = 0; p < 3; ++p) {
      for (std::size_t i = 0; i < counts[p]; ++i)
        parts[p].push_back(idx[off + i]);
      off += counts[p];
    }
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return {take_rows(ds, parts[0]), take_rows(ds, parts[1]),
          take_rows(ds, parts[2])};
}

EncodedDataset inject_noise_features(const EncodedDataset& ds, double fraction,
                                     std::uint64_t seed) {
  if (fraction < 0.0)
    throw std::invalid_argument("inject_noise_features: fraction must be >= 0");
  std::size_t n_new = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(ds.n_players())));
  if (n_new == 0) return ds;

  EncodedDataset out = ds;
  std::size_t old_cols = ds.X.cols;
  out.X = Matrix(ds.n(), old_cols + n_new);
  for (std::size_t r = 0; r < ds.n(); ++r)
    std::copy(ds.X.row(r), ds.X.row(r) + old_cols, out.X.row(r));

  Rng rng(seed);
  for (std::size_t j = 0; j < n_new; ++j) {
    std::size_t e = old_cols + j;
    std::vector<double> raw(ds.n());
    for (std::size_t r = 0; r < ds.n(); ++r) raw[r] = rng.uniform();
    double mean = 0.0;
    for (double v : raw) mean += v;
    mean /= static_cast<double>(ds.n());
    double ss = 0.0;
    for (double v : raw) ss += (v - mean) * (v - mean);
    double sd = std::sqrt(ss / static_cast<double>(ds.n()));
    if (sd < 1e-12) sd = 1.0;
    for (std::size_t r = 0; r < ds.n(); ++r)
      out.X(r, e) = (raw[r] - mean) / sd;

    std::string name = "noise_" + std::to_string(j);
    Column col;
    col.name = name;
    col.kind = ColumnKind::kNumeric;
    col.synthetic = true;
    out.schema.columns.push_back(col);
    out.encoded_names.push_back(name);
    PlayerGroup g;
    g.name = name;
    g.encoded_cols.push_back(e);
    g.synthetic = true;
    out.players.push_back(std::move(g));
    out.stats.mean.push_back(mean);
    out.stats.stddev.push_back(sd);
  }
  return out;
}

void write_adult_like_csv(const std::string& path, std::size_t rows,
                          std::uint64_t seed) {
  if (rows < 1)
    throw std::invalid_argument("write_adult_like_csv: rows must be positive");
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("write_adult_like_csv: cannot open " + path);

  const char* workclass[4] = {"private", "self_employed", "government",
                              "other"};
  const double workclass_cum[4] = {0.70, 0.82, 0.95, 1.0};
  const char* marital[4] = {"married", "never_married", "divorced", "widowed"};
  const double marital_cum[4] = {0.47, 0.80, 0.94, 1.0};
  const char* occupation[6] = {"professional", "technical", "administrative",
                               "service",      "manual",    "sales"};
  const double occupation_cum[6] = {0.17, 0.30, 0.45, 0.62, 0.88, 1.0};
  const char* sex[2] = {"male", "female"};

  auto pick = [](const double* cum, std::size_t n, double u) {
    std::size_t i = 0;
    while (i + 1 < n && u > cum[i]) ++i;
    return i;
  };

  Rng rng(seed);
  out << "age,workclass,education_num,marital,occupation,hours_per_week,"
         "capital_gain,sex,income\n";
  for (std::size_t r = 0; r < rows; ++r) {
    int age = static_cast<int>(std::lround(38.0 + 13.0 * rng.normal()));
    age = std::min(90, std::max(17, age));
    std::size_t wc = pick(workclass_cum, 4, rng.uniform());
    int edu = 1 + static_cast<int>(rng.index(16));
    std::size_t ms = pick(marital_cum, 4, rng.uniform());
    std::size_t oc = pick(occupation_cum, 6, rng.uniform());
    int hours = static_cast<int>(std::lround(40.0 + 12.0 * rng.normal()));
    hours = std::min(99, std::max(1, hours));
    // Zero-inflated heavy tail: most rows have no capital gain at all.
    int gain = 0;
    if (rng.uniform() < 0.08)
      gain = static_cast<int>(1000.0 * std::exp(1.5 * rng.normal()));
    std::size_t sx = rng.index(2);

    // Log-odds of the high-income class: education and age matter most,
    // being married amplifies the education effect (the interaction term),
    // and any capital gain is a strong direct signal. The intercept centers
    // the positive rate near 25%.
    double logit = -2.7 + 0.035 * (age - 38) + 0.33 * (edu - 9) +
                   0.025 * (hours - 40) + 1.1 * (ms == 0) +
                   0.7 * (oc == 0 || oc == 1) +
                   0.12 * (ms == 0) * (edu - 9) + 1.4 * (gain > 0);
    double p = 1.0 / (1.0 + std::exp(-logit));
    const char* income = rng.uniform() < p ? ">50K" : "<=50K";

    out << age << ',' << workclass[wc] << ',' << edu << ',' << marital[ms]
        << ',' << occupation[oc] << ',' << hours << ',' << gain << ','
        << sex[sx] << ',' << income << "\n";
  }
}

EncodedDataset from_arrays(Matrix X, std::vector<int> y, int n_classes,
                           const std::vector<std::string>& names) {
  if (X.rows != y.size())
    throw std::invalid_argument("from_arrays: X rows " +
                                std::to_string(X.rows) + " != labels " +
                                std::to_string(y.size()));
  EncodedDataset ds;
  ds.n_classes = n_classes;
  for (int k = 0; k < n_classes; ++k)
    ds.class_names.push_back("class_" + std::to_string(k));
  for (std::size_t c = 0; c < X.cols; ++c) {
    std::string name =
        c < names.size() ? names[c] : "x" + std::to_string(c);
    Column col;
    col.name = name;
    ds.schema.columns.push_back(col);
    ds.encoded_names.push_back(name);
    PlayerGroup g;
    g.name = name;
    g.encoded_cols.push_back(c);
    ds.players.push_back(std::move(g));
  }
  ds.stats.mean.assign(X.cols, 0.0);
  ds.stats.stddev.assign(X.cols, 1.0);
  ds.X = std::move(X);
  ds.y = std::move(y);
  return ds;
}

}  // namespace shapnn::data

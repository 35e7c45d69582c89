#include "shapnn/stream.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "shapnn/rng.hpp"

namespace shapnn::data {

StreamKind stream_kind_from_name(const std::string& name) {
  if (name == "STA" || name == "sta") return StreamKind::kSTA;
  if (name == "SEA" || name == "sea") return StreamKind::kSEA;
  if (name == "ROT" || name == "rot") return StreamKind::kROT;
  throw std::invalid_argument("unknown stream kind: " + name);
}

std::string stream_kind_name(StreamKind kind) {
  switch (kind) {
    case StreamKind::kSTA: return "STA";
    case StreamKind::kSEA: return "SEA";
    case StreamKind::kROT: return "ROT";
  }
  throw std::logic_error("unreachable stream kind");
}

std::size_t stream_feature_count(StreamKind kind) {
  switch (kind) {
    case StreamKind::kSTA: return 9;
    case StreamKind::kSEA: return 7;
    case StreamKind::kROT: return 10;
  }
  throw std::logic_error("unreachable stream kind");
}

std::vector<std::string> stream_feature_names(StreamKind kind) {
  std::vector<std::string> names;
  switch (kind) {
    case StreamKind::kSTA: {
      const char* attrs[3] = {"size", "color", "shape"};
      const char* values[3][3] = {{"small", "medium", "large"},
                                  {"red", "green", "blue"},
                                  {"circle", "square", "triangle"}};
      for (int a = 0; a < 3; ++a)
        for (int v = 0; v < 3; ++v)
          names.push_back(std::string(attrs[a]) + "=" + values[a][v]);
      break;
    }
    case StreamKind::kSEA:
      for (std::size_t i = 0; i < 7; ++i)
        names.push_back("x" + std::to_string(i + 1));
      break;
    case StreamKind::kROT:
      for (std::size_t i = 0; i < 10; ++i)
        names.push_back("x" + std::to_string(i + 1));
      break;
  }
  return names;
}

double stream_input_scale(StreamKind kind) {
  return kind == StreamKind::kSEA ? 10.0 : 1.0;
}

int stream_drift_period(StreamKind kind) {
  return kind == StreamKind::kSEA ? 5 : 4;
}

std::size_t stream_concept_count(StreamKind kind) {
  (void)kind;
  return 3;
}

namespace {

// STA (STAGGER): attributes size/color/shape with 3 values each. The three
// classic boolean concepts.
int sta_label(const int a[3], int concept_idx) {
  switch (concept_idx) {
    case 0: return (a[0] == 0 && a[1] == 0) ? 1 : 0;  // small and red
    case 1: return (a[1] == 1 || a[2] == 0) ? 1 : 0;  // green or circle
    default: return (a[0] == 1 || a[0] == 2) ? 1 : 0; // medium or large
  }
}

// SEA concept pool: label = [x_i + x_j <= theta]; the active pair drifts
// along with theta (a theta-only shift never changes the score ranking and
// is invisible to AUROC). x7 is always irrelevant.
struct SeaConcept {
  int i, j;
  double theta;
};
constexpr SeaConcept kSeaPool[3] = {{0, 1, 8.0}, {2, 3, 9.0}, {4, 5, 7.0}};

}  // namespace

std::vector<StreamBatch> stream_generate(const StreamConfig& cfg) {
  if (cfg.steps < 1) throw std::invalid_argument("stream_generate: steps >= 1");
  if (cfg.batch_size < 1)
    throw std::invalid_argument("stream_generate: batch_size >= 1");
  if (cfg.drift_period < 1)
    throw std::invalid_argument("stream_generate: drift_period >= 1");
  if (cfg.label_noise < 0.0 || cfg.label_noise > 1.0)
    throw std::invalid_argument("stream_generate: label_noise in [0,1]");

  Rng rng(cfg.seed);
  Rng noise_rng = rng.fork(1);  // keeps feature draws independent of noise
  std::size_t n_feat = stream_feature_count(cfg.kind);
  std::size_t n_concepts = stream_concept_count(cfg.kind);

  // ROT: pool of mutually orthonormal hyperplane normals (Gram-Schmidt on
  // seeded gaussian draws); label = [w . x >= w . x0], x0 = (0.5, ..., 0.5).
  std::vector<std::vector<double>> rot_w;
  std::vector<double> rot_offset;
  if (cfg.kind == StreamKind::kROT) {
    for (std::size_t c = 0; c < n_concepts; ++c) {
      std::vector<double> w(n_feat);
      for (double& v : w) v = rng.normal();
      for (const auto& prev : rot_w) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n_feat; ++i) dot += w[i] * prev[i];
        for (std::size_t i = 0; i < n_feat; ++i) w[i] -= dot * prev[i];
      }
      double norm = 0.0;
      for (double v : w) norm += v * v;
      norm = std::sqrt(norm);
      for (double& v : w) v /= norm;
      double off = 0.0;
      for (double v : w) off += 0.5 * v;
      rot_w.push_back(std::move(w));
      rot_offset.push_back(off);
    }
  }

  int concept_idx = static_cast<int>(rng.index(n_concepts));
  std::vector<StreamBatch> batches;
  batches.reserve(cfg.steps);
  for (int t = 0; t < cfg.steps; ++t) {
    if (t > 0 && t % cfg.drift_period == 0) {
      int next = static_cast<int>(rng.index(n_concepts));
      while (next == concept_idx) next = static_cast<int>(rng.index(n_concepts));
      concept_idx = next;
    }
    StreamBatch batch;
    batch.t = t;
    batch.concept_id = concept_idx;
    batch.X = Matrix(cfg.batch_size, n_feat);
    batch.y.resize(cfg.batch_size);
    for (int r = 0; r < cfg.batch_size; ++r) {
      double* row = batch.X.row(r);
      int label = 0;
      switch (cfg.kind) {
        case StreamKind::kSTA: {
          int a[3];
          for (int k = 0; k < 3; ++k) {
            a[k] = static_cast<int>(rng.index(3));
            row[3 * k + a[k]] = 1.0;
          }
          label = sta_label(a, concept_idx);
          break;
        }
        case StreamKind::kSEA: {
          for (std::size_t i = 0; i < n_feat; ++i) row[i] = rng.uniform(0.0, 10.0);
          const SeaConcept& c = kSeaPool[concept_idx];
          label = row[c.i] + row[c.j] <= c.theta ? 1 : 0;
          break;
        }
        case StreamKind::kROT: {
          double dot = 0.0;
          for (std::size_t i = 0; i < n_feat; ++i) {
            row[i] = rng.uniform();
            dot += row[i] * rot_w[concept_idx][i];
          }
          label = dot >= rot_offset[concept_idx] ? 1 : 0;
          break;
        }
      }
      if (cfg.label_noise > 0.0 && noise_rng.uniform() < cfg.label_noise)
        label = 1 - label;
      batch.y[r] = label;
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

void export_stream(const std::string& dir, const StreamConfig& cfg,
                   const std::vector<StreamBatch>& batches) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> names = stream_feature_names(cfg.kind);
  nlohmann::json manifest;
  manifest["kind"] = stream_kind_name(cfg.kind);
  manifest["steps"] = cfg.steps;
  manifest["batch_size"] = cfg.batch_size;
  manifest["drift_period"] = cfg.drift_period;
  manifest["seed"] = cfg.seed;
  manifest["label_noise"] = cfg.label_noise;
  manifest["feature_names"] = names;
  manifest["concept_ids"] = nlohmann::json::array();
  for (const StreamBatch& b : batches) {
    manifest["concept_ids"].push_back(b.concept_id);
    char fname[32];
    std::snprintf(fname, sizeof(fname), "step_%04d.csv", b.t);
    std::ofstream out(std::filesystem::path(dir) / fname);
    for (const std::string& n : names) out << n << ",";
    out << "label\n";
    for (std::size_t r = 0; r < b.X.rows; ++r) {
      const double* row = b.X.row(r);
      for (std::size_t c = 0; c < b.X.cols; ++c) out << row[c] << ",";
      out << b.y[r] << "\n";
    }
  }
  std::ofstream mout(std::filesystem::path(dir) / "manifest.json");
  mout << manifest.dump(2) << "\n";
}

}  // namespace shapnn::data

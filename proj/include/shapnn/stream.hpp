#pragma once
// Synthetic concept-drift stream generators (STA / SEA / ROT). Concepts come
// from a fixed per-stream pool and are resampled at every drift boundary
// (always to a different pool entry, so each boundary is a real drift;
// recurrence happens through later revisits).
#include <cstdint>
#include <string>
#include <vector>

#include "shapnn/matrix.hpp"

namespace shapnn::data {

enum class StreamKind { kSTA, kSEA, kROT };

StreamKind stream_kind_from_name(const std::string& name);
std::string stream_kind_name(StreamKind kind);

struct StreamBatch {
  int t = 0;
  Matrix X;
  std::vector<int> y;
  int concept_id = 0;
};

struct StreamConfig {
  StreamKind kind = StreamKind::kSTA;
  int steps = 50;
  int batch_size = 200;
  int drift_period = 5;
  std::uint64_t seed = 0;
  double label_noise = 0.0;  // per-label flip probability
};

// Raw feature width (STA: 9 one-hot columns for 3 ternary attributes;
// SEA: 7 uniforms on [0,10); ROT: 10 uniforms on [0,1)).
std::size_t stream_feature_count(StreamKind kind);
std::vector<std::string> stream_feature_names(StreamKind kind);

// Scale divisor applied by consumers so model inputs sit in [0,1].
double stream_input_scale(StreamKind kind);

// Calibrated drift cadence (batches per concept segment) of the benchmark
// streams.
int stream_drift_period(StreamKind kind);

std::size_t stream_concept_count(StreamKind kind);

std::vector<StreamBatch> stream_generate(const StreamConfig& cfg);

// Directory of per-step CSVs plus a JSON manifest (kind, seed, schedule).
void export_stream(const std::string& dir, const StreamConfig& cfg,
                   const std::vector<StreamBatch>& batches);

}  // namespace shapnn::data

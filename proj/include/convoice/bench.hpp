// convoice/bench.hpp
//
// Latency / real-time-factor harness. Only the encoder and decoder forward
// passes are timed; the frontend runs beforehand and no vocoding happens.

#pragma once

#include <filesystem>
#include <vector>

#include "json.hpp"
#include "convoice/pipeline.hpp"

namespace convoice {

struct BenchReport {
  std::size_t batch_size = 1;
  double mean_latency_s = 0.0;
  double latency_std_s = 0.0;
  double rtf = 0.0;  // batch_size * mean_audio_duration_s / mean_latency_s
  std::size_t n_samples = 0;
  double mean_audio_duration_s = 0.0;
};

struct BenchOptions {
  std::vector<std::size_t> batch_sizes{1, 4, 8};
  std::size_t warmup = 3;
  std::size_t reps = 20;
};

// Each batch size times the same sequence of batches, drawn cyclically from
// `corpus`. One latency sample per batch per repetition; warmup repetitions
// are discarded. The target speaker is the first file's embedding.
std::vector<BenchReport> Bench(const ModelBundle& bundle, const std::vector<Waveform>& corpus,
                               const BenchOptions& options);

// All *.wav files of `dir`, in name order.
std::vector<Waveform> LoadWavDirectory(const std::filesystem::path& dir);

nlohmann::json ToJson(const BenchReport& report);
BenchReport BenchReportFromJson(const nlohmann::json& j);

}  // namespace convoice

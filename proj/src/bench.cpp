// convoice/bench.cpp

#include "convoice/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace convoice {
namespace {

// Large activations would otherwise be mmap'd and returned to the OS on
// every layer, so each batch would pay fresh page faults.
void KeepFreedMemory() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace

std::vector<BenchReport> Bench(const ModelBundle& bundle, const std::vector<Waveform>& corpus,
                               const BenchOptions& options) {
  if (corpus.empty()) throw InputError("bench: empty corpus");
  if (options.reps < 1) throw ConfigError("bench: reps must be >= 1");
  const VoiceConverter converter(bundle);
  std::vector<Tensor<float>> mels;
  std::vector<double> durations;
  for (const Waveform& w : corpus) {
    mels.push_back(converter.SourceFeatures(w));
    durations.push_back(w.DurationSeconds());
  }
  const SpeakerEmbedding speaker = converter.EmbedTarget({corpus.front()});

  struct Plan {
    std::size_t batch_size;
    std::vector<std::vector<Tensor<float>>> batches;
    double total_duration = 0.0;
    std::vector<double> latencies;
  };
  std::vector<Plan> plans;
  for (std::size_t bs : options.batch_sizes) {
    if (bs == 0) throw ConfigError("bench: batch size must be >= 1");
    Plan p{bs, std::vector<std::vector<Tensor<float>>>((mels.size() + bs - 1) / bs), 0.0, {}};
    for (std::size_t b = 0; b < p.batches.size(); ++b)
      for (std::size_t k = 0; k < bs; ++k) {
        const std::size_t i = (b * bs + k) % mels.size();
        p.batches[b].push_back(mels[i]);
        p.total_duration += durations[i];
      }
    plans.push_back(std::move(p));
  }

  KeepFreedMemory();
  // Batch sizes are interleaved within each repetition so that slow drift in
  // machine speed affects all of them alike.
  for (std::size_t rep = 0; rep < options.warmup + options.reps; ++rep) {
    for (Plan& p : plans) {
      for (const auto& batch : p.batches) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto out = converter.PredictMelBatch(batch, speaker);
        const auto t1 = std::chrono::steady_clock::now();
        if (out.size() != batch.size()) throw Error("bench: batch output size mismatch");
        if (rep >= options.warmup) p.latencies.push_back(std::chrono::duration<double>(t1 - t0).count());
      }
    }
  }

  std::vector<BenchReport> reports;
  for (const Plan& p : plans) {
    BenchReport r;
    r.batch_size = p.batch_size;
    r.n_samples = p.batches.size() * p.batch_size;
    r.mean_audio_duration_s = p.total_duration / static_cast<double>(r.n_samples);
    double sum = 0.0;
    for (double l : p.latencies) sum += l;
    r.mean_latency_s = sum / static_cast<double>(p.latencies.size());
    double sq = 0.0;
    for (double l : p.latencies) sq += (l - r.mean_latency_s) * (l - r.mean_latency_s);
    r.latency_std_s = std::sqrt(sq / static_cast<double>(p.latencies.size()));
    if (!(r.mean_latency_s > 0.0)) throw Error("bench: measured latency is not positive");
    r.rtf = static_cast<double>(r.batch_size) * r.mean_audio_duration_s / r.mean_latency_s;
    reports.push_back(r);
  }
  return reports;
}

std::vector<Waveform> LoadWavDirectory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InputError("bench: '" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Waveform> out;
  for (const auto& f : files) out.push_back(LoadWav(f));
  if (out.empty()) throw InputError("bench: no .wav files in '" + dir.string() + "'");
  return out;
}

nlohmann::json ToJson(const BenchReport& r) {
  return {{"batch_size", r.batch_size},         {"mean_latency_s", r.mean_latency_s},
          {"latency_std_s", r.latency_std_s},   {"rtf", r.rtf},
          {"n_samples", r.n_samples},           {"mean_audio_duration_s", r.mean_audio_duration_s}};
}

BenchReport BenchReportFromJson(const nlohmann::json& j) {
  BenchReport r;
  r.batch_size = j.at("batch_size").get<std::size_t>();
  r.mean_latency_s = j.at("mean_latency_s").get<double>();
  r.latency_std_s = j.at("latency_std_s").get<double>();
  r.rtf = j.at("rtf").get<double>();
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.mean_audio_duration_s = j.at("mean_audio_duration_s").get<double>();
  return r;
}

}  // namespace convoice

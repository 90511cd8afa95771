// convoice/cli.cpp

#include "convoice/cli.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "convoice/bench.hpp"
#include "convoice/parallel.hpp"
#include "convoice/training.hpp"

namespace convoice {
namespace {

using nlohmann::json;

std::vector<std::string> SplitComma(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

json ReadJson(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("config '" + path + "': " + e.what());
  }
}

ModelBundle BaseBundle(const json& cfg) {
  if (cfg.contains("checkpoint")) return LoadBundle(cfg.at("checkpoint").get<std::string>());
  return InitToyBundle(cfg.value("seed", std::uint64_t{0}));
}

void WriteSingleTensor(const std::string& name, Tensor<float> t, const std::string& path) {
  TensorFile f;
  f.tensors.emplace(name, std::move(t));
  WriteTensorFile(f, path);
}

// Raw little-endian float32 values, or one value per line for a .txt path.
void WriteEmbedding(const SpeakerEmbedding& e, const std::string& path) {
  if (std::filesystem::path(path).extension() == ".txt") {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write '" + path + "'");
    f.precision(9);
    for (float v : e.values) f << v << "\n";
    return;
  }
  std::vector<unsigned char> bytes;
  for (float v : e.values) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<unsigned char>(bits >> (8 * i)));
  }
  WriteBytes(bytes, path);
}

int RunTrain(const std::string& kind, const std::string& config_path, const std::string& out_path,
             std::ostream& out) {
  const json cfg = ReadJson(config_path);
  ModelBundle bundle = BaseBundle(cfg);
  TrainOptions opt;
  opt.steps = cfg.value("steps", opt.steps);
  opt.lr = cfg.value("lr", opt.lr);
  opt.seed = cfg.value("seed", opt.seed);
  opt.batch = cfg.value("batch", opt.batch);
  LossTrace trace;
  if (kind == "decoder") {
    const auto pairs = SyntheticDecoderPairs(cfg.value("utterances", std::size_t{20}),
                                             cfg.value("speakers", std::size_t{4}), cfg.value("seconds", 1.0),
                                             opt.seed + 1);
    DecoderTrainResult r = TrainDecoderToy(bundle, pairs, opt);
    out << "decoder loss " << r.initial_loss << " -> " << r.final_loss << "\n";
    bundle = std::move(r.bundle);
    trace = std::move(r.trace);
  } else if (kind == "speaker") {
    SpeakerTrainOptions so;
    so.steps = cfg.value("steps", so.steps);
    so.lr = cfg.value("lr", so.lr);
    so.seed = opt.seed;
    so.speakers_per_batch = cfg.value("batch_speakers", so.speakers_per_batch);
    so.utterances_per_speaker = cfg.value("batch_utterances", so.utterances_per_speaker);
    const SyntheticSpeakerSet set{cfg.value("speakers", std::size_t{12}), cfg.value("utterances", std::size_t{6}),
                                  opt.seed + 1, 0.05};
    SpeakerTrainResult r = TrainSpeakerToy(set, bundle.speaker, so);
    out << "speaker margin (train) " << r.train_report.margin() << "\n";
    for (const auto& [name, t] : r.weights) bundle.params[name] = t;
    trace = std::move(r.trace);
  } else if (kind == "asr") {
    std::vector<std::vector<int>> targets = cfg.value("targets", std::vector<std::vector<int>>{{3, 7, 12}});
    const auto pairs = SyntheticAsrPairs(targets, bundle.norm, opt.seed + 1);
    AsrTrainResult r = TrainAsrToy(bundle.encoder, bundle.params, pairs, opt);
    for (std::size_t i = 0; i < r.final_losses.size(); ++i) out << "pair " << i << " ctc " << r.final_losses[i] << "\n";
    for (const auto& [name, t] : r.weights) bundle.params[name] = t;
    trace = std::move(r.trace);
  } else {
    throw ConfigError("train: unknown model '" + kind + "'");
  }
  SaveBundle(bundle, out_path);
  if (cfg.contains("trace")) trace.WriteCsv(cfg.at("trace").get<std::string>());
  return 0;
}

}  // namespace

int CliMain(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"convoice: voice conversion with convolutional encoders and a Griffin-Lim vocoder", "convoice"};
  app.require_subcommand(1);

  std::string source, targets, checkpoint, out_path, mel_path, audio, data, batch_sizes = "1,4,8", report;
  std::string kind, config, variant = "full";
  std::size_t iters = 60, reps = 20, warmup = 3, threads = 0;
  std::uint64_t seed = 0;

  CLI::App* convert = app.add_subcommand("convert", "Convert a source utterance to a target voice");
  convert->add_option("--source", source, "Source WAV")->required();
  convert->add_option("--target", targets, "Target reference WAV(s), comma separated")->required();
  convert->add_option("--checkpoint", checkpoint, "Model bundle")->required();
  convert->add_option("--out", out_path, "Output WAV")->required();
  convert->add_option("--emit-mel", mel_path, "Also write the predicted mel (CVCK, one tensor)");
  convert->add_option("--iters", iters, "Griffin-Lim iterations");

  CLI::App* embed = app.add_subcommand("embed", "Write the speaker embedding of an utterance");
  embed->add_option("--audio", audio, "Input WAV")->required();
  embed->add_option("--out", out_path, "Output embedding (float32 LE, or text for .txt)")->required();
  embed->add_option("--checkpoint", checkpoint, "Model bundle (default: seeded toy weights)");

  CLI::App* bench = app.add_subcommand("bench", "Time encoder+decoder inference");
  bench->add_option("--checkpoint", checkpoint, "Model bundle")->required();
  bench->add_option("--data", data, "Directory of WAV files")->required();
  bench->add_option("--batch-sizes", batch_sizes, "Comma-separated batch sizes");
  bench->add_option("--reps", reps, "Timed repetitions");
  bench->add_option("--warmup", warmup, "Discarded repetitions");
  bench->add_option("--report", report, "JSON report path (default: stdout)");
  bench->add_option("--threads", threads, "Kernel threads (default: CONVOICE_THREADS or 1)");

  CLI::App* train = app.add_subcommand("train", "Toy-scale training");
  train->add_option("model", kind, "decoder, speaker or asr")->required()->check(
      CLI::IsMember({"decoder", "speaker", "asr"}));
  train->add_option("--config", config, "JSON training config")->required();
  train->add_option("--out", out_path, "Output bundle")->required();

  CLI::App* init = app.add_subcommand("init-toy", "Write a seeded random toy bundle");
  init->add_option("--out", out_path, "Output bundle")->required();
  init->add_option("--seed", seed, "Seed");

  CLI::App* count = app.add_subcommand("param-count", "Print trainable parameter counts");
  count->add_option("--config", variant, "full or toy")->check(CLI::IsMember({"full", "toy"}));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return 2;
  }

  try {
    if (*convert) {
      std::vector<Waveform> refs;
      for (const auto& t : SplitComma(targets)) refs.push_back(LoadWav(t));
      GriffinLimConfig gl;
      gl.n_iters = iters;
      const Conversion c = Convert(LoadWav(source), refs, LoadBundle(checkpoint), gl);
      SaveWav(c.audio, out_path);
      if (!mel_path.empty()) WriteSingleTensor("mel", c.mel.values, mel_path);
      out << "wrote " << out_path << " (" << c.source_frames << " frames, " << c.audio.samples.size()
          << " samples)\n";
    } else if (*embed) {
      const ModelBundle bundle = checkpoint.empty() ? InitToyBundle(0) : LoadBundle(checkpoint);
      const SpeakerEncoder enc(bundle.speaker, bundle.params);
      const SpeakerEmbedding e = enc.EmbedUtterance(LoadWav(audio));
      WriteEmbedding(e, out_path);
    } else if (*bench) {
      if (threads > 0) SetKernelThreads(threads);
      BenchOptions opt;
      opt.batch_sizes.clear();
      for (const auto& s : SplitComma(batch_sizes)) opt.batch_sizes.push_back(std::stoul(s));
      opt.reps = reps;
      opt.warmup = warmup;
      const auto reports = Bench(LoadBundle(checkpoint), LoadWavDirectory(data), opt);
      json arr = json::array();
      for (const auto& r : reports) arr.push_back(ToJson(r));
      err << "bench: " << KernelThreads() << " kernel thread(s)\n";
      if (report.empty()) {
        out << arr.dump(2) << "\n";
      } else {
        std::ofstream f(report);
        if (!f) throw InputError("cannot write '" + report + "'");
        f << arr.dump(2) << "\n";
      }
    } else if (*train) {
      return RunTrain(kind, config, out_path, out);
    } else if (*init) {
      SaveBundle(InitToyBundle(seed), out_path);
    } else if (*count) {
      const bool full = variant == "full";
      const EncoderConfig e = full ? EncoderConfig::Full() : EncoderConfig::Toy();
      const DecoderConfig d = full ? DecoderConfig::Full() : DecoderConfig::Toy();
      const SpeakerConfig s = full ? SpeakerConfig::Full() : SpeakerConfig::Toy();
      out << "encoder " << EncoderParamCount(e) << "\n"
          << "decoder " << DecoderParamCount(d) << "\n"
          << "encoder+decoder " << EncoderParamCount(e) + DecoderParamCount(d) << "\n"
          << "speaker " << SpeakerParamCount(s) << "\n";
    }
  } catch (const std::invalid_argument&) {
    err << "error: --batch-sizes must be comma-separated integers\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int CliMain(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return CliMain(args, std::cout, std::cerr);
}

}  // namespace convoice

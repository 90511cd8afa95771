// convoice/synthetic.hpp
//
// Seeded synthetic speech-like audio for desk-scale training and tests.
// A voice is a glottal pitch range plus a formant template (vocal-tract
// scale, per-formant gains, spectral tilt, breath noise); an utterance is a
// sequence of vowel-like segments rendered as harmonics shaped by the
// voice's formant envelope, with a little filtered noise.

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "convoice/audio.hpp"
#include "convoice/params.hpp"

namespace convoice {

struct VoiceProfile {
  double f0_hz = 120.0;
  double formant_scale = 1.0;             // vocal-tract length factor
  std::array<double, 3> formant_gains{};  // linear gain per formant
  double tilt = 1.0;                      // spectral slope exponent
  double breath = 0.02;                   // noise-to-harmonic ratio
};

// One vowel-like segment; duration in seconds.
struct Segment {
  std::array<double, 3> formants_hz{};
  double seconds = 0.1;
  bool silent = false;
};

// Renders `segments` with `voice` at `sample_rate`. Segment formants are
// absolute (the voice's formant_scale is applied by the generators below).
// Formants glide between neighbouring segments; pitch carries a slow
// vibrato. Peak level 0.5.
Waveform RenderSegments(const VoiceProfile& voice, std::span<const Segment> segments, int sample_rate,
                        std::uint64_t seed);

struct SyntheticSpeakerSet {
  std::size_t n_speakers = 8;
  std::size_t utterances_per_speaker = 4;
  std::uint64_t seed = 1;
  double jitter = 0.05;  // per-utterance perturbation of the voice template

  VoiceProfile Speaker(std::size_t speaker) const;
  // Random vowel sequence of about `seconds` seconds for (speaker, index).
  Waveform Utterance(std::size_t speaker, std::size_t index, double seconds, int sample_rate) const;
};

// Each token is a fixed formant pattern; tokens are separated by short
// silences with silence at both ends.
Waveform RenderTokens(std::span<const int> tokens, const VoiceProfile& voice, int sample_rate,
                      std::uint64_t seed, double token_seconds = 0.12);

// Sine of `freq_hz`, `seconds` long, amplitude `amp`.
Waveform SineWave(double freq_hz, double seconds, int sample_rate, double amp = 0.5);

}  // namespace convoice

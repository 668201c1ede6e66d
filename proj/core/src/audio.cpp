#include "gchoreo/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>

#include <unsupported/Eigen/FFT>

#include "gchoreo/error.hpp"
#include "gchoreo/text.hpp"

namespace gchoreo {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double mel_point(int i, int bands, double sample_rate) {
  const double top = hz_to_mel(sample_rate / 2.0);
  return mel_to_hz(top * static_cast<double>(i) / static_cast<double>(bands + 1));
}

}  // namespace

void AudioClip::validate() const {
  if (samples.empty()) throw ValidationError("audio clip is empty");
  if (!(sample_rate > 0.0)) throw ValidationError("audio sample rate must be positive");
  for (double s : samples) {
    if (!std::isfinite(s)) throw ValidationError("audio clip has non-finite samples");
  }
}

AudioFeatureFrame AudioFrames::frame(int i) const {
  AudioFeatureFrame f;
  f.mel_energies.assign(log_mel.row(i).data(), log_mel.row(i).data() + log_mel.cols());
  f.onset_strength = onset[static_cast<std::size_t>(i)];
  f.frame_time = times[static_cast<std::size_t>(i)];
  return f;
}

double mel_band_center(int band, int bands, double sample_rate) { return mel_point(band + 1, bands, sample_rate); }

Matrix mel_filterbank(int bands, int window, double sample_rate) {
  const int bins = window / 2 + 1;
  Matrix fb = Matrix::Zero(bands, bins);
  for (int b = 0; b < bands; ++b) {
    const double lo = mel_point(b, bands, sample_rate);
    const double mid = mel_point(b + 1, bands, sample_rate);
    const double hi = mel_point(b + 2, bands, sample_rate);
    for (int k = 0; k < bins; ++k) {
      const double f = sample_rate * k / window;
      if (f > lo && f <= mid) {
        fb(b, k) = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        fb(b, k) = (hi - f) / (hi - mid);
      }
    }
  }
  return fb;
}

AudioFrames extract_audio_frames(const AudioClip& clip, const AudioAnalysisConfig& config) {
  clip.validate();
  if (config.hop < 1 || config.window < config.hop) throw ValidationError("audio analysis needs window >= hop >= 1");
  if (config.bands < 1) throw ValidationError("audio analysis needs at least one band");
  const auto len = static_cast<std::int64_t>(clip.samples.size());
  if (len < config.window) {
    throw ValidationError("audio clip (" + std::to_string(len) + " samples) is shorter than the analysis window (" +
                          std::to_string(config.window) + ")");
  }
  const auto count = static_cast<int>((len - config.window) / config.hop + 1);
  const int N = config.window;
  const Matrix fb = mel_filterbank(config.bands, N, clip.sample_rate);

  std::vector<double> hann(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) hann[static_cast<std::size_t>(n)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / N);

  AudioFrames out;
  out.config = config;
  out.sample_rate = clip.sample_rate;
  out.log_mel.resize(count, config.bands);
  out.onset.assign(static_cast<std::size_t>(count), 0.0);
  out.times.resize(static_cast<std::size_t>(count));

  Eigen::FFT<double> fft;
  std::vector<double> buf(static_cast<std::size_t>(N));
  std::vector<std::complex<double>> spec;
  Vector power(N / 2 + 1);
  for (int t = 0; t < count; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * static_cast<std::size_t>(config.hop);
    for (int n = 0; n < N; ++n) buf[static_cast<std::size_t>(n)] = clip.samples[start + static_cast<std::size_t>(n)] * hann[static_cast<std::size_t>(n)];
    fft.fwd(spec, buf);
    for (int k = 0; k <= N / 2; ++k) power[k] = std::norm(spec[static_cast<std::size_t>(k)]);
    const Vector energy = fb * power;
    for (int b = 0; b < config.bands; ++b) out.log_mel(t, b) = std::log(std::max(energy[b], config.log_floor));
    out.times[static_cast<std::size_t>(t)] = (static_cast<double>(start) + 0.5 * N) / clip.sample_rate;
  }
  for (int t = 1; t < count; ++t) {
    double flux = 0.0;
    for (int b = 0; b < config.bands; ++b) flux += std::max(0.0, out.log_mel(t, b) - out.log_mel(t - 1, b));
    out.onset[static_cast<std::size_t>(t)] = flux;
  }
  if (config.remove_frame_mean) {
    const Vector means = out.log_mel.rowwise().mean();
    out.log_mel.colwise() -= means;
  }
  return out;
}

AudioCodebook fit_audio_codebook(std::span<const AudioFrames> frames, int codebook_size, int iterations,
                                 std::mt19937_64& rng) {
  if (frames.empty()) throw ValidationError("fit_audio_codebook: no audio frames");
  Eigen::Index rows = 0;
  for (const auto& f : frames) {
    if (f.log_mel.cols() != frames.front().log_mel.cols()) throw ValidationError("fit_audio_codebook: band mismatch");
    rows += f.log_mel.rows();
  }
  Matrix samples(rows, frames.front().log_mel.cols());
  Eigen::Index r = 0;
  for (const auto& f : frames) {
    samples.middleRows(r, f.log_mel.rows()) = f.log_mel;
    r += f.log_mel.rows();
  }
  AudioCodebook cb;
  cb.analysis = frames.front().config;
  cb.book = kmeans_init(samples, codebook_size, iterations, rng);
  return cb;
}

std::vector<int> quantize_audio(const AudioCodebook& codebook, const AudioFrames& frames) {
  if (!codebook.trained()) throw ValidationError("quantize_audio: audio codebook is not trained");
  if (frames.log_mel.cols() != codebook.book.dim()) {
    throw ValidationError("quantize_audio: frame band count does not match the codebook");
  }
  std::vector<int> ids(static_cast<std::size_t>(frames.size()));
  for (int t = 0; t < frames.size(); ++t) ids[static_cast<std::size_t>(t)] = nearest_entry(codebook.book.entries, frames.log_mel.row(t));
  return ids;
}

std::vector<double> pick_peaks(std::span<const double> strength, std::span<const double> times, double threshold,
                               double min_gap) {
  if (strength.size() != times.size()) throw ValidationError("pick_peaks: strength/time size mismatch");
  std::vector<std::size_t> candidates;
  for (std::size_t t = 1; t + 1 < strength.size(); ++t) {
    if (strength[t] > strength[t - 1] && strength[t] >= strength[t + 1] && strength[t] > threshold) {
      candidates.push_back(t);
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return strength[a] > strength[b]; });
  std::vector<double> accepted;
  for (std::size_t c : candidates) {
    const double tc = times[c];
    const bool clear = std::all_of(accepted.begin(), accepted.end(),
                                   [&](double a) { return std::abs(a - tc) >= min_gap; });
    if (clear) accepted.push_back(tc);
  }
  std::sort(accepted.begin(), accepted.end());
  return accepted;
}

std::vector<double> detect_beats(const AudioFrames& frames, double min_gap) {
  if (frames.size() < 3) throw ValidationError("detect_beats: need at least 3 frames");
  const auto n = static_cast<double>(frames.onset.size());
  const double mean = std::accumulate(frames.onset.begin(), frames.onset.end(), 0.0) / n;
  double var = 0.0;
  for (double v : frames.onset) var += (v - mean) * (v - mean);
  const double threshold = mean + std::sqrt(var / n);
  return pick_peaks(frames.onset, frames.times, threshold, min_gap);
}

namespace {

template <class T>
T read_le(const unsigned char* p) {
  T v{};
  std::memcpy(&v, p, sizeof(T));
  return v;
}

void put_u32(std::ofstream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void put_u16(std::ofstream& out, std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); }

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open WAV file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(where + "not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = read_le<std::uint32_t>(bytes.data() + pos + 4);
    const unsigned char* body = bytes.data() + pos + 8;
    const std::size_t avail = bytes.size() - pos - 8;
    if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0) {
      if (size < 16 || avail < 16) throw FormatError(where + "truncated fmt chunk");
      format = read_le<std::uint16_t>(body);
      channels = read_le<std::uint16_t>(body + 2);
      rate = read_le<std::uint32_t>(body + 4);
      bits = read_le<std::uint16_t>(body + 14);
      if (format == 0xFFFE && size >= 26 && avail >= 26) format = read_le<std::uint16_t>(body + 24);
    } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
      data = body;
      data_size = std::min<std::size_t>(size, avail);
    }
    pos += 8 + size + (size & 1u);
  }
  if (channels == 0 || rate == 0) throw FormatError(where + "missing fmt chunk");
  if (data == nullptr) throw FormatError(where + "missing data chunk");
  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32) {
    throw FormatError(where + "unsupported WAV encoding (format " + std::to_string(format) + ", " +
                      std::to_string(bits) + " bits)");
  }
  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t frames = data_size / frame_bytes;
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::uint16_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + f * frame_bytes + c * (bits / 8);
      acc += pcm16 ? read_le<std::int16_t>(p) / 32768.0 : static_cast<double>(read_le<float>(p));
    }
    clip.samples[f] = acc / channels;
  }
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  clip.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ComputeError("cannot open " + path.string() + " for writing");
  const auto rate = static_cast<std::uint32_t>(std::lround(clip.sample_rate));
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  for (double s : clip.samples) {
    const auto v = static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0, 32767.0 / 32768.0) * 32768.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  if (!out) throw ComputeError("failed writing " + path.string());
}

void save_beats(const std::filesystem::path& path, std::span<const double> beats) {
  std::ofstream out(path);
  if (!out) throw ComputeError("cannot open " + path.string() + " for writing");
  for (double b : beats) out << text::format_double(b) << '\n';
}

std::vector<double> load_beats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open beat file " + path.string());
  std::vector<double> out;
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    out.push_back(text::parse_double(line, "beat time"));
  }
  return out;
}

}  // namespace gchoreo

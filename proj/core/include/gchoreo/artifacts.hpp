#pragma once

// Binary artifacts. Layout: 4 magic bytes, u32 format version, then tagged
// sections (4-byte tag, u64 payload length, payload). Integers and doubles
// are little-endian; doubles are stored at full precision so loading
// reproduces the saved object bit for bit.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gchoreo/audio.hpp"
#include "gchoreo/autoencoder.hpp"
#include "gchoreo/generation.hpp"
#include "gchoreo/position.hpp"
#include "gchoreo/rvq.hpp"

namespace gchoreo {

inline constexpr std::uint32_t kArtifactVersion = 1;

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v);
  void matrix(const Matrix& m);
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

// Reads one section's payload; every overrun names the section.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string section) : bytes_(bytes), section_(std::move(section)) {}
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64();
  Matrix matrix();
  void expect_end() const;
  [[noreturn]] void fail(const std::string& why) const;

 private:
  std::span<const std::uint8_t> take(std::size_t n);
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string section_;
};

class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::string_view magic);
  ByteWriter& section(std::string_view tag);  // closes the previous section
  std::vector<std::uint8_t> finish();
  void save(const std::filesystem::path& path);

 private:
  void close();
  ByteWriter out_;
  ByteWriter current_;
  std::string tag_;
};

class ArtifactReader {
 public:
  ArtifactReader(std::vector<std::uint8_t> bytes, std::string_view magic, std::string what);
  static ArtifactReader load(const std::filesystem::path& path, std::string_view magic, std::string what);
  // Next section, which must carry `tag`.
  ByteReader section(std::string_view tag, const std::string& label = {});
  void expect_end() const;

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string what_;
};

struct TokenizerModel {
  TemporalAutoencoder autoencoder;
  ResidualQuantizerStack stack;
};

std::vector<std::uint8_t> serialize_tokenizer(const TemporalAutoencoder& ae, const ResidualQuantizerStack& stack);
TokenizerModel deserialize_tokenizer(std::vector<std::uint8_t> bytes);
void save_tokenizer(const std::filesystem::path& path, const TemporalAutoencoder& ae,
                    const ResidualQuantizerStack& stack);
TokenizerModel load_tokenizer(const std::filesystem::path& path);

std::vector<std::uint8_t> serialize_audio_codebook(const AudioCodebook& codebook);
AudioCodebook deserialize_audio_codebook(std::vector<std::uint8_t> bytes);
void save_audio_codebook(const std::filesystem::path& path, const AudioCodebook& codebook);
AudioCodebook load_audio_codebook(const std::filesystem::path& path);

// Tables are written in sorted key order, so equal models give equal bytes.
std::vector<std::uint8_t> serialize_ngram(const NGramPredictor& model);
NGramPredictor deserialize_ngram(std::vector<std::uint8_t> bytes);
void save_ngram(const std::filesystem::path& path, const NGramPredictor& model);
NGramPredictor load_ngram(const std::filesystem::path& path);

std::vector<std::uint8_t> serialize_grid(const PositionGrid& grid);
PositionGrid deserialize_grid(std::vector<std::uint8_t> bytes);
void save_grid(const std::filesystem::path& path, const PositionGrid& grid);
PositionGrid load_grid(const std::filesystem::path& path);

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

}  // namespace gchoreo

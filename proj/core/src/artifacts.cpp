#include "gchoreo/artifacts.hpp"

#include <algorithm>
#include <bit>
#include <fstream>

#include "gchoreo/error.hpp"

namespace gchoreo {

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::matrix(const Matrix& m) {
  u64(static_cast<std::uint64_t>(m.rows()));
  u64(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) f64(m.data()[i]);
}

std::span<const std::uint8_t> ByteReader::take(std::size_t n) {
  if (n > bytes_.size() - pos_) fail("truncated");
  auto out = bytes_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::uint8_t ByteReader::u8() { return take(1)[0]; }

std::uint32_t ByteReader::u32() {
  auto b = take(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  auto b = take(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

Matrix ByteReader::matrix() {
  const std::uint64_t rows = u64();
  const std::uint64_t cols = u64();
  if (rows > (1u << 28) || cols > (1u << 28) || rows * cols * 8 > bytes_.size() - pos_) fail("bad matrix shape");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = f64();
  return m;
}

void ByteReader::expect_end() const {
  if (pos_ != bytes_.size()) fail("unexpected trailing bytes");
}

void ByteReader::fail(const std::string& why) const { throw FormatError(section_ + ": " + why); }

ArtifactWriter::ArtifactWriter(std::string_view magic) {
  out_.raw(magic);
  out_.u32(kArtifactVersion);
}

void ArtifactWriter::close() {
  if (tag_.empty()) return;
  out_.raw(tag_);
  out_.u64(current_.bytes().size());
  out_.bytes().insert(out_.bytes().end(), current_.bytes().begin(), current_.bytes().end());
  current_.bytes().clear();
  tag_.clear();
}

ByteWriter& ArtifactWriter::section(std::string_view tag) {
  close();
  tag_ = std::string(tag);
  return current_;
}

std::vector<std::uint8_t> ArtifactWriter::finish() {
  close();
  return out_.bytes();
}

void ArtifactWriter::save(const std::filesystem::path& path) { write_bytes(path, finish()); }

ArtifactReader::ArtifactReader(std::vector<std::uint8_t> bytes, std::string_view magic, std::string what)
    : bytes_(std::move(bytes)), what_(std::move(what)) {
  if (bytes_.size() < 8 || !std::equal(magic.begin(), magic.end(), bytes_.begin())) {
    throw FormatError(what_ + ": bad magic, not a " + std::string(magic) + " artifact");
  }
  ByteReader header(std::span<const std::uint8_t>(bytes_).subspan(4, 4), "header");
  const std::uint32_t version = header.u32();
  if (version != kArtifactVersion) {
    throw FormatError(what_ + ": unsupported format version " + std::to_string(version) + " (expected " +
                      std::to_string(kArtifactVersion) + ")");
  }
  pos_ = 8;
}

ArtifactReader ArtifactReader::load(const std::filesystem::path& path, std::string_view magic, std::string what) {
  return ArtifactReader(read_bytes(path), magic, what + " " + path.string());
}

ByteReader ArtifactReader::section(std::string_view tag, const std::string& label) {
  const std::string name = label.empty() ? std::string(tag) : std::string(tag) + " " + label;
  auto fail = [&](const std::string& why) -> ByteReader {
    throw FormatError(what_ + ": section '" + name + "': " + why);
  };
  if (bytes_.size() - pos_ < 12) return fail("truncated header");
  if (!std::equal(tag.begin(), tag.end(), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_))) {
    return fail("missing or out of order");
  }
  ByteReader len(std::span<const std::uint8_t>(bytes_).subspan(pos_ + 4, 8), what_);
  const std::uint64_t n = len.u64();
  pos_ += 12;
  if (n > bytes_.size() - pos_) return fail("truncated");
  ByteReader r(std::span<const std::uint8_t>(bytes_).subspan(pos_, static_cast<std::size_t>(n)),
               what_ + ": section '" + name + "'");
  pos_ += static_cast<std::size_t>(n);
  return r;
}

void ArtifactReader::expect_end() const {
  if (pos_ != bytes_.size()) throw FormatError(what_ + ": trailing bytes after the last section");
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ComputeError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ComputeError("write failed for " + path.string());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

namespace {

void write_codebook(ByteWriter& w, const Codebook& b) {
  w.matrix(b.entries);
  Matrix counts = b.ema_counts.transpose();
  w.matrix(counts);
  w.matrix(b.ema_sums);
  w.u64(b.usage.size());
  for (auto u : b.usage) w.u64(u);
}

Codebook read_codebook(ByteReader& r) {
  Codebook b;
  b.entries = r.matrix();
  const Matrix counts = r.matrix();
  if (counts.rows() != 1) r.fail("bad EMA count shape");
  b.ema_counts = counts.row(0).transpose();
  b.ema_sums = r.matrix();
  const std::uint64_t n = r.u64();
  if (n != static_cast<std::uint64_t>(b.entries.rows())) r.fail("usage length does not match entries");
  b.usage.resize(static_cast<std::size_t>(n));
  for (auto& u : b.usage) u = r.u64();
  try {
    b.validate();
  } catch (const ValidationError& e) {
    r.fail(e.what());
  }
  return b;
}

}  // namespace

std::vector<std::uint8_t> serialize_tokenizer(const TemporalAutoencoder& ae, const ResidualQuantizerStack& stack) {
  ae.validate();
  stack.validate();
  const AutoencoderConfig& cfg = ae.config();
  ArtifactWriter w("RVQ1");
  ByteWriter& conf = w.section("CONF");
  conf.i32(stack.levels);
  conf.i32(stack.codebook_size());
  conf.i32(cfg.latent_dim);
  conf.i32(cfg.downsample);
  conf.i32(cfg.input_dim);
  conf.i32(cfg.hidden);
  conf.f64(cfg.fps);
  conf.u8(stack.shared ? 1 : 0);
  conf.f64(stack.commitment);
  conf.u32(static_cast<std::uint32_t>(stack.books.size()));

  ByteWriter& norm = w.section("NORM");
  norm.matrix(ae.feature_mean());
  norm.matrix(ae.feature_scale());

  for (const Codebook& b : stack.books) write_codebook(w.section("BOOK"), b);

  ByteWriter& parm = w.section("PARM");
  ae.params().for_each([&](std::string_view, const Matrix& m) { parm.matrix(m); });
  return w.finish();
}

TokenizerModel deserialize_tokenizer(std::vector<std::uint8_t> bytes) {
  ArtifactReader r(std::move(bytes), "RVQ1", "tokenizer");
  ByteReader conf = r.section("CONF");
  AutoencoderConfig cfg;
  const int levels = conf.i32();
  const int K = conf.i32();
  cfg.latent_dim = conf.i32();
  cfg.downsample = conf.i32();
  cfg.input_dim = conf.i32();
  cfg.hidden = conf.i32();
  cfg.fps = conf.f64();
  const bool shared = conf.u8() != 0;
  const double beta = conf.f64();
  const std::uint32_t book_count = conf.u32();
  conf.expect_end();
  if (levels < 1 || K < 1 || book_count != (shared ? 1u : static_cast<std::uint32_t>(levels))) {
    conf.fail("inconsistent level/codebook counts");
  }

  TokenizerModel model;
  try {
    model.autoencoder = TemporalAutoencoder(cfg);
  } catch (const ValidationError& e) {
    conf.fail(e.what());
  }

  ByteReader norm = r.section("NORM");
  const Matrix mean = norm.matrix();
  const Matrix scale = norm.matrix();
  if (mean.rows() != 1 || scale.rows() != 1) norm.fail("normalization vectors have the wrong shape");
  model.autoencoder.feature_mean() = mean.row(0);
  model.autoencoder.feature_scale() = scale.row(0);
  norm.expect_end();

  model.stack = ResidualQuantizerStack::uninitialized(levels, shared, beta);
  for (std::uint32_t i = 0; i < book_count; ++i) {
    ByteReader book = r.section("BOOK", "level " + std::to_string(i));
    model.stack.books.push_back(read_codebook(book));
    book.expect_end();
    if (model.stack.books.back().size() != K || model.stack.books.back().dim() != cfg.latent_dim) {
      book.fail("codebook shape does not match the configuration");
    }
  }

  ByteReader parm = r.section("PARM");
  model.autoencoder.params().for_each([&](std::string_view name, Matrix& m) {
    Matrix loaded = parm.matrix();
    if (loaded.rows() != m.rows() || loaded.cols() != m.cols()) parm.fail("tensor " + std::string(name) + " has the wrong shape");
    m = std::move(loaded);
  });
  parm.expect_end();
  r.expect_end();
  try {
    model.autoencoder.validate();
    model.stack.validate();
  } catch (const ValidationError& e) {
    throw FormatError(std::string("tokenizer: ") + e.what());
  }
  return model;
}

void save_tokenizer(const std::filesystem::path& path, const TemporalAutoencoder& ae,
                    const ResidualQuantizerStack& stack) {
  write_bytes(path, serialize_tokenizer(ae, stack));
}

TokenizerModel load_tokenizer(const std::filesystem::path& path) {
  try {
    return deserialize_tokenizer(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> serialize_audio_codebook(const AudioCodebook& codebook) {
  if (!codebook.trained()) throw ValidationError("audio codebook is empty");
  ArtifactWriter w("AUD1");
  ByteWriter& conf = w.section("CONF");
  conf.i32(codebook.analysis.window);
  conf.i32(codebook.analysis.hop);
  conf.i32(codebook.analysis.bands);
  conf.f64(codebook.analysis.log_floor);
  conf.u8(codebook.analysis.remove_frame_mean ? 1 : 0);
  write_codebook(w.section("BOOK"), codebook.book);
  return w.finish();
}

AudioCodebook deserialize_audio_codebook(std::vector<std::uint8_t> bytes) {
  ArtifactReader r(std::move(bytes), "AUD1", "audio codebook");
  AudioCodebook cb;
  ByteReader conf = r.section("CONF");
  cb.analysis.window = conf.i32();
  cb.analysis.hop = conf.i32();
  cb.analysis.bands = conf.i32();
  cb.analysis.log_floor = conf.f64();
  cb.analysis.remove_frame_mean = conf.u8() != 0;
  conf.expect_end();
  if (cb.analysis.window < 2 || cb.analysis.hop < 1 || cb.analysis.bands < 1 || !(cb.analysis.log_floor > 0.0)) {
    conf.fail("invalid analysis settings");
  }
  ByteReader book = r.section("BOOK");
  cb.book = read_codebook(book);
  book.expect_end();
  if (cb.book.dim() != cb.analysis.bands) book.fail("entry dimension does not match the band count");
  r.expect_end();
  return cb;
}

void save_audio_codebook(const std::filesystem::path& path, const AudioCodebook& codebook) {
  write_bytes(path, serialize_audio_codebook(codebook));
}

AudioCodebook load_audio_codebook(const std::filesystem::path& path) {
  try {
    return deserialize_audio_codebook(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> serialize_ngram(const NGramPredictor& model) {
  ArtifactWriter w("NGR1");
  ByteWriter& conf = w.section("CONF");
  const Vocabulary& v = model.vocabulary();
  conf.u32(v.motion_size);
  conf.u32(v.music_size);
  conf.u32(v.pos_size);
  conf.u32(v.max_dancers);
  conf.i32(model.order());
  conf.f64(model.smoothing());
  for (std::size_t m = 0; m < model.tables().size(); ++m) {
    const auto& table = model.tables()[m];
    std::vector<const std::pair<const std::vector<std::uint32_t>, NGramPredictor::Counts>*> rows;
    for (const auto& kv : table) rows.push_back(&kv);
    std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->first < b->first; });
    ByteWriter& t = w.section("TABL");
    t.u64(rows.size());
    for (const auto* row : rows) {
      for (auto id : row->first) t.u32(id);
      std::vector<std::pair<std::uint32_t, std::uint64_t>> next(row->second.next.begin(), row->second.next.end());
      std::sort(next.begin(), next.end());
      t.u64(row->second.total);
      t.u64(next.size());
      for (const auto& [id, n] : next) {
        t.u32(id);
        t.u64(n);
      }
    }
  }
  return w.finish();
}

NGramPredictor deserialize_ngram(std::vector<std::uint8_t> bytes) {
  ArtifactReader r(std::move(bytes), "NGR1", "n-gram model");
  ByteReader conf = r.section("CONF");
  Vocabulary v;
  v.motion_size = conf.u32();
  v.music_size = conf.u32();
  v.pos_size = conf.u32();
  v.max_dancers = conf.u32();
  const int order = conf.i32();
  const double smoothing = conf.f64();
  conf.expect_end();
  if (order < 1 || order > 64) conf.fail("bad order");
  std::optional<NGramPredictor> model;
  try {
    model.emplace(v, order, smoothing);
  } catch (const ValidationError& e) {
    conf.fail(e.what());
  }
  for (int m = 0; m < order; ++m) {
    ByteReader t = r.section("TABL", "context length " + std::to_string(m));
    auto& table = model->tables()[static_cast<std::size_t>(m)];
    const std::uint64_t rows = t.u64();
    for (std::uint64_t i = 0; i < rows; ++i) {
      std::vector<std::uint32_t> key(static_cast<std::size_t>(m));
      for (auto& id : key) {
        id = t.u32();
        if (id >= v.size()) t.fail("context id outside the vocabulary");
      }
      NGramPredictor::Counts c;
      c.total = t.u64();
      const std::uint64_t n = t.u64();
      std::uint64_t sum = 0;
      for (std::uint64_t j = 0; j < n; ++j) {
        const std::uint32_t id = t.u32();
        const std::uint64_t count = t.u64();
        if (id >= v.size()) t.fail("next id outside the vocabulary");
        c.next[id] = count;
        sum += count;
      }
      if (sum != c.total) t.fail("counts do not add up to the context total");
      table.emplace(std::move(key), std::move(c));
    }
    t.expect_end();
  }
  r.expect_end();
  return std::move(*model);
}

void save_ngram(const std::filesystem::path& path, const NGramPredictor& model) {
  write_bytes(path, serialize_ngram(model));
}

NGramPredictor load_ngram(const std::filesystem::path& path) {
  try {
    return deserialize_ngram(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> serialize_grid(const PositionGrid& grid) {
  grid.validate();
  ArtifactWriter w("GRD1");
  ByteWriter& g = w.section("GRID");
  g.i32(grid.order);
  g.f64(grid.min);
  g.f64(grid.max);
  return w.finish();
}

PositionGrid deserialize_grid(std::vector<std::uint8_t> bytes) {
  ArtifactReader r(std::move(bytes), "GRD1", "position grid");
  ByteReader g = r.section("GRID");
  PositionGrid grid;
  grid.order = g.i32();
  grid.min = g.f64();
  grid.max = g.f64();
  g.expect_end();
  r.expect_end();
  try {
    grid.validate();
  } catch (const ValidationError& e) {
    g.fail(e.what());
  }
  return grid;
}

void save_grid(const std::filesystem::path& path, const PositionGrid& grid) { write_bytes(path, serialize_grid(grid)); }

PositionGrid load_grid(const std::filesystem::path& path) {
  try {
    return deserialize_grid(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace gchoreo

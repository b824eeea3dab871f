#pragma once

// Activation snapshots: a dense prefixes x neurons float matrix for one
// (model, language, layer, sublayer) cell, and its on-disk "FFNS" encoding.
//
// Layout (all little-endian, no padding):
//   offset  0  4 bytes   magic "FFNS"
//   offset  4  u32       version (= 1)
//   offset  8  u64       rows
//   offset 16  u64       cols
//   offset 24  f32[rows*cols]  row-major payload

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ffnlens {

enum class Sublayer : std::uint8_t { detector_raw, detector_selected, combinator };

inline constexpr std::array<Sublayer, 3> kAllSublayers{Sublayer::detector_raw, Sublayer::detector_selected,
                                                       Sublayer::combinator};

constexpr std::string_view to_string(Sublayer s) noexcept {
  switch (s) {
    case Sublayer::detector_raw: return "detector_raw";
    case Sublayer::detector_selected: return "detector_selected";
    case Sublayer::combinator: return "combinator";
  }
  return "?";
}

inline std::optional<Sublayer> parse_sublayer(std::string_view name) noexcept {
  for (Sublayer s : kAllSublayers)
    if (to_string(s) == name) return s;
  return std::nullopt;
}

// Non-owning row-major view. Metrics take views so a sentence's row range can
// be analysed without copying.
class MatrixView {
 public:
  MatrixView() = default;
  MatrixView(std::span<const float> data, std::size_t rows, std::size_t cols)
      : data_(data), rows_(rows), cols_(cols) {
    if (data.size() != rows * cols) throw std::invalid_argument("MatrixView: data size != rows*cols");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0 || cols_ == 0; }
  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> row(std::size_t r) const noexcept { return data_.subspan(r * cols_, cols_); }
  float operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  // Rows [begin, end).
  MatrixView slice_rows(std::size_t begin, std::size_t end) const {
    if (begin > end || end > rows_) throw std::out_of_range("MatrixView::slice_rows: range out of bounds");
    return MatrixView(data_.subspan(begin * cols_, (end - begin) * cols_), end - begin, cols_);
  }

 private:
  std::span<const float> data_{};
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
};

class SnapshotError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class InvalidSnapshot : public SnapshotError {
 public:
  using SnapshotError::SnapshotError;
};
class IoError : public SnapshotError {
 public:
  using SnapshotError::SnapshotError;
};
class BadMagic : public SnapshotError {
 public:
  using SnapshotError::SnapshotError;
};
class VersionMismatch : public SnapshotError {
 public:
  using SnapshotError::SnapshotError;
};
class TruncatedPayload : public SnapshotError {
 public:
  using SnapshotError::SnapshotError;
};
class TrailingBytes : public SnapshotError {
 public:
  using SnapshotError::SnapshotError;
};
class NonFiniteValue : public SnapshotError {
 public:
  using SnapshotError::SnapshotError;
};

class Snapshot {
 public:
  Snapshot(std::size_t rows, std::size_t cols, std::vector<float> data, Sublayer sublayer = Sublayer::detector_raw,
           std::size_t layer_index = 0)
      : rows_(rows), cols_(cols), data_(std::move(data)), sublayer_(sublayer), layer_index_(layer_index) {
    if (rows_ == 0 || cols_ == 0) throw InvalidSnapshot("snapshot must have rows >= 1 and cols >= 1");
    if (data_.size() != rows_ * cols_)
      throw InvalidSnapshot("snapshot data length " + std::to_string(data_.size()) + " != rows*cols " +
                            std::to_string(rows_ * cols_));
    for (std::size_t i = 0; i < data_.size(); ++i)
      if (!std::isfinite(data_[i]))
        throw NonFiniteValue("non-finite value at row " + std::to_string(i / cols_) + ", col " +
                             std::to_string(i % cols_));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<const float> data() const noexcept { return data_; }
  Sublayer sublayer() const noexcept { return sublayer_; }
  std::size_t layer_index() const noexcept { return layer_index_; }

  Snapshot with_cell(Sublayer sublayer, std::size_t layer_index) && {
    sublayer_ = sublayer;
    layer_index_ = layer_index;
    return std::move(*this);
  }

  MatrixView view() const { return MatrixView(data_, rows_, cols_); }
  operator MatrixView() const { return view(); }  // NOLINT(google-explicit-constructor)

  friend bool operator==(const Snapshot& a, const Snapshot& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.sublayer_ == b.sublayer_ &&
           a.layer_index_ == b.layer_index_ &&
           std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0;
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<float> data_;
  Sublayer sublayer_;
  std::size_t layer_index_;
};

inline constexpr std::array<char, 4> kSnapshotMagic{'F', 'F', 'N', 'S'};
inline constexpr std::uint32_t kSnapshotVersion = 1;
inline constexpr std::size_t kSnapshotHeaderBytes = 24;

constexpr std::uintmax_t snapshot_file_size(std::uint64_t rows, std::uint64_t cols) noexcept {
  return kSnapshotHeaderBytes + 4 * rows * cols;
}

namespace detail {

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string encode_snapshot(MatrixView m) {
  std::string out;
  out.reserve(snapshot_file_size(m.rows(), m.cols()));
  out.append(kSnapshotMagic.data(), kSnapshotMagic.size());
  detail::put_le<std::uint32_t>(out, kSnapshotVersion);
  detail::put_le<std::uint64_t>(out, m.rows());
  detail::put_le<std::uint64_t>(out, m.cols());
  for (float f : m.data()) {
    if (!std::isfinite(f)) throw NonFiniteValue("refusing to encode non-finite value");
    detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

struct SnapshotHeader {
  std::uint32_t version;
  std::uint64_t rows;
  std::uint64_t cols;
};

inline SnapshotHeader decode_snapshot_header(std::string_view bytes, std::string_view what = "snapshot") {
  const auto name = std::string(what);
  if (bytes.size() < 4) throw TruncatedPayload(name + ": file shorter than magic");
  if (std::memcmp(bytes.data(), kSnapshotMagic.data(), 4) != 0) throw BadMagic(name + ": bad magic, expected FFNS");
  if (bytes.size() < kSnapshotHeaderBytes) throw TruncatedPayload(name + ": truncated header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  SnapshotHeader h{detail::get_le<std::uint32_t>(p + 4), detail::get_le<std::uint64_t>(p + 8),
                   detail::get_le<std::uint64_t>(p + 16)};
  if (h.version != kSnapshotVersion)
    throw VersionMismatch(name + ": unsupported version " + std::to_string(h.version));
  if (h.rows == 0 || h.cols == 0) throw InvalidSnapshot(name + ": zero rows or cols");
  return h;
}

inline Snapshot decode_snapshot(std::string_view bytes, std::string_view what = "snapshot") {
  const SnapshotHeader h = decode_snapshot_header(bytes, what);
  const auto name = std::string(what);
  const std::uint64_t payload = bytes.size() - kSnapshotHeaderBytes;
  if (h.cols > payload / 4 / h.rows || payload < 4 * h.rows * h.cols)
    throw TruncatedPayload(name + ": payload of " + std::to_string(payload) + " bytes, header declares " +
                           std::to_string(h.rows) + "x" + std::to_string(h.cols));
  if (payload > 4 * h.rows * h.cols) throw TrailingBytes(name + ": trailing bytes after payload");
  std::vector<float> data(h.rows * h.cols);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + kSnapshotHeaderBytes;
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(p + 4 * i));
    if (!std::isfinite(data[i]))
      throw NonFiniteValue(name + ": non-finite value at element " + std::to_string(i));
  }
  return Snapshot(h.rows, h.cols, std::move(data));
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw IoError("write failed: " + path.string());
}

inline void write_snapshot(MatrixView m, const std::filesystem::path& path) {
  if (m.empty()) throw InvalidSnapshot("refusing to write an empty snapshot");
  write_file_bytes(path, encode_snapshot(m));
}

inline Snapshot read_snapshot(const std::filesystem::path& path) {
  return decode_snapshot(read_file_bytes(path), path.string());
}

inline Snapshot read_snapshot(const std::filesystem::path& path, Sublayer sublayer, std::size_t layer_index) {
  return read_snapshot(path).with_cell(sublayer, layer_index);
}

// Header only; used by manifest validation so large cells are not loaded.
inline SnapshotHeader read_snapshot_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<char, kSnapshotHeaderBytes> buf{};
  in.read(buf.data(), buf.size());
  return decode_snapshot_header(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())), path.string());
}

}  // namespace ffnlens

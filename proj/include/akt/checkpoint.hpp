#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "akt/data.hpp"
#include "akt/error.hpp"
#include "akt/tensor.hpp"

namespace akt {

inline constexpr char checkpoint_magic[8] = {'A', 'K', 'T', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t checkpoint_version = 1;

struct NamedArray {
  std::string name;
  Tensor value;

  friend bool operator==(const NamedArray& a, const NamedArray& b) {
    return a.name == b.name && a.value.shape() == b.value.shape() && bitwise_equal(a.value, b.value);
  }
};

struct Checkpoint {
  std::string config_text;
  std::vector<NamedArray> arrays;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;

  [[nodiscard]] const Tensor& at(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return a.value;
    throw ValidationError("checkpoint: no array named '" + name + "'");
  }
};

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put_le(out, s.size(), 8);
  out.insert(out.end(), s.begin(), s.end());
}

class Reader {
public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  [[nodiscard]] std::size_t offset() const noexcept { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(ParseError::Kind::truncated, pos_,
                       std::string("checkpoint truncated while reading ") + what + ": need " + std::to_string(n) +
                           " bytes, " + std::to_string(bytes_.size() - pos_) + " left");
    }
  }

  std::uint64_t le(int bytes, const char* what) {
    need(static_cast<std::size_t>(bytes), what);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }

  std::string string(const char* what) {
    const std::size_t at = pos_;
    const std::uint64_t n = le(8, what);
    if (n > bytes_.size() - pos_) {
      throw ParseError(ParseError::Kind::truncated, at,
                       std::string("checkpoint truncated: ") + what + " length " + std::to_string(n) + " exceeds the file");
    }
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void raw(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  [[nodiscard]] bool at_end() const noexcept { return pos_ == bytes_.size(); }

private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  std::vector<std::uint8_t> out(std::begin(checkpoint_magic), std::end(checkpoint_magic));
  detail::put_le(out, checkpoint_version, 4);
  detail::put_string(out, ck.config_text);
  detail::put_le(out, ck.arrays.size(), 8);
  for (const auto& a : ck.arrays) {
    detail::put_string(out, a.name);
    detail::put_le(out, a.value.rank(), 8);
    for (std::size_t d : a.value.shape()) detail::put_le(out, d, 8);
    for (double v : a.value.storage()) detail::put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  detail::Reader r(bytes);
  char magic[8];
  r.raw(magic, 8, "magic");
  if (std::memcmp(magic, checkpoint_magic, 8) != 0) throw ParseError(ParseError::Kind::bad_magic, 0, "not an AKTCKPT1 checkpoint");
  const std::size_t version_at = r.offset();
  const auto version = static_cast<std::uint32_t>(r.le(4, "version"));
  if (version != checkpoint_version) {
    throw ParseError(ParseError::Kind::version_mismatch, version_at,
                     "checkpoint version " + std::to_string(version) + " but this build reads " +
                         std::to_string(checkpoint_version));
  }
  Checkpoint ck;
  ck.config_text = r.string("config text");
  const std::uint64_t count = r.le(8, "array count");
  for (std::uint64_t k = 0; k < count; ++k) {
    NamedArray a;
    a.name = r.string("array name");
    const std::size_t rank_at = r.offset();
    const std::uint64_t rank = r.le(8, "array rank");
    if (rank < 1 || rank > 2) {
      throw ParseError(ParseError::Kind::malformed, rank_at, "array '" + a.name + "' has rank " + std::to_string(rank));
    }
    std::vector<std::size_t> shape;
    std::uint64_t n = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      const std::size_t dim_at = r.offset();
      const std::uint64_t dim = r.le(8, "array dimension");
      if (dim == 0 || dim > (std::uint64_t{1} << 40) || n > (std::uint64_t{1} << 40) / dim) {
        throw ParseError(ParseError::Kind::dimension_overflow, dim_at, "array '" + a.name + "' dimension " + std::to_string(dim));
      }
      n *= dim;
      shape.push_back(dim);
    }
    r.need(n * 8, "array payload");
    std::vector<double> data(n);
    for (auto& v : data) v = std::bit_cast<double>(r.le(8, "array payload"));
    a.value = Tensor(std::move(shape), std::move(data));
    ck.arrays.push_back(std::move(a));
  }
  if (!r.at_end()) throw ParseError(ParseError::Kind::malformed, r.offset(), "trailing bytes after the last array");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) { detail::write_file(path, encode_checkpoint(ck)); }

inline Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(detail::read_file(path)); }

/// Appends every parameter of `params` as `prefix` + name.
inline void add_params(Checkpoint& ck, const std::string& prefix, std::span<const ParamRef> params) {
  for (const auto& p : params) ck.arrays.push_back({prefix + p.name, *p.value});
}

/// Copies the arrays named `prefix` + name back into `params`; shapes must match.
inline void restore_params(const Checkpoint& ck, const std::string& prefix, std::span<const ParamRef> params) {
  for (const auto& p : params) {
    const Tensor& t = ck.at(prefix + p.name);
    if (t.shape() != p.value->shape()) {
      throw ShapeError("checkpoint array '" + prefix + p.name + "' has shape " + t.shape_string() + ", network expects " +
                       p.value->shape_string());
    }
    *p.value = t;
  }
}

}  // namespace akt

#include "qsam/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

namespace qsam {
namespace {

// All multi-byte fields are written little-endian explicitly so the file
// format does not depend on host byte order.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(char(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(char((v >> (8 * i)) & 0xff));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(char((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(char((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    buf_.append(static_cast<const char*>(p), n);
  }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& b) : buf_(b) {}

  std::uint8_t u8() { return std::uint8_t(take(1)[0]); }
  std::uint16_t u16() { return std::uint16_t(uint_le(2)); }
  std::uint32_t u32() { return std::uint32_t(uint_le(4)); }
  std::uint64_t u64() { return uint_le(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) { return std::string(take(n), n); }
  std::size_t remaining() const { return buf_.size() - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  const char* take(std::size_t n) {
    if (buf_.size() - pos_ < n)
      throw CheckpointFormatError("truncated checkpoint: field at offset " +
                                  std::to_string(pos_) + " runs past end of file");
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint64_t uint_le(int nbytes) {
    const char* p = take(std::size_t(nbytes));
    std::uint64_t v = 0;
    for (int i = 0; i < nbytes; ++i)
      v |= std::uint64_t(std::uint8_t(p[i])) << (8 * i);
    return v;
  }

  const std::string& buf_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const std::string& bytes, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // crc32 takes uInt lengths; feed in chunks to stay safe on huge files.
  std::size_t off = 0;
  while (off < n) {
    const std::size_t chunk = std::min<std::size_t>(n - off, 1u << 30);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), uInt(chunk));
    off += chunk;
  }
  return std::uint32_t(crc);
}

void write_tensor_table(ByteWriter& w, const std::vector<NamedTensorF32>& table) {
  w.u64(table.size());
  for (const NamedTensorF32& t : table) {
    check(t.name.size() <= 0xffff, "checkpoint: tensor name too long: " + t.name);
    w.u16(std::uint16_t(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    check(t.dims.size() <= 0xff, "checkpoint: tensor rank too large");
    w.u8(std::uint8_t(t.dims.size()));
    std::uint64_t numel = 1;
    for (std::uint64_t d : t.dims) {
      w.u64(d);
      numel *= d;
    }
    check(numel == t.values.size(), "checkpoint: dims disagree with value count for " + t.name);
    for (float v : t.values) w.f32(v);
  }
}

std::vector<NamedTensorF32> read_tensor_table(ByteReader& r) {
  const std::uint64_t count = r.u64();
  std::vector<NamedTensorF32> table;
  table.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensorF32 t;
    t.name = r.str(r.u16());
    const int rank = int(r.u8());
    std::uint64_t numel = 1;
    for (int d = 0; d < rank; ++d) {
      t.dims.push_back(r.u64());
      if (t.dims.back() != 0 && numel > (1ull << 40) / t.dims.back())
        throw CheckpointFormatError("malformed checkpoint: tensor '" + t.name +
                                    "' declares an implausible element count");
      numel *= t.dims.back();
    }
    if (numel * 4 > r.remaining())
      throw CheckpointFormatError("truncated checkpoint: tensor '" + t.name +
                                  "' payload runs past end of file");
    t.values.resize(numel);
    for (std::uint64_t v = 0; v < numel; ++v) t.values[std::size_t(v)] = r.f32();
    table.push_back(std::move(t));
  }
  return table;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(c.version);
  w.u64(c.config_json.size());
  w.bytes(c.config_json.data(), c.config_json.size());
  write_tensor_table(w, c.tensors);
  write_tensor_table(w, c.opt_tensors);
  w.u64(c.iteration);
  w.u64(c.rng_state.size());
  w.bytes(c.rng_state.data(), c.rng_state.size());
  std::string out = w.take();
  ByteWriter tail;
  tail.u32(crc32_of(out, out.size()));
  return out + tail.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 12)
    throw CheckpointFormatError("truncated checkpoint: file shorter than fixed header");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw CheckpointFormatError("not a checkpoint file: bad magic");

  ByteReader r(bytes);
  r.str(4);  // magic, already verified
  Checkpoint c;
  c.version = r.u32();
  if (c.version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint format version " + std::to_string(c.version) +
                                 " is not supported (this build reads version " +
                                 std::to_string(kCheckpointVersion) + ")");

  c.config_json = r.str(std::size_t(r.u64()));
  c.tensors = read_tensor_table(r);
  c.opt_tensors = read_tensor_table(r);
  c.iteration = r.u64();
  c.rng_state = r.str(std::size_t(r.u64()));

  if (r.remaining() != 4)
    throw CheckpointFormatError("malformed checkpoint: expected exactly 4 trailing "
                                "checksum bytes, found " + std::to_string(r.remaining()));
  const std::size_t body = r.pos();
  const std::uint32_t stored = r.u32();
  const std::uint32_t actual = crc32_of(bytes, body);
  if (stored != actual)
    throw CheckpointCorruptError("checkpoint checksum mismatch: file is corrupt");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const std::string bytes = serialize_checkpoint(c);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open checkpoint file for writing: " + path.string());
  f.write(bytes.data(), std::streamsize(bytes.size()));
  f.flush();
  if (!f) throw std::runtime_error("failed writing checkpoint file: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw std::runtime_error("failed reading checkpoint file: " + path.string());
  return deserialize_checkpoint(bytes);
}

}  // namespace qsam

#include "mrdn/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <unistd.h>

#include "mrdn/error.hpp"

namespace mrdn {

namespace {

constexpr char kMagic[4] = {'M', 'R', 'D', 'N'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::string str(std::size_t len) {
    need(len);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw CheckpointError("checkpoint: truncated data");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::size_t product(const std::vector<std::uint32_t>& dims) {
  std::size_t p = 1;
  for (auto d : dims) p *= d;
  return p;
}

std::string dims_str(std::span<const std::uint32_t> dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ']';
  return os.str();
}

}  // namespace

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::uint32_t Checkpoint::values_checksum(std::span<const float> values) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(values.size() * 4);
  for (float v : values) put_u32(bytes, std::bit_cast<std::uint32_t>(v));
  return crc32_of(bytes);
}

void Checkpoint::add(std::string name, std::vector<std::uint32_t> dims, std::vector<float> values) {
  if (find(name) != nullptr) throw CheckpointError("checkpoint: duplicate entry '" + name + "'");
  if (product(dims) != values.size()) {
    throw CheckpointError("checkpoint: entry '" + name + "' has " +
                          std::to_string(values.size()) + " values for dims " + dims_str(dims));
  }
  entries_.push_back(Entry{std::move(name), std::move(dims), std::move(values)});
}

const Checkpoint::Entry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.push_back(kFloat32);
    put_u32(out, static_cast<std::uint32_t>(e.dims.size()));
    for (auto d : e.dims) put_u32(out, d);
    for (float v : e.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  put_u32(out, crc32_of(out));
  return out;
}

Checkpoint Checkpoint::parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError("checkpoint: bad magic or file too short");
  }
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  if (tail.u32() != crc32_of(body)) throw CheckpointError("checkpoint: checksum mismatch");

  Reader r(body);
  r.str(4);
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    if (r.u8() != kFloat32) throw CheckpointError("checkpoint: entry '" + name + "' has unknown dtype");
    const std::uint32_t rank = r.u32();
    std::vector<std::uint32_t> dims(rank);
    for (auto& d : dims) d = r.u32();
    const std::size_t n = product(dims);
    if (r.remaining() < n * 4) throw CheckpointError("checkpoint: truncated data");
    std::vector<float> values(n);
    for (auto& v : values) v = std::bit_cast<float>(r.u32());
    ckpt.add(std::move(name), std::move(dims), std::move(values));
  }
  if (r.remaining() != 0) throw CheckpointError("checkpoint: trailing bytes after last entry");
  return ckpt;
}

void atomic_write(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open '" + tmp.string() + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) {
      f.close();
      std::filesystem::remove(tmp);
      throw DataError("write failed for '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw DataError("cannot rename into '" + path.string() + "': " + ec.message());
  }
}

void atomic_write(const std::filesystem::path& path, const std::string& text) {
  atomic_write(path, std::span<const std::uint8_t>(
                         reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), {});
}

void Checkpoint::save(const std::filesystem::path& path) const { atomic_write(path, serialize()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const DataError& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  return parse(bytes);
}

template <typename T>
void append_to_checkpoint(Checkpoint& ckpt, const ParamList<T>& params) {
  for (const auto& p : params) {
    std::vector<std::uint32_t> dims(p.dims.begin(), p.dims.end());
    std::vector<float> values(p.tensor.data().begin(), p.tensor.data().end());
    ckpt.add(p.name, std::move(dims), std::move(values));
  }
}

template <typename T>
Checkpoint to_checkpoint(const ParamList<T>& params) {
  Checkpoint ckpt;
  append_to_checkpoint(ckpt, params);
  return ckpt;
}

template <typename T>
void load_params(const ParamList<T>& params, const Checkpoint& ckpt,
                 std::span<const std::string> ignored_prefixes) {
  std::vector<std::string> offenders;
  std::unordered_set<std::string> known;
  for (const auto& p : params) {
    known.insert(p.name);
    const auto* e = ckpt.find(p.name);
    if (e == nullptr) {
      offenders.push_back(p.name + " (missing)");
      continue;
    }
    std::vector<std::uint32_t> want(p.dims.begin(), p.dims.end());
    if (e->dims != want) {
      offenders.push_back(p.name + " (shape " + dims_str(e->dims) + ", expected " +
                          dims_str(want) + ")");
    }
  }
  for (const auto& e : ckpt.entries()) {
    if (known.count(e.name)) continue;
    bool ignored = false;
    for (const auto& prefix : ignored_prefixes) ignored = ignored || e.name.rfind(prefix, 0) == 0;
    if (!ignored) offenders.push_back(e.name + " (unexpected)");
  }
  if (!offenders.empty()) {
    std::string msg = "checkpoint does not match the model (" +
                      std::to_string(offenders.size()) + " offending names):";
    for (std::size_t i = 0; i < offenders.size() && i < 5; ++i) msg += "\n  " + offenders[i];
    throw CheckpointError(msg);
  }
  for (const auto& p : params) {
    const auto* e = ckpt.find(p.name);
    Tensor<T> t = p.tensor;
    auto dst = t.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(e->values[i]);
  }
}

template Checkpoint to_checkpoint(const ParamList<float>&);
template Checkpoint to_checkpoint(const ParamList<double>&);
template void append_to_checkpoint(Checkpoint&, const ParamList<float>&);
template void append_to_checkpoint(Checkpoint&, const ParamList<double>&);
template void load_params(const ParamList<float>&, const Checkpoint&, std::span<const std::string>);
template void load_params(const ParamList<double>&, const Checkpoint&, std::span<const std::string>);

}  // namespace mrdn

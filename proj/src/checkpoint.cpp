#include "mcanet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <zlib.h>

#include "mcanet/errors.hpp"

namespace mcanet {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'M', 'C', 'A', 'N'};
constexpr std::size_t kHeaderSize = 4 + 2 + 4;

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U take(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::span<const std::uint8_t> take_bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("truncated archive while reading ") + what, pos_);
    }
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = crc32(crc, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

template <typename T>
void put_tensor(std::vector<std::uint8_t>& out, const Tensor<T>& t) {
  put<std::uint8_t>(out, std::is_same_v<T, float> ? 0 : 1);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.dims()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw ConfigError("dimension too large for archive");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  const auto* p = reinterpret_cast<const std::uint8_t*>(t.data().data());
  out.insert(out.end(), p, p + t.size() * sizeof(T));
}

template <typename T>
Tensor<T> take_tensor(Reader& r, const Dims& dims, std::size_t count) {
  Tensor<T> t(dims);
  auto bytes = r.take_bytes(count * sizeof(T), "tensor payload");
  std::memcpy(t.data().data(), bytes.data(), bytes.size());
  return t;
}

std::vector<float> text_to_floats(const std::string& s) {
  std::vector<float> v(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) v[i] = static_cast<float>(static_cast<unsigned char>(s[i]));
  return v;
}

}  // namespace

const ArchiveEntry* TensorArchive::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

template <typename T>
const Tensor<T>& TensorArchive::get(std::string_view name) const {
  const ArchiveEntry* e = find(name);
  if (!e) throw FormatError("archive has no entry '" + std::string(name) + "'");
  const auto* t = std::get_if<Tensor<T>>(&e->tensor);
  if (!t) throw FormatError("archive entry '" + std::string(name) + "' has an unexpected dtype");
  return *t;
}

template const Tensor<float>& TensorArchive::get(std::string_view) const;
template const Tensor<double>& TensorArchive::get(std::string_view) const;

std::vector<std::uint8_t> encode_archive(const TensorArchive& archive) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint16_t>(out, kArchiveVersion);
  if (archive.entries().size() > std::numeric_limits<std::uint32_t>::max()) {
    throw ConfigError("too many archive entries");
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.entries().size()));
  for (const auto& e : archive.entries()) {
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ConfigError("entry name too long: " + e.name.substr(0, 64) + "...");
    }
    put<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    std::visit([&](const auto& t) { put_tensor(out, t); }, e.tensor);
  }
  const std::uint32_t crc = crc_of(std::span(out).subspan(kHeaderSize));
  put<std::uint32_t>(out, crc);
  return out;
}

TensorArchive decode_archive(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take_bytes(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("bad archive magic", 0);
  const auto version = r.take<std::uint16_t>("version");
  if (version != kArchiveVersion) {
    throw FormatError("unsupported archive version " + std::to_string(version), 4);
  }
  const auto count = r.take<std::uint32_t>("entry count");
  TensorArchive archive;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.take<std::uint16_t>("name length");
    auto name_bytes = r.take_bytes(name_len, "entry name");
    std::string name(name_bytes.begin(), name_bytes.end());
    const std::size_t dtype_at = r.pos();
    const auto dtype = r.take<std::uint8_t>("dtype");
    if (dtype > 1) throw FormatError("unknown dtype code " + std::to_string(dtype), dtype_at);
    const std::size_t rank_at = r.pos();
    const auto rank = r.take<std::uint8_t>("rank");
    if (rank < 1 || rank > 4) throw FormatError("unsupported rank " + std::to_string(rank), rank_at);
    Dims dims(rank);
    const std::size_t dims_at = r.pos();
    const std::size_t elem = dtype == 0 ? sizeof(float) : sizeof(double);
    std::size_t count_elems = 1;
    for (auto& d : dims) {
      d = r.take<std::uint32_t>("dims");
      if (d != 0 && count_elems > r.remaining() / elem / d) {
        throw FormatError("dimensions of '" + name + "' exceed the remaining archive bytes", dims_at);
      }
      count_elems *= d;
    }
    if (count_elems == 0) throw FormatError("entry '" + name + "' has a zero dimension", dims_at);
    if (dtype == 0) {
      archive.add(std::move(name), take_tensor<float>(r, dims, count_elems));
    } else {
      archive.add(std::move(name), take_tensor<double>(r, dims, count_elems));
    }
  }
  const std::size_t crc_at = r.pos();
  const auto stored = r.take<std::uint32_t>("checksum");
  const auto actual = crc_of(bytes.subspan(kHeaderSize, crc_at - kHeaderSize));
  if (stored != actual) throw FormatError("archive checksum mismatch", crc_at);
  if (r.remaining() != 0) throw FormatError("trailing bytes after archive checksum", r.pos());
  return archive;
}

void write_archive(const TensorArchive& archive, const std::filesystem::path& path) {
  const auto bytes = encode_archive(archive);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

TensorArchive read_archive(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_archive(bytes);
}

template <typename T>
TensorArchive make_checkpoint(Model<T>& model, const CheckpointMeta& meta) {
  TensorArchive a;
  for (Param<T>* p : model.parameters()) a.add("param/" + p->name, p->value);
  for (Param<T>* p : model.parameters()) a.add("momentum/" + p->name, p->momentum);
  for (const auto& b : model.buffers()) a.add("buffer/" + b.name, *b.tensor);
  a.add("meta/epoch", Tensor<double>(Dims{1}, static_cast<double>(meta.epoch)));
  a.add("meta/step", Tensor<double>(Dims{1}, static_cast<double>(meta.step)));
  a.add("meta/seed", Tensor<double>(Dims{2}, std::vector<double>{static_cast<double>(meta.seed >> 32),
                                              static_cast<double>(meta.seed & 0xffffffffu)}));
  if (!meta.config_text.empty()) {
    a.add("meta/config", Tensor<float>(Dims{meta.config_text.size()}, text_to_floats(meta.config_text)));
  }
  return a;
}

CheckpointMeta read_checkpoint_meta(const TensorArchive& archive) {
  CheckpointMeta meta;
  meta.epoch = static_cast<std::size_t>(archive.get<double>("meta/epoch")[0]);
  meta.step = static_cast<std::size_t>(archive.get<double>("meta/step")[0]);
  const auto& seed = archive.get<double>("meta/seed");
  meta.seed = (static_cast<std::uint64_t>(seed[0]) << 32) | static_cast<std::uint64_t>(seed[1]);
  if (const ArchiveEntry* e = archive.find("meta/config")) {
    const auto* t = std::get_if<Tensor<float>>(&e->tensor);
    if (!t) throw FormatError("meta/config has an unexpected dtype");
    for (float c : t->data()) meta.config_text.push_back(static_cast<char>(static_cast<unsigned char>(c)));
  }
  return meta;
}

template <typename T>
CheckpointMeta restore_checkpoint(Model<T>& model, const TensorArchive& archive) {
  auto copy_into = [&](const std::string& name, Tensor<T>& dst) {
    const Tensor<T>& src = archive.get<T>(name);
    if (!src.same_dims(dst)) {
      throw FormatError("entry '" + name + "' has shape " + dims_to_string(src.dims()) +
                        ", model expects " + dims_to_string(dst.dims()));
    }
    dst = src;
  };
  for (Param<T>* p : model.parameters()) {
    copy_into("param/" + p->name, p->value);
    copy_into("momentum/" + p->name, p->momentum);
  }
  for (auto& b : model.buffers()) copy_into("buffer/" + b.name, *b.tensor);
  return read_checkpoint_meta(archive);
}

template TensorArchive make_checkpoint(Model<float>&, const CheckpointMeta&);
template TensorArchive make_checkpoint(Model<double>&, const CheckpointMeta&);
template CheckpointMeta restore_checkpoint(Model<float>&, const TensorArchive&);
template CheckpointMeta restore_checkpoint(Model<double>&, const TensorArchive&);

}  // namespace mcanet

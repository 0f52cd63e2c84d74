#include "cae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace cae {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'C', 'A', 'E', '1'};

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  bool done() const { return pos_ == bytes_.size(); }

  template <typename T>
  T get(const char* what) {
    T v;
    take(&v, sizeof(T), what);
    return v;
  }

  void take(void* dst, std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CorruptCheckpoint(std::string("checkpoint truncated while reading ") + what);
    }
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_tensors(const std::filesystem::path& path, const std::map<std::string, NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& [name, t] : tensors) {
    if (numel(t.shape) != static_cast<std::size_t>(t.values.size())) {
      throw CheckpointError("tensor '" + name + "' has inconsistent shape");
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  if (!out) throw CheckpointError("write failed for " + path.string());
}

std::map<std::string, NamedTensor> read_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

  char magic[4];
  r.take(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw CorruptCheckpoint("bad checkpoint magic in " + path.string());
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw UnsupportedVersion("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  }

  std::map<std::string, NamedTensor> tensors;
  while (!r.done()) {
    const auto len = r.get<std::uint32_t>("name length");
    std::string name(len, '\0');
    r.take(name.data(), len, "name");
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank > 8) throw CorruptCheckpoint("implausible rank " + std::to_string(rank) + " for '" + name + "'");
    NamedTensor t;
    for (std::uint32_t i = 0; i < rank; ++i) t.shape.push_back(r.get<std::uint64_t>("dims"));
    const std::size_t n = numel(t.shape);
    if (n > (std::size_t{1} << 34)) throw CorruptCheckpoint("implausible size for '" + name + "'");
    t.values.resize(static_cast<Eigen::Index>(n));
    r.take(t.values.data(), n * sizeof(double), "payload");
    if (!tensors.emplace(name, std::move(t)).second) {
      throw CorruptCheckpoint("duplicate tensor '" + name + "'");
    }
  }
  return tensors;
}

}  // namespace cae

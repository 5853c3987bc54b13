#include "ahf/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "ahf/errors.hpp"
#include "ahf/random.hpp"

namespace ahf {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'A', 'H', 'F', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw io_error("truncated checkpoint '" + path.string() + "'");
  return v;
}

std::string get_string(std::istream& is, std::size_t n, const std::filesystem::path& path) {
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), static_cast<std::streamsize>(n)))
    throw io_error("truncated checkpoint '" + path.string() + "'");
  return s;
}

struct RawCheckpoint {
  std::string config_text;
  std::uint32_t num_classes = 0;
  std::map<std::string, Matrix> arrays;
};

RawCheckpoint read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw io_error("'" + path.string() + "' is not a checkpoint");
  if (get<std::uint32_t>(in, path) != kVersion) throw io_error("unsupported checkpoint version");
  RawCheckpoint raw;
  raw.config_text = get_string(in, get<std::uint64_t>(in, path), path);
  raw.num_classes = get<std::uint32_t>(in, path);
  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(in, get<std::uint32_t>(in, path), path);
    const auto rows = get<std::uint32_t>(in, path);
    const auto cols = get<std::uint32_t>(in, path);
    Matrix m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = get<double>(in, path);
    raw.arrays.emplace(std::move(name), std::move(m));
  }
  return raw;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg, const ReidModel& model) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write checkpoint '" + path.string() + "'");
  out.write(kMagic, 8);
  put<std::uint32_t>(out, kVersion);
  const std::string text = cfg.to_text();
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.num_classes()));
  const auto params = model.parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.cols()));
    for (Eigen::Index r = 0; r < p->value.rows(); ++r)
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) put<double>(out, p->value(r, c));
  }
  if (!out) throw io_error("failed writing checkpoint '" + path.string() + "'");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  RawCheckpoint raw = read_raw(path);
  LoadedCheckpoint ck;
  ck.config = TrainConfig::from_text(raw.config_text);
  ck.model = std::make_unique<ReidModel>(ck.config, static_cast<int>(raw.num_classes));
  for (auto* p : ck.model->parameters()) {
    auto it = raw.arrays.find(p->name);
    if (it == raw.arrays.end()) throw io_error("checkpoint lacks array '" + p->name + "'");
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw io_error("checkpoint array '" + p->name + "' has the wrong shape");
    p->value = it->second;
  }
  return ck;
}

int load_weights_into(const std::filesystem::path& path, ReidModel& model) {
  const RawCheckpoint raw = read_raw(path);
  int copied = 0;
  for (auto* p : model.parameters()) {
    auto it = raw.arrays.find(p->name);
    if (it == raw.arrays.end() || it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      continue;
    p->value = it->second;
    ++copied;
  }
  return copied;
}

}  // namespace ahf

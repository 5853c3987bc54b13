#include "ahf/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ahf/errors.hpp"
#include "ahf/image_io.hpp"
#include "ahf/random.hpp"

namespace ahf::data {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

std::vector<std::string> Manifest::identities() const {
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.identity);
  return {ids.begin(), ids.end()};
}

fs::path Manifest::resolve(const Record& r) const {
  const fs::path p(r.path);
  return p.is_absolute() ? p : root / p;
}

Manifest parse_manifest(const std::string& text, const fs::path& root, std::string name) {
  Manifest m;
  m.root = root;
  m.name = std::move(name);
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      constexpr std::string_view key = "# dataset:";
      if (line.rfind(key, 0) == 0) {
        std::string v = line.substr(key.size());
        v.erase(0, v.find_first_not_of(' '));
        m.name = v;
      }
      continue;
    }
    auto fields = split_tabs(line);
    if (fields.size() < 2 || fields.size() > 3 || fields[0].empty() || fields[1].empty())
      throw input_error("manifest line " + std::to_string(line_no) + ": expected path<TAB>identity[<TAB>species]");
    m.records.push_back({fields[0], fields[1], fields.size() == 3 ? fields[2] : std::string{}});
  }
  return m;
}

Manifest load_manifest(const fs::path& path) {
  Manifest m = parse_manifest(read_file(path), path.parent_path(), path.stem().string());
  for (const auto& r : m.records)
    if (!fs::exists(m.resolve(r))) throw io_error("manifest entry not found: '" + m.resolve(r).string() + "'");
  return m;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  std::ostringstream os;
  if (!manifest.name.empty()) os << "# dataset: " << manifest.name << '\n';
  for (const auto& r : manifest.records) {
    os << r.path << '\t' << r.identity;
    if (!r.species.empty()) os << '\t' << r.species;
    os << '\n';
  }
  write_file(path, os.str());
}

SplitSpec split_identities(const Manifest& manifest, std::uint64_t seed, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw parameter_error("split: train fraction in (0, 1)");
  std::vector<std::string> ids = manifest.identities();
  if (ids.size() < 2) throw input_error("split: need at least 2 identities");
  Rng rng(seed);
  shuffle(ids.begin(), ids.end(), rng);
  auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(ids.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, ids.size() - 1);
  SplitSpec s;
  s.seed = seed;
  s.train_fraction = train_fraction;
  s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::string format_split(const SplitSpec& split) {
  std::ostringstream os;
  os << "seed:\t" << split.seed << '\n';
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, split.train_fraction);
  os << "train_fraction:\t" << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)) << '\n';
  os << "train:";
  for (const auto& id : split.train) os << '\t' << id;
  os << "\ntest:";
  for (const auto& id : split.test) os << '\t' << id;
  os << '\n';
  return os.str();
}

SplitSpec parse_split(const std::string& text) {
  SplitSpec s;
  bool seen_train = false, seen_test = false;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_tabs(line);
    const std::string& key = fields[0];
    std::vector<std::string> values(fields.begin() + 1, fields.end());
    if (key == "seed:" && values.size() == 1) {
      s.seed = std::stoull(values[0]);
    } else if (key == "train_fraction:" && values.size() == 1) {
      s.train_fraction = std::stod(values[0]);
    } else if (key == "train:") {
      s.train = std::move(values);
      seen_train = true;
    } else if (key == "test:") {
      s.test = std::move(values);
      seen_test = true;
    } else {
      throw input_error("split file: unrecognised line '" + line + "'");
    }
  }
  if (!seen_train || !seen_test) throw input_error("split file: missing train: or test: line");
  return s;
}

void write_split(const fs::path& path, const SplitSpec& split) { write_file(path, format_split(split)); }

SplitSpec read_split(const fs::path& path) { return parse_split(read_file(path)); }

void validate_split(const SplitSpec& split, const Manifest& manifest) {
  const std::set<std::string> train(split.train.begin(), split.train.end());
  const std::set<std::string> test(split.test.begin(), split.test.end());
  for (const auto& id : train)
    if (test.count(id)) throw input_error("split: identity '" + id + "' is in both train and test");
  const auto all = manifest.identities();
  if (train.size() + test.size() != all.size()) throw input_error("split: does not cover the manifest's identities");
  for (const auto& id : all)
    if (!train.count(id) && !test.count(id)) throw input_error("split: identity '" + id + "' is unassigned");
}

ImageSet load_images(const Manifest& manifest, const std::vector<std::string>& identities) {
  ImageSet set;
  set.identities = identities;
  std::map<std::string, int> label_of;
  for (std::size_t i = 0; i < identities.size(); ++i) label_of[identities[i]] = static_cast<int>(i);
  for (const auto& r : manifest.records) {
    auto it = label_of.find(r.identity);
    if (it == label_of.end()) continue;
    set.images.push_back(load_rgb(manifest.resolve(r)));
    set.labels.push_back(it->second);
    set.names.push_back(r.path);
  }
  return set;
}

}  // namespace ahf::data

#pragma once

// Dataset manifests and identity-disjoint train/test splits.
//
// Manifest format: UTF-8 text, one record per line,
//   <path> TAB <identity> [TAB <species>]
// Blank lines and lines starting with '#' are ignored, except an optional
// "# dataset: <name>" header. Relative paths resolve against the manifest's
// directory.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

namespace ahf::data {

struct Record {
  std::string path;
  std::string identity;
  std::string species;
};

struct Manifest {
  std::string name;
  std::filesystem::path root;
  std::vector<Record> records;

  /// Lexicographically sorted unique identity ids.
  std::vector<std::string> identities() const;
  std::filesystem::path resolve(const Record& r) const;
};

Manifest parse_manifest(const std::string& text, const std::filesystem::path& root, std::string name = {});
/// Parses and checks that every path exists.
Manifest load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

struct SplitSpec {
  std::vector<std::string> train;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
  double train_fraction = 0.7;
};

/// Sort identities, shuffle with `seed`, first round(fraction * n) to train.
SplitSpec split_identities(const Manifest& manifest, std::uint64_t seed, double train_fraction = 0.7);
std::string format_split(const SplitSpec& split);
SplitSpec parse_split(const std::string& text);
void write_split(const std::filesystem::path& path, const SplitSpec& split);
SplitSpec read_split(const std::filesystem::path& path);
/// Disjointness and coverage against the manifest's identities.
void validate_split(const SplitSpec& split, const Manifest& manifest);

/// Decoded images of a set of identities with dense labels. Labels follow
/// the order of `identities`.
struct ImageSet {
  std::vector<cv::Mat> images;  // CV_64FC3 RGB
  std::vector<int> labels;
  std::vector<std::string> identities;  // label -> identity id
  std::vector<std::string> names;       // per image, manifest path

  std::size_t size() const { return images.size(); }
};

ImageSet load_images(const Manifest& manifest, const std::vector<std::string>& identities);

}  // namespace ahf::data

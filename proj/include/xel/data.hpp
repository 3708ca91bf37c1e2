#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xel/functions.hpp"
#include "xel/tensor.hpp"
#include "xel/transformer.hpp"

namespace xel {

struct DatasetSpec {
  std::string variant = "m4n3";
  std::size_t n_train = 200000;
  std::size_t n_val = 10000;
  std::size_t n_test = 20000;
  std::uint64_t seed = 0;
  std::optional<std::size_t> k_classes;  // Expt-II only
  std::size_t d = 1;

  /// Throws DomainError / UnknownIdError.
  void validate() const;

  bool operator==(const DatasetSpec&) const = default;
};

void to_json(nlohmann::json& j, const DatasetSpec& s);
void from_json(const nlohmann::json& j, DatasetSpec& s);

enum class SplitKind { train, val, test };
std::string to_string(SplitKind kind);
SplitKind parse_split_kind(const std::string& name);

/// Stream key for one split; distinct splits never share a key.
std::uint64_t split_key(std::uint64_t seed, SplitKind kind);

/// One split, sample-major: sample s owns x[s*m .. s*m+m) and y[s*n .. s*n+n).
struct Split {
  DatasetSpec spec;
  SplitKind kind = SplitKind::train;
  std::size_t m = 0, n = 0;
  std::vector<double> x, y;
  std::vector<std::uint16_t> classes;  // s*n + j; empty without quantization
  std::vector<std::vector<double>> bin_edges;  // quantizer fitted on train

  std::size_t size() const { return m == 0 ? 0 : x.size() / m; }
  bool has_classes() const { return !classes.empty(); }

  bool operator==(const Split&) const = default;
};

struct Dataset {
  Split train, val, test;
};

Dataset generate(const DatasetSpec& spec);

/// One split regenerated from the seed; classes are absent here.
Split generate_split(const DatasetSpec& spec, SplitKind kind);

/// d x m token matrix of one sample (scalars at coordinate 0).
Tensor tokenize(std::span<const double> scalars, std::size_t d);

/// Batched tokens d x (B*m) for the listed sample indices.
Tensor tokenize_batch(const Split& split, std::span<const std::size_t> samples, std::size_t d);

/// Teacher-forcing / loss targets for the listed samples, sample-major.
Targets batch_targets(const Split& split, std::span<const std::size_t> samples);

inline constexpr char kDataMagic[8] = {'X', 'E', 'L', 'D', 'A', 'T', 'A', '\0'};
inline constexpr std::uint16_t kDataVersion = 1;

std::vector<char> serialize(const Split& split);
Split deserialize(std::span<const char> bytes);
void save(const Split& split, const std::filesystem::path& path);
Split load(const std::filesystem::path& path);

/// Writes train/val/test files under dir as <kind>.xeldata.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace xel

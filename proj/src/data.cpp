#include "xel/data.hpp"

#include <algorithm>

#include "xel/binary_io.hpp"
#include "xel/errors.hpp"
#include "xel/rng.hpp"

namespace xel {

void DatasetSpec::validate() const {
  if (!is_suite_variant(variant)) throw UnknownIdError("unknown dataset variant '" + variant + "'");
  if (n_train < 1 || n_val < 1 || n_test < 1) throw DomainError("dataset split counts must be >= 1");
  if (d < 1) throw DomainError("dataset d must be >= 1");
  if (k_classes && (*k_classes < 2 || *k_classes > 65535))
    throw DomainError("k_classes must be in [2, 65535]");
}

void to_json(nlohmann::json& j, const DatasetSpec& s) {
  j = nlohmann::json{{"variant", s.variant}, {"n_train", s.n_train}, {"n_val", s.n_val},
                     {"n_test", s.n_test},   {"seed", s.seed},       {"d", s.d}};
  j["k_classes"] = s.k_classes ? nlohmann::json(*s.k_classes) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, DatasetSpec& s) {
  s.variant = j.at("variant").get<std::string>();
  s.n_train = j.at("n_train").get<std::size_t>();
  s.n_val = j.at("n_val").get<std::size_t>();
  s.n_test = j.at("n_test").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.d = j.at("d").get<std::size_t>();
  if (j.contains("k_classes") && !j.at("k_classes").is_null())
    s.k_classes = j.at("k_classes").get<std::size_t>();
  else
    s.k_classes.reset();
}

std::string to_string(SplitKind kind) {
  switch (kind) {
    case SplitKind::train: return "train";
    case SplitKind::val: return "val";
    case SplitKind::test: return "test";
  }
  return "?";
}

SplitKind parse_split_kind(const std::string& name) {
  if (name == "train") return SplitKind::train;
  if (name == "val") return SplitKind::val;
  if (name == "test") return SplitKind::test;
  throw UnknownIdError("unknown split '" + name + "'");
}

std::uint64_t split_key(std::uint64_t seed, SplitKind kind) {
  // mix64 is a bijection, so distinct salts give distinct keys.
  return mix64(mix64(seed) ^ (static_cast<std::uint64_t>(kind) + 1));
}

namespace {

std::size_t split_count(const DatasetSpec& spec, SplitKind kind) {
  switch (kind) {
    case SplitKind::train: return spec.n_train;
    case SplitKind::val: return spec.n_val;
    case SplitKind::test: return spec.n_test;
  }
  return 0;
}

void attach_classes(Split& split, const QuantizedFunction& q) {
  split.bin_edges = q.bin_edges();
  split.classes.resize(split.y.size());
  for (std::size_t i = 0; i < split.y.size(); ++i)
    split.classes[i] = static_cast<std::uint16_t>(q.class_of(i % split.n, split.y[i]));
}

}  // namespace

Split generate_split(const DatasetSpec& spec, SplitKind kind) {
  spec.validate();
  Split s;
  s.spec = spec;
  s.kind = kind;
  s.m = suite_inputs(spec.variant);
  s.n = suite_outputs(spec.variant);
  const std::size_t count = split_count(spec, kind);
  s.x.resize(count * s.m);
  s.y.resize(count * s.n);
  const std::uint64_t key = split_key(spec.seed, kind);
  for (std::size_t i = 0; i < count; ++i) {
    const double x1 = 2.0 * open_unit(stream_at(key, i)) - 1.0;
    const SuitePoint p = eval_suite(spec.variant, x1);
    std::copy(p.x.begin(), p.x.end(), s.x.begin() + static_cast<std::ptrdiff_t>(i * s.m));
    std::copy(p.y.begin(), p.y.end(), s.y.begin() + static_cast<std::ptrdiff_t>(i * s.n));
  }
  return s;
}

Dataset generate(const DatasetSpec& spec) {
  Dataset ds{generate_split(spec, SplitKind::train), generate_split(spec, SplitKind::val),
             generate_split(spec, SplitKind::test)};
  if (spec.k_classes) {
    const QuantizedFunction q = fit_quantizer(spec.variant, *spec.k_classes, ds.train.n, ds.train.y);
    attach_classes(ds.train, q);
    attach_classes(ds.val, q);
    attach_classes(ds.test, q);
  }
  return ds;
}

Tensor tokenize(std::span<const double> scalars, std::size_t d) {
  if (d < 1) throw DomainError("tokenize: d must be >= 1");
  Tensor t = Tensor::zeros({d, scalars.size()});
  std::copy(scalars.begin(), scalars.end(), t.data().begin());
  return t;
}

Tensor tokenize_batch(const Split& split, std::span<const std::size_t> samples, std::size_t d) {
  if (d < 1) throw DomainError("tokenize: d must be >= 1");
  const std::size_t cols = samples.size() * split.m;
  Tensor t = Tensor::zeros({d, cols});
  auto row0 = t.data().first(cols);
  for (std::size_t b = 0; b < samples.size(); ++b) {
    if (samples[b] >= split.size()) throw DomainError("tokenize: sample index out of range");
    for (std::size_t l = 0; l < split.m; ++l) row0[b * split.m + l] = split.x[samples[b] * split.m + l];
  }
  return t;
}

Targets batch_targets(const Split& split, std::span<const std::size_t> samples) {
  Targets t;
  t.values.reserve(samples.size() * split.n);
  for (std::size_t s : samples) {
    if (s >= split.size()) throw DomainError("targets: sample index out of range");
    for (std::size_t j = 0; j < split.n; ++j) t.values.push_back(split.y[s * split.n + j]);
    if (split.has_classes())
      for (std::size_t j = 0; j < split.n; ++j) t.classes.push_back(split.classes[s * split.n + j]);
  }
  return t;
}

std::vector<char> serialize(const Split& split) {
  nlohmann::json header;
  header["spec"] = split.spec;
  header["split"] = to_string(split.kind);
  header["count"] = split.size();
  header["m"] = split.m;
  header["n"] = split.n;
  header["has_classes"] = split.has_classes();
  header["bin_edges"] = split.bin_edges;

  bin::Writer w;
  w.put_bytes(std::span<const char>(kDataMagic, 8));
  w.put(kDataVersion);
  w.put_string(header.dump());
  const std::size_t payload_start = w.size();
  for (std::size_t s = 0; s < split.size(); ++s) {
    for (std::size_t l = 0; l < split.m; ++l) w.put(split.x[s * split.m + l]);
    for (std::size_t j = 0; j < split.n; ++j) w.put(split.y[s * split.n + j]);
  }
  for (std::uint16_t c : split.classes) w.put(c);
  const auto& bytes = w.bytes();
  const std::uint64_t sum = bin::fnv1a(std::span<const char>(bytes).subspan(payload_start));
  w.put(sum);
  return std::move(w.bytes());
}

Split deserialize(std::span<const char> bytes) {
  if (bytes.size() < 8 || !std::equal(kDataMagic, kDataMagic + 8, bytes.begin()))
    throw BadMagicError("not an XELDATA file");
  bin::Reader r(bytes);
  r.get_bytes(8);
  const auto version = r.get<std::uint16_t>();
  if (version != kDataVersion)
    throw VersionMismatchError("XELDATA version " + std::to_string(version) + ", expected " +
                               std::to_string(kDataVersion));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.get_string());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("XELDATA header: ") + e.what());
  }

  Split s;
  std::size_t count = 0;
  bool has_classes = false;
  try {
    s.spec = header.at("spec").get<DatasetSpec>();
    s.kind = parse_split_kind(header.at("split").get<std::string>());
    count = header.at("count").get<std::size_t>();
    s.m = header.at("m").get<std::size_t>();
    s.n = header.at("n").get<std::size_t>();
    has_classes = header.at("has_classes").get<bool>();
    s.bin_edges = header.at("bin_edges").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("XELDATA header: ") + e.what());
  }

  const std::size_t payload_start = r.position();
  const std::size_t payload = count * (s.m + s.n) * 8 + (has_classes ? count * s.n * 2 : 0);
  if (r.remaining() != payload + 8) throw ChecksumError("XELDATA payload length mismatch");
  const std::uint64_t expect = bin::fnv1a(bytes.subspan(payload_start, payload));
  s.x.resize(count * s.m);
  s.y.resize(count * s.n);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t l = 0; l < s.m; ++l) s.x[i * s.m + l] = r.get<double>();
    for (std::size_t j = 0; j < s.n; ++j) s.y[i * s.n + j] = r.get<double>();
  }
  if (has_classes) {
    s.classes.resize(count * s.n);
    for (auto& c : s.classes) c = r.get<std::uint16_t>();
  }
  if (r.get<std::uint64_t>() != expect) throw ChecksumError("XELDATA checksum mismatch");
  return s;
}

void save(const Split& split, const std::filesystem::path& path) {
  const auto bytes = serialize(split);
  bin::write_file(path.string(), bytes);
}

Split load(const std::filesystem::path& path) { return deserialize(bin::read_file(path.string())); }

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save(data.train, dir / "train.xeldata");
  save(data.val, dir / "val.xeldata");
  save(data.test, dir / "test.xeldata");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  return Dataset{load(dir / "train.xeldata"), load(dir / "val.xeldata"), load(dir / "test.xeldata")};
}

}  // namespace xel

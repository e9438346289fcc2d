#include "deer/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "deer/errors.hpp"

namespace deer {

namespace {

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw ConfigError("cannot open " + path.string() + " for writing");
  }
  template <typename T>
  void put(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void bytes(const void* data, std::size_t n) { out_.write(static_cast<const char*>(data), n); }
  void doubles(const std::vector<double>& v) { bytes(v.data(), v.size() * sizeof(double)); }
  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw ConfigError("failed writing " + path.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw ConfigError("cannot open checkpoint " + path.string());
  }
  template <typename T>
  T get() {
    T value{};
    bytes(&value, sizeof(T));
    return value;
  }
  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) {
      throw CompatError("truncated checkpoint " + path_.string());
    }
  }
  std::vector<double> doubles(std::size_t n) {
    std::vector<double> v(n);
    bytes(v.data(), n * sizeof(double));
    return v;
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const AdamWState* optimizer) {
  Writer w(path);
  w.bytes(kCheckpointMagic, kMagicLen);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Param& p = params.entries()[i];
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.put<std::uint64_t>(p.rows);
    w.put<std::uint64_t>(p.cols);
    w.put<std::uint8_t>(p.frozen ? 1 : 0);
    w.doubles(p.values);
    const bool has_moments = optimizer != nullptr && i < optimizer->m.size() &&
                             optimizer->m[i].size() == p.size();
    w.put<std::uint64_t>(has_moments ? optimizer->counts[i] : 0);
    if (has_moments) {
      w.doubles(optimizer->m[i]);
      w.doubles(optimizer->v[i]);
    }
  }
  w.put<std::uint8_t>(optimizer != nullptr ? 1 : 0);
  if (optimizer != nullptr) {
    const AdamWHyper& h = optimizer->hyper;
    for (double x : {h.lr, h.beta1, h.beta2, h.eps, h.weight_decay}) w.put<double>(x);
    w.put<std::uint64_t>(optimizer->step);
  }
  w.finish(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[kMagicLen];
  r.bytes(magic, kMagicLen);
  if (std::memcmp(magic, kCheckpointMagic, kMagicLen) != 0) {
    throw CompatError(path.string() + " is not a DEER1 checkpoint");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CompatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  const auto count = r.get<std::uint64_t>();
  std::vector<std::size_t> counts;
  std::vector<std::vector<double>> ms, vs;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>();
    std::string name(len, '\0');
    r.bytes(name.data(), len);
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    const bool frozen = r.get<std::uint8_t>() != 0;
    ParamId id = ck.params.add(name, rows, cols);
    ck.params[id].values = r.doubles(rows * cols);
    ck.params[id].frozen = frozen;
    const auto moment_count = r.get<std::uint64_t>();
    counts.push_back(moment_count);
    if (moment_count > 0) {
      ms.push_back(r.doubles(rows * cols));
      vs.push_back(r.doubles(rows * cols));
    } else {
      ms.emplace_back();
      vs.emplace_back();
    }
  }
  if (r.get<std::uint8_t>() != 0) {
    AdamWState state;
    AdamWHyper& h = state.hyper;
    h.lr = r.get<double>();
    h.beta1 = r.get<double>();
    h.beta2 = r.get<double>();
    h.eps = r.get<double>();
    h.weight_decay = r.get<double>();
    state.step = r.get<std::uint64_t>();
    state.counts = std::move(counts);
    state.m = std::move(ms);
    state.v = std::move(vs);
    ck.optimizer = std::move(state);
  }
  return ck;
}

void restore_params(ParamStore& target, const ParamStore& source) {
  for (std::size_t i = 0; i < target.size(); ++i) {
    Param& p = target[ParamId{i}];
    auto id = source.find(p.name);
    if (!id) throw CompatError("checkpoint is missing parameter " + p.name);
    const Param& s = source[*id];
    if (s.rows != p.rows || s.cols != p.cols) {
      throw CompatError("shape mismatch for " + p.name + ": checkpoint " +
                        std::to_string(s.rows) + "x" + std::to_string(s.cols) + ", model " +
                        std::to_string(p.rows) + "x" + std::to_string(p.cols));
    }
    p.values = s.values;
    p.frozen = s.frozen;
  }
  if (source.size() != target.size()) {
    throw CompatError("checkpoint holds " + std::to_string(source.size()) +
                      " parameters, model expects " + std::to_string(target.size()));
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  std::filesystem::path p = checkpoint;
  p += ".json";
  return p;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw ConfigError("failed writing " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace deer

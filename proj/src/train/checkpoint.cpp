#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "bcgnn/error.hpp"
#include "bcgnn/train.hpp"

namespace bcgnn::train {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[8] = {'B', 'C', 'G', 'N', 'N', 'C', 'K', '1'};

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get(const char* what) {
    T v;
    std::memcpy(&v, take(sizeof(T), what), sizeof(T));
    return v;
  }
  const char* take(std::size_t count, const char* what) {
    if (count > bytes_.size() - pos_)
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    const char* p = bytes_.data() + pos_;
    pos_ += count;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize(const Checkpoint& ck) {
  json meta = {{"hyper", ck.hyper.to_json()},
               {"layout", ck.layout.to_json()},
               {"schema", ck.schema.to_json()},
               {"scaler", ck.scaler.to_json()},
               {"signs", ck.signs.values()},
               {"config", ck.config.to_json()},
               {"epochs_run", ck.epochs_run}};
  json names = json::array();
  for (const auto* p : ck.params.all()) names.push_back(p->name);
  meta["parameters"] = names;
  const std::string text = meta.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  for (const auto* p : ck.params.all()) {
    put<std::uint64_t>(out, p->value.rows());
    put<std::uint64_t>(out, p->value.cols());
    out.append(reinterpret_cast<const char*>(p->value.data()), p->value.size() * sizeof(double));
  }
  return out;
}

Checkpoint deserialize(const std::string& bytes) {
  Reader in(bytes);
  if (std::memcmp(in.take(sizeof(kMagic), "magic"), kMagic, sizeof(kMagic)) != 0)
    throw FormatError("not a checkpoint file (bad magic)");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  const auto length = in.get<std::uint64_t>("metadata length");
  const char* text = in.take(length, "metadata");

  Checkpoint ck;
  std::vector<std::string> names;
  try {
    const json meta = json::parse(text, text + length);
    ck.hyper = model::Hyper::from_json(meta.at("hyper"));
    ck.layout = model::FeatureLayout::from_json(meta.at("layout"));
    ck.schema = data::Schema::from_json(meta.at("schema"));
    ck.scaler = data::ScalerStats::from_json(meta.at("scaler"));
    ck.signs = corr::SignMatrix::from_values(ck.layout.features(),
                                             meta.at("signs").get<std::vector<int>>());
    ck.config = TrainConfig::from_json(meta.at("config"));
    ck.epochs_run = meta.at("epochs_run").get<std::size_t>();
    names = meta.at("parameters").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }

  ck.params = model::init_params(ck.hyper, ck.layout, 0);
  auto params = ck.params.all();
  if (names.size() != params.size())
    throw FormatError("checkpoint lists " + std::to_string(names.size()) + " parameters, model has " +
                      std::to_string(params.size()));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    if (names[k] != p->name)
      throw FormatError("checkpoint parameter " + std::to_string(k) + " is '" + names[k] +
                        "', expected '" + p->name + "'");
    const auto rows = in.get<std::uint64_t>("parameter shape");
    const auto cols = in.get<std::uint64_t>("parameter shape");
    if (rows != p->value.rows() || cols != p->value.cols())
      throw FormatError("checkpoint parameter '" + p->name + "' has shape " + std::to_string(rows) +
                        "x" + std::to_string(cols) + ", expected " + p->value.shape_string());
    const std::size_t count = p->value.size();
    std::memcpy(p->value.data(), in.take(count * sizeof(double), p->name.c_str()),
                count * sizeof(double));
    p->zero_grad();
  }
  if (!in.done()) throw FormatError("checkpoint has trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  const std::string bytes = serialize(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace bcgnn::train

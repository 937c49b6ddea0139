#include "noshow/model_io.hpp"

#include <bit>
#include <cstring>

#include "noshow/hash.hpp"
#include "noshow/io.hpp"

namespace noshow {

namespace {

constexpr std::string_view kMagic = "NSRF";
constexpr std::size_t kHeaderSize = 16;
constexpr std::size_t kDigestSize = 32;
constexpr std::size_t kNodeSize = 4 + 8 + 4 + 4 + 8;

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { out_.append(s); }
  std::string& str() { return out_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(ErrorCode::CorruptFile, "model payload is truncated");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

FeatureSet feature_set_from(const nlohmann::json& j) {
  FeatureSet s;
  s.lead_time = j.at("lead_time").get<bool>();
  s.hour_of_day = j.at("hour_of_day").get<bool>();
  s.day_of_week = j.at("day_of_week").get<bool>();
  s.season = j.at("season").get<bool>();
  s.hist_rate = j.at("hist_rate").get<bool>();
  s.prior_count = j.at("prior_count").get<bool>();
  s.specialty = j.at("specialty").get<bool>();
  s.site = j.at("site").get<bool>();
  return s;
}

}  // namespace

std::string serialize_model(const FrozenForestModel& model) {
  Writer payload;
  const std::string meta = model.metadata_json().dump();
  payload.u32(static_cast<std::uint32_t>(meta.size()));
  payload.bytes(meta);
  payload.u32(static_cast<std::uint32_t>(model.trees().size()));
  for (const auto& tree : model.trees()) {
    payload.u32(static_cast<std::uint32_t>(tree.nodes.size()));
    for (const auto& n : tree.nodes) {
      payload.i32(n.feature);
      payload.f64(n.threshold);
      payload.i32(n.left);
      payload.i32(n.right);
      payload.f64(n.value);
    }
  }

  Writer file;
  file.bytes(kMagic);
  file.u32(FrozenForestModel::kFormatVersion);
  file.u64(payload.str().size());
  file.bytes(payload.str());
  const auto digest = sha256(payload.str());
  file.bytes(std::string_view(reinterpret_cast<const char*>(digest.data()), digest.size()));
  return std::move(file.str());
}

FrozenForestModel deserialize_model(std::string_view bytes) {
  if (bytes.size() < 8 || bytes.substr(0, 4) != kMagic) throw Error(ErrorCode::CorruptFile, "not a model file");
  Reader header(bytes.substr(4));
  const auto version = header.u32();
  if (version != FrozenForestModel::kFormatVersion) {
    throw Error(ErrorCode::VersionMismatch, "model format version " + std::to_string(version) +
                                                " (supported: " + std::to_string(FrozenForestModel::kFormatVersion) + ")");
  }
  if (bytes.size() < kHeaderSize) throw Error(ErrorCode::CorruptFile, "model header is truncated");
  const auto length = header.u64();
  if (bytes.size() - kHeaderSize < kDigestSize || length != bytes.size() - kHeaderSize - kDigestSize) {
    throw Error(ErrorCode::CorruptFile, "model length does not match file size");
  }
  const auto payload = bytes.substr(kHeaderSize, length);
  const auto digest = sha256(payload);
  if (std::memcmp(digest.data(), bytes.data() + kHeaderSize + length, kDigestSize) != 0) {
    throw Error(ErrorCode::CorruptFile, "model checksum mismatch");
  }

  Reader in(payload);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in.bytes(in.u32()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("model metadata: ") + e.what());
  }

  try {
    FeatureEncoder encoder(feature_set_from(meta.at("feature_set")),
                           meta.at("specialties").get<std::vector<std::string>>(),
                           meta.at("sites").get<std::vector<std::string>>());
    if (encoder.fingerprint() != meta.at("fingerprint").get<std::string>()) {
      throw Error(ErrorCode::CorruptFile, "encoder fingerprint mismatch");
    }
    const auto& h = meta.at("hyperparams");
    ForestHyperparams hp;
    hp.n_trees = h.at("n_trees").get<int>();
    if (!h.at("max_depth").is_null()) hp.max_depth = h.at("max_depth").get<int>();
    hp.min_leaf_size = h.at("min_leaf_size").get<int>();
    hp.features_per_split = h.at("features_per_split").get<int>();
    hp.bootstrap = h.at("bootstrap").get<bool>();
    hp.seed = h.at("seed").get<std::uint64_t>();
    const auto& t = meta.at("training");
    TrainingMetadata tm;
    tm.train_start = t.at("train_start").get<std::string>();
    tm.train_end = t.at("train_end").get<std::string>();
    tm.validation_start = t.at("validation_start").get<std::string>();
    tm.validation_end = t.at("validation_end").get<std::string>();
    tm.n_train = t.at("n_train").get<std::size_t>();
    tm.n_validation = t.at("n_validation").get<std::size_t>();
    tm.train_base_rate = t.at("train_base_rate").get<double>();
    tm.global_rate = t.at("global_rate").get<double>();
    tm.pseudo_count = t.at("pseudo_count").get<double>();
    tm.train_auc = t.at("train_auc").get<double>();
    if (!t.at("validation_auc").is_null()) tm.validation_auc = t.at("validation_auc").get<double>();

    const std::size_t n_cols = encoder.columns().size();
    const auto n_trees = in.u32();
    if (n_trees == 0) throw Error(ErrorCode::CorruptFile, "model has no trees");
    std::vector<DecisionTree> trees(n_trees);
    for (auto& tree : trees) {
      const auto n_nodes = in.u32();
      if (n_nodes == 0 || static_cast<std::size_t>(n_nodes) * kNodeSize > in.remaining()) {
        throw Error(ErrorCode::CorruptFile, "tree node count out of range");
      }
      tree.nodes.resize(n_nodes);
      for (std::size_t i = 0; i < n_nodes; ++i) {
        auto& n = tree.nodes[i];
        n.feature = in.i32();
        n.threshold = in.f64();
        n.left = in.i32();
        n.right = in.i32();
        n.value = in.f64();
        if (!n.is_leaf()) {
          // Children always follow their parent, which rules out cycles.
          const auto ok = [&](std::int32_t c) { return c > static_cast<std::int32_t>(i) && c < static_cast<std::int32_t>(n_nodes); };
          if (static_cast<std::size_t>(n.feature) >= n_cols || !ok(n.left) || !ok(n.right)) {
            throw Error(ErrorCode::CorruptFile, "tree node references out of range");
          }
        }
      }
    }
    if (in.remaining() != 0) throw Error(ErrorCode::CorruptFile, "trailing bytes in model payload");
    return FrozenForestModel(std::move(encoder), std::move(trees), hp, std::move(tm));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("model metadata: ") + e.what());
  }
}

void save_model(const FrozenForestModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(model));
}

FrozenForestModel load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

std::string model_digest(const FrozenForestModel& model) { return sha256_hex(serialize_model(model)); }

}  // namespace noshow

#include "riskexplain/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "riskexplain/error.hpp"
#include "riskexplain/fingerprint.hpp"

namespace riskexplain {

namespace {

constexpr char kMagic[8] = {'R', 'X', 'F', 'O', 'R', 'E', 'S', 'T'};
constexpr std::size_t kHeaderSize = 8 + 4 + 8 + 32;

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u64(s.size());
    out_.append(s);
  }
  std::string take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::size_t count(std::size_t max_reasonable) {
    const auto n = u64();
    if (n > max_reasonable) throw Error(ErrorCode::kChecksum, "model payload holds an implausible count");
    return n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw Error(ErrorCode::kChecksum, "model payload ends early");
  }
  std::uint64_t get(int bytes) {
    need(static_cast<std::uint64_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string encode_payload(const RandomForest& model) {
  Writer w;
  w.str(schema_to_json(model.schema()).dump());
  const auto& meta = model.metadata();
  w.i32(meta.params.n_trees);
  w.i32(meta.params.max_depth);
  w.i32(meta.params.min_leaf);
  w.f64(meta.params.features_per_split_fraction);
  w.u64(meta.seed);
  w.str(meta.dataset_fingerprint);
  w.u64(meta.n_records);
  w.u64(model.imputation().size());
  for (double v : model.imputation()) w.f64(v);
  w.u64(model.base_rates().size());
  for (double v : model.base_rates()) w.f64(v);
  w.u64(model.trees().size());
  for (const auto& tree : model.trees()) {
    w.u64(tree.n_outputs());
    w.u64(tree.size());
    for (const auto& n : tree.nodes()) {
      w.i32(n.column);
      w.f64(n.threshold);
      w.i32(n.left);
      w.i32(n.right);
      w.f64(n.cover);
    }
    for (double v : tree.raw_values()) w.f64(v);
  }
  return w.take();
}

RandomForest decode_payload(std::string_view payload) {
  Reader r(payload);
  constexpr std::size_t kMax = std::size_t{1} << 32;
  auto schema = std::make_shared<const CohortSchema>(
      schema_from_json(nlohmann::json::parse(r.str())));
  TrainingMetadata meta;
  meta.params.n_trees = r.i32();
  meta.params.max_depth = r.i32();
  meta.params.min_leaf = r.i32();
  meta.params.features_per_split_fraction = r.f64();
  meta.seed = r.u64();
  meta.dataset_fingerprint = r.str();
  meta.n_records = r.u64();
  std::vector<double> fill(r.count(kMax));
  for (auto& v : fill) v = r.f64();
  std::vector<double> base(r.count(kMax));
  for (auto& v : base) v = r.f64();
  std::vector<DecisionTree> trees(r.count(kMax));
  for (auto& tree : trees) {
    const auto outputs = r.count(kMax);
    std::vector<TreeNode> nodes(r.count(kMax));
    for (auto& n : nodes) {
      n.column = r.i32();
      n.threshold = r.f64();
      n.left = r.i32();
      n.right = r.i32();
      n.cover = r.f64();
    }
    std::vector<double> values(nodes.size() * outputs);
    for (auto& v : values) v = r.f64();
    tree = DecisionTree(outputs, std::move(nodes), std::move(values));
  }
  if (!r.done()) throw Error(ErrorCode::kChecksum, "trailing bytes after model payload");
  return RandomForest(std::move(schema), std::move(trees), std::move(fill), std::move(base),
                      std::move(meta));
}

}  // namespace

std::string serialize_model(const RandomForest& model) {
  const std::string payload = encode_payload(model);
  Writer header;
  header.u32(kModelFormatVersion);
  header.u64(payload.size());
  std::string out(kMagic, sizeof kMagic);
  out += header.take();
  const auto digest = sha256(payload);
  out.append(reinterpret_cast<const char*>(digest.data()), digest.size());
  out += payload;
  return out;
}

RandomForest deserialize_model(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    if (bytes.size() < sizeof kMagic) throw Error(ErrorCode::kChecksum, "model file is truncated");
    throw Error(ErrorCode::kParse, "not a model file (bad magic)");
  }
  if (bytes.size() < kHeaderSize) throw Error(ErrorCode::kChecksum, "model file is truncated");
  Reader header(bytes.substr(sizeof kMagic, 12));
  const auto version = header.u32();
  if (version != kModelFormatVersion) {
    throw Error(ErrorCode::kVersion, "unsupported model format version " + std::to_string(version) +
                                         " (expected " + std::to_string(kModelFormatVersion) + ")");
  }
  const auto length = header.u64();
  const std::string_view payload = bytes.substr(kHeaderSize);
  if (payload.size() != length) {
    throw Error(ErrorCode::kChecksum, "model file length does not match its header (truncated or padded)");
  }
  const auto digest = sha256(payload);
  if (std::memcmp(digest.data(), bytes.data() + 20, digest.size()) != 0) {
    throw Error(ErrorCode::kChecksum, "model file checksum mismatch");
  }
  try {
    return decode_payload(payload);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("embedded schema is malformed: ") + e.what());
  }
}

void save_model(const RandomForest& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write model file " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "failed writing model file " + path.string());
}

RandomForest load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open model file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize_model(buffer.str());
}

std::string model_fingerprint(const RandomForest& model) {
  return sha256_hex(serialize_model(model));
}

}  // namespace riskexplain

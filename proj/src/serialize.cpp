#include "gazecone/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gazecone/errors.hpp"

namespace gazecone::io {

static_assert(std::endian::native == std::endian::little, "containers are written in host order");

using geometry::Vec2;
using geometry::Vec3;

namespace {

constexpr char kCheckpointMagic[4] = {'G', 'Z', 'C', '1'};
constexpr char kDatasetMagic[4] = {'G', 'Z', 'D', 'S'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::size_t offset) : bytes_(bytes), offset_(offset) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return v;
  }
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - offset_ < n) {
      throw FormatError(std::string("truncated input while reading ") + what, offset_);
    }
  }
  const std::uint8_t* take(std::size_t n, const char* what) {
    need(n, what);
    const auto* p = bytes_.data() + offset_;
    offset_ += n;
    return p;
  }
  bool done() const { return offset_ == bytes_.size(); }
  std::size_t offset() const { return offset_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t offset_;
};

void append_record(std::vector<std::uint8_t>& out, const NamedTensor& t) {
  put(out, static_cast<std::uint32_t>(t.name.size()));
  out.insert(out.end(), t.name.begin(), t.name.end());
  put(out, static_cast<std::uint32_t>(t.tensor.rank()));
  for (auto d : t.tensor.shape()) put(out, static_cast<std::uint64_t>(d));
  const auto* p = reinterpret_cast<const std::uint8_t*>(t.tensor.data().data());
  out.insert(out.end(), p, p + t.tensor.size() * sizeof(double));
}

NamedTensor read_record(Reader& in) {
  const std::size_t start = in.offset();
  const auto len = in.get<std::uint32_t>("name length");
  if (len > 4096) throw FormatError("implausible tensor name length", start);
  const auto* name = in.take(len, "tensor name");
  NamedTensor out;
  out.name.assign(reinterpret_cast<const char*>(name), len);
  const std::size_t rank_at = in.offset();
  const auto rank = in.get<std::uint32_t>("rank");
  if (rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank), rank_at);
  Shape shape(rank);
  std::uint64_t numel = 1;
  for (auto& d : shape) {
    const std::size_t at = in.offset();
    const auto v = in.get<std::uint64_t>("dimension");
    if (v == 0 || v > kMaxElements || numel * v > kMaxElements) throw FormatError("invalid dimension", at);
    d = static_cast<std::size_t>(v);
    numel *= v;
  }
  std::vector<double> values(numel);
  std::memcpy(values.data(), in.take(numel * sizeof(double), "tensor values"), numel * sizeof(double));
  out.tensor = Tensor(std::move(shape), std::move(values));
  return out;
}

void check_magic(Reader& in, const char (&magic)[4], const char* what) {
  const auto* m = in.take(4, "magic");
  if (std::memcmp(m, magic, 4) != 0) throw FormatError(std::string("bad magic, not a ") + what + " file", 0);
}

const Tensor& expect(const std::vector<NamedTensor>& recs, std::size_t i, const char* name, const Shape& shape,
                     std::size_t offset) {
  if (recs[i].name != name) {
    throw FormatError("expected record '" + std::string(name) + "', found '" + recs[i].name + "'", offset);
  }
  if (!shape.empty() && recs[i].tensor.shape() != shape) {
    throw FormatError("record '" + std::string(name) + "' has shape " + shape_str(recs[i].tensor.shape()) +
                          ", expected " + shape_str(shape),
                      offset);
  }
  return recs[i].tensor;
}

// ModelConfig as a flat vector of doubles; the seed is split into 32-bit halves
// so it survives the conversion.
Tensor config_tensor(const model::ModelConfig& c) {
  return Tensor({17}, {static_cast<double>(c.image_side), static_cast<double>(c.channels),
                       static_cast<double>(c.head_crop), static_cast<double>(c.k),
                       static_cast<double>(c.saliency_channels), static_cast<double>(c.transform_channels),
                       static_cast<double>(c.transform_merge_channels), static_cast<double>(c.cone_hidden1),
                       static_cast<double>(c.cone_hidden2), static_cast<double>(c.transform_hidden1),
                       static_cast<double>(c.transform_hidden2), static_cast<double>(static_cast<int>(c.family)),
                       c.extension ? 1.0 : 0.0, c.kappa, c.kappa_h, static_cast<double>(c.seed >> 32),
                       static_cast<double>(c.seed & 0xFFFFFFFFULL)});
}

model::ModelConfig config_from(const Tensor& t, std::size_t offset) {
  if (t.shape() != Shape{17}) throw FormatError("meta.config has shape " + shape_str(t.shape()), offset);
  const auto v = t.values();
  for (std::size_t i = 0; i < 17; ++i) {
    if (i == 13 || i == 14) continue;
    if (!(v[i] >= 0.0) || v[i] != std::floor(v[i]) || v[i] > 4294967295.0) {
      throw FormatError("meta.config entry " + std::to_string(i) + " is not a valid count", offset);
    }
  }
  if (v[11] > static_cast<double>(static_cast<int>(geometry::TransformFamily::full_affine))) {
    throw FormatError("meta.config has an unknown transform family", offset);
  }
  model::ModelConfig c;
  const auto u = [&](std::size_t i) { return static_cast<std::size_t>(v[i]); };
  c.image_side = u(0);
  c.channels = u(1);
  c.head_crop = u(2);
  c.k = u(3);
  c.saliency_channels = u(4);
  c.transform_channels = u(5);
  c.transform_merge_channels = u(6);
  c.cone_hidden1 = u(7);
  c.cone_hidden2 = u(8);
  c.transform_hidden1 = u(9);
  c.transform_hidden2 = u(10);
  c.family = static_cast<geometry::TransformFamily>(static_cast<int>(v[11]));
  c.extension = v[12] != 0.0;
  c.kappa = v[13];
  c.kappa_h = v[14];
  c.seed = (static_cast<std::uint64_t>(v[15]) << 32) | static_cast<std::uint64_t>(v[16]);
  return c;
}

}  // namespace

std::vector<std::uint8_t> encode_tensors(std::span<const NamedTensor> tensors) {
  std::vector<std::uint8_t> out;
  for (const auto& t : tensors) append_record(out, t);
  return out;
}

std::vector<NamedTensor> decode_tensors(std::span<const std::uint8_t> bytes, std::size_t& offset, long count) {
  Reader in(bytes, offset);
  std::vector<NamedTensor> out;
  while (count < 0 ? !in.done() : static_cast<long>(out.size()) < count) out.push_back(read_record(in));
  offset = in.offset();
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("error reading " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("error writing " + path.string());
}

std::vector<NamedTensor> checkpoint_tensors(const model::GazeModel& m) {
  std::vector<NamedTensor> out;
  out.push_back({"meta.config", config_tensor(m.config())});
  for (const auto& [name, p] : m.named_parameters()) {
    out.push_back({name + ".weight", p->weight});
    out.push_back({name + ".bias", p->bias});
  }
  return out;
}

void save_checkpoint(const model::GazeModel& m, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  const auto body = encode_tensors(checkpoint_tensors(m));
  bytes.insert(bytes.end(), body.begin(), body.end());
  write_file(path, bytes);
}

model::GazeModel load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  Reader in(bytes, 0);
  check_magic(in, kCheckpointMagic, "checkpoint");
  std::size_t offset = 4;
  const auto recs = decode_tensors(bytes, offset);
  if (recs.empty() || recs[0].name != "meta.config") throw FormatError("checkpoint lacks meta.config", 4);
  model::ModelConfig cfg;
  try {
    cfg = config_from(recs[0].tensor, 4);
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what(), 4);
  }
  model::GazeModel m(cfg);
  auto params = m.named_parameters();
  if (recs.size() != 1 + 2 * params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(recs.size()) + " records, model needs " +
                          std::to_string(1 + 2 * params.size()),
                      bytes.size());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, p] = params[i];
    const auto& w = recs[1 + 2 * i];
    const auto& b = recs[2 + 2 * i];
    if (w.name != name + ".weight" || b.name != name + ".bias" || w.tensor.shape() != p->weight.shape() ||
        b.tensor.shape() != p->bias.shape()) {
      throw FormatError("checkpoint record mismatch for parameter " + name, 4);
    }
    p->weight = w.tensor;
    p->bias = b.tensor;
  }
  return m;
}

std::vector<std::uint8_t> encode_dataset(std::span<const Sample> samples) {
  std::vector<std::uint8_t> out(std::begin(kDatasetMagic), std::end(kDatasetMagic));
  put(out, kDatasetVersion);
  put(out, static_cast<std::uint64_t>(samples.size()));
  for (const auto& s : samples) {
    const Vec2 y = s.gaze.value_or(Vec2::Zero());
    const NamedTensor recs[] = {
        {"x_s", s.source},
        {"x_h", s.head},
        {"u_e", Tensor({2}, {s.eye.x(), s.eye.y()})},
        {"x_t", s.target},
        {"y", Tensor({2}, {y.x(), y.y()})},
        {"no_gaze", Tensor({1}, {s.gaze ? 0.0 : 1.0})},
        {"same_scene", Tensor({1}, {s.same_scene ? 1.0 : 0.0})},
        {"theta_cam", Tensor({1}, {s.camera_angle})},
        {"gaze_dir", Tensor({3}, {s.gaze_direction.x(), s.gaze_direction.y(), s.gaze_direction.z()})},
    };
    for (const auto& r : recs) append_record(out, r);
  }
  return out;
}

std::vector<Sample> decode_dataset(std::span<const std::uint8_t> bytes) {
  Reader in(bytes, 0);
  check_magic(in, kDatasetMagic, "dataset");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version), 4);
  const auto count = in.get<std::uint64_t>("sample count");
  // Every sample needs at least one byte per record; reject absurd counts early.
  if (count > bytes.size()) throw FormatError("sample count exceeds file size", 8);
  std::vector<Sample> out;
  out.reserve(count);
  std::size_t offset = in.offset();
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t at = offset;
    const auto recs = decode_tensors(bytes, offset, 9);
    Sample s;
    s.source = expect(recs, 0, "x_s", {}, at);
    s.head = expect(recs, 1, "x_h", {}, at);
    const auto& ue = expect(recs, 2, "u_e", {2}, at);
    s.eye = Vec2(ue[0], ue[1]);
    s.target = expect(recs, 3, "x_t", {}, at);
    const auto& y = expect(recs, 4, "y", {2}, at);
    const auto& ng = expect(recs, 5, "no_gaze", {1}, at);
    if (ng[0] == 0.0) s.gaze = Vec2(y[0], y[1]);
    s.same_scene = expect(recs, 6, "same_scene", {1}, at)[0] != 0.0;
    s.camera_angle = expect(recs, 7, "theta_cam", {1}, at)[0];
    const auto& g = expect(recs, 8, "gaze_dir", {3}, at);
    s.gaze_direction = Vec3(g[0], g[1], g[2]);
    if (s.source.rank() != 3 || s.head.rank() != 3 || s.target.shape() != s.source.shape()) {
      throw FormatError("sample " + std::to_string(i) + " has inconsistent image shapes", at);
    }
    out.push_back(std::move(s));
  }
  if (offset != bytes.size()) throw FormatError("trailing bytes after the last sample", offset);
  return out;
}

void write_dataset(std::span<const Sample> samples, const std::filesystem::path& path) {
  write_file(path, encode_dataset(samples));
}

std::vector<Sample> read_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

std::vector<std::uint8_t> encode_pgm(const geometry::SpatialMap& map, std::size_t scale) {
  if (map.side() == 0 || scale == 0) throw DimensionError("encode_pgm needs a non-empty map and scale >= 1");
  const std::size_t n = map.side(), side = n * scale;
  const auto v = map.values();
  const double peak = *std::max_element(v.begin(), v.end());
  std::ostringstream header;
  header << "P5\n" << side << ' ' << side << "\n255\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  out.reserve(out.size() + side * side);
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      const double x = map.at(r / scale, c / scale);
      const double level = peak > 0.0 ? std::clamp(x / peak, 0.0, 1.0) * 255.0 : 0.0;
      out.push_back(static_cast<std::uint8_t>(std::lround(level)));
    }
  }
  return out;
}

void write_pgm(const geometry::SpatialMap& map, const std::filesystem::path& path, std::size_t scale) {
  write_file(path, encode_pgm(map, scale));
}

void write_map_csv(const geometry::SpatialMap& map, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.precision(17);
  for (std::size_t r = 0; r < map.side(); ++r) {
    for (std::size_t c = 0; c < map.side(); ++c) f << (c ? "," : "") << map.at(r, c);
    f << '\n';
  }
  if (!f) throw IoError("error writing " + path.string());
}

}  // namespace gazecone::io

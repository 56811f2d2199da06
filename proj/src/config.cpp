#include "gazecone/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "gazecone/errors.hpp"

namespace gazecone::config {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

using Setter = std::function<void(const std::string&, const std::string&)>;

void dispatch(const KeyValues& kv, const std::map<std::string, Setter>& setters) {
  for (const auto& [key, value] : kv) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown configuration key '" + key + "'");
    it->second(key, value);
  }
}

}  // namespace

KeyValues parse(std::string_view text) {
  KeyValues out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

KeyValues read(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

void apply(const KeyValues& kv, synth::GenConfig& c) {
  const std::map<std::string, Setter> setters{
      {"image_side", [&](auto& k, auto& v) { c.image_side = to_uint(k, v); }},
      {"head_crop", [&](auto& k, auto& v) { c.head_crop = to_uint(k, v); }},
      {"min_blobs", [&](auto& k, auto& v) { c.min_blobs = to_uint(k, v); }},
      {"max_blobs", [&](auto& k, auto& v) { c.max_blobs = to_uint(k, v); }},
      {"blob_radius", [&](auto& k, auto& v) { c.blob_radius = to_double(k, v); }},
      {"head_radius_px", [&](auto& k, auto& v) { c.head_radius_px = to_double(k, v); }},
      {"no_gaze_fraction", [&](auto& k, auto& v) { c.no_gaze_fraction = to_double(k, v); }},
      {"extension", [&](auto& k, auto& v) { c.extension = to_bool(k, v); }},
      {"different_scene_fraction", [&](auto& k, auto& v) { c.different_scene_fraction = to_double(k, v); }},
      {"max_camera_angle_deg", [&](auto& k, auto& v) { c.max_camera_angle_deg = to_double(k, v); }},
      {"view_depth", [&](auto& k, auto& v) { c.view_depth = to_double(k, v); }},
      {"translation_jitter", [&](auto& k, auto& v) { c.translation_jitter = to_double(k, v); }},
      {"train_count", [&](auto& k, auto& v) { c.train_count = to_uint(k, v); }},
      {"test_count", [&](auto& k, auto& v) { c.test_count = to_uint(k, v); }},
  };
  dispatch(kv, setters);
}

void apply(const KeyValues& kv, learning::TrainConfig& c) {
  const std::map<std::string, Setter> setters{
      {"optimizer", [&](auto&, auto& v) { c.optimizer = nn::parse_optimizer(v); }},
      {"lr", [&](auto& k, auto& v) { c.lr = to_double(k, v); }},
      {"momentum", [&](auto& k, auto& v) { c.momentum = to_double(k, v); }},
      {"geometry_lr_scale", [&](auto& k, auto& v) { c.geometry_lr_scale = to_double(k, v); }},
      {"batch_size", [&](auto& k, auto& v) { c.batch_size = to_uint(k, v); }},
      {"epochs", [&](auto& k, auto& v) { c.epochs = to_uint(k, v); }},
      {"lambda_scene", [&](auto& k, auto& v) { c.lambda_scene = to_double(k, v); }},
      {"kappa", [&](auto& k, auto& v) { c.kappa = to_double(k, v); }},
      {"kappa_h", [&](auto& k, auto& v) { c.kappa_h = to_double(k, v); }},
      {"family", [&](auto&, auto& v) { c.family = geometry::parse_family(v); }},
      {"k", [&](auto& k, auto& v) { c.k = to_uint(k, v); }},
      {"seed", [&](auto& k, auto& v) { c.seed = to_uint(k, v); }},
      {"extension", [&](auto& k, auto& v) { c.extension = to_bool(k, v); }},
      {"flip", [&](auto& k, auto& v) { c.flip = to_bool(k, v); }},
      {"patience", [&](auto& k, auto& v) { c.patience = to_uint(k, v); }},
      {"val_fraction", [&](auto& k, auto& v) { c.val_fraction = to_double(k, v); }},
  };
  dispatch(kv, setters);
}

KeyValues describe(const synth::GenConfig& c) {
  return {{"image_side", std::to_string(c.image_side)},
          {"head_crop", std::to_string(c.head_crop)},
          {"min_blobs", std::to_string(c.min_blobs)},
          {"max_blobs", std::to_string(c.max_blobs)},
          {"blob_radius", fmt(c.blob_radius)},
          {"head_radius_px", fmt(c.head_radius_px)},
          {"no_gaze_fraction", fmt(c.no_gaze_fraction)},
          {"extension", c.extension ? "true" : "false"},
          {"different_scene_fraction", fmt(c.different_scene_fraction)},
          {"max_camera_angle_deg", fmt(c.max_camera_angle_deg)},
          {"view_depth", fmt(c.view_depth)},
          {"translation_jitter", fmt(c.translation_jitter)},
          {"train_count", std::to_string(c.train_count)},
          {"test_count", std::to_string(c.test_count)}};
}

KeyValues describe(const learning::TrainConfig& c) {
  return {{"optimizer", nn::to_string(c.optimizer)},
          {"lr", fmt(c.lr)},
          {"momentum", fmt(c.momentum)},
          {"geometry_lr_scale", fmt(c.geometry_lr_scale)},
          {"batch_size", std::to_string(c.batch_size)},
          {"epochs", std::to_string(c.epochs)},
          {"lambda_scene", fmt(c.lambda_scene)},
          {"kappa", fmt(c.kappa)},
          {"kappa_h", fmt(c.kappa_h)},
          {"family", geometry::to_string(c.family)},
          {"k", std::to_string(c.k)},
          {"seed", std::to_string(c.seed)},
          {"extension", c.extension ? "true" : "false"},
          {"flip", c.flip ? "true" : "false"},
          {"patience", std::to_string(c.patience)},
          {"val_fraction", fmt(c.val_fraction)}};
}

void print(const KeyValues& kv, std::ostream& out) {
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
}

}  // namespace gazecone::config

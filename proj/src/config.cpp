#include "g2cl/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "g2cl/error.hpp"
#include "g2cl/random.hpp"

namespace g2cl::config {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [end, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || end != last)
    throw ConfigError("config: bad value for '" + key + "': '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("config: bad boolean for '" + key + "': '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& items, F&& f) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + f(items[i]);
  return out;
}

struct Field {
  std::string key;
  bool affects_model;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class Get>
Field num_field(std::string key, bool model, Get ref) {
  using T = std::remove_reference_t<decltype(ref(std::declval<RunConfig&>()))>;
  return {key, model,
          [ref](const RunConfig& c) {
            const T v = ref(const_cast<RunConfig&>(c));
            if constexpr (std::is_floating_point_v<T>) return fmt(v);
            else return std::to_string(v);
          },
          [ref, key](RunConfig& c, const std::string& s) { ref(c) = parse_number<T>(key, s); }};
}

template <class Get>
Field bool_field(std::string key, bool model, Get ref) {
  return {key, model,
          [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [ref, key](RunConfig& c, const std::string& s) { ref(c) = parse_bool(key, s); }};
}

std::string filter_scale(const dataset::GalleryFilter& f) {
  return f.scale ? dataset::to_string(*f.scale) : "all";
}
std::string filter_time(const dataset::GalleryFilter& f) { return f.time.value_or("all"); }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> t;
    // [train]
    t.push_back(num_field("train.epochs", true, [](RunConfig& c) -> int& { return c.train.epochs; }));
    t.push_back(num_field("train.batch_size", true,
                          [](RunConfig& c) -> std::size_t& { return c.train.batch_size; }));
    t.push_back(num_field("train.learning_rate", true,
                          [](RunConfig& c) -> double& { return c.train.learning_rate; }));
    t.push_back(num_field("train.weight_decay", true,
                          [](RunConfig& c) -> double& { return c.train.weight_decay; }));
    t.push_back(num_field("train.seed", true, [](RunConfig& c) -> std::uint64_t& { return c.train.seed; }));
    t.push_back(num_field("train.neighbor_k", true, [](RunConfig& c) -> int& { return c.train.neighbor_k; }));
    t.push_back(num_field("train.sampler_group", true,
                          [](RunConfig& c) -> std::size_t& { return c.train.sampler_group; }));
    t.push_back(num_field("train.checkpoint_every", false,
                          [](RunConfig& c) -> int& { return c.train.checkpoint_every; }));
    t.push_back(num_field("train.grad_clip", true, [](RunConfig& c) -> double& { return c.train.grad_clip; }));
    t.push_back({"train.lr_schedule", true,
                 [](const RunConfig& c) {
                   return std::string(c.train.lr_schedule == train::LrSchedule::cosine ? "cosine" : "constant");
                 },
                 [](RunConfig& c, const std::string& s) {
                   if (s == "constant") c.train.lr_schedule = train::LrSchedule::constant;
                   else if (s == "cosine") c.train.lr_schedule = train::LrSchedule::cosine;
                   else throw ConfigError("config: train.lr_schedule must be constant or cosine, got '" + s + "'");
                 }});
    t.push_back(num_field("train.warmup_epochs", true,
                          [](RunConfig& c) -> double& { return c.train.warmup_epochs; }));
    // [loss]
    t.push_back(num_field("loss.temperature", true,
                          [](RunConfig& c) -> double& { return c.train.loss.temperature; }));
    t.push_back(num_field("loss.alpha", true, [](RunConfig& c) -> double& { return c.train.loss.alpha; }));
    t.push_back(bool_field("loss.enable_gs", true, [](RunConfig& c) -> bool& { return c.train.loss.enable_gs; }));
    t.push_back(bool_field("loss.enable_gu", true, [](RunConfig& c) -> bool& { return c.train.loss.enable_gu; }));
    t.push_back(bool_field("loss.enable_gc", true, [](RunConfig& c) -> bool& { return c.train.loss.enable_gc; }));
    t.push_back(bool_field("loss.symmetric_infonce", true,
                           [](RunConfig& c) -> bool& { return c.train.loss.symmetric_infonce; }));
    t.push_back({"loss.weight_mode", true,
                 [](const RunConfig& c) { return loss::to_string(c.train.loss.weight_mode); },
                 [](RunConfig& c, const std::string& s) { c.train.loss.weight_mode = loss::parse_weight_mode(s); }});
    t.push_back({"loss.objective", true, [](const RunConfig& c) { return loss::to_string(c.train.loss.objective); },
                 [](RunConfig& c, const std::string& s) { c.train.loss.objective = loss::parse_objective(s); }});
    t.push_back(num_field("loss.triplet_margin", true,
                          [](RunConfig& c) -> double& { return c.train.loss.triplet_margin; }));
    // [encoder]
    t.push_back({"encoder.backbone", true, [](const RunConfig& c) { return c.train.encoder.backbone_name; },
                 [](RunConfig& c, const std::string& s) { c.train.encoder.backbone_name = s; }});
    t.push_back(num_field("encoder.embedding_dim", true,
                          [](RunConfig& c) -> int& { return c.train.encoder.embedding_dim; }));
    t.push_back(bool_field("encoder.pretrained", true,
                           [](RunConfig& c) -> bool& { return c.train.encoder.pretrained; }));
    t.push_back({"encoder.weights_path", true, [](const RunConfig& c) { return c.train.encoder.weights_path; },
                 [](RunConfig& c, const std::string& s) { c.train.encoder.weights_path = s; }});
    t.push_back(num_field("encoder.input_size", true,
                          [](RunConfig& c) -> int& { return c.train.encoder.input_height; }));
    t.push_back(num_field("encoder.base_channels", true,
                          [](RunConfig& c) -> int& { return c.train.encoder.base_channels; }));
    // [augment]
    t.push_back(num_field("augment.flip_prob", true,
                          [](RunConfig& c) -> double& { return c.train.augment.flip_prob; }));
    t.push_back(num_field("augment.jitter_strength", true,
                          [](RunConfig& c) -> double& { return c.train.augment.jitter_strength; }));
    // [data] selects training pairs and the evaluation gallery alike.
    t.push_back({"data.scale", true, [](const RunConfig& c) { return filter_scale(c.train.data_filter); },
                 [](RunConfig& c, const std::string& s) {
                   if (s == "all") c.train.data_filter.scale.reset();
                   else c.train.data_filter.scale = dataset::parse_scale(s);
                 }});
    t.push_back({"data.time", true, [](const RunConfig& c) { return filter_time(c.train.data_filter); },
                 [](RunConfig& c, const std::string& s) {
                   if (s == "all") c.train.data_filter.time.reset();
                   else if (s.empty()) throw ConfigError("config: data.time must be 'all' or a date prefix");
                   else c.train.data_filter.time = s;
                 }});
    // [eval]
    t.push_back({"eval.k", false,
                 [](const RunConfig& c) { return join(c.eval.ks, [](int k) { return std::to_string(k); }); },
                 [](RunConfig& c, const std::string& s) {
                   std::vector<int> ks;
                   for (const auto& item : split_list(s)) ks.push_back(parse_number<int>("eval.k", item));
                   c.eval.ks = std::move(ks);
                 }});
    t.push_back(num_field("eval.sigma_m", false, [](RunConfig& c) -> double& { return c.eval.sigma_m; }));
    t.push_back(num_field("eval.batch_size", false,
                          [](RunConfig& c) -> std::size_t& { return c.eval.batch_size; }));
    t.push_back(num_field("eval.keep_heads", false, [](RunConfig& c) -> int& { return c.eval.keep_heads; }));
    // [synth]
    t.push_back(num_field("synth.grid_rows", false, [](RunConfig& c) -> int& { return c.synth.grid_rows; }));
    t.push_back(num_field("synth.grid_cols", false, [](RunConfig& c) -> int& { return c.synth.grid_cols; }));
    t.push_back(num_field("synth.spacing_m", false, [](RunConfig& c) -> double& { return c.synth.spacing_m; }));
    t.push_back({"synth.origin", false,
                 [](const RunConfig& c) { return fmt(c.synth.origin.lat_deg()) + "," + fmt(c.synth.origin.lon_deg()); },
                 [](RunConfig& c, const std::string& s) {
                   const auto parts = split_list(s);
                   if (parts.size() != 2) throw ConfigError("config: synth.origin must be 'lat,lon'");
                   c.synth.origin = geo::GeoPoint{parse_number<double>("synth.origin", parts[0]),
                                                  parse_number<double>("synth.origin", parts[1])};
                 }});
    t.push_back({"synth.uav_altitudes", false,
                 [](const RunConfig& c) { return join(c.synth.uav_altitudes, fmt); },
                 [](RunConfig& c, const std::string& s) {
                   std::vector<double> v;
                   for (const auto& item : split_list(s)) v.push_back(parse_number<double>("synth.uav_altitudes", item));
                   c.synth.uav_altitudes = std::move(v);
                 }});
    t.push_back({"synth.sat_scales", false,
                 [](const RunConfig& c) {
                   return join(c.synth.sat_scales, [](dataset::SatScale s) { return dataset::to_string(s); });
                 },
                 [](RunConfig& c, const std::string& s) {
                   std::vector<dataset::SatScale> v;
                   for (const auto& item : split_list(s)) v.push_back(dataset::parse_scale(item));
                   c.synth.sat_scales = std::move(v);
                 }});
    t.push_back({"synth.sat_times", false,
                 [](const RunConfig& c) { return join(c.synth.sat_times, [](const std::string& x) { return x; }); },
                 [](RunConfig& c, const std::string& s) { c.synth.sat_times = split_list(s); }});
    t.push_back(num_field("synth.image_size", false, [](RunConfig& c) -> int& { return c.synth.image_size; }));
    t.push_back(num_field("synth.seed", false, [](RunConfig& c) -> std::uint64_t& { return c.synth.seed; }));
    t.push_back(num_field("synth.query_views", false, [](RunConfig& c) -> int& { return c.synth.query_views; }));
    // [experiment]
    t.push_back({"experiment.seeds", false,
                 [](const RunConfig& c) { return join(c.seeds, [](std::uint64_t s) { return std::to_string(s); }); },
                 [](RunConfig& c, const std::string& s) {
                   std::vector<std::uint64_t> v;
                   for (const auto& item : split_list(s)) v.push_back(parse_number<std::uint64_t>("experiment.seeds", item));
                   c.seeds = std::move(v);
                 }});
    t.push_back({"experiment.alphas", false, [](const RunConfig& c) { return join(c.alphas, fmt); },
                 [](RunConfig& c, const std::string& s) {
                   std::vector<double> v;
                   for (const auto& item : split_list(s)) v.push_back(parse_number<double>("experiment.alphas", item));
                   c.alphas = std::move(v);
                 }});
    return t;
  }();
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ConfigError("config: unknown key '" + key + "'");
}

}  // namespace

std::vector<std::string> known_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

RunConfig RunConfig::synthetic() {
  RunConfig c;
  c.train.epochs = 30;
  c.train.batch_size = 32;
  c.train.learning_rate = 3e-4;
  c.train.warmup_epochs = 2.0;
  c.train.checkpoint_every = 0;
  c.train.encoder.input_height = c.synth.image_size;
  c.resolve();
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, value); }

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("config: override must look like section.key=value, got '" + assignment + "'");
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

void RunConfig::resolve() {
  auto& enc = train.encoder;
  enc.input_width = enc.input_height;
  enc.seed = train.seed;
  train.augment.target_height = enc.input_height;
  train.augment.target_width = enc.input_width;
  train.augment.seed = train.seed;
  eval.gallery_filter = train.data_filter;
  if (eval.ks.empty()) throw ConfigError("config: eval.k must list at least one K");
  for (int k : eval.ks)
    if (k < 1) throw ConfigError("config: eval.k entries must be >= 1");
  if (!(eval.sigma_m > 0)) throw ConfigError("config: eval.sigma_m must be > 0");
  if (eval.batch_size < 1) throw ConfigError("config: eval.batch_size must be >= 1");
  if (seeds.empty()) throw ConfigError("config: experiment.seeds must not be empty");
  if (alphas.empty()) throw ConfigError("config: experiment.alphas must not be empty");
  train.validate();
  synth.validate();
}

std::string RunConfig::to_ini() const {
  std::string out, section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const auto sec = f.key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += f.key.substr(dot + 1) + " = " + f.get(*this) + "\n";
  }
  return out;
}

std::string RunConfig::model_key() const {
  std::string text;
  for (const auto& f : fields())
    if (f.affects_model) text += f.key + "=" + f.get(*this) + "\n";
  return text;
}

std::uint64_t RunConfig::train_hash() const {
  const auto text = model_key();
  return fnv1a64(text.data(), text.size());
}

RunConfig load(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  RunConfig c = base;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("config: key '" + section + "' must sit inside a [section]");
    for (const auto& [name, value] : body) c.set(section + "." + name, value.data());
  }
  c.resolve();
  return c;
}

void save(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw Error("config: cannot write '" + path.string() + "'");
  out << config.to_ini();
  if (!out) throw Error("config: write failed for '" + path.string() + "'");
}

}  // namespace g2cl::config

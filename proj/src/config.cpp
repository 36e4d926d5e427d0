#include "mcanet/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <map>
#include <sstream>
#include <spdlog/fmt/fmt.h>

#include "mcanet/errors.hpp"

namespace mcanet {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

struct BadValue {};

template <typename U>
U parse_number(const std::string& v) {
  U out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw BadValue{};
  return out;
}

double parse_real(const std::string& v) {
  const double d = parse_number<double>(v);
  if (!std::isfinite(d)) throw BadValue{};
  return d;
}

std::size_t parse_count(const std::string& v) {
  if (!v.empty() && v[0] == '-') throw BadValue{};
  return parse_number<std::size_t>(v);
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw BadValue{};
}

template <typename U, typename F>
std::vector<U> parse_list(const std::string& v, F item) {
  std::vector<U> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(item(trim(part)));
  if (out.empty()) throw BadValue{};
  return out;
}

template <typename U>
std::string join(const std::vector<U>& v) {
  return fmt::format("{}", fmt::join(v, ","));
}

std::string real(double v) { return fmt::format("{}", v); }

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    auto add = [&](std::string name, auto set, auto get) { k.push_back({std::move(name), set, get}); };
    add("backbone.preset", [](RunConfig& c, const std::string& v) {
          c.backbone = BackboneConfig::preset(v);
          c.preset = v;
        },
        [](const RunConfig& c) { return c.preset; });
    add("backbone.block", [](RunConfig& c, const std::string& v) { c.backbone.block_kind = parse_block_kind(v); },
        [](const RunConfig& c) { return std::string(to_string(c.backbone.block_kind)); });
    add("backbone.scale", [](RunConfig& c, const std::string& v) { c.backbone.scale = parse_count(v); },
        [](const RunConfig& c) { return std::to_string(c.backbone.scale); });
    add("backbone.stage_blocks",
        [](RunConfig& c, const std::string& v) { c.backbone.stage_blocks = parse_list<std::size_t>(v, parse_count); },
        [](const RunConfig& c) { return join(c.backbone.stage_blocks); });
    add("backbone.stage_widths",
        [](RunConfig& c, const std::string& v) { c.backbone.stage_widths = parse_list<std::size_t>(v, parse_count); },
        [](const RunConfig& c) { return join(c.backbone.stage_widths); });
    add("backbone.bottleneck_widths",
        [](RunConfig& c, const std::string& v) {
          c.backbone.bottleneck_widths = parse_list<std::size_t>(v, parse_count);
        },
        [](const RunConfig& c) { return join(c.backbone.bottleneck_widths); });
    add("backbone.stem", [](RunConfig& c, const std::string& v) { c.backbone.stem = parse_stem_kind(v); },
        [](const RunConfig& c) { return std::string(to_string(c.backbone.stem)); });
    add("backbone.stem_width", [](RunConfig& c, const std::string& v) { c.backbone.stem_width = parse_count(v); },
        [](const RunConfig& c) { return std::to_string(c.backbone.stem_width); });
    add("backbone.input_size", [](RunConfig& c, const std::string& v) { c.backbone.input_size = parse_count(v); },
        [](const RunConfig& c) { return std::to_string(c.backbone.input_size); });
    add("backbone.batchnorm", [](RunConfig& c, const std::string& v) { c.backbone.batchnorm = parse_bool(v); },
        [](const RunConfig& c) { return std::string(c.backbone.batchnorm ? "true" : "false"); });

    add("csra.head", [](RunConfig& c, const std::string& v) { c.head_kind = parse_head_kind(v); },
        [](const RunConfig& c) { return std::string(to_string(c.head_kind)); });
    add("csra.classes", [](RunConfig& c, const std::string& v) { c.head.num_classes = parse_count(v); },
        [](const RunConfig& c) { return std::to_string(c.head.num_classes); });
    add("csra.heads",
        [](RunConfig& c, const std::string& v) {
          c.head.num_heads = parse_count(v);
          c.head.temperatures = CsraHeadConfig::default_temperatures(c.head.num_heads);
        },
        [](const RunConfig& c) { return std::to_string(c.head.num_heads); });
    add("csra.temperatures",
        [](RunConfig& c, const std::string& v) {
          c.head.temperatures = v == "auto" ? CsraHeadConfig::default_temperatures(c.head.num_heads)
                                            : parse_list<double>(v, parse_real);
        },
        [](const RunConfig& c) {
          std::vector<std::string> t;
          for (double x : c.head.temperatures) t.push_back(real(x));
          return join(t);
        });
    add("csra.lambda", [](RunConfig& c, const std::string& v) { c.head.lambda = parse_real(v); },
        [](const RunConfig& c) { return real(c.head.lambda); });

    add("optim.lr_head", [](RunConfig& c, const std::string& v) { c.optim.lr_head = parse_real(v); },
        [](const RunConfig& c) { return real(c.optim.lr_head); });
    add("optim.lr_backbone", [](RunConfig& c, const std::string& v) { c.optim.lr_backbone = parse_real(v); },
        [](const RunConfig& c) { return real(c.optim.lr_backbone); });
    add("optim.momentum", [](RunConfig& c, const std::string& v) { c.optim.momentum = parse_real(v); },
        [](const RunConfig& c) { return real(c.optim.momentum); });
    add("optim.weight_decay", [](RunConfig& c, const std::string& v) { c.optim.weight_decay = parse_real(v); },
        [](const RunConfig& c) { return real(c.optim.weight_decay); });
    add("optim.warmup_steps",
        [](RunConfig& c, const std::string& v) { c.optim.warmup_steps = v == "auto" ? -1 : parse_number<long>(v); },
        [](const RunConfig& c) {
          return c.optim.warmup_steps < 0 ? std::string("auto") : std::to_string(c.optim.warmup_steps);
        });
    add("optim.epochs", [](RunConfig& c, const std::string& v) { c.optim.epochs = parse_count(v); },
        [](const RunConfig& c) { return std::to_string(c.optim.epochs); });
    add("optim.batch_size", [](RunConfig& c, const std::string& v) { c.optim.batch_size = parse_count(v); },
        [](const RunConfig& c) { return std::to_string(c.optim.batch_size); });
    add("optim.schedule", [](RunConfig& c, const std::string& v) { c.optim.schedule = parse_lr_schedule(v); },
        [](const RunConfig& c) { return std::string(to_string(c.optim.schedule)); });

    add("data.manifest", [](RunConfig& c, const std::string& v) { c.manifest = v; },
        [](const RunConfig& c) { return c.manifest; });
    add("data.boxes", [](RunConfig& c, const std::string& v) { c.boxes = v; },
        [](const RunConfig& c) { return c.boxes; });
    add("data.train_fraction", [](RunConfig& c, const std::string& v) { c.train_fraction = parse_real(v); },
        [](const RunConfig& c) { return real(c.train_fraction); });
    add("data.augment", [](RunConfig& c, const std::string& v) { c.augment_enabled = parse_bool(v); },
        [](const RunConfig& c) { return std::string(c.augment_enabled ? "true" : "false"); });
    add("data.flip_probability",
        [](RunConfig& c, const std::string& v) { c.augment.flip_probability = parse_real(v); },
        [](const RunConfig& c) { return real(c.augment.flip_probability); });
    add("data.crop_area_min", [](RunConfig& c, const std::string& v) { c.augment.crop_area_min = parse_real(v); },
        [](const RunConfig& c) { return real(c.augment.crop_area_min); });
    add("data.crop_area_max", [](RunConfig& c, const std::string& v) { c.augment.crop_area_max = parse_real(v); },
        [](const RunConfig& c) { return real(c.augment.crop_area_max); });
    add("data.synth_images", [](RunConfig& c, const std::string& v) { c.synth_images = parse_count(v); },
        [](const RunConfig& c) { return std::to_string(c.synth_images); });
    add("data.synth_presence", [](RunConfig& c, const std::string& v) { c.synth_presence = parse_real(v); },
        [](const RunConfig& c) { return real(c.synth_presence); });

    add("run.seed", [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>(v); },
        [](const RunConfig& c) { return std::to_string(c.seed); });
    add("run.out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
        [](const RunConfig& c) { return c.out_dir; });
    add("run.checkpoint", [](RunConfig& c, const std::string& v) { c.checkpoint = v; },
        [](const RunConfig& c) { return c.checkpoint; });
    add("run.prefetch", [](RunConfig& c, const std::string& v) { c.prefetch = parse_count(v); },
        [](const RunConfig& c) { return std::to_string(c.prefetch); });
    add("run.threshold", [](RunConfig& c, const std::string& v) { c.threshold = parse_real(v); },
        [](const RunConfig& c) { return real(c.threshold); });
    return k;
  }();
  return table;
}

const Key* find_key(std::string_view name) {
  for (const auto& k : keys())
    if (k.name == name) return &k;
  return nullptr;
}

}  // namespace

TrainerOptions RunConfig::trainer_options() const {
  TrainerOptions t;
  t.optim = optim;
  t.augment = augment;
  t.augment_enabled = augment_enabled;
  t.image_size = backbone.input_size;
  t.seed = seed;
  t.prefetch = prefetch;
  return t;
}

void RunConfig::validate() const {
  try {
    model().validate();
    optim.validate();
    augment.validate();
  } catch (const ConfigError& e) {
    throw UsageError(std::string("invalid configuration: ") + e.what());
  }
  if (!(train_fraction > 0 && train_fraction < 1)) throw UsageError("data.train_fraction must be in (0,1)");
  if (!(synth_presence >= 0 && synth_presence <= 1)) throw UsageError("data.synth_presence must be in [0,1]");
  if (!(threshold > 0 && threshold < 1)) throw UsageError("run.threshold must be in (0,1)");
  if (prefetch < 1) throw UsageError("run.prefetch must be >= 1");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& k : keys()) out += k.name + " = " + k.get(*this) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

Overrides parse_override_flags(std::span<const std::string> args) {
  Overrides out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0 || a.find('.') == std::string::npos) {
      throw UsageError("unexpected argument '" + a + "'");
    }
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    } else {
      if (i + 1 >= args.size()) throw UsageError("flag '" + a + "' is missing a value");
      out.emplace_back(a.substr(2), args[++i]);
    }
  }
  return out;
}

RunConfig parse_config(const std::string& file_text, const Overrides& flags) {
  // Later layers replace earlier ones key by key.
  struct Value {
    std::string text;
    int layer = 0;  // 0 file, 1 flags
  };
  std::map<std::string, Value> values;
  std::istringstream in(file_text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw UsageError(fmt::format("config line {}: expected 'key = value', got '{}'", line_no, body));
    }
    values[trim(body.substr(0, eq))] = {trim(body.substr(eq + 1)), 0};
  }
  for (const auto& [k, v] : flags) values[k] = {v, 1};

  for (const auto& [k, v] : values) {
    if (!find_key(k)) throw UsageError("unknown config key '" + k + "'");
  }
  // A key derived from a parent (backbone.* from the preset, temperatures
  // from the head count) is dropped when the parent comes from a later layer,
  // so "--csra.heads 8" on top of an echoed config gets its own temperatures.
  auto layer_of = [&](const std::string& key) {
    const auto it = values.find(key);
    return it == values.end() ? -1 : it->second.layer;
  };
  auto parent_of = [](const std::string& key) -> std::string {
    if (key == "csra.temperatures") return "csra.heads";
    if (key.rfind("backbone.", 0) == 0 && key != "backbone.preset") return "backbone.preset";
    return {};
  };

  RunConfig cfg;
  // Table order applies the preset before other backbone keys and the head
  // count before the temperatures.
  for (const auto& k : keys()) {
    const auto it = values.find(k.name);
    if (it == values.end()) continue;
    const std::string parent = parent_of(k.name);
    if (!parent.empty() && layer_of(parent) > it->second.layer) continue;
    try {
      k.set(cfg, it->second.text);
    } catch (const BadValue&) {
      throw UsageError("invalid value '" + it->second.text + "' for " + k.name);
    } catch (const ConfigError& e) {
      throw UsageError("invalid value '" + it->second.text + "' for " + k.name + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace mcanet

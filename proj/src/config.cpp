#include "mrdn/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mrdn/error.hpp"

namespace mrdn {

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"model", {"preset", "blocks", "g0", "growth", "layers", "block", "disc_width", "features"}},
      {"train",
       {"phase", "iterations", "lr", "lr_period", "batch", "patch", "scale", "seed", "w_l1", "w_feat",
        "w_adv"}},
      {"data", {"manifest", "out", "log"}},
  };
  return keys;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Value {
  std::string text;
  std::size_t line = 0;
};

class Reader {
 public:
  explicit Reader(std::map<std::string, Value> values) : values_(std::move(values)) {}

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const Value& raw(const std::string& key) const { return values_.at(key); }

  std::uint64_t unsigned_value(const std::string& key) const {
    const Value& v = raw(key);
    std::size_t used = 0;
    unsigned long long out = 0;
    try {
      if (v.text.empty() || v.text[0] == '-') throw std::invalid_argument("sign");
      out = std::stoull(v.text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != v.text.size()) fail(key, "expected a non-negative integer");
    return out;
  }

  double real_value(const std::string& key) const {
    const Value& v = raw(key);
    std::size_t used = 0;
    double out = 0.0;
    try {
      out = std::stod(v.text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != v.text.size() || !std::isfinite(out)) fail(key, "expected a number");
    return out;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& why) const {
    throw UsageError("config line " + std::to_string(raw(key).line) + " (" + key + " = " + raw(key).text +
                     "): " + why);
  }

 private:
  std::map<std::string, Value> values_;
};

}  // namespace

void RunConfig::apply_tiny() {
  const int scale = model.scale;
  model = ModelConfig::tiny();
  model.scale = scale;
  disc = DiscriminatorConfig::tiny();
  features = FeatureConfig::tiny();
}

std::filesystem::path RunConfig::log_path() const {
  if (!log.empty()) return log;
  std::filesystem::path p = out;
  p += ".log";
  return p;
}

RunConfig RunConfig::parse(const std::string& text, const std::filesystem::path& base_dir) {
  std::map<std::string, Value> values;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw UsageError("config line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      if (known_keys().count(section) == 0) {
        throw UsageError("config line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      throw UsageError("config line " + std::to_string(lineno) + ": key '" + key + "' outside a section");
    }
    if (known_keys().at(section).count(key) == 0) {
      throw UsageError("config line " + std::to_string(lineno) + ": unknown key '" + key + "' in [" +
                       section + "]");
    }
    const std::string full = section + "." + key;
    if (values.count(full) != 0) {
      throw UsageError("config line " + std::to_string(lineno) + ": duplicate key '" + full + "'");
    }
    values[full] = Value{value, lineno};
  }

  const Reader r(std::move(values));
  RunConfig cfg;
  if (r.has("model.preset")) {
    const std::string preset = r.raw("model.preset").text;
    if (preset == "tiny") {
      cfg.apply_tiny();
    } else if (preset != "standard") {
      r.fail("model.preset", "expected tiny or standard");
    }
  }
  if (r.has("model.blocks")) cfg.model.blocks = r.unsigned_value("model.blocks");
  if (r.has("model.g0")) cfg.model.block.g0 = r.unsigned_value("model.g0");
  if (r.has("model.growth")) cfg.model.block.growth = r.unsigned_value("model.growth");
  if (r.has("model.layers")) cfg.model.block.layers = r.unsigned_value("model.layers");
  if (r.has("model.block")) cfg.model.block.kind = parse_block_kind(r.raw("model.block").text);
  if (r.has("model.disc_width")) cfg.disc.width = r.unsigned_value("model.disc_width");
  if (r.has("model.features")) {
    const std::string f = r.raw("model.features").text;
    if (f == "tiny") {
      cfg.features = FeatureConfig::tiny();
    } else if (f == "standard") {
      cfg.features = FeatureConfig{};
    } else {
      r.fail("model.features", "expected tiny or standard");
    }
  }

  if (r.has("train.phase")) cfg.plan.phase = parse_phase(r.raw("train.phase").text);
  if (r.has("train.iterations")) cfg.plan.iterations = r.unsigned_value("train.iterations");
  if (r.has("train.lr")) cfg.plan.base_lr = r.real_value("train.lr");
  if (r.has("train.lr_period")) cfg.plan.lr_period = r.unsigned_value("train.lr_period");
  if (r.has("train.batch")) cfg.plan.batch = r.unsigned_value("train.batch");
  if (r.has("train.patch")) cfg.plan.patch = r.unsigned_value("train.patch");
  if (r.has("train.scale")) cfg.plan.scale = static_cast<int>(r.unsigned_value("train.scale"));
  if (r.has("train.seed")) cfg.seed = r.unsigned_value("train.seed");
  cfg.model.scale = cfg.plan.effective_scale();

  cfg.weights = cfg.plan.phase == Phase::kGanFinetune ? LossWeights::adversarial() : LossWeights::content();
  if (r.has("train.w_l1")) cfg.weights.l1 = r.real_value("train.w_l1");
  if (r.has("train.w_feat")) cfg.weights.feat = r.real_value("train.w_feat");
  if (r.has("train.w_adv")) cfg.weights.adv = r.real_value("train.w_adv");

  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  if (r.has("data.manifest")) cfg.manifest = resolve(r.raw("data.manifest").text);
  if (r.has("data.out")) cfg.out = resolve(r.raw("data.out").text);
  if (r.has("data.log")) cfg.log = resolve(r.raw("data.log").text);

  cfg.model.validate();
  cfg.plan.validate();
  cfg.weights.validate();
  if (cfg.disc.width == 0) throw UsageError("model.disc_width must be positive");
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path.parent_path());
}

}  // namespace mrdn

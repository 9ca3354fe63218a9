#include <fstream>
#include <set>
#include <sstream>

#include "dapperfl/errors.hpp"
#include "dapperfl/experiment.hpp"
#include "json.hpp"

namespace dapperfl {
namespace {

using nlohmann::json;

// Reads keys from one JSON object, remembering which were consumed so that
// anything left over can be rejected by name.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where("") + "expected an object");
  }

  template <typename T>
  bool get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) return false;
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + "invalid value (" + e.what() + ")");
    }
    return true;
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() || it->is_null() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where(it.key()) + "unknown key");
    }
  }

  [[nodiscard]] std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  [[nodiscard]] std::string where(const std::string& key) const {
    const std::string p = key.empty() ? path_ : key_path(key);
    return p.empty() ? "config: " : "config key '" + p + "': ";
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_federation(ObjectReader& root, ExperimentConfig& cfg) {
  const json* node = root.child("federation");
  if (!node) return;
  ObjectReader r(*node, "federation");
  r.get("rounds", cfg.hp.rounds);
  r.get("clients", cfg.clients);
  double participation = 1.0;
  if (r.get("participation", participation) && participation != 1.0) {
    throw ConfigError("config key 'federation.participation': only full participation (1.0) is supported");
  }
  r.finish();
}

void read_local(ObjectReader& root, ExperimentConfig& cfg) {
  const json* node = root.child("local");
  if (!node) return;
  ObjectReader r(*node, "local");
  r.get("epochs", cfg.hp.local_epochs);
  r.get("batch_size", cfg.hp.batch_size);
  r.get("lr", cfg.hp.lr);
  r.get("momentum", cfg.hp.momentum);
  r.get("weight_decay", cfg.hp.weight_decay);
  r.finish();
}

void read_mfp(ObjectReader& root, ExperimentConfig& cfg) {
  const json* node = root.child("mfp");
  if (!node) return;
  ObjectReader r(*node, "mfp");
  r.get("alpha0", cfg.hp.fusion.alpha0);
  r.get("alpha_min", cfg.hp.fusion.alpha_min);
  r.get("epsilon", cfg.hp.fusion.epsilon);
  r.finish();
}

void read_dar(ObjectReader& root, ExperimentConfig& cfg) {
  const json* node = root.child("dar");
  if (!node) return;
  ObjectReader r(*node, "dar");
  r.get("gamma", cfg.hp.gamma);
  r.finish();
}

void read_heterogeneity(ObjectReader& root, ExperimentConfig& cfg) {
  const json* node = root.child("heterogeneity");
  if (!node) return;
  ObjectReader r(*node, "heterogeneity");
  std::vector<double> table;
  if (r.get("level_rho", table)) {
    if (table.size() != cfg.level_rho.size()) {
      throw ConfigError("config key 'heterogeneity.level_rho': expected 5 entries");
    }
    std::copy(table.begin(), table.end(), cfg.level_rho.begin());
  }
  r.get("levels", cfg.levels);
  double rho = 0.0;
  if (r.get("uniform_rho", rho)) cfg.uniform_rho = rho;
  r.finish();
}

void read_dataset(ObjectReader& root, ExperimentConfig& cfg) {
  const json* node = root.child("dataset");
  if (!node) return;
  ObjectReader r(*node, "dataset");
  DatasetConfig& ds = cfg.dataset;
  std::string kind = "synthetic";
  r.get("kind", kind);
  if (kind == "synthetic") {
    ds.kind = DatasetConfig::Kind::synthetic;
  } else if (kind == "idx") {
    ds.kind = DatasetConfig::Kind::idx;
  } else {
    throw ConfigError("config key 'dataset.kind': expected \"synthetic\" or \"idx\", got \"" + kind + "\"");
  }
  r.get("proportion", ds.proportion);
  r.get("test_fraction", ds.test_fraction);
  ds.synth.test_fraction = ds.test_fraction;
  if (ds.kind == DatasetConfig::Kind::synthetic) {
    r.get("domains", ds.synth.num_domains);
    r.get("classes", ds.synth.classes);
    r.get("dims", ds.synth.dims);
    r.get("samples_per_domain", ds.synth.samples_per_domain);
    r.get("class_separation", ds.synth.class_separation);
    r.get("cluster_std", ds.synth.cluster_std);
    std::string shift = "benchmark";
    if (r.get("shift", shift)) {
      if (shift == "benchmark") {
        ds.shift = ShiftPreset::benchmark;
      } else if (shift == "identity") {
        ds.shift = ShiftPreset::identity;
      } else {
        throw ConfigError("config key 'dataset.shift': expected \"benchmark\" or \"identity\"");
      }
    }
  } else {
    const json* domains = r.child("domains");
    if (!domains || !domains->is_array() || domains->empty()) {
      throw ConfigError("config key 'dataset.domains': idx datasets need a nonempty list of domains");
    }
    for (std::size_t i = 0; i < domains->size(); ++i) {
      ObjectReader d((*domains)[i], "dataset.domains[" + std::to_string(i) + "]");
      std::string images, labels;
      if (!d.get("images", images) || !d.get("labels", labels)) {
        throw ConfigError("config key '" + d.key_path("images") + "': images and labels paths are required");
      }
      d.finish();
      ds.idx_domains.push_back({images, labels});
    }
  }
  r.finish();
}

void read_model(ObjectReader& root, ExperimentConfig& cfg) {
  const json* node = root.child("model");
  if (!node) return;
  ObjectReader r(*node, "model");
  r.get("hidden", cfg.model.hidden);
  r.get("conv_channels", cfg.model.conv_channels);
  r.get("kernel", cfg.model.kernel);
  r.finish();
}

}  // namespace

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& msg) {
    throw ConfigError("config key '" + key + "': " + msg);
  };
  auto check_hp = [&](const std::string& key, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      fail(key, e.what());
    }
  };
  if (hp.rounds < 0) fail("federation.rounds", "must be nonnegative");
  if (clients == 0) fail("federation.clients", "must be positive");
  if (hp.local_epochs < 1) fail("local.epochs", "must be at least 1");
  if (hp.batch_size == 0) fail("local.batch_size", "must be positive");
  if (!(hp.lr >= 0.0)) fail("local.lr", "must be nonnegative");
  if (!(hp.momentum >= 0.0 && hp.momentum < 1.0)) fail("local.momentum", "must lie in [0, 1)");
  if (!(hp.weight_decay >= 0.0)) fail("local.weight_decay", "must be nonnegative");
  if (!(hp.fusion.alpha0 > 0.0 && hp.fusion.alpha0 <= 1.0)) fail("mfp.alpha0", "must lie in (0, 1]");
  if (!(hp.fusion.alpha_min > 0.0 && hp.fusion.alpha_min <= hp.fusion.alpha0)) {
    fail("mfp.alpha_min", "must lie in (0, alpha0]");
  }
  if (!(hp.fusion.epsilon >= 0.0 && hp.fusion.epsilon < 1.0)) fail("mfp.epsilon", "must lie in [0, 1)");
  if (!(hp.gamma >= 0.0)) fail("dar.gamma", "must be nonnegative");
  check_hp("local", [&] { hp.validate(); });
  for (double r : level_rho) {
    if (!(r >= 0.0 && r < 1.0)) fail("heterogeneity.level_rho", "ratios must lie in [0, 1)");
  }
  if (!levels.empty()) {
    if (levels.size() != clients) fail("heterogeneity.levels", "needs one level per client");
    for (int l : levels) {
      if (l < 1 || l > 5) fail("heterogeneity.levels", "levels must lie in 1..5");
    }
  }
  if (uniform_rho && !(*uniform_rho >= 0.0 && *uniform_rho < 1.0)) {
    fail("heterogeneity.uniform_rho", "must lie in [0, 1)");
  }
  if (!(dataset.proportion > 0.0 && dataset.proportion <= 1.0)) fail("dataset.proportion", "must lie in (0, 1]");
  if (!(dataset.test_fraction >= 0.0 && dataset.test_fraction < 1.0)) {
    fail("dataset.test_fraction", "must lie in [0, 1)");
  }
  if (dataset.kind == DatasetConfig::Kind::synthetic) {
    if (dataset.synth.num_domains < 2) fail("dataset.domains", "need at least two domains");
    if (dataset.synth.classes < 2) fail("dataset.classes", "need at least two classes");
    if (dataset.synth.dims == 0) fail("dataset.dims", "must be positive");
    if (clients < dataset.synth.num_domains) fail("federation.clients", "need at least one client per domain");
  } else if (clients < dataset.idx_domains.size()) {
    fail("federation.clients", "need at least one client per domain");
  }
  for (std::size_t h : model.hidden) {
    if (h == 0) fail("model.hidden", "widths must be positive");
  }
  for (std::size_t c : model.conv_channels) {
    if (c == 0) fail("model.conv_channels", "widths must be positive");
  }
  if (model.kernel == 0 || model.kernel % 2 == 0) fail("model.kernel", "must be odd");
  if (seeds.empty()) fail("seeds", "need at least one seed");
}

ExperimentConfig parse_config_text(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  ObjectReader root(doc, "");
  std::string framework;
  if (root.get("framework", framework)) cfg.framework = parse_framework(framework);
  root.get("seeds", cfg.seeds);
  std::string output;
  if (root.get("output", output)) cfg.output = output;
  root.get("threads", cfg.threads);
  root.get("record_wall_time", cfg.record_wall_time);
  read_federation(root, cfg);
  read_local(root, cfg);
  read_mfp(root, cfg);
  read_dar(root, cfg);
  read_heterogeneity(root, cfg);
  read_dataset(root, cfg);
  read_model(root, cfg);
  root.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

}  // namespace dapperfl

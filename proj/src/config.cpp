#include "smorm/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <concepts>
#include <fstream>
#include <functional>
#include <sstream>

#include "smorm/error.hpp"

namespace smorm {

namespace {

std::string fmt_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

class Binder {
 public:
  explicit Binder(std::vector<Field>& out) : out_(out) {}
  Binder& section(std::string s) {
    section_ = std::move(s);
    return *this;
  }

  void add(const std::string& key, std::string& v) {
    push(key, [&v](const std::string& s) { v = s; }, [&v] { return v; });
  }
  void add(const std::string& key, double& v) {
    push(key, [&v, key](const std::string& s) { v = parse_double(key, s); }, [&v] { return fmt_double(v); });
  }
  template <std::unsigned_integral T>
  void add(const std::string& key, T& v) {
    push(key, [&v, key](const std::string& s) { v = static_cast<T>(parse_u64(key, s)); },
         [&v] { return std::to_string(v); });
  }
  void add(const std::string& key, bool& v) {
    push(key,
         [&v, key](const std::string& s) {
           if (s == "true" || s == "1") {
             v = true;
           } else if (s == "false" || s == "0") {
             v = false;
           } else {
             throw ConfigError(key + ": expected true or false, got '" + s + "'");
           }
         },
         [&v] { return std::string(v ? "true" : "false"); });
  }
  void add(const std::string& key, std::vector<std::size_t>& v) {
    push(key,
         [&v, key](const std::string& s) {
           v.clear();
           for (const auto& item : split_list(s)) v.push_back(static_cast<std::size_t>(parse_u64(key, item)));
         },
         [&v] {
           std::string out;
           for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
           return out;
         });
  }
  void add(const std::string& key, std::vector<double>& v) {
    push(key,
         [&v, key](const std::string& s) {
           v.clear();
           for (const auto& item : split_list(s)) v.push_back(parse_double(key, item));
         },
         [&v] {
           std::string out;
           for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt_double(v[i]);
           return out;
         });
  }
  template <class E>
  void add_enum(const std::string& key, E& v, E (*parse)(const std::string&), std::string (*show)(E)) {
    push(key,
         [&v, key, parse](const std::string& s) {
           try {
             v = parse(s);
           } catch (const Error& e) {
             throw ConfigError(key + ": " + e.what());
           }
         },
         [&v, show] { return show(v); });
  }

 private:
  static double parse_double(const std::string& key, const std::string& s) {
    double x = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw ConfigError(key + ": expected a number, got '" + s + "'");
    return x;
  }
  static std::uint64_t parse_u64(const std::string& key, const std::string& s) {
    std::uint64_t x = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
    return x;
  }
  void push(const std::string& key, std::function<void(const std::string&)> set, std::function<std::string()> get) {
    out_.push_back({section_, key, std::move(set), std::move(get)});
  }

  std::vector<Field>& out_;
  std::string section_;
};

std::string show_ensemble(EnsembleMode m) { return m == EnsembleMode::mean ? "mean" : "min"; }

std::vector<Field> fields(RunConfig& c) {
  std::vector<Field> out;
  Binder b(out);

  b.section("run");
  b.add("schema", c.run.schema);
  b.add("seed", c.run.seed);

  b.section("world");
  auto& w = c.world;
  b.add("kind", w.kind);
  b.add("seed", w.seed);
  b.add("d_z", w.d_z);
  b.add("K", w.K);
  b.add("hidden", w.hidden);
  b.add_enum("activation", w.activation, parse_activation, to_string);
  b.add("shared_weight", w.shared_weight);
  b.add("attr_noise", w.attr_noise);
  b.add("overall_noise", w.overall_noise);
  b.add("independent_preference", w.independent_preference);
  b.add("prompt_scale", w.prompt_scale);
  b.add("ood_scale", w.ood_scale);
  b.add("rho", w.rho);
  b.add("spurious_index", w.spurious_index);
  b.add("spurious_gain", w.spurious_gain);
  b.add("penalty", w.penalty);
  b.add("threshold", w.threshold);
  b.add("id_offset", w.id_offset);
  b.add("ood_offset", w.ood_offset);
  b.add("ood_v_scale", w.ood_v_scale);
  b.add("spurious_noise", w.spurious_noise);
  b.add("feature_bound", w.feature_bound);

  b.section("data");
  b.add("n_train_pairs", c.data.n_train_pairs);
  b.add("n_train_attrs", c.data.n_train_attrs);
  b.add("n_eval", c.data.n_eval);

  b.section("model");
  b.add("hidden", c.model.hidden);
  b.add("embed_dim", c.model.embed_dim);
  b.add_enum("activation", c.model.activation, parse_activation, to_string);
  b.add("gating", c.model.gating);

  b.section("train");
  auto& t = c.train;
  b.add_enum("mode", t.mode, parse_training_mode, to_string);
  b.add("lambda_multi", t.lambda_multi);
  b.add("margin", t.margin);
  b.add("label_smooth_eps", t.label_smooth_eps);
  b.add("steps", t.steps);
  b.add("batch_s", t.batch_s);
  b.add("batch_m", t.batch_m);
  b.add("learning_rate", t.adam.learning_rate);
  b.add("beta1", t.adam.beta1);
  b.add("beta2", t.adam.beta2);
  b.add("adam_eps", t.adam.eps);
  b.add("weight_decay", t.adam.weight_decay);
  b.add("warmup_fraction", t.adam.warmup_fraction);
  b.add_enum("schedule", t.adam.schedule, parse_schedule, to_string);
  b.add("gating_steps", t.gating_steps);

  b.section("bon");
  b.add("n_max", c.bon.n_max);
  b.add("n_points", c.bon.n_points);
  b.add("n_prompts", c.bon.n_prompts);
  b.add("prompts", c.bon.prompts);
  b.add("policy_std", c.bon.policy_std);
  b.add("policy_hidden", c.bon.policy_hidden);
  b.add("min_drop", c.bon.min_drop);
  b.add_enum("strategy", c.bon.strategy, parse_strategy, to_string);
  b.add_enum("ensemble", c.bon.ensemble, parse_ensemble_mode, show_ensemble);

  b.section("ppo");
  auto& p = c.ppo;
  b.add("epochs", p.ppo.epochs);
  b.add("batch_size", p.ppo.batch_size);
  b.add("inner_epochs", p.ppo.inner_epochs);
  b.add("clip_range", p.ppo.clip_range);
  b.add("gae_lambda", p.ppo.gae_lambda);
  b.add("gamma", p.ppo.gamma);
  b.add("learning_rate", p.ppo.learning_rate);
  b.add("kl_coef", p.ppo.kl_coef);
  b.add("normalize_advantages", p.ppo.normalize_advantages);
  b.add("n_prompts", p.n_prompts);
  b.add("prompts", p.prompts);
  b.add("policy_std", p.policy_std);
  b.add("policy_hidden", p.policy_hidden);
  b.add("window", p.window);
  b.add("persistence", p.persistence);
  b.add("win_rate_prompts", p.win_rate_prompts);
  b.add_enum("strategy", p.strategy, parse_strategy, to_string);
  b.add_enum("ensemble", p.ensemble, parse_ensemble_mode, show_ensemble);

  b.section("verify");
  auto& v = c.verify;
  b.add("n_moment", v.n_moment);
  b.add("n_heldout", v.n_heldout);
  b.add("lemma_pairs", v.lemma_pairs);
  b.add("lemma_error_sd", v.lemma_error_sd);
  b.add("fisher_samples", v.fisher_samples);
  b.add("ridge", v.ridge);
  b.add("tolerance", v.tolerance);
  b.add("theorem2_seeds", v.theorem2_seeds);

  b.section("sweep");
  b.add("parameter", c.sweep.parameter);
  b.add("values", c.sweep.values);
  b.add("inner", c.sweep.inner);
  b.add("max_inner_spread", c.sweep.max_inner_spread);
  b.add("edge_drop", c.sweep.edge_drop);
  return out;
}

}  // namespace

void set_config_value(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value) {
  bool known_section = false;
  for (auto& f : fields(cfg)) {
    if (f.section != section) continue;
    known_section = true;
    if (f.key == key) {
      f.set(trim(value));
      return;
    }
  }
  if (!known_section) throw ConfigError("unknown section [" + section + "]");
  throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
}

RunConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("malformed config at line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("key '" + section + "' must live inside a section");
    for (const auto& [key, value] : body) set_config_value(cfg, section, key, value.data());
  }
  if (cfg.run.schema != kConfigSchema)
    throw ConfigError("schema: expected '" + std::string(kConfigSchema) + "', got '" + cfg.run.schema + "'");
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_ini(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::string out;
  std::string current;
  for (const auto& f : fields(copy)) {
    if (f.section != current) {
      if (!current.empty()) out += "\n";
      out += "[" + f.section + "]\n";
      current = f.section;
    }
    out += f.key + " = " + f.get() + "\n";
  }
  return out;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(world.kind == "correlated" || world.kind == "spurious" || world.kind == "pure_sorm",
          "world.kind: expected correlated, spurious or pure_sorm, got '" + world.kind + "'");
  require(world.K >= 1, "world.K must be >= 1");
  if (world.kind == "spurious") {
    require(world.K >= 2, "world.K must be >= 2 for a spurious world");
    require(world.spurious_index < world.K, "world.spurious_index must be < K");
    require(world.rho >= 0.0 && world.rho < 1.0, "world.rho must lie in [0, 1)");
  } else {
    require(world.d_z >= 2, "world.d_z must be >= 2");
    require(world.hidden >= 1, "world.hidden must be >= 1");
    require(world.shared_weight >= 0.0 && world.shared_weight <= 1.0, "world.shared_weight must lie in [0, 1]");
  }
  require(world.attr_noise > 0.0 && world.overall_noise > 0.0 && world.spurious_noise > 0.0,
          "world noise variances must be > 0");
  require(world.feature_bound > 0.0, "world.feature_bound must be > 0");
  require(world.prompt_scale > 0.0 && world.ood_scale > 0.0 && world.ood_v_scale > 0.0,
          "world prompt scales must be > 0");
  for (auto h : model.hidden) require(h >= 1, "model.hidden widths must be >= 1");
  require(model.embed_dim >= 1, "model.embed_dim must be >= 1");
  try {
    loss_config(*this).validate();
    train.adam.validate();
    ppo.ppo.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  require(train.batch_s >= 1 && train.batch_m >= 1, "train batch sizes must be >= 1");
  require(bon.n_max >= 1 && bon.n_points >= 1, "bon.n_max and bon.n_points must be >= 1");
  require(bon.prompts == "id" || bon.prompts == "ood", "bon.prompts: expected id or ood");
  require(ppo.prompts == "id" || ppo.prompts == "ood", "ppo.prompts: expected id or ood");
  require(bon.policy_std > 0.0 && ppo.policy_std > 0.0, "policy_std must be > 0");
  require(ppo.window >= 2, "ppo.window must be >= 2");
  require(verify.tolerance >= 0.0 && verify.ridge >= 0.0, "verify tolerance and ridge must be >= 0");
  require(verify.lemma_error_sd > 0.0, "verify.lemma_error_sd must be > 0");
  require(sweep.parameter == "lambda_multi", "sweep.parameter: only lambda_multi is supported");
  require(!sweep.values.empty(), "sweep.values must not be empty");
  for (double x : sweep.values) require(x >= 0.0, "sweep.values must be >= 0");
}

GoldWorld build_world(const RunConfig& cfg) { return build_world_bundle(cfg).world; }

WorldBundle build_world_bundle(const RunConfig& cfg) {
  const auto& w = cfg.world;
  WorldBundle out;
  if (w.kind == "spurious") {
    SpuriousConfig sc;
    sc.K = w.K;
    sc.spurious_index = w.spurious_index;
    sc.rho = w.rho;
    sc.spurious_gain = w.spurious_gain;
    sc.penalty = w.penalty;
    sc.threshold = w.threshold;
    sc.id_offset = w.id_offset;
    sc.ood_offset = w.ood_offset;
    sc.ood_scale = w.ood_v_scale;
    sc.utility_scale = w.prompt_scale;
    sc.attr_noise = w.spurious_noise;
    sc.feature_bound = w.feature_bound;
    sc.seed = w.seed;
    SpuriousWorld sw = make_spurious_world(sc);
    out.world = std::move(sw.world);
    out.id_dist = std::move(sw.train_dist);
    out.ood_dist = std::move(sw.ood_dist);
    out.attr_dist = std::move(sw.attr_dist);
    return out;
  }
  CorrelatedWorldConfig cc;
  cc.d_z = w.d_z;
  cc.K = w.K;
  cc.hidden = w.hidden;
  cc.activation = w.activation;
  cc.shared_weight = w.shared_weight;
  cc.attr_noise = w.attr_noise;
  cc.overall_noise = w.overall_noise;
  cc.feature_bound = w.feature_bound;
  cc.independent_preference = w.independent_preference || w.kind == "pure_sorm";
  cc.seed = w.seed;
  out.world = make_correlated_world(cc);
  if (w.kind == "pure_sorm") {
    auto& m = out.world.attribute_map;
    for (double& x : m.w2.data()) x = 0.0;
    for (double& x : m.b2) x = 0.0;
    out.world.finalize();
  }
  out.id_dist = standard_prompts(w.d_z, w.prompt_scale, "id");
  out.ood_dist = standard_prompts(w.d_z, w.prompt_scale * w.ood_scale, "ood");
  out.attr_dist = standard_prompts(w.d_z, w.prompt_scale, "attr");
  return out;
}

MlpConfig backbone_config(const RunConfig& cfg, std::size_t d_z) {
  return {d_z, cfg.model.hidden, cfg.model.embed_dim, cfg.model.activation};
}

LossConfig loss_config(const RunConfig& cfg) {
  LossConfig lc;
  lc.mode = cfg.train.mode;
  lc.lambda_multi = cfg.train.lambda_multi;
  lc.margin = cfg.train.margin;
  lc.label_smooth_eps = cfg.train.label_smooth_eps;
  return lc;
}

TrainSchedule train_schedule(const RunConfig& cfg) {
  TrainSchedule s;
  s.steps = cfg.train.steps;
  s.batch_s = cfg.train.batch_s;
  s.batch_m = cfg.train.batch_m;
  s.seed = derive_seed(cfg.run.seed, 101);
  return s;
}

}  // namespace smorm

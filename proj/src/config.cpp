#include "canseg/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace canseg {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& origin, const std::string& msg) {
  throw ConfigError(origin + ": " + msg);
}

void expect_object(const json& j, const std::string& origin,
                   const std::string& path) {
  if (!j.is_object())
    bad(origin, path + " must be an object, got " + std::string(j.type_name()));
}

void reject_unknown(const json& j, const std::string& origin,
                    const std::string& path,
                    std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok)
      bad(origin, "unknown key \"" + (path.empty() ? key : path + "." + key) +
                      "\"");
  }
}

int get_int(const json& j, const std::string& origin, const std::string& path,
            const char* key, int dflt) {
  if (!j.contains(key)) return dflt;
  const json& v = j.at(key);
  if (!v.is_number_integer())
    bad(origin, path + "." + key + " must be an integer");
  return v.get<int>();
}

double get_num(const json& j, const std::string& origin,
               const std::string& path, const char* key, double dflt) {
  if (!j.contains(key)) return dflt;
  const json& v = j.at(key);
  if (!v.is_number()) bad(origin, path + "." + key + " must be a number");
  return v.get<double>();
}

bool get_bool(const json& j, const std::string& origin, const std::string& path,
              const char* key, bool dflt) {
  if (!j.contains(key)) return dflt;
  const json& v = j.at(key);
  if (!v.is_boolean()) bad(origin, path + "." + key + " must be a boolean");
  return v.get<bool>();
}

std::vector<int> get_int_array(const json& j, const std::string& origin,
                               const std::string& path, const char* key,
                               const std::vector<int>& dflt) {
  if (!j.contains(key)) return dflt;
  const json& v = j.at(key);
  if (!v.is_array())
    bad(origin, path + "." + key + " must be an array of integers");
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer())
      bad(origin, path + "." + key + " must be an array of integers");
    out.push_back(e.get<int>());
  }
  return out;
}

std::vector<InvResSpec> parse_backbone(const json& v, const std::string& origin,
                                       int stem_channels) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "toy") return default_toy_backbone();
    if (s == "mobilenetv3_small") return mobilenetv3_small_backbone();
    bad(origin, "model.backbone: unknown preset \"" + s +
                    "\" (use \"toy\", \"mobilenetv3_small\", or a block list)");
  }
  if (!v.is_array()) bad(origin, "model.backbone must be a preset name or array");
  std::vector<InvResSpec> out;
  int prev = stem_channels;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string path = "model.backbone[" + std::to_string(i) + "]";
    const json& b = v.at(i);
    expect_object(b, origin, path);
    reject_unknown(b, origin, path,
                   {"expand", "out", "kernel", "stride", "se", "act"});
    InvResSpec spec;
    spec.in = prev;
    spec.expand = get_int(b, origin, path, "expand", prev * 2);
    spec.out = get_int(b, origin, path, "out", prev);
    spec.kernel = get_int(b, origin, path, "kernel", 3);
    spec.stride = get_int(b, origin, path, "stride", 1);
    spec.use_se = get_bool(b, origin, path, "se", false);
    std::string act = "relu";
    if (b.contains("act")) {
      if (!b.at("act").is_string()) bad(origin, path + ".act must be a string");
      act = b.at("act").get<std::string>();
    }
    spec.act = act_from_string(act);
    prev = spec.out;
    out.push_back(spec);
  }
  return out;
}

}  // namespace

RunConfig parse_config_text(const std::string& text,
                            const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  expect_object(root, origin, "config");
  reject_unknown(root, origin, "", {"model", "train", "io"});

  RunConfig cfg;
  if (root.contains("model")) {
    const json& m = root.at("model");
    expect_object(m, origin, "model");
    reject_unknown(m, origin, "model",
                   {"num_classes", "input_channels", "spatial_channels",
                    "backbone_stem_channels", "backbone",
                    "backbone_tail_channels", "ga_embed_channels",
                    "ga_value_channels", "spp_scales", "ghost",
                    "context_out_channels", "ffm_mid_channels",
                    "ffm_out_channels"});
    ModelConfig& mc = cfg.model;
    mc.num_classes = get_int(m, origin, "model", "num_classes", mc.num_classes);
    mc.input_channels =
        get_int(m, origin, "model", "input_channels", mc.input_channels);
    auto sc = get_int_array(m, origin, "model", "spatial_channels",
                            {mc.spatial_channels.begin(),
                             mc.spatial_channels.end()});
    if (sc.size() != 4)
      bad(origin, "model.spatial_channels must have exactly 4 entries");
    std::copy(sc.begin(), sc.end(), mc.spatial_channels.begin());
    mc.backbone_stem_channels = get_int(m, origin, "model",
                                        "backbone_stem_channels",
                                        mc.backbone_stem_channels);
    if (m.contains("backbone"))
      mc.backbone =
          parse_backbone(m.at("backbone"), origin, mc.backbone_stem_channels);
    mc.backbone_tail_channels = get_int(m, origin, "model",
                                        "backbone_tail_channels",
                                        mc.backbone_tail_channels);
    mc.ga_embed_channels =
        get_int(m, origin, "model", "ga_embed_channels", mc.ga_embed_channels);
    mc.ga_value_channels =
        get_int(m, origin, "model", "ga_value_channels", mc.ga_value_channels);
    mc.spp.scales =
        get_int_array(m, origin, "model", "spp_scales", mc.spp.scales);
    if (m.contains("ghost")) {
      const json& g = m.at("ghost");
      expect_object(g, origin, "model.ghost");
      reject_unknown(g, origin, "model.ghost",
                     {"ratio", "primary_kernel", "cheap_kernel"});
      mc.ghost.ratio =
          get_int(g, origin, "model.ghost", "ratio", mc.ghost.ratio);
      mc.ghost.primary_kernel = get_int(g, origin, "model.ghost",
                                        "primary_kernel",
                                        mc.ghost.primary_kernel);
      mc.ghost.cheap_kernel = get_int(g, origin, "model.ghost", "cheap_kernel",
                                      mc.ghost.cheap_kernel);
    }
    mc.context_out_channels = get_int(m, origin, "model",
                                      "context_out_channels",
                                      mc.context_out_channels);
    mc.ffm_mid_channels =
        get_int(m, origin, "model", "ffm_mid_channels", mc.ffm_mid_channels);
    mc.ffm_out_channels =
        get_int(m, origin, "model", "ffm_out_channels", mc.ffm_out_channels);
  }

  if (root.contains("train")) {
    const json& t = root.at("train");
    expect_object(t, origin, "train");
    reject_unknown(t, origin, "train",
                   {"base_lr", "power", "max_iter", "momentum", "weight_decay",
                    "ohem_threshold", "ohem_min_kept", "ignore_index",
                    "dataset", "batch_size", "seed", "log_every", "val_every",
                    "stop_at_miou", "grad_clip"});
    TrainConfig& tc = cfg.train;
    tc.schedule.base_lr =
        get_num(t, origin, "train", "base_lr", tc.schedule.base_lr);
    tc.schedule.power = get_num(t, origin, "train", "power", tc.schedule.power);
    tc.schedule.max_iter =
        get_int(t, origin, "train", "max_iter", tc.schedule.max_iter);
    tc.schedule.momentum =
        get_num(t, origin, "train", "momentum", tc.schedule.momentum);
    tc.schedule.weight_decay =
        get_num(t, origin, "train", "weight_decay", tc.schedule.weight_decay);
    tc.ohem.prob_threshold =
        get_num(t, origin, "train", "ohem_threshold", tc.ohem.prob_threshold);
    tc.ohem.min_kept =
        get_int(t, origin, "train", "ohem_min_kept", tc.ohem.min_kept);
    tc.ohem.ignore_index =
        get_int(t, origin, "train", "ignore_index", tc.ohem.ignore_index);
    if (t.contains("dataset")) {
      const json& d = t.at("dataset");
      expect_object(d, origin, "train.dataset");
      reject_unknown(d, origin, "train.dataset",
                     {"height", "width", "train_count", "val_count",
                      "augment"});
      DatasetConfig& dc = tc.dataset;
      dc.height = get_int(d, origin, "train.dataset", "height", dc.height);
      dc.width = get_int(d, origin, "train.dataset", "width", dc.width);
      dc.train_count =
          get_int(d, origin, "train.dataset", "train_count", dc.train_count);
      dc.val_count =
          get_int(d, origin, "train.dataset", "val_count", dc.val_count);
      dc.augment = get_bool(d, origin, "train.dataset", "augment", dc.augment);
    }
    tc.batch_size = get_int(t, origin, "train", "batch_size", tc.batch_size);
    int seed = get_int(t, origin, "train", "seed", int(tc.seed));
    if (seed < 0) bad(origin, "train.seed must be >= 0");
    tc.seed = std::uint64_t(seed);
    tc.log_every = get_int(t, origin, "train", "log_every", tc.log_every);
    tc.val_every = get_int(t, origin, "train", "val_every", tc.val_every);
    tc.stop_at_miou =
        get_num(t, origin, "train", "stop_at_miou", tc.stop_at_miou);
    tc.grad_clip = get_num(t, origin, "train", "grad_clip", tc.grad_clip);
    if (tc.grad_clip < 0) bad(origin, "train.grad_clip must be >= 0");
  }

  if (root.contains("io")) {
    const json& io = root.at("io");
    expect_object(io, origin, "io");
    reject_unknown(io, origin, "io", {"weights", "out_prefix"});
    auto get_str = [&](const char* key, const std::string& dflt) {
      if (!io.contains(key)) return dflt;
      if (!io.at(key).is_string())
        bad(origin, std::string("io.") + key + " must be a string");
      return io.at(key).get<std::string>();
    };
    cfg.io.weights = get_str("weights", cfg.io.weights);
    cfg.io.out_prefix = get_str("out_prefix", cfg.io.out_prefix);
  }

  try {
    cfg.model.validate();
  } catch (const std::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f.good()) throw ConfigError("cannot open config: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path);
}

}  // namespace canseg

#include "udsr/losses.hpp"

#include <json.hpp>

namespace udsr {

namespace {

using nlohmann::json;

json mask_to_json(const WeightMask& m) { return json::array({m.w_defined, m.w_hole}); }

WeightMask mask_from_json(const json& j) {
  require(j.is_array() && j.size() == 2, "weight mask must be a [defined, hole] pair",
          ErrorKind::Config);
  WeightMask m{j[0].get<double>(), j[1].get<double>()};
  require(m.w_defined >= 0 && m.w_hole >= 0, "weight mask values must be >= 0",
          ErrorKind::Config);
  return m;
}

}  // namespace

LossWeights LossWeights::preset(const std::string& name) {
  LossWeights w;  // defaults are the scannet-renderscannet phase-1 values
  if (name == "scannet-renderscannet-phase1") {
    return w;
  }
  if (name == "scannet-renderscannet-phase2") {
    // Hole-emphasis update for the final no-crop stage.
    w.w_depth1_h = {1, 120};
    w.w_depth2_h = {0, 60};
    w.surf1_h = 5;
    w.w_depth1_l = {2, 40};
    w.w_depth2_l = {0, 50};
    return w;
  }
  if (name == "scannet-interiornet-phase1") {
    w.cycle_h = 2;
    w.range_h = 2;
    w.range_l = 2;
    w.idt_h = 1;
    w.depth1_h = 10;
    w.w_depth1_h = {1, 40};
    w.depth2_h = 10;
    w.w_depth2_h = {0, 10};
    w.w_depth1_l = {1, 40};
    w.w_depth2_l = {0, 25};
    return w;
  }
  if (name == "sr-finetune") {
    w = preset("scannet-renderscannet-phase2");
    w.surf1_h = 4;
    w.surf2_h = 4;
    return w;
  }
  throw Error("unknown loss preset '" + name + "'", ErrorKind::Config);
}

std::vector<std::string> LossWeights::preset_names() {
  return {"scannet-renderscannet-phase1", "scannet-renderscannet-phase2",
          "scannet-interiornet-phase1", "sr-finetune"};
}

std::string LossWeights::to_json() const {
  json j;
  j["cycle_h"] = cycle_h;
  j["range_l"] = range_l;
  j["range_h"] = range_h;
  j["idt_h"] = idt_h;
  j["depth1_h"] = depth1_h;
  j["depth2_h"] = depth2_h;
  j["w_depth1_h"] = mask_to_json(w_depth1_h);
  j["w_depth2_h"] = mask_to_json(w_depth2_h);
  j["surf1_h"] = surf1_h;
  j["surf2_h"] = surf2_h;
  j["w_surf1_h"] = mask_to_json(w_surf1_h);
  j["w_surf2_h"] = mask_to_json(w_surf2_h);
  j["smooth_h"] = smooth_h;
  j["depth1_l"] = depth1_l;
  j["depth2_l"] = depth2_l;
  j["w_depth1_l"] = mask_to_json(w_depth1_l);
  j["w_depth2_l"] = mask_to_json(w_depth2_l);
  j["smooth_l"] = smooth_l;
  j["edge_l"] = edge_l;
  return j.dump(2);
}

LossWeights LossWeights::from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(std::string("invalid loss-weights JSON: ") + e.what(),
                ErrorKind::Config);
  }
  LossWeights w;
  if (j.contains("preset")) w = preset(j["preset"].get<std::string>());
  auto num = [&](const char* k, double& out) {
    if (j.contains(k)) {
      out = j[k].get<double>();
      require(out >= 0, std::string("loss weight '") + k + "' must be >= 0",
              ErrorKind::Config);
    }
  };
  auto msk = [&](const char* k, WeightMask& out) {
    if (j.contains(k)) out = mask_from_json(j[k]);
  };
  num("cycle_h", w.cycle_h);
  num("range_l", w.range_l);
  num("range_h", w.range_h);
  num("idt_h", w.idt_h);
  num("depth1_h", w.depth1_h);
  num("depth2_h", w.depth2_h);
  msk("w_depth1_h", w.w_depth1_h);
  msk("w_depth2_h", w.w_depth2_h);
  num("surf1_h", w.surf1_h);
  num("surf2_h", w.surf2_h);
  msk("w_surf1_h", w.w_surf1_h);
  msk("w_surf2_h", w.w_surf2_h);
  num("smooth_h", w.smooth_h);
  num("depth1_l", w.depth1_l);
  num("depth2_l", w.depth2_l);
  msk("w_depth1_l", w.w_depth1_l);
  msk("w_depth2_l", w.w_depth2_l);
  num("smooth_l", w.smooth_l);
  num("edge_l", w.edge_l);
  return w;
}

}  // namespace udsr

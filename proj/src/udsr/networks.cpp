#include "udsr/networks.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace udsr::nets {

namespace {

using nlohmann::json;

int get_int(const json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  int v = j[key].get<int>();
  require(v >= 1, std::string("network config: '") + key + "' must be >= 1",
          ErrorKind::Config);
  return v;
}

}  // namespace

NetworkConfig NetworkConfig::from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(std::string("invalid network config JSON: ") + e.what(),
                ErrorKind::Config);
  }
  NetworkConfig c;
  if (j.contains("schema_version")) {
    c.schema_version = j["schema_version"].get<int>();
    require(c.schema_version == 1, "unsupported network config schema version",
            ErrorKind::Config);
  }
  if (j.contains("generator")) {
    const json& g = j["generator"];
    c.generator.base_width = get_int(g, "base_width", c.generator.base_width);
    c.generator.res_blocks = get_int(g, "res_blocks", c.generator.res_blocks);
    c.generator.groupnorm_groups =
        get_int(g, "groupnorm_groups", c.generator.groupnorm_groups);
    if (g.contains("identity_init"))
      c.generator.identity_init = g["identity_init"].get<bool>();
  }
  if (j.contains("discriminator")) {
    const json& d = j["discriminator"];
    c.discriminator.base_width = get_int(d, "base_width", c.discriminator.base_width);
  }
  if (j.contains("guidance")) {
    const json& g = j["guidance"];
    c.guidance.base_width = get_int(g, "base_width", c.guidance.base_width);
    c.guidance.res_blocks = get_int(g, "res_blocks", c.guidance.res_blocks);
  }
  if (j.contains("enhancement")) {
    const json& e = j["enhancement"];
    c.enhancement.base_width = get_int(e, "base_width", c.enhancement.base_width);
    c.enhancement.feature_channels =
        get_int(e, "feature_channels", c.enhancement.feature_channels);
  }
  return c;
}

NetworkConfig NetworkConfig::load(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open network config: " + path, ErrorKind::Config);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json(ss.str());
}

std::string NetworkConfig::to_json() const {
  json j;
  j["schema_version"] = schema_version;
  j["generator"] = {{"base_width", generator.base_width},
                    {"res_blocks", generator.res_blocks},
                    {"identity_init", generator.identity_init},
                    {"groupnorm_groups", generator.groupnorm_groups}};
  j["discriminator"] = {{"base_width", discriminator.base_width}};
  j["guidance"] = {{"base_width", guidance.base_width},
                   {"res_blocks", guidance.res_blocks}};
  j["enhancement"] = {{"base_width", enhancement.base_width},
                      {"feature_channels", enhancement.feature_channels}};
  return j.dump(2);
}

}  // namespace udsr::nets

#include "idpp/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "idpp/errors.hpp"

namespace idpp {
namespace {

using ordered_json = nlohmann::ordered_json;

void require_range(bool ok, const char* field, const char* range) {
  if (!ok) {
    throw validation_error(std::string("config: ") + field + " must be " + range);
  }
}

}  // namespace

void validate_config(const Config& c) {
  require_range(c.lambda >= 0.0 && c.lambda <= 1.0, "lambda", "in [0, 1]");
  require_range(c.lambda_ss >= 0.0, "lambda_ss", "non-negative");
  require_range(c.ss_switch_fraction >= 0.0 && c.ss_switch_fraction <= 1.0,
                "ss_switch_fraction", "in [0, 1]");
  require_range(c.m >= 1, "m", "a positive integer");
  require_range(std::isfinite(c.beta), "beta", "finite");
  require_range(c.nms_tau >= 0.0 && c.nms_tau <= 1.0, "nms_tau", "in [0, 1]");
  require_range(c.crowd_tau >= 0.0 && c.crowd_tau <= 1.0, "crowd_tau", "in [0, 1]");
  require_range(c.psd_epsilon > 0.0, "psd_epsilon", "positive");
  require_range(c.fd_step > 0.0, "fd_step", "positive");
  require_range(c.lr_scores >= 0.0, "lr_scores", "non-negative");
  require_range(c.lr_features >= 0.0, "lr_features", "non-negative");
  require_range(c.phase1_iters >= 0, "phase1_iters", "non-negative");
  require_range(c.phase2_iters >= 0, "phase2_iters", "non-negative");
}

Config config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw validation_error(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw validation_error("config: top level must be an object");

  Config c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "lambda") c.lambda = value.get<double>();
      else if (key == "lambda_ss") c.lambda_ss = value.get<double>();
      else if (key == "ss_switch_fraction") c.ss_switch_fraction = value.get<double>();
      else if (key == "m") c.m = value.get<int>();
      else if (key == "beta") c.beta = value.get<double>();
      else if (key == "nms_tau") c.nms_tau = value.get<double>();
      else if (key == "crowd_tau") c.crowd_tau = value.get<double>();
      else if (key == "psd_epsilon") c.psd_epsilon = value.get<double>();
      else if (key == "fd_step") c.fd_step = value.get<double>();
      else if (key == "rng_seed") c.rng_seed = value.get<std::uint64_t>();
      else if (key == "lr_scores") c.lr_scores = value.get<double>();
      else if (key == "lr_features") c.lr_features = value.get<double>();
      else if (key == "phase1_iters") c.phase1_iters = value.get<int>();
      else if (key == "phase2_iters") c.phase2_iters = value.get<int>();
      else throw validation_error("config: unknown field '" + key + "'");
    } catch (const ordered_json::exception&) {
      throw validation_error("config: field '" + key + "' has the wrong type");
    }
  }
  validate_config(c);
  return c;
}

std::string config_to_json(const Config& c) {
  ordered_json j;
  j["lambda"] = c.lambda;
  j["lambda_ss"] = c.lambda_ss;
  j["ss_switch_fraction"] = c.ss_switch_fraction;
  j["m"] = c.m;
  j["beta"] = c.beta;
  j["nms_tau"] = c.nms_tau;
  j["crowd_tau"] = c.crowd_tau;
  j["psd_epsilon"] = c.psd_epsilon;
  j["fd_step"] = c.fd_step;
  j["rng_seed"] = c.rng_seed;
  j["lr_scores"] = c.lr_scores;
  j["lr_features"] = c.lr_features;
  j["phase1_iters"] = c.phase1_iters;
  j["phase2_iters"] = c.phase2_iters;
  return j.dump(2) + "\n";
}

Config load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

}  // namespace idpp

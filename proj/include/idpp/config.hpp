#pragma once

#include <cstdint>
#include <string>

namespace idpp {

// One configuration surface for the library and CLI. Flags override file
// values field by field; everything here round-trips through JSON.
struct Config {
  double lambda = 0.6;             // visual-vs-spatial blend weight
  double lambda_ss = 0.01;         // selection-loss weight after the switch
  double ss_switch_fraction = 0.6; // fraction of phase-1 iterations before lambda_ss kicks in
  int m = 5;                       // top categories expanded per RoI
  double beta = 2.0;               // quality transform exponent
  double nms_tau = 0.5;            // suppression overlap threshold
  double crowd_tau = 0.3;          // crowd-pair overlap threshold (strict >)
  double psd_epsilon = 1e-8;       // repair floor for indefinite similarity
  double fd_step = 1e-6;           // finite-difference step
  std::uint64_t rng_seed = 0;

  // Toy-trainer knobs.
  double lr_scores = 0.5;
  double lr_features = 0.05;
  int phase1_iters = 250;
  int phase2_iters = 250;
};

// Throws validation_error on out-of-range fields.
void validate_config(const Config& config);

// Parses a JSON object; absent fields keep their defaults, unknown fields
// are rejected by name.
Config config_from_json(const std::string& text);

std::string config_to_json(const Config& config);

Config load_config_file(const std::string& path);

}  // namespace idpp

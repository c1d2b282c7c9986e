#pragma once

// Run configuration, one JSON file per run. Unknown keys are rejected.
// Physical quantities use engineering units here (GHz rather than Hz); the
// parsed structs hold SI units.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mtda/eval.hpp"

namespace mtda {

struct EvalSettings {
  ExperimentSizes sizes;
  SweepConfig sweep;
};

struct RunConfig {
  DomainConfig source = shift_source_preset(3);
  DomainConfig target = shift_target_preset(3);
  NetConfig net;
  TrainConfig train;
  AdaptConfig adapt;
  EvalSettings eval;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string output_dir;  // empty: caller decides

  int n_users() const { return net.n_users; }
  // Sets N on both domains and the network.
  void set_n_users(int n);
  ExperimentConfig experiment() const;
};

// Throws ConfigError naming the offending key.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
void validate(const RunConfig& cfg);

// Fully resolved configuration in the same schema the parser accepts.
std::string to_json(const RunConfig& cfg);

}  // namespace mtda

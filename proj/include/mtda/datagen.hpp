#pragma once

// Scenario sampling from source/target domains, oracle labeling, JSONL
// serialization and the network feature encoding.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mtda/mec_model.hpp"
#include "mtda/rng.hpp"

namespace mtda {

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool operator==(const Range&) const = default;
};

enum class DomainTag { kSource, kTarget };

std::string to_string(DomainTag tag);
DomainTag domain_tag_from_string(const std::string& s);

struct DomainConfig {
  Range s{1e3, 5e5};              // upload size, bits
  Range result_ratio{0.05, 0.2};  // w / s
  Range cycles_per_bit{500.0, 1500.0};
  Range nu_loc{0.5e9, 1.5e9};
  Range u{0.5e6, 5e6};
  Range d{5e6, 50e6};
  Range f_server{2.5e9, 10e9};
  Range theta{0.5, 2.0};
  Range eta{1e-27, 1e-27};
  Range p_t{0.5, 0.5};
  Range p_i{0.1, 0.1};
  Range p_d{0.2, 0.2};
  double beta_cost = 0.5;
  int n_users = 3;
  std::uint64_t seed = 1;

  bool operator==(const DomainConfig&) const = default;
};

// Named ranges with the key used at the configuration boundary.
struct NamedRange {
  const char* key;
  Range DomainConfig::*member;
};
const std::vector<NamedRange>& domain_ranges();

// Throws InvalidParameter naming the offending key.
void validate(const DomainConfig& cfg);

// Source: s in [1, 500] kbit (a zero-size job is degenerate), f in [2.5, 10] GHz.
DomainConfig shift_source_preset(int n_users);
// Target: s in [600, 700] kbit, f in [10, 12] GHz.
DomainConfig shift_target_preset(int n_users);
// "shift-source" | "shift-target", plus one legacy alias each; throws
// ConfigError otherwise.
DomainConfig domain_preset(const std::string& name, int n_users);

struct SampleLabel {
  OffloadDecision v;
  Allocation r;
  double cost = 0.0;

  bool operator==(const SampleLabel&) const = default;
};

struct LabeledSample {
  ScenarioInstance x;
  std::optional<SampleLabel> label;
  DomainTag domain_tag = DomainTag::kSource;

  bool operator==(const LabeledSample&) const = default;
};

struct DatasetMeta {
  DomainTag domain_tag = DomainTag::kSource;
  std::uint64_t seed = 0;
  int n_users = 0;
  std::size_t count = 0;
  std::size_t attempts = 0;
  std::size_t discarded = 0;

  double discard_rate() const {
    return attempts == 0 ? 0.0 : static_cast<double>(discarded) / static_cast<double>(attempts);
  }
};

struct LabeledDataset {
  std::vector<LabeledSample> samples;
  DatasetMeta meta;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  // True when every sample carries a label.
  bool labeled() const;
  // Common user count; throws DimensionMismatch on a mix.
  int n_users() const;
};

ScenarioInstance sample_scenario(const DomainConfig& cfg, Rng& rng);

// Draw i uses the substream derive_seed(cfg.seed, i), so the output depends only
// on (cfg, count). Infeasible draws are discarded; throws DomainMisconfiguration
// once more than 95% of draws have been discarded.
LabeledDataset build_dataset(const DomainConfig& cfg, std::size_t count, bool with_labels,
                             DomainTag tag);

std::string to_jsonl_line(const LabeledSample& sample);
LabeledSample from_jsonl_line(const std::string& line, std::size_t line_no);

void write_jsonl(const std::filesystem::path& path, const LabeledDataset& ds);
LabeledDataset read_jsonl(const std::filesystem::path& path);
void write_metadata(const std::filesystem::path& path, const DatasetMeta& meta);

// Min-max scaling of the per-user (s, gamma, w, u, d, nu_loc, theta) and global
// (f_server, beta) features into the 7N+2 network input.
inline constexpr int kUserFeatures = 7;
inline constexpr int kGlobalFeatures = 2;
inline constexpr int kFeatureKinds = kUserFeatures + kGlobalFeatures;

constexpr int input_dim_for(int n_users) { return kUserFeatures * n_users + kGlobalFeatures; }

class FeatureScaler {
 public:
  FeatureScaler() = default;
  FeatureScaler(int n_users, std::vector<Range> bounds);

  // Bounds covering every listed domain.
  static FeatureScaler covering(const std::vector<DomainConfig>& domains);

  int n_users() const { return n_users_; }
  int input_dim() const { return input_dim_for(n_users_); }
  const std::vector<Range>& bounds() const { return bounds_; }

  std::vector<double> encode(const ScenarioInstance& scn) const;

  bool operator==(const FeatureScaler&) const = default;

 private:
  int n_users_ = 0;
  std::vector<Range> bounds_;  // kFeatureKinds entries
};

}  // namespace mtda

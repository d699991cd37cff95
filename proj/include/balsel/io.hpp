#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "balsel/core.hpp"
#include "balsel/scenario.hpp"

namespace balsel {

// FNV-1a 64-bit; used for config/manifest fingerprints in file headers.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hash_hex(std::uint64_t hash);
std::uint64_t parse_hash_hex(std::string_view hex);

// ---------------------------------------------------------------------------
// Active-label persistence.
//
// Text format (tab-separated, diffable):
//   balsel-active-labels v1
//   num_images=N height=H width=W num_classes=C manifest=<16 hex digits>
//   image_index<TAB>row<TAB>col<TAB>true_class<TAB>al_iteration
//   ...one record per pixel, sorted by (image_index, row, col)...
//
// Binary format: magic "BSLABv01", little-endian header (num_images u64,
// height u32, width u32, num_classes u32, manifest u64, record count u64),
// then 16-byte records (image u32, row u32, col u32, class u16, iter u16).
// ---------------------------------------------------------------------------

struct ActiveLabelsFile {
  ActiveLabelStore store;
  std::uint64_t manifest_hash = 0;
};

void write_active_labels_text(const std::filesystem::path& path, const ActiveLabelStore& store,
                              std::uint64_t manifest_hash);
void write_active_labels_binary(const std::filesystem::path& path, const ActiveLabelStore& store,
                                std::uint64_t manifest_hash);
// Detects the format from the leading magic.
ActiveLabelsFile read_active_labels(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Ground-truth persistence: magic "BSGTRv01", little-endian header as above
// (without the record count), then num_images dense H*W u16 label grids.
// ---------------------------------------------------------------------------

struct GroundTruthFile {
  DatasetShape shape;
  GroundTruth ground_truth;
  std::uint64_t manifest_hash = 0;
};

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& ground_truth,
                        const DatasetShape& shape, std::uint64_t manifest_hash);
GroundTruthFile read_ground_truth(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Declarative run configuration (JSON; schema documented in the README).
// Unknown keys are errors, not warnings.
// ---------------------------------------------------------------------------

struct RunConfig {
  ScenarioConfig scenario;
  BudgetSchedule schedule;
  std::int32_t histogram_bins = 20;
  // False when the file omitted scenario.noise_schedule; a default linear
  // ramp is generated after CLI overrides are applied.
  bool explicit_noise_schedule = false;
  // False when the file omitted schedule.goal_distribution (uniform default).
  bool explicit_goal = false;
};

RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text);

// Canonical JSON dump of the effective configuration; hashing input.
std::string canonical_config(const RunConfig& config);
// Canonical dump of the scenario section (with seed).
std::string canonical_scenario(const ScenarioConfig& scenario);
// Only the fields that determine the ground-truth maps: shape, frequencies,
// granularity, seed. Two runs are comparable iff these match; the noise
// schedule shapes predictions, not the truth.
std::string canonical_ground_truth_identity(const ScenarioConfig& scenario);

// Linear noise ramp from 0.9 down to 0.1 across the iterations; the default
// when a config omits the schedule.
std::vector<double> default_noise_schedule(std::int32_t num_al_iterations);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace balsel

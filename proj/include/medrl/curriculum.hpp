#pragma once

// Synthetic planted-signal curriculum over the four task kinds. Each sample
// carries four candidates (correct, near miss, wrong, malformed) in shuffled
// order; feature 0 separates the correct candidate by construction.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "medrl/policy.hpp"

namespace medrl::curriculum {

// [0] planted signal, [1] payload length / 100, [2] citation count,
// [3] entity overlap, [4..5] N(0,1) noise.
inline constexpr std::size_t kFeatureDim = 6;

inline constexpr std::array<const char*, 4> kExamLevels = {"Primary", "Intermediate",
                                                           "Associate Senior", "Senior"};

struct CurriculumConfig {
  // Per TaskKind in enum order: diagnosis, drug_use, test_ordering, exam_question.
  std::array<std::size_t, 4> counts = {160, 100, 160, 270};
  double multi_response_fraction = 0.2;
  double signal_lo = 0.7;
  double signal_hi = 1.0;
  double distractor_hi = 0.45;
  std::string id_prefix = "s";
  std::uint64_t seed = 0;
};

// Training split with the default volumes (690 samples).
CurriculumConfig training_config(std::uint64_t seed);
// Disjoint held-out split: quarter volumes, "h" ids, independent stream.
CurriculumConfig heldout_config(std::uint64_t seed);

std::vector<rl::Sample> planted_curriculum(const CurriculumConfig& config);

// Draws `total` samples with per-kind counts proportional to `ratios`
// (largest-remainder rounding), without replacement within a kind and with
// replacement only when a kind is exhausted. Output order follows the input.
std::vector<rl::Sample> sample_mixture(std::span<const rl::Sample> pool,
                                       std::span<const double> ratios, std::size_t total,
                                       std::uint64_t seed);

// Largest-remainder apportionment of `total` over `ratios` (which must be a
// non-negative vector with positive sum).
std::vector<std::size_t> apportion(std::span<const double> ratios, std::size_t total);

}  // namespace medrl::curriculum

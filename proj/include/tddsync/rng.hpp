#pragma once

// Counter-based seed derivation. Every random stream is keyed by
// (master seed, grid point, trial, purpose, index) and mixed with SplitMix64,
// so a trial's draws do not depend on which other trials or grid points ran
// or in which order.

#include <cstdint>
#include <initializer_list>

#include "tddsync/core_model.hpp"

namespace tddsync {

enum class StreamPurpose : std::uint64_t {
  placement = 1,
  shadowing = 2,
  inter_ap_channel = 3,
  phase_noise = 4,
  calibration_noise = 5,
  ue_pilot_noise = 6,
  small_scale = 7,
  test = 99,
};

std::uint64_t splitmix64(std::uint64_t x);

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys);

Rng make_stream(std::uint64_t trial_seed, StreamPurpose purpose, std::uint64_t index = 0);

}  // namespace tddsync

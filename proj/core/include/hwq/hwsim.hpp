// Copyright 2026 The hwq Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hwq/model.hpp"

// Parametric cost model of an Img2Col + multiplication-addition-tree FPGA
// accelerator. Cycle counts are deterministic functions of layer shape, bit
// widths and HwConfig; the energy unit is arbitrary and only meaningful
// relative to other numbers from the same config.
namespace hwq::hw {

// Defaults are loosely shaped after a small Zynq-7000 part: 140 BRAM36
// blocks, 64 of 72 bits used per word, at most 128 parallel multiplier
// inputs, and a 64-bit AXI port into the fabric.
struct HwConfig {
  std::int64_t bram_total = 140;
  std::int64_t bram_block_bits = 36864;
  std::int64_t word_bits = 64;
  std::int64_t lanes = 128;
  std::int64_t transfer_bandwidth = 8;  // bytes per cycle
  std::int64_t mac_init_latency = 4;    // cycles per tile product
  double post_process_cycles_per_element = 0.125;
  std::int64_t accumulator_bits = 32;   // width of written-back partial sums
  double static_power = 1.0;            // energy units per cycle
  double active_power_per_lane = 0.05;  // energy units per lane per cycle
  // BRAM blocks per unit of matrix side, per buffer.
  double bram_coe_weight = 0.25;
  double bram_coe_feature = 0.25;
  double bram_coe_output = 0.5;

  friend bool operator==(const HwConfig&, const HwConfig&) = default;
};

void validate(const HwConfig& config);

struct BramAllocation {
  std::int64_t weight = 0;
  std::int64_t feature = 0;
  std::int64_t output = 0;
  std::int64_t l_max = 0;

  std::int64_t total() const { return weight + feature + output; }
  friend bool operator==(const BramAllocation&, const BramAllocation&) = default;
};

// Doubling search from L = 8: keep doubling while the three buffers fit in
// bram_total, then step back once. Throws kInfeasible if L = 8 does not fit.
BramAllocation bram_allocate(const HwConfig& config);

bool is_power_of_two(std::int64_t v);
// Smallest power of two p with p * p >= l_max.
std::int64_t min_tile_side(std::int64_t l_max);

// Tile side for one matrix edge (see split_matrix).
std::int64_t split_side(std::int64_t side, std::int64_t l_max,
                        std::int64_t l_min);

struct TilePlan {
  std::int64_t l_max = 0;
  std::int64_t l_min = 0;
  std::vector<std::int64_t> sides;
  std::vector<std::int64_t> tiles;   // power of two in [l_min, l_max]
  std::vector<std::int64_t> padded;  // sides rounded up to a tile multiple
  std::vector<std::int64_t> grid;    // padded / tiles
};

// Power-of-two tiling of matrix edges. Edges below l_min use l_min;
// power-of-two edges up to l_max are used as-is; other edges up to l_max
// snap to the nearer neighbouring power of two (ties down); edges above
// l_max use l_max when (side mod l_max) > l_max / 2, else l_max / 2.
TilePlan split_matrix(std::span<const std::int64_t> sides, std::int64_t l_max,
                      std::int64_t l_min);

// Closed-form element traffic of an L x L by L x L product in M x M blocks:
// 3 * M^2 * (L / M)^3. M must divide L.
std::int64_t transfer_volume(std::int64_t side, std::int64_t block);

struct BlockedTransfer {
  std::int64_t weight_elements = 0;
  std::int64_t feature_elements = 0;
  std::int64_t result_elements = 0;
  std::int64_t tile_products = 0;

  std::int64_t total() const {
    return weight_elements + feature_elements + result_elements;
  }
};

// Walks the tile grid of (rows x inner) * (inner x cols) in tile x tile
// blocks and counts the elements moved: two operand tiles in and one result
// tile out per tile product. Dimensions are padded up to tile multiples.
BlockedTransfer simulate_blocked_transfer(std::int64_t rows, std::int64_t inner,
                                          std::int64_t cols, std::int64_t tile);

// Multiplication-addition tree timing: each tile product issues tile^2 dot
// products of length `tile`, each needing ceil(tile / lanes) tree feeds,
// plus a fill latency of ceil(log2(min(tile, lanes))) + mac_init_latency.
std::int64_t matmul_cycles(std::int64_t rows, std::int64_t inner,
                           std::int64_t cols, std::int64_t tile,
                           std::int64_t lanes, const HwConfig& config);

// Parallel multiplier inputs available at the given operand widths. Two
// 4-bit operands share one 8-bit lane slot.
std::int64_t effective_lanes(const HwConfig& config, int weight_bits,
                             int activation_bits);

struct LayerTiling {
  std::int64_t rows = 0;   // kernel-matrix rows (output channels)
  std::int64_t inner = 0;  // in_c * k_h * k_w, or in_features
  std::int64_t cols = 0;   // out_h * out_w, 1 for linear layers
  std::int64_t tile = 0;
  std::int64_t padded_rows = 0;
  std::int64_t padded_inner = 0;
  std::int64_t padded_cols = 0;

  friend bool operator==(const LayerTiling&, const LayerTiling&) = default;
};

struct LayerCost {
  std::int64_t compute = 0;
  std::int64_t transfer = 0;
  std::int64_t write_back = 0;
  std::int64_t post_process = 0;
  double energy = 0.0;
  std::int64_t lanes_used = 0;
  LayerTiling tiling;  // all zero for layers without a matmul

  std::int64_t total() const {
    return compute + transfer + write_back + post_process;
  }
  friend bool operator==(const LayerCost&, const LayerCost&) = default;
};

// Cost of one layer for a single input sample. Conv and linear layers run
// through the matmul path; BN, ReLU, pooling and residual adds only cost
// post-processing of their output elements.
LayerCost layer_cost(const Layer& layer, const FeatureShape& input,
                     int weight_bits, int activation_bits,
                     const HwConfig& config, const BramAllocation& bram);

enum class ActivationBits { kFollowWeights, kFixed8 };

struct ProfileRow {
  std::size_t index = 0;  // quantizable-layer index
  std::size_t layer = 0;  // model layer index
  int bits = 8;           // weight bits (activations per ActivationBits)
  LayerCost cost;

  friend bool operator==(const ProfileRow&, const ProfileRow&) = default;
};

// Per-(layer, bits) cost table. Non-weighted layers are folded into the
// post-process step of the closest preceding weighted layer (layers ahead
// of the first weighted layer go to the first one).
struct HwProfile {
  HwConfig config;
  BramAllocation bram;
  std::int64_t l_min = 0;
  ActivationBits activations = ActivationBits::kFollowWeights;
  std::vector<int> candidates;
  std::vector<ProfileRow> rows;  // ordered by (index, candidate order)

  const ProfileRow& at(std::size_t index, int bits) const;
  std::size_t layer_count() const;
  std::vector<double> cycles(int bits) const;
  std::vector<double> energy(int bits) const;

  friend bool operator==(const HwProfile&, const HwProfile&) = default;
};

HwProfile profile_model(const ModelGraph& model, std::span<const int> candidates,
                        const HwConfig& config,
                        ActivationBits activations = ActivationBits::kFollowWeights);

// Total simulated cycles and energy of a concrete bit assignment.
struct PlanCost {
  std::int64_t cycles = 0;
  double energy = 0.0;
};
PlanCost plan_cost(const ModelGraph& model, std::span<const int> weight_bits,
                   std::span<const int> activation_bits, const HwConfig& config);

// CSV columns: layer,bits,compute,transfer,write_back,post_process,
// total_cycles,energy. `layer` is the quantizable-layer index.
std::string profile_to_csv(const HwProfile& profile);
std::vector<ProfileRow> rows_from_csv(const std::string& csv);

nlohmann::json to_json(const HwConfig& config);
HwConfig config_from_json(const nlohmann::json& j);
nlohmann::json profile_to_json(const HwProfile& profile);
HwProfile profile_from_json(const nlohmann::json& j);

}  // namespace hwq::hw

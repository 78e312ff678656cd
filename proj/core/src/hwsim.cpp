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

#include "hwq/hwsim.hpp"

#include <algorithm>
#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>

#include "hwq/error.hpp"

namespace hwq::hw {

using nlohmann::json;

namespace {

constexpr std::int64_t kInitialSide = 8;
constexpr std::int64_t kSideCap = std::int64_t{1} << 30;

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

std::int64_t round_up(std::int64_t a, std::int64_t b) {
  return ceil_div(a, b) * b;
}

std::int64_t ceil_log2(std::int64_t v) {
  return v <= 1 ? 0
                : static_cast<std::int64_t>(
                      std::bit_width(static_cast<std::uint64_t>(v - 1)));
}

std::int64_t blocks(std::int64_t side, double coe) {
  return static_cast<std::int64_t>(std::ceil(static_cast<double>(side) * coe));
}

BramAllocation allocation_at(std::int64_t side, const HwConfig& c) {
  return {blocks(side, c.bram_coe_weight), blocks(side, c.bram_coe_feature),
          blocks(side, c.bram_coe_output), side};
}

std::int64_t post_cycles(std::int64_t elements, const HwConfig& config) {
  return static_cast<std::int64_t>(std::ceil(
      static_cast<double>(elements) * config.post_process_cycles_per_element));
}

void positive(bool ok, const char* field) {
  if (!ok) {
    throw Error(ErrorCode::kConfig,
                std::string("hw.") + field + " must be positive");
  }
}

const char* activation_name(ActivationBits a) {
  return a == ActivationBits::kFollowWeights ? "plan" : "8";
}

ActivationBits parse_activation(const std::string& s) {
  if (s == "plan") return ActivationBits::kFollowWeights;
  if (s == "8") return ActivationBits::kFixed8;
  throw Error(ErrorCode::kFormat, "activation mode must be \"plan\" or \"8\"");
}

json tiling_json(const LayerTiling& t) {
  return {{"rows", t.rows},
          {"inner", t.inner},
          {"cols", t.cols},
          {"tile", t.tile},
          {"padded", {t.padded_rows, t.padded_inner, t.padded_cols}}};
}

LayerTiling tiling_from(const json& j) {
  LayerTiling t;
  t.rows = j.at("rows").get<std::int64_t>();
  t.inner = j.at("inner").get<std::int64_t>();
  t.cols = j.at("cols").get<std::int64_t>();
  t.tile = j.at("tile").get<std::int64_t>();
  const auto p = j.at("padded").get<std::vector<std::int64_t>>();
  if (p.size() != 3) throw Error(ErrorCode::kFormat, "padded must have 3 dims");
  t.padded_rows = p[0];
  t.padded_inner = p[1];
  t.padded_cols = p[2];
  return t;
}

}  // namespace

void validate(const HwConfig& c) {
  positive(c.bram_total > 0, "bram_total");
  positive(c.bram_block_bits > 0, "bram_block_bits");
  positive(c.word_bits > 0, "word_bits");
  positive(c.lanes > 0, "lanes");
  positive(c.transfer_bandwidth > 0, "transfer_bandwidth");
  positive(c.mac_init_latency > 0, "mac_init_latency");
  positive(c.post_process_cycles_per_element > 0, "post_process_cycles_per_element");
  positive(c.accumulator_bits > 0, "accumulator_bits");
  positive(c.static_power > 0, "static_power");
  positive(c.active_power_per_lane > 0, "active_power_per_lane");
  positive(c.bram_coe_weight > 0, "bram_coe_weight");
  positive(c.bram_coe_feature > 0, "bram_coe_feature");
  positive(c.bram_coe_output > 0, "bram_coe_output");
  if (!is_power_of_two(c.lanes)) {
    throw Error(ErrorCode::kConfig, "hw.lanes must be a power of 2");
  }
}

BramAllocation bram_allocate(const HwConfig& config) {
  validate(config);
  std::int64_t side = kInitialSide;
  while (side <= kSideCap) {
    if (allocation_at(side, config).total() <= config.bram_total) {
      side *= 2;
    } else {
      break;
    }
  }
  side /= 2;
  if (side < kInitialSide) {
    throw Error(ErrorCode::kInfeasible,
                "BRAM budget of " + std::to_string(config.bram_total) +
                    " blocks cannot hold even 8-wide buffers (needs " +
                    std::to_string(allocation_at(kInitialSide, config).total()) +
                    ")");
  }
  return allocation_at(side, config);
}

bool is_power_of_two(std::int64_t v) {
  return v > 0 && std::has_single_bit(static_cast<std::uint64_t>(v));
}

std::int64_t min_tile_side(std::int64_t l_max) {
  if (l_max <= 0) throw Error(ErrorCode::kInvalidArgument, "l_max must be positive");
  std::int64_t p = 1;
  while (p * p < l_max) p *= 2;
  return p;
}

std::int64_t split_side(std::int64_t side, std::int64_t l_max,
                        std::int64_t l_min) {
  if (side <= 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "matrix side must be positive, got " + std::to_string(side));
  }
  if (!is_power_of_two(l_max) || !is_power_of_two(l_min) || l_min > l_max) {
    throw Error(ErrorCode::kInvalidArgument,
                "l_max and l_min must be powers of 2 with l_min <= l_max");
  }
  if (side > l_max) {
    const std::int64_t rem = side % l_max;
    return std::max(rem > l_max / 2 ? l_max : l_max / 2, l_min);
  }
  if (side < l_min) return l_min;
  if (is_power_of_two(side)) return side;
  const std::int64_t lo = std::bit_floor(static_cast<std::uint64_t>(side));
  const std::int64_t hi = 2 * lo;
  // side > (lo + hi) / 2, compared without the fraction
  const std::int64_t tile = 2 * side > lo + hi ? hi : lo;
  return std::min(tile, l_max);
}

TilePlan split_matrix(std::span<const std::int64_t> sides, std::int64_t l_max,
                      std::int64_t l_min) {
  TilePlan plan;
  plan.l_max = l_max;
  plan.l_min = l_min;
  for (std::int64_t side : sides) {
    const std::int64_t tile = split_side(side, l_max, l_min);
    plan.sides.push_back(side);
    plan.tiles.push_back(tile);
    plan.padded.push_back(round_up(side, tile));
    plan.grid.push_back(ceil_div(side, tile));
  }
  return plan;
}

std::int64_t transfer_volume(std::int64_t side, std::int64_t block) {
  if (side <= 0 || block <= 0 || side % block != 0) {
    throw Error(ErrorCode::kInvalidArgument, "block side must divide matrix side");
  }
  const std::int64_t n = side / block;
  return 3 * block * block * n * n * n;
}

BlockedTransfer simulate_blocked_transfer(std::int64_t rows, std::int64_t inner,
                                          std::int64_t cols, std::int64_t tile) {
  if (rows <= 0 || inner <= 0 || cols <= 0 || tile <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "matmul extents must be positive");
  }
  const std::int64_t tile_elems = tile * tile;
  BlockedTransfer t;
  for (std::int64_t r = 0; r < rows; r += tile) {
    for (std::int64_t c = 0; c < cols; c += tile) {
      for (std::int64_t k = 0; k < inner; k += tile) {
        t.weight_elements += tile_elems;
        t.feature_elements += tile_elems;
        t.result_elements += tile_elems;
        ++t.tile_products;
      }
    }
  }
  return t;
}

std::int64_t matmul_cycles(std::int64_t rows, std::int64_t inner,
                           std::int64_t cols, std::int64_t tile,
                           std::int64_t lanes, const HwConfig& config) {
  if (rows <= 0 || inner <= 0 || cols <= 0 || tile <= 0 || lanes <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "matmul extents must be positive");
  }
  const std::int64_t grid =
      ceil_div(rows, tile) * ceil_div(inner, tile) * ceil_div(cols, tile);
  const std::int64_t feeds = ceil_div(tile, lanes);
  const std::int64_t per_tile = tile * tile * feeds +
                                ceil_log2(std::min(tile, lanes)) +
                                config.mac_init_latency;
  return grid * per_tile;
}

std::int64_t effective_lanes(const HwConfig& config, int weight_bits,
                             int activation_bits) {
  const int widest = std::max(weight_bits, activation_bits);
  if (widest <= 0) throw Error(ErrorCode::kInvalidArgument, "bits must be positive");
  return widest <= 4 ? 2 * config.lanes : config.lanes;
}

LayerCost layer_cost(const Layer& layer, const FeatureShape& input,
                     int weight_bits, int activation_bits,
                     const HwConfig& config, const BramAllocation& bram) {
  LayerCost cost;
  LayerTiling& t = cost.tiling;
  if (const auto* conv = std::get_if<Conv2d>(&layer)) {
    const FeatureShape out = conv->output_shape(input);
    t.rows = static_cast<std::int64_t>(conv->out_channels);
    t.inner = static_cast<std::int64_t>(conv->in_channels * conv->kernel_h *
                                        conv->kernel_w);
    t.cols = static_cast<std::int64_t>(out.height * out.width);
  } else if (const auto* fc = std::get_if<Linear>(&layer)) {
    t.rows = static_cast<std::int64_t>(fc->out_features);
    t.inner = static_cast<std::int64_t>(fc->in_features);
    t.cols = 1;
  } else {
    FeatureShape out = input;
    if (const auto* pool = std::get_if<AvgPool>(&layer)) {
      out = pool->output_shape(input);
    }
    cost.post_process =
        post_cycles(static_cast<std::int64_t>(out.elements()), config);
    cost.energy = config.static_power * static_cast<double>(cost.total());
    return cost;
  }

  const std::int64_t l_min = min_tile_side(bram.l_max);
  t.tile = split_side(std::min({t.rows, t.inner, t.cols}), bram.l_max, l_min);
  t.padded_rows = round_up(t.rows, t.tile);
  t.padded_inner = round_up(t.inner, t.tile);
  t.padded_cols = round_up(t.cols, t.tile);

  const std::int64_t lanes =
      effective_lanes(config, weight_bits, activation_bits);
  cost.compute = matmul_cycles(t.rows, t.inner, t.cols, t.tile, lanes, config);

  const BlockedTransfer moved =
      simulate_blocked_transfer(t.rows, t.inner, t.cols, t.tile);
  const std::int64_t in_bytes =
      ceil_div(moved.weight_elements * weight_bits +
                   moved.feature_elements * activation_bits,
               8);
  const std::int64_t out_bytes =
      ceil_div(moved.result_elements * config.accumulator_bits, 8);
  cost.transfer = ceil_div(in_bytes, config.transfer_bandwidth);
  cost.write_back = ceil_div(out_bytes, config.transfer_bandwidth);
  cost.post_process = post_cycles(t.rows * t.cols, config);
  cost.lanes_used = std::min(t.tile, config.lanes);
  cost.energy = (config.static_power +
                 config.active_power_per_lane *
                     static_cast<double>(cost.lanes_used)) *
                static_cast<double>(cost.total());
  return cost;
}

namespace {

// Weighted layer that absorbs the post-processing of each model layer.
std::vector<std::size_t> owners(const ModelGraph& model,
                                const std::vector<std::size_t>& weighted) {
  std::vector<std::size_t> owner(model.layers.size(), 0);
  std::size_t current = 0;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    for (std::size_t q = current; q < weighted.size(); ++q) {
      if (weighted[q] == i) current = q;
    }
    owner[i] = current;
  }
  return owner;
}

LayerCost fused_cost(const ModelGraph& model,
                     const std::vector<FeatureShape>& shapes,
                     const std::vector<std::size_t>& owner, std::size_t q,
                     std::size_t layer, int wbits, int abits,
                     const HwConfig& config, const BramAllocation& bram) {
  const auto input_of = [&](std::size_t i) {
    return i == 0 ? model.input_shape : shapes[i - 1];
  };
  LayerCost cost =
      layer_cost(model.layers[layer], input_of(layer), wbits, abits, config, bram);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (owner[i] != q || has_weights(model.layers[i])) continue;
    cost.post_process +=
        layer_cost(model.layers[i], input_of(i), wbits, abits, config, bram)
            .post_process;
  }
  cost.energy = (config.static_power + config.active_power_per_lane *
                                           static_cast<double>(cost.lanes_used)) *
                static_cast<double>(cost.total());
  return cost;
}

}  // namespace

const ProfileRow& HwProfile::at(std::size_t index, int bits) const {
  for (const ProfileRow& row : rows) {
    if (row.index == index && row.bits == bits) return row;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "profile has no row for layer " + std::to_string(index) + " at " +
                  std::to_string(bits) + " bits");
}

std::size_t HwProfile::layer_count() const {
  return candidates.empty() ? 0 : rows.size() / candidates.size();
}

std::vector<double> HwProfile::cycles(int bits) const {
  std::vector<double> out;
  for (std::size_t i = 0; i < layer_count(); ++i) {
    out.push_back(static_cast<double>(at(i, bits).cost.total()));
  }
  return out;
}

std::vector<double> HwProfile::energy(int bits) const {
  std::vector<double> out;
  for (std::size_t i = 0; i < layer_count(); ++i) {
    out.push_back(at(i, bits).cost.energy);
  }
  return out;
}

HwProfile profile_model(const ModelGraph& model, std::span<const int> candidates,
                        const HwConfig& config, ActivationBits activations) {
  if (candidates.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "need at least one bit candidate");
  }
  HwProfile profile;
  profile.config = config;
  profile.bram = bram_allocate(config);
  profile.l_min = min_tile_side(profile.bram.l_max);
  profile.activations = activations;
  profile.candidates.assign(candidates.begin(), candidates.end());

  const auto shapes = infer_shapes(model);
  const auto weighted = quantizable_layers(model);
  const auto owner = owners(model, weighted);
  for (std::size_t q = 0; q < weighted.size(); ++q) {
    for (int bits : candidates) {
      const int abits = activations == ActivationBits::kFixed8 ? 8 : bits;
      profile.rows.push_back(
          {q, weighted[q], bits,
           fused_cost(model, shapes, owner, q, weighted[q], bits, abits, config,
                      profile.bram)});
    }
  }
  return profile;
}

PlanCost plan_cost(const ModelGraph& model, std::span<const int> weight_bits,
                   std::span<const int> activation_bits, const HwConfig& config) {
  const auto weighted = quantizable_layers(model);
  if (weight_bits.size() != weighted.size() ||
      activation_bits.size() != weighted.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "need one bit width per quantizable layer");
  }
  const BramAllocation bram = bram_allocate(config);
  const auto shapes = infer_shapes(model);
  const auto owner = owners(model, weighted);
  PlanCost total;
  for (std::size_t q = 0; q < weighted.size(); ++q) {
    const LayerCost c = fused_cost(model, shapes, owner, q, weighted[q],
                                   weight_bits[q], activation_bits[q], config,
                                   bram);
    total.cycles += c.total();
    total.energy += c.energy;
  }
  return total;
}

std::string profile_to_csv(const HwProfile& profile) {
  std::string out =
      "layer,bits,compute,transfer,write_back,post_process,total_cycles,energy\n";
  char line[256];
  for (const ProfileRow& r : profile.rows) {
    std::snprintf(line, sizeof(line),
                  "%zu,%d,%" PRId64 ",%" PRId64 ",%" PRId64 ",%" PRId64
                  ",%" PRId64 ",%.17g\n",
                  r.index, r.bits, r.cost.compute, r.cost.transfer,
                  r.cost.write_back, r.cost.post_process, r.cost.total(),
                  r.cost.energy);
    out += line;
  }
  return out;
}

std::vector<ProfileRow> rows_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  if (line.rfind("layer,bits,compute", 0) != 0) {
    throw Error(ErrorCode::kFormat, "profile CSV header missing");
  }
  std::vector<ProfileRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ProfileRow r;
    long long total = 0;
    long long compute = 0, transfer = 0, write_back = 0, post = 0;
    if (std::sscanf(line.c_str(), "%zu,%d,%lld,%lld,%lld,%lld,%lld,%lf",
                    &r.index, &r.bits, &compute, &transfer, &write_back, &post,
                    &total, &r.cost.energy) != 8) {
      throw Error(ErrorCode::kFormat, "bad profile CSV row: " + line);
    }
    r.cost.compute = compute;
    r.cost.transfer = transfer;
    r.cost.write_back = write_back;
    r.cost.post_process = post;
    if (r.cost.total() != total) {
      throw Error(ErrorCode::kFormat, "total_cycles is not the sum of steps");
    }
    rows.push_back(r);
  }
  return rows;
}

json to_json(const HwConfig& c) {
  return {{"bram_total", c.bram_total},
          {"bram_block_bits", c.bram_block_bits},
          {"word_bits", c.word_bits},
          {"lanes", c.lanes},
          {"transfer_bandwidth", c.transfer_bandwidth},
          {"mac_init_latency", c.mac_init_latency},
          {"post_process_cycles_per_element", c.post_process_cycles_per_element},
          {"accumulator_bits", c.accumulator_bits},
          {"static_power", c.static_power},
          {"active_power_per_lane", c.active_power_per_lane},
          {"bram_coe_weight", c.bram_coe_weight},
          {"bram_coe_feature", c.bram_coe_feature},
          {"bram_coe_output", c.bram_coe_output}};
}

HwConfig config_from_json(const json& j) {
  HwConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "hw must be an object");
  const json defaults = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) {
      throw Error(ErrorCode::kConfig, "unknown field hw." + key);
    }
    if (!value.is_number()) {
      throw Error(ErrorCode::kConfig, "hw." + key + " must be a number");
    }
  }
  const auto get_i = [&](const char* k, std::int64_t& dst) {
    if (!j.contains(k)) return;
    const json& v = j.at(k);
    if (!v.is_number_integer()) {
      throw Error(ErrorCode::kConfig, std::string("hw.") + k + " must be an integer");
    }
    dst = v.get<std::int64_t>();
  };
  const auto get_d = [&](const char* k, double& dst) {
    if (j.contains(k)) dst = j.at(k).get<double>();
  };
  get_i("bram_total", c.bram_total);
  get_i("bram_block_bits", c.bram_block_bits);
  get_i("word_bits", c.word_bits);
  get_i("lanes", c.lanes);
  get_i("transfer_bandwidth", c.transfer_bandwidth);
  get_i("mac_init_latency", c.mac_init_latency);
  get_d("post_process_cycles_per_element", c.post_process_cycles_per_element);
  get_i("accumulator_bits", c.accumulator_bits);
  get_d("static_power", c.static_power);
  get_d("active_power_per_lane", c.active_power_per_lane);
  get_d("bram_coe_weight", c.bram_coe_weight);
  get_d("bram_coe_feature", c.bram_coe_feature);
  get_d("bram_coe_output", c.bram_coe_output);
  validate(c);
  return c;
}

json profile_to_json(const HwProfile& p) {
  json rows = json::array();
  for (const ProfileRow& r : p.rows) {
    rows.push_back({{"index", r.index},
                    {"layer", r.layer},
                    {"bits", r.bits},
                    {"compute", r.cost.compute},
                    {"transfer", r.cost.transfer},
                    {"write_back", r.cost.write_back},
                    {"post_process", r.cost.post_process},
                    {"total_cycles", r.cost.total()},
                    {"energy", r.cost.energy},
                    {"lanes_used", r.cost.lanes_used},
                    {"tiling", tiling_json(r.cost.tiling)}});
  }
  return {{"format", "hwq-profile"},
          {"version", 1},
          {"config", to_json(p.config)},
          {"bram",
           {{"weight", p.bram.weight},
            {"feature", p.bram.feature},
            {"output", p.bram.output},
            {"l_max", p.bram.l_max}}},
          {"l_min", p.l_min},
          {"activation_bits", activation_name(p.activations)},
          {"candidates", p.candidates},
          {"rows", std::move(rows)}};
}

HwProfile profile_from_json(const json& j) {
  HwProfile p;
  try {
    if (j.value("format", std::string()) != "hwq-profile") {
      throw Error(ErrorCode::kFormat, "not an hwq-profile document");
    }
    p.config = config_from_json(j.at("config"));
    const json& b = j.at("bram");
    p.bram = {b.at("weight").get<std::int64_t>(), b.at("feature").get<std::int64_t>(),
              b.at("output").get<std::int64_t>(), b.at("l_max").get<std::int64_t>()};
    p.l_min = j.at("l_min").get<std::int64_t>();
    p.activations = parse_activation(j.at("activation_bits").get<std::string>());
    p.candidates = j.at("candidates").get<std::vector<int>>();
    for (const json& r : j.at("rows")) {
      ProfileRow row;
      row.index = r.at("index").get<std::size_t>();
      row.layer = r.at("layer").get<std::size_t>();
      row.bits = r.at("bits").get<int>();
      row.cost.compute = r.at("compute").get<std::int64_t>();
      row.cost.transfer = r.at("transfer").get<std::int64_t>();
      row.cost.write_back = r.at("write_back").get<std::int64_t>();
      row.cost.post_process = r.at("post_process").get<std::int64_t>();
      row.cost.energy = r.at("energy").get<double>();
      row.cost.lanes_used = r.at("lanes_used").get<std::int64_t>();
      row.cost.tiling = tiling_from(r.at("tiling"));
      if (row.cost.total() != r.at("total_cycles").get<std::int64_t>()) {
        throw Error(ErrorCode::kFormat, "total_cycles is not the sum of steps");
      }
      p.rows.push_back(row);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed profile: ") + e.what());
  }
  return p;
}

}  // namespace hwq::hw

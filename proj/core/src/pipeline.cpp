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

#include "hwq/pipeline.hpp"

#include <array>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <initializer_list>
#include <string>
#include <vector>

#include "hwq/dataset.hpp"
#include "hwq/engine.hpp"
#include "hwq/error.hpp"
#include "hwq/fixtures.hpp"
#include "hwq/model_io.hpp"

namespace hwq::pipeline {

using nlohmann::json;

namespace {

constexpr std::array<int, 2> kCandidates = {4, 8};

// ---------------------------------------------------------------- config

[[noreturn]] void config_error(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::kConfig, field + ": " + what);
}

void check_keys(const json& obj, const std::string& prefix,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) config_error(prefix, "must be an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || item.key() == a;
    if (!known) config_error(prefix + "." + item.key(), "unknown field");
  }
}

double get_number(const json& obj, const char* key, const std::string& prefix,
                  double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) config_error(prefix + "." + key, "must be a number");
  return v.get<double>();
}

std::uint64_t get_count(const json& obj, const char* key,
                        const std::string& prefix, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    config_error(prefix + "." + key, "must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string get_string(const json& obj, const char* key,
                       const std::string& prefix, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) config_error(prefix + "." + key, "must be a string");
  return v.get<std::string>();
}

fs::path resolve(const fs::path& base, const std::string& ref) {
  const fs::path p(ref);
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

// -------------------------------------------------------------- artifacts

fs::path artifact(const PipelineConfig& c, const char* name) {
  return c.output_dir / name;
}

fs::path require(const PipelineConfig& c, const char* name, const char* stage) {
  fs::path p = artifact(c, name);
  if (!fs::exists(p)) {
    throw Error(ErrorCode::kMissingArtifact,
                "missing " + p.string() + "; run `hwq " + stage + "` first");
  }
  return p;
}

void prepare_output(const PipelineConfig& c) {
  std::error_code ec;
  fs::create_directories(c.output_dir, ec);
  if (ec) {
    throw Error(ErrorCode::kIo, "cannot create " + c.output_dir.string() + ": " +
                                    ec.message());
  }
}

void say(const Logger& log, const std::string& line) {
  if (log) log(line);
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

void expect_format(const json& doc, const char* format, const fs::path& path) {
  if (!doc.is_object() || doc.value("format", std::string()) != format) {
    throw Error(ErrorCode::kFormat, path.string() + " is not a " + format + " file");
  }
}

Tensor load_batch(const PipelineConfig& c) {
  return load_tensor_file(require(c, "batch.json", "distill"), "hwq-batch").tensor;
}

json params_json(const std::optional<quant::QuantParams>& p) {
  if (!p) return nullptr;
  return {{"scale", p->scale},
          {"zero_point", p->zero_point},
          {"bits", p->bits},
          {"symmetric", p->symmetric}};
}

std::optional<quant::QuantParams> params_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  quant::QuantParams p;
  p.scale = j.at("scale").get<double>();
  p.zero_point = j.at("zero_point").get<std::int32_t>();
  p.bits = j.at("bits").get<int>();
  p.symmetric = j.at("symmetric").get<bool>();
  quant::validate(p);
  return p;
}

json cost_json(const hw::LayerCost& c) {
  return {{"compute", c.compute},
          {"transfer", c.transfer},
          {"write_back", c.write_back},
          {"post_process", c.post_process},
          {"total", c.total()}};
}

std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

LabeledSet eval_set(const PipelineConfig& c, const ModelGraph& model) {
  if (c.eval_dataset) {
    LabeledSet set = load_labeled_set(*c.eval_dataset);
    const FeatureShape& in = model.input_shape;
    const Shape want{set.images.rank() > 0 ? set.images.dim(0) : 0, in.channels,
                     in.height, in.width};
    if (set.images.shape() != want) {
      config_error("eval.dataset", "images are " + shape_string(set.images.shape()) +
                                       " but the model takes " + shape_string(want));
    }
    for (int label : set.labels) {
      if (label < 0 || static_cast<std::size_t>(label) >= model.class_count) {
        config_error("eval.dataset", "label " + std::to_string(label) +
                                         " is outside the model's classes");
      }
    }
    return set;
  }
  const DatasetSpec spec = fixtures::toy_eval_spec();
  if (!(spec.shape == model.input_shape) || spec.classes != model.class_count) {
    config_error("eval.dataset", "required for models other than the toy CNN");
  }
  return make_dataset(spec);
}

json variant_json(const Tensor& logits, const Tensor& reference,
                  const LabeledSet& set, std::uint64_t size_bits,
                  std::optional<hw::PlanCost> cost) {
  const double acc = top1_accuracy(logits, set.labels);
  const std::size_t n = set.labels.size();
  const auto errors = static_cast<std::size_t>(
      std::llround((1.0 - acc) * static_cast<double>(n)));
  json j = {{"accuracy", acc},
            {"misclassified", errors},
            {"agreement",
             1.0 - static_cast<double>(disagreements(logits, reference)) /
                       static_cast<double>(n)},
            {"size_bits", size_bits}};
  j["cycles"] = cost ? json(cost->cycles) : json(nullptr);
  j["energy"] = cost ? json(cost->energy) : json(nullptr);
  return j;
}

void write_report(const PipelineConfig& c, const ModelGraph& model,
                  const Logger& log) {
  const json sens = read_json(require(c, "sensitivity.json", "sense"));
  const hw::HwProfile profile =
      hw::profile_from_json(read_json(require(c, "profile.json", "profile")));
  const json plan = read_json(require(c, "plan.json", "plan"));
  const json eval = read_json(artifact(c, "eval.json"));
  const auto layers = quantizable_layers(model);
  const json& m = plan.at("metrics");
  const auto bits = plan.at("weight_bits").get<std::vector<int>>();

  json rows = json::array();
  std::string csv =
      "index,layer,kind,weights,omega,compute,transfer,write_back,"
      "post_process,cycles,energy,omega_hat,cycles_hat,energy_hat,merit,bits,"
      "size_bits,planned_cycles\n";
  for (std::size_t q = 0; q < layers.size(); ++q) {
    const Layer& layer = model.layers[layers[q]];
    const hw::LayerCost& c8 = profile.at(q, 8).cost;
    const std::uint64_t weights = weight_count(layer);
    const std::uint64_t size = weights * static_cast<std::uint64_t>(bits[q]);
    const std::int64_t planned = profile.at(q, bits[q]).cost.total();
    json row = {{"index", q},
                {"layer", layers[q]},
                {"kind", std::string(layer_kind_name(layer))},
                {"weights", weights},
                {"omega", m.at("omega")[q]},
                {"cycles", cost_json(c8)},
                {"energy", c8.energy},
                {"omega_hat", m.at("omega_hat")[q]},
                {"cycles_hat", m.at("cycles_hat")[q]},
                {"energy_hat", m.at("energy_hat")[q]},
                {"merit", m.at("merit")[q]},
                {"bits", bits[q]},
                {"size_bits", size},
                {"planned_cycles", planned}};
    char line[512];
    std::snprintf(
        line, sizeof(line),
        "%zu,%zu,%s,%" PRIu64 ",%.17g,%" PRId64 ",%" PRId64 ",%" PRId64
        ",%" PRId64 ",%" PRId64 ",%.17g,%.17g,%.17g,%.17g,%.17g,%d,%" PRIu64
        ",%" PRId64 "\n",
        q, layers[q], std::string(layer_kind_name(layer)).c_str(), weights,
        m.at("omega")[q].get<double>(), c8.compute, c8.transfer, c8.write_back,
        c8.post_process, c8.total(), c8.energy,
        m.at("omega_hat")[q].get<double>(), m.at("cycles_hat")[q].get<double>(),
        m.at("energy_hat")[q].get<double>(), m.at("merit")[q].get<double>(),
        bits[q], size, planned);
    csv += line;
    rows.push_back(std::move(row));
  }

  json settings = {{"method", sens.at("method")},
                   {"alpha", sens.at("alpha")},
                   {"batch_size", sens.at("batch_size")},
                   {"seed", sens.at("seed")},
                   {"beta", plan.at("beta")},
                   {"gamma", plan.at("gamma")},
                   {"activation_bits", plan.at("activation_mode")}};
  json totals = {{"size_bits", plan.at("achieved_bits")},
                 {"limit_bits", plan.at("limit_bits")},
                 {"size4_bits", plan.at("size4_bits")},
                 {"size8_bits", plan.at("size8_bits")},
                 {"objective", plan.at("objective")},
                 {"cycles", eval.at("planned").at("cycles")},
                 {"energy", eval.at("planned").at("energy")},
                 {"cycles_all8", eval.at("all8").at("cycles")},
                 {"cycles_all4", eval.at("all4").at("cycles")}};
  json eval_summary = eval;
  eval_summary.erase("format");
  eval_summary.erase("version");

  json report = {{"format", "hwq-report"},
                 {"version", 1},
                 {"config", to_json(c)},
                 {"model",
                  {{"layers", model.layers.size()},
                   {"quantizable_layers", layers.size()},
                   {"input_shape",
                    {model.input_shape.channels, model.input_shape.height,
                     model.input_shape.width}},
                   {"class_count", model.class_count}}},
                 {"settings", std::move(settings)},
                 {"layers", std::move(rows)},
                 {"totals", std::move(totals)},
                 {"eval", std::move(eval_summary)}};
  report["canonical_hash"] = canonical_hash(report);
  report["run_info"] = {
      {"timestamp", utc_timestamp()},
      {"solver_runtime_ms", plan.at("run_info").at("runtime_ms")}};
  write_json(artifact(c, "report.json"), report);
  write_text(artifact(c, "report.csv"), csv);
  say(log, "report: " + artifact(c, "report.json").string() + " (hash " +
               report["canonical_hash"].get<std::string>() + ")");
}

}  // namespace

// ------------------------------------------------------------------ config

PipelineConfig config_from_json(const json& doc, const fs::path& base_dir) {
  check_keys(doc, "config",
             {"model", "output_dir", "hw", "distill", "sensitivity", "planner",
              "eval"});
  PipelineConfig c;
  if (!doc.contains("model")) config_error("model", "required");
  c.model_ref = get_string(doc, "model", "config", "");
  c.model = resolve(base_dir, c.model_ref);
  c.output_dir = resolve(base_dir, get_string(doc, "output_dir", "config", "out"));

  try {
    c.hw = hw::config_from_json(doc.value("hw", json::object()));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kConfig) throw;
    throw Error(ErrorCode::kConfig, e.message());
  }

  if (doc.contains("distill")) {
    const json& d = doc.at("distill");
    check_keys(d, "distill", {"batch", "steps", "learning_rate", "seed"});
    c.distill.batch = get_count(d, "batch", "distill", c.distill.batch);
    c.distill.steps = get_count(d, "steps", "distill", c.distill.steps);
    c.distill.learning_rate =
        get_number(d, "learning_rate", "distill", c.distill.learning_rate);
    c.distill.seed = get_count(d, "seed", "distill", c.distill.seed);
  }

  if (doc.contains("sensitivity")) {
    const json& s = doc.at("sensitivity");
    check_keys(s, "sensitivity", {"method", "alpha", "seed", "naive_bits"});
    const std::string method = get_string(s, "method", "sensitivity", "mqe");
    try {
      c.sensitivity.method = sensitivity::parse_method(method);
    } catch (const Error&) {
      config_error("sensitivity.method", "must be \"mqe\" or \"naive\"");
    }
    c.sensitivity.alpha = get_number(s, "alpha", "sensitivity", c.sensitivity.alpha);
    c.sensitivity.seed = get_count(s, "seed", "sensitivity", c.sensitivity.seed);
    c.sensitivity.naive_bits = static_cast<int>(
        get_count(s, "naive_bits", "sensitivity",
                  static_cast<std::uint64_t>(c.sensitivity.naive_bits)));
  }

  if (doc.contains("planner")) {
    const json& p = doc.at("planner");
    check_keys(p, "planner",
               {"beta", "gamma", "ratio", "limit_bits", "activation_bits"});
    c.planner.beta = get_number(p, "beta", "planner", c.planner.beta);
    c.planner.gamma = get_number(p, "gamma", "planner", 1.0 - c.planner.beta);
    if (p.contains("limit_bits")) {
      c.planner.limit_bits = get_count(p, "limit_bits", "planner", 0);
      c.planner.ratio.reset();
    }
    if (p.contains("ratio")) {
      c.planner.ratio = get_number(p, "ratio", "planner", 0.5);
    }
    const std::string act = get_string(p, "activation_bits", "planner", "plan");
    try {
      c.activations = parse_activation_bits(act);
    } catch (const Error&) {
      config_error("planner.activation_bits", "must be \"plan\" or \"8\"");
    }
  }

  if (doc.contains("eval")) {
    const json& e = doc.at("eval");
    check_keys(e, "eval", {"dataset"});
    if (e.contains("dataset")) {
      c.eval_dataset_ref = get_string(e, "dataset", "eval", "");
      c.eval_dataset = resolve(base_dir, c.eval_dataset_ref);
    }
  }
  validate(c);
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) {
    throw Error(ErrorCode::kConfig, "config file not found: " + path.string());
  }
  json doc;
  try {
    doc = read_json(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, e.message());
  }
  return config_from_json(doc, path.parent_path());
}

json to_json(const PipelineConfig& c) {
  json planner = {{"beta", c.planner.beta},
                  {"gamma", c.planner.gamma},
                  {"activation_bits", std::string(to_string(c.activations))}};
  if (c.planner.ratio) {
    planner["ratio"] = *c.planner.ratio;
  } else if (c.planner.limit_bits) {
    planner["limit_bits"] = *c.planner.limit_bits;
  }
  json eval = json::object();
  if (c.eval_dataset) eval["dataset"] = c.eval_dataset_ref;
  return {{"model", c.model_ref},
          {"hw", hw::to_json(c.hw)},
          {"distill",
           {{"batch", c.distill.batch},
            {"steps", c.distill.steps},
            {"learning_rate", c.distill.learning_rate},
            {"seed", c.distill.seed}}},
          {"sensitivity",
           {{"method", std::string(sensitivity::to_string(c.sensitivity.method))},
            {"alpha", c.sensitivity.alpha},
            {"seed", c.sensitivity.seed},
            {"naive_bits", c.sensitivity.naive_bits}}},
          {"planner", std::move(planner)},
          {"eval", std::move(eval)}};
}

void validate(const PipelineConfig& c) {
  if (c.model_ref.empty()) config_error("model", "required");
  if (!fs::exists(c.model)) config_error("model", "file not found: " + c.model.string());
  if (c.eval_dataset && !fs::exists(*c.eval_dataset)) {
    config_error("eval.dataset", "file not found: " + c.eval_dataset->string());
  }
  hw::validate(c.hw);
  distill::validate(c.distill);
  if (!(c.sensitivity.alpha >= 0.0 && c.sensitivity.alpha <= 1.0)) {
    config_error("sensitivity.alpha", "must lie in [0, 1]");
  }
  const int nb = c.sensitivity.naive_bits;
  if (nb != 4 && nb != 8 && nb != 32) {
    config_error("sensitivity.naive_bits", "must be 4, 8 or 32");
  }
  plan::validate(c.planner);
}

void apply(PipelineConfig& c, const Overrides& o) {
  if (o.output_dir) c.output_dir = *o.output_dir;
  if (o.seed) {
    c.distill.seed = *o.seed;
    c.sensitivity.seed = *o.seed;
  }
  if (o.ratio) {
    c.planner.ratio = *o.ratio;
    c.planner.limit_bits.reset();
  }
  if (o.alpha) c.sensitivity.alpha = *o.alpha;
  if (o.beta) {
    c.planner.beta = *o.beta;
    c.planner.gamma = 1.0 - *o.beta;
  }
  if (o.method) c.sensitivity.method = *o.method;
  if (o.activations) c.activations = *o.activations;
  validate(c);
}

hw::ActivationBits parse_activation_bits(std::string_view text) {
  if (text == "plan") return hw::ActivationBits::kFollowWeights;
  if (text == "8") return hw::ActivationBits::kFixed8;
  throw Error(ErrorCode::kConfig, "activation bits must be \"plan\" or \"8\"");
}

std::string_view to_string(hw::ActivationBits mode) {
  return mode == hw::ActivationBits::kFollowWeights ? "plan" : "8";
}

// ------------------------------------------------------------ serialization

json sensitivity_to_json(const sensitivity::SensitivityReport& r) {
  return {{"format", "hwq-sensitivity"},
          {"version", 1},
          {"method", std::string(sensitivity::to_string(r.method))},
          {"alpha", r.alpha},
          {"seed", r.seed},
          {"batch_size", r.batch_size},
          {"bits", r.bits},
          {"omega", r.omega},
          {"counters",
           {{"quantizations", r.quantizations},
            {"mask_passes", r.mask_passes},
            {"forward_passes", r.forward_passes}}}};
}

sensitivity::SensitivityReport sensitivity_from_json(const json& doc) {
  sensitivity::SensitivityReport r;
  try {
    if (doc.value("format", std::string()) != "hwq-sensitivity") {
      throw Error(ErrorCode::kFormat, "not an hwq-sensitivity document");
    }
    r.method = sensitivity::parse_method(doc.at("method").get<std::string>());
    r.alpha = doc.at("alpha").get<double>();
    r.seed = doc.at("seed").get<std::uint64_t>();
    r.batch_size = doc.at("batch_size").get<std::size_t>();
    r.bits = doc.at("bits").get<int>();
    r.omega = doc.at("omega").get<std::vector<double>>();
    const json& c = doc.at("counters");
    r.quantizations = c.at("quantizations").get<std::uint64_t>();
    r.mask_passes = c.at("mask_passes").get<std::uint64_t>();
    r.forward_passes = c.at("forward_passes").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed sensitivity: ") + e.what());
  }
  return r;
}

quant::BitConfig bit_config(std::span<const int> weight_bits,
                            hw::ActivationBits mode) {
  quant::BitConfig cfg;
  cfg.weight_bits.assign(weight_bits.begin(), weight_bits.end());
  cfg.activation_bits = mode == hw::ActivationBits::kFixed8
                            ? std::vector<int>(weight_bits.size(), 8)
                            : cfg.weight_bits;
  return cfg;
}

void save_quantized(const fs::path& manifest, const quant::QuantizedModel& model) {
  std::vector<float> blob;
  json layers = json::array();
  for (std::size_t q = 0; q < model.layer_count(); ++q) {
    const quant::LayerQuant& lq = model.layer(q);
    json entry = {{"layer", lq.layer},
                  {"weight", params_json(lq.weight_params)},
                  {"activation", params_json(lq.activation_params)}};
    if (lq.weight_params) {
      entry["weights"] = {{"offset", blob.size()}, {"count", lq.weight_q.size()}};
      for (std::int32_t v : lq.weight_q.data()) blob.push_back(static_cast<float>(v));
    }
    layers.push_back(std::move(entry));
  }
  fs::path blob_path = manifest;
  blob_path.replace_extension(".bin");
  write_f32_blob(blob_path, blob);
  write_json(manifest, {{"format", "hwq-quantized"},
                        {"version", 1},
                        {"blob", blob_path.filename().string()},
                        {"blob_floats", blob.size()},
                        {"layers", std::move(layers)}});
}

quant::QuantizedModel load_quantized(const fs::path& manifest,
                                     const ModelGraph& base) {
  const json doc = read_json(manifest);
  expect_format(doc, "hwq-quantized", manifest);
  const auto blob = read_f32_blob(manifest.parent_path() /
                                  doc.at("blob").get<std::string>());
  const auto qlayers = quantizable_layers(base);
  std::vector<std::shared_ptr<const quant::LayerQuant>> layers;
  try {
    const json& entries = doc.at("layers");
    if (entries.size() != qlayers.size()) {
      throw Error(ErrorCode::kFormat, "quantized model does not match the base model");
    }
    for (std::size_t q = 0; q < qlayers.size(); ++q) {
      const json& e = entries[q];
      auto lq = std::make_shared<quant::LayerQuant>();
      lq->layer = e.at("layer").get<std::size_t>();
      if (lq->layer != qlayers[q]) {
        throw Error(ErrorCode::kFormat, "quantized layer order differs", lq->layer);
      }
      lq->weight_params = params_from(e.at("weight"));
      lq->activation_params = params_from(e.at("activation"));
      if (lq->weight_params) {
        const Tensor& w = *layer_weights(base.layers[lq->layer]);
        const auto offset = e.at("weights").at("offset").get<std::size_t>();
        const auto count = e.at("weights").at("count").get<std::size_t>();
        if (count != w.size() || offset + count > blob.size()) {
          throw Error(ErrorCode::kFormat, "length mismatch in quantized weights",
                      lq->layer);
        }
        std::vector<std::int32_t> ints(count);
        for (std::size_t i = 0; i < count; ++i) {
          ints[i] = static_cast<std::int32_t>(blob[offset + i]);
        }
        lq->weight_q = IntTensor(w.shape(), std::move(ints));
        lq->weight_dq = quant::dequantize(lq->weight_q, *lq->weight_params);
      }
      layers.push_back(std::move(lq));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed quantized model: ") + e.what());
  }
  return quant::QuantizedModel(std::make_shared<const ModelGraph>(base),
                               std::move(layers));
}

std::string canonical_hash(const json& doc) {
  json copy = doc;
  if (copy.is_object()) {
    copy.erase("run_info");
    copy.erase("canonical_hash");
  }
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : copy.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

// ------------------------------------------------------------------ stages

void run_distill(const PipelineConfig& c, const Logger& log) {
  const ModelGraph model = load_model(c.model);
  prepare_output(c);
  const distill::SyntheticBatch batch = distill::synthesize(model, c.distill);
  save_tensor_file(artifact(c, "batch.json"), "hwq-batch", batch.data,
                   {{"seed", batch.seed},
                    {"steps", c.distill.steps},
                    {"learning_rate", c.distill.learning_rate},
                    {"initial_loss", batch.initial_loss},
                    {"final_loss", batch.final_loss},
                    {"loss_history", batch.loss_history}});
  say(log, "distill: loss " + fmt("%.6g", batch.initial_loss) + " -> " +
               fmt("%.6g", batch.final_loss) + " over " +
               std::to_string(c.distill.steps) + " steps");
}

void run_sense(const PipelineConfig& c, const Logger& log) {
  const ModelGraph model = load_model(c.model);
  const Tensor batch = load_batch(c);
  const sensitivity::SensitivityReport report =
      c.sensitivity.method == sensitivity::Method::kMqe
          ? sensitivity::mqe_sensitivity(model, batch, c.sensitivity.alpha,
                                         c.sensitivity.seed)
          : sensitivity::naive_sensitivity(model, batch, c.sensitivity.naive_bits);
  write_json(artifact(c, "sensitivity.json"), sensitivity_to_json(report));
  say(log, "sense: " + std::string(sensitivity::to_string(report.method)) + " over " +
               std::to_string(report.omega.size()) + " layers, " +
               std::to_string(report.quantizations) + " quantization(s)");
}

void run_profile(const PipelineConfig& c, const Logger& log) {
  const ModelGraph model = load_model(c.model);
  prepare_output(c);
  const hw::HwProfile profile =
      hw::profile_model(model, kCandidates, c.hw, c.activations);
  write_json(artifact(c, "profile.json"), hw::profile_to_json(profile));
  write_text(artifact(c, "profile.csv"), hw::profile_to_csv(profile));
  say(log, "profile: L_max " + std::to_string(profile.bram.l_max) + ", L_min " +
               std::to_string(profile.l_min) + ", " +
               std::to_string(profile.rows.size()) + " rows");
}

void run_plan(const PipelineConfig& c, const Logger& log) {
  const ModelGraph model = load_model(c.model);
  const auto report =
      sensitivity_from_json(read_json(require(c, "sensitivity.json", "sense")));
  const hw::HwProfile profile =
      hw::profile_from_json(read_json(require(c, "profile.json", "profile")));
  if (!(profile.config == c.hw) || profile.activations != c.activations) {
    throw Error(ErrorCode::kMissingArtifact,
                "profile.json was produced with different hardware settings; "
                "run `hwq profile` first");
  }
  const plan::PlanOutcome out = plan::plan_pipeline(model, report, profile, c.planner);
  const plan::PlanResult& r = out.result;
  const quant::BitConfig bits = bit_config(r.bits, c.activations);
  json doc = {{"format", "hwq-plan"},
              {"version", 1},
              {"weight_bits", bits.weight_bits},
              {"activation_bits", bits.activation_bits},
              {"activation_mode", std::string(to_string(c.activations))},
              {"beta", c.planner.beta},
              {"gamma", c.planner.gamma},
              {"objective", r.objective},
              {"achieved_bits", r.achieved},
              {"limit_bits", r.limit},
              {"size4_bits", out.size4},
              {"size8_bits", out.size8},
              {"metrics",
               {{"omega", out.metrics.w},
                {"cycles", out.metrics.c},
                {"energy", out.metrics.e},
                {"omega_hat", out.metrics.w_hat},
                {"cycles_hat", out.metrics.c_hat},
                {"energy_hat", out.metrics.e_hat},
                {"merit", out.metrics.omega}}},
              {"solver", {{"cells", r.stats.cells}, {"unit_bits", r.stats.unit}}},
              {"run_info", {{"runtime_ms", r.stats.runtime_ms}}}};
  write_json(artifact(c, "plan.json"), doc);
  std::string plan_text;
  for (int b : r.bits) plan_text += std::to_string(b) + " ";
  say(log, "plan: [ " + plan_text + "] size " + std::to_string(r.achieved) + "/" +
               std::to_string(r.limit) + " bits, objective " +
               fmt("%.6g", r.objective));
}

void run_quantize(const PipelineConfig& c, const Logger& log) {
  const ModelGraph model = load_model(c.model);
  const json plan = read_json(require(c, "plan.json", "plan"));
  expect_format(plan, "hwq-plan", artifact(c, "plan.json"));
  quant::BitConfig bits;
  bits.weight_bits = plan.at("weight_bits").get<std::vector<int>>();
  bits.activation_bits = plan.at("activation_bits").get<std::vector<int>>();
  const Tensor batch = load_batch(c);
  const quant::QuantizedModel q = quant::quantize_model(model, bits, batch);
  save_quantized(artifact(c, "quantized.json"), q);
  say(log, "quantize: wrote " + artifact(c, "quantized.json").string());
}

void run_eval(const PipelineConfig& c, const Logger& log) {
  const ModelGraph model = load_model(c.model);
  const Tensor batch = load_batch(c);
  require(c, "sensitivity.json", "sense");
  require(c, "profile.json", "profile");
  const json plan = read_json(require(c, "plan.json", "plan"));
  const quant::QuantizedModel planned =
      load_quantized(require(c, "quantized.json", "quantize"), model);
  const LabeledSet set = eval_set(c, model);
  const std::size_t n = quantizable_layers(model).size();

  const Tensor fp = forward(model, set.images).logits;
  const auto uniform = [&](int b) {
    const quant::BitConfig cfg = bit_config(std::vector<int>(n, b), c.activations);
    const Tensor logits =
        quant::quantized_forward(quant::quantize_model(model, cfg, batch), set.images);
    return variant_json(
        logits, fp, set, quant::model_size(model, cfg).total_bits(),
        hw::plan_cost(model, cfg.weight_bits, cfg.activation_bits, c.hw));
  };
  quant::BitConfig pcfg;
  pcfg.weight_bits = plan.at("weight_bits").get<std::vector<int>>();
  pcfg.activation_bits = plan.at("activation_bits").get<std::vector<int>>();

  json doc = {{"format", "hwq-eval"},
              {"version", 1},
              {"samples", set.labels.size()},
              {"fp32", variant_json(fp, fp, set,
                                    quant::model_size(model, std::vector<int>(n, 32))
                                        .total_bits(),
                                    std::nullopt)},
              {"all8", uniform(8)},
              {"all4", uniform(4)},
              {"planned",
               variant_json(quant::quantized_forward(planned, set.images), fp, set,
                            quant::model_size(model, pcfg).total_bits(),
                            hw::plan_cost(model, pcfg.weight_bits,
                                          pcfg.activation_bits, c.hw))}};
  write_json(artifact(c, "eval.json"), doc);
  say(log, "eval: accuracy fp32 " + fmt("%.4f", doc["fp32"]["accuracy"]) +
               ", all-8 " + fmt("%.4f", doc["all8"]["accuracy"]) + ", all-4 " +
               fmt("%.4f", doc["all4"]["accuracy"]) + ", planned " +
               fmt("%.4f", doc["planned"]["accuracy"]));
  write_report(c, model, log);
}

void run_all(const PipelineConfig& c, const Logger& log) {
  run_distill(c, log);
  run_sense(c, log);
  run_profile(c, log);
  run_plan(c, log);
  run_quantize(c, log);
  run_eval(c, log);
}

}  // namespace hwq::pipeline

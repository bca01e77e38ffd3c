#include "dg/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "dg/container.hpp"
#include "dg/error.hpp"

namespace dg {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string tensor_file(const std::filesystem::path& json_path, std::size_t pl,
                        const char* which) {
  return json_path.stem().string() + "_p" + std::to_string(pl) + "_" + which + ".dgt";
}

}  // namespace

void save_checkpoint(const std::filesystem::path& json_path, const Network& net,
                     const CheckpointMeta& meta) {
  const std::filesystem::path dir = json_path.parent_path();
  ordered_json j;
  j["version"] = 1;
  j["arch"] = net.arch();
  j["input_shape"] = net.input_shape();
  j["classes"] = net.classes();
  j["seed"] = meta.seed;
  j["target_domain"] = meta.target_domain;
  j["dataset"] = meta.dataset;
  j["mode"] = meta.mode;
  j["enhancement"] = meta.enhancement;
  j["ema_beta"] = meta.ema_beta;
  j["steps_done"] = meta.steps_done;
  j["total_steps"] = meta.total_steps;
  ordered_json tensors = ordered_json::array();
  for (std::size_t pl = 0; pl < net.param_layer_count(); ++pl) {
    const std::string wfile = tensor_file(json_path, pl, "weight");
    const std::string bfile = tensor_file(json_path, pl, "bias");
    const Layer& l = net.param_layer_at(pl);
    save_tensor(dir / wfile, l.weight);
    save_tensor(dir / bfile, l.bias);
    ordered_json e;
    e["layer"] = pl + 1;
    e["kind"] = layer_kind_name(l.kind);
    e["weight"] = wfile;
    e["bias"] = bfile;
    tensors.push_back(std::move(e));
  }
  j["tensors"] = std::move(tensors);
  std::ofstream out(json_path, std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + json_path.string());
  out << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw FormatError("cannot open checkpoint " + json_path.string());
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const std::exception& e) {
    throw FormatError(json_path.string() + ": " + e.what());
  }
  Checkpoint ck;
  try {
    if (j.at("version").get<int>() != 1)
      throw FormatError(json_path.string() + ": unsupported checkpoint version");
    const std::string arch = j.at("arch").get<std::string>();
    const auto shape = j.at("input_shape").get<std::array<std::size_t, 3>>();
    const std::size_t classes = j.at("classes").get<std::size_t>();
    ck.meta.seed = j.at("seed").get<std::uint64_t>();
    ck.meta.target_domain = j.at("target_domain").get<int>();
    ck.meta.dataset = j.at("dataset").get<std::string>();
    ck.meta.mode = j.at("mode").get<std::string>();
    ck.meta.enhancement = j.at("enhancement").get<std::vector<double>>();
    ck.meta.ema_beta = j.at("ema_beta").get<double>();
    ck.meta.steps_done = j.at("steps_done").get<std::size_t>();
    ck.meta.total_steps = j.at("total_steps").get<std::size_t>();

    Rng init(ck.meta.seed);  // overwritten below; any stream works
    ck.net = Network::make(arch, shape, classes, init);
    const auto& tensors = j.at("tensors");
    if (tensors.size() != ck.net.param_layer_count())
      throw FormatError(json_path.string() + ": tensor list does not match the architecture");
    const std::filesystem::path dir = json_path.parent_path();
    for (std::size_t pl = 0; pl < ck.net.param_layer_count(); ++pl) {
      const auto& e = tensors[pl];
      const Tensor w = load_tensor(dir / e.at("weight").get<std::string>());
      const Tensor b = load_tensor(dir / e.at("bias").get<std::string>());
      std::vector<double> flat;
      flat.reserve(w.size() + b.size());
      flat.insert(flat.end(), w.values().begin(), w.values().end());
      flat.insert(flat.end(), b.values().begin(), b.values().end());
      if (flat.size() != ck.net.param_count(pl))
        throw FormatError(json_path.string() + ": parameter tensor shape mismatch at layer " +
                          std::to_string(pl + 1));
      ck.net.set_flat_params(pl, flat);
    }
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(json_path.string() + ": " + e.what());
  }
  return ck;
}

}  // namespace dg

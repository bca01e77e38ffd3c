// Command-line front end: dataset generation, training, evaluation,
// offline augmentation, flatness probing, and enhancement-vector dumps.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "dg/checkpoint.hpp"
#include "dg/dataset.hpp"
#include "dg/error.hpp"
#include "dg/harness.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dg::FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::pair<double, double> parse_pair(const std::string& s, const std::string& flag) {
  const auto comma = s.find(',');
  if (comma == std::string::npos)
    throw dg::ParamError(flag + ": expected two comma-separated values, got '" + s + "'");
  try {
    return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
  } catch (const std::exception&) {
    throw dg::ParamError(flag + ": expected two comma-separated values, got '" + s + "'");
  }
}

std::vector<dg::DomainSample> load_split(const std::filesystem::path& dir,
                                         const dg::DatasetManifest& manifest, int target_domain,
                                         const std::string& split) {
  const dg::LeaveOneOutSplit s = dg::leave_one_out_split(manifest, target_domain);
  if (split == "source") return dg::load_samples(dir, manifest, s.source);
  if (split == "target") return dg::load_samples(dir, manifest, s.target);
  throw dg::ParamError("split must be 'source' or 'target'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frequency-space contrastive training toolkit"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a synthetic multi-domain dataset");
  std::string gen_spec, gen_out;
  std::uint64_t gen_seed = 0;
  gen->add_option("--spec", gen_spec, "Generator config JSON (empty object for defaults)");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Generator seed")->required();

  // train
  auto* train = app.add_subcommand("train", "Train one model per the configured mode");
  std::string train_cfg, train_mode, train_out;
  int train_target = 0;
  std::uint64_t train_seed = 0;
  bool paper_scale = false;
  train->add_option("--config", train_cfg, "Experiment config JSON")->required();
  train->add_option("--mode", train_mode, "baseline | ddc | ddc+digb");
  train->add_option("--target-domain", train_target, "Held-out domain id");
  train->add_option("--seed", train_seed, "Run seed");
  train->add_option("--out", train_out, "Output directory");
  train->add_flag("--paper-scale", paper_scale, "Use paper-scale hyper-parameters");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  std::string ev_ckpt, ev_data, ev_split = "target";
  std::size_t ev_batch = 64;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint.json path")->required();
  ev->add_option("--dataset", ev_data, "Dataset directory")->required();
  ev->add_option("--split", ev_split, "source | target");
  ev->add_option("--batch", ev_batch, "Evaluation batch size");

  // augment
  auto* aug = app.add_subcommand("augment", "Write a contrastive copy of a dataset");
  std::string aug_data, aug_out, aug_alpha, aug_lambda;
  double aug_alpha_fixed = -1.0, aug_lambda_fixed = -1.0;
  std::uint64_t aug_seed = 0;
  aug->add_option("--dataset", aug_data, "Input dataset directory")->required();
  aug->add_option("--out", aug_out, "Output directory")->required();
  aug->add_option("--alpha-beta", aug_alpha, "Beta shapes for alpha as a,b");
  aug->add_option("--lambda-beta", aug_lambda, "Beta shapes for lambda as a,b");
  aug->add_option("--alpha-fixed", aug_alpha_fixed, "Pin alpha to a value in [0,1]");
  aug->add_option("--lambda-fixed", aug_lambda_fixed, "Pin lambda to a value in [0,1]");
  aug->add_option("--seed", aug_seed, "Augmentation seed")->required();

  // probe-flatness
  auto* probe = app.add_subcommand("probe-flatness", "Loss gap under parameter noise");
  std::string pr_ckpt, pr_data, pr_split = "target";
  double pr_sigma = 0.05;
  std::size_t pr_draws = 50;
  std::uint64_t pr_seed = 0;
  probe->add_option("--checkpoint", pr_ckpt, "checkpoint.json path")->required();
  probe->add_option("--dataset", pr_data, "Dataset directory")->required();
  probe->add_option("--sigma", pr_sigma, "Perturbation std dev")->required();
  probe->add_option("--draws", pr_draws, "Number of perturbation draws")->required();
  probe->add_option("--seed", pr_seed, "Probe seed")->required();
  probe->add_option("--split", pr_split, "source | target");

  // dump-enhancement
  auto* dump = app.add_subcommand("dump-enhancement", "Write the enhancement vector as CSV");
  std::string du_ckpt, du_out;
  dump->add_option("--checkpoint", du_ckpt, "checkpoint.json path")->required();
  dump->add_option("--out", du_out, "CSV output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const std::string text = gen_spec.empty() ? "{}" : read_file(gen_spec);
      const dg::GeneratorConfig cfg = dg::generator_config_from_json(text);
      const dg::DatasetManifest m = dg::generate_dataset(cfg, gen_seed, gen_out);
      std::printf("wrote %zu samples (%zu domains x %zu per domain) to %s\n", m.files.size(),
                  m.domains, cfg.per_domain, gen_out.c_str());
    } else if (train->parsed()) {
      dg::ExperimentConfig cfg = dg::experiment_config_from_json(read_file(train_cfg));
      if (paper_scale) dg::apply_paper_scale(cfg);
      if (!train_mode.empty()) cfg.mode = dg::mode_from_string(train_mode);
      if (train->count("--target-domain") > 0) cfg.target_domain = train_target;
      if (train->count("--seed") > 0) cfg.seed = train_seed;
      if (!train_out.empty()) cfg.out_dir = train_out;
      const dg::ExperimentResult res = dg::run_experiment(cfg);
      std::printf("mode=%s seed=%llu target=%d steps=%zu source_acc=%.4f target_acc=%.4f\n",
                  dg::mode_name(cfg.mode), static_cast<unsigned long long>(cfg.seed),
                  cfg.target_domain, res.steps, res.source_accuracy, res.target_accuracy);
    } else if (ev->parsed()) {
      const dg::Checkpoint ck = dg::load_checkpoint(ev_ckpt);
      const dg::DatasetManifest manifest = dg::load_manifest(ev_data);
      const auto samples = load_split(ev_data, manifest, ck.meta.target_domain, ev_split);
      std::printf("%.17g\n", dg::evaluate(ck.net, samples, ev_batch));
    } else if (aug->parsed()) {
      dg::AugmentConfig cfg;
      if (!aug_alpha.empty())
        std::tie(cfg.alpha_beta_a, cfg.alpha_beta_b) = parse_pair(aug_alpha, "--alpha-beta");
      if (!aug_lambda.empty())
        std::tie(cfg.lambda_beta_a, cfg.lambda_beta_b) = parse_pair(aug_lambda, "--lambda-beta");
      if (aug->count("--alpha-fixed") > 0) cfg.alpha_fixed = aug_alpha_fixed;
      if (aug->count("--lambda-fixed") > 0) cfg.lambda_fixed = aug_lambda_fixed;
      const dg::DatasetManifest m = dg::augment_corpus(aug_data, aug_out, cfg, aug_seed);
      std::printf("wrote %zu contrastive samples to %s\n", m.files.size(), aug_out.c_str());
    } else if (probe->parsed()) {
      const dg::Checkpoint ck = dg::load_checkpoint(pr_ckpt);
      const dg::DatasetManifest manifest = dg::load_manifest(pr_data);
      const auto samples = load_split(pr_data, manifest, ck.meta.target_domain, pr_split);
      dg::Rng rng(pr_seed);
      const dg::FlatnessReport rep = dg::flatness_probe(ck.net, samples, pr_sigma, pr_draws, rng);
      std::printf("mean_gap=%.10g std_error=%.10g sigma=%g draws=%zu split=%s\n", rep.mean_gap,
                  rep.std_error, rep.sigma, rep.draws, pr_split.c_str());
    } else if (dump->parsed()) {
      const dg::Checkpoint ck = dg::load_checkpoint(du_ckpt);
      dg::write_enhancement_csv(ck.meta.enhancement, du_out);
      const std::vector<double>& w = ck.meta.enhancement;
      const std::size_t half = w.size() / 2;
      double shallow = 0.0, deep = 0.0;
      for (std::size_t i = 0; i < half; ++i) shallow += w[i];
      for (std::size_t i = w.size() - half; i < w.size(); ++i) deep += w[i];
      if (half > 0)
        std::printf("wrote %zu layer weights to %s (mean shallow half %.4f, deep half %.4f)\n",
                    w.size(), du_out.c_str(), shallow / static_cast<double>(half),
                    deep / static_cast<double>(half));
    }
  } catch (const dg::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

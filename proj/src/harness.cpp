#include "dg/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "dg/checkpoint.hpp"
#include "dg/container.hpp"
#include "dg/error.hpp"
#include "dg/random.hpp"

namespace dg {

namespace {

using ordered_json = nlohmann::ordered_json;

// Child-stream indices: initialization, shuffling, and augmentation draw
// from separate streams so modes that skip augmentation still see the
// same initial parameters and batch order.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kAugmentStream = 2;

void validate(const ExperimentConfig& cfg) {
  if (cfg.dataset.empty()) throw ParamError("experiment: dataset path is required");
  if (cfg.out_dir.empty()) throw ParamError("experiment: output directory is required");
  if (cfg.batch_size < 2)
    throw ParamError("experiment: batch size must be at least 2 (donor sampling)");
  if (cfg.epochs < 1) throw ParamError("experiment: epochs must be positive");
  if (!(cfg.learning_rate > 0.0)) throw ParamError("experiment: learning rate must be positive");
  if (cfg.ema_beta < 0.0 || cfg.ema_beta > 1.0)
    throw ParamError("experiment: ema beta must be in [0, 1]");
  if (cfg.eval_batch < 1) throw ParamError("experiment: eval batch must be positive");
}

// Networks see pixels centered to [-1, 1]; augmentation and files stay in
// raw [0, 1] space.
double center_pixel(double v) { return (v - 0.5) * 2.0; }

Tensor stack_batch(const std::vector<DomainSample>& samples,
                   const std::vector<std::size_t>& order, std::size_t begin, std::size_t end) {
  const Tensor& first = samples[order[begin]].x;
  const std::size_t c = first.dim(0), h = first.dim(1), w = first.dim(2);
  Tensor out({end - begin, c, h, w});
  for (std::size_t i = begin; i < end; ++i) {
    const Tensor& x = samples[order[i]].x;
    double* dst = out.data() + (i - begin) * c * h * w;
    for (std::size_t k = 0; k < x.size(); ++k) dst[k] = center_pixel(x[k]);
  }
  return out;
}

// Donor for the sample at batch position pos: uniform over batch members
// of a different domain, falling back to any other member, then to self.
std::size_t pick_donor(const std::vector<DomainSample>& samples,
                       const std::vector<std::size_t>& order, std::size_t begin,
                       std::size_t end, std::size_t pos, Rng& rng) {
  std::vector<std::size_t> candidates;
  const int dom = samples[order[pos]].domain;
  for (std::size_t i = begin; i < end; ++i)
    if (i != pos && samples[order[i]].domain != dom) candidates.push_back(i);
  if (candidates.empty())
    for (std::size_t i = begin; i < end; ++i)
      if (i != pos) candidates.push_back(i);
  if (candidates.empty()) return pos;
  return candidates[sample_below(rng, candidates.size())];
}

std::vector<std::size_t> iota_order(std::size_t n) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  return order;
}

double mean_loss(const Network& net, const std::vector<DomainSample>& samples,
                 std::size_t batch) {
  const std::vector<std::size_t> order = iota_order(samples.size());
  double total = 0.0;
  for (std::size_t begin = 0; begin < samples.size(); begin += batch) {
    const std::size_t end = std::min(samples.size(), begin + batch);
    const Tensor x = stack_batch(samples, order, begin, end);
    std::vector<int> labels(end - begin);
    for (std::size_t i = begin; i < end; ++i) labels[i - begin] = samples[i].label;
    total += cross_entropy(net.forward(x), labels) * static_cast<double>(end - begin);
  }
  return total / static_cast<double>(samples.size());
}

std::size_t count_correct(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t bi = 0; bi < b; ++bi) {
    const double* row = logits.data() + bi * c;
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;
    if (static_cast<int>(best) + 1 == labels[bi]) ++correct;
  }
  return correct;
}

}  // namespace

Mode mode_from_string(const std::string& s) {
  if (s == "baseline") return Mode::baseline;
  if (s == "ddc") return Mode::ddc;
  if (s == "ddc+digb") return Mode::ddc_digb;
  throw ParamError("unknown mode '" + s + "' (expected baseline | ddc | ddc+digb)");
}

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::baseline: return "baseline";
    case Mode::ddc: return "ddc";
    case Mode::ddc_digb: return "ddc+digb";
  }
  return "?";
}

ExperimentConfig experiment_config_from_json(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const std::exception& e) {
    throw FormatError(std::string("experiment config: ") + e.what());
  }
  static const char* known[] = {"dataset",       "out_dir",      "target_domain",
                                "seed",          "mode",         "epochs",
                                "batch_size",    "learning_rate", "ema_beta",
                                "alpha_beta",    "lambda_beta",  "alpha_fixed",
                                "lambda_fixed",  "augment",      "arch",
                                "similarity_excludes_bias",      "eval_batch"};
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ParamError("experiment config: unknown field '" + key + "'");
  }
  ExperimentConfig cfg;
  if (j.contains("dataset")) cfg.dataset = j["dataset"].get<std::string>();
  if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("target_domain")) cfg.target_domain = j["target_domain"].get<int>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("mode")) cfg.mode = mode_from_string(j["mode"].get<std::string>());
  if (j.contains("epochs")) cfg.epochs = j["epochs"].get<std::size_t>();
  if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<std::size_t>();
  if (j.contains("learning_rate")) cfg.learning_rate = j["learning_rate"].get<double>();
  if (j.contains("ema_beta")) cfg.ema_beta = j["ema_beta"].get<double>();
  if (j.contains("alpha_beta")) {
    const auto v = j["alpha_beta"].get<std::vector<double>>();
    if (v.size() != 2) throw ParamError("experiment config: alpha_beta must be [a, b]");
    cfg.augment.alpha_beta_a = v[0];
    cfg.augment.alpha_beta_b = v[1];
  }
  if (j.contains("lambda_beta")) {
    const auto v = j["lambda_beta"].get<std::vector<double>>();
    if (v.size() != 2) throw ParamError("experiment config: lambda_beta must be [a, b]");
    cfg.augment.lambda_beta_a = v[0];
    cfg.augment.lambda_beta_b = v[1];
  }
  if (j.contains("alpha_fixed")) cfg.augment.alpha_fixed = j["alpha_fixed"].get<double>();
  if (j.contains("lambda_fixed")) cfg.augment.lambda_fixed = j["lambda_fixed"].get<double>();
  if (j.contains("augment")) {
    const std::string a = j["augment"].get<std::string>();
    if (a == "ddc")
      cfg.augment_kind = AugmentKind::ddc;
    else if (a == "identity")
      cfg.augment_kind = AugmentKind::identity;
    else
      throw ParamError("experiment config: augment must be 'ddc' or 'identity'");
  }
  if (j.contains("arch")) cfg.arch = j["arch"].get<std::string>();
  if (j.contains("similarity_excludes_bias"))
    cfg.similarity_excludes_bias = j["similarity_excludes_bias"].get<bool>();
  if (j.contains("eval_batch")) cfg.eval_batch = j["eval_batch"].get<std::size_t>();
  return cfg;
}

void apply_paper_scale(ExperimentConfig& cfg) {
  cfg.batch_size = 64;
  cfg.learning_rate = 0.002;
  cfg.epochs = 50;
  cfg.ema_beta = 0.999;
}

Network build_initial_network(const ExperimentConfig& cfg, const DatasetManifest& manifest) {
  Rng init = Rng(cfg.seed).split(kInitStream);
  return Network::make(cfg.arch, manifest.shape, manifest.classes, init);
}

double accuracy_from_logits(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    throw ShapeError("accuracy_from_logits: logits/label mismatch");
  return static_cast<double>(count_correct(logits, labels)) /
         static_cast<double>(logits.dim(0));
}

double evaluate(const Network& net, const std::vector<DomainSample>& samples,
                std::size_t batch) {
  if (samples.empty()) throw ParamError("evaluate: empty split");
  if (batch < 1) throw ParamError("evaluate: batch must be positive");
  const std::vector<std::size_t> order = iota_order(samples.size());
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < samples.size(); begin += batch) {
    const std::size_t end = std::min(samples.size(), begin + batch);
    const Tensor x = stack_batch(samples, order, begin, end);
    std::vector<int> labels(end - begin);
    for (std::size_t i = begin; i < end; ++i) labels[i - begin] = samples[i].label;
    correct += count_correct(net.forward(x), labels);
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  const DatasetManifest manifest = load_manifest(cfg.dataset);
  const LeaveOneOutSplit split = leave_one_out_split(manifest, cfg.target_domain);
  if (split.source.empty() || split.target.empty())
    throw ParamError("experiment: empty source or target split");
  const std::vector<DomainSample> source = load_samples(cfg.dataset, manifest, split.source);
  const std::vector<DomainSample> target = load_samples(cfg.dataset, manifest, split.target);

  std::filesystem::create_directories(cfg.out_dir);
  Network net = build_initial_network(cfg, manifest);
  Rng rng_shuffle = Rng(cfg.seed).split(kShuffleStream);
  Rng rng_augment = Rng(cfg.seed).split(kAugmentStream);

  const std::size_t n = source.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t layer_count = net.param_layer_count();

  EnhancementState state(layer_count, cfg.ema_beta);
  OptimizerConfig opt;
  opt.base_lr = cfg.learning_rate;
  opt.total_steps = cfg.epochs * steps_per_epoch;
  opt.digb_enabled = cfg.mode == Mode::ddc_digb;
  opt.similarity_excludes_bias = cfg.similarity_excludes_bias;

  const std::filesystem::path metrics_path = cfg.out_dir / "metrics.jsonl";
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw FormatError("cannot write " + metrics_path.string());

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Fisher-Yates from the shuffle stream.
    for (std::size_t i = n - 1; i > 0; --i)
      std::swap(order[i], order[sample_below(rng_shuffle, i + 1)]);

    double loss_sum = 0.0, loss_prime_sum = 0.0;
    std::size_t degenerate_steps = 0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const Tensor x = stack_batch(source, order, begin, end);
      std::vector<int> labels(end - begin);
      for (std::size_t i = begin; i < end; ++i) labels[i - begin] = source[order[i]].label;

      if (cfg.mode == Mode::baseline) {
        ForwardCache cache;
        const Tensor logits = net.forward(x, cache);
        loss_sum += cross_entropy(logits, labels);
        const LayerGradients g = net.backward(cache, labels);
        sgd_step(net, g, opt);
      } else {
        Tensor x_prime = x;
        if (cfg.augment_kind == AugmentKind::ddc) {
          const std::size_t chw = x.size() / (end - begin);
          for (std::size_t pos = begin; pos < end; ++pos) {
            const std::size_t donor = pick_donor(source, order, begin, end, pos, rng_augment);
            const MixParams p = sample_mix_params(rng_augment, cfg.augment);
            const Tensor xp =
                generate_contrastive(source[order[pos]].x, source[order[donor]].x, p);
            double* dst = x_prime.data() + (pos - begin) * chw;
            for (std::size_t k = 0; k < chw; ++k) dst[k] = center_pixel(xp[k]);
          }
        }
        const StepResult res = digb_step(net, x, x_prime, labels, state, opt);
        loss_sum += res.loss;
        loss_prime_sum += res.loss_prime;
        if (res.w_degenerate) ++degenerate_steps;
      }
    }

    ordered_json rec;
    rec["schema"] = 1;
    rec["epoch"] = epoch;
    rec["step"] = opt.step;
    rec["lr"] = cosine_lr(opt);
    rec["train_loss"] = loss_sum / static_cast<double>(steps_per_epoch);
    if (cfg.mode != Mode::baseline)
      rec["train_loss_prime"] = loss_prime_sum / static_cast<double>(steps_per_epoch);
    rec["source_acc"] = evaluate(net, source, cfg.eval_batch);
    rec["target_acc"] = evaluate(net, target, cfg.eval_batch);
    rec["w"] = cfg.mode == Mode::ddc_digb ? state.w : std::vector<double>(layer_count, 1.0);
    rec["w_degenerate_steps"] = degenerate_steps;
    metrics << rec.dump() << '\n';
    metrics.flush();
  }
  metrics.close();

  CheckpointMeta meta;
  meta.seed = cfg.seed;
  meta.target_domain = cfg.target_domain;
  meta.dataset = cfg.dataset.string();
  meta.mode = mode_name(cfg.mode);
  meta.enhancement =
      cfg.mode == Mode::ddc_digb ? state.w : std::vector<double>(layer_count, 1.0);
  meta.ema_beta = cfg.ema_beta;
  meta.steps_done = opt.step;
  meta.total_steps = opt.total_steps;
  const std::filesystem::path ckpt_path = cfg.out_dir / "checkpoint.json";
  save_checkpoint(ckpt_path, net, meta);

  const std::filesystem::path csv_path = cfg.out_dir / "enhancement.csv";
  write_enhancement_csv(meta.enhancement, csv_path);

  // Final accuracies come from the persisted (float32) parameters so that
  // a later `eval` on the checkpoint reproduces them exactly.
  const Checkpoint reloaded = load_checkpoint(ckpt_path);
  ExperimentResult result;
  result.source_accuracy = evaluate(reloaded.net, source, cfg.eval_batch);
  result.target_accuracy = evaluate(reloaded.net, target, cfg.eval_batch);
  result.steps = opt.step;
  result.checkpoint = ckpt_path;
  result.metrics = metrics_path;
  result.enhancement_csv = csv_path;

  ordered_json summary;
  summary["mode"] = mode_name(cfg.mode);
  summary["seed"] = cfg.seed;
  summary["target_domain"] = cfg.target_domain;
  summary["epochs"] = cfg.epochs;
  summary["steps"] = opt.step;
  summary["final_source_acc"] = result.source_accuracy;
  summary["final_target_acc"] = result.target_accuracy;
  summary["dataset"] = cfg.dataset.string();
  std::ofstream sum(cfg.out_dir / "summary.json", std::ios::trunc);
  sum << summary.dump(2) << '\n';
  return result;
}

FlatnessReport flatness_probe(const Network& net, const std::vector<DomainSample>& samples,
                              double sigma, std::size_t draws, Rng& rng) {
  if (samples.empty()) throw ParamError("flatness_probe: empty split");
  if (sigma < 0.0) throw ParamError("flatness_probe: sigma must be nonnegative");
  if (draws < 1) throw ParamError("flatness_probe: need at least one draw");
  constexpr std::size_t kChunk = 64;
  const double base = mean_loss(net, samples, kChunk);
  std::vector<double> gaps(draws);
  for (std::size_t k = 0; k < draws; ++k) {
    const Network perturbed = perturb_parameters(net, sigma, rng);
    gaps[k] = base - mean_loss(perturbed, samples, kChunk);
  }
  FlatnessReport rep;
  rep.sigma = sigma;
  rep.draws = draws;
  for (double g : gaps) rep.mean_gap += g;
  rep.mean_gap /= static_cast<double>(draws);
  if (draws > 1) {
    double ss = 0.0;
    for (double g : gaps) ss += (g - rep.mean_gap) * (g - rep.mean_gap);
    rep.std_error = std::sqrt(ss / static_cast<double>(draws - 1)) /
                    std::sqrt(static_cast<double>(draws));
  }
  return rep;
}

DatasetManifest augment_corpus(const std::filesystem::path& dataset_dir,
                               const std::filesystem::path& out_dir, const AugmentConfig& aug,
                               std::uint64_t seed) {
  const DatasetManifest m = load_manifest(dataset_dir);
  std::filesystem::create_directories(out_dir);

  std::vector<Tensor> tensors;
  tensors.reserve(m.files.size());
  for (const SampleRef& ref : m.files) tensors.push_back(load_sample_tensor(dataset_dir, ref));

  DatasetManifest out = m;
  out.seed = seed;
  const Rng master(seed);
  for (std::size_t i = 0; i < m.files.size(); ++i) {
    Rng rng = master.split(i);
    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < m.files.size(); ++j)
      if (m.files[j].domain != m.files[i].domain) candidates.push_back(j);
    if (candidates.empty())
      for (std::size_t j = 0; j < m.files.size(); ++j)
        if (j != i) candidates.push_back(j);
    const std::size_t donor =
        candidates.empty() ? i : candidates[sample_below(rng, candidates.size())];
    const MixParams p = sample_mix_params(rng, aug);
    const Tensor xp = generate_contrastive(tensors[i], tensors[donor], p);
    save_tensor(out_dir / m.files[i].path, xp);
    out.files[i].provenance = Provenance{i, donor, p.alpha, p.lambda};
  }
  save_manifest(out, out_dir);
  return out;
}

void write_enhancement_csv(const std::vector<double>& w, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "layer_index,weight\n";
  for (std::size_t l = 0; l < w.size(); ++l) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", l + 1, w[l]);
    out << buf;
  }
}

}  // namespace dg

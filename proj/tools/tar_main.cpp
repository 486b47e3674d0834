// Command-line front end: dataset synthesis, base training, sequential
// few-shot transfer, evaluation with optional photometric degradation,
// activation heatmaps, and checkpoint inspection.
//
// Every command accepts --config <file.json>; values from the file fill
// in any flag not given on the command line, so a manifest's config echo
// reproduces the run. Exit codes: 0 ok, 2 configuration or usage error,
// 3 file/format error, 4 numeric failure.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tar/cam.hpp"
#include "tar/checkpoint.hpp"
#include "tar/data.hpp"
#include "tar/dataset_io.hpp"
#include "tar/eval.hpp"
#include "tar/ppm.hpp"
#include "tar/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::uint64_t env_seed() {
  const char* s = std::getenv("TAR_SEED");
  if (!s || !*s) return 0;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument(s);
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw tar::ConfigError(std::string("TAR_SEED must be a non-negative integer, got '") + s +
                           "'");
  }
}

std::string iso_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Options shared by every run-producing command.
struct CommonOpts {
  std::uint64_t seed = env_seed();
  int threads = 1;
  std::string precision = "float";
  std::string out = "tar_out";
  std::string config_path;

  void apply() const {
    if (threads < 1) throw tar::ConfigError("--threads must be >= 1");
    if (precision != "float" && precision != "double") {
      throw tar::ConfigError("--precision must be float or double, got '" + precision + "'");
    }
    tar::set_num_threads(threads);
  }
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_precision = true) {
  cmd->add_option("--config", opts.config_path,
                  "JSON config file; explicit flags override file values");
  cmd->add_option("--seed", opts.seed, "Master seed (default: TAR_SEED env var, else 0)");
  cmd->add_option("--threads", opts.threads, "Worker threads; 1 is the deterministic path");
  if (with_precision) {
    cmd->add_option("--precision", opts.precision, "Numeric precision: float or double");
  }
  cmd->add_option("--out", opts.out, "Output directory for this run");
}

// Fills flag variables from the JSON config for every option the user
// did not pass explicitly, then re-runs the option callbacks. The merged
// view is top-level scalars overlaid by the object section named after
// the command; sections for other commands are ignored, so one file can
// configure a whole pipeline.
void apply_json_config(CLI::App* cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw tar::FormatError("cannot open config file '" + path + "'");
  json root;
  try {
    in >> root;
  } catch (const json::parse_error& e) {
    throw tar::FormatError("config file '" + path + "': " + e.what());
  }
  if (!root.is_object()) throw tar::FormatError("config file '" + path + "' must hold an object");

  json merged = json::object();
  for (const auto& [k, v] : root.items()) {
    if (!v.is_object()) merged[k] = v;  // object values are per-command sections
  }
  if (root.contains(cmd->get_name())) {
    for (const auto& [k, v] : root.at(cmd->get_name()).items()) merged[k] = v;
  }

  for (const auto& [key, value] : merged.items()) {
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (!opt) throw tar::ConfigError("config key '" + key + "' is not a flag of '" +
                                     cmd->get_name() + "'");
    if (opt->count() > 0) continue;  // explicit flag wins
    const std::string text = value.is_string() ? value.get<std::string>() : value.dump();
    opt->add_result(text);
    opt->run_callback();
  }
}

// Required settings can come from the flag or the config file, so the
// presence check has to run after the merge rather than inside CLI11.
void require_setting(const std::string& value, const char* flag) {
  if (value.empty()) {
    throw tar::ConfigError(std::string(flag) + " is required (flag or config file)");
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  tar::detail::write_file_atomic(path, text);
}

void write_manifest(const CommonOpts& opts, const std::string& command, const json& config,
                    const std::vector<std::string>& outputs, const std::string& started) {
  json m;
  m["command"] = command;
  m["config"] = config;
  m["seed"] = opts.seed;
  m["threads"] = opts.threads;
  m["tool_version"] = tar::kVersion;
  m["started"] = started;
  m["finished"] = iso_now();
  m["outputs"] = outputs;
  write_text_file(fs::path(opts.out) / "manifest.json", m.dump(2) + "\n");
}

tar::ArchConfig arch_from_name(const std::string& name) {
  if (name == "desk") return tar::ArchConfig::desk();
  if (name == "default") return tar::ArchConfig{};
  if (name == "micro") return tar::ArchConfig::micro();
  throw tar::ConfigError("unknown arch preset '" + name + "', expected desk, default or micro");
}

std::vector<tar::Domain> parse_domains(const std::string& text) {
  std::vector<tar::Domain> out;
  if (text == "all") return tar::fake_domains();
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    const tar::Domain d = tar::domain_from_name(item);  // unknown -> ConfigError with the list
    if (d == tar::Domain::real) {
      throw tar::ConfigError("evaluation domains must be fake domains, got 'real'");
    }
    out.push_back(d);
  }
  if (out.empty()) throw tar::ConfigError("no domains given (use 'all' or a comma list)");
  return out;
}

// ------------------------------------------------------------------
// synth

struct SynthOpts {
  CommonOpts common;
  std::int64_t size = 48;
  std::int64_t base_real = 1000, base_fake = 1000;
  std::int64_t fewshot_real = 50, fewshot_fake = 50;
  std::int64_t test_real = 250, test_fake = 250;
};

int cmd_synth(const SynthOpts& o) {
  const std::string started = iso_now();
  tar::SplitSpec spec{o.base_real, o.base_fake, o.fewshot_real,
                      o.fewshot_fake, o.test_real, o.test_fake};
  spec.validate();

  std::cerr << "rendering " << spec.reals_needed() << " real images at " << o.size << "px\n";
  const auto reals = tar::gen_real(tar::derive_seed(o.common.seed, 1), spec.reals_needed(), o.size);
  std::map<tar::Domain, std::vector<tar::ImageSample>> fakes;
  for (tar::Domain kind : tar::fake_domains()) {
    std::cerr << "rendering " << reals.size() << " " << tar::domain_name(kind) << " fakes\n";
    fakes.emplace(kind, tar::gen_fake(kind, reals, tar::derive_seed(o.common.seed, 2)));
  }
  const tar::Dataset ds =
      tar::make_splits(reals, fakes, spec, tar::derive_seed(o.common.seed, 3));
  tar::save_dataset(ds, o.common.out);

  const std::string manifest = (fs::path(o.common.out) / "manifest.csv").string();
  std::cout << manifest << "\n";

  json config{{"size", o.size},
              {"base-real", o.base_real}, {"base-fake", o.base_fake},
              {"fewshot-real", o.fewshot_real}, {"fewshot-fake", o.fewshot_fake},
              {"test-real", o.test_real}, {"test-fake", o.test_fake},
              {"out", o.common.out}};
  write_manifest(o.common, "synth", config, {manifest}, started);
  return 0;
}

// ------------------------------------------------------------------
// train

struct TrainOpts {
  CommonOpts common;
  std::string data;
  std::string domain = "blendswap";
  std::string arch = "desk";
  std::string variant = "full";
  std::string optimizer = "adam";
  std::int64_t epochs = 30;
  std::int64_t batch = 32;
  std::int64_t patience = 0;
  double lr = 1e-3;
  double lambda = 0.1;
};

template <typename T>
int run_train(const TrainOpts& o) {
  const std::string started = iso_now();
  require_setting(o.data, "--data");
  const tar::Dataset ds = tar::load_dataset(o.data);
  const tar::Domain domain = tar::domain_from_name(o.domain);
  if (domain == tar::Domain::real) throw tar::ConfigError("--domain must be a fake domain");
  const auto samples = tar::labeled_set(ds, domain, tar::Split::base);

  auto model = tar::build_model<T>(arch_from_name(o.arch), o.common.seed,
                                   tar::variant_from_name(o.variant));
  tar::TrainConfig<T> config;
  config.optimizer.kind = tar::optimizer_kind_from_name(o.optimizer);
  config.optimizer.lr = static_cast<T>(o.lr);
  config.weights.lambda = static_cast<T>(o.lambda);
  config.epochs = o.epochs;
  config.batch_size = o.batch;
  config.patience = o.patience;
  config.seed = tar::derive_seed(o.common.seed, 17);

  std::cerr << "training on " << samples.size() << " " << o.domain << " base samples\n";
  const tar::History history =
      tar::train_base(model, samples, config, [&](const tar::EpochStats& e) {
        std::cerr << "epoch " << e.epoch << "/" << o.epochs << " l_total=" << e.l_total
                  << " l_activ=" << e.l_activ << " l_recon=" << e.l_recon
                  << " train_acc=" << e.train_acc << "\n";
      });

  fs::create_directories(o.common.out);
  const fs::path ckpt = fs::path(o.common.out) / "model.tarc";
  const fs::path hist = fs::path(o.common.out) / "history.csv";
  tar::save_checkpoint(ckpt, model);
  write_text_file(hist, tar::history_to_csv(history));
  std::cout << ckpt.string() << "\n";

  json config_echo{{"data", o.data},       {"domain", o.domain},     {"arch", o.arch},
                   {"variant", o.variant}, {"optimizer", o.optimizer}, {"epochs", o.epochs},
                   {"batch", o.batch},     {"patience", o.patience}, {"lr", o.lr},
                   {"lambda", o.lambda},   {"precision", o.common.precision},
                   {"out", o.common.out}};
  write_manifest(o.common, "train", config_echo, {ckpt.string(), hist.string()}, started);
  return 0;
}

// ------------------------------------------------------------------
// transfer

struct TransferOpts {
  CommonOpts common;
  std::string checkpoint;
  std::string data;
  std::string base_domain;
  std::string seq;
  std::int64_t shots = 50;
  std::int64_t epochs = 100;
  std::int64_t batch = 10;
  double lr = 1e-3;
  double lr_mult = 1.0;
  double lambda = 0.1;
  bool allow_any_shots = false;
};

template <typename T>
int run_transfer(const TransferOpts& o) {
  const std::string started = iso_now();
  require_setting(o.checkpoint, "--checkpoint");
  require_setting(o.data, "--data");
  require_setting(o.base_domain, "--base-domain");
  require_setting(o.seq, "--seq");
  const tar::Dataset ds = tar::load_dataset(o.data);
  const tar::Domain base_domain = tar::domain_from_name(o.base_domain);
  if (base_domain == tar::Domain::real) {
    throw tar::ConfigError("--base-domain must be a fake domain");
  }
  const auto loaded = tar::load_checkpoint<T>(o.checkpoint);

  tar::TransferPlan<T> plan;
  plan.targets = parse_domains(o.seq);
  plan.config.shots = o.shots;
  plan.config.allow_any_count = o.allow_any_shots;
  plan.config.lr_multiplier = o.lr_mult;
  plan.config.train.epochs = o.epochs;
  plan.config.train.batch_size = o.batch;
  plan.config.train.optimizer.lr = static_cast<T>(o.lr);
  plan.config.train.weights.lambda = static_cast<T>(o.lambda);
  plan.config.train.seed = tar::derive_seed(o.common.seed, 23);

  const auto result = tar::sequence_transfer(loaded.model, base_domain, plan, ds,
                                             [](const tar::EpochStats& e) {
                                               if (e.epoch % 25 == 0) {
                                                 std::cerr << "  epoch " << e.epoch
                                                           << " l_total=" << e.l_total << "\n";
                                               }
                                             });

  fs::create_directories(o.common.out);
  std::vector<std::string> outputs;
  std::vector<tar::AccuracyMatrix> rows;
  rows.push_back(tar::zero_shot_matrix(loaded.model, ds, base_domain));
  for (std::size_t i = 0; i < result.snapshots.size(); ++i) {
    const auto& snap = result.snapshots[i];
    rows.push_back(snap.matrix);
    const fs::path hist =
        fs::path(o.common.out) / ("stage" + std::to_string(i + 1) + "_history.csv");
    write_text_file(hist, tar::history_to_csv(snap.history));
    outputs.push_back(hist.string());
  }
  const fs::path ckpt = fs::path(o.common.out) / "model.tarc";
  tar::save_checkpoint(ckpt, result.model);
  outputs.push_back(ckpt.string());

  const tar::AccuracyMatrix table = tar::stack_matrices(rows);
  const fs::path csv = fs::path(o.common.out) / "table.csv";
  const fs::path md = fs::path(o.common.out) / "table.md";
  write_text_file(csv, tar::matrix_to_csv(table));
  write_text_file(md, tar::matrix_to_markdown(table));
  outputs.push_back(csv.string());
  outputs.push_back(md.string());

  std::cout << tar::matrix_to_markdown(table);

  json config_echo{{"checkpoint", o.checkpoint}, {"data", o.data},
                   {"base-domain", o.base_domain}, {"seq", o.seq},
                   {"shots", o.shots},           {"epochs", o.epochs},
                   {"batch", o.batch},           {"lr", o.lr},
                   {"lr-mult", o.lr_mult},       {"lambda", o.lambda},
                   {"allow-any-shots", o.allow_any_shots},
                   {"precision", o.common.precision}, {"out", o.common.out}};
  write_manifest(o.common, "transfer", config_echo, outputs, started);
  return 0;
}

// ------------------------------------------------------------------
// eval

struct EvalOpts {
  CommonOpts common;
  std::string checkpoint;
  std::string data;
  std::string domains = "all";
  std::string row_name = "model";
  double brightness = 0.0;
  double contrast = 1.0;
};

template <typename T>
int run_eval(const EvalOpts& o) {
  const std::string started = iso_now();
  require_setting(o.checkpoint, "--checkpoint");
  require_setting(o.data, "--data");
  const tar::Dataset ds = tar::load_dataset(o.data);
  const auto loaded = tar::load_checkpoint<T>(o.checkpoint);
  const auto domains = parse_domains(o.domains);

  tar::AccuracyMatrix table;
  table.row_names.push_back(o.row_name);
  table.cells.emplace_back();
  std::ostringstream records;
  records << "id,domain,a1,a2,predicted,actual\n";
  for (tar::Domain d : domains) {
    auto samples = tar::labeled_set(ds, d, tar::Split::test);
    for (auto& s : samples) {
      // Brightness first, then contrast: the documented composition order.
      s.pixels = tar::adjust_contrast(tar::adjust_brightness(s.pixels, o.brightness), o.contrast);
    }
    const tar::EvalResult result = tar::evaluate(loaded.model, samples);
    table.columns.push_back(d);
    table.cells[0].push_back(result.accuracy);
    for (const auto& rec : result.records) {
      records << rec.id << "," << tar::domain_name(rec.domain) << ","
              << tar::detail::format_cell(rec.a1) << "," << tar::detail::format_cell(rec.a2)
              << "," << tar::label_name(rec.predicted) << "," << tar::label_name(rec.actual)
              << "\n";
    }
  }

  fs::create_directories(o.common.out);
  const fs::path csv = fs::path(o.common.out) / "report.csv";
  const fs::path md = fs::path(o.common.out) / "report.md";
  const fs::path rec = fs::path(o.common.out) / "records.csv";
  write_text_file(csv, tar::matrix_to_csv(table));
  write_text_file(md, tar::matrix_to_markdown(table));
  write_text_file(rec, records.str());
  std::cout << tar::matrix_to_csv(table);

  json config_echo{{"checkpoint", o.checkpoint}, {"data", o.data}, {"domains", o.domains},
                   {"row-name", o.row_name},     {"brightness", o.brightness},
                   {"contrast", o.contrast},     {"precision", o.common.precision},
                   {"out", o.common.out}};
  write_manifest(o.common, "eval", config_echo, {csv.string(), md.string(), rec.string()},
                 started);
  return 0;
}

// ------------------------------------------------------------------
// cam

struct CamOpts {
  CommonOpts common;
  std::string checkpoint;
  std::string image;
  std::string layer = tar::kDefaultCamLayer;
  double alpha = 0.5;
};

template <typename T>
int run_cam(const CamOpts& o) {
  const std::string started = iso_now();
  require_setting(o.checkpoint, "--checkpoint");
  require_setting(o.image, "--image");
  const auto loaded = tar::load_checkpoint<T>(o.checkpoint);
  const tar::Tensor<float> image_f = tar::load_ppm(o.image);
  tar::Tensor<T> image(image_f.shape());
  for (std::int64_t i = 0; i < image_f.numel(); ++i) image[i] = static_cast<T>(image_f[i]);

  const tar::Tensor<T> heat = tar::cam_map(loaded.model, image, o.layer);
  const tar::Tensor<T> blended = tar::cam_overlay(image, heat, o.alpha);

  const std::int64_t s = heat.dim(0);
  tar::Tensor<float> heat_rgb({3, s, s});
  tar::Tensor<float> overlay_rgb({3, s, s});
  for (std::int64_t i = 0; i < heat.numel(); ++i) {
    const float v = static_cast<float>(heat[i]) * 2.0f - 1.0f;  // grayscale in [-1,1]
    for (std::int64_t c = 0; c < 3; ++c) {
      heat_rgb[c * heat.numel() + i] = v;
      overlay_rgb[c * heat.numel() + i] = static_cast<float>(blended[c * heat.numel() + i]);
    }
  }

  fs::create_directories(o.common.out);
  const fs::path heat_path = fs::path(o.common.out) / "heatmap.ppm";
  const fs::path overlay_path = fs::path(o.common.out) / "overlay.ppm";
  tar::save_ppm(heat_rgb, heat_path.string());
  tar::save_ppm(overlay_rgb, overlay_path.string());
  std::cout << heat_path.string() << "\n" << overlay_path.string() << "\n";

  json config_echo{{"checkpoint", o.checkpoint}, {"image", o.image},
                   {"layer", o.layer},           {"alpha", o.alpha},
                   {"precision", o.common.precision}, {"out", o.common.out}};
  write_manifest(o.common, "cam", config_echo, {heat_path.string(), overlay_path.string()},
                 started);
  return 0;
}

// ------------------------------------------------------------------
// inspect

int cmd_inspect(const std::string& path) {
  const auto loaded = tar::load_checkpoint<float>(path);  // checksum verified on load
  const auto& model = loaded.model;
  std::cout << "checkpoint: " << path << "\n";
  std::cout << "checksum: ok\n";
  std::cout << "format version: " << tar::kCheckpointVersion << "\n";
  std::cout << "variant: " << tar::variant_name(model.variant) << "\n";
  std::cout << "input: " << model.config.input_channels << "x" << model.config.input_size << "x"
            << model.config.input_size << "\n";
  std::cout << "optimizer moments: " << (loaded.has_moments ? "present" : "absent") << "\n";
  std::cout << tar::model_summary(model.config, model.variant);
  return 0;
}

// Builds the option tree and dispatches; may throw the library's error
// types, which main maps onto the documented exit codes. CommonOpts
// default construction reads TAR_SEED, so even that happens in here.
int run_cli(int argc, char** argv) {
  CLI::App app{"Transferable autoencoder detector: synthesize data, train, transfer, evaluate"};
  app.require_subcommand(1);

  SynthOpts synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Render the synthetic multi-domain dataset");
  add_common(synth_cmd, synth.common, false);
  synth_cmd->add_option("--size", synth.size, "Image side length in pixels");
  synth_cmd->add_option("--base-real", synth.base_real, "Real samples in the base split");
  synth_cmd->add_option("--base-fake", synth.base_fake, "Fake samples per domain, base split");
  synth_cmd->add_option("--fewshot-real", synth.fewshot_real, "Real samples in the few-shot split");
  synth_cmd->add_option("--fewshot-fake", synth.fewshot_fake,
                        "Fake samples per domain, few-shot split");
  synth_cmd->add_option("--test-real", synth.test_real, "Real samples in the test split");
  synth_cmd->add_option("--test-fake", synth.test_fake, "Fake samples per domain, test split");

  TrainOpts train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a base model on one fake domain");
  add_common(train_cmd, train.common);
  train_cmd->add_option("--data", train.data, "Dataset root directory (required)");
  train_cmd->add_option("--domain", train.domain, "Fake domain of the base training split");
  train_cmd->add_option("--arch", train.arch, "Architecture preset: desk, default or micro");
  train_cmd->add_option("--variant", train.variant,
                        "full, leaky-no-residual or relu-no-residual");
  train_cmd->add_option("--optimizer", train.optimizer, "sgd or adam");
  train_cmd->add_option("--epochs", train.epochs, "Training epochs");
  train_cmd->add_option("--batch", train.batch, "Batch size (>= 2)");
  train_cmd->add_option("--patience", train.patience, "Early-stop patience; 0 disables");
  train_cmd->add_option("--lr", train.lr, "Learning rate");
  train_cmd->add_option("--lambda", train.lambda, "Reconstruction loss weight");

  TransferOpts transfer;
  CLI::App* transfer_cmd =
      app.add_subcommand("transfer", "Few-shot transfer through a domain sequence");
  add_common(transfer_cmd, transfer.common);
  transfer_cmd->add_option("--checkpoint", transfer.checkpoint, "Source model checkpoint (required)");
  transfer_cmd->add_option("--data", transfer.data, "Dataset root directory (required)");
  transfer_cmd->add_option("--base-domain", transfer.base_domain,
                           "Domain the source model was trained on (required)");
  transfer_cmd->add_option("--seq", transfer.seq,
                           "Comma-separated target domains, in order (required)");
  transfer_cmd->add_option("--shots", transfer.shots, "Few-shot samples per class per stage");
  transfer_cmd->add_option("--epochs", transfer.epochs, "Fine-tune epochs per stage");
  transfer_cmd->add_option("--batch", transfer.batch, "Fine-tune batch size");
  transfer_cmd->add_option("--lr", transfer.lr, "Base learning rate");
  transfer_cmd->add_option("--lr-mult", transfer.lr_mult, "Multiplier applied to --lr");
  transfer_cmd->add_option("--lambda", transfer.lambda, "Reconstruction loss weight");
  transfer_cmd->add_flag("--allow-any-shots", transfer.allow_any_shots,
                         "Accept few-shot sets that do not match --shots exactly");

  EvalOpts eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on test splits");
  add_common(eval_cmd, eval.common);
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Model checkpoint (required)");
  eval_cmd->add_option("--data", eval.data, "Dataset root directory (required)");
  eval_cmd->add_option("--domains", eval.domains, "'all' or comma-separated fake domains");
  eval_cmd->add_option("--row-name", eval.row_name, "Row label in the report table");
  eval_cmd->add_option("--brightness", eval.brightness,
                       "Brightness delta applied before inference (in [0,1] pixel space)");
  eval_cmd->add_option("--contrast", eval.contrast,
                       "Contrast factor applied after brightness (must be > 0)");

  CamOpts cam;
  CLI::App* cam_cmd = app.add_subcommand("cam", "Write activation heatmap and overlay images");
  add_common(cam_cmd, cam.common);
  cam_cmd->add_option("--checkpoint", cam.checkpoint, "Model checkpoint (required)");
  cam_cmd->add_option("--image", cam.image, "Input image (PPM, required)");
  cam_cmd->add_option("--layer", cam.layer, "Decoder stage to visualize (dec.s0 .. dec.s3)");
  cam_cmd->add_option("--alpha", cam.alpha, "Overlay blend weight in [0,1]");

  std::string inspect_path;
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "Summarize a checkpoint file");
  inspect_cmd->add_option("checkpoint", inspect_path, "Checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  CLI::App* cmd = app.get_subcommands().front();
  // Fill unset flags from the JSON config before touching any option
  // values, so file and command line land in one merged view.
  CommonOpts* common = nullptr;
  if (cmd == synth_cmd) common = &synth.common;
  if (cmd == train_cmd) common = &train.common;
  if (cmd == transfer_cmd) common = &transfer.common;
  if (cmd == eval_cmd) common = &eval.common;
  if (cmd == cam_cmd) common = &cam.common;
  if (common && !common->config_path.empty()) apply_json_config(cmd, common->config_path);
  if (common) common->apply();

  if (cmd == synth_cmd) return cmd_synth(synth);
  if (cmd == train_cmd) {
    return train.common.precision == "double" ? run_train<double>(train) : run_train<float>(train);
  }
  if (cmd == transfer_cmd) {
    return transfer.common.precision == "double" ? run_transfer<double>(transfer)
                                                 : run_transfer<float>(transfer);
  }
  if (cmd == eval_cmd) {
    return eval.common.precision == "double" ? run_eval<double>(eval) : run_eval<float>(eval);
  }
  if (cmd == cam_cmd) {
    return cam.common.precision == "double" ? run_cam<double>(cam) : run_cam<float>(cam);
  }
  if (cmd == inspect_cmd) return cmd_inspect(inspect_path);
  throw tar::ContractError("unreachable subcommand dispatch");
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const tar::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const tar::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    // ConfigError, ContractError and anything unforeseen: usage trouble.
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

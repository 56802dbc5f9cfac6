// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "vt/bench.hpp"
#include "vt/checkpoint.hpp"
#include "vt/eval.hpp"
#include "vt/sha1.hpp"
#include "vt/synthdata.hpp"
#include "vt/train.hpp"
#include "vt/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vt;

namespace {

constexpr const char* kToolVersion = "1.0.0";

// Every artifact-producing command drops a manifest next to its primary
// output: the command, its configuration, the seed, and content hashes of
// the inputs.
void write_manifest(const std::string& manifest_path, const std::string& command,
                    const json& config, uint64_t seed, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  json j;
  j["tool"] = std::string("vtrescore ") + kToolVersion;
  j["command"] = command;
  j["config"] = config;
  j["seed"] = seed;
  j["inputs"] = json::array();
  for (const auto& path : inputs) {
    json entry;
    entry["path"] = path;
    entry["sha1"] = fs::is_directory(path) ? json() : json(sha1_file(path));
    if (fs::is_directory(path)) {
      const auto manifest = fs::path(path) / "manifest.jsonl";
      if (fs::exists(manifest)) entry["manifest_sha1"] = sha1_file(manifest.string());
    }
    j["inputs"].push_back(entry);
  }
  j["outputs"] = outputs;
  std::ofstream f(manifest_path);
  if (!f) throw DataError("cannot write run manifest: " + manifest_path);
  f << j.dump(2) << "\n";
}

std::vector<int> parse_phone_list(const std::string& csv) {
  std::vector<int> out;
  std::string token;
  std::istringstream in(csv);
  while (std::getline(in, token, ',')) {
    if (token.empty()) continue;
    out.push_back(std::stoi(token));
  }
  return out;
}

void validate_arch_mode(Arch arch, TrainMode mode) {
  if (mode == TrainMode::ctc_dec && arch != Arch::tf_encoder)
    throw UsageError("mode ctc+dec needs the auto-regressive decoder, which only the "
                     "self-attention trunk carries: use --arch tf-encoder");
  if (mode == TrainMode::ctc && arch == Arch::tf_encoder)
    throw UsageError("tf-encoder trains with the decoder loss; use --mode ctc+dec (or "
                     "--arch sa-encoder for plain CTC)");
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir, int64_t seed_override) {
  SynthCorpusSpec spec =
      spec_path.empty() ? SynthCorpusSpec{} : corpus_spec_from_json_file(spec_path);
  if (seed_override >= 0) spec.seed = static_cast<uint64_t>(seed_override);
  const Corpus corpus = gen_corpus(spec);
  fs::create_directories(out_dir);
  write_corpus(corpus, out_dir);
  json cfg;
  cfg["n_utterances"] = corpus.utts.size();
  cfg["trigger"] = corpus.spec.trigger;
  write_manifest((fs::path(out_dir) / "run_manifest.json").string(), "gen-data", cfg,
                 corpus.spec.seed, spec_path.empty() ? std::vector<std::string>{}
                                                     : std::vector<std::string>{spec_path},
                 {(fs::path(out_dir) / "manifest.jsonl").string()});
  std::cout << "wrote " << corpus.utts.size() << " utterances to " << out_dir << "\n";
  return 0;
}

int cmd_featurize(const std::string& wav_path, const std::string& out_path,
                  const std::string& stage) {
  const AudioBuffer audio = read_wav(wav_path);
  const FrontendConfig cfg;
  FeatureSequence feats = compute_melfb(audio, cfg);
  if (stage == "spliced") feats = splice_subsample(feats, cfg);
  write_features(out_path, feats);
  json c;
  c["stage"] = stage;
  c["frames"] = feats.length();
  write_manifest(out_path + ".manifest.json", "featurize", c, 0, {wav_path}, {out_path});
  std::cout << "wrote " << feats.length() << "x" << feats.dim() << " features to " << out_path
            << "\n";
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& arch_name_in,
              const std::string& mode_name, const std::string& out_path,
              std::string log_path, const TrainConfig& cfg_in, uint64_t model_seed) {
  const Arch arch = arch_from_name(arch_name_in);
  TrainConfig cfg = cfg_in;
  cfg.mode = train_mode_from_name(mode_name);
  validate_arch_mode(arch, cfg.mode);

  const Corpus corpus = load_corpus(data_dir);
  const TrainData data = corpus_train_data(corpus);
  const ModelGraph init = build_default_model(arch, cfg.mode == TrainMode::mtl, model_seed);

  const TrainResult result = train(init, data, cfg);
  if (out_path.empty()) throw UsageError("train: --out is required");
  fs::create_directories(fs::path(out_path).parent_path().empty()
                             ? "."
                             : fs::path(out_path).parent_path().string());
  save_checkpoint(result.best, out_path);
  const std::string infer_path = out_path + ".infer.vtck";
  save_checkpoint(export_inference(result.best), infer_path);
  if (log_path.empty()) log_path = out_path + ".log.jsonl";
  write_train_log(log_path, result.log);

  json cfg_json;
  cfg_json["arch"] = arch_name_in;
  cfg_json["mode"] = mode_name;
  cfg_json["batch_size"] = cfg.batch_size;
  cfg_json["patience"] = cfg.patience;
  cfg_json["max_epochs"] = cfg.max_epochs;
  cfg_json["lr"] = cfg.adam.lr;
  cfg_json["grad_clip"] = cfg.grad_clip;
  cfg_json["threads"] = cfg.threads;
  cfg_json["model_seed"] = model_seed;
  cfg_json["best_epoch"] = result.best_epoch;
  cfg_json["best_val_loss"] = result.best_val_loss;
  cfg_json["stopped_epoch"] = result.stopped_epoch;
  cfg_json["skipped_infeasible"] = result.skipped_infeasible;
  write_manifest(out_path + ".manifest.json", "train", cfg_json, cfg.seed, {data_dir},
                 {out_path, infer_path, log_path});

  std::cout << "best epoch " << result.best_epoch << " (val loss " << result.best_val_loss
            << "), stopped after epoch " << result.stopped_epoch << "\n"
            << "checkpoint: " << out_path << "\ninference export: " << infer_path << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& trigger_csv, const std::string& out_csv,
             const std::string& out_summary, bool length_norm,
             std::vector<double> fa_targets, const std::vector<int>& fa_counts, int threads) {
  const LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
  Corpus corpus = load_corpus(data_dir);
  if (!trigger_csv.empty()) corpus.spec.trigger = parse_phone_list(trigger_csv);
  if (corpus.spec.trigger.empty())
    throw UsageError("eval: no trigger phones (corpus spec lacks them and --trigger not given)");

  ScoreOptions opts;
  opts.length_normalize = length_norm;
  const auto scored = score_eval_segments(loaded.model, corpus, opts, threads);
  const double hours = scored_negative_hours(scored);
  const DetCurve curve = det_curve(scored, hours);
  if (fa_targets.empty()) fa_targets = {0.01};
  if (!out_csv.empty()) write_det_csv(out_csv, curve);
  if (!out_summary.empty()) write_eval_summary(out_summary, curve, fa_targets, fa_counts);

  json cfg;
  cfg["trigger"] = corpus.spec.trigger;
  cfg["length_normalize"] = length_norm;
  cfg["fa_targets"] = fa_targets;
  cfg["negative_hours"] = hours;
  if (!out_summary.empty())
    write_manifest(out_summary + ".manifest.json", "eval", cfg, 0, {ckpt_path, data_dir},
                   {out_csv, out_summary});

  for (const double target : fa_targets) {
    std::cout << "FRR at " << target << " FA/hr: ";
    try {
      std::cout << frr_at_fa(curve, target) << "\n";
    } catch (const DataError&) {
      std::cout << "unreachable\n";
    }
  }
  return 0;
}

int cmd_count_params(const std::string& arch_name_in, const std::string& ckpt_path,
                     bool itemize) {
  ModelGraph model;
  if (!ckpt_path.empty()) {
    model = load_checkpoint(ckpt_path).model;
  } else if (!arch_name_in.empty()) {
    const Arch arch = arch_from_name(arch_name_in);
    model = build_default_model(arch);
  } else {
    throw UsageError("count-params: pass --arch or --ckpt");
  }
  if (itemize)
    for (const auto& [name, n] : itemize_params(model))
      std::cout << name << " " << n << "\n";
  std::cout << "total " << count_params(model) << "\n";
  if (model.decoder || model.mtl)
    std::cout << "inference " << count_params(export_inference(model)) << "\n";
  return 0;
}

int cmd_quantize(const std::string& ckpt_path, const std::string& out_path) {
  const LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
  const QuantizedModel qm = quantize_model(loaded.model);
  save_checkpoint(qm, out_path);
  json cfg;
  cfg["quantized_params"] = qm.quantized_param_count();
  cfg["float_params"] = qm.float_param_count();
  cfg["payload_bytes"] = model_bytes(qm);
  write_manifest(out_path + ".manifest.json", "quantize", cfg, 0, {ckpt_path}, {out_path});
  std::cout << "quantized " << qm.quantized_param_count() << " weights ("
            << qm.float_param_count() << " float params kept) -> " << out_path << "\n";
  return 0;
}

int cmd_bench(const std::string& ckpt_path, bool compare, int frames, int runs, int threads,
              uint64_t seed, const std::string& out_path) {
  BenchReport report;
  if (compare) {
    report = bench_compare(frames, runs, threads, seed);
  } else if (!ckpt_path.empty()) {
    const LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
    BenchEntry e;
    e.tag = arch_name(loaded.model.arch) + (loaded.quantized ? " (int8)" : "");
    e.params = count_params(loaded.model);
    e.bytes = loaded.quantized ? model_bytes(*loaded.quantized) : model_bytes(loaded.model);
    e.stats = bench_forward(loaded.model, frames, runs, threads, seed);
    report.models.push_back(e);
    report.threads = threads;
    report.hardware_concurrency = std::thread::hardware_concurrency();
  } else {
    throw UsageError("bench: pass --ckpt or --compare");
  }
  for (const auto& m : report.models)
    std::cout << m.tag << ": median " << m.stats.median_ms << " ms, p90 " << m.stats.p90_ms
              << " ms (" << m.params << " params)\n";
  if (report.bilstm_over_encoder > 0)
    std::cout << "bilstm/encoder median ratio: " << report.bilstm_over_encoder << "\n";
  if (!out_path.empty()) {
    write_bench_report(out_path, report);
    json cfg;
    cfg["frames"] = frames;
    cfg["runs"] = runs;
    cfg["threads"] = threads;
    write_manifest(out_path + ".manifest.json", "bench", cfg, seed,
                   ckpt_path.empty() ? std::vector<std::string>{}
                                     : std::vector<std::string>{ckpt_path},
                   {out_path});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vtrescore: second-pass voice trigger re-scorer"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  std::string gen_spec, gen_out;
  int64_t gen_seed = -1;
  gen->add_option("--spec", gen_spec, "corpus spec JSON (defaults used when omitted)");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "override the spec seed");

  // featurize
  auto* feat = app.add_subcommand("featurize", "convert a mono 16-bit WAV to a feature file");
  std::string feat_wav, feat_out, feat_stage = "mel";
  feat->add_option("--wav", feat_wav, "input WAV")->required();
  feat->add_option("--out", feat_out, "output feature file")->required();
  feat->add_option("--stage", feat_stage, "mel|spliced")
      ->check(CLI::IsMember({"mel", "spliced"}));

  // train
  auto* tr = app.add_subcommand("train", "train a model on a generated corpus");
  std::string tr_data, tr_arch, tr_mode, tr_out, tr_log;
  TrainConfig tr_cfg;
  uint64_t tr_model_seed = 1;
  tr->add_option("--data", tr_data, "corpus directory")->required();
  tr->add_option("--arch", tr_arch, "bilstm|sa-encoder|tf-encoder")->required();
  tr->add_option("--mode", tr_mode, "ctc|ctc+dec|mtl")->required();
  tr->add_option("--out", tr_out, "output checkpoint path")->required();
  tr->add_option("--log", tr_log, "train log JSONL path (default <out>.log.jsonl)");
  tr->add_option("--batch-size", tr_cfg.batch_size, "mini-batch size");
  tr->add_option("--patience", tr_cfg.patience, "early-stopping patience epochs");
  tr->add_option("--max-epochs", tr_cfg.max_epochs, "epoch cap");
  tr->add_option("--lr", tr_cfg.adam.lr, "Adam learning rate");
  tr->add_option("--grad-clip", tr_cfg.grad_clip, "global-norm clip (<=0 disables)");
  tr->add_option("--seed", tr_cfg.seed, "training shuffle/sampling seed");
  tr->add_option("--model-seed", tr_model_seed, "parameter init seed");
  tr->add_option("--threads", tr_cfg.threads, "batch-parallel worker threads");

  // eval
  auto* ev = app.add_subcommand("eval", "score the eval split and write DET outputs");
  std::string ev_ckpt, ev_data, ev_trigger, ev_csv, ev_summary;
  bool ev_norm = false;
  std::vector<double> ev_targets;
  std::vector<int> ev_counts;
  int ev_threads = 1;
  ev->add_option("--ckpt", ev_ckpt, "model checkpoint")->required();
  ev->add_option("--data", ev_data, "corpus directory")->required();
  ev->add_option("--trigger", ev_trigger, "comma-separated phone ids (default: corpus spec)");
  ev->add_option("--out-csv", ev_csv, "DET curve CSV path");
  ev->add_option("--out-summary", ev_summary, "summary JSON path");
  ev->add_flag("--length-norm", ev_norm, "length-normalize trigger scores");
  ev->add_option("--fa-per-hour", ev_targets, "operating-point targets (default 0.01)");
  ev->add_option("--fa-count", ev_counts, "count-based operating points");
  ev->add_option("--threads", ev_threads, "scoring threads");

  // count-params
  auto* cp = app.add_subcommand("count-params", "count trainable parameters");
  std::string cp_arch, cp_ckpt;
  bool cp_itemize = false;
  cp->add_option("--arch", cp_arch, "bilstm|sa-encoder|tf-encoder");
  cp->add_option("--ckpt", cp_ckpt, "checkpoint to inspect");
  cp->add_flag("--itemize", cp_itemize, "list per-tensor sizes");

  // quantize
  auto* qt = app.add_subcommand("quantize", "8-bit weight quantization of a checkpoint");
  std::string qt_ckpt, qt_out;
  qt->add_option("--ckpt", qt_ckpt, "float checkpoint")->required();
  qt->add_option("--out", qt_out, "quantized checkpoint path")->required();

  // bench
  auto* bn = app.add_subcommand("bench", "forward-pass runtime benchmark");
  std::string bn_ckpt, bn_out;
  bool bn_compare = false;
  int bn_frames = 60, bn_runs = 30, bn_threads = 1;
  uint64_t bn_seed = 7;
  bn->add_option("--ckpt", bn_ckpt, "checkpoint to benchmark");
  bn->add_flag("--compare", bn_compare, "default encoder vs default BiLSTM");
  bn->add_option("--frames", bn_frames, "input frames (default 60 = 1.8 s)");
  bn->add_option("--runs", bn_runs, "timed runs (>= 30)");
  bn->add_option("--threads", bn_threads, "matmul threads");
  bn->add_option("--seed", bn_seed, "input/init seed");
  bn->add_option("--out", bn_out, "report JSON path");

  try {
    app.parse(argc, argv);
    if (*gen) return cmd_gen_data(gen_spec, gen_out, gen_seed);
    if (*feat) return cmd_featurize(feat_wav, feat_out, feat_stage);
    if (*tr)
      return cmd_train(tr_data, tr_arch, tr_mode, tr_out, tr_log, tr_cfg, tr_model_seed);
    if (*ev)
      return cmd_eval(ev_ckpt, ev_data, ev_trigger, ev_csv, ev_summary, ev_norm, ev_targets,
                      ev_counts, ev_threads);
    if (*cp) return cmd_count_params(cp_arch, cp_ckpt, cp_itemize);
    if (*qt) return cmd_quantize(qt_ckpt, qt_out);
    if (*bn) return cmd_bench(bn_ckpt, bn_compare, bn_frames, bn_runs, bn_threads, bn_seed,
                              bn_out);
    return 2;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

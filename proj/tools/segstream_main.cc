// segstream/tools/segstream_main.cc
//
// Copyright 2026 The segstream Authors
//
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
//
// Command-line entry point: gen-data, train, simulate, eval, verify.
// Exit codes: 0 success, 1 usage, 2 data error, 3 verification failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "segstream/metrics.h"
#include "segstream/model.h"
#include "segstream/policy.h"
#include "segstream/synthdata.h"
#include "segstream/verify.h"

namespace {

constexpr const char* kCodeVersion = "segstream 0.1.0";

using segstream::SegError;

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) segstream::Fail("cannot open '" + path + "' for reading");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void WriteFileAtomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out.good()) segstream::Fail("cannot open '" + tmp + "' for writing");
    out << contents;
    if (!out.good()) segstream::Fail("write failure on '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    segstream::Fail("cannot move '" + tmp + "' to '" + path + "'");
  }
}

// Run bookkeeping: resolved configuration, inputs, outputs with content
// hashes, wall-clock duration. Written atomically next to the primary output.
class ManifestWriter {
 public:
  ManifestWriter(std::string command, std::string primary_output)
      : command_(std::move(command)),
        primary_output_(std::move(primary_output)),
        start_(std::chrono::steady_clock::now()) {}

  void SetConfig(nlohmann::ordered_json config) { config_ = std::move(config); }
  void AddInput(const std::string& path) { inputs_.push_back(path); }
  void AddOutput(const std::string& path) {
    outputs_.push_back({path, segstream::HexHash(ReadFile(path))});
  }

  void Write() const {
    nlohmann::ordered_json doc;
    doc["command"] = command_;
    doc["config"] = config_;
    doc["inputs"] = inputs_;
    nlohmann::ordered_json outs = nlohmann::ordered_json::array();
    for (const auto& [path, hash] : outputs_) {
      outs.push_back({{"path", path}, {"fnv1a64", hash}});
    }
    doc["outputs"] = std::move(outs);
    doc["code_version"] = kCodeVersion;
    const auto elapsed = std::chrono::steady_clock::now() - start_;
    doc["duration_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
    WriteFileAtomic(primary_output_ + ".manifest.json", doc.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::string primary_output_;
  nlohmann::ordered_json config_;
  std::vector<std::string> inputs_;
  std::vector<std::pair<std::string, std::string>> outputs_;
  std::chrono::steady_clock::time_point start_;
};

struct GenDataArgs {
  std::string out;
  segstream::CorpusConfig config;
};

int RunGenData(const GenDataArgs& args) {
  ManifestWriter manifest("gen-data", args.out);
  segstream::Corpus corpus = segstream::GenerateCorpus(args.config);
  std::ostringstream body;
  for (const segstream::Sentence& s : corpus) {
    body << segstream::SentenceToJsonLine(s) << "\n";
  }
  WriteFileAtomic(args.out, body.str());

  nlohmann::ordered_json cfg;
  cfg["word_types"] = args.config.word_types;
  cfg["frame_dim"] = args.config.frame_dim;
  cfg["frames_per_word"] = {args.config.min_frames_per_word,
                            args.config.max_frames_per_word};
  cfg["words_per_sentence"] = {args.config.min_words, args.config.max_words};
  cfg["frame_noise"] = args.config.frame_noise;
  cfg["silence_prob"] = args.config.silence_prob;
  cfg["frame_ms"] = args.config.frame_ms;
  cfg["reorder_window"] = args.config.reorder_window;
  cfg["sentences"] = args.config.sentences;
  cfg["seed"] = args.config.seed;
  manifest.SetConfig(std::move(cfg));
  manifest.AddOutput(args.out);
  manifest.Write();
  std::cout << "wrote " << corpus.size() << " sentences to " << args.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string corpus;
  std::string out;
  std::string loss_log;
  segstream::ModelConfig config;
};

int RunTrain(const TrainArgs& args) {
  ManifestWriter manifest("train", args.out);
  manifest.AddInput(args.corpus);
  const std::string corpus_bytes = ReadFile(args.corpus);
  segstream::Corpus corpus = segstream::LoadCorpus(args.corpus);

  segstream::ModelConfig cfg = args.config;
  cfg.source_subword_vocab = segstream::SubwordVocabSize(corpus);
  cfg.target_vocab = segstream::TargetVocabSize(corpus);
  cfg.frame_dim = corpus.front().features.dim();
  cfg.Validate();

  segstream::TrainResult result = segstream::Train(segstream::ToBatch(corpus), cfg);

  segstream::Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.corpus_fingerprint = segstream::HexHash(corpus_bytes);
  ckpt.params = std::move(result.params);
  WriteFileAtomic(args.out, segstream::CheckpointToJson(ckpt) + "\n");

  std::ostringstream log;
  log.precision(12);
  log << "epoch,L_st,L_asr,L_mt,L_num,L_ctr,total\n";
  for (size_t e = 0; e < result.log.size(); ++e) {
    const segstream::EpochStats& s = result.log[e];
    log << e + 1 << "," << s.st << "," << s.asr << "," << s.mt << "," << s.num << ","
        << s.ctr << "," << s.total << "\n";
  }
  WriteFileAtomic(args.loss_log, log.str());

  manifest.SetConfig(nlohmann::ordered_json::parse(cfg.ToJson()));
  manifest.AddOutput(args.out);
  manifest.AddOutput(args.loss_log);
  manifest.Write();
  std::cout << "trained " << cfg.epochs << " epochs; final total loss "
            << result.log.back().total << "\n";
  return 0;
}

std::vector<int> ParseKList(const std::string& spec) {
  std::vector<int> ks;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "inf") {
      ks.push_back(segstream::kInfiniteLag);
    } else {
      try {
        ks.push_back(std::stoi(item));
      } catch (const std::exception&) {
        segstream::Fail("cannot parse lagging value '" + item + "'");
      }
      if (ks.back() < 1) segstream::Fail("lagging values must be >= 1 or 'inf'");
    }
  }
  if (ks.empty()) segstream::Fail("--k list is empty");
  return ks;
}

std::string KLabel(int k) {
  return k == segstream::kInfiniteLag ? "inf" : std::to_string(k);
}

struct SimulateArgs {
  std::string corpus;
  std::string checkpoint;
  std::string k_list = "1";
  std::string out_prefix;
  std::string dump_attention;
};

int RunSimulate(const SimulateArgs& args) {
  const std::vector<int> ks = ParseKList(args.k_list);
  ManifestWriter manifest("simulate", args.out_prefix);
  manifest.AddInput(args.corpus);
  manifest.AddInput(args.checkpoint);

  segstream::Corpus corpus = segstream::LoadCorpus(args.corpus);
  segstream::Checkpoint ckpt = segstream::CheckpointFromJson(ReadFile(args.checkpoint));
  segstream::TransducerModel model(ckpt.params, ckpt.config);

  for (int k : ks) {
    std::ostringstream body;
    for (const segstream::Sentence& s : corpus) {
      const int max_len = 2 * s.word_count + 10;
      segstream::SimulationTrace trace =
          segstream::Simulate(s.features, model, k, max_len, s.id);
      body << segstream::TraceToJsonLine(trace) << "\n";
    }
    const std::string path = args.out_prefix + ".k" + KLabel(k) + ".jsonl";
    WriteFileAtomic(path, body.str());
    manifest.AddOutput(path);
    std::cout << "simulated k=" << KLabel(k) << " -> " << path << "\n";
  }

  if (!args.dump_attention.empty()) {
    std::ostringstream dump;
    dump.precision(10);
    dump << "# expected segmented attention, encoder layer 0 head 0\n";
    for (const segstream::Sentence& s : corpus) {
      segstream::Tensor gamma =
          segstream::ExpectedAttentionWeights(s.features, ckpt.params, ckpt.config);
      for (int i = 0; i < gamma.rows(); ++i) {
        dump << s.id << "," << i;
        for (int j = 0; j < gamma.cols(); ++j) dump << "," << gamma.at(i, j);
        dump << "\n";
      }
    }
    WriteFileAtomic(args.dump_attention, dump.str());
    manifest.AddOutput(args.dump_attention);
  }

  nlohmann::ordered_json cfg;
  cfg["k"] = args.k_list;
  cfg["corpus_fingerprint"] = ckpt.corpus_fingerprint;
  manifest.SetConfig(std::move(cfg));
  manifest.Write();
  return 0;
}

struct EvalArgs {
  std::string corpus;
  std::vector<std::string> traces;
  std::string out_prefix;
  double tolerance_frames = 1.0;
};

int RunEval(const EvalArgs& args) {
  ManifestWriter manifest("eval", args.out_prefix);
  manifest.AddInput(args.corpus);
  segstream::Corpus corpus = segstream::LoadCorpus(args.corpus);
  std::map<int, const segstream::Sentence*> by_id;
  for (const segstream::Sentence& s : corpus) by_id[s.id] = &s;

  std::vector<segstream::MetricReport> reports;
  for (const std::string& trace_path : args.traces) {
    manifest.AddInput(trace_path);
    std::vector<segstream::SimulationTrace> traces = segstream::LoadTraces(trace_path);
    SEG_CHECK(!traces.empty(), "trace file '" << trace_path << "' is empty");

    segstream::MetricReport report;
    report.k = traces.front().k;
    report.latency = segstream::CorpusLatency(traces);

    std::vector<std::vector<int>> hyps, refs;
    int matches = 0, hyp_count = 0, ref_count = 0;
    double tol_ms = 0;
    for (const segstream::SimulationTrace& trace : traces) {
      auto it = by_id.find(trace.id);
      SEG_CHECK(it != by_id.end(), "trace sentence id " << trace.id
                                       << " is missing from the corpus");
      const segstream::Sentence& s = *it->second;
      std::vector<int> hyp = trace.hypothesis;
      if (!hyp.empty() && hyp.back() == segstream::kEosId) hyp.pop_back();
      hyps.push_back(std::move(hyp));
      refs.push_back(s.targets);
      tol_ms = args.tolerance_frames * s.features.frame_ms;
      segstream::BoundaryPrf prf =
          segstream::BoundaryPrfScore(trace.boundaries_ms, s.boundaries_ms, tol_ms);
      matches += prf.matches;
      hyp_count += prf.hyp_count;
      ref_count += prf.ref_count;
    }
    report.bleu = segstream::CorpusBleu(hyps, refs);
    report.boundary.matches = matches;
    report.boundary.hyp_count = hyp_count;
    report.boundary.ref_count = ref_count;
    report.boundary.hyp_empty = hyp_count == 0;
    report.boundary.precision = hyp_count > 0 ? 100.0 * matches / hyp_count : 0.0;
    report.boundary.recall = ref_count > 0 ? 100.0 * matches / ref_count : 0.0;
    report.boundary.f1 =
        (report.boundary.precision + report.boundary.recall) > 0
            ? 2.0 * report.boundary.precision * report.boundary.recall /
                  (report.boundary.precision + report.boundary.recall)
            : 0.0;
    report.os_pct =
        segstream::OverSegmentation(report.boundary.precision, report.boundary.recall);
    report.r_value_pct = segstream::RValue(
        report.boundary.recall / 100.0,
        report.os_pct.has_value() ? *report.os_pct / 100.0 : 0.0);
    report.tolerance_ms = tol_ms;
    reports.push_back(std::move(report));
  }

  std::sort(reports.begin(), reports.end(),
            [](const segstream::MetricReport& a, const segstream::MetricReport& b) {
              return static_cast<long long>(a.k) < static_cast<long long>(b.k);
            });

  std::ostringstream csv;
  csv.precision(10);
  csv << segstream::MetricCsvHeader(reports.empty() ? 0 : reports.front().tolerance_ms)
      << "\n";
  for (const segstream::MetricReport& r : reports) {
    csv << segstream::MetricCsvRow(r) << "\n";
  }
  const std::string csv_path = args.out_prefix + ".csv";
  const std::string json_path = args.out_prefix + ".json";
  WriteFileAtomic(csv_path, csv.str());
  WriteFileAtomic(json_path, segstream::MetricReportToJson(reports) + "\n");

  nlohmann::ordered_json cfg;
  cfg["tolerance_frames"] = args.tolerance_frames;
  manifest.SetConfig(std::move(cfg));
  manifest.AddOutput(csv_path);
  manifest.AddOutput(json_path);
  manifest.Write();
  std::cout << csv.str();
  return 0;
}

struct VerifyArgs {
  std::string out;
  bool inject_gradient_fault = false;
};

int RunVerify(const VerifyArgs& args) {
  segstream::VerifyOptions options;
  options.inject_gradient_fault = args.inject_gradient_fault;
  segstream::VerifyReport report = segstream::RunVerification(options);
  std::cout << report.Summary();
  if (!args.out.empty()) {
    WriteFileAtomic(args.out, report.ToJson() + "\n");
  }
  return report.pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentiable segmentation for simultaneous transduction"};
  app.require_subcommand(1);

  GenDataArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic corpus");
  gen_cmd->add_option("--out", gen.out, "output corpus JSONL")->required();
  gen_cmd->add_option("--seed", gen.config.seed, "random seed");
  gen_cmd->add_option("--sentences", gen.config.sentences, "sentence count");
  gen_cmd->add_option("--word-types", gen.config.word_types, "vocabulary size");
  gen_cmd->add_option("--frame-dim", gen.config.frame_dim, "feature dimension");
  gen_cmd->add_option("--sigma", gen.config.frame_noise, "per-entry frame noise");
  gen_cmd->add_option("--silence-prob", gen.config.silence_prob,
                      "silence-block probability");
  gen_cmd->add_option("--frame-ms", gen.config.frame_ms, "frame duration in ms");
  gen_cmd->add_option("--reorder", gen.config.reorder_window,
                      "target reorder window (0 or 2)");
  gen_cmd->add_option("--min-frames", gen.config.min_frames_per_word,
                      "min frames per word");
  gen_cmd->add_option("--max-frames", gen.config.max_frames_per_word,
                      "max frames per word");
  gen_cmd->add_option("--min-words", gen.config.min_words, "min words per sentence");
  gen_cmd->add_option("--max-words", gen.config.max_words, "max words per sentence");

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "train on a corpus");
  train_cmd->add_option("--corpus", train.corpus, "corpus JSONL")->required();
  train_cmd->add_option("--out", train.out, "checkpoint JSON")->required();
  train_cmd->add_option("--loss-log", train.loss_log, "per-epoch loss CSV")->required();
  train_cmd->add_option("--seed", train.config.seed, "random seed");
  train_cmd->add_option("--epochs", train.config.epochs, "training epochs");
  train_cmd->add_option("--batch", train.config.batch_size, "batch size");
  train_cmd->add_option("--lr", train.config.learning_rate, "learning rate");
  train_cmd->add_option("--d-model", train.config.d_model, "model width");
  train_cmd->add_option("--heads", train.config.heads, "attention heads");
  train_cmd->add_option("--enc-layers", train.config.encoder_layers, "encoder layers");
  train_cmd->add_option("--dec-layers", train.config.decoder_layers, "decoder layers");
  train_cmd->add_option("--ffn", train.config.ffn_width, "feed-forward width");
  train_cmd->add_option("--noise-var", train.config.noise_variance,
                        "segmentation noise variance");
  train_cmd->add_option("--tau", train.config.tau, "contrastive temperature");
  train_cmd->add_option("--max-k", train.config.max_k, "largest sampled lagging");

  SimulateArgs sim;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "streaming wait-seg inference");
  sim_cmd->add_option("--corpus", sim.corpus, "corpus JSONL")->required();
  sim_cmd->add_option("--checkpoint", sim.checkpoint, "checkpoint JSON")->required();
  sim_cmd->add_option("--k", sim.k_list, "comma list of lagging values, or 'inf'")
      ->required();
  sim_cmd->add_option("--out-prefix", sim.out_prefix, "trace file prefix")->required();
  sim_cmd->add_option("--dump-attention", sim.dump_attention,
                      "optional CSV of expected-attention rows");

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score traces against a corpus");
  eval_cmd->add_option("--corpus", eval.corpus, "corpus JSONL")->required();
  eval_cmd->add_option("--trace", eval.traces, "trace JSONL (repeatable)")->required();
  eval_cmd->add_option("--out-prefix", eval.out_prefix, "output prefix for CSV/JSON")
      ->required();
  eval_cmd->add_option("--tolerance-frames", eval.tolerance_frames,
                       "boundary matching tolerance in frames");

  VerifyArgs verify;
  CLI::App* verify_cmd = app.add_subcommand("verify", "run the self-check suite");
  verify_cmd->add_option("--out", verify.out, "optional JSON report path");
  verify_cmd
      ->add_flag("--inject-gradient-fault", verify.inject_gradient_fault,
                 "corrupt one gradient to prove the checker catches it")
      ->group("");  // hidden test hook

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage errors are exit code 1
  }

  try {
    if (gen_cmd->parsed()) return RunGenData(gen);
    if (train_cmd->parsed()) return RunTrain(train);
    if (sim_cmd->parsed()) return RunSimulate(sim);
    if (eval_cmd->parsed()) return RunEval(eval);
    if (verify_cmd->parsed()) return RunVerify(verify);
  } catch (const SegError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

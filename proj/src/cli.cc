/* Copyright 2026 The rescale-lab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "rescale_lab/cli.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "rescale_lab/engine.h"
#include "rescale_lab/errmodel.h"
#include "rescale_lab/errors.h"
#include "rescale_lab/idx.h"
#include "rescale_lab/model_io.h"
#include "rescale_lab/ptq.h"
#include "rescale_lab/sweep.h"
#include "rescale_lab/trainer.h"

namespace rescale {
namespace {

const std::vector<int> kDefaultSweep{32, 16, 12, 10, 8, 7, 6, 5, 4, 3, 2};

struct Flags {
  std::string model;
  std::string data_dir;
  std::string out;
  std::string input;
  int k = 0;  // 0: keep the model's width
  std::vector<int> k_list = kDefaultSweep;
  int epochs = -1;
  double lr = -1.0;
  std::uint64_t seed = 0;
  double threshold = kDefaultDegradationThreshold;
  int batches = 0;
  int batch_size = 0;
  std::size_t index = 0;
  std::size_t calib_samples = 2000;
  std::size_t train_samples = 0;  // 0: whole training set
};

std::string Format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

// Writes to --out when given, otherwise to stdout.
class Report {
 public:
  Report(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::trunc);
      if (!*file_) throw UsageError("cannot open " + path + " for writing");
      stream_ = file_.get();
    }
    *stream_ << kCsvHeader << "\n";
  }
  std::ostream& operator*() { return *stream_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

void RequireModel(const Flags& f) {
  if (f.model.empty()) throw UsageError("--model is required");
}

void RequireData(const Flags& f) {
  if (f.data_dir.empty()) throw UsageError("--data-dir (or RESCALE_LAB_DATA) is required");
}

ModelGraph LoadAtWidth(const Flags& f) {
  RequireModel(f);
  const ModelGraph model = LoadModel(f.model);
  return f.k == 0 ? model : MaterializeRescalers(model, f.k);
}

Dataset TrainingSet(const Flags& f) {
  RequireData(f);
  Dataset train = LoadMnist(f.data_dir, true);
  if (f.train_samples > 0 && f.train_samples < train.size()) {
    train = Subset(train, 0, f.train_samples);
  }
  return train;
}

int TrainFloatCommand(const Flags& f, std::ostream& out) {
  if (f.out.empty()) throw UsageError("--out is required");
  const Dataset train = TrainingSet(f);
  const Dataset test = LoadMnist(f.data_dir, false);
  TrainConfig cfg;
  cfg.mode = TrainMode::kFloatBaseline;
  cfg.learning_rate = f.lr < 0 ? kFloatBaselineLearningRate : f.lr;
  cfg.epochs = f.epochs < 0 ? kFloatBaselineEpochs : f.epochs;
  cfg.batch_size = f.batch_size > 0 ? f.batch_size : cfg.batch_size;
  cfg.seed = f.seed;
  const FloatTrainResult result = TrainFloat(DeskCnnV1(), train, test, cfg);
  SaveFloatModel(result.model, f.out);
  out << kCsvHeader << "\nepoch,loss,float_accuracy\n";
  for (const EpochLog& e : result.epochs) {
    out << e.epoch << "," << Format("%.6f", e.loss) << ","
        << Format("%.4f", 100.0 * e.int_accuracy) << "\n";
  }
  return 0;
}

int QuantizeCommand(const Flags& f, std::ostream& out) {
  RequireModel(f);
  if (f.out.empty()) throw UsageError("--out is required");
  RequireData(f);
  const FloatModel float_model = LoadFloatModel(f.model);
  const Dataset train = LoadMnist(f.data_dir, true);
  const std::size_t samples = std::min(f.calib_samples, train.size());
  if (samples == 0) throw UsageError("--calib-samples must be positive");
  std::vector<DTensor> batches;
  const std::size_t batch = f.batch_size > 0 ? f.batch_size : 500;
  for (std::size_t begin = 0; begin < samples; begin += batch) {
    batches.push_back(ImagesToReal(train, begin, std::min(batch, samples - begin)));
  }
  ModelGraph model = QuantizeFloatModel(float_model, batches);
  if (f.k != 0) model = MaterializeRescalers(model, f.k);
  SaveModel(model, f.out);
  out << kCsvHeader << "\ncalibration_samples,layers,rescaler_bits\n"
      << samples << "," << model.layers.size() << "," << model.rescaler_bits << "\n";
  return 0;
}

int EvalCommand(const Flags& f, std::ostream& out) {
  const ModelGraph model = LoadAtWidth(f);
  RequireData(f);
  const Dataset test = LoadMnist(f.data_dir, false);
  out << kCsvHeader << "\nk,samples,accuracy\n"
      << model.rescaler_bits << "," << test.size() << ","
      << Format("%.4f", 100.0 * EvaluateAccuracy(model, test)) << "\n";
  return 0;
}

int InferCommand(const Flags& f, std::ostream& out) {
  const ModelGraph model = LoadAtWidth(f);
  if (f.input.empty()) throw UsageError("--input is required");
  Dataset images;
  std::int64_t count = 0;
  images.images = LoadIdxImages(f.input, &count, &images.rows, &images.cols);
  if (f.index >= static_cast<std::size_t>(count)) {
    throw UsageError("--index " + std::to_string(f.index) + " outside the " +
                     std::to_string(count) + " images");
  }
  images.labels.assign(count, 0);
  const std::vector<int> cls = ArgmaxRows(RunInteger(model, QuantizeImages(images, f.index, 1, model)));
  out << cls[0] << "\n";
  return 0;
}

int SweepCommand(const Flags& f, std::ostream& out) {
  RequireModel(f);
  RequireData(f);
  const ModelGraph model = LoadModel(f.model);
  const Dataset test = LoadMnist(f.data_dir, false);
  const SweepResult result = RunSweep(model, test, f.k_list, f.threshold);
  Report report(f.out, out);
  WriteSweepCsv(*report, result);
  return 0;
}

std::vector<QTensor> ProbeBatches(const ModelGraph& model, const Dataset& data, int batches,
                                  std::size_t batch_size) {
  std::vector<QTensor> probes;
  for (int b = 0; b < batches; ++b) {
    const std::size_t begin = b * batch_size;
    if (begin >= data.size()) break;
    probes.push_back(
        QuantizeImages(data, begin, std::min(batch_size, data.size() - begin), model));
  }
  return probes;
}

int AnalyzeCommand(const Flags& f, std::ostream& out) {
  RequireModel(f);
  RequireData(f);
  const ModelGraph model = LoadModel(f.model);
  const Dataset test = LoadMnist(f.data_dir, false);
  const int k = f.k == 0 ? model.rescaler_bits : f.k;
  const std::vector<QTensor> probes = ProbeBatches(
      model, test, f.batches > 0 ? f.batches : 10, f.batch_size > 0 ? f.batch_size : 100);
  const std::vector<LayerErrorReport> reports = AnalyzeModel(model, probes, k);
  Report report(f.out, out);
  WriteErrorReportCsv(*report, reports);
  return 0;
}

int FinetuneCommand(const Flags& f, std::ostream& out) {
  RequireModel(f);
  if (f.out.empty()) throw UsageError("--out is required");
  const ModelGraph model = LoadModel(f.model);
  const Dataset train = TrainingSet(f);
  const Dataset test = LoadMnist(f.data_dir, false);
  TrainConfig cfg;
  if (f.lr >= 0) cfg.learning_rate = f.lr;
  if (f.epochs >= 0) cfg.epochs = f.epochs;
  if (f.batch_size > 0) cfg.batch_size = f.batch_size;
  cfg.seed = f.seed;
  const int k = f.k == 0 ? model.rescaler_bits : f.k;
  const FinetuneResult result = Finetune(model, train, test, cfg, k);
  SaveModel(result.model, f.out);
  const WeightChangeStats& s = result.stats;
  out << kCsvHeader << "\nepoch,loss,int_accuracy\n";
  for (const EpochLog& e : result.epochs) {
    out << e.epoch << "," << Format("%.6f", e.loss) << ","
        << Format("%.4f", 100.0 * e.int_accuracy) << "\n";
  }
  out << "# changed_ratio=" << Format("%.6f", s.changed_ratio)
      << " mean_abs_diff=" << Format("%.6f", s.mean_abs_diff)
      << " changed_weights=" << s.changed_weights << "/" << s.total_weights
      << " layers_affected=" << s.layers_affected << " changed_biases=" << s.changed_biases
      << "/" << s.total_biases << "\n";
  for (std::size_t li = 0; li < s.histograms.size(); ++li) {
    if (s.histograms[li].empty()) continue;
    out << "# delta_histogram layer=" << li;
    for (const auto& [delta, count] : s.histograms[li]) out << " " << delta << ":" << count;
    out << "\n";
  }
  return 0;
}

int ParityCommand(const Flags& f, std::ostream& out) {
  RequireModel(f);
  const ModelGraph model = LoadModel(f.model);
  const int k = f.k == 0 ? model.rescaler_bits : f.k;
  const int batches = f.batches > 0 ? f.batches : 100;
  const std::int64_t batch_size = f.batch_size > 0 ? f.batch_size : 8;
  std::mt19937_64 rng(f.seed);
  std::uniform_int_distribution<int> pixel(-128, 127);
  Shape shape{batch_size};
  shape.insert(shape.end(), model.input_shape.begin(), model.input_shape.end());
  std::int64_t mismatches = 0;
  for (int b = 0; b < batches; ++b) {
    QTensor x{shape, std::vector<std::int8_t>(NumElements(shape)), {model.input.scale},
              model.input.zero_point};
    for (std::int8_t& v : x.data) v = static_cast<std::int8_t>(pixel(rng));
    mismatches += CountParityMismatches(model, x, k);
  }
  out << kCsvHeader << "\nk,batches,mismatches,result\n"
      << k << "," << batches << "," << mismatches << "," << (mismatches == 0 ? "PASS" : "FAIL")
      << "\n";
  return mismatches == 0 ? 0 : 1;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Integer inference with reduced-width rescalers", "rescale-lab"};
  app.require_subcommand(1, 1);
  Flags f;
  std::function<int(const Flags&, std::ostream&)> command;

  auto add = [&](const char* name, const char* help,
                 int (*fn)(const Flags&, std::ostream&)) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->callback([&command, fn] { command = fn; });
    return sub;
  };
  auto model = [&](CLI::App* s) { s->add_option("--model", f.model, "Model file"); };
  auto data = [&](CLI::App* s) {
    s->add_option("--data-dir", f.data_dir, "Directory with the IDX files")
        ->envname("RESCALE_LAB_DATA");
  };
  auto k = [&](CLI::App* s) {
    s->add_option("--k", f.k, "Rescaler width")->check(CLI::Range(2, 32));
  };
  auto out_opt = [&](CLI::App* s, const char* help) { s->add_option("--out", f.out, help); };
  auto batch = [&](CLI::App* s) {
    s->add_option("--batch-size", f.batch_size)->check(CLI::PositiveNumber);
  };
  auto seed = [&](CLI::App* s) { s->add_option("--seed", f.seed); };

  CLI::App* train_float = add("train-float", "Train the float baseline", TrainFloatCommand);
  data(train_float);
  out_opt(train_float, "Float model output");
  train_float->add_option("--epochs", f.epochs)->check(CLI::NonNegativeNumber);
  train_float->add_option("--lr", f.lr)->check(CLI::NonNegativeNumber);
  train_float->add_option("--train-samples", f.train_samples);
  seed(train_float);
  batch(train_float);

  CLI::App* quantize = add("quantize", "Calibrate and quantize a float model", QuantizeCommand);
  model(quantize);
  data(quantize);
  k(quantize);
  out_opt(quantize, "Quantized model output");
  quantize->add_option("--calib-samples", f.calib_samples);
  batch(quantize);

  CLI::App* eval = add("eval", "Integer accuracy on the test set", EvalCommand);
  model(eval);
  data(eval);
  k(eval);

  CLI::App* infer = add("infer", "Classify one image", InferCommand);
  model(infer);
  k(infer);
  infer->add_option("--input", f.input, "IDX image file");
  infer->add_option("--index", f.index, "Image index within --input");

  CLI::App* sweep = add("sweep", "Accuracy per rescaler width", SweepCommand);
  model(sweep);
  data(sweep);
  sweep->add_option("--k-list", f.k_list, "Widths to evaluate")->delimiter(',');
  sweep->add_option("--threshold", f.threshold, "Degradation threshold in points")
      ->check(CLI::NonNegativeNumber);
  out_opt(sweep, "CSV output");

  CLI::App* analyze = add("analyze", "Per-channel rescale error report", AnalyzeCommand);
  model(analyze);
  data(analyze);
  k(analyze);
  analyze->add_option("--batches", f.batches, "Probe batches")->check(CLI::PositiveNumber);
  batch(analyze);
  out_opt(analyze, "CSV output");

  CLI::App* finetune = add("finetune", "Rescale-aware fine-tuning", FinetuneCommand);
  model(finetune);
  data(finetune);
  k(finetune);
  finetune->add_option("--epochs", f.epochs)->check(CLI::NonNegativeNumber);
  finetune->add_option("--lr", f.lr)->check(CLI::NonNegativeNumber);
  finetune->add_option("--train-samples", f.train_samples);
  seed(finetune);
  batch(finetune);
  out_opt(finetune, "Fine-tuned model output");

  CLI::App* parity = add("parity", "Emulated vs integer output parity", ParityCommand);
  model(parity);
  k(parity);
  parity->add_option("--batches", f.batches)->check(CLI::PositiveNumber);
  seed(parity);
  batch(parity);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return static_cast<int>(ErrorCategory::kUsage);
  }

  try {
    return command(f, out);
  } catch (const FormatError& e) {
    err << "format error at offset " << e.offset() << ": " << e.reason() << "\n";
    return static_cast<int>(e.category());
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace rescale

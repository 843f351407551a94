#include "recert/cli.hpp"

#include "recert/certify.hpp"
#include "recert/error.hpp"
#include "recert/train.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

namespace recert {
namespace {

struct Options {
  std::string data;
  std::string space;
  std::string resource_dir = ".";
  std::string model;
  std::string out;
  std::string text;
  std::string summary;
  std::string mode = "normal";
  std::vector<std::string> metrics{"normal"};
  TrainConfig train;
  ModelConfig model_config;
  std::optional<int> max_positions;
  std::size_t vocab_cap = Vocabulary::kDefaultCap;
  std::size_t limit = 0;
  std::size_t cap = kDefaultEnumerationCap;
  unsigned threads = 1;
  std::uint64_t seed = 7;
};

PerturbationSpace load_space(const Options& o) { return parse_space_spec(o.space, o.resource_dir); }

Dataset limited(Dataset data, std::size_t limit) {
  if (limit > 0 && data.examples.size() > limit) data.examples.resize(limit);
  return data;
}

int cmd_train(const Options& o, std::ostream& out) {
  TrainConfig config = o.train;
  config.mode = parse_train_mode(o.mode);
  const Dataset data = load_dataset(o.data);
  const PerturbationSpace space = load_space(o);
  const std::vector<TokenSeq> texts = data.texts();
  const Vocabulary vocab = Vocabulary::build(texts, o.vocab_cap);

  ModelConfig mc = o.model_config;
  mc.vocab_size = static_cast<int>(vocab.size());
  mc.n_classes = data.n_classes();
  if (o.max_positions) {
    mc.max_positions = *o.max_positions;
  } else {
    for (const TokenSeq& x : texts) {
      mc.max_positions = std::max(mc.max_positions, final_length_range(space, x).back());
    }
  }
  mc.validate();

  const ModelParams trained =
      train(init_params(mc, config.seed), data, space, vocab, config, [&](const EpochReport& r) {
        out << "epoch=" << r.epoch << " loss=" << std::setprecision(6) << r.mean_loss
            << " budgets=";
        for (std::size_t k = 0; k < r.budgets.size(); ++k) out << (k ? "," : "") << r.budgets[k];
        out << '\n';
      });
  save_model(o.out, trained, vocab.tokens());
  out << "model=" << o.out << '\n';
  return kExitOk;
}

struct Loaded {
  ModelParams params;
  Vocabulary vocab;
  Dataset data;
  PerturbationSpace space;
};

Loaded load_inputs(const Options& o) {
  ModelFile file = load_model(o.model);
  if (file.vocabulary.empty()) throw MalformedFile(o.model + ": model file has no vocabulary");
  Vocabulary vocab(std::move(file.vocabulary));
  return {std::move(file.params), std::move(vocab), limited(load_dataset(o.data), o.limit),
          load_space(o)};
}

int cmd_certify(const Options& o, std::ostream& out) {
  const Loaded in = load_inputs(o);
  EvalOptions options;
  options.metrics = {Metric::normal, Metric::certified};
  options.threads = o.threads;
  const auto outcomes = evaluate_examples(in.data, in.space, in.params, in.vocab, options);
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    const ExampleOutcome& r = outcomes[k];
    out << "index=" << k << " label=" << in.data.examples[k].label << " verdict=";
    if (r.cert) {
      out << (r.cert->verdict == Verdict::certified ? "certified" : "unknown")
          << " margin_upper=" << std::setprecision(9) << r.cert->worst_margin_upper;
    } else {
      out << "unknown error=\"" << r.error << '"';
    }
    out << '\n';
  }
  const Metrics m = summarize(outcomes, options.metrics);
  out << "total=" << m.total << '\n'
      << "certified=" << m.certified << '\n'
      << "certified_acc=" << std::setprecision(6) << *m.certified_acc << '\n';
  return kExitOk;
}

void write_summary(const std::string& path, const Metrics& m) {
  std::ofstream file(path);
  if (!file) throw IoError("cannot write " + path);
  file << "recert-metrics 1\n";
  file << "total " << m.total << '\n';
  file << std::setprecision(17);
  if (m.normal_acc) file << "normal_acc " << *m.normal_acc << '\n';
  if (m.certified_acc) file << "certified_acc " << *m.certified_acc << '\n';
  if (m.exhaustive_acc) file << "exhaustive_acc " << *m.exhaustive_acc << '\n';
  file << "failures " << m.failures << '\n';
  file << "end\n";
  if (!file) throw IoError("cannot write " + path);
}

int cmd_eval(const Options& o, std::ostream& out) {
  const Loaded in = load_inputs(o);
  EvalOptions options;
  options.metrics.clear();
  for (const std::string& name : o.metrics) options.metrics.push_back(parse_metric(name));
  options.enumeration_cap = o.cap;
  options.threads = o.threads;
  const Metrics m = evaluate(in.data, in.space, in.params, in.vocab, options);
  out << "total=" << m.total << '\n' << std::setprecision(6);
  if (m.normal_acc) out << "normal_acc=" << *m.normal_acc << '\n';
  if (m.certified_acc) out << "certified_acc=" << *m.certified_acc << '\n';
  if (m.exhaustive_acc) out << "exhaustive_acc=" << *m.exhaustive_acc << '\n';
  out << "failures=" << m.failures << '\n';
  if (!o.summary.empty()) write_summary(o.summary, m);
  return kExitOk;
}

int cmd_enumerate(const Options& o, std::ostream& out) {
  const auto members = enumerate_space(load_space(o), tokenize(o.text), o.cap);
  for (const PerturbedString& z : members) out << join_tokens(z.tokens) << '\n';
  out << "count=" << members.size() << '\n';
  return kExitOk;
}

int cmd_selftest(const Options& o, std::ostream& out) {
  const auto checks = run_selftest(out, o.seed);
  const bool ok = std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  out << "selftest=" << (ok ? "pass" : "fail") << '\n';
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Certified robustness for attention classifiers under string perturbations",
               "recert"};
  app.require_subcommand(1);
  Options o;

  auto add_space = [&](CLI::App* sub) {
    sub->add_option("--space", o.space, "Perturbation space, e.g. \"Dup():1,SubSyn(syn.tsv):1\"")
        ->required();
    sub->add_option("--resource-dir", o.resource_dir, "Base directory for resource files");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "Train a classifier");
  train_cmd->add_option("--data", o.data, "Training TSV")->required();
  add_space(train_cmd);
  train_cmd->add_option("--mode", o.mode, "normal|augment|worst_of_k|certified")->required();
  train_cmd->add_option("--out", o.out, "Output model file")->required();
  train_cmd->add_option("--epochs", o.train.epochs);
  train_cmd->add_option("--lr", o.train.learning_rate);
  train_cmd->add_option("--kappa", o.train.kappa);
  train_cmd->add_option("--seed", o.train.seed);
  train_cmd->add_option("--batch", o.train.batch_size);
  train_cmd->add_option("--k", o.train.k, "Samples per step for worst_of_k");
  train_cmd->add_option("--d-model", o.model_config.d_model);
  train_cmd->add_option("--heads", o.model_config.n_heads);
  train_cmd->add_option("--d-hidden", o.model_config.d_hidden);
  train_cmd->add_option("--max-positions", o.max_positions);
  train_cmd->add_flag("--scale-scores", o.model_config.attention_scaling,
                      "Divide attention scores by sqrt(d_head)");
  train_cmd->add_option("--vocab-cap", o.vocab_cap);

  CLI::App* certify_cmd = app.add_subcommand("certify", "Certify every example of a dataset");
  certify_cmd->add_option("--model", o.model)->required();
  certify_cmd->add_option("--data", o.data)->required();
  add_space(certify_cmd);
  certify_cmd->add_option("--limit", o.limit, "Only the first N examples");
  certify_cmd->add_option("--threads", o.threads);

  CLI::App* eval_cmd = app.add_subcommand("eval", "Report accuracy metrics");
  eval_cmd->add_option("--model", o.model)->required();
  eval_cmd->add_option("--data", o.data)->required();
  add_space(eval_cmd);
  eval_cmd->add_option("--metric", o.metrics, "normal|certified|exhaustive (repeatable)")
      ->delimiter(',');
  eval_cmd->add_option("--limit", o.limit);
  eval_cmd->add_option("--cap", o.cap, "Enumeration cap for the exhaustive metric");
  eval_cmd->add_option("--threads", o.threads);
  eval_cmd->add_option("--summary", o.summary, "Write a machine-readable summary file");

  CLI::App* enum_cmd = app.add_subcommand("enumerate", "List the members of S(x)");
  add_space(enum_cmd);
  enum_cmd->add_option("--text", o.text)->required();
  enum_cmd->add_option("--cap", o.cap);

  CLI::App* self_cmd = app.add_subcommand("selftest", "Run built-in consistency checks");
  self_cmd->add_option("--seed", o.seed);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(o, out);
    if (*certify_cmd) return cmd_certify(o, out);
    if (*eval_cmd) return cmd_eval(o, out);
    if (*enum_cmd) return cmd_enumerate(o, out);
    if (*self_cmd) return cmd_selftest(o, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const SpecSyntaxError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UnknownTransformation& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace recert

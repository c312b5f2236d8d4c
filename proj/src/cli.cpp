#include "dce/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "dce/pipeline.hpp"
#include "dce/verify.hpp"

namespace dce {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string checkpoint;
  std::string target;
  int trials = 200;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

RunConfig resolve_config(const Options& o, const std::vector<std::string>& overrides) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  c.apply_overrides(overrides);
  return c;
}

std::string prepare_output(const RunConfig& c) {
  const std::string dir = c.resolved_output_dir();
  fs::create_directories(dir);
  return dir;
}

std::string in(const std::string& dir, const char* file) { return (fs::path(dir) / file).string(); }

void print_train_summary(const TrainResult& r, std::ostream& out) {
  out << "epochs run: " << r.history.size() << (r.stopped_early ? " (stopped early)" : "") << '\n';
  if (!r.history.empty()) {
    const auto& last = r.history.back();
    out << "final loss: " << last.total << '\n';
  }
  if (!std::isnan(r.history.empty() ? std::nan("") : r.history.back().val_accuracy))
    out << "best validation accuracy: " << r.best_val_accuracy << " (epoch " << r.best_epoch << ")\n";
}

int cmd_ingest(const RunConfig& c, const std::vector<std::string>& argv, std::ostream& out) {
  c.check();
  std::optional<DatasetBundle> bundle;
  KnowledgeBase kb = build_kb(c, &bundle);
  kb.freeze();
  const std::string dir = prepare_output(c);
  save_facts_tsv(kb, kb.relation_names(), in(dir, "kb.tsv"));
  std::size_t facts = 0;
  for (const auto& r : kb.relation_names()) facts += kb.facts(r).size();
  out << "entities: " << kb.entity_count() << "\nfacts: " << facts << '\n';
  if (bundle) {
    auto write = [&](const char* file, const std::vector<int>& docs) {
      std::ofstream f(in(dir, file));
      for (int d : docs) f << c.target << '\t' << bundle->docs[d] << '\t' << bundle->label_names[bundle->labels[d]] << '\n';
      out << file << ": " << docs.size() << '\n';
    };
    write("train.tsv", bundle->train);
    write("validation.tsv", bundle->validation);
    write("test.tsv", bundle->test);
    write("unlabeled.tsv", bundle->unlabeled);
    if (bundle->dropped_docs + bundle->dropped_citations > 0)
      out << "dropped documents: " << bundle->dropped_docs << ", dropped citations: " << bundle->dropped_citations
          << '\n';
  }
  write_manifest(c, "ingest", argv, in(dir, "manifest.json"));
  return kExitOk;
}

int cmd_dump_plan(const RunConfig& c, const std::string& target, std::ostream& out) {
  auto ex = build_experiment(c);
  if (target.empty() || target == c.target) {
    out << dump_plan(ex->predict);
    return kExitOk;
  }
  for (const auto& h : ex->heads)
    if (h.name == target) {
      out << dump_plan(h.plan);
      return kExitOk;
    }
  // any other derived predicate of the program
  out << dump_plan(compile(validate_program(ex->program, ex->kb), target, ex->kb));
  return kExitOk;
}

int cmd_train(const RunConfig& c, const std::vector<std::string>& argv, std::ostream& out) {
  auto ex = build_experiment(c);
  const std::string dir = prepare_output(c);
  write_manifest(c, "train", argv, in(dir, "manifest.json"));
  const auto result = train(ex->kb, ex->heads, ex->config.train, ex->validation_spec());
  write_history_csv(result, in(dir, "history.csv"));
  save_checkpoint(ex->kb, in(dir, "checkpoint.tsv"));
  print_train_summary(result, out);
  write_metrics(evaluate(*ex), out, in(dir, "metrics.csv"));
  return kExitOk;
}

int cmd_eval(const RunConfig& c, const std::string& checkpoint, const std::vector<std::string>& argv,
             std::ostream& out) {
  auto ex = build_experiment(c);
  restore_checkpoint(ex->kb, checkpoint);
  const std::string dir = prepare_output(c);
  write_manifest(c, "eval", argv, in(dir, "manifest.json"));
  write_metrics(evaluate(*ex), out, in(dir, "eval_metrics.csv"));
  return kExitOk;
}

int cmd_tune(const RunConfig& c, const std::vector<std::string>& argv, std::ostream& out) {
  auto ex = build_experiment(c);
  const std::string dir = prepare_output(c);
  write_manifest(c, "tune", argv, in(dir, "manifest.json"));
  const auto result = tune_weights(*ex);
  const TuneSpace space = TuneSpace::box(static_cast<int>(c.constraints.size()));
  std::ofstream log(in(dir, "tune_log.csv"));
  write_tune_log(result, space, log);
  std::ofstream best(in(dir, "best_config.json"));
  best << ex->config.to_json() << '\n';
  out << "evaluations: " << result.history.size() << "\nbest validation accuracy: " << -result.best_value
      << "\nbest weights:";
  for (std::size_t i = 0; i < c.constraints.size(); ++i)
    out << ' ' << to_string(c.constraints[i].kind) << '=' << result.best_point(static_cast<Eigen::Index>(i));
  out << '\n';
  return kExitOk;
}

int cmd_oracle_check(const RunConfig& c, const Options& o, const std::vector<std::string>& argv,
                     std::ostream& out) {
  const std::uint64_t seed = o.seed_set ? o.seed : c.seed;
  const auto oracle = check_oracle_equivalence(o.trials, seed);
  const auto grads = check_gradients(seed);
  const std::string dir = prepare_output(c);
  write_manifest(c, "oracle-check", argv, in(dir, "manifest.json"));
  write_oracle_report_csv(oracle, grads, in(dir, "oracle_report.csv"));

  const bool oracle_ok = oracle.violations == 0;
  out << (oracle_ok ? "PASS" : "FAIL") << " proof enumeration: " << oracle.trials << " instances, max deviation "
      << oracle.max_deviation << " (" << oracle.skipped << " redrawn over the proof budget)\n";
  for (const auto& f : oracle.failures) out << "  " << f << '\n';
  bool grads_ok = true;
  for (const auto& g : grads.cases) {
    const bool ok = g.max_relative_error < 1e-4;
    grads_ok &= ok;
    out << (ok ? "PASS" : "FAIL") << " gradient " << g.name << ": max relative error " << g.max_relative_error
        << " over " << g.cells << " cells\n";
  }
  return oracle_ok && grads_ok ? kExitOk : kExitVerify;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Differentiable constraint-based SSL toolkit", "dce"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config, "JSON run config")->check(CLI::ExistingFile);
    sub->allow_extras();
    sub->footer("Any config key can be overridden with --section.key=value.");
  };
  auto* ingest = app.add_subcommand("ingest", "build the knowledge base and write it as facts TSV");
  auto* dump = app.add_subcommand("dump-plan", "compile a predicate and print its plan");
  auto* trn = app.add_subcommand("train", "train; write history, checkpoint and metrics");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* tun = app.add_subcommand("tune", "tune constraint weights on validation accuracy");
  auto* oracle = app.add_subcommand("oracle-check", "proof-enumeration and gradient checks");
  for (auto* s : {ingest, dump, trn, eval, tun, oracle}) add_config(s);
  dump->add_option("-t,--target", o.target, "predicate to compile (default: the config target)");
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint TSV written by train")
      ->required()
      ->check(CLI::ExistingFile);
  oracle->add_option("--trials", o.trials, "random program instances")->check(CLI::PositiveNumber);
  oracle->add_option("--seed", o.seed, "seed (default: config seed)")->each([&](const std::string&) {
    o.seed_set = true;
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  std::vector<std::string> overrides;
  for (const auto& extra : sub->remaining()) {
    if (!extra.starts_with("--") || extra.find('=') == std::string::npos) {
      err << "dce: unexpected argument '" << extra << "'\n";
      return kExitUsage;
    }
    overrides.push_back(extra);
  }

  try {
    const RunConfig config = resolve_config(o, overrides);
    const std::string name = sub->get_name();
    if (name == "ingest") return cmd_ingest(config, args, out);
    if (name == "dump-plan") return cmd_dump_plan(config, o.target, out);
    if (name == "train") return cmd_train(config, args, out);
    if (name == "eval") return cmd_eval(config, o.checkpoint, args, out);
    if (name == "tune") return cmd_tune(config, args, out);
    return cmd_oracle_check(config, o, args, out);
  } catch (const ConfigError& e) {
    err << "dce: configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "dce: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "dce: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace dce

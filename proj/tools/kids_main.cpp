#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "kids/errors.hpp"
#include "kids/kernels.hpp"
#include "kids/pipeline.hpp"

namespace {

struct CliArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;
  std::string csv_path;
  std::string schema_path;
  bool seed_given = false;
  bool out_given = false;
};

// Precedence: built-in defaults < --config file < --set overrides (in order)
// < --csv/--schema < --seed/--out.
kids::RunConfig resolve_config(const CliArgs& a) {
  kids::RunConfig cfg;
  if (!a.config_path.empty()) cfg = kids::load_run_config(a.config_path);
  for (const auto& kv : a.overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got \"" + kv +
                                  "\"");
    cfg.set_override(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!a.csv_path.empty()) {
    cfg.source.kind = "csv";
    cfg.source.csv_path = a.csv_path;
    if (!a.schema_path.empty()) cfg.source.schema_path = a.schema_path;
  }
  if (a.seed_given) cfg.seed = a.seed;
  if (a.out_given) cfg.out_dir = a.out_dir;
  return cfg;
}

struct Subcommand {
  const char* name;
  const char* help;
  void (*fn)(const kids::RunConfig&);
};

constexpr Subcommand kSubcommands[] = {
    {"synth", "generate the synthetic dataset", kids::cmd_synth},
    {"preprocess", "split, standardize, and one-hot encode the source",
     kids::cmd_preprocess},
    {"profile", "class frequencies and top-variance correlations",
     kids::cmd_profile},
    {"train-teacher", "train the teacher network", kids::cmd_train_teacher},
    {"shap", "global feature attribution of the teacher", kids::cmd_shap},
    {"ablate", "pick the smallest K that preserves macro-F1", kids::cmd_ablate},
    {"distill", "grid-search (T, alpha) and train the compressed student",
     kids::cmd_distill},
    {"quantize", "post-training int8 quantization of the student",
     kids::cmd_quantize},
    {"eval", "test-split metrics, confusion matrices, and reports",
     kids::cmd_eval},
    {"bench", "latency and throughput table", kids::cmd_bench},
    {"run-all", "every stage in order", kids::cmd_run_all},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "kids — teacher-student intrusion-detection pipeline\n"
      "Trains a wide teacher on flow features, prunes inputs by global\n"
      "attribution, distills a Kronecker-factorized student, quantizes it to\n"
      "int8, and reports quality/latency artifacts into a run directory."};
  app.fallthrough();  // global flags may follow the subcommand

  CliArgs args;
  app.add_option("--config", args.config_path,
                 "run configuration file (json)");
  auto* out_opt = app.add_option("--out", args.out_dir, "run directory");
  auto* seed_opt = app.add_option("--seed", args.seed, "root seed (u64)");
  app.add_option("--set", args.overrides,
                 "config override as dotted key=value, e.g. "
                 "--set train.epochs=10 (repeatable)");
  app.add_option("--csv", args.csv_path,
                 "run on a csv dataset instead of the synthetic preset");
  app.add_option("--schema", args.schema_path, "column schema json for --csv");
  app.require_subcommand(0, 1);

  for (const auto& s : kSubcommands) app.add_subcommand(s.name, s.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the parse error
    return code == 0 ? 0 : 1;
  }

  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 1;
  }
  const std::string chosen = app.get_subcommands()[0]->get_name();
  args.seed_given = seed_opt->count() > 0;
  args.out_given = out_opt->count() > 0;

  try {
    kids::kern::active();  // resolve KIDS_KERNEL up front so typos fail fast
    kids::RunConfig cfg = resolve_config(args);
    for (const auto& s : kSubcommands) {
      if (chosen == s.name) {
        s.fn(cfg);
        return 0;
      }
    }
    std::cerr << "unknown subcommand: " << chosen << "\n";
    return 1;
  } catch (const kids::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const kids::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

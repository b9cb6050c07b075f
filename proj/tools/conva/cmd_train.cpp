#include <filesystem>
#include <memory>
#include <set>
#include <sstream>

#include "commands.hpp"
#include "conva/dataset_io.hpp"
#include "conva/error.hpp"
#include "conva/eval_prompts.hpp"
#include "conva/fs_util.hpp"
#include "conva/logging.hpp"
#include "conva/probe_trainer.hpp"

namespace conva::cli {
namespace fs = std::filesystem;

namespace {

struct TrainOptions {
  fs::path dump;
  fs::path out;
  std::string value_id;
  std::optional<double> p0;
  std::optional<double> g0;
  probe::SelectionPolicy policy;
  probe::TrainConfig config;
};

std::string accuracy_csv(const probe::TrainedValue& tv) {
  const std::set<std::size_t> selected(tv.plan.selected_layers.begin(), tv.plan.selected_layers.end());
  std::ostringstream csv;
  csv.precision(17);
  csv << "layer,train_accuracy,test_accuracy,selected\n";
  for (const auto& p : tv.store.entries) {
    csv << p.layer << ',' << p.train_accuracy << ',' << p.test_accuracy << ','
        << (selected.contains(p.layer) ? 1 : 0) << '\n';
  }
  return csv.str();
}

void run(const TrainOptions& o) {
  const auto dump = io::read_activation_dump(o.dump);
  const auto value_id = o.value_id.empty() ? o.dump.stem().string() : o.value_id;

  auto policy = o.policy;
  if (const auto* known = eval::find_value(value_id)) {
    policy.p0 = known->p0;
    policy.g0 = known->g0;
  }
  if (o.p0) policy.p0 = *o.p0;
  if (o.g0) policy.g0 = *o.g0;

  const auto trained = probe::train_value(dump, value_id, o.config, policy);

  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + o.out.string() + ": " + ec.message());

  io::write_probe_store(trained.store, o.out / "probes.json");
  io::write_value_vectors({value_id, dump.model_id, dump.dim, trained.vectors}, o.out / "vectors.json");
  io::PlanFile plan{trained.plan, dump.model_id, "probes.json", "vectors.json"};
  io::write_control_plan(plan, o.out / "plan.json");
  atomic_write(o.out / "accuracy.csv", accuracy_csv(trained));

  log::info("trained value", {{"value_id", value_id},
                              {"layers", dump.layer_count},
                              {"selected", trained.plan.selected_layers},
                              {"out", o.out.string()}});
}

}  // namespace

void register_train(CLI::App& app) {
  auto opts = std::make_shared<TrainOptions>();
  auto* cmd = app.add_subcommand("train", "Fit per-layer probes on a CVAD dump and write a control plan");
  cmd->set_config("--config", "", "Optional key=value file supplying flag defaults");
  cmd->add_option("--dump", opts->dump, "Labeled activation dump (CVAD)")->required();
  cmd->add_option("--out", opts->out, "Output directory for probes.json, vectors.json, plan.json, accuracy.csv")
      ->required();
  cmd->add_option("--value", opts->value_id, "Value id (defaults to the dump file stem)");
  cmd->add_option("--p0", opts->p0, "Target probe probability in (0,1); defaults from the value table")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--g0", opts->g0, "Gate threshold in [0,1]; defaults from the value table")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--threshold", opts->policy.accuracy_threshold,
                  "Select layers whose test accuracy is strictly above this")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--tail", opts->policy.excluded_tail_layers, "Number of final layers never selected")
      ->capture_default_str();
  cmd->add_option("--seed", opts->config.rng_seed, "Seed for the stratified train/test split")
      ->capture_default_str();
  cmd->add_option("--lr", opts->config.learning_rate, "Gradient-descent learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--max-iter", opts->config.max_iterations, "Maximum gradient-descent iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--tol", opts->config.loss_tolerance, "Stop when the loss changes by less than this")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--l2", opts->config.l2_penalty, "L2 penalty on w")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--test-fraction", opts->config.test_fraction, "Held-out fraction per class")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--threads", opts->config.threads, "Layers trained in parallel (0 = all cores)")
      ->capture_default_str();
  cmd->callback([opts] {
    if (opts->p0 && !(*opts->p0 > 0.0 && *opts->p0 < 1.0)) {
      throw Failure(kExitGeneric, "usage", "--p0 must lie strictly inside (0,1)");
    }
    run(*opts);
  });
}

}  // namespace conva::cli

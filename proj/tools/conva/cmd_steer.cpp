#include <filesystem>
#include <memory>

#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "conva/dataset_io.hpp"
#include "conva/error.hpp"
#include "conva/fs_util.hpp"
#include "conva/probe_trainer.hpp"
#include "conva/steering.hpp"

namespace conva::cli {
namespace fs = std::filesystem;

namespace {

struct SteerOptions {
  fs::path plan;
  std::size_t layer = 0;
  fs::path embeddings;
  bool gate_open = false;
  fs::path out;
  fs::path report;
  bool pass_through = false;
};

void run(const SteerOptions& o) {
  const auto value = io::load_value(o.plan);
  const auto& plan = value.plan_file.plan;
  const auto executor = steer::make_plan_executor(plan, value.probes.entries, value.vectors.vectors);

  const bool selected = executor.is_selected(o.layer);
  if (!selected && !o.pass_through) {
    throw Failure(kExitPlan, "plan",
                  "layer " + std::to_string(o.layer) + " is not selected by the plan for '" +
                      plan.value_id + "' (use --pass-through to copy it unchanged)");
  }

  auto dump = io::read_activation_dump(o.embeddings);
  if (dump.layer_count != 1) {
    throw Error(ErrorKind::kFormat, "embeddings file must hold exactly one layer, found " +
                                        std::to_string(dump.layer_count));
  }
  if (dump.dim != value.probes.dim) {
    throw Error(ErrorKind::kDimension, "embeddings have dimension " + std::to_string(dump.dim) +
                                           ", plan probes expect " + std::to_string(value.probes.dim));
  }

  std::vector<std::vector<double>> rows(dump.n_samples);
  for (std::size_t i = 0; i < dump.n_samples; ++i) {
    const auto r = dump.row(0, i);
    rows[i].assign(r.begin(), r.end());
  }

  nlohmann::json positions = nlohmann::json::array();
  if (selected) {
    const auto results = executor.apply_detailed(o.layer, rows, o.gate_open);
    auto& block = dump.layers[0];
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& r = results[i];
      for (std::size_t j = 0; j < dump.dim; ++j) {
        block[i * dump.dim + j] = static_cast<float>(r.steered[j]);
      }
      positions.push_back({{"index", i},
                           {"epsilon", r.epsilon},
                           {"pre_p", r.pre_probability},
                           {"post_p", r.post_probability},
                           {"applied", r.applied}});
    }
  } else {
    const auto* layer_probe = executor.probe(o.layer);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      nlohmann::json p = layer_probe ? nlohmann::json(probe::classify(*layer_probe, rows[i]))
                                     : nlohmann::json(nullptr);
      positions.push_back({{"index", i}, {"epsilon", 0.0}, {"pre_p", p}, {"post_p", p}, {"applied", false}});
    }
  }

  io::write_activation_dump(dump, o.out);
  const nlohmann::json report = {{"format_version", 1},
                                 {"value_id", plan.value_id},
                                 {"layer", o.layer},
                                 {"gate_open", o.gate_open},
                                 {"p0", plan.p0},
                                 {"pass_through", !selected},
                                 {"positions", std::move(positions)}};
  const auto report_path = o.report.empty() ? fs::path(o.out.string() + ".report.json") : o.report;
  atomic_write(report_path, report.dump(1) + "\n");
}

}  // namespace

void register_steer(CLI::App& app) {
  auto opts = std::make_shared<SteerOptions>();
  auto* cmd = app.add_subcommand("steer", "Steer every embedding in a one-layer CVAD dump");
  cmd->set_config("--config", "", "Optional key=value file supplying flag defaults");
  cmd->add_option("--plan", opts->plan, "plan.json written by 'conva train'")->required();
  cmd->add_option("--layer", opts->layer, "Layer index the embeddings were captured at")->required();
  cmd->add_option("--embeddings", opts->embeddings, "One-layer CVAD dump of embeddings")->required();
  cmd->add_option("--gate-open", opts->gate_open, "Gate decision for this prompt (true/false)")->required();
  cmd->add_option("--out", opts->out, "Output CVAD dump of steered embeddings")->required();
  cmd->add_option("--report", opts->report, "Per-position JSON report (default <out>.report.json)");
  cmd->add_flag("--pass-through", opts->pass_through,
                "Copy embeddings unchanged when the layer is not in the plan");
  cmd->callback([opts] { run(*opts); });
}

}  // namespace conva::cli

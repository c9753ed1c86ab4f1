#pragma once
// Subcommand implementations behind the `ppimt` executable. Configuration is
// a JSON document merged over built-in defaults; `key.path=value` overrides
// are applied afterwards. Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppimt/error.hpp"
#include "ppimt/estimators.hpp"
#include "ppimt/experiments.hpp"
#include "ppimt/inference.hpp"
#include "ppimt/verify.hpp"

namespace ppimt::cli {

using nlohmann::json;

enum ExitCode : int { kSuccess = 0, kUsageError = 1, kDataError = 2, kPropertyFailure = 3 };

enum class Subcommand { Synthetic, Estimate, Verify, Report };

struct CliConfig {
  Subcommand subcommand = Subcommand::Synthetic;
  std::optional<std::filesystem::path> config_path;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  std::vector<std::string> overrides;
  std::size_t threads = 1;
};

inline json default_config() {
  json methods = json::array();
  for (auto m : kAllMethods) {
    json entry{{"method", std::string(method_name(m))}};
    if (m == Method::Reppi2) entry["power_tune"] = true;  // two-fold RePPI tunes lambda by definition
    methods.push_back(entry);
  }
  return json{
      {"synthetic",
       {{"n_tasks", 20},
        {"items_per_task", 186},
        {"p_min", 0.1},
        {"p_max", 10.0},
        {"noise_sd", 0.1},
        {"p_ranges", json::array()}}},
      {"runner",
       {{"methods", methods},
        {"label_budgets", json::array({10, 20, 30, 40})},
        {"replications", 2000},
        {"alpha", 0.05},
        {"reference_method", "ppipp"},
        {"k_folds", 5},
        {"freeze_auxiliary", false}}},
      {"estimate",
       {{"input", ""},
        {"methods", methods},
        {"label_budgets", json::array()},
        {"bounded_scores", true},
        {"replications", 0}}},
      {"report", {{"input", ""}}},
      {"output", {{"formats", json::array({"csv", "json"})}}},
      {"verify", {{"lambda_star_offset", 0.0}}},
  };
}

namespace detail {

inline void merge_known(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) ppimt::detail::fail(Errc::ConfigInvalid, "'" + path + "' must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) ppimt::detail::fail(Errc::ConfigInvalid, "unknown config key '" + key + "'");
    auto& slot = base[it.key()];
    if (slot.is_object())
      merge_known(slot, it.value(), key);
    else
      slot = it.value();
  }
}

inline void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    ppimt::detail::fail(Errc::ConfigInvalid, "override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part))
      ppimt::detail::fail(Errc::ConfigInvalid, "unknown config key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;  // bare strings need no quoting
  *node = value;
}

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    ppimt::detail::fail(Errc::ConfigInvalid, "config key '" + key + "': " + e.what());
  }
}

}  // namespace detail

/// Defaults, then the config file, then overrides.
inline json resolve_config(const CliConfig& cli) {
  json cfg = default_config();
  if (cli.config_path) {
    std::ifstream in(*cli.config_path);
    if (!in) ppimt::detail::fail(Errc::ConfigInvalid, "cannot open config '" + cli.config_path->string() + "'");
    json file = json::parse(in, nullptr, false);
    if (file.is_discarded()) ppimt::detail::fail(Errc::ConfigInvalid, "config is not valid JSON");
    detail::merge_known(cfg, file, "");
  }
  for (const auto& o : cli.overrides) detail::apply_override(cfg, o);
  return cfg;
}

inline std::vector<MethodConfig> parse_methods(const json& arr) {
  if (!arr.is_array()) ppimt::detail::fail(Errc::ConfigInvalid, "methods must be a list");
  std::vector<MethodConfig> out;
  for (const auto& e : arr) {
    MethodConfig mc;
    std::string name;
    if (e.is_string()) {
      name = e.get<std::string>();
    } else if (e.is_object()) {
      for (auto it = e.begin(); it != e.end(); ++it)
        if (it.key() != "method" && it.key() != "power_tune" && it.key() != "clip" && it.key() != "label")
          ppimt::detail::fail(Errc::ConfigInvalid, "unknown method field '" + it.key() + "'");
      name = detail::get_as<std::string>(e, "method");
      mc.power_tune = e.value("power_tune", false);
      mc.clip = e.value("clip", true);
      mc.label = e.value("label", std::string{});
    } else {
      ppimt::detail::fail(Errc::ConfigInvalid, "method entries must be names or objects");
    }
    const auto m = parse_method(name);
    if (!m) ppimt::detail::fail(Errc::ConfigInvalid, "unknown method '" + name + "'");
    mc.method = *m;
    out.push_back(mc);
  }
  return out;
}

inline RunConfig parse_run_config(const json& cfg, std::size_t threads) {
  const auto& r = cfg.at("runner");
  RunConfig rc;
  rc.methods = parse_methods(r.at("methods"));
  rc.label_budgets = detail::get_as<std::vector<std::size_t>>(r, "label_budgets");
  rc.replications = detail::get_as<std::size_t>(r, "replications");
  rc.alpha = detail::get_as<double>(r, "alpha");
  rc.reference_method = detail::get_as<std::string>(r, "reference_method");
  rc.k_folds = detail::get_as<std::size_t>(r, "k_folds");
  rc.freeze_auxiliary = detail::get_as<bool>(r, "freeze_auxiliary");
  rc.threads = threads;
  return rc;
}

inline SyntheticSpec parse_synthetic_spec(const json& cfg, std::uint64_t seed) {
  const auto& s = cfg.at("synthetic");
  SyntheticSpec spec;
  spec.n_tasks = detail::get_as<std::size_t>(s, "n_tasks");
  spec.items_per_task = detail::get_as<std::size_t>(s, "items_per_task");
  spec.p_min = detail::get_as<double>(s, "p_min");
  spec.p_max = detail::get_as<double>(s, "p_max");
  spec.noise_sd = detail::get_as<double>(s, "noise_sd");
  spec.seed = seed;
  return spec;
}

inline std::set<ReportFormat> parse_formats(const json& cfg) {
  std::set<ReportFormat> out;
  for (const auto& f : detail::get_as<std::vector<std::string>>(cfg.at("output"), "formats")) {
    if (f == "csv")
      out.insert(ReportFormat::Csv);
    else if (f == "json")
      out.insert(ReportFormat::Json);
    else
      ppimt::detail::fail(Errc::ConfigInvalid, "unknown output format '" + f + "'");
  }
  return out;
}

inline void write_manifest(const std::filesystem::path& out_dir, const json& cfg, std::uint64_t seed,
                           std::string_view subcommand) {
  std::filesystem::create_directories(out_dir);
  std::ofstream os(out_dir / "manifest.json", std::ios::binary);
  if (!os) ppimt::detail::fail(Errc::IoError, "cannot write manifest in '" + out_dir.string() + "'");
  os << json{{"subcommand", subcommand},
             {"seed", seed},
             {"library_version", std::string(kLibraryVersion)},
             {"config", cfg}}
            .dump(2)
     << '\n';
}

inline std::string short_real(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

inline void print_pooled(const ReplicationSummary& s, std::ostream& out) {
  out << std::left << std::setw(12) << "method" << std::setw(6) << "n" << std::setw(14) << "rel_mse"
      << std::setw(14) << "coverage" << "mean_width\n";
  for (const auto& c : s.cells) {
    if (c.task_id != kAggregateTaskId) continue;
    out << std::left << std::setw(12) << c.method << std::setw(6) << c.n << std::setw(14) << short_real(c.rel_mse)
        << std::setw(14) << short_real(c.coverage) << short_real(c.mean_ci_width) << '\n';
  }
}

inline int exit_code_for(Errc e) {
  switch (e) {
    case Errc::ConfigInvalid:
    case Errc::BadSpec:
    case Errc::BadAlpha:
    case Errc::BadK: return kUsageError;
    default: return kDataError;
  }
}

// ---- subcommands -------------------------------------------------------------

inline int cmd_synthetic(const CliConfig& cli, std::ostream& out, std::ostream& err) {
  try {
    const json cfg = resolve_config(cli);
    const auto rc = parse_run_config(cfg, cli.threads);
    const auto formats = parse_formats(cfg);
    auto base = parse_synthetic_spec(cfg, cli.seed);

    std::vector<std::pair<SyntheticSpec, std::filesystem::path>> jobs;
    const auto& ranges = cfg.at("synthetic").at("p_ranges");
    if (ranges.empty()) {
      validate_spec(base);
      jobs.emplace_back(base, cli.out_dir);
    } else {
      for (const auto& r : ranges) {
        if (!r.is_array() || r.size() != 2) ppimt::detail::fail(Errc::ConfigInvalid, "p_ranges entries must be [p_min, p_max]");
        SyntheticSpec spec = base;
        spec.p_min = r[0].get<double>();
        spec.p_max = r[1].get<double>();
        validate_spec(spec);
        std::ostringstream dir;
        dir << "p_" << short_real(spec.p_min) << "_" << short_real(spec.p_max);
        jobs.emplace_back(spec, cli.out_dir / dir.str());
      }
    }
    write_manifest(cli.out_dir, cfg, cli.seed, "synthetic");
    for (const auto& [spec, dir] : jobs) {
      const auto data = generate_synthetic_study(spec);
      const auto summary = run_replications(data.study, rc, cli.seed);
      emit_reports(summary, dir, formats);
      out << "p in [" << short_real(spec.p_min) << ", " << short_real(spec.p_max) << "] -> " << dir.string() << '\n';
      print_pooled(summary, out);
    }
    return kSuccess;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
}

inline int cmd_estimate(const CliConfig& cli, std::ostream& out, std::ostream& err) {
  try {
    const json cfg = resolve_config(cli);
    const auto& ec = cfg.at("estimate");
    const auto input = detail::get_as<std::string>(ec, "input");
    if (input.empty()) ppimt::detail::fail(Errc::ConfigInvalid, "estimate.input is required");
    const auto methods = parse_methods(ec.at("methods"));
    const auto budgets = detail::get_as<std::vector<std::size_t>>(ec, "label_budgets");
    const double alpha = detail::get_as<double>(cfg.at("runner"), "alpha");
    const auto k_folds = detail::get_as<std::size_t>(cfg.at("runner"), "k_folds");
    const auto replications = detail::get_as<std::size_t>(ec, "replications");
    LoadOptions lo;
    lo.bounded_scores = detail::get_as<bool>(ec, "bounded_scores");
    const auto study = load_semi_synthetic(std::filesystem::path(input), lo);

    std::filesystem::create_directories(cli.out_dir);
    write_manifest(cli.out_dir, cfg, cli.seed, "estimate");
    const auto path = cli.out_dir / "estimates.csv";
    std::ofstream os(path, std::ios::binary);
    if (!os) ppimt::detail::fail(Errc::IoError, "cannot write '" + path.string() + "'");
    os << "task_id,method,n,theta_hat,lambda,se,ci_lower,ci_upper,ci_width\n";

    std::vector<std::vector<std::size_t>> pools;
    for (const auto& t : study.tasks) pools.push_back(label_pool(t));
    std::vector<std::optional<std::size_t>> grid;
    if (budgets.empty())
      grid.push_back(std::nullopt);
    else
      for (auto n : budgets) grid.emplace_back(n);

    std::size_t failures = 0;
    for (const auto& n : grid) {
      MultiTaskStudy s = study;
      for (std::size_t t = 0; t < s.num_tasks(); ++t) {
        if (!n) continue;
        if (*n > pools[t].size())
          ppimt::detail::fail(Errc::TooFewLabels, "task '" + s.tasks[t].task_id + "' has only " +
                                                     std::to_string(pools[t].size()) + " eligible labels");
        s.tasks[t].labeled = srs_from_pool(StreamKey{cli.seed, t, 0, StreamPurpose::LabelDraw}, pools[t],
                                           s.tasks[t].size(), *n);
      }
      for (std::size_t t = 0; t < s.num_tasks(); ++t) {
        const auto& task = s.tasks[t];
        for (const auto& mc : methods) {
          try {
            const auto est = estimate(mc.method, task, s, EstimatorOptions{mc.power_tune, mc.clip, k_folds},
                                      StreamKey{cli.seed, t, 0, StreamPurpose::FoldSplit});
            residuals_for_method(est, task);
            const auto ci = wald_ci(est.theta_hat, est.residuals, est.n_labeled, task.size(), alpha);
            os << task.task_id << ',' << mc.resolved_label() << ',' << est.n_labeled << ','
               << format_real(est.theta_hat) << ',' << format_real(est.lambda_used) << ',' << format_real(ci.se)
               << ',' << format_real(ci.lower) << ',' << format_real(ci.upper) << ',' << format_real(ci.width())
               << '\n';
          } catch (const Error& e) {
            ++failures;
            err << "task '" << task.task_id << "' method " << mc.resolved_label() << ": " << e.what() << '\n';
          }
        }
      }
    }
    out << "wrote " << path.string() << '\n';

    if (replications > 0 && !budgets.empty()) {
      RunConfig rc = parse_run_config(cfg, cli.threads);
      rc.methods = methods;
      rc.label_budgets = budgets;
      rc.replications = replications;
      const auto summary = run_replications(study, rc, cli.seed);
      emit_reports(summary, cli.out_dir, parse_formats(cfg));
      print_pooled(summary, out);
    }
    return failures == 0 ? kSuccess : kDataError;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
}

inline int cmd_verify(const CliConfig& cli, std::ostream& out, std::ostream& err) {
  try {
    const json cfg = resolve_config(cli);
    VerifyHooks hooks;
    hooks.lambda_star_offset = detail::get_as<double>(cfg.at("verify"), "lambda_star_offset");
    const auto results = run_theory_suite(cli.seed, hooks);
    bool ok = true;
    for (const auto& r : results) {
      out << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(34) << r.name
          << " max_dev=" << std::scientific << std::setprecision(3) << r.max_deviation << " tol=" << r.tolerance
          << std::defaultfloat << '\n';
      ok = ok && r.passed;
    }
    return ok ? kSuccess : kPropertyFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  }
}

inline int cmd_report(const CliConfig& cli, std::ostream& out, std::ostream& err) {
  try {
    const json cfg = resolve_config(cli);
    const auto input = detail::get_as<std::string>(cfg.at("report"), "input");
    if (input.empty()) ppimt::detail::fail(Errc::ConfigInvalid, "report.input is required");
    std::ifstream in(input);
    if (!in) ppimt::detail::fail(Errc::IoError, "cannot open '" + input + "'");
    const auto summary = read_summary_csv(in);
    emit_reports(summary, cli.out_dir, parse_formats(cfg));
    print_pooled(summary, out);
    return kSuccess;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  }
}

inline int run(const CliConfig& cli, std::ostream& out, std::ostream& err) {
  switch (cli.subcommand) {
    case Subcommand::Synthetic: return cmd_synthetic(cli, out, err);
    case Subcommand::Estimate: return cmd_estimate(cli, out, err);
    case Subcommand::Verify: return cmd_verify(cli, out, err);
    case Subcommand::Report: return cmd_report(cli, out, err);
  }
  return kUsageError;
}

}  // namespace ppimt::cli

#pragma once
// Study generation (synthetic f_p(x) = x^p tasks and CSV ingestion),
// Monte Carlo replication over label draws, metric aggregation, and tidy
// long-format report emission.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ppimt/core_data.hpp"
#include "ppimt/error.hpp"
#include "ppimt/estimators.hpp"
#include "ppimt/inference.hpp"
#include "ppimt/sampling.hpp"

namespace ppimt {

inline constexpr std::string_view kLibraryVersion = "0.3.0";

// ---- synthetic studies -----------------------------------------------------

struct SyntheticSpec {
  std::size_t n_tasks = 20;
  std::size_t items_per_task = 186;
  double p_min = 0.1;
  double p_max = 10.0;
  double noise_sd = 0.1;
  std::uint64_t seed = 0;
};

struct SyntheticStudy {
  MultiTaskStudy study;
  std::vector<double> exponents;  // p_t per task
};

inline void validate_spec(const SyntheticSpec& spec) {
  if (spec.n_tasks < 1) detail::fail(Errc::BadSpec, "n_tasks must be >= 1");
  if (spec.items_per_task < 2) detail::fail(Errc::BadSpec, "items_per_task must be >= 2");
  if (!(spec.p_min > 0.0)) detail::fail(Errc::BadSpec, "p_min must be > 0");
  if (!(spec.p_min <= spec.p_max))
    detail::fail(Errc::BadSpec, "p_min=" + std::to_string(spec.p_min) + " exceeds p_max=" + std::to_string(spec.p_max));
  if (!(spec.noise_sd >= 0.0) || !std::isfinite(spec.noise_sd)) detail::fail(Errc::BadSpec, "noise_sd must be >= 0");
}

inline std::string synthetic_task_id(std::size_t t) {
  std::ostringstream os;
  os << "task_" << std::setw(3) << std::setfill('0') << t;
  return os.str();
}

/// Y = x^p_t + N(0, noise_sd^2), Y_hat = x, x ~ U(0,1), p_t ~ U(p_min, p_max).
/// Every Y is retained so theta_star is known; no item starts labeled.
inline SyntheticStudy generate_synthetic_study(const SyntheticSpec& spec) {
  validate_spec(spec);
  SyntheticStudy out;
  for (std::size_t t = 0; t < spec.n_tasks; ++t) {
    Rng rng(StreamKey{spec.seed, t, 0, StreamPurpose::DataGeneration});
    const double p = spec.p_min == spec.p_max ? spec.p_min : rng.uniform(spec.p_min, spec.p_max);
    TaskDataset task;
    task.task_id = synthetic_task_id(t);
    task.y_hat.resize(spec.items_per_task);
    task.y.resize(spec.items_per_task);
    task.labeled.assign(spec.items_per_task, false);
    for (std::size_t i = 0; i < spec.items_per_task; ++i) {
      const double x = rng.uniform01();
      double y = std::pow(x, p);
      if (spec.noise_sd > 0.0) y += spec.noise_sd * rng.normal();
      task.y_hat[i] = x;
      task.y[i] = y;
    }
    out.study.tasks.push_back(std::move(task));
    out.exponents.push_back(p);
  }
  out.study = validate_study(std::move(out.study));
  return out;
}

// ---- CSV ingestion ---------------------------------------------------------

struct LoadOptions {
  bool bounded_scores = true;  // y_hat must lie in [0, 1]
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& text, std::size_t row, std::string_view column) {
  const std::string t = trim(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (t.empty() || used != t.size())
    fail(Errc::ParseError, "row " + std::to_string(row) + ", column '" + std::string(column) +
                               "': cannot parse '" + text + "' as a number");
  return v;
}

}  // namespace detail

inline constexpr std::array<std::string_view, 5> kCsvColumns{"task_id", "item_id", "y_hat", "y", "label_eligible"};

/// Reads `task_id,item_id,y_hat,y,label_eligible`. Rows flagged eligible start
/// out labeled; y may be present on other rows as simulation ground truth.
inline MultiTaskStudy load_semi_synthetic(std::istream& in, const LoadOptions& opts = {}) {
  std::string line;
  if (!std::getline(in, line)) detail::fail(Errc::ParseError, "row 1: missing header");
  {
    auto header = detail::split_csv_line(line);
    if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
    if (header.size() != kCsvColumns.size())
      detail::fail(Errc::SchemaViolation, "row 1: expected " + std::to_string(kCsvColumns.size()) + " columns");
    for (std::size_t c = 0; c < header.size(); ++c)
      if (detail::trim(header[c]) != kCsvColumns[c])
        detail::fail(Errc::SchemaViolation, "row 1, column " + std::to_string(c + 1) + ": expected '" +
                                                std::string(kCsvColumns[c]) + "', found '" + header[c] + "'");
  }

  MultiTaskStudy study;
  std::unordered_map<std::string, std::size_t> task_pos;
  std::vector<std::set<std::string>> item_ids;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty() || line == "\r") continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != kCsvColumns.size())
      detail::fail(Errc::ParseError, "row " + std::to_string(row) + ": expected 5 fields, found " +
                                         std::to_string(f.size()));
    const std::string task_id = detail::trim(f[0]);
    const std::string item_id = detail::trim(f[1]);
    if (task_id.empty()) detail::fail(Errc::SchemaViolation, "row " + std::to_string(row) + ", column 'task_id': empty");
    const double y_hat = detail::parse_real(f[2], row, "y_hat");
    if (!std::isfinite(y_hat))
      detail::fail(Errc::SchemaViolation, "row " + std::to_string(row) + ", column 'y_hat': non-finite");
    if (opts.bounded_scores && (y_hat < 0.0 || y_hat > 1.0))
      detail::fail(Errc::SchemaViolation, "row " + std::to_string(row) + ", column 'y_hat': " + detail::trim(f[2]) +
                                              " outside [0,1]");
    std::optional<double> y;
    if (!detail::trim(f[3]).empty()) {
      y = detail::parse_real(f[3], row, "y");
      if (!std::isfinite(*y))
        detail::fail(Errc::SchemaViolation, "row " + std::to_string(row) + ", column 'y': non-finite");
    }
    const std::string flag = detail::trim(f[4]);
    if (flag != "0" && flag != "1")
      detail::fail(Errc::SchemaViolation, "row " + std::to_string(row) + ", column 'label_eligible': '" + flag +
                                              "' is not 0 or 1");
    const bool eligible = flag == "1";
    if (eligible && !y)
      detail::fail(Errc::SchemaViolation, "row " + std::to_string(row) + ": label_eligible=1 but y is empty");

    auto [it, inserted] = task_pos.try_emplace(task_id, study.tasks.size());
    if (inserted) {
      study.tasks.push_back(TaskDataset{task_id, {}, {}, {}});
      item_ids.emplace_back();
    }
    if (!item_ids[it->second].insert(item_id).second)
      detail::fail(Errc::SchemaViolation, "row " + std::to_string(row) + ": duplicate item_id '" + item_id +
                                              "' in task '" + task_id + "'");
    auto& task = study.tasks[it->second];
    task.y_hat.push_back(y_hat);
    task.y.push_back(y);
    task.labeled.push_back(eligible);
  }
  if (study.tasks.empty()) detail::fail(Errc::SchemaViolation, "no data rows");
  return validate_study(std::move(study));
}

inline MultiTaskStudy load_semi_synthetic(const std::filesystem::path& path, const LoadOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) detail::fail(Errc::IoError, "cannot open '" + path.string() + "'");
  return load_semi_synthetic(in, opts);
}

// ---- replication runner ----------------------------------------------------

struct MethodConfig {
  Method method = Method::Classical;
  bool power_tune = false;
  bool clip = true;
  std::string label;  // defaults to the method name, suffixed "_pt" when tuned

  std::string resolved_label() const {
    if (!label.empty()) return label;
    std::string l(method_name(method));
    if (power_tune && (method == Method::Reppi2 || method == Method::Greppi || method == Method::Areppi)) l += "_pt";
    return l;
  }
};

struct RunConfig {
  std::vector<MethodConfig> methods;
  std::vector<std::size_t> label_budgets;
  std::size_t replications = 100;
  double alpha = 0.05;
  std::string reference_method = "ppipp";  // a resolved label from `methods`
  std::size_t k_folds = 5;
  // Keep every auxiliary task's labels at one fixed draw so the cross-task
  // recalibrator does not change across replications of a target task.
  bool freeze_auxiliary = false;
  std::size_t threads = 1;
};

struct SummaryCell {
  std::string task_id;  // kAggregateTaskId for the pooled row
  std::string method;
  std::size_t n = 0;
  double mse = std::numeric_limits<double>::quiet_NaN();
  double mc_se_mse = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double mean_ci_width = std::numeric_limits<double>::quiet_NaN();
  double rel_mse = std::numeric_limits<double>::quiet_NaN();
  double rel_width = std::numeric_limits<double>::quiet_NaN();
  std::size_t replications = 0;  // successful replications
  std::size_t failures = 0;
  bool has_ground_truth = true;
};

inline constexpr std::string_view kAggregateTaskId = "ALL";

struct ReplicationSummary {
  std::vector<SummaryCell> cells;
  // Per (method label, n): squared error summed over tasks, one entry per
  // replication (NaN when any task failed). Used for paired Monte Carlo SEs.
  std::map<std::pair<std::string, std::size_t>, std::vector<double>> replicate_sq_error;

  bool empty() const noexcept { return cells.empty(); }

  const SummaryCell* find(std::string_view task_id, std::string_view method, std::size_t n) const {
    for (const auto& c : cells)
      if (c.task_id == task_id && c.method == method && c.n == n) return &c;
    return nullptr;
  }
};

namespace detail {

struct ReplicateOutcome {
  double sq_error = 0.0;
  double width = 0.0;
  bool hit = false;
  bool ok = false;
};

inline void check_config(const RunConfig& cfg) {
  if (cfg.methods.empty()) fail(Errc::ConfigInvalid, "no methods configured");
  if (cfg.label_budgets.empty()) fail(Errc::ConfigInvalid, "no label budgets configured");
  if (cfg.replications < 1) fail(Errc::ConfigInvalid, "replications must be >= 1");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) fail(Errc::ConfigInvalid, "alpha must lie in (0,1)");
  std::set<std::string> labels;
  for (const auto& m : cfg.methods)
    if (!labels.insert(m.resolved_label()).second) fail(Errc::ConfigInvalid, "duplicate method label " + m.resolved_label());
  if (!labels.count(cfg.reference_method))
    fail(Errc::ConfigInvalid, "reference method '" + cfg.reference_method + "' is not among the configured methods");
  for (auto n : cfg.label_budgets)
    for (const auto& m : cfg.methods)
      if (n < min_labels(m.method))
        fail(Errc::ConfigInvalid, "budget " + std::to_string(n) + " below the minimum for " + m.resolved_label());
}

}  // namespace detail

/// Candidate items for label draws: every item when ground truth is complete
/// (simulation mode), otherwise the items flagged eligible at load time.
inline std::vector<std::size_t> label_pool(const TaskDataset& task) {
  if (has_full_ground_truth(task)) {
    std::vector<std::size_t> all(task.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < task.size(); ++i)
    if (task.labeled[i] && task.y[i]) pool.push_back(i);
  return pool;
}

inline constexpr std::uint64_t kFrozenReplication = 0xF0F0F0F0F0F0F0F0ULL;

inline ReplicationSummary run_replications(const MultiTaskStudy& study, const RunConfig& cfg,
                                           std::uint64_t master_seed) {
  detail::check_config(cfg);
  const std::size_t T = study.num_tasks();
  const std::size_t M = cfg.methods.size();
  const std::size_t B = cfg.replications;

  std::vector<std::vector<std::size_t>> pools(T);
  std::vector<double> theta_star(T, std::numeric_limits<double>::quiet_NaN());
  std::vector<bool> truth(T);
  for (std::size_t t = 0; t < T; ++t) {
    pools[t] = label_pool(study.tasks[t]);
    truth[t] = has_full_ground_truth(study.tasks[t]);
    if (truth[t]) theta_star[t] = population_mean(study.tasks[t]);
  }
  for (auto n : cfg.label_budgets)
    for (std::size_t t = 0; t < T; ++t)
      if (n > pools[t].size())
        detail::fail(Errc::ConfigInvalid, "budget " + std::to_string(n) + " exceeds the " +
                                              std::to_string(pools[t].size()) + " label-eligible items of task '" +
                                              study.tasks[t].task_id + "'");

  std::vector<std::string> labels;
  std::size_t ref = 0;
  for (std::size_t m = 0; m < M; ++m) {
    labels.push_back(cfg.methods[m].resolved_label());
    if (labels.back() == cfg.reference_method) ref = m;
  }

  auto draw = [&](std::size_t t, std::uint64_t b, std::size_t n) {
    return srs_from_pool(StreamKey{master_seed, t, b, StreamPurpose::LabelDraw}, pools[t], study.tasks[t].size(), n);
  };

  ReplicationSummary summary;
  std::map<std::size_t, std::vector<SummaryCell>> by_budget;

  for (auto n : cfg.label_budgets) {
    std::vector<std::vector<bool>> frozen(T);
    if (cfg.freeze_auxiliary)
      for (std::size_t t = 0; t < T; ++t) frozen[t] = draw(t, kFrozenReplication, n);

    // outcomes[(b * T + t) * M + m]
    std::vector<detail::ReplicateOutcome> outcomes(B * T * M);

    auto run_one = [&](MultiTaskStudy& local, std::uint64_t b) {
      if (cfg.freeze_auxiliary) {
        for (std::size_t t = 0; t < T; ++t) local.tasks[t].labeled = frozen[t];
      } else {
        for (std::size_t t = 0; t < T; ++t) local.tasks[t].labeled = draw(t, b, n);
      }
      for (std::size_t t = 0; t < T; ++t) {
        if (cfg.freeze_auxiliary) local.tasks[t].labeled = draw(t, b, n);
        const StreamKey key{master_seed, t, b, StreamPurpose::LabelDraw};
        for (std::size_t m = 0; m < M; ++m) {
          auto& out = outcomes[(b * T + t) * M + m];
          const auto& mc = cfg.methods[m];
          try {
            const EstimatorOptions opts{mc.power_tune, mc.clip, cfg.k_folds};
            const auto est = estimate(mc.method, local.tasks[t], local, opts, key);
            const auto ci = wald_ci(est.theta_hat, est.residuals, est.n_labeled, local.tasks[t].size(), cfg.alpha);
            out.width = ci.width();
            if (truth[t]) {
              const double err = est.theta_hat - theta_star[t];
              out.sq_error = err * err;
              out.hit = ci.contains(theta_star[t]);
            }
            out.ok = true;
          } catch (const std::exception&) {
            out.ok = false;
          }
        }
        if (cfg.freeze_auxiliary) local.tasks[t].labeled = frozen[t];
      }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.threads, B));
    std::atomic<std::uint64_t> next{0};
    auto worker = [&]() {
      MultiTaskStudy local = study;
      for (std::uint64_t b = next.fetch_add(1); b < B; b = next.fetch_add(1)) run_one(local, b);
    };
    if (workers == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }

    // Deterministic reduction in (task, method, replication) order.
    std::vector<SummaryCell> cells(T * M);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t m = 0; m < M; ++m) {
        auto& c = cells[t * M + m];
        c.task_id = study.tasks[t].task_id;
        c.method = labels[m];
        c.n = n;
        c.has_ground_truth = truth[t];
        double sum_sq = 0.0, sum_sq2 = 0.0, sum_w = 0.0;
        std::size_t hits = 0, ok = 0;
        for (std::size_t b = 0; b < B; ++b) {
          const auto& o = outcomes[(b * T + t) * M + m];
          if (!o.ok) {
            ++c.failures;
            continue;
          }
          ++ok;
          sum_w += o.width;
          sum_sq += o.sq_error;
          sum_sq2 += o.sq_error * o.sq_error;
          hits += o.hit ? 1 : 0;
        }
        c.replications = ok;
        if (ok == 0) continue;
        const double k = static_cast<double>(ok);
        c.mean_ci_width = sum_w / k;
        if (truth[t]) {
          c.mse = sum_sq / k;
          c.coverage = static_cast<double>(hits) / k;
          const double var = ok > 1 ? std::max(0.0, (sum_sq2 - k * c.mse * c.mse) / (k - 1.0)) : 0.0;
          c.mc_se_mse = std::sqrt(var / k);
        }
      }
      for (std::size_t m = 0; m < M; ++m) {
        auto& c = cells[t * M + m];
        const auto& r = cells[t * M + ref];
        if (m == ref) {
          c.rel_width = 1.0;
          if (truth[t]) c.rel_mse = 1.0;
          continue;
        }
        c.rel_width = c.mean_ci_width / r.mean_ci_width;
        if (truth[t]) c.rel_mse = c.mse / r.mse;
      }
    }

    // Pooled row per method plus per-replication totals for paired SEs.
    const bool all_truth = std::all_of(truth.begin(), truth.end(), [](bool v) { return v; });
    std::vector<SummaryCell> agg(M);
    for (std::size_t m = 0; m < M; ++m) {
      auto& a = agg[m];
      a.task_id = std::string(kAggregateTaskId);
      a.method = labels[m];
      a.n = n;
      a.has_ground_truth = all_truth;
      std::vector<double> totals(B, std::numeric_limits<double>::quiet_NaN());
      double sum_w = 0.0, sum_sq = 0.0;
      std::size_t hits = 0, units = 0;
      for (std::size_t b = 0; b < B; ++b) {
        double tot = 0.0;
        bool all_ok = true;
        for (std::size_t t = 0; t < T; ++t) {
          const auto& o = outcomes[(b * T + t) * M + m];
          if (!o.ok) {
            all_ok = false;
            ++a.failures;
            continue;
          }
          ++units;
          sum_w += o.width;
          sum_sq += o.sq_error;
          hits += o.hit ? 1 : 0;
          tot += o.sq_error;
        }
        if (all_ok) totals[b] = tot;
      }
      a.replications = units;
      if (units > 0) {
        const double k = static_cast<double>(units);
        a.mean_ci_width = sum_w / k;
        if (all_truth) {
          a.mse = sum_sq / k;
          a.coverage = static_cast<double>(hits) / k;
          // replication-level SE: totals are independent across replications
          double s1 = 0.0, s2 = 0.0;
          std::size_t kb = 0;
          for (double v : totals)
            if (!std::isnan(v)) {
              s1 += v / static_cast<double>(T);
              s2 += (v / static_cast<double>(T)) * (v / static_cast<double>(T));
              ++kb;
            }
          if (kb > 1) {
            const double mb = s1 / static_cast<double>(kb);
            const double var = std::max(0.0, (s2 - static_cast<double>(kb) * mb * mb) / static_cast<double>(kb - 1));
            a.mc_se_mse = std::sqrt(var / static_cast<double>(kb));
          }
        }
      }
      if (all_truth) summary.replicate_sq_error[{labels[m], n}] = std::move(totals);
    }
    for (std::size_t m = 0; m < M; ++m) {
      auto& a = agg[m];
      if (m == ref) {
        a.rel_width = 1.0;
        if (all_truth) a.rel_mse = 1.0;
        continue;
      }
      a.rel_width = a.mean_ci_width / agg[ref].mean_ci_width;
      if (all_truth) a.rel_mse = a.mse / agg[ref].mse;
    }

    auto& bucket = by_budget[n];
    bucket.insert(bucket.end(), cells.begin(), cells.end());
    bucket.insert(bucket.end(), agg.begin(), agg.end());
  }

  // Output order: task (study order, pooled row last), method (config order), n (config order).
  std::vector<std::string> task_order;
  for (const auto& t : study.tasks) task_order.push_back(t.task_id);
  task_order.emplace_back(kAggregateTaskId);
  for (const auto& tid : task_order)
    for (const auto& lbl : labels)
      for (auto n : cfg.label_budgets)
        for (const auto& c : by_budget[n])
          if (c.task_id == tid && c.method == lbl) summary.cells.push_back(c);
  return summary;
}

// ---- paired Monte Carlo contrasts -----------------------------------------

struct RatioEstimate {
  double value = 0.0;
  double se = 0.0;
  std::size_t units = 0;
};

/// (sum of a-totals minus sum of b-totals) / sum of reference totals over
/// replications where all three succeeded, with a delta-method SE treating
/// replications as independent units. Pass an empty `minus` for a plain ratio.
inline RatioEstimate relative_mse_contrast(const ReplicationSummary& summary, const std::string& method,
                                           const std::string& minus, const std::string& reference,
                                           std::size_t n) {
  auto get = [&](const std::string& label) -> const std::vector<double>& {
    const auto it = summary.replicate_sq_error.find({label, n});
    if (it == summary.replicate_sq_error.end())
      detail::fail(Errc::ConfigInvalid, "no replicate totals for " + label + " at n=" + std::to_string(n));
    return it->second;
  };
  const auto& xa = get(method);
  const auto& xr = get(reference);
  const std::vector<double>* xb = minus.empty() ? nullptr : &get(minus);
  std::vector<double> d, r;
  for (std::size_t b = 0; b < xa.size(); ++b) {
    const double bv = xb ? (*xb)[b] : 0.0;
    if (std::isnan(xa[b]) || std::isnan(xr[b]) || std::isnan(bv)) continue;
    d.push_back(xa[b] - bv);
    r.push_back(xr[b]);
  }
  RatioEstimate out;
  out.units = d.size();
  if (d.size() < 2) detail::fail(Errc::ConfigInvalid, "too few complete replications for a contrast");
  double sd = 0.0, sr = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    sd += d[i];
    sr += r[i];
  }
  out.value = sd / sr;
  const double k = static_cast<double>(d.size());
  const double mean_r = sr / k;
  double ss = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double e = d[i] - out.value * r[i];
    ss += e * e;
  }
  out.se = std::sqrt(ss / (k - 1.0) / k) / mean_r;
  return out;
}

// ---- reports ---------------------------------------------------------------

inline std::vector<std::pair<std::string, double>> cell_metrics(const SummaryCell& c) {
  std::vector<std::pair<std::string, double>> m;
  if (c.has_ground_truth) {
    m.emplace_back("mse", c.mse);
    m.emplace_back("mc_se_mse", c.mc_se_mse);
    m.emplace_back("coverage", c.coverage);
  }
  m.emplace_back("mean_ci_width", c.mean_ci_width);
  if (c.has_ground_truth) m.emplace_back("rel_mse", c.rel_mse);
  m.emplace_back("rel_width", c.rel_width);
  m.emplace_back("replications", static_cast<double>(c.replications));
  m.emplace_back("failures", static_cast<double>(c.failures));
  return m;
}

inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline constexpr std::string_view kSummaryHeader = "task_id,method,n,metric,value";

inline void write_summary_csv(const ReplicationSummary& summary, std::ostream& os) {
  os << kSummaryHeader << '\n';
  for (const auto& c : summary.cells)
    for (const auto& [name, value] : cell_metrics(c))
      os << c.task_id << ',' << c.method << ',' << c.n << ',' << name << ',' << format_real(value) << '\n';
}

inline nlohmann::json summary_to_json(const ReplicationSummary& summary) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : summary.cells)
    for (const auto& [name, value] : cell_metrics(c)) {
      nlohmann::json row{{"task_id", c.task_id}, {"method", c.method}, {"n", c.n}, {"metric", name}};
      if (std::isfinite(value))
        row["value"] = value;
      else
        row["value"] = format_real(value);
      rows.push_back(std::move(row));
    }
  return rows;
}

/// Parses a summary CSV written by write_summary_csv back into cells.
inline ReplicationSummary read_summary_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kSummaryHeader)
    detail::fail(Errc::ParseError, "row 1: not a summary header");
  ReplicationSummary s;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 5) detail::fail(Errc::ParseError, "row " + std::to_string(row) + ": expected 5 fields");
    const auto n = static_cast<std::size_t>(detail::parse_real(f[2], row, "n"));
    double v;
    if (f[4] == "nan")
      v = std::numeric_limits<double>::quiet_NaN();
    else if (f[4] == "inf")
      v = std::numeric_limits<double>::infinity();
    else if (f[4] == "-inf")
      v = -std::numeric_limits<double>::infinity();
    else
      v = detail::parse_real(f[4], row, "value");
    if (s.cells.empty() || s.cells.back().task_id != f[0] || s.cells.back().method != f[1] || s.cells.back().n != n) {
      SummaryCell c;
      c.task_id = f[0];
      c.method = f[1];
      c.n = n;
      c.has_ground_truth = false;
      s.cells.push_back(c);
    }
    auto& c = s.cells.back();
    const std::string& metric = f[3];
    if (metric == "mse") {
      c.mse = v;
      c.has_ground_truth = true;
    } else if (metric == "mc_se_mse") c.mc_se_mse = v;
    else if (metric == "coverage") c.coverage = v;
    else if (metric == "mean_ci_width") c.mean_ci_width = v;
    else if (metric == "rel_mse") c.rel_mse = v;
    else if (metric == "rel_width") c.rel_width = v;
    else if (metric == "replications") c.replications = static_cast<std::size_t>(v);
    else if (metric == "failures") c.failures = static_cast<std::size_t>(v);
    else detail::fail(Errc::ParseError, "row " + std::to_string(row) + ": unknown metric '" + metric + "'");
  }
  return s;
}

enum class ReportFormat { Csv, Json };

inline std::vector<std::filesystem::path> emit_reports(const ReplicationSummary& summary,
                                                       const std::filesystem::path& out_dir,
                                                       const std::set<ReportFormat>& formats) {
  if (summary.empty()) detail::fail(Errc::IoError, "refusing to emit an empty summary");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) detail::fail(Errc::IoError, "cannot create '" + out_dir.string() + "': " + ec.message());
  std::vector<std::filesystem::path> written;
  if (formats.count(ReportFormat::Csv)) {
    const auto p = out_dir / "summary.csv";
    std::ofstream os(p, std::ios::binary);
    if (!os) detail::fail(Errc::IoError, "cannot write '" + p.string() + "'");
    write_summary_csv(summary, os);
    written.push_back(p);
  }
  if (formats.count(ReportFormat::Json)) {
    const auto p = out_dir / "summary.json";
    std::ofstream os(p, std::ios::binary);
    if (!os) detail::fail(Errc::IoError, "cannot write '" + p.string() + "'");
    os << summary_to_json(summary).dump(2) << '\n';
    written.push_back(p);
  }
  return written;
}

}  // namespace ppimt

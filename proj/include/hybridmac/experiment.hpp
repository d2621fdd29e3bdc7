#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hybridmac/run.hpp"

namespace hybridmac {

using nlohmann::json;

constexpr int kSchemaVersion = 1;

// Collects every violated constraint instead of stopping at the first one.
struct ValidationError : std::runtime_error {
  std::vector<std::string> violations;
  explicit ValidationError(std::vector<std::string> v)
      : std::runtime_error(join(v)), violations(std::move(v)) {}

  static std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : "; ") + x;
    return s;
  }
};

struct Variant {
  std::string label;
  PolicyConfig policy;
  FrameLayout layout;
};

struct ExperimentConfig {
  std::string scenario = "scenario";
  // Exactly one rate form is used: explicit rates, ratios scaled to a total
  // load, or a symmetric system of N queues.
  int N = 0;
  std::optional<double> lambda;      // symmetric per-queue rate
  std::optional<double> total_load;  // symmetric or ratio-scaled
  std::vector<double> rates;
  std::vector<double> ratios;
  std::vector<double> alarm_fraction;  // scalar configs are expanded to N entries
  std::optional<std::vector<double>> fading;
  double p_miss = 0.0;
  Slot horizon = 1000000;  // measured slots, after warm-up
  MetricsOptions metrics;
  std::uint64_t seed = 1;
  int repetitions = 1;
  std::string axis;  // empty: a single point
  std::vector<double> values;
  int span = 10;  // T_p + T_c kept fixed on the T_p axis
  std::vector<Variant> variants;
  bool emit_cdf = false;
  bool emit_jain = false;
};

namespace detail {

inline PolicyConfig parse_policy(const json& j, std::vector<std::string>& err,
                                 const std::string& where) {
  PolicyConfig p;
  if (!j.is_object()) {
    err.push_back(where + ": policy must be an object");
    return p;
  }
  const std::string kind = j.value("kind", std::string{});
  if (auto k = policy_from_string(kind))
    p.kind = *k;
  else
    err.push_back(where + ": unknown policy kind '" + kind + "'");
  if (j.contains("selection")) {
    const std::string s = j["selection"].get<std::string>();
    if (auto sel = selection_from_string(s))
      p.selection = *sel;
    else
      err.push_back(where + ": unknown selection '" + s + "'");
  }
  if (j.contains("K")) {
    if (j["K"].is_string() && j["K"] == "inf")
      p.K = kInfiniteK;
    else if (j["K"].is_number_integer())
      p.K = j["K"].get<int>();
    else
      err.push_back(where + ": K must be an integer or \"inf\"");
  }
  p.K_thr = j.value("K_thr", p.K_thr);
  p.deviation_k = j.value("deviation_k", p.deviation_k);
  return p;
}

inline FrameLayout parse_layout(const json& j) {
  FrameLayout l;
  l.T_a = j.value("T_a", 0);
  l.T_p = j.value("T_p", 1);
  l.T_c = j.value("T_c", 0);
  return l;
}

inline std::vector<double> number_or_list(const json& j, int n) {
  if (j.is_number()) return std::vector<double>(static_cast<std::size_t>(n), j.get<double>());
  return j.get<std::vector<double>>();
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  std::vector<std::string> err;
  ExperimentConfig c;
  if (!j.is_object()) throw ValidationError({"config must be a JSON object"});
  if (j.value("schema_version", -1) != kSchemaVersion)
    err.push_back("schema_version must be " + std::to_string(kSchemaVersion));
  try {
    c.scenario = j.value("scenario", c.scenario);
    c.N = j.value("N", 0);
    if (j.contains("lambda")) c.lambda = j["lambda"].get<double>();
    if (j.contains("total_load")) c.total_load = j["total_load"].get<double>();
    if (j.contains("rates")) c.rates = j["rates"].get<std::vector<double>>();
    if (j.contains("ratios")) c.ratios = j["ratios"].get<std::vector<double>>();
    if (!c.rates.empty()) c.N = static_cast<int>(c.rates.size());
    if (!c.ratios.empty()) c.N = static_cast<int>(c.ratios.size());
    if (j.contains("alarm_fraction")) c.alarm_fraction = detail::number_or_list(j["alarm_fraction"], c.N);
    if (j.contains("channel")) {
      const json& ch = j["channel"];
      c.p_miss = ch.value("p_miss", 0.0);
      if (ch.contains("fading") && !ch["fading"].is_null())
        c.fading = detail::number_or_list(ch["fading"], c.N);
    }
    c.horizon = j.value("horizon", c.horizon);
    if (j.contains("metrics")) {
      const json& m = j["metrics"];
      c.metrics.warmup = m.value("warmup", c.metrics.warmup);
      c.metrics.window = m.value("window", c.metrics.window);
      c.metrics.jain_trace = m.value("jain_trace", c.metrics.jain_trace);
      c.metrics.shares_count_success_only =
          m.value("shares_count_success_only", c.metrics.shares_count_success_only);
    }
    c.seed = j.value("seed", c.seed);
    c.repetitions = j.value("repetitions", 1);
    if (j.contains("sweep")) {
      c.axis = j["sweep"].value("axis", std::string{});
      c.values = j["sweep"].value("values", std::vector<double>{});
      c.span = j["sweep"].value("span", c.span);
    }
    if (j.contains("emit")) {
      c.emit_cdf = j["emit"].value("cdf", false);
      c.emit_jain = j["emit"].value("jain_trace", false);
    }
    auto add_variant = [&](const json& v, const std::string& where) {
      Variant x;
      x.policy = detail::parse_policy(v.value("policy", json::object()), err, where);
      x.layout = detail::parse_layout(v.value("layout", json::object()));
      x.label = v.value("label", std::string(to_string(x.policy.kind)));
      c.variants.push_back(x);
    };
    if (j.contains("variants")) {
      int k = 0;
      for (const auto& v : j["variants"]) add_variant(v, "variants[" + std::to_string(k++) + "]");
    } else {
      json v = json::object();
      if (j.contains("policy")) v["policy"] = j["policy"];
      if (j.contains("layout")) v["layout"] = j["layout"];
      add_variant(v, "policy");
    }
  } catch (const json::exception& e) {
    err.push_back(std::string("malformed field: ") + e.what());
  }

  const int forms = (!c.rates.empty()) + (!c.ratios.empty()) + (c.N > 0 && c.rates.empty() && c.ratios.empty());
  if (forms == 0) err.push_back("no arrival rates: give rates, ratios or N");
  if (c.N < 1) err.push_back("N must be at least 1");
  if (!c.ratios.empty() && !c.total_load && c.axis != "total_load")
    err.push_back("ratios need total_load or a total_load sweep");
  if (c.rates.empty() && c.ratios.empty() && !c.lambda && !c.total_load && c.axis != "lambda" &&
      c.axis != "total_load")
    err.push_back("symmetric system needs lambda or total_load");
  if (!c.alarm_fraction.empty() && static_cast<int>(c.alarm_fraction.size()) != c.N)
    err.push_back("alarm_fraction length differs from N");
  if (c.fading && static_cast<int>(c.fading->size()) != c.N)
    err.push_back("fading length differs from N");
  if (c.horizon < 1) err.push_back("horizon must be positive");
  if (c.metrics.warmup < 0) err.push_back("warmup must be nonnegative");
  if (c.metrics.window < 1) err.push_back("window must be positive");
  if (c.repetitions < 1) err.push_back("repetitions must be at least 1");
  if (!(c.p_miss >= 0.0 && c.p_miss <= 1.0)) err.push_back("p_miss outside [0,1]");
  static const std::vector<std::string> axes{"",      "total_load", "lambda", "T_p",
                                             "p_miss", "K",          "deviation_k",
                                             "alarm_fraction"};
  if (std::find(axes.begin(), axes.end(), c.axis) == axes.end())
    err.push_back("unknown sweep axis '" + c.axis + "'");
  if (!c.axis.empty() && c.values.empty()) err.push_back("sweep axis has no values");
  if (c.variants.empty()) err.push_back("no policy given");
  if (!err.empty()) throw ValidationError(err);
  return c;
}

struct Job {
  std::size_t point = 0;
  std::size_t variant = 0;
  std::optional<double> axis_value;
  SimConfig sim;
  std::string lambda_spec;
};

inline std::string fmt_num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

// Resolves one grid point and variant into a simulator configuration.
inline Job make_job(const ExperimentConfig& c, std::size_t point, std::size_t variant) {
  Job job;
  job.point = point;
  job.variant = variant;
  const Variant& v = c.variants[variant];
  SimConfig s;
  s.policy = v.policy;
  s.layout = v.layout;
  s.cca.p_miss = c.p_miss;
  s.fading = c.fading;
  std::optional<double> load = c.total_load, lambda = c.lambda;
  std::vector<double> alarm = c.alarm_fraction;
  if (!c.axis.empty()) {
    const double x = c.values[point];
    job.axis_value = x;
    if (c.axis == "total_load") load = x;
    else if (c.axis == "lambda") lambda = x;
    else if (c.axis == "T_p") {
      s.layout.T_p = static_cast<int>(x);
      s.layout.T_c = c.span - s.layout.T_p;
    } else if (c.axis == "p_miss") s.cca.p_miss = x;
    else if (c.axis == "K") s.policy.K = x >= 1e9 ? kInfiniteK : static_cast<int>(x);
    else if (c.axis == "deviation_k") s.policy.deviation_k = static_cast<int>(x);
    else if (c.axis == "alarm_fraction") alarm.assign(static_cast<std::size_t>(c.N), x);
  }
  std::vector<double> rates;
  if (!c.rates.empty()) {
    rates = c.rates;
    job.lambda_spec = "vec:";
  } else if (!c.ratios.empty()) {
    double sum = 0.0;
    for (double r : c.ratios) sum += r;
    for (double r : c.ratios) rates.push_back(*load * r / sum);
    job.lambda_spec = "vec:";
  } else {
    const double per = lambda ? *lambda : *load / c.N;
    rates.assign(static_cast<std::size_t>(c.N), per);
    job.lambda_spec = "sym:" + fmt_num(per);
  }
  if (job.lambda_spec == "vec:")
    for (std::size_t i = 0; i < rates.size(); ++i)
      job.lambda_spec += (i ? ";" : "") + fmt_num(rates[i]);
  s.arrivals.rates = rates;
  s.arrivals.alarm_fraction = alarm;
  job.sim = s;
  return job;
}

inline std::vector<Job> expand(const ExperimentConfig& c) {
  std::vector<Job> jobs;
  std::vector<std::string> err;
  const std::size_t points = c.axis.empty() ? 1 : c.values.size();
  for (std::size_t p = 0; p < points; ++p)
    for (std::size_t v = 0; v < c.variants.size(); ++v) {
      Job j = make_job(c, p, v);
      try {
        j.sim.validate();
      } catch (const std::exception& e) {
        err.push_back("point " + std::to_string(p) + " variant '" + c.variants[v].label +
                      "': " + e.what());
      }
      jobs.push_back(std::move(j));
    }
  if (!err.empty()) throw ValidationError(err);
  return jobs;
}

struct ResultRecord {
  std::string scenario, variant, policy, lambda_spec, axis;
  std::optional<double> axis_value;
  int N = 0, T_a = 0, T_p = 0, T_c = 0;
  double p_miss = 0.0, total_rate = 0.0;
  Slot horizon = 0, warmup = 0;
  int repetitions = 1;
  std::uint64_t seed = 0;
  std::optional<double> mean_delay, delay_ci, little_law_delay, zeta, jain_final;
  std::optional<double> mean_backlog, backlog_slope, data_delay, alarm_delay;
  std::optional<std::int64_t> cdf_support_max;
  std::vector<std::optional<double>> per_queue_W;
  std::vector<double> cdf, jain_trace;
  AlignmentStats alignment;
};

// One slot of the per-slot trace dump.
inline json slot_event(const Simulation& sim) {
  const SlotOutcome& o = sim.last_outcome();
  json e;
  e["t"] = sim.now() - 1;
  e["backlog"] = sim.last_backlog();
  e["outcome"] = to_string(o.outcome);
  e["transmitter"] = o.transmitter ? json(*o.transmitter) : json(nullptr);
  e["scheduled"] = o.scheduled ? json(*o.scheduled) : json(nullptr);
  e["departed"] = o.departed;
  e["contention"] = o.contention_entered;
  e["alarm_mode"] = o.alarm_mode;
  e["minislots"] = o.minislots_consumed;
  e["cca_misses"] = o.cca_misses;
  return e;
}

inline ResultRecord run_job(const ExperimentConfig& c, const Job& job,
                            std::ostream* trace = nullptr, Slot trace_slots = 0) {
  ResultRecord r;
  r.scenario = c.scenario;
  r.variant = c.variants[job.variant].label;
  r.policy = to_string(job.sim.policy.kind);
  r.lambda_spec = job.lambda_spec;
  r.axis = c.axis;
  r.axis_value = job.axis_value;
  r.N = job.sim.n();
  r.T_a = job.sim.layout.T_a;
  r.T_p = job.sim.layout.T_p;
  r.T_c = job.sim.layout.T_c;
  r.p_miss = job.sim.cca.p_miss;
  r.total_rate = job.sim.arrivals.total();
  r.horizon = c.horizon;
  r.warmup = c.metrics.warmup;
  r.repetitions = c.repetitions;
  r.seed = c.seed;

  std::optional<MetricsAccumulator> acc;
  for (int rep = 0; rep < c.repetitions; ++rep) {
    Slot traced = 0;
    SlotHook hook;
    if (trace && rep == 0)
      hook = [&](const Simulation& sim) {
        if (traced++ < trace_slots) *trace << slot_event(sim).dump() << '\n';
      };
    AlignmentStats al;
    MetricsAccumulator m = simulate(job.sim, c.seed + static_cast<std::uint64_t>(rep),
                                    c.metrics.warmup + c.horizon, c.metrics, hook, &al);
    r.alignment.misses += al.misses;
    r.alignment.poll_misses += al.poll_misses;
    r.alignment.repaired_same_slot += al.repaired_same_slot;
    r.alignment.episodes += al.episodes;
    r.alignment.ended_by_reset += al.ended_by_reset;
    r.alignment.ended_otherwise += al.ended_otherwise;
    r.alignment.resets += al.resets;
    r.alignment.reset_slots += al.reset_slots;
    r.alignment.longest_episode = std::max(r.alignment.longest_episode, al.longest_episode);
    if (acc)
      acc->merge(m);
    else
      acc = std::move(m);
  }
  const MetricsAccumulator& m = *acc;
  if (m.departures() > 0) r.mean_delay = m.mean_delay();
  r.delay_ci = m.delay_ci();
  if (m.slots() > 0) {
    r.mean_backlog = m.mean_backlog();
    if (r.total_rate > 0) r.little_law_delay = m.little_law_delay(r.total_rate);
    const double slope = m.backlog_slope();
    if (std::isfinite(slope)) r.backlog_slope = slope;
    const auto cdf = m.cdf();
    r.cdf_support_max = cdf.support_max;
    if (c.emit_cdf) r.cdf = cdf.F;
  }
  r.zeta = m.zeta();
  r.jain_final = m.jain_final();
  if (c.emit_jain) r.jain_trace = m.jain_trace();
  if (m.has_class(PacketClass::data)) r.data_delay = m.mean_delay(PacketClass::data);
  if (m.has_class(PacketClass::alarm)) r.alarm_delay = m.mean_delay(PacketClass::alarm);
  for (int i = 0; i < r.N; ++i)
    r.per_queue_W.push_back(m.has_queue_delay(i) ? std::optional<double>(m.queue_delay(i))
                                                 : std::nullopt);
  return r;
}

// Runs all jobs on up to `workers` threads; records come back in grid order.
inline std::vector<ResultRecord> sweep(const ExperimentConfig& c, int workers = 1,
                                       const std::function<std::ostream*(std::size_t)>& trace = {},
                                       Slot trace_slots = 0) {
  const std::vector<Job> jobs = expand(c);
  std::vector<ResultRecord> out(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  auto work = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      try {
        std::ostream* os = trace ? trace(k) : nullptr;
        out[k] = run_job(c, jobs[k], os, trace_slots);
      } catch (...) {
        std::lock_guard<std::mutex> g(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  workers = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
  return out;
}

inline ResultRecord run_experiment(const ExperimentConfig& c) {
  if (!c.axis.empty() && c.values.size() != 1)
    throw ValidationError({"run_experiment takes a single grid point"});
  if (c.variants.size() != 1) throw ValidationError({"run_experiment takes a single variant"});
  return sweep(c).front();
}

// ---- output ------------------------------------------------------------------

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{
      "scenario",    "variant",          "policy",     "N",          "lambda_spec",
      "total_rate",  "axis",             "axis_value", "T_a",        "T_p",
      "T_c",         "p_miss",           "horizon",    "warmup",     "repetitions",
      "seed",        "mean_delay",       "delay_ci",   "little_law_delay",
      "zeta",        "jain_final",       "cdf_support_max", "mean_backlog",
      "backlog_slope", "data_delay",     "alarm_delay", "per_queue_W"};
  return cols;
}

inline std::string csv_opt(const std::optional<double>& x) { return x ? fmt_num(*x) : "null"; }

inline std::string csv_row(const ResultRecord& r) {
  std::vector<std::string> f{r.scenario,
                             r.variant,
                             r.policy,
                             std::to_string(r.N),
                             r.lambda_spec,
                             fmt_num(r.total_rate),
                             r.axis.empty() ? "null" : r.axis,
                             csv_opt(r.axis_value),
                             std::to_string(r.T_a),
                             std::to_string(r.T_p),
                             std::to_string(r.T_c),
                             fmt_num(r.p_miss),
                             std::to_string(r.horizon),
                             std::to_string(r.warmup),
                             std::to_string(r.repetitions),
                             std::to_string(r.seed),
                             csv_opt(r.mean_delay),
                             csv_opt(r.delay_ci),
                             csv_opt(r.little_law_delay),
                             csv_opt(r.zeta),
                             csv_opt(r.jain_final),
                             r.cdf_support_max ? std::to_string(*r.cdf_support_max) : "null",
                             csv_opt(r.mean_backlog),
                             csv_opt(r.backlog_slope),
                             csv_opt(r.data_delay),
                             csv_opt(r.alarm_delay)};
  std::string w;
  for (std::size_t i = 0; i < r.per_queue_W.size(); ++i)
    w += (i ? ";" : "") + csv_opt(r.per_queue_W[i]);
  f.push_back(w);
  std::string line;
  for (std::size_t i = 0; i < f.size(); ++i) {
    std::string cell = f[i];
    if (cell.find_first_of(",\"") != std::string::npos) {
      std::string q = "\"";
      for (char ch : cell) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
      cell = q + "\"";
    }
    line += (i ? "," : "") + cell;
  }
  return line;
}

inline std::string to_csv(const std::vector<ResultRecord>& rows) {
  std::string s;
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) s += (i ? "," : "") + cols[i];
  s += '\n';
  for (const auto& r : rows) s += csv_row(r) + '\n';
  return s;
}

inline json opt_json(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

inline json to_json(const ResultRecord& r) {
  json j;
  j["scenario"] = r.scenario;
  j["variant"] = r.variant;
  j["policy"] = r.policy;
  j["N"] = r.N;
  j["lambda_spec"] = r.lambda_spec;
  j["total_rate"] = r.total_rate;
  j["axis"] = r.axis.empty() ? json(nullptr) : json(r.axis);
  j["axis_value"] = opt_json(r.axis_value);
  j["layout"] = {{"T_a", r.T_a}, {"T_p", r.T_p}, {"T_c", r.T_c}};
  j["p_miss"] = r.p_miss;
  j["horizon"] = r.horizon;
  j["warmup"] = r.warmup;
  j["repetitions"] = r.repetitions;
  j["seed"] = r.seed;
  j["mean_delay"] = opt_json(r.mean_delay);
  j["delay_ci"] = opt_json(r.delay_ci);
  j["little_law_delay"] = opt_json(r.little_law_delay);
  j["zeta"] = opt_json(r.zeta);
  j["jain_final"] = opt_json(r.jain_final);
  j["cdf_support_max"] = r.cdf_support_max ? json(*r.cdf_support_max) : json(nullptr);
  j["mean_backlog"] = opt_json(r.mean_backlog);
  j["backlog_slope"] = opt_json(r.backlog_slope);
  j["data_delay"] = opt_json(r.data_delay);
  j["alarm_delay"] = opt_json(r.alarm_delay);
  json w = json::array();
  for (const auto& x : r.per_queue_W) w.push_back(opt_json(x));
  j["per_queue_W"] = w;
  j["cdf"] = r.cdf.empty() ? json(nullptr) : json(r.cdf);
  j["jain_trace"] = r.jain_trace.empty() ? json(nullptr) : json(r.jain_trace);
  const AlignmentStats& a = r.alignment;
  j["alignment"] = {{"misses", a.misses},
                    {"poll_misses", a.poll_misses},
                    {"repaired_same_slot", a.repaired_same_slot},
                    {"episodes", a.episodes},
                    {"ended_by_reset", a.ended_by_reset},
                    {"ended_otherwise", a.ended_otherwise},
                    {"resets", a.resets},
                    {"reset_slots", a.reset_slots},
                    {"longest_episode", a.longest_episode}};
  return j;
}

inline json error_json(const std::string& kind, const std::vector<std::string>& violations) {
  return json{{"error", kind}, {"violations", violations}};
}

}  // namespace hybridmac

#include "spdyn/commands.hpp"

#include <openssl/evp.h>
#include <openssl/opensslv.h>

#include <CLI11.hpp>
#include <boost/version.hpp>
#include <fstream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>

#include "spdyn/bolmt.hpp"
#include "spdyn/csv.hpp"
#include "spdyn/dgp.hpp"
#include "spdyn/effects.hpp"
#include "spdyn/errors.hpp"
#include "spdyn/mgiv.hpp"
#include "spdyn/network.hpp"
#include "spdyn/parallel.hpp"
#include "spdyn/pipeline.hpp"
#include "spdyn/rng.hpp"
#include "spdyn/weights.hpp"

namespace spdyn::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.1.0";

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw NumericError("SHA-256 initialisation failed");
  }
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof(buf));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

namespace {

// JSON config: top-level keys are global options, nested objects hold the
// options of the subcommand with that name.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      input >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("invalid JSON config: ") + e.what());
    }
    std::vector<CLI::ConfigItem> items;
    walk(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }
  static void walk(const nlohmann::json& j, const std::vector<std::string>& parents,
                   std::vector<CLI::ConfigItem>& items) {
    if (!j.is_object()) throw CLI::ConversionError("JSON config must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it->is_object()) {
        auto p = parents;
        p.push_back(it.key());
        walk(*it, p, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (it->is_array())
        for (const auto& e : *it) item.inputs.push_back(scalar(e));
      else
        item.inputs.push_back(scalar(*it));
      items.push_back(std::move(item));
    }
  }
};

json vec_json(const VectorXd& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(std::isfinite(v(i)) ? json(v(i)) : json(nullptr));
  return a;
}

json mat_json(const MatrixXd& m) {
  json a = json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
  return a;
}

json named(const std::vector<std::string>& names, const VectorXd& v) {
  json o = json::object();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double x = v(static_cast<Index>(i));
    o[names[i]] = std::isfinite(x) ? json(x) : json(nullptr);
  }
  return o;
}

template <class T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("file not found: " + path.string());
  std::ifstream in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("invalid JSON in '" + path.string() + "': " + e.what(), 0);
  }
}

// Per-run bookkeeping: inputs with hashes, outputs, parameters, log lines.
struct Run {
  std::string command;
  fs::path out;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  json params = json::object();
  std::vector<fs::path> inputs;
  std::vector<std::string> outputs;
  std::vector<std::string> log;

  fs::path input(const std::string& p) {
    fs::path path(p);
    if (!fs::exists(path)) throw IoError("input file not found: " + p);
    inputs.push_back(path);
    return path;
  }
  fs::path output(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }
  void note(const std::string& line) { log.push_back(line); }

  void finish() {
    json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["seed"] = seed;
    m["threads"] = threads;
    m["parameters"] = params;
    json in = json::array();
    for (const auto& p : inputs) {
      json e;
      e["path"] = p.string();
      e["sha256"] = sha256_file(p);
      in.push_back(e);
    }
    m["inputs"] = in;
    m["outputs"] = outputs;
    write_json(out / "manifest.json", m);

    std::ofstream lg(out / "run.log");
    lg << "spdyn " << kVersion << '\n'
       << "eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION << '\n'
       << "boost " << BOOST_VERSION / 100000 << '.' << BOOST_VERSION / 100 % 1000 << '.' << BOOST_VERSION % 100
       << '\n'
       << "openssl " << OPENSSL_VERSION_TEXT << '\n'
       << "command " << command << '\n'
       << "seed " << seed << '\n'
       << "threads " << threads << '\n';
    for (const auto& l : log) lg << l << '\n';
  }
};

template <class E>
E parse_enum(const std::string& value, const std::map<std::string, E>& table, const std::string& what) {
  auto it = table.find(value);
  if (it == table.end()) {
    std::string allowed;
    for (const auto& [k, v] : table) allowed += (allowed.empty() ? "" : ", ") + k;
    throw ConfigError("unknown " + what + " '" + value + "' (expected one of: " + allowed + ")");
  }
  return it->second;
}

Demean parse_demean(const std::string& s) {
  return parse_enum<Demean>(s, {{"two_way", Demean::two_way}, {"unit_only", Demean::unit_only}, {"none", Demean::none}},
                            "demeaning mode");
}

std::optional<Index> parse_rank(const std::string& s, const std::string& what) {
  if (s == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    long v = std::stol(s, &used);
    if (used != s.size() || v < 0) throw std::invalid_argument(s);
    return static_cast<Index>(v);
  } catch (const std::exception&) {
    throw ConfigError(what + " must be 'auto' or a nonnegative integer, got '" + s + "'");
  }
}

// Column `unit` (or the first column) of a CSV, in order of first appearance.
std::vector<std::string> read_unit_list(const fs::path& path) {
  auto t = csv::read(path);
  std::size_t c = 0;
  for (std::size_t i = 0; i < t.header.size(); ++i)
    if (t.header[i] == "unit") c = i;
  std::vector<std::string> ids;
  for (const auto& r : t.rows)
    if (std::find(ids.begin(), ids.end(), r[c]) == ids.end()) ids.push_back(r[c]);
  return ids;
}

std::vector<std::string> read_groups(const fs::path& path, const std::vector<std::string>& units) {
  auto t = csv::read(path);
  if (t.header.size() < 2) throw ParseError("group file needs columns unit,<group>", 1);
  const std::size_t cu = t.column("unit");
  const std::size_t cg = cu == 0 ? 1 : 0;
  std::map<std::string, std::string> g;
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    if (!g.emplace(t.rows[r][cu], t.rows[r][cg]).second)
      throw DuplicateError("unit '" + t.rows[r][cu] + "' labelled twice");
  std::vector<std::string> out;
  for (const auto& u : units) {
    auto it = g.find(u);
    if (it == g.end()) throw LabelError("unit '" + u + "' has no group label");
    out.push_back(it->second);
  }
  return out;
}

// ---------------------------------------------------------------- options

struct PanelOpts {
  std::string path;
  std::string unit_col = "unit", time_col = "time", outcome = "y";
  std::vector<std::string> covariates;
  std::string demean = "two_way";
  bool demean_levels = false;

  void add(CLI::App* app, bool required = true) {
    auto* o = app->add_option("--panel", path, "long-format panel CSV");
    if (required) o->required();
    app->add_option("--unit-col", unit_col, "unit column");
    app->add_option("--time-col", time_col, "time column");
    app->add_option("--outcome", outcome, "outcome column");
    app->add_option("--covariates", covariates, "covariate columns (default: all others)");
    app->add_option("--demean", demean, "two_way | unit_only | none");
    app->add_flag("--demean-levels", demean_levels, "demean levels before differencing");
  }
  IngestConfig ingest() const { return {unit_col, time_col, outcome, covariates}; }
  TransformOptions transform() const { return {parse_demean(demean), !demean_levels}; }
  json to_json() const {
    return {{"panel", path}, {"unit_col", unit_col}, {"time_col", time_col}, {"outcome", outcome},
            {"covariates", covariates}, {"demean", demean}, {"demean_levels", demean_levels}};
  }
};

struct BolmtOpts {
  double alpha = 0.05;
  Index max_links = 0;
  std::string threshold = "bonferroni";
  std::string reference = "normal";
  double fixed_c = 0.0;
  std::string first_stage = "joint";
  bool lags = false, no_lagged_level = false, defactor = false;

  void add(CLI::App* app) {
    app->add_option("--alpha", alpha, "familywise significance level");
    app->add_option("--max-links", max_links, "cap on links per row (0: N-1)");
    app->add_option("--threshold", threshold, "bonferroni | fixed");
    app->add_option("--reference", reference, "normal | student_t quantiles for the Bonferroni cutoff");
    app->add_option("--fixed-c", fixed_c, "cutoff for --threshold fixed");
    app->add_option("--first-stage", first_stage, "own | joint");
    app->add_flag("--lags", lags, "include lag-1 and lag-2 covariates");
    app->add_flag("--no-lagged-level", no_lagged_level, "drop y_{t-1} from the own controls");
    app->add_flag("--defactor", defactor, "project series off the covariate factors");
  }
  BolmtConfig config() const {
    BolmtConfig c;
    c.alpha = alpha;
    if (max_links > 0) c.max_links = max_links;
    c.rule = parse_enum<ThresholdRule>(threshold, {{"bonferroni", ThresholdRule::bonferroni},
                                                   {"fixed", ThresholdRule::fixed}}, "threshold rule");
    c.reference = parse_enum<ThresholdReference>(
        reference, {{"normal", ThresholdReference::normal}, {"student_t", ThresholdReference::student_t}},
        "threshold reference");
    c.fixed_c = fixed_c;
    c.first_stage = parse_enum<FirstStage>(first_stage, {{"own", FirstStage::own}, {"joint", FirstStage::joint}},
                                           "first stage");
    c.include_lags = lags;
    c.include_lagged_level = !no_lagged_level;
    c.defactor = defactor;
    c.validate();
    return c;
  }
  json to_json() const {
    return {{"alpha", alpha}, {"max_links", max_links}, {"threshold", threshold}, {"reference", reference},
            {"fixed_c", fixed_c}, {"first_stage", first_stage}, {"lags", lags},
            {"lagged_level", !no_lagged_level}, {"defactor", defactor}};
  }
};

struct WeightOpts {
  std::string weights, contiguity, coords, flows;
  double percentile = 10.0;
  std::string flow_mode = "time_averaged";
  bool flow_inverse = false;
  bool bolmt = false;
  bool raw = false;

  void add(CLI::App* app) {
    app->add_option("--weights", weights, "dense weight CSV or time-varying JSON manifest");
    app->add_option("--contiguity", contiguity, "CSV of neighbouring unit pairs");
    app->add_option("--coords", coords, "CSV unit,lat,lon for thresholded inverse distance");
    app->add_option("--percentile", percentile, "distance cutoff percentile for --coords");
    app->add_option("--flows", flows, "flow matrices (dense CSV or JSON manifest)");
    app->add_option("--flow-mode", flow_mode, "time_averaged | time_varying");
    app->add_flag("--flow-inverse", flow_inverse, "weight 1/flow instead of flow");
    app->add_flag("--bolmt", bolmt, "recover the network from the panel");
    app->add_flag("--raw", raw, "skip row standardization of constructed weights");
  }
  json to_json() const {
    return {{"weights", weights}, {"contiguity", contiguity}, {"coords", coords}, {"percentile", percentile},
            {"flows", flows}, {"flow_mode", flow_mode}, {"flow_inverse", flow_inverse}, {"bolmt", bolmt},
            {"raw", raw}};
  }
};

WeightScheme load_weight_source(const WeightOpts& o, const BolmtOpts& b, const PanelDataset& panel,
                                const TransformOptions& tr, Run& run) {
  const int sources = !o.weights.empty() + !o.contiguity.empty() + !o.coords.empty() + !o.flows.empty() + o.bolmt;
  if (sources != 1) throw ConfigError("exactly one weight source is required (--weights, --contiguity, --coords, --flows, --bolmt)");
  const bool st = !o.raw;
  const auto& units = panel.unit_ids;
  if (!o.weights.empty()) {
    return align_to(read_weights(run.input(o.weights)), units);
  }
  if (!o.contiguity.empty()) {
    auto pairs = read_pairs(run.input(o.contiguity));
    return contiguity_weights(pairs, units, st);
  }
  if (!o.coords.empty()) {
    std::vector<std::string> ids;
    auto pts = read_coordinates(run.input(o.coords), ids);
    return align_to(inverse_distance_weights(ids, pts, o.percentile, st), units);
  }
  if (!o.flows.empty()) {
    std::vector<std::string> ids;
    auto mats = read_matrices(run.input(o.flows), ids);
    auto mode = parse_enum<FlowMode>(o.flow_mode, {{"time_averaged", FlowMode::time_averaged},
                                                   {"time_varying", FlowMode::time_varying}}, "flow mode");
    return align_to(flow_weights(mats, ids, mode, o.flow_inverse ? FlowTransform::inverse : FlowTransform::proportional, st),
                    units);
  }
  auto tp = build_transformed(panel, tr);
  auto net = recover_network(bolmt_data(tp, b.config()), b.config());
  run.note("bolmt links " + csv::format_double(net.stats.links));
  return net.w_hat;
}

json stats_json(const NetworkStats& s) {
  return {{"density", s.density}, {"avg_links_per_unit", s.avg_out_links}, {"links", s.links},
          {"isolated_units", s.isolated_units}};
}

// ---------------------------------------------------------------- commands

struct EstimateOpts {
  PanelOpts panel;
  WeightOpts w;
  BolmtOpts b;
  std::string estimator = "both";
  std::string r_x = "auto", r_y = "auto";
  Index r_max = 8;
  double trim = 0.0;
  std::vector<std::string> drop_blocks;
};

json pooled_json(const PooledEstimate& p, const std::vector<std::string>& names) {
  return {{"theta", named(names, p.theta)}, {"se", named(names, p.se())}, {"vcov", mat_json(p.vcov)},
          {"j_stat", opt(p.j_stat)}, {"j_dof", p.j_dof}, {"j_pvalue", opt(p.j_pvalue)}, {"rho", p.rho},
          {"r_y", p.r_y}, {"instrument_count", p.q}};
}

json mg_json(const MgEstimate& m, const std::vector<std::string>& names) {
  json n = json::object();
  for (std::size_t i = 0; i < names.size(); ++i) n[names[i]] = m.n_used[i];
  return {{"theta", named(names, m.theta_bar)}, {"se", named(names, m.se())}, {"vcov", mat_json(m.vcov)},
          {"n_used", n}};
}

int cmd_estimate(const EstimateOpts& o, Run& run) {
  run.params = {{"panel", o.panel.to_json()}, {"weights", o.w.to_json()}, {"estimator", o.estimator},
                {"r_x", o.r_x}, {"r_y", o.r_y}, {"r_max", o.r_max}, {"trim", o.trim}, {"drop_blocks", o.drop_blocks}};
  if (o.w.bolmt) run.params["bolmt"] = o.b.to_json();
  auto panel = load_panel(run.input(o.panel.path), o.panel.ingest());
  run.note("panel N=" + std::to_string(panel.n()) + " T=" + std::to_string(panel.t()) + " k=" +
           std::to_string(panel.k()));
  FitOptions fo;
  fo.transform = o.panel.transform();
  fo.factors.r_x = parse_rank(o.r_x, "r_x");
  fo.factors.r_max = o.r_max;
  fo.pooled.r_y = parse_rank(o.r_y, "r_y");
  fo.pooled.r_max = o.r_max;
  fo.trim_fraction = o.trim;
  fo.estimator = parse_enum<Estimator>(o.estimator, {{"pooled_2siv", Estimator::pooled}, {"mgiv", Estimator::mean_group},
                                                     {"both", Estimator::both}}, "estimator");
  for (const auto& b : o.drop_blocks) {
    // e.g. own_lag2 or spatial_lag0
    bool spatial = b.rfind("spatial_lag", 0) == 0;
    bool own = b.rfind("own_lag", 0) == 0;
    if (!(spatial || own) || b.size() != (spatial ? 12u : 8u) || b.back() < '0' || b.back() > '2')
      throw ConfigError("unknown instrument block '" + b + "' (use own_lag0..2 or spatial_lag0..2)");
    (spatial ? fo.instruments.spatial : fo.instruments.own)[static_cast<std::size_t>(b.back() - '0')] = false;
  }
  WeightScheme w = load_weight_source(o.w, o.b, panel, fo.transform, run);
  FitResult r = fit(panel, w, fo);

  json e;
  e["n"] = panel.n();
  e["t"] = panel.t();
  e["t_eff"] = r.tp.t_eff;
  e["k"] = panel.k();
  e["demean"] = o.panel.demean;
  e["coefficient_names"] = r.names;
  e["r_x"] = r.fb.r_x;
  e["r_y"] = r.pooled ? json(r.pooled->r_y) : json(nullptr);
  e["instrument_count"] = r.instruments.front().q_full;
  e["weights_time_varying"] = r.w.time_varying();
  std::vector<std::string> isolated;
  for (std::size_t i = 0; i < r.designs.size(); ++i)
    if (r.designs[i].isolated) isolated.push_back(r.tp.unit_ids[i]);
  e["isolated_units"] = isolated;
  if (r.pooled) e["pooled_2siv"] = pooled_json(*r.pooled, r.names);
  if (r.mg) e["mgiv"] = mg_json(*r.mg, r.names);
  write_json(run.output("estimates.json"), e);
  if (!r.units.empty()) write_unit_table(run.output("unit_coefficients.csv"), r.tp.unit_ids, r.units);
  if (o.w.bolmt) write_weight_csv(run.output("w_hat.csv"), r.w.mats.front(), r.w.unit_ids);
  run.note("instruments " + std::to_string(r.instruments.front().q_full) + " r_x " + std::to_string(r.fb.r_x));
  return 0;
}

struct RecoverOpts {
  PanelOpts panel;
  BolmtOpts b;
  std::string truth;
};

int cmd_recover(const RecoverOpts& o, Run& run) {
  run.params = {{"panel", o.panel.to_json()}, {"bolmt", o.b.to_json()}, {"truth", o.truth}};
  auto panel = load_panel(run.input(o.panel.path), o.panel.ingest());
  auto cfg = o.b.config();
  auto tp = build_transformed(panel, o.panel.transform());
  auto net = recover_network(bolmt_data(tp, cfg), cfg);

  write_weight_csv(run.output("w_hat.csv"), net.w_hat.mats.front(), net.w_hat.unit_ids);
  write_edge_list(run.output("edges.csv"), net);
  json j;
  j["stats"] = stats_json(net.stats);
  j["threshold"] = net.rows.empty() || net.rows.front().trace.empty() ? json(nullptr)
                                                                       : json(net.rows.front().trace.front().threshold);
  Index degenerate = 0;
  json rows = json::array();
  for (std::size_t i = 0; i < net.rows.size(); ++i) {
    const auto& row = net.rows[i];
    degenerate += row.degenerate_candidates;
    json tr = json::array();
    for (const auto& e : row.trace)
      tr.push_back({{"step", e.step}, {"candidate", tp.unit_ids[static_cast<std::size_t>(e.candidate)]},
                    {"abs_t", e.abs_t}, {"threshold", e.threshold}, {"accepted", e.accepted}});
    rows.push_back({{"unit", tp.unit_ids[i]}, {"trace", tr}, {"degenerate_candidates", row.degenerate_candidates}});
  }
  j["degenerate_candidates"] = degenerate;
  if (!o.truth.empty()) {
    auto truth = align_to(read_weights(run.input(o.truth)), tp.unit_ids);
    const MatrixXd& tw = truth.mats.front();
    const MatrixXd& ew = net.w_hat.mats.front();
    double tp_ = 0, fn = 0, fp = 0, tn = 0;
    for (Index a = 0; a < tw.rows(); ++a)
      for (Index c = 0; c < tw.cols(); ++c) {
        if (a == c) continue;
        const bool t = tw(a, c) != 0.0, e = ew(a, c) != 0.0;
        (t ? (e ? tp_ : fn) : (e ? fp : tn)) += 1.0;
      }
    j["recovery"] = {{"true_positive_rate", tp_ + fn > 0 ? json(tp_ / (tp_ + fn)) : json(nullptr)},
                     {"false_positive_rate", fp + tn > 0 ? json(fp / (fp + tn)) : json(nullptr)},
                     {"true_links", tp_ + fn}, {"recovered_links", tp_ + fp}};
  }
  j["rows"] = rows;
  write_json(run.output("network.json"), j);
  run.note("recovered links " + csv::format_double(net.stats.links));
  return 0;
}

struct EffectsOpts {
  std::string estimates, weights, estimator = "pooled_2siv", se = "delta", unit_table;
  Index draws = 5000;
  // spill
  std::string covariate;
  std::vector<std::string> sources;
  std::string target;
};

struct Coefs {
  VectorXd theta;
  MatrixXd vcov;
  std::vector<std::string> names;
};

Coefs read_coefs(const fs::path& path, const std::string& estimator) {
  json e = read_json(path);
  if (!e.contains(estimator)) throw ConfigError("estimates file has no '" + estimator + "' block");
  Coefs c;
  c.names = e.at("coefficient_names").get<std::vector<std::string>>();
  const auto& blk = e.at(estimator);
  const Index p = static_cast<Index>(c.names.size());
  c.theta.resize(p);
  c.vcov.resize(p, p);
  for (Index i = 0; i < p; ++i) {
    const auto& v = blk.at("theta").at(c.names[static_cast<std::size_t>(i)]);
    c.theta(i) = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
    for (Index k = 0; k < p; ++k) {
      const auto& x = blk.at("vcov").at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k));
      c.vcov(i, k) = x.is_null() ? 0.0 : x.get<double>();
    }
  }
  return c;
}

json effects_json(const EffectsTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"name", r.name}, {"direct", r.direct}, {"indirect", r.indirect}, {"total", r.total},
                    {"se_direct", opt(r.se_direct)}, {"se_indirect", opt(r.se_indirect)}, {"se_total", opt(r.se_total)}});
  return {{"time_varying", t.time_varying}, {"mean_diag", t.mean_diag}, {"mean_row_sum", t.mean_row_sum},
          {"rows", rows}};
}

int cmd_effects(const EffectsOpts& o, Run& run) {
  run.params = {{"estimates", o.estimates}, {"weights", o.weights}, {"estimator", o.estimator}, {"se", o.se},
                {"draws", o.draws}, {"unit_table", o.unit_table}};
  Coefs c = read_coefs(run.input(o.estimates), o.estimator);
  WeightScheme w = read_weights(run.input(o.weights));
  SeOptions so;
  so.method = parse_enum<SeMethod>(o.se, {{"delta", SeMethod::delta}, {"sim", SeMethod::sim}, {"none", SeMethod::none}},
                                   "standard-error method");
  so.draws = o.draws;
  so.seed = run.seed;
  std::vector<std::string> covs(c.names.begin() + kBetaPos, c.names.end());
  EffectsTable t;
  json extra = json::object();
  if (!o.unit_table.empty()) {
    // Unit-specific psi from the unit table; absent psi counts as zero.
    auto tab = csv::read(run.input(o.unit_table));
    const auto cu = tab.column("unit"), cp = tab.column("psi");
    std::map<std::string, double> psi;
    for (std::size_t r = 0; r < tab.rows.size(); ++r)
      psi[tab.rows[r][cu]] = tab.rows[r][cp] == "NA" ? 0.0 : csv::to_double(tab.rows[r][cp], tab.line_numbers[r]);
    VectorXd pu(w.n());
    for (Index i = 0; i < w.n(); ++i) {
      auto it = psi.find(w.unit_ids[static_cast<std::size_t>(i)]);
      if (it == psi.end()) throw LabelError("unit '" + w.unit_ids[static_cast<std::size_t>(i)] + "' missing from unit table");
      pu(i) = it->second;
    }
    t = average_effects(multiplier(w, pu), c.theta.tail(c.theta.size() - kBetaPos), covs, c.theta(kDeltaPos));
    extra["heterogeneous_psi"] = true;
  } else {
    t = compute_effects(w, c.theta, c.vcov, covs, so);
  }
  json j = effects_json(t);
  j["estimator"] = o.estimator;
  j["psi"] = c.theta(kPsiPos);
  j["se_method"] = t.time_varying ? "not_available" : o.se;
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  write_json(run.output("effects.json"), j);
  std::vector<std::vector<std::string>> rows;
  auto f = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string("NA"); };
  for (const auto& r : t.rows)
    rows.push_back({r.name, csv::format_double(r.direct), csv::format_double(r.indirect), csv::format_double(r.total),
                    f(r.se_direct), f(r.se_indirect), f(r.se_total)});
  csv::write(run.output("effects.csv"), {"name", "direct", "indirect", "total", "se_direct", "se_indirect", "se_total"},
             rows);
  return 0;
}

int cmd_spill(const EffectsOpts& o, Run& run) {
  run.params = {{"estimates", o.estimates}, {"weights", o.weights}, {"estimator", o.estimator},
                {"covariate", o.covariate}, {"sources", o.sources}, {"target", o.target}};
  Coefs c = read_coefs(run.input(o.estimates), o.estimator);
  WeightScheme w = read_weights(run.input(o.weights));
  const std::string cov = o.covariate.empty() ? c.names.at(kBetaPos) : o.covariate;
  auto it = std::find(c.names.begin() + kBetaPos, c.names.end(), cov);
  if (it == c.names.end()) throw ConfigError("unknown covariate '" + cov + "'");
  const double beta = c.theta(it - c.names.begin());
  Multiplier m = multiplier(w, c.theta(kPsiPos));
  auto index = [&](const std::string& u) {
    auto p = std::find(w.unit_ids.begin(), w.unit_ids.end(), u);
    if (p == w.unit_ids.end()) throw LabelError("unknown unit '" + u + "'");
    return static_cast<Index>(p - w.unit_ids.begin());
  };
  if (o.sources.empty() == o.target.empty()) throw ConfigError("give either --sources or --target");
  SpillResult s;
  std::string mode;
  if (!o.sources.empty()) {
    std::vector<Index> src;
    for (const auto& u : o.sources) src.push_back(index(u));
    s = spill_out(m, beta, src);
    mode = "spill_out";
  } else {
    s = spill_in(m, beta, index(o.target));
    mode = "spill_in";
  }
  std::vector<std::vector<std::string>> rows;
  json units = json::array();
  for (Index i = 0; i < w.n(); ++i) {
    const auto& u = w.unit_ids[static_cast<std::size_t>(i)];
    rows.push_back({u, csv::format_double(s.total(i))});
    units.push_back({{"unit", u}, {"total", s.total(i)}, {"own", s.own(i)}, {"spill", s.spill(i)}});
  }
  csv::write(run.output("spill.csv"), {"unit", "value"}, rows);
  write_json(run.output("spill.json"), {{"mode", mode}, {"covariate", cov}, {"beta", beta}, {"psi", c.theta(kPsiPos)},
                                        {"units", units}});
  return 0;
}

struct HomophilyOpts {
  std::string weights, groups;
  Index b = 10000;
};

int cmd_homophily(const HomophilyOpts& o, Run& run) {
  run.params = {{"weights", o.weights}, {"groups", o.groups}, {"b", o.b}};
  WeightScheme w = read_weights(run.input(o.weights));
  if (w.time_varying()) throw ConfigError("homophily test needs a static network");
  auto groups = read_groups(run.input(o.groups), w.unit_ids);
  auto r = homophily_test(w.mats.front(), groups, o.b, run.seed);
  write_json(run.output("homophily.json"),
             {{"l_same", r.l_same}, {"l_total", r.l_total}, {"h_hat", r.h_hat}, {"h_null_mean", r.h_null_mean},
              {"rhi", r.rhi}, {"excess", r.excess}, {"p_value", r.p_value}, {"p_value_plus_one", r.p_value_plus_one},
              {"same_group_links", r.count_same}, {"links", r.count_total}, {"b", r.b}, {"seed", r.seed}});
  return 0;
}

struct LogitOpts {
  std::string weights;
  std::vector<std::string> bilateral;
  double cutoff = 0.0;
  bool log = false;
  double offset = 0.0;
  bool use_offset = false;
  std::string correction = "firth";
};

int cmd_link_logit(const LogitOpts& o, Run& run) {
  run.params = {{"weights", o.weights}, {"bilateral", o.bilateral}, {"cutoff", o.cutoff}, {"log", o.log},
                {"offset", o.use_offset ? json(o.offset) : json(nullptr)}, {"correction", o.correction}};
  WeightScheme w = read_weights(run.input(o.weights));
  MatrixXd a = binarize(w.mats.front(), o.cutoff);
  std::vector<MatrixXd> covs;
  std::vector<std::string> names;
  for (const auto& spec : o.bilateral) {
    auto eq = spec.find('=');
    std::string name = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
    std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    std::vector<std::string> ids;
    MatrixXd m = read_weight_csv(run.input(path), ids);
    std::vector<Index> pos;
    for (const auto& u : w.unit_ids) {
      auto it = std::find(ids.begin(), ids.end(), u);
      if (it == ids.end()) throw LabelError("unit '" + u + "' missing from '" + path + "'");
      pos.push_back(static_cast<Index>(it - ids.begin()));
    }
    MatrixXd aligned(w.n(), w.n());
    for (Index i = 0; i < w.n(); ++i)
      for (Index j = 0; j < w.n(); ++j) aligned(i, j) = m(pos[static_cast<std::size_t>(i)], pos[static_cast<std::size_t>(j)]);
    if (o.log) {
      for (Index i = 0; i < aligned.rows(); ++i) aligned(i, i) = 0.0;
      aligned = log_flows(aligned, o.use_offset ? std::optional<double>(o.offset) : std::nullopt);
    }
    covs.push_back(std::move(aligned));
    names.push_back(name);
  }
  LogitOptions lo;
  lo.correction = parse_enum<LogitCorrection>(o.correction, {{"firth", LogitCorrection::firth},
                                                            {"rare_events", LogitCorrection::firth},
                                                            {"king_zeng", LogitCorrection::king_zeng},
                                                            {"none", LogitCorrection::none}}, "correction");
  auto r = link_logit(a, covs, names, lo);
  std::vector<std::string> all{"intercept"};
  all.insert(all.end(), names.begin(), names.end());
  write_json(run.output("link_logit.json"),
             {{"alpha_hat", r.alpha_hat}, {"pi_hat", named(names, r.pi_hat)}, {"se", named(all, r.ses)},
              {"p_values", named(all, r.p_values)}, {"odds_ratios", named(names, r.odds_ratios)},
              {"n_links", r.n_links}, {"n_pairs", r.n_pairs}, {"dropped_pairs", r.dropped_pairs},
              {"correction", o.correction}, {"loglik", r.loglik}, {"iterations", r.iterations}});
  return 0;
}

struct SimulateOpts {
  std::string spec;
};

DgpSpec parse_spec(const json& j, std::uint64_t seed, json& network) {
  DgpSpec s;
  s.seed = seed;
  network = {{"type", "random_sparse"}, {"max_links", 3}};
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    auto draw = [&](UniformDraw& d) {
      d.mean = v.value("mean", d.mean);
      d.spread = v.value("spread", d.spread);
    };
    if (k == "n") s.n = v.get<Index>();
    else if (k == "t") s.t = v.get<Index>();
    else if (k == "k") s.k = v.get<Index>();
    else if (k == "burn_in") s.burn_in = v.get<Index>();
    else if (k == "delta") draw(s.delta);
    else if (k == "psi") draw(s.psi);
    else if (k == "beta_mean") s.beta_mean = v.get<std::vector<double>>();
    else if (k == "beta_sd") s.beta_sd = v.get<double>();
    else if (k == "slope_variance_link") s.slope_variance_link = v.get<double>();
    else if (k == "r_f") s.r_f = v.get<Index>();
    else if (k == "r_g") s.r_g = v.get<Index>();
    else if (k == "factor_ar") s.factor_ar = v.get<double>();
    else if (k == "gamma_mean") s.gamma_mean = v.get<double>();
    else if (k == "gamma_sd") s.gamma_sd = v.get<double>();
    else if (k == "lambda_mean") s.lambda_mean = v.get<double>();
    else if (k == "lambda_sd") s.lambda_sd = v.get<double>();
    else if (k == "phi_mean") s.phi_mean = v.get<double>();
    else if (k == "phi_sd") s.phi_sd = v.get<double>();
    else if (k == "loading_correlation") s.loading_correlation = v.get<double>();
    else if (k == "noise_sd") s.noise_sd = v.get<double>();
    else if (k == "x_noise_sd") s.x_noise_sd = v.get<double>();
    else if (k == "alpha_sd") s.alpha_sd = v.get<double>();
    else if (k == "network") network = v;
    else if (k == "groups") network["groups"] = v;
    else throw ConfigError("unknown simulation key '" + k + "'");
  }
  return s;
}

int cmd_simulate(const SimulateOpts& o, Run& run) {
  json j = o.spec.empty() ? json::object() : read_json(run.input(o.spec));
  json network;
  DgpSpec s;
  try {
    s = parse_spec(j, run.seed, network);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid simulation spec: ") + e.what());
  }
  auto ids = unit_labels(s.n);
  const std::string type = network.value("type", "random_sparse");
  if (type == "random_sparse") {
    Rng rng(run.seed, 2);
    MatrixXd w = random_sparse_network(s.n, network.value("max_links", Index{3}), rng);
    s.w_true = row_standardize(WeightScheme::fixed_matrix(std::move(w), ids));
  } else if (type == "file") {
    auto w = read_weights(run.input(network.at("path").get<std::string>()));
    s.w_true = network.value("standardize", true) ? row_standardize(w) : w;
  } else if (type != "none") {
    throw ConfigError("unknown network type '" + type + "'");
  }
  run.params = {{"spec", j}, {"network", network}};
  auto sim = simulate(s);
  save_panel(sim.panel, run.output("panel.csv"));
  write_weight_csv(run.output("w_true.csv"), sim.truth.w.mats.front(), sim.truth.w.unit_ids);
  auto names = coefficient_names(sim.panel.covariate_names);
  json units = json::array();
  for (Index i = 0; i < s.n; ++i)
    units.push_back({{"unit", ids[static_cast<std::size_t>(i)]}, {"theta", named(names, sim.truth.theta.row(i).transpose())}});
  write_json(run.output("truth.json"), {{"coefficient_names", names}, {"theta_mean", named(names, sim.truth.theta_mean)},
                                        {"units", units}});
  if (network.contains("groups")) {
    const Index g = network["groups"].get<Index>();
    if (g < 1) throw ConfigError("groups must be positive");
    std::vector<std::vector<std::string>> rows;
    for (Index i = 0; i < s.n; ++i) rows.push_back({ids[static_cast<std::size_t>(i)], "g" + std::to_string(i % g)});
    csv::write(run.output("groups.csv"), {"unit", "group"}, rows);
  }
  return 0;
}

struct WeightsOpts {
  std::string type, pairs, units, coords, flows, mode = "time_averaged";
  double percentile = 10.0, stats_cutoff = 0.0;
  bool inverse = false, raw = false;
  std::string stem = "weights";
};

int cmd_weights(const WeightsOpts& o, Run& run) {
  run.params = {{"type", o.type}, {"pairs", o.pairs}, {"units", o.units}, {"coords", o.coords}, {"flows", o.flows},
                {"mode", o.mode}, {"percentile", o.percentile}, {"stats_cutoff", o.stats_cutoff},
                {"inverse", o.inverse}, {"raw", o.raw}};
  WeightScheme w;
  if (o.type == "contiguity") {
    if (o.pairs.empty() || o.units.empty()) throw ConfigError("contiguity needs --pairs and --units");
    auto pairs = read_pairs(run.input(o.pairs));
    w = contiguity_weights(pairs, read_unit_list(run.input(o.units)), !o.raw);
  } else if (o.type == "inverse_distance") {
    if (o.coords.empty()) throw ConfigError("inverse_distance needs --coords");
    std::vector<std::string> ids;
    auto pts = read_coordinates(run.input(o.coords), ids);
    w = inverse_distance_weights(ids, pts, o.percentile, !o.raw);
  } else if (o.type == "flow") {
    if (o.flows.empty()) throw ConfigError("flow needs --flows");
    std::vector<std::string> ids;
    auto mats = read_matrices(run.input(o.flows), ids);
    auto mode = parse_enum<FlowMode>(o.mode, {{"time_averaged", FlowMode::time_averaged},
                                              {"time_varying", FlowMode::time_varying}}, "flow mode");
    w = flow_weights(mats, ids, mode, o.inverse ? FlowTransform::inverse : FlowTransform::proportional, !o.raw);
  } else {
    throw ConfigError("unknown weight type '" + o.type + "' (contiguity, inverse_distance, flow)");
  }
  auto primary = write_weights(w, run.out, o.stem);
  run.outputs.push_back(primary.filename().string());
  write_json(run.output(o.stem + "_stats.json"), stats_json(network_stats(w, o.stats_cutoff)));
  return 0;
}

json error_json(const std::exception& e) {
  json j;
  if (const auto* se = dynamic_cast<const Error*>(&e)) {
    j["error"] = se->kind();
    j["category"] = se->category() == ErrorCategory::input ? "input" : "estimation";
    j["message"] = se->what();
    if (const auto* p = dynamic_cast<const ParseError*>(&e)) j["row"] = p->row();
    if (const auto* b = dynamic_cast<const BalanceError*>(&e)) {
      json m = json::array();
      for (const auto& [u, t] : b->missing()) m.push_back({{"unit", u}, {"time", t}});
      j["missing"] = m;
    }
    if (const auto* d = dynamic_cast<const DegenerateDistanceError*>(&e))
      j["pair"] = {d->pair().first, d->pair().second};
    if (const auto* wi = dynamic_cast<const WeakInstrumentError*>(&e)) j["unit"] = wi->unit();
    if (const auto* c = dynamic_cast<const ConditionError*>(&e)) j["condition"] = c->condition();
  } else {
    j["error"] = "InternalError";
    j["category"] = "estimation";
    j["message"] = e.what();
  }
  return j;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Heterogeneous dynamic spatial panels with latent factors"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file (nested objects per subcommand)");
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  std::string out_dir = "out";
  app.add_option("--seed", seed, "random seed");
  app.add_option("--threads", threads, "worker threads (0: all cores)");
  app.add_option("--out", out_dir, "output directory");

  EstimateOpts est;
  auto* c_est = app.add_subcommand("estimate", "pooled 2SIV and mean-group IV estimation");
  est.panel.add(c_est);
  est.w.add(c_est);
  est.b.add(c_est);
  c_est->add_option("--estimator", est.estimator, "pooled_2siv | mgiv | both");
  c_est->add_option("--r-x", est.r_x, "covariate factors: auto or a count");
  c_est->add_option("--r-y", est.r_y, "residual factors: auto or a count");
  c_est->add_option("--r-max", est.r_max, "cap for the eigenvalue-ratio rule");
  c_est->add_option("--trim", est.trim, "mean-group trim fraction");
  c_est->add_option("--drop-block", est.drop_blocks, "instrument block to omit, e.g. spatial_lag2");

  RecoverOpts rec;
  auto* c_rec = app.add_subcommand("recover-network", "recover the weight matrix from the panel");
  rec.panel.add(c_rec);
  rec.b.add(c_rec);
  c_rec->add_option("--truth", rec.truth, "true weights, for recovery rates");

  EffectsOpts eff;
  auto* c_eff = app.add_subcommand("effects", "direct, indirect and total effects");
  c_eff->add_option("--estimates", eff.estimates, "estimates.json")->required();
  c_eff->add_option("--weights", eff.weights, "weights used in estimation")->required();
  c_eff->add_option("--estimator", eff.estimator, "pooled_2siv | mgiv");
  c_eff->add_option("--se", eff.se, "delta | sim | none");
  c_eff->add_option("--draws", eff.draws, "simulation draws");
  c_eff->add_option("--unit-table", eff.unit_table, "unit_coefficients.csv for unit-specific psi");

  EffectsOpts sp;
  auto* c_sp = app.add_subcommand("spill", "spill-out or spill-in responses");
  c_sp->add_option("--estimates", sp.estimates, "estimates.json")->required();
  c_sp->add_option("--weights", sp.weights, "weights used in estimation")->required();
  c_sp->add_option("--estimator", sp.estimator, "pooled_2siv | mgiv");
  c_sp->add_option("--covariate", sp.covariate, "covariate whose slope scales the shock");
  c_sp->add_option("--sources", sp.sources, "shocked units (spill-out)");
  c_sp->add_option("--target", sp.target, "receiving unit (spill-in)");

  HomophilyOpts hom;
  auto* c_hom = app.add_subcommand("homophily", "group homophily permutation test");
  c_hom->add_option("--weights", hom.weights, "network weights")->required();
  c_hom->add_option("--groups", hom.groups, "CSV unit,<group>")->required();
  c_hom->add_option("--b", hom.b, "permutations");

  LogitOpts lg;
  auto* c_lg = app.add_subcommand("link-logit", "logit of links on bilateral covariates");
  c_lg->add_option("--weights", lg.weights, "network weights")->required();
  c_lg->add_option("--bilateral", lg.bilateral, "name=path dense N x N CSVs")->required();
  c_lg->add_option("--cutoff", lg.cutoff, "link when weight exceeds cutoff");
  c_lg->add_flag("--log", lg.log, "log the bilateral covariates (zero cells dropped)");
  auto* off = c_lg->add_option("--offset", lg.offset, "log(value + offset) instead of dropping zeros");
  c_lg->add_option("--correction", lg.correction, "firth | rare_events | king_zeng | none");

  SimulateOpts sim;
  auto* c_sim = app.add_subcommand("simulate", "simulate a panel with known parameters");
  c_sim->add_option("--spec", sim.spec, "JSON simulation spec");

  WeightsOpts wo;
  auto* c_w = app.add_subcommand("weights", "build a weight matrix");
  c_w->add_option("--type", wo.type, "contiguity | inverse_distance | flow")->required();
  c_w->add_option("--pairs", wo.pairs, "neighbour pairs CSV");
  c_w->add_option("--units", wo.units, "CSV with a unit column fixing the unit order");
  c_w->add_option("--coords", wo.coords, "CSV unit,lat,lon");
  c_w->add_option("--percentile", wo.percentile, "distance cutoff percentile");
  c_w->add_option("--flows", wo.flows, "flow matrices (dense CSV or JSON manifest)");
  c_w->add_option("--mode", wo.mode, "time_averaged | time_varying");
  c_w->add_flag("--inverse", wo.inverse, "weight 1/flow");
  c_w->add_flag("--raw", wo.raw, "skip row standardization");
  c_w->add_option("--stats-cutoff", wo.stats_cutoff, "weights above this count as links in the stats");
  c_w->add_option("--stem", wo.stem, "output file stem");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << json{{"error", "ConfigError"}, {"category", "input"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }
  lg.use_offset = off->count() > 0;

  Run r;
  r.out = out_dir;
  r.seed = seed.value_or(0);
  r.threads = threads;
  parallel::set_threads(threads);
  try {
    std::error_code ec;
    fs::create_directories(r.out, ec);
    if (ec) throw IoError("cannot create output directory '" + r.out.string() + "'");
    int code = 0;
    if (c_est->parsed()) {
      r.command = "estimate";
      code = cmd_estimate(est, r);
    } else if (c_rec->parsed()) {
      r.command = "recover-network";
      code = cmd_recover(rec, r);
    } else if (c_eff->parsed()) {
      r.command = "effects";
      code = cmd_effects(eff, r);
    } else if (c_sp->parsed()) {
      r.command = "spill";
      code = cmd_spill(sp, r);
    } else if (c_hom->parsed()) {
      r.command = "homophily";
      code = cmd_homophily(hom, r);
    } else if (c_lg->parsed()) {
      r.command = "link-logit";
      code = cmd_link_logit(lg, r);
    } else if (c_sim->parsed()) {
      r.command = "simulate";
      code = cmd_simulate(sim, r);
    } else if (c_w->parsed()) {
      r.command = "weights";
      code = cmd_weights(wo, r);
    }
    r.finish();
    out << "wrote " << r.out.string() << '\n';
    return code;
  } catch (const std::exception& e) {
    json j = error_json(e);
    err << j.dump() << '\n';
    std::error_code ec;
    if (fs::is_directory(r.out, ec)) {
      std::ofstream f(r.out / "error.json");
      if (f) f << j.dump(2) << '\n';
    }
    const auto* se = dynamic_cast<const Error*>(&e);
    return se && se->category() == ErrorCategory::input ? 2 : 1;
  }
}

}  // namespace spdyn::cli

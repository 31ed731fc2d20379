#include "cweibull/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <system_error>

#include "cweibull/error.hpp"

namespace cweibull::io {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown key \"" + key + "\" in " + where);
    }
  }
}

template <typename T>
T get_field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) {
    throw ConfigError(where + " is missing \"" + key + "\"");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": field \"" + key + "\" has the wrong type");
  }
}

bool needs_quoting(const std::string& field) {
  return field.find_first_of(",\"\r\n") != std::string::npos;
}

std::string group_name(const ModelSpec& spec, std::size_t l) {
  return spec.groups[l].name.empty() ? "CF" + std::to_string(l + 1)
                                     : spec.groups[l].name;
}

json number_array(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(x);
  return a;
}

}  // namespace

std::string format_double(double v) {
  if (!std::isfinite(v)) {
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
  }
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

double parse_double(std::string_view text, std::string_view context) {
  std::string_view s = text;
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    std::string msg = "not a number: \"" + std::string(text) + "\"";
    if (!context.empty()) msg += " (" + std::string(context) + ")";
    throw ConfigError(msg);
  }
  return v;
}

std::optional<std::size_t> CsvTable::column(std::string_view name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = record.size() == 1 && record.front().empty();
    if (!blank) records.push_back(std::move(record));
    record.clear();
  };
  for (std::size_t k = 0; k < text.size(); ++k) {
    const char c = text[k];
    if (in_quotes) {
      if (c == '"') {
        if (k + 1 < text.size() && text[k + 1] == '"') {
          field.push_back('"');
          ++k;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_record();
    } else if (c == '\r') {
      if (k + 1 < text.size() && text[k + 1] == '\n') ++k;
      end_record();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw ConfigError("CSV ends inside a quoted field");
  if (!field.empty() || !record.empty()) end_record();
  if (records.empty()) throw ConfigError("CSV has no header");
  CsvTable table;
  table.header = std::move(records.front());
  if (!table.header.empty() && table.header.front().rfind("\xEF\xBB\xBF", 0) == 0) {
    table.header.front().erase(0, 3);
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw ConfigError("CSV record " + std::to_string(r + 1) + " has " +
                        std::to_string(records[r].size()) + " fields, header has " +
                        std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

std::string to_csv(const CsvTable& table) {
  std::string out;
  auto write_record = [&](const std::vector<std::string>& record) {
    for (std::size_t k = 0; k < record.size(); ++k) {
      if (k) out.push_back(',');
      if (needs_quoting(record[k])) {
        out.push_back('"');
        for (char c : record[k]) {
          if (c == '"') out.push_back('"');
          out.push_back(c);
        }
        out.push_back('"');
      } else {
        out += record[k];
      }
    }
    out += "\r\n";
  };
  write_record(table.header);
  for (const auto& row : table.rows) write_record(row);
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw IoError("error reading " + path.string());
  return os.str();
}

CsvTable read_csv(const std::filesystem::path& path) {
  return parse_csv(read_text(path));
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("error writing " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move output into place at " + path.string());
  }
}

json read_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

NamedDataset dataset_from_csv(const CsvTable& table) {
  const auto time_col = table.column("time");
  const auto status_col = table.column("status");
  if (!time_col || !status_col) {
    throw ConfigError("data CSV needs \"time\" and \"status\" columns");
  }
  std::vector<std::string> names;
  for (const auto& h : table.header) {
    if (h != "time" && h != "status") names.push_back(h);
  }
  NamedDataset out = covariates_from_csv(table, names);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const double s = out.data.status[i];
    if (s != 0 && s != 1) {
      throw ConfigError("row " + std::to_string(i + 1) + ": status must be 0 or 1");
    }
  }
  try {
    out.data.validate();
  } catch (const SpecError& e) {
    throw ConfigError(std::string("invalid data: ") + e.what());
  }
  return out;
}

NamedDataset covariates_from_csv(const CsvTable& table,
                                 const std::vector<std::string>& names) {
  if (table.rows.empty()) throw ConfigError("data CSV has no rows");
  std::vector<std::size_t> cols;
  for (const auto& name : names) {
    const auto c = table.column(name);
    if (!c) {
      std::string have;
      for (const auto& h : table.header) have += (have.empty() ? "" : ", ") + h;
      throw ConfigError("data CSV lacks covariate column \"" + name +
                        "\" (columns present: " + have + ")");
    }
    cols.push_back(*c);
  }
  const auto time_col = table.column("time");
  const auto status_col = table.column("status");
  const std::size_t n = table.rows.size();
  NamedDataset out;
  out.covariate_names = names;
  out.data.times.assign(n, 1.0);
  out.data.status.assign(n, 1);
  out.data.covariates.resize(static_cast<Eigen::Index>(n),
                             static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = table.rows[i];
    const std::string where = "row " + std::to_string(i + 1);
    if (time_col) out.data.times[i] = parse_double(row[*time_col], where + ", time");
    if (status_col) {
      const double s = parse_double(row[*status_col], where + ", status");
      out.data.status[i] = s == 0.0 ? 0 : (s == 1.0 ? 1 : -1);
    }
    for (std::size_t k = 0; k < cols.size(); ++k) {
      out.data.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          parse_double(row[cols[k]], where + ", " + names[k]);
    }
  }
  return out;
}

CsvTable dataset_to_csv(const NamedDataset& nd) {
  CsvTable table;
  table.header = {"time", "status"};
  table.header.insert(table.header.end(), nd.covariate_names.begin(),
                      nd.covariate_names.end());
  for (std::size_t i = 0; i < nd.data.size(); ++i) {
    std::vector<std::string> row{format_double(nd.data.times[i]),
                                 std::to_string(nd.data.status[i])};
    for (double x : nd.data.row(i)) row.push_back(format_double(x));
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<std::string> default_covariate_names(std::size_t p) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  return names;
}

NamedModel model_from_json(const json& j,
                           const std::vector<std::string>& covariate_names) {
  const std::string kind = j.is_object() && j.contains("kind")
                               ? get_field<std::string>(j, "kind", "model file")
                               : std::string("model");
  std::set<std::string> allowed{"format_version", "kind", "groups", "covariates"};
  if (kind == "truth") {
    allowed.insert({"n", "seed", "target_censoring", "realized_censoring_rate",
                    "latent_causes"});
  } else if (kind == "fit") {
    allowed.insert({"method", "penalty", "config", "converged", "n_iters",
                    "log_likelihood", "penalized_objective", "loglik_trace",
                    "std_error_message"});
  } else if (kind != "model") {
    throw ConfigError("model file has unsupported kind \"" + kind + "\"");
  }
  reject_unknown_keys(j, allowed, "model file");
  if (j.contains("format_version") &&
      get_field<int>(j, "format_version", "model file") != kFormatVersion) {
    throw ConfigError("model file has unsupported format_version");
  }
  const json& groups = j.contains("groups") ? j.at("groups") : json();
  if (!groups.is_array() || groups.empty()) {
    throw ConfigError("model file needs a nonempty \"groups\" array");
  }
  NamedModel out;
  out.covariate_names = covariate_names;
  out.spec.p = covariate_names.size();
  Theta theta;
  bool has_params = true;
  for (std::size_t l = 0; l < groups.size(); ++l) {
    const json& g = groups[l];
    const std::string where = "group " + std::to_string(l + 1);
    reject_unknown_keys(g, {"name", "covariates", "alpha", "beta", "sigma", "se"}, where);
    GroupSpec gs;
    gs.name = g.contains("name") ? get_field<std::string>(g, "name", where)
                                 : "CF" + std::to_string(l + 1);
    const auto names = get_field<std::vector<std::string>>(g, "covariates", where);
    std::vector<std::pair<std::size_t, std::size_t>> order;  // (column, position)
    for (std::size_t k = 0; k < names.size(); ++k) {
      const auto it = std::find(covariate_names.begin(), covariate_names.end(), names[k]);
      if (it == covariate_names.end()) {
        std::string have;
        for (const auto& h : covariate_names) have += (have.empty() ? "" : ", ") + h;
        throw ConfigError(where + " (" + gs.name + ") uses covariate \"" + names[k] +
                          "\" not present in the data (available: " + have + ")");
      }
      order.emplace_back(static_cast<std::size_t>(it - covariate_names.begin()), k);
    }
    std::sort(order.begin(), order.end());
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (k && order[k].first == order[k - 1].first) {
        throw ConfigError(where + " lists covariate \"" +
                          covariate_names[order[k].first] + "\" twice");
      }
      gs.covariate_indices.push_back(order[k].first);
    }
    if (g.contains("alpha") && g.contains("beta") && g.contains("sigma")) {
      const auto beta = get_field<std::vector<double>>(g, "beta", where);
      if (beta.size() != names.size()) {
        throw ConfigError(where + ": beta length does not match its covariates");
      }
      GroupParams gp;
      gp.alpha = get_field<double>(g, "alpha", where);
      gp.sigma = get_field<double>(g, "sigma", where);
      for (const auto& [col, pos] : order) gp.beta.push_back(beta[pos]);
      theta.groups.push_back(std::move(gp));
    } else {
      has_params = false;
    }
    out.spec.groups.push_back(std::move(gs));
  }
  try {
    out.spec.validate();
    if (has_params) {
      theta.validate(out.spec);
      out.theta = std::move(theta);
    }
  } catch (const SpecError& e) {
    throw ConfigError(e.what());
  }
  return out;
}

ScenarioSpec scenario_from_json(const json& j) {
  reject_unknown_keys(j, {"format_version", "groups", "n", "p", "target_censoring", "seed"},
                      "scenario file");
  ScenarioSpec s;
  s.n = get_field<std::size_t>(j, "n", "scenario file");
  s.target_censoring = j.contains("target_censoring")
                           ? get_field<double>(j, "target_censoring", "scenario file")
                           : 0.0;
  s.seed = j.contains("seed") ? get_field<std::uint64_t>(j, "seed", "scenario file") : 1;
  const json& groups = j.contains("groups") ? j.at("groups") : json();
  if (!groups.is_array() || groups.empty()) {
    throw ConfigError("scenario file needs a nonempty \"groups\" array");
  }
  std::size_t p = 0;
  for (std::size_t l = 0; l < groups.size(); ++l) {
    const json& g = groups[l];
    const std::string where = "scenario group " + std::to_string(l + 1);
    reject_unknown_keys(g, {"name", "indices", "alpha", "beta", "sigma"}, where);
    GroupSpec gs;
    gs.name = g.contains("name") ? get_field<std::string>(g, "name", where)
                                 : "CF" + std::to_string(l + 1);
    gs.covariate_indices = get_field<std::vector<std::size_t>>(g, "indices", where);
    for (std::size_t idx : gs.covariate_indices) p = std::max(p, idx + 1);
    GroupParams gp;
    gp.alpha = get_field<double>(g, "alpha", where);
    gp.beta = get_field<std::vector<double>>(g, "beta", where);
    gp.sigma = get_field<double>(g, "sigma", where);
    s.model.groups.push_back(std::move(gs));
    s.truth.groups.push_back(std::move(gp));
  }
  s.model.p = j.contains("p") ? get_field<std::size_t>(j, "p", "scenario file") : p;
  try {
    s.validate();
  } catch (const SpecError& e) {
    throw ConfigError(std::string("invalid scenario: ") + e.what());
  }
  return s;
}

json truth_to_json(const ScenarioSpec& scenario, const SimulatedDataset& sim,
                   const std::vector<std::string>& covariate_names) {
  json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "truth";
  j["covariates"] = covariate_names;
  json groups = json::array();
  for (std::size_t l = 0; l < scenario.model.num_groups(); ++l) {
    json g;
    g["name"] = group_name(scenario.model, l);
    std::vector<std::string> names;
    for (std::size_t idx : scenario.model.groups[l].covariate_indices) {
      names.push_back(covariate_names[idx]);
    }
    g["covariates"] = names;
    g["alpha"] = scenario.truth.groups[l].alpha;
    g["beta"] = number_array(scenario.truth.groups[l].beta);
    g["sigma"] = scenario.truth.groups[l].sigma;
    groups.push_back(std::move(g));
  }
  j["groups"] = std::move(groups);
  j["n"] = scenario.n;
  j["seed"] = scenario.seed;
  j["target_censoring"] = scenario.target_censoring;
  j["realized_censoring_rate"] = sim.realized_censoring_rate;
  j["latent_causes"] = sim.latent_causes;
  return j;
}

json fit_to_json(const FitFile& fit) {
  json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "fit";
  j["method"] = fit.method;
  j["covariates"] = fit.covariate_names;
  json groups = json::array();
  std::size_t k = 0;
  for (std::size_t l = 0; l < fit.spec.num_groups(); ++l) {
    const auto& gp = fit.theta.groups[l];
    json g;
    g["name"] = group_name(fit.spec, l);
    std::vector<std::string> names;
    for (std::size_t idx : fit.spec.groups[l].covariate_indices) {
      names.push_back(fit.covariate_names[idx]);
    }
    g["covariates"] = names;
    g["alpha"] = gp.alpha;
    g["beta"] = number_array(gp.beta);
    g["sigma"] = gp.sigma;
    if (!fit.std_errors.empty()) {
      json se;
      se["alpha"] = fit.std_errors[k];
      se["beta"] = number_array(std::vector<double>(
          fit.std_errors.begin() + static_cast<std::ptrdiff_t>(k + 1),
          fit.std_errors.begin() + static_cast<std::ptrdiff_t>(k + 1 + gp.beta.size())));
      se["sigma"] = fit.std_errors[k + 1 + gp.beta.size()];
      g["se"] = std::move(se);
    } else {
      g["se"] = nullptr;
    }
    k += gp.beta.size() + 2;
    groups.push_back(std::move(g));
  }
  j["groups"] = std::move(groups);
  j["penalty"] = {{"lambda1", fit.penalty.lambda1}, {"lambda2", fit.penalty.lambda2}};
  j["config"] = {{"epsilon", fit.config.epsilon},
                 {"max_em_iters", fit.config.max_em_iters},
                 {"sigma_floor", fit.config.sigma_floor},
                 {"sigma_bracket", {fit.config.sigma_bracket.lower, fit.config.sigma_bracket.upper}},
                 {"inner_step_size", fit.config.inner_step_size},
                 {"inner_iters", fit.config.inner_iters},
                 {"m_step_sweeps", fit.config.m_step_sweeps},
                 {"n_starts", fit.config.n_starts},
                 {"start_jitter", fit.config.start_jitter},
                 {"seed", fit.config.seed}};
  j["converged"] = fit.converged;
  j["n_iters"] = fit.n_iters;
  j["log_likelihood"] = fit.log_likelihood;
  j["penalized_objective"] = fit.penalized_objective;
  j["loglik_trace"] = number_array(fit.loglik_trace);
  j["std_error_message"] = fit.std_error_message;
  return j;
}

FitFile fit_from_json(const json& j) {
  const std::string where = "fit file";
  if (!j.is_object() || get_field<std::string>(j, "kind", where) != "fit") {
    throw ConfigError("not a fit file (kind must be \"fit\")");
  }
  FitFile fit;
  fit.covariate_names = get_field<std::vector<std::string>>(j, "covariates", where);
  NamedModel model = model_from_json(j, fit.covariate_names);
  if (!model.theta) throw ConfigError("fit file groups lack alpha/beta/sigma");
  fit.spec = std::move(model.spec);
  fit.theta = std::move(*model.theta);
  fit.method = get_field<std::string>(j, "method", where);

  // Fit files are written with covariates in column order, so the group's
  // beta/se order is the file order.
  bool all_se = true;
  std::vector<double> se;
  for (const auto& g : j.at("groups")) {
    if (!g.contains("se") || g.at("se").is_null()) {
      all_se = false;
      continue;
    }
    const json& s = g.at("se");
    reject_unknown_keys(s, {"alpha", "beta", "sigma"}, "group se");
    se.push_back(get_field<double>(s, "alpha", "group se"));
    for (double b : get_field<std::vector<double>>(s, "beta", "group se")) se.push_back(b);
    se.push_back(get_field<double>(s, "sigma", "group se"));
  }
  if (all_se) {
    if (se.size() != fit.theta.flat_size()) {
      throw ConfigError("fit file standard errors do not match the parameters");
    }
    fit.std_errors = std::move(se);
  }

  const json& pen = j.at("penalty");
  reject_unknown_keys(pen, {"lambda1", "lambda2"}, "penalty");
  fit.penalty.lambda1 = get_field<double>(pen, "lambda1", "penalty");
  fit.penalty.lambda2 = get_field<double>(pen, "lambda2", "penalty");

  const json& cfg = j.at("config");
  reject_unknown_keys(cfg, {"epsilon", "max_em_iters", "sigma_floor", "sigma_bracket",
                            "inner_step_size", "inner_iters", "m_step_sweeps",
                            "n_starts", "start_jitter", "seed"},
                      "config");
  fit.config.epsilon = get_field<double>(cfg, "epsilon", "config");
  fit.config.max_em_iters = get_field<int>(cfg, "max_em_iters", "config");
  fit.config.sigma_floor = get_field<double>(cfg, "sigma_floor", "config");
  const auto bracket = get_field<std::vector<double>>(cfg, "sigma_bracket", "config");
  if (bracket.size() != 2) throw ConfigError("config.sigma_bracket needs two entries");
  fit.config.sigma_bracket = {bracket[0], bracket[1]};
  fit.config.inner_step_size = get_field<double>(cfg, "inner_step_size", "config");
  fit.config.inner_iters = get_field<int>(cfg, "inner_iters", "config");
  fit.config.m_step_sweeps = get_field<int>(cfg, "m_step_sweeps", "config");
  fit.config.n_starts = get_field<int>(cfg, "n_starts", "config");
  fit.config.start_jitter = get_field<double>(cfg, "start_jitter", "config");
  fit.config.seed = get_field<std::uint64_t>(cfg, "seed", "config");

  fit.converged = get_field<bool>(j, "converged", where);
  fit.n_iters = get_field<int>(j, "n_iters", where);
  fit.log_likelihood = get_field<double>(j, "log_likelihood", where);
  fit.penalized_objective = get_field<double>(j, "penalized_objective", where);
  fit.loglik_trace = get_field<std::vector<double>>(j, "loglik_trace", where);
  fit.std_error_message = get_field<std::string>(j, "std_error_message", where);
  return fit;
}

CsvTable eta_to_csv(const Dataset& data, const EtaMatrix& eta,
                    const ModelSpec& spec) {
  CsvTable table;
  table.header = {"row", "time", "status", "censored"};
  for (std::size_t l = 0; l < spec.num_groups(); ++l) {
    table.header.push_back("eta_" + group_name(spec, l));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<std::string> row{std::to_string(i + 1), format_double(data.times[i]),
                                 std::to_string(data.status[i]),
                                 data.status[i] == 0 ? "1" : "0"};
    for (Eigen::Index l = 0; l < eta.cols(); ++l) {
      row.push_back(format_double(eta(static_cast<Eigen::Index>(i), l)));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

json roc_to_json(const RocCurve& roc) {
  json points = json::array();
  for (std::size_t k = 0; k < roc.fpr.size(); ++k) {
    points.push_back({{"fpr", roc.fpr[k]}, {"tpr", roc.tpr[k]}});
  }
  return {{"horizon", roc.horizon},
          {"auc", roc.auc},
          {"n_cases", roc.n_cases},
          {"n_controls", roc.n_controls},
          {"points", std::move(points)}};
}

CsvTable roc_to_csv(const RocCurve& roc) {
  CsvTable table;
  table.header = {"fpr", "tpr"};
  for (std::size_t k = 0; k < roc.fpr.size(); ++k) {
    table.rows.push_back({format_double(roc.fpr[k]), format_double(roc.tpr[k])});
  }
  return table;
}

}  // namespace cweibull::io

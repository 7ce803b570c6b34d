#include "lgcps/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "lgcps/columnar.hpp"

namespace lgcps {

namespace {

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

/// Raw section.key -> value strings in file order.
struct RawConfig {
  std::vector<std::pair<std::string, std::string>> entries;
  std::string origin;

  const std::string* find(const std::string& key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return &v;
    return nullptr;
  }
};

RawConfig parse_raw(const std::string& text, const std::string& origin) {
  RawConfig raw;
  raw.origin = origin;
  std::istringstream in(text);
  std::string line, section;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": unterminated section");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": empty key");
    raw.entries.emplace_back(section.empty() ? key : section + "." + key, value);
  }
  return raw;
}

[[noreturn]] void bad_value(const RawConfig& raw, const std::string& key, const std::string& why) {
  throw std::runtime_error(raw.origin + ": key '" + key + "': " + why);
}

double to_double(const RawConfig& raw, const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) bad_value(raw, key, "malformed number '" + v + "'");
    return x;
  } catch (const std::runtime_error&) {
    throw;
  } catch (...) {
    bad_value(raw, key, "malformed number '" + v + "'");
  }
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

std::vector<std::string> split_list(const RawConfig& raw, const std::string& key,
                                    const std::string& v) {
  if (v.size() < 2 || v.front() != '[' || v.back() != ']')
    bad_value(raw, key, "expected a [..] list");
  std::vector<std::string> items;
  std::string current;
  int depth = 0;
  for (size_t i = 1; i + 1 < v.size(); ++i) {
    const char c = v[i];
    if (c == '[') ++depth;
    if (c == ']') --depth;
    if (c == ',' && depth == 0) {
      items.push_back(trim(current));
      current.clear();
    } else {
      current += c;
    }
  }
  if (!trim(current).empty()) items.push_back(trim(current));
  return items;
}

class ConfigReader {
 public:
  explicit ConfigReader(RawConfig raw) : raw_(std::move(raw)) {}

  bool has(const std::string& key) {
    used_.insert(key);
    return raw_.find(key) != nullptr;
  }
  double number(const std::string& key, double fallback) {
    used_.insert(key);
    const std::string* v = raw_.find(key);
    return v ? to_double(raw_, key, *v) : fallback;
  }
  long integer(const std::string& key, long fallback) {
    const double x = number(key, static_cast<double>(fallback));
    if (x != std::floor(x)) bad_value(raw_, key, "expected an integer");
    return static_cast<long>(x);
  }
  uint64_t unsigned64(const std::string& key, uint64_t fallback) {
    used_.insert(key);
    const std::string* v = raw_.find(key);
    if (!v) return fallback;
    try {
      return std::stoull(*v);
    } catch (...) {
      bad_value(raw_, key, "expected an unsigned integer");
    }
  }
  bool boolean(const std::string& key, bool fallback) {
    used_.insert(key);
    const std::string* v = raw_.find(key);
    if (!v) return fallback;
    if (*v == "true") return true;
    if (*v == "false") return false;
    bad_value(raw_, key, "expected true or false");
  }
  std::string text(const std::string& key, const std::string& fallback) {
    used_.insert(key);
    const std::string* v = raw_.find(key);
    return v ? unquote(*v) : fallback;
  }
  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    used_.insert(key);
    const std::string* v = raw_.find(key);
    if (!v) return fallback;
    std::vector<double> out;
    for (const auto& item : split_list(raw_, key, *v)) out.push_back(to_double(raw_, key, item));
    return out;
  }
  std::vector<std::string> texts(const std::string& key, std::vector<std::string> fallback) {
    used_.insert(key);
    const std::string* v = raw_.find(key);
    if (!v) return fallback;
    std::vector<std::string> out;
    for (const auto& item : split_list(raw_, key, *v)) out.push_back(unquote(item));
    return out;
  }
  Eigen::MatrixXd matrix(const std::string& key, const Eigen::MatrixXd& fallback) {
    used_.insert(key);
    const std::string* v = raw_.find(key);
    if (!v) return fallback;
    const auto rows = split_list(raw_, key, *v);
    if (rows.empty()) bad_value(raw_, key, "empty matrix");
    std::vector<std::vector<double>> data;
    for (const auto& row : rows) {
      std::vector<double> r;
      for (const auto& item : split_list(raw_, key, row)) r.push_back(to_double(raw_, key, item));
      if (!data.empty() && r.size() != data.front().size())
        bad_value(raw_, key, "ragged matrix rows");
      data.push_back(std::move(r));
    }
    Eigen::MatrixXd out(static_cast<Eigen::Index>(data.size()),
                        static_cast<Eigen::Index>(data.front().size()));
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      for (Eigen::Index j = 0; j < out.cols(); ++j)
        out(i, j) = data[static_cast<size_t>(i)][static_cast<size_t>(j)];
    return out;
  }

  void take_section_texts(const std::string& section, std::map<std::string, std::string>& out) {
    const std::string prefix = section + ".";
    for (const auto& [k, v] : raw_.entries)
      if (k.rfind(prefix, 0) == 0) {
        out[k.substr(prefix.size())] = unquote(v);
        used_.insert(k);
      }
  }

  void check_unknown() const {
    for (const auto& [k, v] : raw_.entries)
      if (!used_.count(k))
        throw std::runtime_error(raw_.origin + ": unknown config key '" + k + "'");
  }

 private:
  RawConfig raw_;
  std::set<std::string> used_;
};

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& origin) {
  ConfigReader reader(parse_raw(text, origin));
  RunConfig c;

  c.region.lon_min = reader.number("region.lon_min", c.region.lon_min);
  c.region.lon_max = reader.number("region.lon_max", c.region.lon_max);
  c.region.lat_min = reader.number("region.lat_min", c.region.lat_min);
  c.region.lat_max = reader.number("region.lat_max", c.region.lat_max);
  c.resolution_deg = reader.number("region.resolution_deg", c.resolution_deg);

  c.types = static_cast<int>(reader.integer("model.types", c.types));
  if (c.types < 1) throw std::runtime_error(origin + ": model.types must be >= 1");
  c.s = static_cast<int>(reader.integer("model.s", c.s));
  c.seed = reader.unsigned64("model.seed", c.seed);
  c.use_fsa = reader.boolean("model.use_fsa", c.use_fsa);
  c.m = static_cast<int>(reader.integer("model.m", c.m));
  c.block_size = static_cast<int>(reader.integer("model.block_size", c.block_size));
  c.occurrence_only = reader.boolean("model.occurrence_only", c.occurrence_only);

  c.cov = MultiMaternParams::identity(c.types);
  c.cov.beta_km = reader.number("model.beta_km", 1000.0);
  const auto sigma2 = reader.numbers("model.sigma2", std::vector<double>(c.types, 1.0));
  if (static_cast<int>(sigma2.size()) != c.types)
    throw std::runtime_error(origin + ": model.sigma2 must have length types");
  for (int i = 0; i < c.types; ++i) c.cov.sigma2(i) = sigma2[static_cast<size_t>(i)];
  c.cov.rho = reader.matrix("model.rho", c.cov.rho);
  if (c.cov.rho.rows() != c.types || c.cov.rho.cols() != c.types)
    throw std::runtime_error(origin + ": model.rho must be types x types");
  c.eta = reader.matrix("model.eta", Eigen::MatrixXd());
  if (c.has_eta() && c.eta.rows() != c.types)
    throw std::runtime_error(origin + ": model.eta must have one row per type");

  c.nm_tol = reader.number("fit.tol", c.nm_tol);
  c.max_iters = static_cast<int>(reader.integer("fit.max_iters", c.max_iters));
  c.init_step = reader.number("fit.init_step", c.init_step);
  for (const auto& item : reader.texts("fit.fix", {})) {
    const size_t eq = item.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(origin + ": fit.fix entries must look like name=value");
    try {
      c.fixed.emplace_back(trim(item.substr(0, eq)), std::stod(trim(item.substr(eq + 1))));
    } catch (...) {
      throw std::runtime_error(origin + ": fit.fix entry '" + item + "' has a malformed value");
    }
  }

  c.profile_parameter = reader.text("profile.parameter", c.profile_parameter);
  c.profile_values = reader.numbers("profile.values", c.profile_values);

  reader.take_section_texts("inputs", c.inputs);
  if (auto it = c.inputs.find("rain_columns"); it != c.inputs.end()) {
    c.inputs.erase(it);
  }
  c.rain_columns = reader.texts("inputs.rain_columns", c.rain_columns);
  c.standardize_covariates =
      reader.boolean("inputs.standardize_covariates", c.standardize_covariates);
  c.inputs.erase("standardize_covariates");

  c.eof_variable = reader.text("eof.variable", c.eof_variable);
  c.eof_k = static_cast<int>(reader.integer("eof.k", c.eof_k));

  c.check_n = static_cast<int>(reader.integer("fsa_check.n", c.check_n));
  c.check_m = static_cast<int>(reader.integer("fsa_check.m", c.check_m));
  c.check_block = static_cast<int>(reader.integer("fsa_check.block_size", c.check_block));
  c.check_seed = reader.unsigned64("fsa_check.seed", c.check_seed);

  c.out_dir = reader.text("output.dir", c.out_dir);

  reader.check_unknown();

  if (c.s < 1) throw std::runtime_error(origin + ": model.s must be >= 1");
  if (c.m < 1) throw std::runtime_error(origin + ": model.m must be >= 1");
  if (c.block_size < 1) throw std::runtime_error(origin + ": model.block_size must be >= 1");
  if (!(c.resolution_deg > 0.0))
    throw std::runtime_error(origin + ": region.resolution_deg must be > 0");
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path);
}

namespace {

std::string fmt(double v) { return format_value(v); }

std::string fmt_vector(const Eigen::VectorXd& v) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt(v(i));
  }
  return out + "]";
}

std::string fmt_matrix(const Eigen::MatrixXd& m) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (i) out += ", ";
    out += fmt_vector(m.row(i).transpose());
  }
  return out + "]";
}

std::string fmt_texts(const std::vector<std::string>& items) {
  std::string out = "[";
  for (size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  return out + "]";
}

}  // namespace

std::string serialize_config(const RunConfig& c) {
  std::ostringstream out;
  out << "[region]\n";
  out << "lon_min = " << fmt(c.region.lon_min) << "\n";
  out << "lon_max = " << fmt(c.region.lon_max) << "\n";
  out << "lat_min = " << fmt(c.region.lat_min) << "\n";
  out << "lat_max = " << fmt(c.region.lat_max) << "\n";
  out << "resolution_deg = " << fmt(c.resolution_deg) << "\n";
  out << "\n[model]\n";
  out << "types = " << c.types << "\n";
  out << "s = " << c.s << "\n";
  out << "seed = " << c.seed << "\n";
  out << "use_fsa = " << (c.use_fsa ? "true" : "false") << "\n";
  out << "m = " << c.m << "\n";
  out << "block_size = " << c.block_size << "\n";
  out << "occurrence_only = " << (c.occurrence_only ? "true" : "false") << "\n";
  out << "beta_km = " << fmt(c.cov.beta_km) << "\n";
  out << "sigma2 = " << fmt_vector(c.cov.sigma2) << "\n";
  out << "rho = " << fmt_matrix(c.cov.rho) << "\n";
  if (c.has_eta()) out << "eta = " << fmt_matrix(c.eta) << "\n";
  out << "\n[fit]\n";
  out << "tol = " << fmt(c.nm_tol) << "\n";
  out << "max_iters = " << c.max_iters << "\n";
  out << "init_step = " << fmt(c.init_step) << "\n";
  if (!c.fixed.empty()) {
    std::vector<std::string> items;
    for (const auto& [name, value] : c.fixed) items.push_back(name + "=" + fmt(value));
    out << "fix = " << fmt_texts(items) << "\n";
  }
  if (!c.profile_parameter.empty() || !c.profile_values.empty()) {
    out << "\n[profile]\n";
    if (!c.profile_parameter.empty()) out << "parameter = " << c.profile_parameter << "\n";
    if (!c.profile_values.empty()) {
      Eigen::VectorXd v(static_cast<Eigen::Index>(c.profile_values.size()));
      for (size_t i = 0; i < c.profile_values.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = c.profile_values[i];
      out << "values = " << fmt_vector(v) << "\n";
    }
  }
  out << "\n[inputs]\n";
  for (const auto& [key, value] : c.inputs) out << key << " = " << value << "\n";
  out << "rain_columns = " << fmt_texts(c.rain_columns) << "\n";
  out << "standardize_covariates = " << (c.standardize_covariates ? "true" : "false") << "\n";
  out << "\n[eof]\n";
  out << "variable = " << c.eof_variable << "\n";
  out << "k = " << c.eof_k << "\n";
  out << "\n[fsa_check]\n";
  out << "n = " << c.check_n << "\n";
  out << "m = " << c.check_m << "\n";
  out << "block_size = " << c.check_block << "\n";
  out << "seed = " << c.check_seed << "\n";
  out << "\n[output]\n";
  out << "dir = " << c.out_dir << "\n";
  return out.str();
}

void write_config(const RunConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config '" + path + "'");
  out << serialize_config(config);
  if (!out) throw std::runtime_error("write failed for config '" + path + "'");
}

}  // namespace lgcps

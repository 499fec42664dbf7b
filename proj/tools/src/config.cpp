#include "degenflow/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace degenflow::cli {

namespace {

struct Entry {
  std::string value;
  int line = 0;
  bool used = false;
};

struct Section {
  std::string name;
  int line = 0;
  std::map<std::string, Entry> entries;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((s[i] == '#' || s[i] == ';') && (i == 0 || s[i - 1] == ' ' || s[i - 1] == '\t')) return s.substr(0, i);
  }
  return s;
}

bool parse_number(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size();
}

bool parse_list(const std::string& text, std::vector<double>& out) {
  out.clear();
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, ',')) {
    double v;
    if (!parse_number(item, v)) return false;
    out.push_back(v);
  }
  return !out.empty();
}

class Reader {
 public:
  Reader(Section& s, std::vector<ConfigIssue>& issues) : s_(s), issues_(issues) {}

  bool has(const std::string& key) const { return s_.entries.count(key) != 0; }

  template <class T>
  void number(const std::string& key, T& out) {
    auto* e = find(key);
    if (!e) return;
    double v;
    if (!parse_number(e->value, v)) return parse_error(*e, key, "expected a number");
    if constexpr (std::is_integral_v<T>) {
      if (v != static_cast<double>(static_cast<long long>(v)) || v < 0.0) {
        return parse_error(*e, key, "expected a nonnegative integer");
      }
    }
    out = static_cast<T>(v);
  }

  void list(const std::string& key, std::vector<double>& out) {
    auto* e = find(key);
    if (!e) return;
    if (!parse_list(e->value, out)) parse_error(*e, key, "expected a comma-separated list of numbers");
  }

  void point(const std::string& key, std::optional<Vec2>& out) {
    auto* e = find(key);
    if (!e) return;
    std::vector<double> v;
    if (!parse_list(e->value, v) || v.size() != 2) return parse_error(*e, key, "expected two numbers");
    out = Vec2{v[0], v[1]};
  }

  void text(const std::string& key, std::string& out) {
    if (auto* e = find(key)) out = e->value;
  }

  void boolean(const std::string& key, bool& out) {
    auto* e = find(key);
    if (!e) return;
    if (e->value == "true" || e->value == "1") out = true;
    else if (e->value == "false" || e->value == "0") out = false;
    else parse_error(*e, key, "expected true or false");
  }

  void series(const std::string& key, FourierSeries& out) {
    const bool plain = has(key), c = has(key + ".cos"), s = has(key + ".sin");
    if (plain && (c || s)) {
      issues_.push_back({ErrorCode::ValidationError, s_.entries[key].line, s_.name + "." + key,
                         "give either a constant or cos/sin lists, not both"});
      return;
    }
    if (plain) {
      double v = 0.0;
      number(key, v);
      out = FourierSeries(v);
      return;
    }
    if (!c && !s) return;
    std::vector<double> cs{0.0}, ss;
    if (c) list(key + ".cos", cs);
    if (s) list(key + ".sin", ss);
    out = FourierSeries(cs, ss);
  }

  void report_unused() {
    for (auto& [key, e] : s_.entries) {
      if (!e.used) parse_error(e, key, "unknown key");
    }
  }

  void parse_error(Entry& e, const std::string& key, const std::string& msg) {
    issues_.push_back({ErrorCode::ParseError, e.line, s_.name + "." + key, msg});
  }

  int line_of(const std::string& key) const {
    const auto it = s_.entries.find(key);
    return it == s_.entries.end() ? s_.line : it->second.line;
  }
  const std::string& name() const { return s_.name; }

 private:
  Entry* find(const std::string& key) {
    auto it = s_.entries.find(key);
    if (it == s_.entries.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  }

  Section& s_;
  std::vector<ConfigIssue>& issues_;
};

std::string join_issues(const std::vector<ConfigIssue>& issues) {
  std::ostringstream os;
  os << issues.size() << " configuration issue" << (issues.size() == 1 ? "" : "s");
  for (const auto& i : issues) {
    os << "\n  ";
    if (i.line > 0) os << "line " << i.line << ": ";
    if (!i.key.empty()) os << i.key << ": ";
    os << i.message;
  }
  return os.str();
}

ErrorCode aggregate_code(const std::vector<ConfigIssue>& issues) {
  for (const auto& i : issues) {
    if (i.code == ErrorCode::ParseError) return ErrorCode::ParseError;
  }
  return ErrorCode::ValidationError;
}

const char* const kSeriesKeys[] = {"a", "b", "alpha", "beta", "d_cross", "rho"};

FourierSeries* series_field(BoundaryCoefficients& bc, const std::string& key) {
  if (key == "a") return &bc.a;
  if (key == "b") return &bc.b;
  if (key == "alpha") return &bc.alpha;
  if (key == "beta") return &bc.beta;
  if (key == "d_cross") return &bc.d_cross;
  return &bc.rho;
}

void render_series(std::ostringstream& os, const FourierSeries& f) {
  os << "[";
  for (double c : f.cos_coeffs()) os << format_double(c) << ",";
  os << "|";
  for (double s : f.sin_coeffs()) os << format_double(s) << ",";
  os << "]";
}

}  // namespace

const char* to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Spectral: return "spectral";
    case ExperimentKind::ExitProb: return "exitprob";
    case ExperimentKind::ExitTime: return "exittime";
    case ExperimentKind::HitMeasure: return "hitmeasure";
    case ExperimentKind::Transition: return "transition";
    case ExperimentKind::Metastable: return "metastable";
    case ExperimentKind::Mu: return "mu";
    case ExperimentKind::Homogenize: return "homogenize";
  }
  return "unknown";
}

std::optional<ExperimentKind> experiment_kind_from_string(const std::string& name) {
  for (auto k : {ExperimentKind::Spectral, ExperimentKind::ExitProb, ExperimentKind::ExitTime,
                 ExperimentKind::HitMeasure, ExperimentKind::Transition, ExperimentKind::Metastable,
                 ExperimentKind::Mu, ExperimentKind::Homogenize}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

ConfigError::ConfigError(std::vector<ConfigIssue> issues)
    : Error(aggregate_code(issues), join_issues(issues)), issues_(std::move(issues)) {}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string hex_hash(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t model_hash(const ModelDescription& model) {
  std::ostringstream os;
  os << to_string(model.kind) << ";delta=" << format_double(model.interior.delta)
     << ";height=" << format_double(model.interior.height)
     << ";perturbation=" << format_double(model.interior.perturbation);
  for (const auto& b : model.boundaries) {
    os << ";boundary(center=" << format_double(b.center.x) << "," << format_double(b.center.y)
       << ";radius=" << format_double(b.radius) << ";remainder=" << format_double(b.coefficients.remainder_scale);
    auto bc = b.coefficients;
    for (const char* key : kSeriesKeys) {
      os << ";" << key << "=";
      render_series(os, *series_field(bc, key));
    }
    os << ")";
  }
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<ExperimentPlan> parse_config(const std::string& text) {
  std::vector<ConfigIssue> issues;
  std::vector<Section> sections;
  {
    std::istringstream is(text);
    std::string raw;
    int line_no = 0;
    Section* current = nullptr;
    while (std::getline(is, raw)) {
      ++line_no;
      const std::string line = trim(strip_comment(raw));
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') {
          issues.push_back({ErrorCode::ParseError, line_no, "", "unterminated section header"});
          current = nullptr;
          continue;
        }
        sections.push_back({trim(line.substr(1, line.size() - 2)), line_no, {}});
        current = &sections.back();
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        issues.push_back({ErrorCode::ParseError, line_no, "", "expected key = value"});
        continue;
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (!current) {
        issues.push_back({ErrorCode::ParseError, line_no, key, "key outside of any section"});
        continue;
      }
      if (key.empty() || value.empty()) {
        issues.push_back({ErrorCode::ParseError, line_no, current->name + "." + key, "empty key or value"});
        continue;
      }
      if (!current->entries.emplace(key, Entry{value, line_no}).second) {
        issues.push_back({ErrorCode::ParseError, line_no, current->name + "." + key, "duplicate key"});
      }
    }
  }

  Section* model_s = nullptr;
  Section* sim_s = nullptr;
  std::map<int, Section*> boundary_s;
  std::vector<Section*> experiment_s;
  std::map<std::string, int> seen;
  for (auto& s : sections) {
    if (seen[s.name]++ > 0 && s.name != "experiment") {
      issues.push_back({ErrorCode::ParseError, s.line, s.name, "duplicate section"});
      continue;
    }
    if (s.name == "model") model_s = &s;
    else if (s.name == "sim") sim_s = &s;
    else if (s.name == "experiment" || s.name.rfind("experiment.", 0) == 0) experiment_s.push_back(&s);
    else if (s.name.rfind("model.boundary.", 0) == 0) {
      double idx;
      const std::string tail = s.name.substr(15);
      if (!parse_number(tail, idx) || idx < 1 || idx != static_cast<int>(idx)) {
        issues.push_back({ErrorCode::ParseError, s.line, s.name, "boundary sections are numbered from 1"});
      } else {
        boundary_s[static_cast<int>(idx)] = &s;
      }
    } else {
      issues.push_back({ErrorCode::ParseError, s.line, s.name, "unknown section"});
    }
  }

  ModelDescription model;
  if (!model_s) {
    issues.push_back({ErrorCode::ValidationError, 0, "model", "missing [model] section"});
  } else {
    Reader r(*model_s, issues);
    std::string geometry = "cylinder";
    r.text("geometry", geometry);
    try {
      model.kind = geometry_kind_from_string(geometry);
    } catch (const Error& e) {
      issues.push_back({ErrorCode::ValidationError, r.line_of("geometry"), "model.geometry", e.what()});
    }
    r.number("delta", model.interior.delta);
    r.number("height", model.interior.height);
    r.number("perturbation", model.interior.perturbation);
    r.report_unused();
  }
  int expected = 1;
  for (auto& [idx, s] : boundary_s) {
    if (idx != expected) {
      issues.push_back({ErrorCode::ValidationError, s->line, s->name, "boundary sections must be numbered 1..m"});
    }
    expected = idx + 1;
    const std::size_t before = issues.size();
    Reader r(*s, issues);
    BoundarySpec b;
    std::optional<Vec2> center;
    r.point("center", center);
    if (center) b.center = *center;
    r.number("radius", b.radius);
    r.number("remainder_scale", b.coefficients.remainder_scale);
    for (const char* key : kSeriesKeys) r.series(key, *series_field(b.coefficients, key));
    r.report_unused();
    if (issues.size() > before) {
      model.boundaries.push_back(b);
      continue;
    }
    try {
      validate_coefficients(b.coefficients, idx);
    } catch (const Error& e) {
      issues.push_back({ErrorCode::ValidationError, s->line, s->name, e.what()});
    }
    model.boundaries.push_back(b);
  }
  if (boundary_s.empty()) {
    issues.push_back({ErrorCode::ValidationError, 0, "model.boundary", "no boundary sections"});
  }
  std::optional<Model> built;
  if (issues.empty()) {
    try {
      built = model.build();
    } catch (const Error& e) {
      issues.push_back({ErrorCode::ValidationError, model_s ? model_s->line : 0, "model", e.what()});
    }
  }
  const int m = static_cast<int>(model.boundaries.size());

  SimConfig sim;
  if (sim_s) {
    Reader r(*sim_s, issues);
    r.number("eps", sim.eps);
    r.number("dt", sim.dt);
    r.number("dt.interior", sim.dt_interior);
    r.number("dt.tube", sim.dt_tube);
    r.number("dt.log", sim.dt_log);
    r.number("dt.micro", sim.dt_micro);
    r.number("c_micro", sim.c_micro);
    r.number("log_upper_fraction", sim.log_upper_fraction);
    r.number("z_hit", sim.z_hit);
    r.number("max_time", sim.max_time);
    r.boolean("bridge", sim.bridge);
    r.number("refine_levels", sim.refine_levels);
    r.report_unused();
  }

  if (experiment_s.empty()) {
    issues.push_back({ErrorCode::ValidationError, 0, "experiment", "no experiment section"});
  }
  std::vector<ExperimentPlan> plans;
  const std::uint64_t hash = model_hash(model);
  for (Section* s : experiment_s) {
    Reader r(*s, issues);
    ExperimentPlan p;
    p.name = s->name.size() > 11 ? s->name.substr(11) : "";
    p.model = model;
    p.model_hash = hash;
    p.sim = sim;
    const std::string where = s->name;
    auto invalid = [&](const std::string& key, const std::string& msg) {
      issues.push_back({ErrorCode::ValidationError, r.line_of(key), where + "." + key, msg});
    };
    std::string kind;
    r.text("kind", kind);
    if (kind.empty()) {
      invalid("kind", "missing experiment kind");
    } else if (auto k = experiment_kind_from_string(kind)) {
      p.kind = *k;
    } else {
      invalid("kind", "unknown experiment kind '" + kind + "'");
    }
    r.list("eps", p.eps);
    r.list("kappa", p.kappa);
    r.list("zeta_ratio", p.zeta_ratio);
    r.list("times", p.times);
    r.number("n", p.n);
    r.number("bins", p.bins);
    r.number("spectral_n", p.spectral_n);
    r.number("boundary", p.boundary);
    std::string start = "level";
    r.text("start", start);
    if (start == "level") p.start = HitStart::LevelSet;
    else if (start == "surface") p.start = HitStart::Surface;
    else invalid("start", "expected level or surface");
    r.point("x", p.x);
    std::string mode = "reflected";
    r.text("mode", mode);
    if (mode == "reflected") p.mode = ProcessMode::Reflected;
    else if (mode == "stopped") p.mode = ProcessMode::Stopped;
    else invalid("mode", "expected reflected or stopped");
    r.number("capture", p.capture);
    r.number("T", p.T);
    r.number("burn_in", p.burn_in);
    r.number("radius", p.radius);
    r.text("kernel", p.kernel_file);
    r.number("walk_steps", p.walk_steps);
    r.number("walks", p.walks);
    r.number("seed", p.seed);
    r.text("out", p.out_dir);
    r.boolean("dump_spectral", p.dump_spectral);
    r.report_unused();
    if (p.eps.empty()) p.eps = {sim.eps};

    if (p.n == 0) invalid("n", "number of paths must be positive");
    if (p.bins <= 0) invalid("bins", "bins must be positive");
    if (p.spectral_n < 16) invalid("spectral_n", "spectral grid needs at least 16 nodes");
    const bool needs_boundary = p.kind == ExperimentKind::ExitProb || p.kind == ExperimentKind::ExitTime ||
                                p.kind == ExperimentKind::HitMeasure;
    if (needs_boundary && (p.boundary < 1 || p.boundary > m)) {
      invalid("boundary", "boundary " + std::to_string(p.boundary) + " does not exist (model has " +
                              std::to_string(m) + ")");
    }
    const bool needs_eps = p.kind != ExperimentKind::Spectral && p.kind != ExperimentKind::Mu;
    for (double e : p.eps) {
      if (needs_eps && !(e > 0.0) && p.kernel_file.empty()) invalid("eps", "eps values must be positive");
    }
    auto require_grid = [&](const std::vector<double>& g, const std::string& key) {
      if (g.empty()) invalid(key, "grid must be nonempty");
      for (double v : g) {
        if (!(v > 0.0)) invalid(key, "grid values must be positive");
      }
    };
    switch (p.kind) {
      case ExperimentKind::ExitProb:
        require_grid(p.kappa, "kappa");
        require_grid(p.zeta_ratio, "zeta_ratio");
        for (double z : p.zeta_ratio) {
          if (z > 1.0) invalid("zeta_ratio", "zeta / kappa must not exceed 1");
        }
        break;
      case ExperimentKind::ExitTime:
      case ExperimentKind::HitMeasure: require_grid(p.kappa, "kappa"); break;
      case ExperimentKind::Transition:
        if (m < 2) invalid("kind", "transition kernel needs at least two boundaries");
        break;
      case ExperimentKind::Metastable:
        require_grid(p.times, "times");
        if (!p.x) invalid("x", "start point required");
        if (p.mode == ProcessMode::Reflected) require_grid(p.kappa, "kappa");
        break;
      case ExperimentKind::Mu:
        if (!p.x) invalid("x", "start point required");
        if (!(p.T > p.burn_in && p.burn_in >= 0.0)) invalid("T", "need T > burn_in >= 0");
        break;
      case ExperimentKind::Homogenize:
        if (p.kernel_file.empty() && model.kind != GeometryKind::PeriodicPlane) {
          invalid("kind", "homogenize needs periodic_plane geometry or a kernel file");
        }
        if (p.radius < 1) invalid("radius", "truncation radius must be at least 1");
        if (p.walk_steps < 1000) invalid("walk_steps", "walk needs at least 1000 steps");
        if (p.walks < 2 && p.walks != 0) invalid("walks", "need at least two walks (or 0 to skip)");
        break;
      case ExperimentKind::Spectral: break;
    }
    if (built && needs_eps && p.kernel_file.empty()) {
      for (double e : p.eps) {
        SimConfig c = sim;
        c.eps = e;
        try {
          c.validate(*built);
        } catch (const Error& err) {
          issues.push_back({ErrorCode::ValidationError, sim_s ? sim_s->line : 0, "sim",
                            std::string(err.what()) + " at eps " + format_double(e)});
          break;
        }
      }
    }
    plans.push_back(std::move(p));
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return plans;
}

std::vector<ExperimentPlan> load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  auto plans = parse_config(ss.str());
  const auto base = std::filesystem::path(path).parent_path();
  for (auto& p : plans) {
    if (!p.kernel_file.empty() && std::filesystem::path(p.kernel_file).is_relative()) {
      p.kernel_file = (base / p.kernel_file).string();
    }
  }
  return plans;
}

}  // namespace degenflow::cli

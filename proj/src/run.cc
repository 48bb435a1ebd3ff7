#include "dne/run.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "dne/error.h"

#ifndef DNE_GIT_DESCRIBE
#define DNE_GIT_DESCRIBE "unknown"
#endif

namespace dne::run {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad(const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); }

template <typename T>
T parse_int(const std::string& key, const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, "expected an integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
    bad(key, "expected a number, got '" + v + "'");
  return out;
}

std::string real_str(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::uint8_t parse_color(const std::string& key, const std::string& v) {
  const auto c = parse_int<int>(key, v);
  if (c < 0 || c >= preproc::kPaletteSize) bad(key, "palette index must lie in [0, 127]");
  return static_cast<std::uint8_t>(c);
}

struct Key {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Key int_key(T RunConfig::*field) {
  return {[field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = parse_int<T>(k, v); },
          [field](const RunConfig& c) { return std::to_string(c.*field); }};
}

template <typename T>
Key ga_int(T ga::GaConfig::*field) {
  return {[field](RunConfig& c, const std::string& k, const std::string& v) { c.ga.*field = parse_int<T>(k, v); },
          [field](const RunConfig& c) { return std::to_string(c.ga.*field); }};
}

Key catch_int(int env::CatchConfig::*field) {
  return {[field](RunConfig& c, const std::string& k, const std::string& v) {
            c.catch_config.*field = parse_int<int>(k, v);
          },
          [field](const RunConfig& c) { return std::to_string(c.catch_config.*field); }};
}

Key catch_color(std::uint8_t env::CatchConfig::*field) {
  return {[field](RunConfig& c, const std::string& k, const std::string& v) {
            c.catch_config.*field = parse_color(k, v);
          },
          [field](const RunConfig& c) { return std::to_string(c.catch_config.*field); }};
}

Key string_key(std::string RunConfig::*field) {
  return {[field](RunConfig& c, const std::string&, const std::string& v) { c.*field = v; },
          [field](const RunConfig& c) { return c.*field; }};
}

// Ordered as rendered.
const std::vector<std::pair<std::string, Key>>& keys() {
  static const std::vector<std::pair<std::string, Key>> table = {
      {"ga.population", ga_int(&ga::GaConfig::population)},
      {"ga.truncation", ga_int(&ga::GaConfig::truncation)},
      {"ga.elites", ga_int(&ga::GaConfig::elites)},
      {"ga.sigma",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.ga.sigma = parse_real(k, v); },
        [](const RunConfig& c) { return real_str(c.ga.sigma); }}},
      {"ga.reevals", ga_int(&ga::GaConfig::reevals)},
      {"ga.generations", ga_int(&ga::GaConfig::generations)},
      {"ga.seed", ga_int(&ga::GaConfig::master_seed)},

      {"env.game",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          try {
            c.env.game_id = env::parse_game(v);
          } catch (const ConfigError&) {
            bad(k, "unknown game '" + v + "' (catch, replay)");
          }
        },
        [](const RunConfig& c) { return env::game_name(c.env.game_id); }}},
      {"env.actions",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.env.action_count = parse_int<int>(k, v); },
        [](const RunConfig& c) { return std::to_string(c.env.action_count); }}},
      {"env.frame_cap",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.env.frame_cap = parse_int<std::uint32_t>(k, v);
        },
        [](const RunConfig& c) { return std::to_string(c.env.frame_cap); }}},
      {"env.stickiness",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.stickiness = parse_real(k, v); },
        [](const RunConfig& c) { return real_str(c.stickiness); }}},
      {"env.fixture", string_key(&RunConfig::fixture)},
      {"env.palette", string_key(&RunConfig::palette)},

      {"catch.paddle_width", catch_int(&env::CatchConfig::paddle_width)},
      {"catch.paddle_height", catch_int(&env::CatchConfig::paddle_height)},
      {"catch.paddle_y", catch_int(&env::CatchConfig::paddle_y)},
      {"catch.paddle_speed", catch_int(&env::CatchConfig::paddle_speed)},
      {"catch.ball_size", catch_int(&env::CatchConfig::ball_size)},
      {"catch.ball_speed", catch_int(&env::CatchConfig::ball_speed)},
      {"catch.spawn_y", catch_int(&env::CatchConfig::spawn_y)},
      {"catch.max_drops", catch_int(&env::CatchConfig::max_drops)},
      {"catch.background", catch_color(&env::CatchConfig::background)},
      {"catch.wall_color", catch_color(&env::CatchConfig::wall_color)},
      {"catch.paddle_color", catch_color(&env::CatchConfig::paddle_color)},
      {"catch.ball_color", catch_color(&env::CatchConfig::ball_color)},

      {"farm.mode",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "threads") c.farm_mode = FarmMode::threads;
          else if (v == "workers") c.farm_mode = FarmMode::workers;
          else bad(k, "expected threads or workers, got '" + v + "'");
        },
        [](const RunConfig& c) { return std::string(c.farm_mode == FarmMode::threads ? "threads" : "workers"); }}},
      {"farm.threads", int_key(&RunConfig::threads)},
      {"farm.workers",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.workers.clear();
          std::stringstream ss(v);
          std::string item;
          while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            try {
              c.workers.push_back(farm::Endpoint::parse(item));
            } catch (const ConfigError& e) {
              bad(k, e.what());
            }
          }
        },
        [](const RunConfig& c) {
          std::string s;
          for (const auto& w : c.workers) s += (s.empty() ? "" : ",") + w.str();
          return s;
        }}},
      {"farm.completion",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "push") c.completion = farm::CompletionMode::push;
          else if (v == "polling") c.completion = farm::CompletionMode::polling;
          else bad(k, "expected push or polling, got '" + v + "'");
        },
        [](const RunConfig& c) {
          return std::string(c.completion == farm::CompletionMode::push ? "push" : "polling");
        }}},
      {"farm.poll_interval_us", int_key(&RunConfig::poll_interval_us)},

      {"output.dir", string_key(&RunConfig::out_dir)},
      {"output.checkpoint_interval", int_key(&RunConfig::checkpoint_interval)},
      {"output.timing",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "none") c.timing = Timing::none;
          else if (v == "wall") c.timing = Timing::wall;
          else bad(k, "expected none or wall, got '" + v + "'");
        },
        [](const RunConfig& c) { return std::string(c.timing == Timing::none ? "none" : "wall"); }}},
  };
  return table;
}

}  // namespace

void RunConfig::validate() const {
  ga.validate();
  if (ga.generations < 0) bad("ga.generations", "must be >= 0");
  try {
    env.validate();
  } catch (const ConfigError& e) {
    bad("env", e.what());
  }
  if (!(stickiness >= 0.0 && stickiness < 1.0)) bad("env.stickiness", "must lie in [0, 1)");
  if (env.game_id == static_cast<std::uint32_t>(env::GameId::replay) && fixture.empty())
    bad("env.fixture", "required for env.game = replay");
  try {
    catch_config.validate();
  } catch (const ConfigError& e) {
    bad("catch", e.what());
  }
  if (threads < 0) bad("farm.threads", "must be >= 0");
  if (farm_mode == FarmMode::workers && workers.empty()) bad("farm.workers", "required for farm.mode = workers");
  if (poll_interval_us < 0) bad("farm.poll_interval_us", "must be >= 0");
  if (out_dir.empty()) bad("output.dir", "must not be empty");
  if (checkpoint_interval < 0) bad("output.checkpoint_interval", "must be >= 0");
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, k] : keys()) {
    if (name == key) {
      k.set(cfg, key, value);
      return;
    }
  }
  bad(key, "unknown configuration key");
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(std::string_view(line).substr(0, eq));
    if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
    set_key(cfg, key, trim(std::string_view(line).substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string render_config(const RunConfig& cfg) {
  std::string out, section;
  for (const auto& [name, k] : keys()) {
    const auto s = name.substr(0, name.find('.'));
    if (s != section) {
      if (!section.empty()) out += '\n';
      section = s;
    }
    out += name + " = " + k.get(cfg) + "\n";
  }
  return out;
}

std::string git_describe() { return DNE_GIT_DESCRIBE; }

std::string format_stats_row(const StatsRow& r) {
  std::string s = std::to_string(r.generation) + "," + real_str(r.elite_mean) + "," + real_str(r.topT_mean) + "," +
                  real_str(r.pop_mean) + "," + std::to_string(r.frames_total) + ",";
  if (r.wall_seconds) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", *r.wall_seconds);
    s += buf;
  }
  return s;
}

std::vector<StatsRow> parse_stats_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != kStatsSchema)
    throw FormatError("stats CSV: missing schema line '" + std::string(kStatsSchema) + "'");
  if (!std::getline(in, line) || trim(line) != kStatsHeader) throw FormatError("stats CSV: unexpected header");
  std::vector<StatsRow> rows;
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(trim(item));
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 6) throw FormatError("stats CSV line " + std::to_string(lineno) + ": expected 6 fields");
    try {
      StatsRow r;
      const std::string where = "stats CSV line " + std::to_string(lineno);
      r.generation = parse_int<int>(where, f[0]);
      r.elite_mean = parse_real(where, f[1]);
      r.topT_mean = parse_real(where, f[2]);
      r.pop_mean = parse_real(where, f[3]);
      r.frames_total = parse_int<std::uint64_t>(where, f[4]);
      if (!f[5].empty()) r.wall_seconds = parse_real(where, f[5]);
      rows.push_back(r);
    } catch (const ConfigError& e) {
      throw FormatError(e.what());
    }
  }
  return rows;
}

std::vector<StatsRow> read_stats_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open stats file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_stats_csv(ss.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string render_plot(const std::vector<std::vector<StatsRow>>& runs, const std::string& title) {
  // generation -> elite means across runs
  std::map<int, std::vector<double>> by_gen;
  for (const auto& run : runs)
    for (const auto& r : run) by_gen[r.generation].push_back(r.elite_mean);
  if (by_gen.empty()) throw FormatError("no generations to plot");

  struct Point {
    int g;
    double mean, lo, hi;
  };
  std::vector<Point> pts;
  double ymin = 1e300, ymax = -1e300;
  for (const auto& [g, v] : by_gen) {
    double sum = 0;
    for (double x : v) sum += x;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    pts.push_back({g, sum / static_cast<double>(v.size()), *lo, *hi});
    ymin = std::min(ymin, *lo);
    ymax = std::max(ymax, *hi);
  }
  if (ymax - ymin < 1e-9) {
    ymin -= 1;
    ymax += 1;
  }
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  const int gmin = pts.front().g, gmax = std::max(pts.back().g, gmin + 1);

  constexpr double W = 960, H = 540, L = 80, R = 30, T = 50, B = 60;
  const auto X = [&](double g) { return L + (g - gmin) / (gmax - gmin) * (W - L - R); };
  const auto Y = [&](double v) { return H - B - (v - ymin) / (ymax - ymin) * (H - T - B); };
  const auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return std::string(buf);
  };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 960 540\" width=\"960\" height=\"540\">\n"
    << "<rect width=\"960\" height=\"540\" fill=\"white\"/>\n"
    << "<text x=\"480\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"18\">" << title << " ("
    << runs.size() << (runs.size() == 1 ? " run" : " runs") << ")</text>\n";

  // axes and ticks
  o << "<g stroke=\"#333\" stroke-width=\"1\">\n"
    << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\"/>\n"
    << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\"/>\n</g>\n";
  o << "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"#333\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = ymin + (ymax - ymin) * i / 5.0;
    o << "<text x=\"" << L - 8 << "\" y=\"" << num(Y(v) + 4) << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << num(Y(v)) << "\" x2=\"" << W - R << "\" y2=\"" << num(Y(v))
      << "\" stroke=\"#eee\"/>\n";
  }
  const int step = std::max(1, (gmax - gmin) / 10);
  for (int g = gmin; g <= gmax; g += step)
    o << "<text x=\"" << num(X(g)) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << g << "</text>\n";
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">generation</text>\n"
    << "<text x=\"20\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
    << (T + H - B) / 2 << ")\">score</text>\n</g>\n";

  // min-max band
  o << "<polygon fill=\"#4a7ebb\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
  for (const auto& p : pts) o << num(X(p.g)) << "," << num(Y(p.hi)) << " ";
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) o << num(X(it->g)) << "," << num(Y(it->lo)) << " ";
  o << "\"/>\n";
  o << "<polyline fill=\"none\" stroke=\"#1f4e8c\" stroke-width=\"2\" points=\"";
  for (const auto& p : pts) o << num(X(p.g)) << "," << num(Y(p.mean)) << " ";
  o << "\"/>\n</svg>\n";
  return o.str();
}

}  // namespace dne::run

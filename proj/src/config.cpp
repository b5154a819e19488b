#include "geomlab/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "geomlab/rng.hpp"

namespace geomlab {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
  // shortest representation that round-trips typical config values
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

bool parse_bool(const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("config: bad boolean value '" + v + "'");
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IOError("config: cannot open " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(strformat("config: %s:%d missing '='", path.c_str(), lineno));
    cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& v) {
  if (key == "kind") kind = v;
  else if (key == "n") n = std::stoi(v);
  else if (key == "n_test") n_test = std::stoi(v);
  else if (key == "icr") icr = std::stod(v);
  else if (key == "image") image = std::stoi(v);
  else if (key == "seed") seed = std::stoull(v);
  else if (key == "bin") bin = std::stoi(v);
  else if (key == "alpha") alpha = std::stod(v);
  else if (key == "reweight") reweight = v;
  else if (key == "threshold") threshold = std::stod(v);
  else if (key == "cap") cap = std::stoi(v);
  else if (key == "concept_token") concept_token = parse_bool(v);
  else if (key == "geometry") geometry = parse_bool(v);
  else if (key == "oracle_sigma") oracle_sigma = std::stod(v);
  else if (key == "oracle_fn") oracle_fn = std::stod(v);
  else if (key == "oracle_conf") oracle_conf = v;
  else if (key == "sigma_geo") sigma_geo = std::stod(v);
  else if (key == "mode") mode = v;
  else if (key == "steps") steps = std::stoi(v);
  else if (key == "batch") batch = std::stoi(v);
  else if (key == "lr") lr = std::stod(v);
  else if (key == "sched_steps") sched_steps = std::stoi(v);
  else if (key == "base_ch") base_ch = std::stoi(v);
  else if (key == "emb_dim") emb_dim = std::stoi(v);
  else if (key == "time_dim") time_dim = std::stoi(v);
  else if (key == "max_len") max_len = std::stoi(v);
  else if (key == "guidance") guidance = std::stod(v);
  else if (key == "sampler_steps") sampler_steps = std::stoi(v);
  else if (key == "neg") neg = v;
  else if (key == "eval_count") eval_count = std::stoi(v);
  else if (key == "trend_points") trend_points = std::stoi(v);
  else if (key == "ckpt") ckpt = v;
  else if (key == "pool_size") pool_size = std::stoi(v);
  else if (key == "mr_steps") mr_steps = std::stoi(v);
  else if (key == "mr_lr") mr_lr = std::stod(v);
  else if (key == "out") out = v;
  else throw ConfigError("config: unknown key '" + key + "'");
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  os << "alpha=" << fmt_double(alpha) << "\n";
  os << "base_ch=" << base_ch << "\n";
  os << "batch=" << batch << "\n";
  os << "bin=" << bin << "\n";
  os << "cap=" << cap << "\n";
  os << "ckpt=" << ckpt << "\n";
  os << "concept_token=" << (concept_token ? "on" : "off") << "\n";
  os << "emb_dim=" << emb_dim << "\n";
  os << "eval_count=" << eval_count << "\n";
  os << "geometry=" << (geometry ? "on" : "off") << "\n";
  os << "guidance=" << fmt_double(guidance) << "\n";
  os << "icr=" << fmt_double(icr) << "\n";
  os << "image=" << image << "\n";
  os << "kind=" << kind << "\n";
  os << "lr=" << fmt_double(lr) << "\n";
  os << "max_len=" << max_len << "\n";
  os << "mode=" << mode << "\n";
  os << "mr_lr=" << fmt_double(mr_lr) << "\n";
  os << "mr_steps=" << mr_steps << "\n";
  os << "n=" << n << "\n";
  os << "n_test=" << n_test << "\n";
  os << "neg=" << neg << "\n";
  os << "oracle_conf=" << oracle_conf << "\n";
  os << "oracle_fn=" << fmt_double(oracle_fn) << "\n";
  os << "oracle_sigma=" << fmt_double(oracle_sigma) << "\n";
  os << "out=" << out << "\n";
  os << "pool_size=" << pool_size << "\n";
  os << "reweight=" << reweight << "\n";
  os << "sampler_steps=" << sampler_steps << "\n";
  os << "sched_steps=" << sched_steps << "\n";
  os << "seed=" << seed << "\n";
  os << "sigma_geo=" << fmt_double(sigma_geo) << "\n";
  os << "steps=" << steps << "\n";
  os << "threshold=" << fmt_double(threshold) << "\n";
  os << "time_dim=" << time_dim << "\n";
  os << "trend_points=" << trend_points << "\n";
  return os.str();
}

std::string RunConfig::hash() const {
  const uint64_t h = Rng::fnv1a(serialize());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void RunConfig::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IOError("config: cannot write " + path);
  os << serialize();
}

}  // namespace geomlab

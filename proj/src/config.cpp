#include "iif/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "iif/errors.hpp"

namespace iif {

const std::vector<KeySpec>& config_schema() {
  using V = ValueType;
  static const std::vector<KeySpec> schema = {
      {"seed", V::Int, "0", "master seed", {}},
      {"data.kind", V::Text, "linear", "dataset source",
       {"linear", "blobs", "csv", "idx", "sinc"}},
      {"data.preset", V::Text, "none", "gen-data preset", {"none", "noise-grid"}},
      {"data.n_train", V::Int, "100", "training samples", {}},
      {"data.n_test", V::Int, "100", "test samples", {}},
      {"data.dim", V::Int, "10", "feature dimension", {}},
      {"data.sigma_n", V::Real, "1", "training noise std", {}},
      {"data.sigma_s", V::Real, "1", "test noise std", {}},
      {"data.train_noise", V::Text, "normal", "training noise law", {"normal", "laplace"}},
      {"data.test_noise", V::Text, "normal", "test noise law", {"normal", "laplace"}},
      {"data.classes", V::Int, "4", "blob classes", {}},
      {"data.separation", V::Real, "2", "blob centre spread", {}},
      {"data.flip_fraction", V::Real, "0", "fraction of training labels flipped", {}},
      {"data.task", V::Text, "regression", "task of csv data", {"regression", "classification"}},
      {"data.train_path", V::Text, "", "csv file or idx images (train)", {}},
      {"data.test_path", V::Text, "", "csv file or idx images (test)", {}},
      {"data.train_labels", V::Text, "", "idx labels (train)", {}},
      {"data.test_labels", V::Text, "", "idx labels (test)", {}},
      {"data.limit", V::Int, "0", "keep the first N idx records (0 = all)", {}},
      {"data.idx_classes", V::Int, "10", "classes in idx labels", {}},
      {"model.hidden", V::IntList, "", "hidden widths, comma separated", {}},
      {"model.loss", V::Text, "auto", "loss", {"auto", "mse", "cross_entropy"}},
      {"model.bias", V::Bool, "true", "bias terms", {}},
      {"model.optimizer", V::Text, "auto", "training optimizer",
       {"auto", "closed_form", "sgd", "adam"}},
      {"model.learning_rate", V::Real, "0.01", "training step size", {}},
      {"model.epochs", V::Int, "1", "training epochs", {}},
      {"model.batch_size", V::Int, "32", "training batch size (<= 0: full)", {}},
      {"model.momentum", V::Real, "0", "SGD momentum", {}},
      {"model.ridge", V::Real, "0", "closed-form ridge", {}},
      {"model.weight_decay", V::Real, "0", "iterative weight decay", {}},
      {"model.init_scale", V::Real, "1", "initial weight scale", {}},
      {"attrib.method", V::Text, "iif", "estimator", {"iif", "if", "tracin", "trak"}},
      {"attrib.K", V::Int, "8", "path steps", {}},
      {"attrib.P", V::Int, "64", "projection dimension", {}},
      {"attrib.projection", V::Text, "auto", "projection plan",
       {"auto", "identity", "gaussian", "orthonormal"}},
      {"attrib.baseline", V::Text, "unlearn", "baseline targets", {"unlearn", "prediction"}},
      {"attrib.lambda", V::Real, "1", "unlearning retention weight", {}},
      {"attrib.eta", V::Real, "0.01", "unlearning step size", {}},
      {"attrib.unlearn_epochs", V::Int, "5", "unlearning epochs", {}},
      {"attrib.unlearn_batch", V::Int, "0", "unlearning batch size (<= 0: full)", {}},
      {"attrib.direction", V::Text, "raise", "unlearning direction", {"raise", "lower"}},
      {"attrib.path", V::Text, "auto", "path models", {"auto", "sgd", "exact"}},
      {"attrib.path_lr", V::Real, "0.01", "path SGD step size", {}},
      {"attrib.path_batch", V::Int, "32", "path SGD batch size", {}},
      {"attrib.curvature", V::Text, "auto", "curvature", {"auto", "exact", "fisher"}},
      {"attrib.damping", V::Real, "0.001", "damping added to the reduced curvature", {}},
      {"attrib.cg_tol", V::Real, "1e-8", "CG relative tolerance", {}},
      {"attrib.self_eta", V::Real, "0.01", "per-sample baseline step size", {}},
      {"attrib.trak_output", V::Text, "margin", "TRAK output function", {"margin", "logit"}},
      {"attrib.top_k", V::Int, "8", "proponents/opponents per list", {}},
      {"eval.subsets", V::Int, "500", "LDS subsets", {}},
      {"eval.fraction", V::Real, "0.5", "LDS subset fraction", {}},
      {"eval.test_mode", V::Text, "mean", "test loss", {"mean", "single"}},
      {"eval.test_index", V::Int, "0", "test row in single mode", {}},
      {"eval.threads", V::Int, "0", "retraining workers (0 = auto)", {}},
      {"eval.methods", V::TextList, "iif,if,tracin,trak", "methods for eval-mislabel", {}},
      {"demo.n_train", V::Int, "24", "sinc training points", {}},
      {"demo.centres", V::Int, "12", "sinc kernel centres", {}},
      {"demo.bandwidth", V::Real, "0.8", "sinc kernel bandwidth", {}},
      {"demo.noise", V::Real, "0.05", "sinc target noise", {}},
      {"demo.grid", V::Int, "200", "sinc curve grid points", {}},
      {"demo.sample", V::Int, "-1", "zero-residual sample (-1 = middle)", {}},
      {"output.dir", V::Text, "out", "output directory", {}},
      {"output.formats", V::TextList, "csv,json", "report formats", {}},
  };
  return schema;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(trim(item));
  return out;
}

template <class T>
bool parse_num(const std::string& s, T& v) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool parse_bool(const std::string& s, bool& v) {
  if (s == "true" || s == "1" || s == "yes") return v = true, true;
  if (s == "false" || s == "0" || s == "no") return v = false, true;
  return false;
}

void check_value(const KeySpec& k, const std::string& v) {
  auto bad = [&](const char* what) {
    throw ConfigError("key '" + k.key + "': '" + v + "' is not " + what);
  };
  long long i = 0;
  double d = 0;
  bool b = false;
  switch (k.type) {
    case ValueType::Int:
      if (!parse_num(v, i)) bad("an integer");
      break;
    case ValueType::Real:
      if (!parse_num(v, d)) bad("a number");
      break;
    case ValueType::Bool:
      if (!parse_bool(v, b)) bad("a boolean");
      break;
    case ValueType::Text:
      if (!k.choices.empty() &&
          std::find(k.choices.begin(), k.choices.end(), v) == k.choices.end()) {
        std::string opts;
        for (const auto& c : k.choices) opts += (opts.empty() ? "" : "|") + c;
        throw ConfigError("key '" + k.key + "': '" + v + "' is not one of " + opts);
      }
      break;
    case ValueType::IntList:
      for (const auto& item : split_list(v))
        if (int x = 0; !parse_num(item, x)) bad("a list of integers");
      break;
    case ValueType::TextList:
      break;
  }
}

}  // namespace

Config::Config() {
  for (const auto& k : config_schema()) values_[k.key] = k.fallback;
}

const KeySpec& Config::spec(const std::string& key) const {
  for (const auto& k : config_schema())
    if (k.key == key) return k;
  throw ConfigError("unknown config key '" + key + "'");
}

void Config::set(const std::string& key, const std::string& value) {
  const auto& k = spec(trim(key));
  const std::string v = trim(value);
  check_value(k, v);
  values_[k.key] = v;
}

void Config::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  std::istringstream is(text);
  std::string line;
  std::map<std::string, int> seen;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (auto it = seen.find(key); it != seen.end())
      throw ConfigError(where + ": key '" + key + "' already set on line " +
                        std::to_string(it->second));
    seen[key] = lineno;
    try {
      c.set(key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse(os.str(), path.string());
}

std::string Config::text(const std::string& key) const {
  spec(key);
  return values_.at(key);
}

long long Config::integer(const std::string& key) const {
  long long v = 0;
  parse_num(text(key), v);
  return v;
}

int Config::int32(const std::string& key) const {
  const long long v = integer(key);
  if (v < INT32_MIN || v > INT32_MAX) throw ConfigError("key '" + key + "' out of range");
  return static_cast<int>(v);
}

std::uint64_t Config::u64(const std::string& key) const {
  const long long v = integer(key);
  if (v < 0) throw ConfigError("key '" + key + "' must be >= 0");
  return static_cast<std::uint64_t>(v);
}

double Config::real(const std::string& key) const {
  double v = 0;
  parse_num(text(key), v);
  return v;
}

bool Config::flag(const std::string& key) const {
  bool v = false;
  parse_bool(text(key), v);
  return v;
}

std::vector<int> Config::ints(const std::string& key) const {
  std::vector<int> out;
  for (const auto& item : split_list(text(key))) {
    int v = 0;
    parse_num(item, v);
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> Config::texts(const std::string& key) const {
  return split_list(text(key));
}

std::string Config::resolved() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
  return os.str();
}

}  // namespace iif

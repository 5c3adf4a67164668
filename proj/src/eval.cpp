#include "iif/eval.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "iif/errors.hpp"
#include "json.hpp"

namespace iif {

SubsetPlan make_subset_plan(int population, int count, double fraction, std::uint64_t seed) {
  if (population < 1) throw InvalidArgument("subset plan: population must be >= 1");
  if (count < 1) throw InvalidArgument("subset plan: need at least one subset");
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw InvalidArgument("subset plan: fraction must be in (0, 1]");
  const int size = std::min(population, static_cast<int>(std::ceil(fraction * population - 1e-12)));
  SubsetPlan plan;
  plan.population = population;
  plan.fraction = fraction;
  plan.seed = seed;
  Rng root(seed);
  std::vector<int> idx(static_cast<std::size_t>(population));
  for (int s = 0; s < count; ++s) {
    Rng rng = root.fork(static_cast<std::uint64_t>(s));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < size; ++i) {
      const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(population - i)));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    std::vector<int> set(idx.begin(), idx.begin() + size);
    std::sort(set.begin(), set.end());
    plan.sets.push_back(std::move(set));
  }
  return plan;
}

SubsetPlan leave_one_out_plan(int population) {
  if (population < 2) throw InvalidArgument("leave-one-out plan needs N >= 2");
  SubsetPlan plan;
  plan.population = population;
  plan.fraction = static_cast<double>(population - 1) / population;
  for (int i = 0; i < population; ++i) {
    std::vector<int> set;
    for (int j = 0; j < population; ++j)
      if (j != i) set.push_back(j);
    plan.sets.push_back(std::move(set));
  }
  return plan;
}

namespace {

int worker_count(int requested, int jobs) {
  int n = requested;
  if (n <= 0) n = std::clamp(static_cast<int>(std::thread::hardware_concurrency()), 1, 8);
  return std::max(1, std::min(n, jobs));
}

}  // namespace

SubsetLosses subset_losses(const Dataset& train, const Dataset& test, const ModelRecipe& recipe,
                           const SubsetPlan& plan, int threads) {
  if (plan.population != train.size())
    throw InvalidArgument("lds: subset plan population does not match the training set");
  const int m = plan.size();
  std::vector<double> losses(static_cast<std::size_t>(m), 0.0);
  std::vector<std::string> errors(static_cast<std::size_t>(m));
  std::vector<char> ok(static_cast<std::size_t>(m), 0);
  std::atomic<int> next{0};
  auto work = [&] {
    for (int s = next++; s < m; s = next++) {
      const auto u = static_cast<std::size_t>(s);
      try {
        const ModelState st = train_model(recipe, subset(train, plan.sets[u]));
        const double l = mean_loss(st, test, recipe.loss);
        if (!std::isfinite(l)) throw NumericalError("non-finite test loss");
        losses[u] = l;
        ok[u] = 1;
      } catch (const NumericalError& e) {
        errors[u] = e.what();
      }
    }
  };
  const int w = worker_count(threads, m);
  if (w == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < w; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  SubsetLosses out;
  std::vector<double> kept;
  for (int s = 0; s < m; ++s) {
    const auto u = static_cast<std::size_t>(s);
    if (ok[u]) {
      kept.push_back(losses[u]);
      out.subset_ids.push_back(s);
    } else {
      out.warnings.push_back("subset " + std::to_string(s) + " dropped: " + errors[u]);
    }
  }
  out.p = Eigen::Map<const Vector>(kept.data(), static_cast<Eigen::Index>(kept.size()));
  return out;
}

LdsReport lds_from_losses(const Vector& contribution, const SubsetLosses& losses,
                          const SubsetPlan& plan, std::string method) {
  if (contribution.size() != plan.population)
    throw InvalidArgument("lds: score vector length does not match the training set");
  LdsReport r;
  r.plan = plan;
  r.method = std::move(method);
  r.p = losses.p;
  r.subset_ids = losses.subset_ids;
  r.warnings = losses.warnings;
  r.dropped = plan.size() - static_cast<int>(losses.subset_ids.size());
  r.q.resize(static_cast<Eigen::Index>(r.subset_ids.size()));
  for (std::size_t k = 0; k < r.subset_ids.size(); ++k) {
    double sum = 0.0;
    for (int j : plan.sets[static_cast<std::size_t>(r.subset_ids[k])]) sum += contribution(j);
    r.q(static_cast<Eigen::Index>(k)) = sum;
  }
  if (r.p.size() < 2) throw NumericalError("lds: fewer than two subsets survived retraining");
  r.rho = spearman(r.p, r.q);
  return r;
}

LdsReport lds(const Vector& contribution, const Dataset& train, const Dataset& test,
              const ModelRecipe& recipe, const SubsetPlan& plan, int threads) {
  return lds_from_losses(contribution, subset_losses(train, test, recipe, plan, threads), plan);
}

LdsReport lds(const AttributionScores& scores, const Dataset& train, const Dataset& test,
              const ModelRecipe& recipe, const SubsetPlan& plan, int threads) {
  LdsReport r = lds(scores.loss_contribution(), train, test, recipe, plan, threads);
  r.method = scores.method;
  return r;
}

AucReport mislabel_auc(const Vector& suspicion, const FlipMask& mask) {
  const auto n = static_cast<std::size_t>(suspicion.size());
  if (mask.flipped.size() != n) throw InvalidArgument("auc: suspicion and mask lengths differ");
  if (!all_finite(suspicion)) throw InvalidArgument("auc: non-finite suspicion score");
  const Vector ranks = average_ranks(std::span<const double>(suspicion.data(), n));
  double pos = 0, rank_sum = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (mask.flipped[i]) {
      ++pos;
      rank_sum += ranks(static_cast<Eigen::Index>(i));
    }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0 || neg == 0) throw InvalidArgument("auc: mask must contain both flipped and clean samples");
  AucReport r;
  r.auc = (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
  r.suspicion = suspicion;
  r.mask = mask;
  return r;
}

double path_gap(const AttributionScores& scores) {
  if (!scores.endpoint_gap) throw InvalidArgument("path_gap: scores carry no endpoint gap");
  const double delta = *scores.endpoint_gap;
  return std::abs(scores.scores.sum() - delta) / std::max(std::abs(delta), 1e-12);
}

double permutation_null(const Vector& p, const Vector& q, int permutations, double quantile,
                        std::uint64_t seed) {
  if (p.size() != q.size()) throw InvalidArgument("permutation null: length mismatch");
  if (permutations < 1) throw InvalidArgument("permutation null: need at least one permutation");
  if (!(quantile > 0.0 && quantile < 1.0)) throw InvalidArgument("permutation null: quantile in (0,1)");
  Rng rng(seed);
  std::vector<double> stats;
  Vector perm = q;
  for (int k = 0; k < permutations; ++k) {
    for (Eigen::Index i = perm.size() - 1; i > 0; --i)
      std::swap(perm(i), perm(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(i) + 1))));
    stats.push_back(std::abs(spearman(p, perm)));
  }
  std::sort(stats.begin(), stats.end());
  const auto at = static_cast<std::size_t>(std::ceil(quantile * permutations)) - 1;
  return stats[std::min(at, stats.size() - 1)];
}

std::string lds_report_json(const LdsReport& r) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["rho"] = r.rho;
  j["n_subsets"] = r.plan.size();
  j["n_kept"] = r.p.size();
  j["dropped_count"] = r.dropped;
  j["fraction"] = r.plan.fraction;
  j["subset_size"] = r.plan.sets.empty() ? 0 : r.plan.sets.front().size();
  j["seeds"] = {{"subsets", r.plan.seed}};
  j["warnings"] = r.warnings;
  return j.dump(2) + "\n";
}

std::string lds_report_csv(const LdsReport& r) {
  std::ostringstream os;
  os << "subset_id,true_loss,predicted_sum\n";
  for (Eigen::Index k = 0; k < r.p.size(); ++k)
    os << r.subset_ids[static_cast<std::size_t>(k)] << ',' << format_double(r.p(k)) << ','
       << format_double(r.q(k)) << '\n';
  return os.str();
}

std::string auc_report_json(const AucReport& r) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["auc"] = r.auc;
  j["n"] = r.suspicion.size();
  j["n_flipped"] = r.mask.count();
  j["flip_fraction"] = r.mask.fraction;
  return j.dump(2) + "\n";
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows, const std::string& metric) {
  std::ostringstream os;
  os << "method," << metric << ",n,fraction,dropped\n";
  for (const auto& r : rows)
    os << r.method << ',' << format_double(r.value) << ',' << r.count << ','
       << format_double(r.fraction) << ',' << r.dropped << '\n';
  return os.str();
}

std::string scores_csv(const AttributionScores& s) {
  std::ostringstream os;
  os << "index,score,method,K,P,seed\n";
  for (Eigen::Index i = 0; i < s.scores.size(); ++i)
    os << i << ',' << format_double(s.scores(i)) << ',' << s.method << ',' << s.steps << ','
       << s.proj_dim << ',' << s.seed << '\n';
  return os.str();
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

template <class T>
T parse_number(const std::string& s, int line) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError("scores CSV line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

}  // namespace

AttributionScores parse_scores_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "index,score,method,K,P,seed")
    throw IoError("scores CSV: missing or unexpected header");
  AttributionScores s;
  std::vector<double> vals;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 6) throw IoError("scores CSV line " + std::to_string(lineno) + ": expected 6 fields");
    if (parse_number<int>(f[0], lineno) != static_cast<int>(vals.size()))
      throw IoError("scores CSV line " + std::to_string(lineno) + ": indices must be 0..N-1 in order");
    vals.push_back(parse_number<double>(f[1], lineno));
    s.method = f[2];
    s.steps = parse_number<int>(f[3], lineno);
    s.proj_dim = parse_number<int>(f[4], lineno);
    s.seed = parse_number<std::uint64_t>(f[5], lineno);
  }
  if (vals.empty()) throw IoError("scores CSV: no rows");
  s.scores = Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  s.orientation = orientation_of(s.method);
  return s;
}

AttributionScores read_scores_csv(const std::filesystem::path& path) {
  return parse_scores_csv(read_text(path));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace iif

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "iif/attribution.hpp"
#include "iif/dataflow.hpp"
#include "iif/model.hpp"

namespace iif {

struct SubsetPlan {
  std::vector<std::vector<int>> sets;  // sorted indices, each of size ⌈fraction·N⌉
  int population = 0;
  double fraction = 0.5;
  std::uint64_t seed = 0;

  [[nodiscard]] int size() const { return static_cast<int>(sets.size()); }
};

/// Each set is drawn with its own forked stream, so set s does not depend on
/// how many sets are requested.
SubsetPlan make_subset_plan(int population, int count, double fraction, std::uint64_t seed);

/// Every set except the complement of one index (size N − 1), one per index.
SubsetPlan leave_one_out_plan(int population);

struct LdsReport {
  double rho = 0.0;
  Vector p;                  // retrained test loss per kept subset
  Vector q;                  // Σ_{j∈S} I(j) per kept subset
  std::vector<int> subset_ids;  // plan index of each kept subset
  int dropped = 0;
  std::vector<std::string> warnings;
  SubsetPlan plan;
  std::string method;
};

/// Retrains the recipe on each subset and correlates the test loss with the
/// summed loss contributions. A subset whose fit fails numerically is
/// dropped and noted in `warnings`. threads <= 0 picks a small default.
LdsReport lds(const Vector& contribution, const Dataset& train, const Dataset& test,
              const ModelRecipe& recipe, const SubsetPlan& plan, int threads = 0);
LdsReport lds(const AttributionScores& scores, const Dataset& train, const Dataset& test,
              const ModelRecipe& recipe, const SubsetPlan& plan, int threads = 0);

/// Subset test losses only (for reusing across methods).
struct SubsetLosses {
  Vector p;
  std::vector<int> subset_ids;
  std::vector<std::string> warnings;
};
SubsetLosses subset_losses(const Dataset& train, const Dataset& test, const ModelRecipe& recipe,
                           const SubsetPlan& plan, int threads = 0);
LdsReport lds_from_losses(const Vector& contribution, const SubsetLosses& losses,
                          const SubsetPlan& plan, std::string method = {});

struct AucReport {
  double auc = 0.0;
  Vector suspicion;
  FlipMask mask;
  std::string method;
};

/// Mann–Whitney AUC with average ranks for ties. Throws InvalidArgument when
/// the mask has only one class or lengths differ.
AucReport mislabel_auc(const Vector& suspicion, const FlipMask& mask);

/// |Σ scores − Δ| / max(|Δ|, 1e-12). Throws if the scores carry no Δ.
double path_gap(const AttributionScores& scores);

/// Upper `quantile` of |spearman(p, π(q))| over random permutations π.
double permutation_null(const Vector& p, const Vector& q, int permutations, double quantile,
                        std::uint64_t seed);

std::string lds_report_json(const LdsReport& r);
std::string lds_report_csv(const LdsReport& r);
std::string auc_report_json(const AucReport& r);

struct ComparisonRow {
  std::string method;
  double value = 0.0;
  int count = 0;
  double fraction = 0.0;
  int dropped = 0;
};
/// method,<metric>,n,fraction,dropped
std::string comparison_csv(const std::vector<ComparisonRow>& rows, const std::string& metric);

/// index,score,method,K,P,seed
std::string scores_csv(const AttributionScores& s);
AttributionScores parse_scores_csv(const std::string& text);
AttributionScores read_scores_csv(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace iif

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "iif/attribution.hpp"
#include "iif/config.hpp"
#include "iif/eval.hpp"

namespace iif {

/// Independent seed for a named stage of a run.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stage);

namespace stage {
inline constexpr std::uint64_t kData = 1, kFlip = 2, kTrain = 3, kProjection = 4, kUnlearn = 5,
                               kPath = 6, kSubsets = 7;
}

struct Task {
  Dataset train;
  Dataset test;
  FlipMask mask;           // empty unless labels were flipped
  Vector weights;          // linear generator only
  int image_h = 0, image_w = 0;  // idx images only
};

/// Builds or loads the dataset described by data.*; applies label flips for
/// classification when data.flip_fraction > 0.
Task load_task(const Config& cfg);

ModelRecipe recipe_from(const Config& cfg, const Dataset& train);

/// The test set attribution targets: all rows (eval.test_mode = mean) or the
/// single row eval.test_index.
Dataset attribution_test(const Config& cfg, const Dataset& test);

Curvature curvature_from(const Config& cfg, const ModelState& trained);
ProjectionPlan plan_from(const Config& cfg, const ModelState& trained);
SolverOptions solver_from(const Config& cfg);

struct Trained {
  ModelState state;
  std::vector<Checkpoint> checkpoints;
};
Trained train_from(const ModelRecipe& recipe, const Dataset& train);

/// Runs attrib.method (or `method` when given) on a trained model.
AttributionScores run_method(const Config& cfg, const std::string& method, const Dataset& train,
                             const Dataset& test, const ModelRecipe& recipe, const Trained& model);

/// Per-sample self-influence scores for eval-mislabel.
AttributionScores run_self_method(const Config& cfg, const std::string& method,
                                  const Dataset& train, const ModelRecipe& recipe,
                                  const Trained& model);

struct RunContext {
  Config cfg;
  std::filesystem::path out;
  bool quiet = false;
  std::vector<std::string> inputs;
  std::ostream* log = nullptr;  // progress and warnings; null = silent
};

void cmd_gen_data(const RunContext& ctx);
void cmd_attribute(const RunContext& ctx);
void cmd_eval_lds(const RunContext& ctx);
void cmd_eval_mislabel(const RunContext& ctx);
void cmd_demo_sinc(const RunContext& ctx);
void cmd_report_proponents(const RunContext& ctx);

/// Sinc toy regression, also used by tests.
struct SincDemo {
  Dataset train;
  Dataset test;
  ModelState trained;
  int sample = 0;
  Vector if_scores;
  Vector iif_scores;
  Vector grid_x;
  Vector grid_fit;
};
SincDemo run_sinc_demo(const Config& cfg);

/// Binary PGM (P5) with `tiles` images of h × w laid out left to right.
std::string pgm_montage(const Matrix& images, const std::vector<int>& rows, int h, int w);

}  // namespace iif

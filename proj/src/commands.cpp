#include "iif/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <numbers>
#include <ostream>
#include <sstream>

#include "iif/errors.hpp"
#include "json.hpp"

namespace iif {

using json = nlohmann::ordered_json;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stage) {
  return Rng(seed).fork(stage).seed();
}

namespace {

void note(const RunContext& ctx, const std::string& msg) {
  if (ctx.log && !ctx.quiet) *ctx.log << msg << '\n';
}

void warn(const RunContext& ctx, const std::string& msg) {
  if (ctx.log) *ctx.log << "warning: " << msg << '\n';
}

bool wants(const Config& cfg, const std::string& format) {
  const auto f = cfg.texts("output.formats");
  return std::find(f.begin(), f.end(), format) != f.end();
}

std::filesystem::path prepare_out(const RunContext& ctx) {
  std::error_code ec;
  std::filesystem::create_directories(ctx.out, ec);
  if (ec) throw IoError("cannot create output directory " + ctx.out.string() + ": " + ec.message());
  return ctx.out;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Resolved config and a manifest; everything except `created` is stable.
void finish(const RunContext& ctx, const std::string& command, const std::vector<std::string>& files,
            json extra = json::object()) {
  const auto dir = prepare_out(ctx);
  write_text(dir / "config.resolved", ctx.cfg.resolved());
  json m;
  m["command"] = command;
  m["seed"] = ctx.cfg.u64("seed");
  m["rng"] = Rng::kAlgorithm;
  m["outputs"] = files;
  for (auto& [k, v] : extra.items()) m[k] = v;
  m["created"] = timestamp();
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

std::string mask_csv(const FlipMask& mask) {
  std::ostringstream os;
  os << "index,flipped\n";
  for (std::size_t i = 0; i < mask.flipped.size(); ++i) os << i << ',' << (mask.flipped[i] ? 1 : 0) << '\n';
  return os.str();
}

std::string vector_csv(const Vector& v, const std::string& column) {
  std::ostringstream os;
  os << "index," << column << '\n';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << i << ',' << format_double(v(i)) << '\n';
  return os.str();
}

SyntheticSpec linear_spec(const Config& cfg, std::uint64_t seed) {
  SyntheticSpec s;
  s.n_train = cfg.int32("data.n_train");
  s.n_test = cfg.int32("data.n_test");
  s.dim = cfg.int32("data.dim");
  s.sigma_n = cfg.real("data.sigma_n");
  s.sigma_s = cfg.real("data.sigma_s");
  s.train_noise = parse_noise_kind(cfg.text("data.train_noise"));
  s.test_noise = parse_noise_kind(cfg.text("data.test_noise"));
  s.seed = seed;
  return s;
}

std::string require_path(const Config& cfg, const std::string& key) {
  const std::string p = cfg.text(key);
  if (p.empty()) throw ConfigError(key + " must be set for data.kind=" + cfg.text("data.kind"));
  return p;
}

}  // namespace

Task load_task(const Config& cfg) {
  const std::string kind = cfg.text("data.kind");
  const std::uint64_t seed = derive_seed(cfg.u64("seed"), stage::kData);
  Task t;
  if (kind == "linear") {
    auto lt = gen_linear(linear_spec(cfg, seed));
    t.train = std::move(lt.train);
    t.test = std::move(lt.test);
    t.weights = std::move(lt.weights);
  } else if (kind == "blobs") {
    BlobSpec b;
    b.n_train = cfg.int32("data.n_train");
    b.n_test = cfg.int32("data.n_test");
    b.dim = cfg.int32("data.dim");
    b.classes = cfg.int32("data.classes");
    b.separation = cfg.real("data.separation");
    b.seed = seed;
    auto ct = gen_blobs(b);
    t.train = std::move(ct.train);
    t.test = std::move(ct.test);
  } else if (kind == "csv") {
    const TaskKind tk = parse_task_kind(cfg.text("data.task"));
    t.train = read_dataset_csv(require_path(cfg, "data.train_path"), tk);
    t.test = read_dataset_csv(require_path(cfg, "data.test_path"), tk);
  } else if (kind == "idx") {
    const int limit = cfg.int32("data.limit");
    const int classes = cfg.int32("data.idx_classes");
    const auto img = read_idx(require_path(cfg, "data.train_path"));
    if (img.dims.size() != 3) throw IoError("data.train_path: expected a 3-d image file");
    t.image_h = static_cast<int>(img.dims[1]);
    t.image_w = static_cast<int>(img.dims[2]);
    t.train = load_idx_dataset(cfg.text("data.train_path"), require_path(cfg, "data.train_labels"),
                               limit, classes);
    t.test = load_idx_dataset(require_path(cfg, "data.test_path"),
                              require_path(cfg, "data.test_labels"), limit, classes);
  } else {
    throw ConfigError("data.kind=" + kind + " is only available through demo-sinc");
  }
  const double flip = cfg.real("data.flip_fraction");
  if (flip < 0.0 || flip > 1.0) throw ConfigError("data.flip_fraction must be in [0, 1]");
  if (t.train.kind == TaskKind::Classification) {
    Rng rng(derive_seed(cfg.u64("seed"), stage::kFlip));
    auto [flipped, mask] = flip_labels(t.train, flip, rng);
    t.train = std::move(flipped);
    t.mask = std::move(mask);
  } else if (flip > 0.0) {
    throw ConfigError("data.flip_fraction needs a classification task");
  }
  return t;
}

ModelRecipe recipe_from(const Config& cfg, const Dataset& train) {
  ModelRecipe r;
  r.arch.input_dim = train.dim();
  r.arch.output_dim = train.target_dim();
  r.arch.hidden = cfg.ints("model.hidden");
  for (int h : r.arch.hidden)
    if (h < 1) throw ConfigError("model.hidden widths must be >= 1");
  r.arch.bias = cfg.flag("model.bias");
  const std::string loss = cfg.text("model.loss");
  if (loss == "auto")
    r.loss = train.kind == TaskKind::Classification ? LossKind::CrossEntropy : LossKind::Mse;
  else
    r.loss = parse_loss_kind(loss);
  const bool linear_mse = r.arch.is_linear() && r.loss == LossKind::Mse;
  const std::string opt = cfg.text("model.optimizer");
  TrainConfig& tc = r.train;
  if (opt == "auto")
    tc.optimizer = linear_mse ? Optimizer::ClosedForm : Optimizer::Adam;
  else
    tc.optimizer = parse_optimizer(opt);
  if (tc.optimizer == Optimizer::ClosedForm && !linear_mse)
    throw ConfigError("model.optimizer=closed_form needs a linear model with squared error");
  tc.learning_rate = cfg.real("model.learning_rate");
  tc.epochs = cfg.int32("model.epochs");
  tc.batch_size = cfg.int32("model.batch_size");
  tc.momentum = cfg.real("model.momentum");
  tc.ridge = cfg.real("model.ridge");
  tc.weight_decay = cfg.real("model.weight_decay");
  tc.init_scale = cfg.real("model.init_scale");
  tc.seed = derive_seed(cfg.u64("seed"), stage::kTrain);
  if (tc.epochs < 1) throw ConfigError("model.epochs must be >= 1");
  if (tc.ridge < 0) throw ConfigError("model.ridge must be >= 0");
  return r;
}

Dataset attribution_test(const Config& cfg, const Dataset& test) {
  if (cfg.text("eval.test_mode") == "mean") return test;
  const int i = cfg.int32("eval.test_index");
  if (i < 0 || i >= test.size()) throw ConfigError("eval.test_index out of range");
  return subset(test, std::vector<int>{i});
}

Curvature curvature_from(const Config& cfg, const ModelState& trained) {
  const std::string c = cfg.text("attrib.curvature");
  if (c == "auto") return trained.arch.is_linear() ? Curvature::Exact : Curvature::Fisher;
  return parse_curvature(c);
}

ProjectionPlan plan_from(const Config& cfg, const ModelState& trained) {
  const int m = trained.arch.param_count();
  const int p = cfg.int32("attrib.P");
  Rng rng(derive_seed(cfg.u64("seed"), stage::kProjection));
  const std::string kind = cfg.text("attrib.projection");
  if (kind == "identity") return ProjectionPlan::identity(m);
  if (p < 1) throw ConfigError("attrib.P must be >= 1");
  if (kind == "auto") return ProjectionPlan::automatic(m, p, rng);
  if (p > m) throw ConfigError("attrib.P must not exceed the parameter count");
  if (kind == "gaussian") return ProjectionPlan::gaussian(m, p, rng);
  return ProjectionPlan::orthonormal(m, p, rng);
}

SolverOptions solver_from(const Config& cfg) {
  SolverOptions o;
  o.damping = cfg.real("attrib.damping");
  o.cg_tol = cfg.real("attrib.cg_tol");
  if (o.damping < 0) throw ConfigError("attrib.damping must be >= 0");
  if (!(o.cg_tol > 0)) throw ConfigError("attrib.cg_tol must be > 0");
  return o;
}

Trained train_from(const ModelRecipe& recipe, const Dataset& train) {
  auto [state, ckpts] = fit_with_checkpoints(train, recipe.arch, recipe.loss, recipe.train, recipe.init);
  return {std::move(state), std::move(ckpts)};
}

namespace {

int steps_from(const Config& cfg) {
  const int k = cfg.int32("attrib.K");
  if (k < 1) throw ConfigError("attrib.K must be >= 1");
  return k;
}

Matrix baseline_targets(const Config& cfg, const Dataset& train, const Dataset& test,
                        const ModelRecipe& recipe, const Trained& model) {
  if (cfg.text("attrib.baseline") == "prediction")
    return predict(model.state, train.features, recipe.loss);
  UnlearnConfig u;
  u.lambda = cfg.real("attrib.lambda");
  u.learning_rate = cfg.real("attrib.eta");
  u.epochs = cfg.int32("attrib.unlearn_epochs");
  u.batch_size = cfg.int32("attrib.unlearn_batch");
  u.direction = parse_direction(cfg.text("attrib.direction"));
  u.seed = derive_seed(cfg.u64("seed"), stage::kUnlearn);
  return unlearn_baseline(model.state, train, test, recipe.loss, u).targets;
}

PathConfig path_from(const Config& cfg, const ModelRecipe& recipe) {
  PathConfig pc;
  const std::string mode = cfg.text("attrib.path");
  if (mode == "auto")
    pc.mode = recipe.train.optimizer == Optimizer::ClosedForm ? PathMode::ExactRefit : PathMode::Sgd;
  else
    pc.mode = parse_path_mode(mode);
  pc.learning_rate = cfg.real("attrib.path_lr");
  pc.batch_size = cfg.int32("attrib.path_batch");
  pc.ridge = recipe.train.ridge;
  pc.seed = derive_seed(cfg.u64("seed"), stage::kPath);
  return pc;
}

}  // namespace

AttributionScores run_method(const Config& cfg, const std::string& method, const Dataset& train,
                             const Dataset& test, const ModelRecipe& recipe, const Trained& model) {
  const std::string m = method.empty() ? cfg.text("attrib.method") : method;
  const SolverOptions opts = solver_from(cfg);
  AttributionScores s;
  if (m == "iif") {
    const auto sched =
        build_path(train, baseline_targets(cfg, train, test, recipe, model), steps_from(cfg));
    const auto path = path_models(sched, train, model.state, recipe.loss, path_from(cfg, recipe));
    s = integrated_influence(path, train, test, recipe.loss, plan_from(cfg, model.state),
                             curvature_from(cfg, model.state), opts);
  } else if (m == "if") {
    s = influence_function(model.state, train, test, recipe.loss, plan_from(cfg, model.state),
                           curvature_from(cfg, model.state), opts);
  } else if (m == "tracin") {
    s = tracin(model.checkpoints, train, test, recipe.loss);
  } else if (m == "trak") {
    s = trak_lite(model.state, train, test, recipe.loss, plan_from(cfg, model.state),
                  parse_trak_output(cfg.text("attrib.trak_output")), opts);
  } else {
    throw ConfigError("unknown method '" + m + "'");
  }
  s.seed = cfg.u64("seed");
  return s;
}

AttributionScores run_self_method(const Config& cfg, const std::string& method,
                                  const Dataset& train, const ModelRecipe& recipe,
                                  const Trained& model) {
  const SolverOptions opts = solver_from(cfg);
  AttributionScores s;
  if (method == "iif") {
    s = self_influence(model.state, train, recipe.loss, cfg.real("attrib.self_eta"),
                       steps_from(cfg), plan_from(cfg, model.state),
                       curvature_from(cfg, model.state), opts);
  } else if (method == "if") {
    s = influence_self(model.state, train, recipe.loss, plan_from(cfg, model.state),
                       curvature_from(cfg, model.state), opts);
  } else if (method == "tracin") {
    s = tracin_self(model.checkpoints, train, recipe.loss);
  } else if (method == "trak") {
    s = trak_self(model.state, train, recipe.loss, plan_from(cfg, model.state),
                  parse_trak_output(cfg.text("attrib.trak_output")), opts);
  } else {
    throw ConfigError("unknown method '" + method + "' in eval.methods");
  }
  s.seed = cfg.u64("seed");
  return s;
}

void cmd_gen_data(const RunContext& ctx) {
  const Config& cfg = ctx.cfg;
  const auto dir = prepare_out(ctx);
  std::vector<std::string> files;
  auto emit = [&](const std::filesystem::path& sub, const Task& t) {
    std::filesystem::create_directories(dir / sub);
    write_dataset_csv(dir / sub / "train.csv", t.train);
    write_dataset_csv(dir / sub / "test.csv", t.test);
    files.push_back((sub / "train.csv").generic_string());
    files.push_back((sub / "test.csv").generic_string());
    if (t.weights.size() > 0) {
      write_text(dir / sub / "weights.csv", vector_csv(t.weights, "weight"));
      files.push_back((sub / "weights.csv").generic_string());
    }
    if (t.mask.count() > 0) {
      write_text(dir / sub / "mask.csv", mask_csv(t.mask));
      files.push_back((sub / "mask.csv").generic_string());
    }
  };
  if (cfg.text("data.preset") == "noise-grid") {
    if (cfg.text("data.kind") != "linear") throw ConfigError("data.preset=noise-grid needs data.kind=linear");
    const std::pair<const char*, const char*> cells[] = {{"0.1", "1"}, {"1", "1"}, {"1", "0.1"}};
    for (const auto& [sn, ss] : cells) {
      Config c = cfg;
      c.set("data.sigma_n", sn);
      c.set("data.sigma_s", ss);
      emit(std::string("sn") + sn + "_ss" + ss, load_task(c));
    }
  } else {
    emit(".", load_task(cfg));
  }
  note(ctx, "wrote " + std::to_string(files.size()) + " files to " + dir.string());
  finish(ctx, "gen-data", files);
}

void cmd_attribute(const RunContext& ctx) {
  const Config& cfg = ctx.cfg;
  const Task task = load_task(cfg);
  const ModelRecipe recipe = recipe_from(cfg, task.train);
  const Dataset test = attribution_test(cfg, task.test);
  const Trained model = train_from(recipe, task.train);
  const AttributionScores s = run_method(cfg, "", task.train, test, recipe, model);
  const auto dir = prepare_out(ctx);
  write_text(dir / "scores.csv", scores_csv(s));
  json run;
  run["method"] = s.method;
  run["orientation"] = to_string(s.orientation);
  run["n_train"] = task.train.size();
  run["n_test"] = test.size();
  run["architecture"] = recipe.arch.describe();
  run["K"] = s.steps;
  run["P"] = s.proj_dim;
  run["damping"] = s.damping;
  run["sum_scores"] = s.scores.sum();
  if (s.endpoint_gap) {
    run["delta"] = *s.endpoint_gap;
    run["path_gap"] = path_gap(s);
  }
  run["cg"] = {{"solves", s.solve.solves},
               {"max_iterations", s.solve.max_iterations},
               {"max_residual", s.solve.max_residual}};
  run["train_loss"] = mean_loss(model.state, task.train, recipe.loss);
  run["test_loss"] = mean_loss(model.state, test, recipe.loss);
  write_text(dir / "run.json", run.dump(2) + "\n");
  if (s.endpoint_gap)
    note(ctx, s.method + ": sum=" + format_double(s.scores.sum()) +
                  " delta=" + format_double(*s.endpoint_gap) + " gap=" + format_double(path_gap(s)));
  finish(ctx, "attribute", {"scores.csv", "run.json"});
}

void cmd_eval_lds(const RunContext& ctx) {
  const Config& cfg = ctx.cfg;
  if (ctx.inputs.empty()) throw ConfigError("eval-lds needs at least one scores CSV");
  std::vector<AttributionScores> inputs;
  for (const auto& p : ctx.inputs) inputs.push_back(read_scores_csv(p));
  const Task task = load_task(cfg);
  const ModelRecipe recipe = recipe_from(cfg, task.train);
  const Dataset test = attribution_test(cfg, task.test);
  for (const auto& s : inputs)
    if (s.scores.size() != task.train.size())
      throw ConfigError("scores for '" + s.method + "' do not match data.n_train");
  const int count = cfg.int32("eval.subsets");
  const SubsetPlan plan = make_subset_plan(task.train.size(), count, cfg.real("eval.fraction"),
                                           derive_seed(cfg.u64("seed"), stage::kSubsets));
  const SubsetLosses losses = subset_losses(task.train, test, recipe, plan, cfg.int32("eval.threads"));
  for (const auto& w : losses.warnings) warn(ctx, w);
  const auto dir = prepare_out(ctx);
  std::vector<std::string> files;
  std::vector<ComparisonRow> rows;
  std::map<std::string, int> used;
  for (const auto& s : inputs) {
    std::string name = s.method;
    if (int n = used[s.method]++; n > 0) name += "_" + std::to_string(n);
    const LdsReport r = lds_from_losses(s.loss_contribution(), losses, plan, name);
    if (wants(cfg, "json")) {
      write_text(dir / ("lds_" + name + ".json"), lds_report_json(r));
      files.push_back("lds_" + name + ".json");
    }
    if (wants(cfg, "csv")) {
      write_text(dir / ("lds_" + name + ".csv"), lds_report_csv(r));
      files.push_back("lds_" + name + ".csv");
    }
    rows.push_back({name, r.rho, plan.size(), plan.fraction, r.dropped});
    note(ctx, name + ": LDS=" + format_double(r.rho));
  }
  write_text(dir / "lds_comparison.csv", comparison_csv(rows, "lds"));
  files.push_back("lds_comparison.csv");
  finish(ctx, "eval-lds", files);
}

void cmd_eval_mislabel(const RunContext& ctx) {
  const Config& cfg = ctx.cfg;
  const Task task = load_task(cfg);
  if (task.train.kind != TaskKind::Classification)
    throw ConfigError("eval-mislabel needs a classification task");
  const ModelRecipe recipe = recipe_from(cfg, task.train);
  const Trained model = train_from(recipe, task.train);
  const auto dir = prepare_out(ctx);
  std::vector<std::string> files{"mask.csv"};
  std::vector<ComparisonRow> rows;
  write_text(dir / "mask.csv", mask_csv(task.mask));
  for (const auto& m : cfg.texts("eval.methods")) {
    const AttributionScores s = run_self_method(cfg, m, task.train, recipe, model);
    const Vector suspicion = -s.loss_contribution();
    AucReport r = mislabel_auc(suspicion, task.mask);
    r.method = s.method;
    write_text(dir / ("suspicion_" + m + ".csv"), vector_csv(suspicion, "suspicion"));
    files.push_back("suspicion_" + m + ".csv");
    if (wants(cfg, "json")) {
      write_text(dir / ("auc_" + m + ".json"), auc_report_json(r));
      files.push_back("auc_" + m + ".json");
    }
    rows.push_back({m, r.auc, task.train.size(), task.mask.fraction, 0});
    note(ctx, m + ": AUC=" + format_double(r.auc));
  }
  write_text(dir / "auc_comparison.csv", comparison_csv(rows, "auc"));
  files.push_back("auc_comparison.csv");
  finish(ctx, "eval-mislabel", files);
}

namespace {

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

Matrix kernel_features(const Vector& x, const Vector& centres, double bandwidth) {
  Matrix f(x.size(), centres.size());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    for (Eigen::Index c = 0; c < centres.size(); ++c) {
      const double d = (x(i) - centres(c)) / bandwidth;
      f(i, c) = std::exp(-0.5 * d * d);
    }
  return f;
}

}  // namespace

SincDemo run_sinc_demo(const Config& cfg) {
  const int n = cfg.int32("demo.n_train");
  const int centres = cfg.int32("demo.centres");
  const int grid = cfg.int32("demo.grid");
  const double bw = cfg.real("demo.bandwidth");
  if (n < 3 || centres < 1 || grid < 2 || !(bw > 0)) throw ConfigError("demo.* values out of range");
  constexpr double lo = -3.0, hi = 3.0;
  Rng rng(derive_seed(cfg.u64("seed"), stage::kData));
  std::vector<double> xs(static_cast<std::size_t>(n));
  for (auto& v : xs) v = lo + (hi - lo) * rng.uniform();
  std::sort(xs.begin(), xs.end());
  const Vector x = Eigen::Map<const Vector>(xs.data(), n);
  const Vector c = Vector::LinSpaced(centres, lo, hi);
  const Vector noise = sample_noise(NoiseKind::Normal, cfg.real("demo.noise"), n, rng);

  SincDemo d;
  d.train.kind = TaskKind::Regression;
  d.train.features = kernel_features(x, c, bw);
  d.train.targets.resize(n, 1);
  for (int i = 0; i < n; ++i) d.train.targets(i, 0) = sinc(x(i)) + noise(i);
  d.grid_x = Vector::LinSpaced(grid, lo, hi);
  d.test.kind = TaskKind::Regression;
  d.test.features = kernel_features(d.grid_x, c, bw);
  d.test.targets.resize(grid, 1);
  for (int i = 0; i < grid; ++i) d.test.targets(i, 0) = sinc(d.grid_x(i));

  d.sample = cfg.int32("demo.sample");
  if (d.sample < 0) d.sample = n / 2;
  if (d.sample >= n) throw ConfigError("demo.sample out of range");
  const ModelRecipe recipe = recipe_from(cfg, d.train);
  if (recipe.train.optimizer != Optimizer::ClosedForm)
    throw ConfigError("demo-sinc uses the closed-form linear model");

  // Put A on the curve fitted without it, so it carries no residual.
  std::vector<int> rest;
  for (int i = 0; i < n; ++i)
    if (i != d.sample) rest.push_back(i);
  const ModelState without = train_model(recipe, subset(d.train, rest));
  const Vector xa = d.train.features.row(d.sample).transpose();
  d.train.targets(d.sample, 0) = forward_one(without, xa)(0);
  d.trained = train_model(recipe, d.train);
  d.train.targets(d.sample, 0) = forward_one(d.trained, xa)(0);

  Trained model{d.trained, {{d.trained, recipe.train.learning_rate}}};
  d.if_scores = run_method(cfg, "if", d.train, d.test, recipe, model).scores;
  d.iif_scores = run_method(cfg, "iif", d.train, d.test, recipe, model).scores;
  d.grid_fit = forward(d.trained, d.test.features).col(0);
  return d;
}

void cmd_demo_sinc(const RunContext& ctx) {
  const SincDemo d = run_sinc_demo(ctx.cfg);
  const auto dir = prepare_out(ctx);
  std::ostringstream curve;
  curve << "x,sinc,fit\n";
  for (Eigen::Index i = 0; i < d.grid_x.size(); ++i)
    curve << format_double(d.grid_x(i)) << ',' << format_double(d.test.targets(i, 0)) << ','
          << format_double(d.grid_fit(i)) << '\n';
  write_text(dir / "curve.csv", curve.str());
  std::ostringstream sc;
  sc << "index,residual,if,iif\n";
  const Vector fit = forward(d.trained, d.train.features).col(0);
  for (int i = 0; i < d.train.size(); ++i)
    sc << i << ',' << format_double(fit(i) - d.train.targets(i, 0)) << ','
       << format_double(d.if_scores(i)) << ',' << format_double(d.iif_scores(i)) << '\n';
  write_text(dir / "scores.csv", sc.str());
  json r;
  r["sample"] = d.sample;
  r["if_score"] = d.if_scores(d.sample);
  r["iif_score"] = d.iif_scores(d.sample);
  r["floor"] = 1e-10;
  write_text(dir / "report.json", r.dump(2) + "\n");
  note(ctx, "sample " + std::to_string(d.sample) + ": IF=" + format_double(d.if_scores(d.sample)) +
                " IIF=" + format_double(d.iif_scores(d.sample)));
  finish(ctx, "demo-sinc", {"curve.csv", "scores.csv", "report.json"});
}

std::string pgm_montage(const Matrix& images, const std::vector<int>& rows, int h, int w) {
  if (h < 1 || w < 1 || images.cols() != static_cast<Eigen::Index>(h) * w)
    throw InvalidArgument("montage: image shape does not match the feature width");
  if (rows.empty()) throw InvalidArgument("montage: no images");
  const int tiles = static_cast<int>(rows.size());
  std::string out = "P5\n" + std::to_string(tiles * w) + " " + std::to_string(h) + "\n255\n";
  for (int y = 0; y < h; ++y)
    for (int t = 0; t < tiles; ++t)
      for (int x = 0; x < w; ++x) {
        const double v = images(rows[static_cast<std::size_t>(t)], y * w + x);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
      }
  return out;
}

void cmd_report_proponents(const RunContext& ctx) {
  const Task task = load_task(ctx.cfg);
  const ModelRecipe recipe = recipe_from(ctx.cfg, task.train);
  const Dataset test = attribution_test(ctx.cfg, task.test);
  const int k = ctx.cfg.int32("attrib.top_k");
  if (k < 1 || k > task.train.size()) throw ConfigError("attrib.top_k must be in [1, N]");
  const Trained model = train_from(recipe, task.train);
  Config raise = ctx.cfg, lower = ctx.cfg;
  raise.set("attrib.direction", "raise");
  lower.set("attrib.direction", "lower");
  const Vector up = run_method(raise, "iif", task.train, test, recipe, model).scores;
  const Vector down = run_method(lower, "iif", task.train, test, recipe, model).scores;
  const ProponentReport rep = rank_proponents(up, down, k);
  const auto dir = prepare_out(ctx);
  std::ostringstream os;
  os << "rank,proponent,proponent_score,opponent,opponent_score\n";
  for (int r = 0; r < k; ++r) {
    const int p = rep.proponents[static_cast<std::size_t>(r)], o = rep.opponents[static_cast<std::size_t>(r)];
    os << r + 1 << ',' << p << ',' << format_double(up(p)) << ',' << o << ',' << format_double(down(o)) << '\n';
  }
  write_text(dir / "proponents.csv", os.str());
  std::vector<std::string> files{"proponents.csv"};
  if (task.image_h > 0) {
    write_text(dir / "proponents.pgm", pgm_montage(task.train.features, rep.proponents, task.image_h, task.image_w));
    write_text(dir / "opponents.pgm", pgm_montage(task.train.features, rep.opponents, task.image_h, task.image_w));
    files.push_back("proponents.pgm");
    files.push_back("opponents.pgm");
  }
  finish(ctx, "report-proponents", files);
}

}  // namespace iif

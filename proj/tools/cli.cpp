#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <thread>

#include "hvsinglet/model_spec.hpp"
#include "hvsinglet/validator.hpp"

namespace hv::cli {
namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Stream id reserved for drawing random:N setting pairs.
constexpr std::uint64_t kSettingsStream = 0xFFFF'FFFF'FFFF'FFFFull;

struct CommonFlags {
  std::string model;
  std::optional<std::uint64_t> seed;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::string out;
};

void add_common(CLI::App& cmd, CommonFlags& flags, bool with_model = true) {
  if (with_model) {
    cmd.add_option("--model,model", flags.model, "Model spec file (also accepted positionally)");
  }
  cmd.add_option("--seed", flags.seed, "Random seed (fallback: HV_SEED, then the spec seed)");
  cmd.add_option("--threads", flags.threads, "Worker threads (default: hardware concurrency)")
      ->check(CLI::PositiveNumber);
  cmd.add_option("--out", flags.out, "Output file (default: standard output)");
}

std::string model_path(const CommonFlags& flags) {
  if (flags.model.empty()) throw UsageError("a model spec file is required");
  return flags.model;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
  if (flag) return *flag;
  if (const char* env = std::getenv("HV_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const unsigned long long value = std::stoull(env, &used);
      if (used == std::string(env).size()) return value;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("HV_SEED is not an unsigned integer: '") + env + "'");
  }
  return fallback;
}

// Positive integer, also accepting scientific notation such as "1e6".
std::size_t parse_count(const std::string& text, const std::string& what) {
  double value = 0.0;
  try {
    std::size_t used = 0;
    value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
  } catch (const std::exception&) {
    throw UsageError(what + " must be a positive integer, got '" + text + "'");
  }
  if (!(value >= 1.0) || value != std::floor(value) || value > 1e15) {
    throw UsageError(what + " must be a positive integer, got '" + text + "'");
  }
  return static_cast<std::size_t>(value);
}

void emit(const std::string& content, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << content;
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw UsageError("cannot write '" + path + "'");
  file << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void apply_grid(ModelSpec& spec, std::optional<std::size_t> grid_n) {
  if (!grid_n) return;
  spec.grid_theta = *grid_n;
  spec.grid_phi = 2 * *grid_n;
}

std::vector<SettingPair> settings_from_source(const std::string& source, std::uint64_t seed) {
  if (source.rfind("random:", 0) == 0) {
    const std::size_t n = parse_count(source.substr(7), "random:N");
    RandomStream rng(seed, kSettingsStream);
    std::vector<SettingPair> pairs;
    for (std::size_t i = 0; i < n; ++i) {
      const UnitVector a = sample_uniform_sphere(rng);
      pairs.push_back({a, sample_uniform_sphere(rng)});
    }
    return pairs;
  }
  return parse_settings_text(read_file(source));
}

// ---------------------------------------------------------------------------

struct ValidateFlags {
  CommonFlags common;
  std::optional<std::size_t> grid_n;
  std::size_t lambda_n = 1000;
  std::size_t settings_n = 1000;
  std::string mc_samples = "1e6";
};

int cmd_validate(const ValidateFlags& f, std::ostream& out) {
  ModelSpec spec = load_model_spec(model_path(f.common));
  apply_grid(spec, f.grid_n);
  const BuiltModel built = build_model(spec);
  ValidatorConfig config;
  config.n_lambda = f.lambda_n;
  config.n_settings = f.settings_n;
  config.mc_samples = parse_count(f.mc_samples, "--mc-samples");
  config.threads = f.common.threads;
  const std::uint64_t seed = resolve_seed(f.common.seed, spec.seed);
  const std::vector<ConstraintReport> reports = run_full_suite(built.model, config, seed);
  emit(suite_to_json(built.model.name(), seed, reports).dump(2) + "\n", f.common.out, out);
  switch (overall_status(reports)) {
    case Status::Fail: return kExitFail;
    case Status::Inconclusive: return kExitInconclusive;
    default: return kExitPass;
  }
}

struct SimulateFlags {
  CommonFlags common;
  std::string settings;
  std::string shots = "1e6";
  std::string mode = "analytic";
  std::optional<std::size_t> grid_n;
};

ExperimentConfig experiment_config(const CommonFlags& common, const std::string& shots,
                                   const std::string& mode, std::uint64_t seed) {
  ExperimentConfig config;
  config.shots = parse_count(shots, "shots");
  config.mode = *parse_estimator_mode(mode);
  config.seed = seed;
  config.threads = common.threads;
  return config;
}

int cmd_simulate(const SimulateFlags& f, std::ostream& out) {
  ModelSpec spec = load_model_spec(model_path(f.common));
  apply_grid(spec, f.grid_n);
  const std::string& source = f.settings;
  if (source.empty()) throw UsageError("a settings source (PATH or random:N) is required");
  const std::uint64_t seed = resolve_seed(f.common.seed, spec.seed);
  ExperimentConfig config =
      experiment_config(f.common, f.shots, f.mode, seed);
  config.settings = settings_from_source(source, seed);
  const BuiltModel built = build_model(spec);
  if (config.mode == EstimatorMode::Quadrature && !built.model.lambda_space().has_quadrature()) {
    throw UsageError("model '" + built.model.name() + "' has no quadrature; use analytic or sampling");
  }
  std::ostringstream csv;
  write_csv_header(csv);
  write_csv_rows(csv, run_experiment(built.model, config), config.mode, seed);
  emit(csv.str(), f.common.out, out);
  return kExitPass;
}

struct ChshFlags {
  CommonFlags common;
  std::string settings;
  std::string shots = "1e6";
  std::string mode = "analytic";
  std::optional<std::size_t> grid_n;
};

int cmd_chsh(const ChshFlags& f, std::ostream& out) {
  ModelSpec spec = load_model_spec(model_path(f.common));
  apply_grid(spec, f.grid_n);
  const std::uint64_t seed = resolve_seed(f.common.seed, spec.seed);
  const ExperimentConfig config = experiment_config(f.common, f.shots, f.mode, seed);
  ChshSettings settings = optimal_chsh_settings();
  if (!f.settings.empty()) {
    const std::vector<SettingPair> pairs = parse_settings_text(read_file(f.settings));
    if (pairs.size() != 2) throw UsageError("chsh settings file needs exactly two lines: a0 b0 and a1 b1");
    settings = {pairs[0].a, pairs[1].a, pairs[0].b, pairs[1].b};
  }
  const BuiltModel built = build_model(spec);
  if (config.mode == EstimatorMode::Quadrature && !built.model.lambda_space().has_quadrature()) {
    throw UsageError("model '" + built.model.name() + "' has no quadrature; use analytic or sampling");
  }
  const ChshResult result = chsh(built.model, settings, config);
  std::ostringstream csv;
  write_csv_header(csv);
  write_csv_rows(csv, {result.correlators.begin(), result.correlators.end()}, config.mode, seed);
  write_chsh_row(csv, result, config.mode, seed);
  emit(csv.str(), f.common.out, out);
  return kExitPass;
}

struct ScanFlags {
  CommonFlags common;
  std::size_t points = 201;
  std::size_t lambda_n = 10'000;
  std::optional<std::size_t> grid_n;
};

int cmd_scan(const ScanFlags& f, std::ostream& out) {
  if (f.points < 2) throw UsageError("--points must be at least 2");
  ModelSpec spec = load_model_spec(model_path(f.common));
  apply_grid(spec, f.grid_n);
  const BuiltModel built = build_model(spec);
  const HiddenVariableModel& model = built.model;
  const std::uint64_t seed = resolve_seed(f.common.seed, spec.seed);

  std::vector<WeightedPoint> nodes;
  if (model.lambda_space().has_quadrature()) {
    nodes = model.lambda_space().quadrature();
  } else {
    RandomStream rng(seed, 0);
    const double w = 1.0 / static_cast<double>(f.lambda_n);
    for (std::size_t i = 0; i < f.lambda_n; ++i) nodes.push_back({model.lambda_space().sample(rng), w});
  }

  const UnitVector a = UnitVector::e_z();
  std::ostringstream csv;
  csv << "a_dot_b,mean_C,min_entry,max_entry\n";
  for (std::size_t i = 0; i < f.points; ++i) {
    const double t = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(f.points - 1);
    const UnitVector b = at_cosine(a, UnitVector::e_x(), t);
    double mean = 0.0;
    double weight = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const WeightedPoint& node : nodes) {
      const auto table = model.table(node.point, a, b);
      if (!table) continue;
      mean += node.weight * (table->correlator() + dot(a, b));
      weight += node.weight;
      lo = std::min(lo, table->min_entry());
      hi = std::max(hi, table->max_entry());
    }
    csv << format_double(dot(a, b)) << ',' << format_double(mean / weight) << ','
        << format_double(lo) << ',' << format_double(hi) << '\n';
  }
  emit(csv.str(), f.common.out, out);
  return kExitPass;
}

struct BuildRecipeFlags {
  CommonFlags common;
  std::string f_name;
  std::string s_text;
  std::string measure = "uniform";
  double gamma = 1.0;
  std::optional<std::size_t> grid_n;
  std::string search_samples = "1e6";
};

int cmd_build_recipe(const BuildRecipeFlags& f, std::ostream& out) {
  double s = 0.0;
  try {
    std::size_t used = 0;
    s = std::stod(f.s_text, &used);
    if (used != f.s_text.size()) throw std::invalid_argument(f.s_text);
  } catch (const std::exception&) {
    throw UsageError("s must be a number, got '" + f.s_text + "'");
  }
  if (!(s >= 1.0) || !std::isfinite(s)) throw UsageError("s must satisfy s >= 1");
  const auto names = recipe_function_names();
  if (std::find(names.begin(), names.end(), f.f_name) == names.end()) {
    std::string known;
    for (const std::string& n : names) known += (known.empty() ? "" : ", ") + n;
    throw UsageError("unknown recipe function '" + f.f_name + "' (known: " + known + ")");
  }
  if (!(f.gamma > 0.0)) throw UsageError("--gamma must be positive");

  ModelSpec spec;
  spec.family = "recipe";
  spec.measure = f.measure == "uniform" ? ScalarMeasure::uniform(f.gamma) : ScalarMeasure::two_point(f.gamma);
  spec.s = s;
  spec.seed = resolve_seed(f.common.seed, 1);
  spec.recipe_f = f.f_name;
  apply_grid(spec, f.grid_n);

  RecipeOptions options;
  options.search_samples = parse_count(f.search_samples, "--search-samples");
  const BuiltModel built = build_model(spec, options);
  spec.recipe_scale = built.recipe->scale;
  spec.recipe_bound = built.recipe->bound;
  spec.recipe_sup_g = built.recipe->sup_g;
  spec.recipe_inf_g = built.recipe->inf_g;
  emit(to_json(spec).dump(2) + "\n", f.common.out, out);
  return kExitPass;
}

}  // namespace

std::vector<SettingPair> parse_settings_text(std::string_view text) {
  std::vector<SettingPair> pairs;
  std::istringstream lines{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(lines, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    std::vector<double> v;
    std::string token;
    while (fields >> token) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(token, &used));
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        throw ModelSpecError("line " + std::to_string(number), "not a number: '" + token + "'");
      }
    }
    if (v.empty()) continue;
    if (v.size() != 6) {
      throw ModelSpecError("line " + std::to_string(number), "expected six numbers: ax ay az bx by bz");
    }
    try {
      pairs.push_back({UnitVector(v[0], v[1], v[2]), UnitVector(v[3], v[4], v[5])});
    } catch (const std::invalid_argument& e) {
      throw ModelSpecError("line " + std::to_string(number), e.what());
    }
  }
  if (pairs.empty()) throw ModelSpecError("line 1", "no setting pairs found");
  return pairs;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulate and validate hidden-variable models of the spin singlet", "hvsim"};
  app.require_subcommand(1);
  const std::vector<std::string> modes = {"analytic", "sampling", "quadrature"};

  ValidateFlags validate;
  CLI::App* v = app.add_subcommand("validate", "Run every constraint check; write a JSON report");
  add_common(*v, validate.common);
  v->add_option("--grid-n", validate.grid_n, "Polar nodes of the sphere grid (azimuthal = 2x)")
      ->check(CLI::PositiveNumber);
  v->add_option("--lambda-n", validate.lambda_n, "Lambda draws per scan")->check(CLI::PositiveNumber);
  v->add_option("--settings-n", validate.settings_n, "Setting pairs per scan")->check(CLI::PositiveNumber);
  v->add_option("--mc-samples", validate.mc_samples, "Monte Carlo samples per integral (e.g. 1e6)");

  SimulateFlags simulate;
  CLI::App* sim = app.add_subcommand("simulate", "Estimate correlators; write CSV");
  add_common(*sim, simulate.common);
  sim->add_option("--settings,settings", simulate.settings, "Settings file or random:N (also positional)");
  sim->add_option("--shots,shots", simulate.shots, "Shots per pair, e.g. 1e6 (also positional; default 1e6)");
  sim->add_option("--mode", simulate.mode, "Estimator: analytic, sampling or quadrature")
      ->check(CLI::IsMember(modes));
  sim->add_option("--grid-n", simulate.grid_n, "Polar nodes of the sphere grid (azimuthal = 2x)")
      ->check(CLI::PositiveNumber);

  ChshFlags chsh_flags;
  CLI::App* ch = app.add_subcommand("chsh", "CHSH value at the optimal (or given) settings; write CSV");
  add_common(*ch, chsh_flags.common);
  ch->add_option("--settings", chsh_flags.settings, "File with two pairs: a0 b0 and a1 b1");
  ch->add_option("--shots", chsh_flags.shots, "Shots per correlator (default 1e6)");
  ch->add_option("--mode", chsh_flags.mode, "Estimator: analytic, sampling or quadrature")
      ->check(CLI::IsMember(modes));
  ch->add_option("--grid-n", chsh_flags.grid_n, "Polar nodes of the sphere grid (azimuthal = 2x)")
      ->check(CLI::PositiveNumber);

  ScanFlags scan;
  CLI::App* sc = app.add_subcommand("scan", "Sweep a.b over [-1, 1]; write CSV of mean C and table extremes");
  add_common(*sc, scan.common);
  sc->add_option("--points", scan.points, "Number of a.b values (>= 2)");
  sc->add_option("--lambda-n", scan.lambda_n, "Lambda draws when the model has no quadrature")
      ->check(CLI::PositiveNumber);
  sc->add_option("--grid-n", scan.grid_n, "Polar nodes of the sphere grid (azimuthal = 2x)")
      ->check(CLI::PositiveNumber);

  BuildRecipeFlags recipe;
  CLI::App* br = app.add_subcommand("build-recipe", "Build a recipe model; write its model spec");
  add_common(*br, recipe.common, false);
  br->add_option("f", recipe.f_name, "Registry function name")->required();
  br->add_option("s", recipe.s_text, "Frobenius exponent s >= 1")->required();
  br->add_option("--measure", recipe.measure, "Scalar measure: uniform or two_point")
      ->check(CLI::IsMember({"uniform", "two_point"}));
  br->add_option("--gamma", recipe.gamma, "Scale of the scalar measure (default 1)");
  br->add_option("--grid-n", recipe.grid_n, "Polar nodes of the sphere grid (azimuthal = 2x)")
      ->check(CLI::PositiveNumber);
  br->add_option("--search-samples", recipe.search_samples, "Random points in the sup/inf search");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitPass : kExitUsage;
  }

  try {
    if (v->parsed()) return cmd_validate(validate, out);
    if (sim->parsed()) return cmd_simulate(simulate, out);
    if (ch->parsed()) return cmd_chsh(chsh_flags, out);
    if (sc->parsed()) return cmd_scan(scan, out);
    if (br->parsed()) return cmd_build_recipe(recipe, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ModelSpecError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace hv::cli

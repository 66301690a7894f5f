// despeckle3d: batch front end for phantom synthesis, OBNLM filtering,
// metric evaluation and benchmarking.
//
// Exit codes: 0 success, 2 usage/validation, 3 data contract, 4 I/O.

#include <sys/utsname.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "despeckle/metrics.hpp"
#include "despeckle/obnlm.hpp"
#include "despeckle/speckle.hpp"
#include "despeckle/volume_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace despeckle;

namespace {

constexpr int kSchemaVersion = 1;

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kIo = 4 };

// Usage problems detected by the CLI itself (missing paths and the like).
struct UsageError : Error {
  using Error::Error;
};

struct FilterOptions {
  ObnlmParams params;
  std::string mode = "slice2d";
  bool rescale = false;

  ObnlmParams resolved() const {
    ObnlmParams p = params;
    p.mode = parse_filter_mode(mode);
    p.validate();
    return p;
  }
};

void add_filter_options(CLI::App& cmd, FilterOptions& f) {
  cmd.add_option("--block-radius", f.params.block_radius, "Block half-width in voxels")
      ->capture_default_str();
  cmd.add_option("--search-radius", f.params.search_radius,
                 "Search window half-width in block centers")
      ->capture_default_str();
  cmd.add_option("--block-step", f.params.block_step, "Stride between block centers")
      ->capture_default_str();
  cmd.add_option("--h", f.params.h, "Smoothing strength")->capture_default_str();
  cmd.add_option("--gamma", f.params.gamma, "Speckle exponent")->capture_default_str();
  cmd.add_option("--eps", f.params.eps, "Pearson denominator guard")->capture_default_str();
  cmd.add_option("--mode", f.mode, "slice2d or full3d")->capture_default_str();
  cmd.add_flag("--rescale", f.rescale,
               "Map intensities to [0,1] before filtering and back afterwards");
}

json params_json(const ObnlmParams& p) {
  return {{"block_radius", p.block_radius}, {"search_radius", p.search_radius},
          {"block_step", p.block_step},     {"h", p.h},
          {"gamma", p.gamma},               {"eps", p.eps},
          {"mode", std::string(to_string(p.mode))}};
}

// Files a command operates on: a single .mhd, or every .mhd in a directory.
std::vector<fs::path> collect_volumes(const fs::path& input) {
  if (!fs::exists(input)) {
    throw UsageError("input not found: " + input.string());
  }
  if (!fs::is_directory(input)) {
    return {input};
  }
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(input)) {
    if (entry.is_regular_file() && entry.path().extension() == ".mhd") {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) {
    throw UsageError("no .mhd volumes in " + input.string());
  }
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

Volume3D run_filter(const Volume3D& v, const ObnlmParams& p, FilterImpl impl,
                    unsigned threads, bool rescale) {
  if (rescale) {
    return filter_rescaled(v, p, impl, threads);
  }
  return impl == FilterImpl::reference ? filter_obnlm_reference(v, p)
                                       : filter_obnlm(v, p, threads);
}

void write_json_file(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out || !(out << j.dump(2) << '\n')) {
    throw IoError("cannot write " + path.string());
  }
}

// ---------------------------------------------------------------- synth

struct SynthOptions {
  std::string kind = "constant";
  std::vector<std::size_t> dims{32, 32, 8};
  std::vector<double> spacing{1.0, 1.0, 1.0};
  double level = 0.5;
  double low = 0.25;
  double high = 0.75;
  std::string axis = "x";
  std::optional<std::size_t> split;
  double background = 0.25;
  double inclusion = 0.75;
  std::vector<double> center;
  std::optional<double> radius;
  double start = 0.0;
  double end = 1.0;
  SpeckleParams speckle;
  bool clean_only = false;
  std::string output;
};

PhantomSpec phantom_from(const SynthOptions& o) {
  if (o.dims.size() != 3 || std::any_of(o.dims.begin(), o.dims.end(),
                                        [](std::size_t n) { return n == 0; })) {
    throw InvalidArgument("invalid dimensions");
  }
  const Dims dims{o.dims[0], o.dims[1], o.dims[2]};
  PhantomSpec spec{ConstantPhantom{o.level}, dims};
  if (o.kind == "constant") {
  } else if (o.kind == "two-region") {
    Axis axis = Axis::x;
    if (o.axis == "y") {
      axis = Axis::y;
    } else if (o.axis == "z") {
      axis = Axis::z;
    } else if (o.axis != "x") {
      throw InvalidArgument("axis must be x, y or z");
    }
    const std::size_t split = o.split.value_or(dims[static_cast<std::size_t>(axis)] / 2);
    spec.shape = TwoRegionPhantom{o.low, o.high, axis, split};
  } else if (o.kind == "spherical-inclusion") {
    std::array<double, 3> center{(static_cast<double>(dims.nx) - 1) / 2,
                                 (static_cast<double>(dims.ny) - 1) / 2,
                                 (static_cast<double>(dims.nz) - 1) / 2};
    if (!o.center.empty()) {
      if (o.center.size() != 3) throw InvalidArgument("center needs three values");
      center = {o.center[0], o.center[1], o.center[2]};
    }
    const double radius = o.radius.value_or(
        static_cast<double>(std::min({dims.nx, dims.ny, dims.nz})) / 4);
    spec.shape = SphericalInclusionPhantom{o.background, o.inclusion, center, radius};
  } else if (o.kind == "axial-gradient") {
    spec.shape = AxialGradientPhantom{o.start, o.end};
  } else {
    throw InvalidArgument("unknown phantom kind '" + o.kind + "'");
  }
  spec.validate();
  return spec;
}

json phantom_json(const PhantomSpec& spec, const std::string& kind) {
  json j = {{"kind", kind}, {"dims", {spec.dims.nx, spec.dims.ny, spec.dims.nz}}};
  struct Visitor {
    json& j;
    void operator()(const ConstantPhantom& p) const { j["level"] = p.level; }
    void operator()(const TwoRegionPhantom& p) const {
      j["low"] = p.low;
      j["high"] = p.high;
      j["axis"] = std::string(1, "xyz"[static_cast<int>(p.axis)]);
      j["split"] = p.split;
    }
    void operator()(const SphericalInclusionPhantom& p) const {
      j["background"] = p.background;
      j["inclusion"] = p.inclusion;
      j["center"] = p.center;
      j["radius"] = p.radius;
    }
    void operator()(const AxialGradientPhantom& p) const {
      j["start"] = p.start;
      j["end"] = p.end;
    }
  };
  std::visit(Visitor{j}, spec.shape);
  return j;
}

int cmd_synth(const SynthOptions& o) {
  const PhantomSpec spec = phantom_from(o);
  o.speckle.validate();
  if (o.spacing.size() != 3) throw InvalidArgument("spacing needs three values");
  const Spacing spacing{o.spacing[0], o.spacing[1], o.spacing[2]};

  Volume3D clean = generate_phantom(spec);
  clean = Volume3D(clean.dims(), std::vector<double>(clean.data().begin(), clean.data().end()),
                   spacing);
  std::optional<Volume3D> speckled;
  if (!o.clean_only) {
    speckled = apply_speckle(clean, o.speckle);
  }

  const fs::path dir = o.output;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  save_volume(clean, dir / "clean.mhd");
  json sidecar = {{"schema_version", kSchemaVersion},
                  {"phantom", phantom_json(spec, o.kind)},
                  {"spacing", o.spacing},
                  {"files", {{"clean", "clean.mhd"}}}};
  if (speckled) {
    save_volume(*speckled, dir / "speckled.mhd");
    sidecar["files"]["speckled"] = "speckled.mhd";
    sidecar["speckle"] = {{"gamma", o.speckle.gamma},
                          {"sigma", o.speckle.sigma},
                          {"seed", o.speckle.seed},
                          {"rng", "splitmix64-boxmuller"}};
  }
  write_json_file(sidecar, dir / "params.json");
  return kOk;
}

// ----------------------------------------------------------- despeckle

struct DespeckleOptions {
  std::string input;
  std::string output;
  FilterOptions filter;
  unsigned threads = 1;
  std::string impl = "optimized";
};

int cmd_despeckle(const DespeckleOptions& o) {
  const ObnlmParams params = o.filter.resolved();
  const FilterImpl impl = parse_filter_impl(o.impl);
  if (o.threads < 1) throw InvalidArgument("thread count must be at least 1");
  const std::vector<fs::path> inputs = collect_volumes(o.input);
  const bool batch = fs::is_directory(o.input);

  // Everything is read and checked before the first output is written.
  std::vector<Volume3D> volumes;
  for (const fs::path& in : inputs) {
    volumes.push_back(load_volume(in));
    validate_filter_input(volumes.back(), params, o.filter.rescale);
  }

  for (std::size_t n = 0; n < inputs.size(); ++n) {
    const fs::path& in = inputs[n];
    const auto start = std::chrono::steady_clock::now();
    const Volume3D filtered =
        run_filter(volumes[n], params, impl, o.threads, o.filter.rescale);
    const double wall = seconds_since(start);

    if (batch && n == 0) {
      std::error_code ec;
      fs::create_directories(o.output, ec);
      if (ec) throw IoError("cannot create " + o.output + ": " + ec.message());
    }
    const fs::path out = batch ? fs::path(o.output) / in.filename() : fs::path(o.output);
    save_volume(filtered, out);
    const json line = {{"schema_version", kSchemaVersion},
                       {"input", in.string()},
                       {"output", out.string()},
                       {"impl", std::string(to_string(impl))},
                       {"threads", o.threads},
                       {"rescale", o.filter.rescale},
                       {"wall_seconds", wall},
                       {"params", params_json(params)}};
    std::cout << line.dump() << std::endl;
  }
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
  std::string metric = "smpi";
  std::string first;
  std::string second;
  bool raw_scale = false;
};

json eval_pair(const EvalOptions& o, const fs::path& a, const fs::path& b, double& value) {
  const Volume3D va = load_volume(a);
  const Volume3D vb = load_volume(b);
  json j = {{"schema_version", kSchemaVersion}, {"metric", o.metric},
            {"a", a.string()}, {"b", b.string()}};
  if (o.metric == "smpi") {
    const SmpiReport r = o.raw_scale ? smpi(va, vb) : smpi_unit_scaled(va, vb);
    j["intensity_scale"] = o.raw_scale ? "raw" : "unit_by_original";
    j["mu_o"] = r.mu_o;
    j["mu_r"] = r.mu_r;
    j["var_o"] = r.var_o;
    j["var_r"] = r.var_r;
    j["q"] = r.q;
    j["smpi"] = r.smpi;
    value = r.smpi;
  } else {
    value = mse(va, vb);
    j["mse"] = value;
  }
  return j;
}

int cmd_eval(const EvalOptions& o) {
  if (o.metric != "smpi" && o.metric != "mse") {
    throw InvalidArgument("metric must be smpi or mse");
  }
  const bool dir_a = fs::is_directory(o.first);
  const bool dir_b = fs::is_directory(o.second);
  const auto first = collect_volumes(o.first);
  const auto second = collect_volumes(o.second);
  if (dir_a != dir_b) {
    throw UsageError("eval needs two files or two directories");
  }

  if (!dir_a) {
    double value = 0.0;
    std::cout << eval_pair(o, first.front(), second.front(), value).dump() << std::endl;
    return kOk;
  }

  // Pairs are matched by file name.
  std::vector<double> values;
  for (const fs::path& a : first) {
    const fs::path b = fs::path(o.second) / a.filename();
    if (!fs::exists(b)) {
      throw DataContractError("no counterpart for " + a.filename().string() + " in " +
                              o.second);
    }
    double value = 0.0;
    std::cout << eval_pair(o, a, b, value).dump() << std::endl;
    values.push_back(value);
  }
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double x : values) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : values) var += (x - mean) * (x - mean);
  var /= n;
  const json summary = {{"schema_version", kSchemaVersion},
                        {"metric", o.metric},
                        {"count", values.size()},
                        {"mean", mean},
                        {"std", std::sqrt(var)}};
  std::cout << summary.dump() << std::endl;
  return kOk;
}

// --------------------------------------------------------------- bench

struct BenchOptions {
  std::string input;
  FilterOptions filter;
  std::vector<unsigned> threads{1};
  std::size_t repeat = 3;
  std::string output;
};

json machine_json() {
  json j = {{"hardware_concurrency", std::thread::hardware_concurrency()}};
#ifdef __VERSION__
  j["compiler"] = __VERSION__;
#endif
  utsname u{};
  if (uname(&u) == 0) {
    j["system"] = std::string(u.sysname) + " " + u.release;
    j["arch"] = u.machine;
  }
  return j;
}

int cmd_bench(const BenchOptions& o) {
  const ObnlmParams params = o.filter.resolved();
  if (o.repeat < 1) throw InvalidArgument("repeat must be at least 1");
  if (o.threads.empty() ||
      std::any_of(o.threads.begin(), o.threads.end(), [](unsigned t) { return t < 1; })) {
    throw InvalidArgument("thread counts must be at least 1");
  }

  std::vector<Volume3D> volumes;
  for (const fs::path& p : collect_volumes(o.input)) volumes.push_back(load_volume(p));
  const double count = static_cast<double>(volumes.size());

  auto time_all = [&](FilterImpl impl, unsigned threads) {
    const auto start = std::chrono::steady_clock::now();
    for (const Volume3D& v : volumes) {
      (void)run_filter(v, params, impl, threads, o.filter.rescale);
    }
    return seconds_since(start) / count;
  };

  const double reference = time_all(FilterImpl::reference, 1);
  json optimized = json::array();
  for (unsigned t : o.threads) {
    std::vector<double> runs;
    for (std::size_t r = 0; r < o.repeat; ++r) runs.push_back(time_all(FilterImpl::optimized, t));
    const double med = median(runs);
    optimized.push_back({{"threads", t},
                         {"median_wall_seconds", med},
                         {"runs", runs},
                         {"speedup", reference / med}});
  }

  const Dims& d = volumes.front().dims();
  const json report = {
      {"schema_version", kSchemaVersion},
      {"volumes", volumes.size()},
      {"dims", {d.nx, d.ny, d.nz}},
      {"params", params_json(params)},
      {"rescale", o.filter.rescale},
      {"repeat", o.repeat},
      {"reference", {{"wall_seconds", reference}}},
      {"optimized", optimized},
      {"machine", machine_json()},
      {"context",
       {{"published_cpu_seconds_per_volume", 81.1},
        {"published_dims", {128, 128, 32}},
        {"note", "published figure from different hardware; context only"}}}};
  std::cout << report.dump() << std::endl;
  if (!o.output.empty()) write_json_file(report, o.output);
  return kOk;
}

// -------------------------------------------------------------- config

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// Reads `key = value` lines and returns them as flags for `cmd`, skipping
// any option the user also gave on the command line.
std::vector<std::string> config_arguments(const fs::path& path, CLI::App& cmd,
                                          const std::vector<std::string>& given) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());

  auto mentioned = [&](const CLI::Option* opt) {
    for (const std::string& arg : given) {
      for (const std::string& name : opt->get_lnames()) {
        const std::string flag = "--" + name;
        if (arg == flag || arg.rfind(flag + "=", 0) == 0) return true;
      }
      for (const std::string& name : opt->get_snames()) {
        if (arg == "-" + name) return true;
      }
    }
    return false;
  };

  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("config line without '=': " + line);
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const CLI::Option* opt = cmd.get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config") {
      throw InvalidArgument("unknown config key '" + key + "'");
    }
    if (mentioned(opt)) continue;
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1") out.push_back("--" + key);
      continue;
    }
    out.push_back("--" + key);
    std::istringstream words(value);
    for (std::string w; words >> w;) out.push_back(w);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D ultrasound speckle reduction toolkit"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "Print this help message and exit");
  app.set_help_all_flag("--help-all", "Print help for every subcommand and exit");

  std::string config_path;

  SynthOptions synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a phantom and its speckled copy");
  synth_cmd->add_option("--kind", synth.kind,
                        "constant, two-region, spherical-inclusion or axial-gradient")
      ->capture_default_str();
  synth_cmd->add_option("--dims", synth.dims, "nx ny nz")->expected(3)->capture_default_str();
  synth_cmd->add_option("--spacing", synth.spacing, "sx sy sz in mm")->expected(3);
  synth_cmd->add_option("--level", synth.level, "constant level");
  synth_cmd->add_option("--low", synth.low, "two-region level below the split");
  synth_cmd->add_option("--high", synth.high, "two-region level from the split on");
  synth_cmd->add_option("--axis", synth.axis, "two-region split axis (x, y, z)");
  synth_cmd->add_option("--split", synth.split, "two-region split index");
  synth_cmd->add_option("--background", synth.background, "inclusion background level");
  synth_cmd->add_option("--inclusion", synth.inclusion, "inclusion level");
  synth_cmd->add_option("--center", synth.center, "inclusion center (voxels)")->expected(3);
  synth_cmd->add_option("--radius", synth.radius, "inclusion radius (voxels)");
  synth_cmd->add_option("--start", synth.start, "gradient level at x = 0");
  synth_cmd->add_option("--end", synth.end, "gradient level at x = nx - 1");
  synth_cmd->add_option("--sigma", synth.speckle.sigma, "noise std")->capture_default_str();
  synth_cmd->add_option("--gamma", synth.speckle.gamma, "speckle exponent")->capture_default_str();
  synth_cmd->add_option("--seed", synth.speckle.seed, "RNG seed")->capture_default_str();
  synth_cmd->add_flag("--clean-only", synth.clean_only, "skip the speckled volume");
  synth_cmd->add_option("-o,--output", synth.output, "output directory")->required();
  synth_cmd->add_option("--config", config_path, "key = value defaults file");

  DespeckleOptions despeckle;
  CLI::App* despeckle_cmd =
      app.add_subcommand("despeckle", "Filter a volume or a directory of volumes");
  despeckle_cmd->add_option("input", despeckle.input, "volume (.mhd) or directory")->required();
  despeckle_cmd->add_option("-o,--output", despeckle.output, "output volume or directory")
      ->required();
  add_filter_options(*despeckle_cmd, despeckle.filter);
  despeckle_cmd->add_option("--threads", despeckle.threads, "worker threads")
      ->capture_default_str();
  despeckle_cmd->add_option("--impl", despeckle.impl, "reference or optimized")
      ->capture_default_str();
  despeckle_cmd->add_option("--config", config_path, "key = value defaults file");

  EvalOptions eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score volumes with SMPI or MSE");
  eval_cmd->add_option("--metric", eval.metric, "smpi or mse")->capture_default_str();
  eval_cmd->add_option("first", eval.first, "original / fixed volume or directory")->required();
  eval_cmd->add_option("second", eval.second, "filtered / warped volume or directory")
      ->required();
  eval_cmd->add_flag("--raw-scale", eval.raw_scale,
                     "compute SMPI on stored intensities instead of unit-scaled ones");
  eval_cmd->add_option("--config", config_path, "key = value defaults file");

  BenchOptions bench;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Time reference and optimized filters");
  bench_cmd->add_option("input", bench.input, "volume (.mhd) or directory")->required();
  add_filter_options(*bench_cmd, bench.filter);
  bench_cmd->add_option("--threads", bench.threads, "thread counts to time")
      ->capture_default_str();
  bench_cmd->add_option("--repeat", bench.repeat, "optimized runs per thread count")
      ->capture_default_str();
  bench_cmd->add_option("-o,--output", bench.output, "also write the report here");
  bench_cmd->add_option("--config", config_path, "key = value defaults file");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    // Config values go first so explicit flags win.
    for (std::size_t i = 0; i + 1 < args.size(); ++i) {
      if (args[i] != "--config") continue;
      CLI::App* cmd = nullptr;
      for (CLI::App* sub : {synth_cmd, despeckle_cmd, eval_cmd, bench_cmd}) {
        if (std::find(args.begin(), args.end(), sub->get_name()) != args.end()) cmd = sub;
      }
      if (cmd == nullptr) break;
      auto pos = std::find(args.begin(), args.end(), cmd->get_name());
      const auto extra = config_arguments(args[i + 1], *cmd, args);
      args.insert(pos + 1, extra.begin(), extra.end());
      break;
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(synth);
    if (despeckle_cmd->parsed()) return cmd_despeckle(despeckle);
    if (eval_cmd->parsed()) return cmd_eval(eval);
    if (bench_cmd->parsed()) return cmd_bench(bench);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
  return kUsage;
}

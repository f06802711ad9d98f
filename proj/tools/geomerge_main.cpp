// geomerge: merge low-rank adapter bundles with symmetry-aware geometry.
//
// Subcommands:
//   merge      merge >= 1 adapter bundles (geodesic | geodesic-cayley | euclid | fisher)
//   distance   per-layer quotient distances between two bundles (JSON)
//   toy        closed-form two-parameter diagnostics (orbit | geodesic | pathology | compare)
//   selfcheck  fast invariant sweep over every geometric contract
//
// Exit codes: 0 success, 2 layer-set mismatch (incl. missing Fisher tensors),
// 3 non-convergence without --allow-nonconverged, 4 rank-lift infeasible,
// 5 I/O failure, 64 command-line usage error, 1 internal error.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "geomerge/geomerge.hpp"

namespace {

namespace gm = geomerge;
using json = nlohmann::ordered_json;

/// Error carrying a process exit code; message goes to stderr.
struct CliError {
  int code;
  std::string message;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Temp-then-rename so no command leaves a partial text output behind.
void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  namespace fs = std::filesystem;
  try {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw CliError{5, "cannot open " + tmp.string() + " for writing"};
      out << text;
      if (!out.good()) throw CliError{5, "short write to " + tmp.string()};
    }
    fs::rename(tmp, path);
  } catch (const fs::filesystem_error& e) {
    throw CliError{5, std::string("I/O failure: ") + e.what()};
  }
}

void emit_output(const std::string& text, const std::string& out_path) {
  if (out_path.empty())
    std::cout << text;
  else
    write_text_atomic(out_path, text);
}

// ---------------------------------------------------------------------------
// merge
// ---------------------------------------------------------------------------

struct MergeOptions {
  std::vector<std::string> inputs;
  std::vector<double> weights;
  std::string mode = "geodesic";
  gm::Index rank_lift = 0;
  double alpha = 1.0;
  double tol = 0.0;  // 0 = auto: 1e-8 exact, 1e-6 cayley fast path
  gm::Index max_iter = 100;
  std::vector<gm::Index> align_iters{5, 2};
  double tau = 1.0;
  double scale = 1.0;
  std::uint64_t seed = 7;
  std::string out;
  std::string report;
  bool json_stdout = false;
  bool allow_nonconverged = false;
  int jobs = 1;
};

struct LayerOutcome {
  std::string name;
  gm::LayerRecord merged;
  gm::FrechetReport report;
  std::vector<double> residuals;
};

/// Normalize user weights: nonnegative, positive sum; empty means uniform.
std::vector<double> resolve_cli_weights(std::size_t count, const std::vector<double>& raw) {
  std::vector<double> w = raw;
  if (w.empty()) w.assign(count, 1.0);
  if (w.size() != count)
    throw CliError{64, "--weights needs one value per input (" + std::to_string(count) +
                           " inputs, " + std::to_string(w.size()) + " weights)"};
  double sum = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) throw CliError{64, "--weights values must be nonnegative"};
    sum += v;
  }
  if (sum <= 0.0) throw CliError{64, "--weights must have a positive sum"};
  for (double& v : w) v /= sum;
  return w;
}

/// All bundles must expose the same layer names with matching shapes and ranks.
void require_matching_layers(const std::vector<gm::AdapterBundle>& bundles) {
  const gm::AdapterBundle& first = bundles.front();
  for (std::size_t b = 1; b < bundles.size(); ++b) {
    if (bundles[b].layers.size() != first.layers.size())
      throw CliError{2, "layer-set mismatch: " + bundles[b].name + " has " +
                            std::to_string(bundles[b].layers.size()) + " layers, " + first.name +
                            " has " + std::to_string(first.layers.size())};
    for (const auto& [name, rec] : first.layers) {
      const gm::LayerRecord* other = bundles[b].find_layer(name);
      if (other == nullptr)
        throw CliError{2, "layer-set mismatch: layer '" + name + "' missing from input " +
                              std::to_string(b)};
      if (other->d_out != rec.d_out || other->d_in != rec.d_in || other->rank != rec.rank)
        throw CliError{2, "layer-set mismatch: layer '" + name + "' has shape [" +
                              std::to_string(other->d_out) + "," + std::to_string(other->d_in) +
                              "] rank " + std::to_string(other->rank) + " in input " +
                              std::to_string(b) + ", expected [" + std::to_string(rec.d_out) +
                              "," + std::to_string(rec.d_in) + "] rank " +
                              std::to_string(rec.rank)};
    }
  }
}

gm::DenseMatrix dense_delta(const gm::LayerRecord& rec) {
  if (rec.repr == gm::LayerRepr::polar)
    return rec.scale * rec.U * rec.B * rec.V.transpose();
  return rec.scale * rec.G * rec.H.transpose();
}

/// Balanced thin factorization W = G H^T used when baselines write lowrank layers.
std::pair<gm::DenseMatrix, gm::DenseMatrix> balanced_lowrank(const gm::DenseMatrix& W) {
  Eigen::BDCSVD<gm::DenseMatrix> svd(W, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& S = svd.singularValues();
  const double cut = S.size() > 0 ? S(0) * 1e-12 : 0.0;
  gm::Index k = 0;
  for (gm::Index i = 0; i < S.size(); ++i)
    if (S(i) > cut) ++k;
  k = std::max<gm::Index>(k, 1);
  const gm::Vector root = S.head(k).array().sqrt();
  gm::DenseMatrix G = svd.matrixU().leftCols(k) * root.asDiagonal();
  gm::DenseMatrix H = svd.matrixV().leftCols(k) * root.asDiagonal();
  return {std::move(G), std::move(H)};
}

int cmd_merge(const MergeOptions& opt) {
  const auto t_start = std::chrono::steady_clock::now();
  const bool geodesic = opt.mode == "geodesic" || opt.mode == "geodesic-cayley";
  const gm::LogMode log_mode =
      opt.mode == "geodesic-cayley" ? gm::LogMode::cayley : gm::LogMode::exact;
  // The fast path replaces the true log with the retraction inverse, which
  // biases its gradient by a cubic power of the cluster spread; chasing the
  // exact-mode tolerance below that floor cannot succeed, so the default
  // stopping tolerance is mode-dependent.  An explicit --tol always wins.
  const double tol = opt.tol > 0.0 ? opt.tol
                     : log_mode == gm::LogMode::cayley ? 1e-6
                                                       : 1e-8;
  if (!geodesic && opt.rank_lift > 0)
    throw CliError{4, "--rank-lift requires a geodesic mode; the " + opt.mode +
                          " baseline averages dense deltas and the lift's padding block would "
                          "distort them"};

  std::vector<gm::AdapterBundle> bundles;
  bundles.reserve(opt.inputs.size());
  for (const std::string& path : opt.inputs) bundles.push_back(gm::read_bundle(path));
  require_matching_layers(bundles);
  const std::vector<double> weights = resolve_cli_weights(bundles.size(), opt.weights);

  if (opt.mode == "fisher") {
    for (const gm::AdapterBundle& b : bundles)
      for (const auto& [name, rec] : b.layers)
        if (!rec.has_fisher())
          throw CliError{2, "fisher mode requires a fisher tensor on every layer; bundle '" +
                                b.name + "' layer '" + name + "' has none"};
  }

  // Geodesic modes work on the polar representation with scale folded in.
  std::vector<gm::AdapterBundle> polar;
  std::vector<std::string> conversion_warnings;
  if (geodesic) {
    polar.reserve(bundles.size());
    for (const gm::AdapterBundle& b : bundles)
      polar.push_back(gm::to_polar_bundle(b, &conversion_warnings));
  }

  const std::size_t n_layers = bundles.front().layers.size();
  std::vector<LayerOutcome> outcomes(n_layers);
  std::vector<std::exception_ptr> errors(n_layers);

  auto run_layer = [&](std::size_t li) {
    LayerOutcome out;
    out.name = bundles.front().layers[li].first;
    if (geodesic) {
      std::vector<gm::PolarPoint> points;
      points.reserve(polar.size());
      for (const gm::AdapterBundle& b : polar) {
        const gm::LayerRecord* rec = b.find_layer(out.name);
        gm::PolarPoint p;
        p.U = rec->U;
        p.B = rec->B;
        p.V = rec->V;
        points.push_back(std::move(p));
      }
      if (opt.rank_lift > 0) {
        gm::LiftConfig lcfg;
        lcfg.target_rank = opt.rank_lift;
        lcfg.seed = opt.seed;
        points = gm::lift_adapters(points, lcfg);
      }
      gm::FrechetConfig cfg;
      cfg.weights = weights;
      cfg.alpha = opt.alpha;
      cfg.tol = tol;
      cfg.max_iter = opt.max_iter;
      cfg.align_iters_first = opt.align_iters[0];
      cfg.align_iters_rest = opt.align_iters.size() > 1 ? opt.align_iters[1] : opt.align_iters[0];
      cfg.tau = opt.tau;
      cfg.mode = log_mode;
      auto [mu, report] = gm::frechet_mean_quotient(points, cfg);
      out.report = std::move(report);
      for (const gm::PolarPoint& p : points) {
        const gm::AlignResult ar = gm::align(mu, p, cfg.align_iters_first, opt.tau, log_mode);
        out.residuals.push_back(std::sqrt(std::max(0.0, ar.sq_dist)));
      }
      // Task-arithmetic scaling folds into the SPD block; a sign flips V.
      mu.B *= std::abs(opt.scale);
      if (opt.scale < 0.0) mu.V = -mu.V;
      out.merged = gm::make_polar_layer(mu);
    } else if (opt.mode == "euclid") {
      std::vector<gm::DenseMatrix> deltas;
      deltas.reserve(bundles.size());
      for (const gm::AdapterBundle& b : bundles) deltas.push_back(dense_delta(*b.find_layer(out.name)));
      const gm::DenseMatrix merged = gm::euclid_average(deltas, weights, opt.scale);
      auto [G, H] = balanced_lowrank(merged);
      out.merged = gm::make_lowrank_layer(G, H);
      out.report.converged = true;
    } else {  // fisher
      gm::FisherBundle fb;
      gm::Index d_out = 0, d_in = 0;
      for (const gm::AdapterBundle& b : bundles) {
        const gm::LayerRecord* rec = b.find_layer(out.name);
        const gm::DenseMatrix delta = dense_delta(*rec);
        d_out = delta.rows();
        d_in = delta.cols();
        fb.theta.emplace_back(Eigen::Map<const gm::Vector>(delta.data(), delta.size()));
        fb.fisher.emplace_back(
            Eigen::Map<const gm::Vector>(rec->fisher.data(), rec->fisher.size()));
      }
      const gm::FisherMergeResult fm = gm::fisher_merge(fb, weights);
      gm::DenseMatrix merged =
          opt.scale * Eigen::Map<const gm::DenseMatrix>(fm.theta.data(), d_out, d_in);
      auto [G, H] = balanced_lowrank(merged);
      out.merged = gm::make_lowrank_layer(G, H);
      out.report.converged = true;
      if (!fm.fallback_coords.empty())
        out.report.warnings.push_back(
            std::to_string(fm.fallback_coords.size()) +
            " coordinate(s) had zero Fisher mass; unweighted mean used there");
    }
    return out;
  };

  const int jobs = std::max(1, opt.jobs);
  std::atomic<std::size_t> cursor{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= n_layers) return;
      try {
        outcomes[i] = run_layer(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (jobs == 1 || n_layers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const int count = std::min<std::size_t>(static_cast<std::size_t>(jobs), n_layers);
    for (int j = 0; j < count; ++j) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);

  if (!opt.allow_nonconverged) {
    for (const LayerOutcome& out : outcomes)
      if (!out.report.converged)
        throw CliError{3, "layer '" + out.name + "' did not converge within " +
                              std::to_string(opt.max_iter) +
                              " iterations; pass --allow-nonconverged to write the result anyway"};
  }

  gm::AdapterBundle merged;
  merged.name = "merged";
  merged.base_model = bundles.front().base_model;
  merged.metadata["mode"] = opt.mode;
  merged.metadata["scale"] = fmt_double(opt.scale);
  merged.metadata["seed"] = std::to_string(opt.seed);
  if (opt.rank_lift > 0) merged.metadata["rank_lift"] = std::to_string(opt.rank_lift);
  {
    std::string joined;
    for (const gm::AdapterBundle& b : bundles) {
      if (!joined.empty()) joined += "+";
      joined += b.name;
    }
    merged.metadata["inputs"] = joined;
  }
  for (LayerOutcome& out : outcomes) merged.layers.emplace_back(out.name, std::move(out.merged));
  gm::write_bundle(merged, opt.out);

  json rep;
  rep["run"] = json{{"command", "merge"},
                    {"inputs", opt.inputs},
                    {"weights", weights},
                    {"mode", opt.mode},
                    {"rank_lift", opt.rank_lift > 0 ? json(opt.rank_lift) : json(nullptr)},
                    {"alpha", opt.alpha},
                    {"tol", tol},
                    {"max_iter", opt.max_iter},
                    {"align_iters", opt.align_iters},
                    {"tau", opt.tau},
                    {"scale", opt.scale},
                    {"seed", opt.seed},
                    {"out", opt.out},
                    {"jobs", jobs}};
  std::vector<const LayerOutcome*> ordered;
  for (const LayerOutcome& out : outcomes) ordered.push_back(&out);
  std::sort(ordered.begin(), ordered.end(),
            [](const LayerOutcome* a, const LayerOutcome* b) { return a->name < b->name; });
  rep["layers"] = json::array();
  for (const LayerOutcome* out : ordered) {
    json jl;
    jl["name"] = out->name;
    jl["mode"] = opt.mode;
    jl["iterations"] = out->report.iterations;
    jl["functional_trace"] = out->report.functional_trace;
    jl["gradient_trace"] = out->report.gradient_trace;
    jl["converged"] = out->report.converged;
    std::vector<std::string> warnings = out->report.warnings;
    for (const std::string& w : conversion_warnings)
      if (w.find("'" + out->name + "'") != std::string::npos) warnings.push_back(w);
    jl["warnings"] = warnings;
    jl["quotient_residuals"] = out->residuals;
    rep["layers"].push_back(std::move(jl));
  }
  const auto elapsed = std::chrono::steady_clock::now() - t_start;
  rep["totals"] = json{
      {"wall_time_ms",
       std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count()}};

  const std::string text = rep.dump(2) + "\n";
  if (!opt.report.empty()) write_text_atomic(opt.report, text);
  if (opt.json_stdout) {
    std::cout << text;
  } else {
    for (const LayerOutcome* out : ordered)
      std::cout << "layer " << out->name << ": "
                << (out->report.converged ? "converged" : "NOT converged") << " in "
                << out->report.iterations << " iteration(s)\n";
    std::cout << "wrote " << opt.out << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// distance
// ---------------------------------------------------------------------------

struct DistanceOptions {
  std::string bundle_a;
  std::string bundle_b;
  std::string report;
};

int cmd_distance(const DistanceOptions& opt) {
  std::vector<gm::AdapterBundle> bundles{gm::read_bundle(opt.bundle_a),
                                         gm::read_bundle(opt.bundle_b)};
  require_matching_layers(bundles);
  const gm::AdapterBundle pa = gm::to_polar_bundle(bundles[0]);
  const gm::AdapterBundle pb = gm::to_polar_bundle(bundles[1]);
  json doc;
  doc["layers"] = json::array();
  for (const auto& [name, rec] : pa.layers) {
    const gm::LayerRecord* other = pb.find_layer(name);
    gm::PolarPoint p, q;
    p.U = rec.U;
    p.B = rec.B;
    p.V = rec.V;
    q.U = other->U;
    q.B = other->B;
    q.V = other->V;
    doc["layers"].push_back(json{{"name", name}, {"distance", gm::quotient_distance(p, q)}});
  }
  const std::string text = doc.dump(2) + "\n";
  if (!opt.report.empty()) write_text_atomic(opt.report, text);
  std::cout << text;
  return 0;
}

// ---------------------------------------------------------------------------
// toy
// ---------------------------------------------------------------------------

struct ToyOptions {
  std::vector<double> theta{1.0, 1.0};
  std::vector<double> from{1.0, 1.0};
  std::vector<double> vel{0.0, 0.0};
  gm::Index steps = 11;
  double a_min = 0.5, a_max = 2.0;
  double t0 = 0.0, t1 = 1.0;
  double sxx = 1.0, sigma2 = 1.0;
  std::vector<std::string> points;
  std::vector<double> weights;
  std::string out;
};

gm::ToyPoint parse_toy_point(const std::vector<double>& v, const std::string& flag) {
  if (v.size() != 2) throw CliError{64, flag + " needs exactly two comma-separated values"};
  return gm::ToyPoint{v[0], v[1]};
}

int cmd_toy_orbit(const ToyOptions& opt) {
  const gm::ToyPoint p = parse_toy_point(opt.theta, "--theta");
  emit_output(gm::to_csv(gm::emit_orbit(p, opt.steps, opt.a_min, opt.a_max)), opt.out);
  return 0;
}

int cmd_toy_geodesic(const ToyOptions& opt) {
  const gm::ToyPoint p = parse_toy_point(opt.from, "--from");
  if (opt.vel.size() != 2) throw CliError{64, "--vel needs exactly two comma-separated values"};
  emit_output(
      gm::to_csv(gm::emit_geodesic(p, gm::ToyPair{opt.vel[0], opt.vel[1]}, opt.steps, opt.t0,
                                   opt.t1)),
      opt.out);
  return 0;
}

int cmd_toy_pathology(const ToyOptions& opt) {
  const gm::ToyPoint p = parse_toy_point(opt.theta, "--theta");
  const gm::ToyPair merged = gm::toy_fisher_pathology(p, gm::ToyFisherInputs{opt.sxx, opt.sigma2});
  json doc;
  doc["fisher_merge"] = json::array({merged[0], merged[1]});
  doc["geomerge_predictor"] = gm::toy_predictor(p);
  emit_output(doc.dump(2) + "\n", opt.out);
  return 0;
}

int cmd_toy_compare(const ToyOptions& opt) {
  std::vector<gm::ToyPoint> pts;
  for (const std::string& tok : opt.points) {
    const auto comma = tok.find(',');
    if (comma == std::string::npos)
      throw CliError{64, "--points entries look like t1,t2 separated by ';'"};
    try {
      pts.push_back(gm::ToyPoint{std::stod(tok.substr(0, comma)), std::stod(tok.substr(comma + 1))});
    } catch (const std::exception&) {
      throw CliError{64, "--points entry '" + tok + "' is not a pair of numbers"};
    }
  }
  if (pts.empty()) throw CliError{64, "--points needs at least one t1,t2 pair"};
  std::vector<double> w = opt.weights;
  if (!w.empty()) {
    const std::vector<double> norm = resolve_cli_weights(pts.size(), w);
    w = norm;
  }
  emit_output(gm::to_csv(gm::emit_merge_comparison(pts, w)), opt.out);
  return 0;
}

// ---------------------------------------------------------------------------
// selfcheck
// ---------------------------------------------------------------------------

struct SelfcheckOptions {
  std::uint64_t seed = 7;
  bool json_stdout = false;
  std::string inject_failure;
};

int cmd_selfcheck(const SelfcheckOptions& opt) {
  const std::vector<gm::SelfcheckResult> results = gm::run_selfcheck(opt.seed, opt.inject_failure);
  std::size_t passed = 0;
  for (const gm::SelfcheckResult& r : results)
    if (r.pass) ++passed;
  if (opt.json_stdout) {
    json doc;
    doc["checks"] = json::array();
    for (const gm::SelfcheckResult& r : results)
      doc["checks"].push_back(json{{"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
    doc["passed"] = passed;
    doc["failed"] = results.size() - passed;
    std::cout << doc.dump(2) << "\n";
  } else {
    std::size_t width = 0;
    for (const gm::SelfcheckResult& r : results) width = std::max(width, r.name.size());
    for (const gm::SelfcheckResult& r : results)
      std::cout << (r.pass ? "PASS  " : "FAIL  ") << r.name
                << std::string(width - r.name.size() + 2, ' ') << r.detail << "\n";
    std::cout << passed << "/" << results.size() << " checks passed\n";
  }
  if (passed != results.size()) {
    std::cerr << "selfcheck failed:";
    for (const gm::SelfcheckResult& r : results)
      if (!r.pass) std::cerr << " " << r.name;
    std::cerr << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geomerge: symmetry-aware merging of low-rank adapter updates"};
  app.require_subcommand(1);

  MergeOptions mo;
  CLI::App* merge = app.add_subcommand("merge", "Merge adapter bundles into one");
  merge->add_option("--inputs", mo.inputs, "Input bundle directories (comma-separated)")
      ->required()
      ->delimiter(',');
  merge->add_option("--weights", mo.weights, "Per-input weights (normalized; default uniform)")
      ->delimiter(',');
  merge->add_option("--mode", mo.mode, "geodesic | geodesic-cayley | euclid | fisher")
      ->check(CLI::IsMember({"geodesic", "geodesic-cayley", "euclid", "fisher"}))
      ->capture_default_str();
  merge->add_option("--rank-lift", mo.rank_lift, "Lift all inputs to this rank before merging");
  merge->add_option("--alpha", mo.alpha, "Initial step size")->capture_default_str();
  merge->add_option("--tol", mo.tol,
                    "Gradient-norm stopping tolerance (default 1e-8; geodesic-cayley defaults "
                    "to 1e-6 to sit above the fast path's gradient bias)")
      ->check(CLI::PositiveNumber);
  merge->add_option("--max-iter", mo.max_iter, "Iteration cap")->capture_default_str();
  merge
      ->add_option("--align-iters", mo.align_iters,
                   "Alignment refinement iterations: first,subsequent")
      ->delimiter(',')
      ->expected(1, 2);
  merge->add_option("--tau", mo.tau, "Alignment damping factor")->capture_default_str();
  merge
      ->add_option("--scale", mo.scale,
                   "Task-arithmetic coefficient applied to the merged delta (nonzero)")
      ->check(CLI::Validator(
          [](std::string& s) -> std::string {
            try {
              return std::stod(s) == 0.0 ? "must be nonzero" : "";
            } catch (const std::exception&) {
              return "must be a number";
            }
          },
          "NONZERO"))
      ->capture_default_str();
  merge->add_option("--seed", mo.seed, "Seed for all randomized steps")->capture_default_str();
  merge->add_option("--out", mo.out, "Output bundle directory")->required();
  merge->add_option("--report", mo.report, "Write the JSON report to this file");
  merge->add_flag("--json", mo.json_stdout, "Print the JSON report to stdout");
  merge->add_flag("--allow-nonconverged", mo.allow_nonconverged,
                  "Write output even if a layer did not converge");
  merge->add_option("--jobs", mo.jobs, "Concurrent layer merges")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  DistanceOptions dopt;
  CLI::App* distance =
      app.add_subcommand("distance", "Per-layer quotient distances between two bundles");
  distance->add_option("bundle_a", dopt.bundle_a, "First bundle directory")->required();
  distance->add_option("bundle_b", dopt.bundle_b, "Second bundle directory")->required();
  distance->add_option("--report", dopt.report, "Write the JSON output to this file");

  ToyOptions topt;
  CLI::App* toy = app.add_subcommand("toy", "Two-parameter closed-form diagnostics");
  toy->require_subcommand(1);
  CLI::App* toy_orbit = toy->add_subcommand("orbit", "Sweep the symmetry orbit of a point (CSV)");
  toy_orbit->add_option("--theta", topt.theta, "Point t1,t2")->delimiter(',')->expected(2);
  toy_orbit->add_option("--steps", topt.steps, "Row count")->capture_default_str();
  toy_orbit->add_option("--amin", topt.a_min, "Smallest gauge factor")->capture_default_str();
  toy_orbit->add_option("--amax", topt.a_max, "Largest gauge factor")->capture_default_str();
  toy_orbit->add_option("--out", topt.out, "Write CSV here instead of stdout");
  CLI::App* toy_geo = toy->add_subcommand("geodesic", "Closed-form geodesic samples (CSV)");
  toy_geo->add_option("--from", topt.from, "Start point t1,t2")->delimiter(',')->expected(2);
  toy_geo->add_option("--vel", topt.vel, "Initial velocity v1,v2")
      ->delimiter(',')
      ->expected(2)
      ->required();
  toy_geo->add_option("--steps", topt.steps, "Row count")->capture_default_str();
  toy_geo->add_option("--t0", topt.t0, "Start time")->capture_default_str();
  toy_geo->add_option("--t1", topt.t1, "End time")->capture_default_str();
  toy_geo->add_option("--out", topt.out, "Write CSV here instead of stdout");
  CLI::App* toy_path =
      toy->add_subcommand("pathology", "Fisher collapse vs geometric predictor (JSON)");
  toy_path->add_option("--theta", topt.theta, "Point t1,t2")->delimiter(',')->expected(2);
  toy_path->add_option("--sxx", topt.sxx, "Input second moment")->capture_default_str();
  toy_path->add_option("--sigma2", topt.sigma2, "Noise variance")->capture_default_str();
  toy_path->add_option("--out", topt.out, "Write JSON here instead of stdout");
  CLI::App* toy_cmp =
      toy->add_subcommand("compare", "Naive average vs geometric merge of toy points (CSV)");
  toy_cmp->add_option("--points", topt.points, "Points as t1,t2 pairs separated by ';'")
      ->delimiter(';')
      ->required();
  toy_cmp->add_option("--weights", topt.weights, "Per-point weights (normalized)")
      ->delimiter(',');
  toy_cmp->add_option("--out", topt.out, "Write CSV here instead of stdout");

  SelfcheckOptions so;
  CLI::App* selfcheck = app.add_subcommand("selfcheck", "Run the fast invariant sweep");
  selfcheck->add_option("--seed", so.seed, "Seed for the random instances")->capture_default_str();
  selfcheck->add_flag("--json", so.json_stdout, "Emit JSON instead of the table");
  selfcheck->add_option("--inject-failure", so.inject_failure,
                        "Force-fail the named check (failure-path testing)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 64;
  }

  try {
    if (merge->parsed()) return cmd_merge(mo);
    if (distance->parsed()) return cmd_distance(dopt);
    if (toy->parsed()) {
      if (toy_orbit->parsed()) return cmd_toy_orbit(topt);
      if (toy_geo->parsed()) return cmd_toy_geodesic(topt);
      if (toy_path->parsed()) return cmd_toy_pathology(topt);
      if (toy_cmp->parsed()) return cmd_toy_compare(topt);
    }
    if (selfcheck->parsed()) return cmd_selfcheck(so);
    std::cerr << "no subcommand selected\n";
    return 64;
  } catch (const CliError& e) {
    std::cerr << "geomerge: " << e.message << "\n";
    return e.code;
  } catch (const gm::bundle_error& e) {
    std::cerr << "geomerge: " << e.what() << "\n";
    return 5;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "geomerge: " << e.what() << "\n";
    return 5;
  } catch (const gm::lift_degeneracy_error& e) {
    std::cerr << "geomerge: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "geomerge: internal error: " << e.what() << "\n";
    return 1;
  }
}

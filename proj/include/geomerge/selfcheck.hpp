#pragma once
// Fast end-to-end invariant sweep behind `geomerge selfcheck`: one entry per
// core geometric contract, each a few small random instances, the whole
// sweep well under a minute.  A named check can be force-failed to exercise
// failure reporting.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "geomerge/baselines.hpp"
#include "geomerge/bundle.hpp"
#include "geomerge/cayley.hpp"
#include "geomerge/frechet.hpp"
#include "geomerge/lift.hpp"
#include "geomerge/quotient.hpp"
#include "geomerge/spd.hpp"
#include "geomerge/stiefel.hpp"
#include "geomerge/toy.hpp"

namespace geomerge {

struct SelfcheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

inline DenseMatrix random_gaussian(Index rows, Index cols, std::uint64_t seed) {
  NormalSampler sampler(seed);
  DenseMatrix M(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) M(i, j) = sampler();
  return M;
}

inline DenseMatrix random_spd(Index r, std::uint64_t seed, double spread = 0.5) {
  return expm(DenseMatrix(spread * sym_part(random_gaussian(r, r, seed))));
}

inline PolarPoint random_polar_point(Index d_out, Index d_in, Index r, std::uint64_t seed) {
  PolarPoint p;
  p.U = rand_orthonormal(d_out, r, seed);
  p.V = rand_orthonormal(d_in, r, seed + 1);
  p.B = random_spd(r, seed + 2);
  return p;
}

inline TangentTriple random_tangent(const PolarPoint& p, std::uint64_t seed, double scale = 1.0) {
  TangentTriple t;
  t.zU = scale * stiefel_project(p.U, random_gaussian(p.d_out(), p.rank(), seed));
  t.zB = scale * sym_part(random_gaussian(p.rank(), p.rank(), seed + 1));
  t.zV = scale * stiefel_project(p.V, random_gaussian(p.d_in(), p.rank(), seed + 2));
  return t;
}

// A point a small geodesic step away from `base` (clustered fixtures).
inline PolarPoint nearby_polar_point(const PolarPoint& base, std::uint64_t seed, double scale) {
  return total_exp(base, random_tangent(base, seed, scale));
}

}  // namespace detail

/// Run every invariant check; `inject_failure` force-fails the named check
/// so callers can exercise the failure path.
inline std::vector<SelfcheckResult> run_selfcheck(std::uint64_t seed = 7,
                                                  const std::string& inject_failure = "") {
  std::vector<SelfcheckResult> results;
  auto run = [&](const std::string& name, const std::function<std::string()>& body) {
    SelfcheckResult res;
    res.name = name;
    try {
      res.detail = body();
      res.pass = true;
    } catch (const std::exception& e) {
      res.detail = e.what();
      res.pass = false;
    }
    if (name == inject_failure) {
      res.pass = false;
      res.detail = "injected failure";
    }
    results.push_back(std::move(res));
  };
  auto expect = [](bool ok, const std::string& msg) {
    if (!ok) throw geomerge_error(msg);
  };

  run("spd-exp-log-roundtrip", [&] {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const Index r = 2 + static_cast<Index>(i % 5);
      const DenseMatrix B = detail::random_spd(r, seed + 10 * static_cast<std::uint64_t>(i));
      const DenseMatrix eta = sym_part(detail::random_gaussian(r, r, seed + 10 * i + 5));
      const DenseMatrix back = spd_log(B, spd_exp(B, eta));
      worst = std::max(worst, (back - eta).norm());
    }
    expect(worst < 1e-9, "spd roundtrip residual " + std::to_string(worst));
    return "worst residual " + std::to_string(worst);
  });

  run("stiefel-exp-orthonormality", [&] {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const Index n = 8 + (i % 3) * 8, r = 1 + (i % 4);
      const DenseMatrix U = rand_orthonormal(n, r, seed + 100 + static_cast<std::uint64_t>(i));
      const DenseMatrix eta = stiefel_project(U, detail::random_gaussian(n, r, seed + 200 + i));
      worst = std::max(worst, orthonormality_defect(stiefel_exp(U, eta)));
    }
    expect(worst < 1e-10, "orthonormality defect " + std::to_string(worst));
    return "worst defect " + std::to_string(worst);
  });

  run("stiefel-exp-log-roundtrip", [&] {
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
      const Index n = 10 + (i % 2) * 10, r = 1 + (i % 3);
      const DenseMatrix U = rand_orthonormal(n, r, seed + 300 + static_cast<std::uint64_t>(i));
      DenseMatrix eta = stiefel_project(U, detail::random_gaussian(n, r, seed + 400 + i));
      eta *= 0.2 / std::max(1.0, eta.norm());
      const DenseMatrix U1 = stiefel_exp(U, eta);
      worst = std::max(worst, (stiefel_exp(U, stiefel_log(U, U1)) - U1).norm());
    }
    expect(worst < 1e-8, "stiefel roundtrip residual " + std::to_string(worst));
    return "worst residual " + std::to_string(worst);
  });

  run("gauge-equation-residual", [&] {
    double worst_eq = 0.0, worst_rec = 0.0;
    for (int i = 0; i < 10; ++i) {
      const PolarPoint p = detail::random_polar_point(12, 10, 3, seed + 500 + 10 * i);
      const TangentTriple xi = detail::random_tangent(p, seed + 600 + 10 * i);
      const DenseMatrix Om = gauge_drift(p, xi);
      // Defining equation: B^{-1} Om B + B Om B^{-1} - Om = skew RHS.
      const DenseMatrix Bi = p.B.llt().solve(DenseMatrix::Identity(3, 3));
      const DenseMatrix lhs = Bi * Om * p.B + p.B * Om * Bi - Om;
      const DenseMatrix rhs = skew_part(
          DenseMatrix(0.5 * (p.V.transpose() * xi.zV + p.U.transpose() * xi.zU) -
                      (Bi * xi.zB - xi.zB * Bi)));
      worst_eq = std::max(worst_eq, (lhs - rhs).norm() / std::max(1.0, rhs.norm()));
      const TangentTriple h = horizontal_project(p, xi);
      const TangentTriple v = vertical_vector(p, Om);
      worst_rec = std::max(worst_rec, std::sqrt((h.zU + v.zU - xi.zU).squaredNorm() +
                                                (h.zB + v.zB - xi.zB).squaredNorm() +
                                                (h.zV + v.zV - xi.zV).squaredNorm()));
    }
    expect(worst_eq < 1e-10 && worst_rec < 1e-9,
           "equation residual " + std::to_string(worst_eq) + ", reconstruction " +
               std::to_string(worst_rec));
    return "equation " + std::to_string(worst_eq) + ", reconstruction " +
           std::to_string(worst_rec);
  });

  run("cayley-lift-retract-roundtrip", [&] {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const Index n = 12 + (i % 3) * 6, r = 1 + (i % 5);  // odd and even ranks
      const DenseMatrix X = rand_orthonormal(n, r, seed + 700 + static_cast<std::uint64_t>(i));
      DenseMatrix eta = stiefel_project(X, detail::random_gaussian(n, r, seed + 800 + i));
      eta *= 0.5 / std::max(1.0, eta.norm());
      const DenseMatrix Q = stiefel_exp(X, eta);
      const FactoredSkew W = cayley_lift(X, Q);
      worst = std::max(worst, (cayley_retract(X, W) - Q).norm());
    }
    expect(worst < 1e-8, "cayley roundtrip residual " + std::to_string(worst));
    return "worst residual " + std::to_string(worst);
  });

  run("lowrank-conversion-invariance", [&] {
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
      const Index d = 14, r = 3;
      const DenseMatrix G = detail::random_gaussian(d, r, seed + 900 + 10 * i);
      const DenseMatrix H = detail::random_gaussian(d, r, seed + 901 + 10 * i);
      DenseMatrix A = detail::random_gaussian(r, r, seed + 902 + 10 * i);
      A += 3.0 * DenseMatrix::Identity(r, r);  // keep it comfortably invertible
      const DenseMatrix Ainv = A.fullPivLu().inverse();
      worst = std::max(worst, quotient_distance(from_lowrank(G, H),
                                                from_lowrank(G * Ainv, H * A.transpose())));
    }
    expect(worst < 1e-8, "conversion distance " + std::to_string(worst));
    return "worst distance " + std::to_string(worst);
  });

  run("frechet-orbit-collapse", [&] {
    const PolarPoint base = detail::random_polar_point(16, 12, 3, seed + 1000);
    std::vector<PolarPoint> pts;
    for (int i = 0; i < 3; ++i)
      pts.push_back(gauge_apply(base, rand_orthonormal(3, 3, seed + 1100 + i)));
    auto [mu, report] = frechet_mean_quotient(pts);
    const double d = quotient_distance(mu, pts[0]);
    expect(d < 1e-6, "collapse distance " + std::to_string(d));
    return "distance " + std::to_string(d) + " after " + std::to_string(report.iterations) +
           " iterations";
  });

  run("frechet-spd-geometric-mean", [&] {
    std::vector<DenseMatrix> pts{DenseMatrix::Constant(1, 1, 1.0),
                                 DenseMatrix::Constant(1, 1, 4.0)};
    const double mean = frechet_mean_spd(pts)(0, 0);
    expect(std::abs(mean - 2.0) < 1e-6, "mean " + std::to_string(mean));
    return "mean " + std::to_string(mean);
  });

  run("lift-dense-equivalence", [&] {
    const Index d = 16, r = 2, R = 4;
    std::vector<PolarPoint> pts;
    for (int s = 0; s < 3; ++s)
      pts.push_back(detail::random_polar_point(d, d, r, seed + 1200 + 100 * s));
    double worst = 0.0;
    for (std::size_t t = 0; t < pts.size(); ++t) {
      DenseMatrix dense = DenseMatrix::Zero(d, d);
      const DenseMatrix Pu = DenseMatrix::Identity(d, d) - pts[t].U * pts[t].U.transpose();
      const DenseMatrix Pv = DenseMatrix::Identity(d, d) - pts[t].V * pts[t].V.transpose();
      for (std::size_t s = 0; s < pts.size(); ++s)
        if (s != t) dense += Pu * to_dense(pts[s]) * Pv;
      const ResidualCore rc = residual_core(t, pts);
      worst = std::max(worst,
                       (rc.EU * rc.K * rc.EV.transpose() - dense).norm() /
                           std::max(1.0, dense.norm()));
    }
    LiftConfig cfg;
    cfg.target_rank = R;
    cfg.seed = seed;
    const std::vector<PolarPoint> lifted = lift_adapters(pts, cfg);
    double recover = 0.0;
    for (std::size_t t = 0; t < pts.size(); ++t) {
      const DenseMatrix lead = lifted[t].U.leftCols(r) * lifted[t].B.topLeftCorner(r, r) *
                               lifted[t].V.leftCols(r).transpose();
      recover = std::max(recover, (lead - to_dense(pts[t])).norm());
    }
    expect(worst < 1e-10 && recover < 1e-9,
           "residual mismatch " + std::to_string(worst) + ", leading-block recovery " +
               std::to_string(recover));
    return "residual " + std::to_string(worst) + ", recovery " + std::to_string(recover);
  });

  run("fisher-surrogate-minimizer", [&] {
    FisherBundle bundle;
    for (int i = 0; i < 3; ++i) {
      bundle.theta.push_back(detail::random_gaussian(20, 1, seed + 1300 + 2 * i).col(0));
      bundle.fisher.push_back(
          (detail::random_gaussian(20, 1, seed + 1301 + 2 * i).col(0).array().square() + 0.1)
              .matrix());
    }
    const FisherMergeResult merged = fisher_merge(bundle);
    Vector grad = Vector::Zero(20);
    for (int i = 0; i < 3; ++i)
      grad += 2.0 * (bundle.fisher[i].array() * (merged.theta - bundle.theta[i]).array()).matrix();
    const double g = grad.cwiseAbs().maxCoeff();
    expect(g < 1e-10, "surrogate gradient " + std::to_string(g));
    return "max gradient " + std::to_string(g);
  });

  run("toy-fisher-pathology", [&] {
    const ToyPoint p{2.0, 0.5};
    const ToyPair merged = toy_fisher_pathology(p, {1.0, 1.0});
    const double collapse = std::max(std::abs(merged[0]), std::abs(merged[1]));
    const ToyFrechetResult fr = toy_frechet({p, ToyPoint{-2.0, -0.5}});
    expect(collapse < 1e-12 && std::abs(fr.w_star - 1.0) < 1e-12,
           "fisher collapse " + std::to_string(collapse) + ", quotient predictor " +
               std::to_string(fr.w_star));
    return "fisher collapses, quotient predictor " + std::to_string(fr.w_star);
  });

  run("toy-predictor-linearity", [&] {
    const ToyPoint p{1.3, 0.6};
    const ToyPair eta{0.4 * p.theta1, 0.4 * p.theta2};  // horizontal
    const std::vector<ToyCurveRow> rows = emit_geodesic(p, eta, 21);
    // Affine fit through the first two rows; check the rest.
    const double w0 = rows[0].predictor;
    const double slope = (rows[1].predictor - rows[0].predictor) / (rows[1].t - rows[0].t);
    double worst = 0.0;
    for (const ToyCurveRow& row : rows)
      worst = std::max(worst, std::abs(row.predictor - (w0 + slope * (row.t - rows[0].t))));
    expect(worst < 1e-12, "linearity residual " + std::to_string(worst));
    return "fit residual " + std::to_string(worst);
  });

  run("bundle-roundtrip-bytes", [&] {
    namespace fs = std::filesystem;
    const fs::path root =
        fs::temp_directory_path() / ("geomerge-selfcheck-" + std::to_string(seed));
    AdapterBundle b;
    b.name = "selfcheck";
    b.base_model = "none";
    const PolarPoint p = detail::random_polar_point(6, 5, 2, seed + 1400);
    b.layers.emplace_back("layer0", make_polar_layer(p));
    write_bundle(b, root / "a");
    const AdapterBundle back = read_bundle(root / "a");
    write_bundle(back, root / "b");
    bool same = true;
    for (const auto& entry : fs::directory_iterator(root / "a")) {
      const auto va = detail::read_file_bytes(entry.path());
      const auto vb = detail::read_file_bytes(root / "b" / entry.path().filename());
      if (va != vb) same = false;
    }
    std::error_code ec;
    fs::remove_all(root, ec);
    expect(same, "byte mismatch after write-read-write");
    return "write-read-write byte-identical";
  });

  return results;
}

}  // namespace geomerge

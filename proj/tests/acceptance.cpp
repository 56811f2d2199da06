// End-to-end acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.

#include <CLI11.hpp>

#include <opencv2/imgcodecs.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "gazecone/eval.hpp"
#include "gazecone/geometry.hpp"
#include "gazecone/gradcheck.hpp"
#include "gazecone/random.hpp"
#include "gazecone/serialize.hpp"
#include "gazecone/synth.hpp"
#include "gazecone/train.hpp"

using namespace gazecone;
using namespace gazecone::geometry;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  int id;
  bool pass;
  std::string detail;
};

std::vector<Verdict> verdicts;

void report(int id, bool pass, const std::string& detail) {
  verdicts.push_back({id, pass, detail});
  std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << v;
  return s.str();
}

// ---- geometry ----

Vec3 random_unit(Rng& rng) {
  Vec3 v;
  do v = Vec3(rng.normal(), rng.normal(), rng.normal());
  while (v.norm() < 1e-6);
  return v.normalized();
}

// Eye on the source plane, a target plane placed like a synthetic camera and a
// 15 to 35 degree cone aimed near the plane centre. Redrawn until at least
// `min_cover` of the 64 x 64 cell centres lie in the section.
struct ConePlane {
  Cone cone;
  PlaneFrame frame;
};

ConePlane random_cone_plane(Rng& rng, double min_cover) {
  const synth::GenConfig g;
  for (;;) {
    synth::Camera cam;
    cam.angle = rng.uniform(-1.0, 1.0) * g.max_camera_angle_deg * std::numbers::pi / 180.0;
    cam.translation = Vec3(0, 0, g.view_depth) + 0.1 * Vec3(rng.normal(), rng.normal(), rng.normal());
    const PlaneFrame f = plane_frame(cam.transform());
    const Vec2 eye(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
    const Vec3 aim = (f.point(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)) - Vec3(eye.x(), eye.y(), 0)).normalized();
    const Vec3 dir = (aim + 0.2 * random_unit(rng)).normalized();
    const double half = rng.uniform(15.0, 35.0) * std::numbers::pi / 180.0;
    const double a = std::pow(std::cos(half), 2);
    const Cone c = make_cone(eye, dir, std::log(a / (1 - a)), -6.0);
    if (sigma_matrix(c, f).degenerate) continue;
    // Cell centres inside the forward nappe, tested directly on plane points.
    std::size_t inside = 0;
    for (std::size_t i = 0; i < 64; ++i)
      for (std::size_t j = 0; j < 64; ++j) {
        const Vec3 d = f.point(SpatialMap::cell_center(j, 64), SpatialMap::cell_center(i, 64)) - c.apex;
        inside += d.dot(c.direction) > 0 && std::pow(d.dot(c.direction), 2) > c.aperture * d.squaredNorm();
      }
    if (static_cast<double>(inside) < min_cover * 64 * 64) continue;
    return {c, f};
  }
}

double iou(const SpatialMap& a, const SpatialMap& b) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    const bool x = a.values()[i] > 0.5, y = b.values()[i] > 0.5;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct IouStats {
  double worst = 1.0, mean = 0.0;
  std::size_t analytic_only = 0;  // cells lit analytically that no ray reached
  std::size_t ray_only = 0;
  std::size_t ray_only_far = 0;   // ray-only cells not touching the analytic section
  double worst_interior = 1.0;    // IoU with the analytic boundary ring excluded
};

IouStats iou_sweep(double min_cover, std::uint64_t seed) {
  Rng rng(seed);
  IntersectOptions o;
  o.kappa = 50.0;
  IouStats st;
  constexpr long k = 64;
  for (int i = 0; i < 20; ++i) {
    const auto [c, f] = random_cone_plane(rng, min_cover);
    const SpatialMap analytic = intersect_map(c, f, k, o);
    const auto r = ray_cast_oracle(c, f, 200000, k, 1000 + i);
    const double v = iou(analytic, r.mask);
    st.worst = std::min(st.worst, v);
    st.mean += v / 20.0;
    const auto lit = [&](long u, long w) { return u >= 0 && w >= 0 && u < k && w < k && analytic.at(u, w) > 0.5; };
    std::size_t inter = 0, uni = 0;
    for (long u = 0; u < k; ++u)
      for (long w = 0; w < k; ++w) {
        const bool x = lit(u, w), y = r.mask.at(u, w) > 0.5;
        st.analytic_only += x && !y;
        bool ring = false, near = false;
        for (long du = -1; du <= 1; ++du)
          for (long dw = -1; dw <= 1; ++dw) {
            ring = ring || lit(u + du, w + dw) != x;
            near = near || lit(u + du, w + dw);
          }
        if (y && !x) {
          ++st.ray_only;
          st.ray_only_far += !near;
        }
        if (!ring) {
          inter += x && y;
          uni += x || y;
        }
      }
    st.worst_interior = std::min(st.worst_interior, uni ? static_cast<double>(inter) / uni : 1.0);
  }
  return st;
}

void criterion1() {
  const auto t0 = Clock::now();
  const IouStats st = iou_sweep(0.05, 101);
  const double t = seconds_since(t0);
  report(1, st.worst > 0.95 && t < 30.0,
         "min IoU " + fmt(st.worst) + ", mean " + fmt(st.mean) + " over 20 configs, " + fmt(t, 1) + " s");
  // The oracle marks any cell a ray reaches, the analytic map tests cell centres,
  // so partially covered boundary cells appear only in the oracle mask.
  std::cout << "  info: analytic-only cells " << st.analytic_only << ", ray-only cells " << st.ray_only << " ("
            << st.ray_only_far << " away from the analytic boundary), min IoU outside the boundary ring "
            << fmt(st.worst_interior) << std::endl;
}

void criterion2() {
  const auto t0 = Clock::now();
  Rng rng(202);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Cone c = make_cone(Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1)), random_unit(rng), rng.uniform(-3, 3), 0.0);
    std::vector<double> theta(6);
    for (auto& v : theta) v = rng.uniform(-1.5, 1.5);
    const PlaneFrame f = plane_frame(params_to_affine(TransformFamily::rot3_trans, theta));
    const Mat3 sigma = sigma_matrix(c, f).sigma;
    for (int j = 0; j < 10; ++j) {
      const double b1 = rng.uniform(-1, 1), b2 = rng.uniform(-1, 1);
      const Vec3 beta(b1, b2, 1);
      const Vec3 d = f.point(b1, b2) - c.apex;
      const double direct = std::pow(c.direction.dot(d), 2) - c.aperture * d.squaredNorm();
      worst = std::max(worst, std::abs(beta.dot(sigma * beta) - direct));
    }
  }
  const double t = seconds_since(t0);
  report(2, worst <= 1e-10 && t < 1.0, "max abs err " + [&] {
    std::ostringstream s;
    s << std::scientific << std::setprecision(2) << worst;
    return s.str();
  }() + " over 100 configs x 10 points, " + fmt(t, 3) + " s");
}

void criterion3() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::ostringstream d;
  for (const auto& c : learning::gradcheck_components()) {
    const auto r = learning::gradcheck(c, 5);
    ok = ok && r.passed();
    std::ostringstream e;
    e << std::scientific << std::setprecision(1) << r.max_rel_err;
    d << c << "=" << e.str() << (r.passed() ? "" : "(FAIL)") << " ";
    if (!r.passed()) r.print(std::cout);
  }
  const double t = seconds_since(t0);
  report(3, ok && t < 120.0, d.str() + fmt(t, 1) + " s");
}

// ---- training ----

struct Run {
  eval::EvalReport report;
  learning::TrainResult train;
  double seconds = 0.0;
  // Diagnostics on the test set.
  double saliency_r = 0.0;      // saliency vs blob occupancy
  double cone_err_deg = 0.0;    // predicted cone axis vs true gaze direction
  double angle_err_deg = 0.0;   // recovered vs true camera angle (vertical_rot_trans only)
};

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

void diagnostics(const model::GazeModel& m, std::span<const Sample> test, Run& run) {
  const std::size_t k = m.config().k, n = m.config().image_side;
  std::vector<double> sal, occ;
  double cone = 0, ang = 0;
  std::size_t nc = 0, na = 0;
  const std::size_t count = std::min<std::size_t>(test.size(), 200);
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = i;
  const auto fr = m.forward(model::make_batch(test, idx));
  for (std::size_t s = 0; s < count; ++s) {
    const Sample& smp = test[s];
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        double blob = 0, px = 0;
        for (std::size_t r = i * n / k; r < (i + 1) * n / k; ++r)
          for (std::size_t c = j * n / k; c < (j + 1) * n / k; ++c, ++px) blob += smp.target[(2 * n + r) * n + c] < 0.05;
        sal.push_back(fr.saliency[(s * k + i) * k + j]);
        occ.push_back(px > 0 ? blob / px : 0.0);
      }
    const auto& g = fr.geometry[s];
    cone += std::acos(std::clamp(g.direction_raw.normalized().dot(smp.gaze_direction), -1.0, 1.0));
    ++nc;
    if (g.family == TransformFamily::vertical_rot_trans) {
      ang += std::abs(angle_from_raw(g.theta[0]) - smp.camera_angle);
      ++na;
    }
  }
  run.saliency_r = pearson(sal, occ);
  run.cone_err_deg = cone / nc * 180.0 / std::numbers::pi;
  run.angle_err_deg = na ? ang / na * 180.0 / std::numbers::pi : eval::kNaN;
}

Run train_and_eval(const synth::SplitData& data, std::uint64_t seed, TransformFamily fam, bool ext,
                   const fs::path& ckpt) {
  const auto t0 = Clock::now();
  learning::TrainConfig tc;
  tc.seed = seed;
  tc.family = fam;
  tc.extension = ext;
  model::GazeModel m(tc.model_config());
  Run run;
  run.train = learning::train(m, data.train, tc, [&](const learning::EpochMetrics& e) {
    if (e.split == "val" && (e.epoch % 5 == 0 || e.epoch == 1))
      std::cout << "    epoch " << e.epoch << " val auc " << fmt(e.auc, 3) << " l2 " << fmt(e.l2, 3) << std::endl;
  });
  std::vector<eval::PredictionSet> sets{{"model", eval::predict_all(m, data.test), ext},
                                        {"center", eval::predict_all(eval::Baseline::center(), data.test), false}};
  run.report = eval::run_eval(sets, data.test);
  diagnostics(m, data.test, run);
  if (!ckpt.empty()) io::save_checkpoint(m, ckpt);
  run.seconds = seconds_since(t0);
  const auto& r = run.report.row("model");
  std::cout << "    auc " << fmt(r.all.auc) << " l2 " << fmt(r.all.l2) << " | center auc "
            << fmt(run.report.row("center").all.auc) << " l2 " << fmt(run.report.row("center").all.l2)
            << (ext ? " | ap " + fmt(r.ap) : "") << " | loss " << fmt(run.train.initial_loss, 3) << " -> "
            << fmt(run.train.final_loss, 3) << " | saliency r " << fmt(run.saliency_r, 3) << " | cone err "
            << fmt(run.cone_err_deg, 1) << " deg"
            << (std::isnan(run.angle_err_deg) ? "" : " | angle err " + fmt(run.angle_err_deg, 1) + " deg") << " | "
            << fmt(run.seconds, 0) << " s" << std::endl;
  return run;
}

void criteria4to7(const std::vector<std::uint64_t>& seeds, const fs::path& work) {
  std::map<std::uint64_t, Run> full, ident, ext;
  double budget = 0.0;  // full and extended runs, data generation included
  for (auto seed : seeds) {
    synth::GenConfig g;
    auto t0 = Clock::now();
    const auto data = synth::generate_split(seed, g);
    const double gen_s = seconds_since(t0);
    std::cout << "  seed " << seed << " full (vertical_rot_trans)" << std::endl;
    full[seed] = train_and_eval(data, seed, TransformFamily::vertical_rot_trans, false,
                                work / ("full_" + std::to_string(seed) + ".gzc"));
    std::cout << "  seed " << seed << " identity" << std::endl;
    ident[seed] = train_and_eval(data, seed, TransformFamily::identity, false, {});
    g.extension = true;
    t0 = Clock::now();
    const auto mixed = synth::generate_split(seed, g);
    const double gen_ext_s = seconds_since(t0);
    std::cout << "  seed " << seed << " extended" << std::endl;
    ext[seed] = train_and_eval(mixed, seed, TransformFamily::vertical_rot_trans, true, {});
    budget += gen_s + gen_ext_s + full[seed].seconds + ext[seed].seconds;
  }

  // 4
  bool ok4 = true;
  std::ostringstream d4;
  for (auto seed : seeds) {
    const auto& r = full[seed].report;
    const double da = r.row("model").all.auc - r.row("center").all.auc;
    const double dl = r.row("center").all.l2 - r.row("model").all.l2;
    ok4 = ok4 && da >= 0.10 && dl >= 0.05;
    d4 << "seed " << seed << ": dAUC +" << fmt(da, 3) << " dL2 -" << fmt(dl, 3) << "; ";
  }
  report(4, ok4 && budget < 1200.0, d4.str() + fmt(budget, 0) + " s");

  // 5
  int wins = 0;
  std::ostringstream d5;
  for (auto seed : seeds) {
    const double a = full[seed].report.row("model").all.auc, b = ident[seed].report.row("model").all.auc;
    wins += a > b;
    d5 << "seed " << seed << ": " << fmt(a) << " vs " << fmt(b) << "; ";
  }
  report(5, wins >= 2, d5.str() + std::to_string(wins) + "/" + std::to_string(seeds.size()) + " wins");

  // 6
  bool ok6 = true;
  std::ostringstream d6;
  for (auto seed : seeds) {
    const double ap = ext[seed].report.row("model").ap;
    ok6 = ok6 && ap >= 0.80;
    d6 << "seed " << seed << ": AP " << fmt(ap) << "; ";
  }
  report(6, ok6, d6.str());

  // 7: degradation = AUC(<=15 deg bin) - AUC(|angle| >= 30 deg), averaged over seeds.
  const auto drop = [](const Run& r) {
    return r.report.bin("model", 0.0).auc - r.report.row("model").subset.auc;
  };
  double full_drop = 0, id_drop = 0;
  std::ostringstream d7;
  for (auto seed : seeds) {
    d7 << "seed " << seed << ": full " << fmt(drop(full[seed]), 3) << " id " << fmt(drop(ident[seed]), 3) << "; ";
    full_drop += drop(full[seed]) / static_cast<double>(seeds.size());
    id_drop += drop(ident[seed]) / static_cast<double>(seeds.size());
  }
  d7 << "mean drop full " << fmt(full_drop, 3) << " id " << fmt(id_drop, 3);
  report(7, std::abs(full_drop) <= 0.05 && id_drop > full_drop, d7.str());

  for (auto seed : seeds) {
    std::cout << "  sweep seed " << seed << " (AUC by |camera angle| bin):";
    for (double b : {0.0, 15.0, 30.0, 45.0})
      std::cout << "  " << static_cast<int>(b) << "+: full " << fmt(full[seed].report.bin("model", b).auc, 3)
                << " id " << fmt(ident[seed].report.bin("model", b).auc, 3);
    std::cout << std::endl;
  }
}

// ---- formats ----

void criterion8(const fs::path& work, const fs::path& trained) {
  bool ok = true;
  std::ostringstream d;

  // Checkpoint: save -> load -> save.
  const fs::path c1 = trained.empty() ? work / "fresh.gzc" : trained, c2 = work / "resaved.gzc";
  if (trained.empty()) io::save_checkpoint(model::GazeModel(learning::TrainConfig{}.model_config()), c1);
  const model::GazeModel m = io::load_checkpoint(c1);
  io::save_checkpoint(m, c2);
  const bool ck = io::read_file(c1) == io::read_file(c2);
  ok = ok && ck;
  d << "checkpoint " << (ck ? "ok" : "differs") << "; ";

  // Dataset: write -> read -> write, both plain and mixed scenes.
  bool ds = true;
  for (bool extension : {false, true}) {
    synth::GenConfig g;
    g.extension = extension;
    const auto data = synth::generate(7, g, 500);
    const fs::path p = work / "data.gzds";
    io::write_dataset(data, p);
    ds = ds && io::encode_dataset(io::read_dataset(p)) == io::read_file(p);
  }
  ok = ok && ds;
  d << "dataset " << (ds ? "ok" : "differs") << "; ";

  // PGM through OpenCV.
  const auto test = synth::generate(8, synth::GenConfig{}, 4);
  bool pgm = true;
  for (const auto& s : test) {
    const auto pred = m.predict(s);
    const fs::path p = work / "map.pgm";
    io::write_pgm(pred.density, p);
    const cv::Mat img = cv::imread(p.string(), cv::IMREAD_UNCHANGED);
    if (img.empty() || img.rows != 240 || img.cols != 240 || img.type() != CV_8UC1) {
      pgm = false;
      continue;
    }
    double peak = 0;
    for (double v : pred.density.values()) peak = std::max(peak, v);
    for (std::size_t i = 0; i < 15; ++i)
      for (std::size_t j = 0; j < 15; ++j) {
        const auto expect = static_cast<int>(std::lround(pred.density.at(i, j) / peak * 255.0));
        for (int r = 0; r < 16; ++r)
          for (int c = 0; c < 16; ++c)
            pgm = pgm && img.at<std::uint8_t>(static_cast<int>(i) * 16 + r, static_cast<int>(j) * 16 + c) == expect;
      }
  }
  ok = ok && pgm;
  d << "pgm via OpenCV " << (pgm ? "ok" : "mismatch");
  report(8, ok, d.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance run"};
  std::set<int> only;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string work_dir = (fs::temp_directory_path() / "gazecone_acceptance").string();
  app.add_option("--only", only, "criteria to run (default all)")->check(CLI::Range(1, 8));
  app.add_option("--seeds", seeds, "training seeds");
  app.add_option("--work-dir", work_dir, "scratch directory");
  CLI11_PARSE(app, argc, argv);
  const auto want = [&](int i) { return only.empty() || only.count(i); };

  const fs::path work(work_dir);
  fs::create_directories(work);
  const auto t0 = Clock::now();
  if (want(1)) criterion1();
  if (want(2)) criterion2();
  if (want(3)) criterion3();
  if (want(4) || want(5) || want(6) || want(7)) criteria4to7(seeds, work);
  if (want(8)) {
    const fs::path trained = work / ("full_" + std::to_string(seeds.front()) + ".gzc");
    criterion8(work, fs::exists(trained) ? trained : fs::path{});
  }

  std::cout << "\nsummary (" << fmt(seconds_since(t0), 0) << " s)\n";
  bool all = true;
  for (const auto& v : verdicts) {
    std::cout << "  " << v.id << " " << (v.pass ? "PASS" : "FAIL") << "\n";
    all = all && v.pass;
  }
  return all ? 0 : 1;
}

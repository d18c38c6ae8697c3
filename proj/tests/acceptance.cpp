// End-to-end acceptance checks, one PASS/FAIL line per criterion.
// Usage: canopy_acceptance [criterion...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "canopy/checkpoint.hpp"
#include "canopy/evalkit.hpp"
#include "canopy/experiment.hpp"
#include "canopy/gedi.hpp"
#include "canopy/parallel.hpp"
#include "canopy/trainer.hpp"
#include "canopy/unet.hpp"
#include "support/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace canopy;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
  double seconds = 0.0;  // work attributed to the criterion
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared desk-scale runs, keyed by (seed, label fraction, jitter, scenario).

struct RunKey {
  std::uint64_t seed;
  double fraction;
  double jitter;
  int scenario;
  auto operator<=>(const RunKey&) const = default;
};

struct CachedRun {
  RunOutcome outcome;
  double seconds = 0.0;
};

class RunCache {
 public:
  const PreparedScene& scene(double jitter) {
    auto it = scenes_.find(jitter);
    if (it == scenes_.end()) it = scenes_.emplace(jitter, prepare_scene(config(RunKey{0, 1.0, jitter, 1}))).first;
    return it->second;
  }

  static ExperimentConfig config(const RunKey& k) {
    auto c = desk_config();
    c.train.seed = k.seed;
    c.train.label_fraction = k.fraction;
    c.footprints.jitter_sigma_m = k.jitter;
    c.train.scenario = k.scenario;
    return c;
  }

  const CachedRun& get(const RunKey& k) {
    auto it = runs_.find(k);
    if (it != runs_.end()) return it->second;
    const auto& s = scene(k.jitter);
    const auto t0 = Clock::now();
    CachedRun r{run_experiment(s, config(k)), 0.0};
    r.seconds = seconds_since(t0);
    std::printf("  run seed=%llu fraction=%g jitter=%g scenario=%d: test MAE %.4f, best val MAE %.4f (%.0fs)\n",
                static_cast<unsigned long long>(k.seed), k.fraction, k.jitter, k.scenario, r.outcome.test.report.mae,
                r.outcome.best_val_mae.value_or(-1.0), r.seconds);
    std::fflush(stdout);
    return runs_.emplace(k, std::move(r)).first->second;
  }

 private:
  std::map<double, PreparedScene> scenes_;
  std::map<RunKey, CachedRun> runs_;
};

RunCache& cache() {
  static RunCache c;
  return c;
}

constexpr std::uint64_t kSeeds[3] = {1, 2, 3};
constexpr double kDeskJitter = 10.0;

// ---------------------------------------------------------------------------

Verdict criterion_gradients() {
  std::mt19937_64 rng(20240601);
  const int trials = 20;
  struct Item {
    const char* name;
    testing::GradCheck r;
  };
  std::vector<Item> items = {
      {"conv3x3", testing::check_conv(trials, 0, rng)},
      {"conv1x1", testing::check_conv(trials, 1, rng)},
      {"conv2x2s2", testing::check_conv(trials, 2, rng)},
      {"relu", testing::check_relu(trials, rng)},
      {"maxpool", testing::check_maxpool(trials, rng)},
      {"bilinear_up", testing::check_bilinear(trials, rng)},
      {"concat", testing::check_concat(trials, rng)},
      {"masked_mae", testing::check_masked_mae(trials, rng)},
  };
  Verdict v;
  v.pass = true;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& it : items) {
    v.pass = v.pass && it.r.trials >= 20 && it.r.max_rel_error < 1e-4;
    if (it.r.max_rel_error >= worst) {
      worst = it.r.max_rel_error;
      worst_name = it.name;
    }
  }
  v.detail = std::to_string(items.size()) + " ops x " + std::to_string(trials) +
             " tensors, worst rel error " + fmt("%.2e", worst) + " (" + worst_name + ") < 1e-4";
  return v;
}

Verdict criterion_architecture() {
  nn::UNetConfig paper{14, 64, 4, nn::HeadKind::Conv1x1, false};
  const auto count = nn::param_count(paper);
  auto coarse = paper;
  coarse.head = nn::HeadKind::Conv2x2Stride2;
  const auto shape = nn::output_shape(coarse, {1, 14, 256, 256});

  // The head actually halves the map on a small network too.
  nn::UNetConfig small{3, 4, 2, nn::HeadKind::Conv2x2Stride2, false};
  const auto state = nn::init_params(small, 7);
  nn::UNet<float> net(small);
  const auto y = net.forward(state.params, state.buffers, nn::Tensor4<float>({1, 3, 16, 16}, 0.5f));

  Verdict v;
  v.pass = count == 17264897 && shape.h == 128 && shape.w == 128 && y.shape().h == 8 && y.shape().w == 8;
  v.detail = "param_count " + std::to_string(count) + " (expect 17264897); 20 m head 256->" +
             std::to_string(shape.h) + "x" + std::to_string(shape.w) + ", live 16->" + std::to_string(y.shape().h);
  return v;
}

Verdict criterion_scheduler() {
  const double base = 1e-7, max = 0.1;
  const std::int64_t half = 320;
  // Hand-evaluated: start, rising midpoint, first peak, trough, and the
  // second peak at half amplitude.
  const std::vector<std::pair<std::int64_t, double>> expected = {
      {0, 1e-7}, {160, 0.05000005}, {320, 0.1}, {640, 1e-7}, {960, 0.05000005}};
  double worst = 0.0;
  for (const auto& [step, lr] : expected) worst = std::max(worst, std::abs(triangular2_lr(step, base, max, half) - lr) / lr);
  Verdict v;
  v.pass = worst < 1e-9;
  v.detail = "steps {0,160,320,640,960}, max rel deviation " + fmt("%.2e", worst) + " < 1e-9";
  return v;
}

Verdict criterion_metric_identity() {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> size(2, 200);
  std::uniform_real_distribution<double> h(0.0, 35.0), noise_sd(0.1, 5.0), bias(-3.0, 3.0), gain(0.5, 1.5);
  double worst = 0.0;
  for (int set = 0; set < 1000; ++set) {
    const int n = size(rng);
    std::normal_distribution<double> noise(0.0, noise_sd(rng));
    const double b = bias(rng), k = gain(rng);
    std::vector<PairedSample> s(static_cast<std::size_t>(n));
    double msd = 0.0;
    for (auto& p : s) {
      p.reference_m = h(rng);
      p.predicted_m = k * p.reference_m + b + noise(rng);
      msd += (p.predicted_m - p.reference_m) * (p.predicted_m - p.reference_m);
    }
    msd /= n;
    const auto m = metrics(s);
    worst = std::max(worst, std::abs(m.sb + m.sdsd + m.lcs - msd) / msd);
  }

  // Pure bias: pred = ref + 2 forces SB = 4, SDSD = LCS = 0.
  std::vector<PairedSample> biased, scaled;
  for (int i = 0; i < 50; ++i) {
    const double r = 5.0 + 0.3 * i;
    biased.push_back({r + 2.0, r, "", false});
    scaled.push_back({1.5 * (r - 12.35) + 12.35, r, "", false});
  }
  const auto mb = metrics(biased);
  // Pure scale about the mean: SB = 0, LCS = 0, SDSD = (0.5 sd_ref)^2.
  double var = 0.0;
  for (const auto& p : scaled) var += (p.reference_m - 12.35) * (p.reference_m - 12.35);
  var /= static_cast<double>(scaled.size());
  const auto ms = metrics(scaled);
  const bool bias_ok = std::abs(mb.sb - 4.0) < 1e-9 && std::abs(mb.sdsd) < 1e-9 && std::abs(mb.lcs) < 1e-9;
  const bool scale_ok = std::abs(ms.sb) < 1e-9 && std::abs(ms.lcs) < 1e-9 && std::abs(ms.sdsd - 0.25 * var) < 1e-9 * var;

  Verdict v;
  v.pass = worst < 1e-9 && bias_ok && scale_ok;
  v.detail = "1000 sets, max rel |SB+SDSD+LCS-MSD| " + fmt("%.2e", worst) + "; pure bias " +
             (bias_ok ? "ok" : "WRONG") + ", pure scale " + (scale_ok ? "ok" : "WRONG");
  return v;
}

Verdict criterion_filter() {
  FootprintRecord good;
  good.rh95_m = 12.0;
  good.rh100_m = 14.0;
  good.quality_flag = 1;
  good.toploc = 1.0;
  good.botloc = 2.0;
  good.num_detectedmodes = 3.0;
  good.max_amplitude = 600.0;
  good.noise_std = 10.0;  // ratio 60
  good.selected_algorithm = 1;

  std::vector<FootprintRecord> table;
  std::vector<bool> expect_keep;
  auto add = [&](FootprintRecord r, bool keep) {
    r.id = static_cast<std::int64_t>(table.size());
    table.push_back(r);
    expect_keep.push_back(keep);
  };
  using Field = std::optional<double> FootprintRecord::*;
  const Field nullable[] = {&FootprintRecord::toploc, &FootprintRecord::botloc, &FootprintRecord::num_detectedmodes,
                            &FootprintRecord::rh100_m};
  // Every combination of quality flag, the four null-checked fields and the
  // ratio relative to the boundary at 30 (below / exactly / above).
  const double ratios[] = {29.999, 30.0, 30.001};
  for (int q = 0; q <= 1; ++q)
    for (int mask = 0; mask < 16; ++mask)
      for (double ratio : ratios) {
        auto r = good;
        r.quality_flag = q;
        for (int f = 0; f < 4; ++f)
          if (mask & (1 << f)) r.*nullable[f] = std::nullopt;
        r.max_amplitude = ratio * 10.0;
        add(r, q == 1 && mask == 0 && ratio >= 30.0);
      }
  // Fields that take no part in the rules.
  auto r = good;
  r.rh95_m.reset();
  r.selected_algorithm.reset();
  add(r, true);

  const auto report = filter_footprints(table);
  std::set<std::int64_t> kept(report.kept.begin(), report.kept.end());
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < table.size(); ++i) wrong += (kept.count(table[i].id) > 0) != expect_keep[i] ? 1 : 0;
  Verdict v;
  v.pass = wrong == 0 && report.kept.size() + report.rejected.size() == table.size();
  v.detail = std::to_string(table.size()) + " crafted records, " + std::to_string(wrong) + " mislabeled";
  return v;
}

// Byte-exact comparison of every file under two directories.
bool same_tree(const fs::path& a, const fs::path& b, std::string* why) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) {
    *why = "file lists differ";
    return false;
  }
  for (const auto& rel : fa) {
    std::ifstream x(a / rel, std::ios::binary), y(b / rel, std::ios::binary);
    const std::string sx((std::istreambuf_iterator<char>(x)), {}), sy((std::istreambuf_iterator<char>(y)), {});
    if (sx != sy) {
      *why = rel.string() + " differs";
      return false;
    }
  }
  return !fa.empty();
}

fs::path scratch_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / "canopy_acceptance" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_run(const RunOutcome& run, const fs::path& dir) {
  write_train_log(run.trained.log, dir);
  nn::save_model(run.trained.best, dir / "checkpoint.json");
}

struct DeterminismState {
  bool train_checked = false;
  bool train_identical = false;
  std::string why;
} determinism;

Verdict criterion_end_to_end() {
  auto t0 = Clock::now();
  const auto config = RunCache::config({kSeeds[0], 1.0, kDeskJitter, 1});
  const auto& scene = cache().scene(kDeskJitter);
  const double oracle = oracle_val_mae(scene, config);
  const double threshold = 3.0 * oracle;
  const double setup = seconds_since(t0);
  const auto& run = cache().get({kSeeds[0], 1.0, kDeskJitter, 1});

  // Same seed again from scratch: logs and checkpoint must match byte for byte.
  t0 = Clock::now();
  const auto again = run_experiment(prepare_scene(config), config);
  const double rerun = seconds_since(t0);
  const auto da = scratch_dir("train_a"), db = scratch_dir("train_b");
  write_run(run.outcome, da);
  write_run(again, db);
  determinism.train_checked = true;
  determinism.train_identical = same_tree(da, db, &determinism.why);

  const double best = run.outcome.best_val_mae.value_or(INFINITY);
  const int epochs = static_cast<int>(run.outcome.trained.log.epochs.size());
  Verdict v;
  // The budget covers one training run; the rerun is determinism bookkeeping.
  v.seconds = setup + run.seconds;
  v.pass = best < threshold && epochs <= 30 && determinism.train_identical && v.seconds < 600.0;
  v.detail = "oracle val MAE " + fmt("%.4f", oracle) + ", T = " + fmt("%.4f", threshold) + "; best val MAE " +
             fmt("%.4f", best) + " after " + std::to_string(epochs) + " epochs; rerun " +
             (determinism.train_identical ? "bit-identical" : "DIFFERS: " + determinism.why) + " (rerun " +
             fmt("%.0fs", rerun) + ")";
  return v;
}

struct Tally {
  int wins = 0;
  std::string per_seed;
  double seconds = 0.0;
};

Verdict majority(const Tally& t, double budget_s, const std::string& what) {
  Verdict v;
  v.seconds = t.seconds;
  v.pass = t.wins >= 2 && t.seconds < budget_s;
  v.detail = what + " held for " + std::to_string(t.wins) + "/3 seeds [" + t.per_seed + "]";
  return v;
}

Verdict criterion_fraction_trend() {
  Tally t;
  for (auto seed : kSeeds) {
    double mae[3];
    const double fractions[3] = {1.0, 0.1, 0.01};
    for (int i = 0; i < 3; ++i) {
      const auto& r = cache().get({seed, fractions[i], kDeskJitter, 1});
      mae[i] = r.outcome.test.report.mae;
      t.seconds += r.seconds;
    }
    const bool ok = mae[0] <= mae[1] && mae[1] <= mae[2];
    t.wins += ok ? 1 : 0;
    if (!t.per_seed.empty()) t.per_seed += "; ";
    t.per_seed += fmt("%.3f", mae[0]) + " -> " + fmt("%.3f", mae[1]) + " -> " + fmt("%.3f", mae[2]) + (ok ? "" : " x");
  }
  return majority(t, 1800.0, "test MAE non-decreasing over fractions 1, 0.1, 0.01");
}

Verdict criterion_jitter() {
  Tally t;
  for (auto seed : kSeeds) {
    const auto& r10 = cache().get({seed, 1.0, 10.0, 1});
    const auto& r20 = cache().get({seed, 1.0, 20.0, 1});
    t.seconds += r10.seconds + r20.seconds;
    const bool ok = r20.outcome.test.report.mae >= r10.outcome.test.report.mae;
    t.wins += ok ? 1 : 0;
    if (!t.per_seed.empty()) t.per_seed += "; ";
    t.per_seed += "s10 " + fmt("%.3f", r10.outcome.test.report.mae) + " s20 " +
                  fmt("%.3f", r20.outcome.test.report.mae) + (ok ? "" : " x");
  }
  return majority(t, 1200.0, "test MAE at sigma 20 m >= sigma 10 m");
}

Verdict criterion_scenarios() {
  Tally t;
  for (auto seed : kSeeds) {
    double mae[3];
    const int scenarios[3] = {1, 6, 7};
    for (int i = 0; i < 3; ++i) {
      const auto& r = cache().get({seed, 1.0, kDeskJitter, scenarios[i]});
      mae[i] = r.outcome.test.report.mae;
      t.seconds += r.seconds;
    }
    const bool ok = mae[0] <= mae[1] && mae[0] <= mae[2];
    t.wins += ok ? 1 : 0;
    if (!t.per_seed.empty()) t.per_seed += "; ";
    t.per_seed += "s1 " + fmt("%.3f", mae[0]) + " s6 " + fmt("%.3f", mae[1]) + " s7 " + fmt("%.3f", mae[2]) +
                  (ok ? "" : " x");
  }
  return majority(t, 1800.0, "scenario 1 test MAE <= scenarios 6 and 7");
}

Verdict criterion_chm() {
  const auto t0 = Clock::now();
  const auto c = desk_config().chm;
  const auto truth = gen_scene(c.scene);
  const auto cloud = gen_pointcloud(truth, {}, c.cloud, c.seed);
  const auto out = run_chm_chain(cloud.points, fine_grid_for(c.scene, c.fine_cell_m), c.scene.grid(), c.cloth,
                                 c.laplace);
  std::size_t bare = 0, bare_hit = 0, top = 0, top_ground = 0;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const bool ground = out.cloth.labels[i] == PointClass::Ground;
    if (cloud.truth[i] == PointClass::NonGround) {
      ++top;
      top_ground += ground ? 1 : 0;
      continue;
    }
    const auto cell = truth.tree_cover.spec().cell_of({cloud.points[i].x_m, cloud.points[i].y_m});
    if (cell && truth.tree_cover.at(0, cell->row, cell->col) == 0.0f) {
      ++bare;
      bare_hit += ground ? 1 : 0;
    }
  }
  const double recall = bare ? static_cast<double>(bare_hit) / static_cast<double>(bare) : 0.0;

  double se = 0.0;
  std::size_t n = 0;
  const auto& g = truth.height.spec();
  for (int r = 0; r < g.height; ++r)
    for (int col = 0; col < g.width; ++col) {
      const double d = out.chm_10m.at(0, r, col) - truth.height.at(0, r, col);
      se += d * d;
      ++n;
    }
  const double rmse = std::sqrt(se / static_cast<double>(n));

  // Planar ramp sampled at cell centers: the boundary ring plus a sparse
  // random interior subset.
  GridSpec ramp;
  ramp.origin_x_m = 500.0;
  ramp.origin_y_m = 1200.0;
  ramp.cell_size_m = 0.8;
  ramp.width = 150;
  ramp.height = 120;
  auto plane = [](double x, double y) { return 40.0 + 0.06 * (x - 500.0) - 0.03 * (1200.0 - y); };
  std::mt19937_64 rng(4);
  std::bernoulli_distribution pick(0.03);
  PointCloud pts;
  for (int r = 0; r < ramp.height; ++r)
    for (int col = 0; col < ramp.width; ++col) {
      const bool edge = r == 0 || col == 0 || r == ramp.height - 1 || col == ramp.width - 1;
      if (!edge && !pick(rng)) continue;
      const auto p = ramp.cell_center(r, col);
      pts.push_back({p.x, p.y, plane(p.x, p.y)});
    }
  const auto dtm = laplace_dtm(pts, ramp, c.laplace);
  double ramp_err = 0.0;
  for (int r = 0; r < ramp.height; ++r)
    for (int col = 0; col < ramp.width; ++col) {
      const auto p = ramp.cell_center(r, col);
      ramp_err = std::max(ramp_err, std::abs(dtm.dtm.at(0, r, col) - plane(p.x, p.y)));
    }

  Verdict v;
  v.seconds = seconds_since(t0);
  v.pass = recall >= 0.99 && top_ground == 0 && ramp_err <= 1e-3 && rmse <= 0.5 && v.seconds < 120.0;
  v.detail = "bare ground recall " + fmt("%.4f", recall) + ", ground labels on stand tops " +
             std::to_string(top_ground) + "/" + std::to_string(top) + ", ramp max error " + fmt("%.2e", ramp_err) +
             " m, 10 m CHM RMSE " + fmt("%.3f", rmse) + " m";
  return v;
}

Verdict criterion_determinism() {
  // Sweeps are rerun on a short schedule; the full-length train run is
  // compared by the end-to-end criterion.
  const auto t0 = Clock::now();
  auto c = desk_config();
  c.train.seed = 5;
  c.train.max_epochs = 2;
  c.train.batches_per_epoch = 4;
  std::vector<fs::path> dirs;
  for (int pass = 0; pass < 2; ++pass) {
    dirs.push_back(scratch_dir("sweeps_" + std::to_string(pass)));
    scenario_sweep(c, dirs.back() / "scenario");
    subsample_sweep(c, kSubsampleFractions, dirs.back() / "subsample");
  }
  std::string why;
  const bool ok = same_tree(dirs[0], dirs[1], &why);
  Verdict v;
  v.seconds = seconds_since(t0);
  if (!determinism.train_checked) {
    v.pass = false;
    v.detail = "train rerun not performed (run criterion 6)";
    return v;
  }
  v.pass = ok && determinism.train_identical;
  v.detail = std::string("train logs+checkpoint ") + (determinism.train_identical ? "identical" : "differ") +
             "; scenario and subsample sweep outputs " + (ok ? "identical" : "differ: " + why);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  set_num_threads(1);
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  if (only.count(11)) only.insert(6);

  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"gradient correctness", criterion_gradients},
      {"architecture fidelity", criterion_architecture},
      {"scheduler fidelity", criterion_scheduler},
      {"metric identity", criterion_metric_identity},
      {"filter fidelity", criterion_filter},
      {"end-to-end learning", criterion_end_to_end},
      {"label-fraction trend", criterion_fraction_trend},
      {"jitter sensitivity", criterion_jitter},
      {"scenario ordering", criterion_scenarios},
      {"CHM chain", criterion_chm},
      {"determinism", criterion_determinism},
  };
  std::vector<std::string> lines;
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("threw: ") + e.what();
    }
    if (v.seconds == 0.0) v.seconds = seconds_since(t0);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "[%s] %2d ", v.pass ? "PASS" : "FAIL", id);
    lines.push_back(std::string(buf) + criteria[i].first + ": " + v.detail + fmt(" (%.1fs)", v.seconds));
    std::printf("%s\n", lines.back().c_str());
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  std::printf("\nsummary\n");
  for (const auto& l : lines) std::printf("%s\n", l.c_str());
  return failed == 0 ? 0 : 1;
}

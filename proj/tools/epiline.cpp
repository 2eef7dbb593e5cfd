// epiline command-line driver. Every stage reads the config, applies --seed/--out overrides
// and exchanges artifacts through the output directory.
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "epiline/error.hpp"
#include "epiline/pipeline.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace epiline;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitPartial = 2;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

PipelineConfig load_config(const Options& opt) {
  PipelineConfig config = config_from_json(read_text_file(opt.config_path));
  if (opt.seed) config.seed = *opt.seed;
  if (opt.out) config.out_dir = *opt.out;
  return config;
}

std::string pair_tag(int a, int b) { return std::to_string(a) + "_" + std::to_string(b); }
fs::path pack_path(const fs::path& out, int c) { return out / ("cam" + std::to_string(c) + ".pack"); }

/// Videos persisted by `simulate` take precedence over the config's sources.
LoadedCameras stage_cameras(const PipelineConfig& config) {
  if (!fs::exists(pack_path(config.out_dir, 0))) return load_cameras(config);
  LoadedCameras cams;
  for (int c = 0; fs::exists(pack_path(config.out_dir, c)); ++c) {
    cams.videos.emplace_back(load_packed(pack_path(config.out_dir, c)));
    cams.errors.emplace_back();
  }
  return cams;
}

int report_camera_errors(const LoadedCameras& cams) {
  int failed = 0;
  for (std::size_t c = 0; c < cams.videos.size(); ++c)
    if (!cams.videos[c]) {
      std::cerr << "camera " << c << ": " << cams.errors[c] << "\n";
      ++failed;
    }
  return failed;
}

void write_correspondences(const fs::path& path, std::span<const std::pair<HomPoint2, HomPoint2>> pairs) {
  std::ostringstream out;
  out << "ax,ay,bx,by\n" << std::setprecision(17);
  for (const auto& [x, xp] : pairs) {
    const auto a = x.pixel();
    const auto b = xp.pixel();
    out << a.x() << ',' << a.y() << ',' << b.x() << ',' << b.y() << '\n';
  }
  write_text_file(path, out.str());
}

std::vector<std::pair<HomPoint2, HomPoint2>> read_correspondences(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::pair<HomPoint2, HomPoint2>> pairs;
  std::string row;
  while (std::getline(in, row)) {
    if (row.empty() || row.rfind("ax", 0) == 0) continue;
    std::replace(row.begin(), row.end(), ',', ' ');
    std::istringstream fields(row);
    double ax, ay, bx, by;
    if (!(fields >> ax >> ay >> bx >> by)) throw FormatError("malformed correspondence row in " + path.string());
    pairs.emplace_back(HomPoint2::from_pixel(ax, ay), HomPoint2::from_pixel(bx, by));
  }
  return pairs;
}

FundamentalMatrix read_f_file(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  return read_fundamental(in);
}

std::string f_text(const FundamentalMatrix& f) {
  std::ostringstream out;
  write_fundamental(out, f);
  return out.str();
}

int run_simulate(const PipelineConfig& config) {
  if (!config.scenario) throw ConfigError("simulate needs a \"scenario\" section");
  const LoadedCameras cams = load_cameras(config);
  const auto& sim = *cams.sim;
  fs::create_directories(config.out_dir);
  for (std::size_t c = 0; c < sim.videos.size(); ++c) save_packed(sim.videos[c], pack_path(config.out_dir, static_cast<int>(c)));
  for (const auto& in : pair_inputs(config, cams)) {
    const std::string tag = pair_tag(in.cam_a, in.cam_b);
    write_text_file(config.out_dir / ("F_truth_" + tag + ".txt"), f_text(*in.f_truth));
    write_correspondences(config.out_dir / ("gt_" + tag + ".csv"), in.gt_pairs);
  }
  write_text_file(config.out_dir / "scene.json", scene_to_json(sim));
  return kExitOk;
}

int run_barcodes(const PipelineConfig& config) {
  const LoadedCameras cams = stage_cameras(config);
  const int failed = report_camera_errors(cams);
  for (std::size_t c = 0; c < cams.videos.size(); ++c) {
    if (!cams.videos[c]) continue;
    const CameraLines lines = extract_lines(*cams.videos[c], config, line_seed(config.seed, static_cast<int>(c)));
    std::ostringstream csv, codes;
    write_lines_csv(csv, lines.sampled);
    std::vector<int> ids;
    for (const auto& l : lines.lines) ids.push_back(l.id);
    write_barcodes(codes, ids, lines.barcodes);
    write_text_file(config.out_dir / ("lines_cam" + std::to_string(c) + ".csv"), csv.str());
    write_text_file(config.out_dir / ("barcodes_cam" + std::to_string(c) + ".txt"), codes.str());
  }
  return failed ? kExitPartial : kExitOk;
}

CameraLines reload_lines(const fs::path& out, int c, const SilhouetteVideo& video) {
  CameraLines lines;
  lines.rect = {video.width(), video.height()};
  std::istringstream csv(read_text_file(out / ("lines_cam" + std::to_string(c) + ".csv")));
  lines.sampled = read_lines_csv(csv);
  std::istringstream codes(read_text_file(out / ("barcodes_cam" + std::to_string(c) + ".txt")));
  for (auto& [id, code] : read_barcodes(codes)) {
    if (id < 0 || id >= static_cast<int>(lines.sampled.size()) || lines.sampled[id].id != id)
      throw FormatError("barcode id " + std::to_string(id) + " has no sampled line");
    lines.lines.push_back(lines.sampled[id]);
    lines.barcodes.push_back(std::move(code));
  }
  return lines;
}

/// Runs `body` for every camera pair; failures are reported and counted.
template <typename Body>
int for_each_pair(const LoadedCameras& cams, Body body) {
  int failed = 0;
  const int n = static_cast<int>(cams.videos.size());
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      try {
        if (!cams.videos[a] || !cams.videos[b]) throw IoError("camera input missing");
        body(a, b, *cams.videos[a], *cams.videos[b]);
      } catch (const Error& e) {
        std::cerr << "pair " << pair_tag(a, b) << ": " << e.what() << "\n";
        ++failed;
      }
    }
  return failed ? kExitPartial : kExitOk;
}

int run_match(const PipelineConfig& config) {
  const LoadedCameras cams = stage_cameras(config);
  std::vector<std::optional<HeatMap>> heats(cams.videos.size());
  return for_each_pair(cams, [&](int a, int b, const SilhouetteVideo& va, const SilhouetteVideo& vb) {
    for (int c : {a, b})
      if (!heats[c]) heats[c] = compute_heat_map(*cams.videos[c]);
    const CameraLines la = reload_lines(config.out_dir, a, va);
    const CameraLines lb = reload_lines(config.out_dir, b, vb);
    const MatchOutput match = match_cameras(la, lb, *heats[a], *heats[b], config);
    std::ostringstream csv;
    write_candidates_csv(csv, match.filtered);
    write_text_file(config.out_dir / ("candidates_" + pair_tag(a, b) + ".csv"), csv.str());
  });
}

std::vector<CandidatePair> reload_candidates(const fs::path& out, int a, int b) {
  std::istringstream csv(read_text_file(out / ("candidates_" + pair_tag(a, b) + ".csv")));
  return read_candidates_csv(csv);
}

int run_estimate(const PipelineConfig& config) {
  const LoadedCameras cams = stage_cameras(config);
  return for_each_pair(cams, [&](int a, int b, const SilhouetteVideo& va, const SilhouetteVideo& vb) {
    const ImageRect rect_a{va.width(), va.height()};
    const ImageRect rect_b{vb.width(), vb.height()};
    RansacConfig ransac = config.ransac;
    ransac.seed = ransac_seed(config.seed, a, b);
    EstimationResult est = estimate_fundamental(reload_candidates(config.out_dir, a, b), rect_a, rect_b, ransac);
    est = detect_degeneracy(std::move(est), rect_a, config.degeneracy_span_rad,
                            config.degeneracy_min_inlier_fraction);
    const std::string tag = pair_tag(a, b);
    write_text_file(config.out_dir / ("F_est_" + tag + ".txt"), f_text(est.f));
    write_text_file(config.out_dir / ("estimate_" + tag + ".json"), estimation_to_json(est, rect_a));
  });
}

int run_evaluate(const PipelineConfig& config) {
  const LoadedCameras cams = stage_cameras(config);
  EvaluationReport report;
  const int n = static_cast<int>(cams.videos.size());
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      PairReport pr;
      pr.cam_a = a;
      pr.cam_b = b;
      const std::string tag = pair_tag(a, b);
      try {
        if (!cams.videos[a] || !cams.videos[b]) throw IoError("camera input missing");
        const ImageRect rect_a{cams.videos[a]->width(), cams.videos[a]->height()};
        const ImageRect rect_b{cams.videos[b]->width(), cams.videos[b]->height()};
        std::optional<FundamentalMatrix> truth;
        std::vector<std::pair<HomPoint2, HomPoint2>> gt;
        const fs::path truth_file = config.out_dir / ("F_truth_" + tag + ".txt");
        if (fs::exists(truth_file)) truth = read_f_file(truth_file);
        for (const auto& t : config.truths)
          if (t.cam_a == a && t.cam_b == b) truth = read_f_file(t.f_path);
        const fs::path gt_file = config.out_dir / ("gt_" + tag + ".csv");
        if (fs::exists(gt_file)) {
          gt = read_correspondences(gt_file);
        } else if (truth) {
          Rng rng(truth_seed(config.seed, a, b));
          gt = correspondences_from_f(*truth, rect_a, rect_b, config.gt_correspondences, rng);
        }

        const auto cands = reload_candidates(config.out_dir, a, b);
        pr.candidates_after_filter = static_cast<int>(cands.size());
        if (truth) pr.true_positive_rate = true_positive_rate(cands, *truth, rect_a, rect_b, config.true_positive_area_factor);

        const auto est = nlohmann::json::parse(read_text_file(config.out_dir / ("estimate_" + tag + ".json")));
        pr.inliers = static_cast<int>(est.at("inlier_pairs").size());
        pr.iterations = est.at("iterations_run").get<int>();
        pr.degenerate = est.at("degenerate").get<bool>();
        pr.degenerate_reason = est.at("reason").get<std::string>();
        pr.pencil_span_rad = est.at("pencil_span_rad").get<double>();
        if (!gt.empty()) pr.distance = evaluate_f(read_f_file(config.out_dir / ("F_est_" + tag + ".txt")), gt);
        pr.ok = true;
      } catch (const nlohmann::json::exception& e) {
        pr.error = std::string("estimate JSON: ") + e.what();
      } catch (const Error& e) {
        pr.error = e.what();
      }
      if (!pr.ok) std::cerr << "pair " << tag << ": " << pr.error << "\n";
      report.pairs.push_back(pr);
    }
  finalize_report(report);
  write_text_file(config.out_dir / "report.json", report_to_json(report));
  write_text_file(config.out_dir / "report.csv", report_to_csv(report));
  for (const auto& p : report.pairs)
    if (!p.ok) return kExitPartial;
  return kExitOk;
}

int run_full(const PipelineConfig& config) {
  const EvaluationReport report = run_pipeline(config, true);
  int failed = 0;
  for (const auto& p : report.pairs) {
    if (!p.ok) {
      std::cerr << "pair " << pair_tag(p.cam_a, p.cam_b) << ": " << p.error << "\n";
      ++failed;
    }
  }
  std::cout << "pairs " << report.pairs.size() << ", good " << report.good_pairs << ", mean distance "
            << report.mean_distance << " px, mean true-positive rate " << report.mean_true_positive_rate << "\n";
  return failed ? kExitPartial : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fundamental matrix from motion barcodes of epipolar lines"};
  app.require_subcommand(1);
  Options opt;
  std::string stage;
  const std::vector<std::pair<const char*, const char*>> stages = {
      {"simulate", "render a synthetic scenario: packed masks, true F, correspondences, scene"},
      {"barcodes", "sample border lines and write their motion barcodes"},
      {"match", "correlate barcodes and write filtered candidate pairs"},
      {"estimate", "run RANSAC on the candidates and write F estimates"},
      {"evaluate", "score estimates against ground truth and write the report"},
      {"pipeline", "run every stage in memory"}};
  for (const auto& [name, help] : stages) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config_path, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "master seed (overrides the config)");
    sub->add_option("--out", opt.out, "output directory (overrides the config)");
    sub->callback([&stage, name = std::string(name)] { stage = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitFatal;
  }

  try {
    const PipelineConfig config = load_config(opt);
    if (stage == "simulate") return run_simulate(config);
    if (stage == "barcodes") return run_barcodes(config);
    if (stage == "match") return run_match(config);
    if (stage == "estimate") return run_estimate(config);
    if (stage == "evaluate") return run_evaluate(config);
    return run_full(config);
  } catch (const std::exception& e) {
    std::cerr << "epiline " << stage << ": " << e.what() << "\n";
    return kExitFatal;
  }
}

#include "epiline/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>

#include "epiline/error.hpp"
#include "json.hpp"

namespace epiline {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!keys.count(key)) throw ConfigError("unknown config key '" + key + "' in " + where);
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json vec3(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

json mat3(const Eigen::Matrix3d& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back(json::array({m(r, 0), m(r, 1), m(r, 2)}));
  return rows;
}

json point_json(const HomPoint2& p) { return json::array({p.h.x(), p.h.y(), p.h.z()}); }

ScenarioConfig scenario_from_json(const json& j) {
  reject_unknown(j,
                 {"kind", "num_frames", "cube_count_min", "cube_count_max", "half_extent_min", "half_extent_max",
                  "speed_min", "speed_max", "path_fraction", "flip_noise", "num_cameras", "width", "height",
                  "focal_px", "ring_radius", "ring_arc_deg", "thin_cubes", "volume_lo", "volume_hi"},
                 "scenario");
  ScenarioConfig s = j.value("thin_cubes", false) ? ScenarioConfig::thin_cubes() : ScenarioConfig{};
  if (j.contains("kind")) s.kind = scenario_from_string(j.at("kind").get<std::string>());
  read_opt(j, "num_frames", s.num_frames);
  read_opt(j, "cube_count_min", s.cube_count_min);
  read_opt(j, "cube_count_max", s.cube_count_max);
  read_opt(j, "half_extent_min", s.half_extent_min);
  read_opt(j, "half_extent_max", s.half_extent_max);
  read_opt(j, "speed_min", s.speed_min);
  read_opt(j, "speed_max", s.speed_max);
  read_opt(j, "path_fraction", s.path_fraction);
  read_opt(j, "flip_noise", s.flip_noise);
  read_opt(j, "num_cameras", s.num_cameras);
  read_opt(j, "width", s.width);
  read_opt(j, "height", s.height);
  read_opt(j, "focal_px", s.focal_px);
  read_opt(j, "ring_radius", s.ring_radius);
  read_opt(j, "ring_arc_deg", s.ring_arc_deg);
  if (j.contains("volume_lo")) {
    const auto v = j.at("volume_lo").get<std::vector<double>>();
    if (v.size() != 3) throw ConfigError("volume_lo needs 3 numbers");
    s.volume.lo = {v[0], v[1], v[2]};
  }
  if (j.contains("volume_hi")) {
    const auto v = j.at("volume_hi").get<std::vector<double>>();
    if (v.size() != 3) throw ConfigError("volume_hi needs 3 numbers");
    s.volume.hi = {v[0], v[1], v[2]};
  }
  if (s.path_fraction < 0 || s.path_fraction > 1) throw ConfigError("path_fraction must lie in [0, 1]");
  return s;
}

void validate(const PipelineConfig& c) {
  if (c.lines_per_camera < 1 || c.mutual_k < 1 || c.candidate_limit < 1 || c.gt_correspondences < 1)
    throw ConfigError("counts must be >= 1");
  if (!(0 <= c.q_min && c.q_min < c.q_max && c.q_max <= 1)) throw ConfigError("need 0 <= q_min < q_max <= 1");
  if (c.raster_thickness < 1) throw ConfigError("raster_thickness must be >= 1");
  if (c.hough.hot_fraction < 0 || c.hough.hot_fraction > 1) throw ConfigError("hot_fraction must lie in [0, 1]");
  if (c.ransac.max_iterations < 1 || c.ransac.inlier_area_threshold_px <= 0)
    throw ConfigError("invalid RANSAC settings");
  if (c.ransac.early_exit_confidence < 0 || c.ransac.early_exit_confidence >= 1)
    throw ConfigError("early_exit_confidence must lie in [0, 1)");
  if (c.true_positive_area_factor <= 0) throw ConfigError("true_positive_area_factor must be positive");
  if (c.degeneracy_min_inlier_fraction < 0 || c.degeneracy_min_inlier_fraction >= 1)
    throw ConfigError("degeneracy_min_inlier_fraction must be in [0, 1)");
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string pair_tag(int a, int b) { return std::to_string(a) + "_" + std::to_string(b); }

}  // namespace

PipelineConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j,
                 {"seed", "out_dir", "scenario", "inputs", "ground_truth", "lines_per_camera", "informative",
                  "mutual_k", "candidate_limit", "raster_thickness", "traffic", "ransac", "degeneracy_span_rad",
                  "degeneracy_min_inlier_fraction", "true_positive_area_factor", "gt_correspondences", "svg"},
                 "config");
  PipelineConfig c;
  try {
    read_opt(j, "seed", c.seed);
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("scenario")) c.scenario = scenario_from_json(j.at("scenario"));
    if (j.contains("inputs"))
      for (const auto& in : j.at("inputs")) {
        reject_unknown(in, {"masks", "first", "last", "packed"}, "inputs");
        CameraInput ci;
        read_opt(in, "masks", ci.masks);
        read_opt(in, "packed", ci.packed);
        read_opt(in, "first", ci.frames.first);
        read_opt(in, "last", ci.frames.last);
        if (ci.masks.empty() == ci.packed.empty()) throw ConfigError("each input needs exactly one of masks/packed");
        c.inputs.push_back(ci);
      }
    if (j.contains("ground_truth"))
      for (const auto& t : j.at("ground_truth")) {
        reject_unknown(t, {"cam_a", "cam_b", "f"}, "ground_truth");
        c.truths.push_back({t.at("cam_a").get<int>(), t.at("cam_b").get<int>(), t.at("f").get<std::string>()});
      }
    read_opt(j, "lines_per_camera", c.lines_per_camera);
    if (j.contains("informative")) {
      const auto& inf = j.at("informative");
      reject_unknown(inf, {"q_min", "q_max"}, "informative");
      read_opt(inf, "q_min", c.q_min);
      read_opt(inf, "q_max", c.q_max);
    }
    read_opt(j, "mutual_k", c.mutual_k);
    read_opt(j, "candidate_limit", c.candidate_limit);
    read_opt(j, "raster_thickness", c.raster_thickness);
    if (j.contains("traffic")) {
      const auto& t = j.at("traffic");
      reject_unknown(t,
                     {"enabled", "hot_fraction", "rho_step", "theta_step_deg", "peak_min_support", "max_lines",
                      "rho_tol_px", "theta_tol_rad"},
                     "traffic");
      read_opt(t, "enabled", c.traffic_filter);
      read_opt(t, "hot_fraction", c.hough.hot_fraction);
      read_opt(t, "rho_step", c.hough.rho_step);
      if (t.contains("theta_step_deg")) c.hough.theta_step = t.at("theta_step_deg").get<double>() * std::numbers::pi / 180.0;
      read_opt(t, "peak_min_support", c.hough.peak_min_support);
      read_opt(t, "max_lines", c.hough.max_lines);
      read_opt(t, "rho_tol_px", c.overlap.rho_tol_px);
      read_opt(t, "theta_tol_rad", c.overlap.theta_tol_rad);
    }
    if (j.contains("ransac")) {
      const auto& r = j.at("ransac");
      reject_unknown(r, {"max_iterations", "inlier_area_threshold_px", "min_pair_separation_deg", "early_exit_confidence"},
                     "ransac");
      read_opt(r, "max_iterations", c.ransac.max_iterations);
      read_opt(r, "inlier_area_threshold_px", c.ransac.inlier_area_threshold_px);
      read_opt(r, "min_pair_separation_deg", c.ransac.min_pair_separation_deg);
      read_opt(r, "early_exit_confidence", c.ransac.early_exit_confidence);
    }
    read_opt(j, "degeneracy_span_rad", c.degeneracy_span_rad);
    read_opt(j, "degeneracy_min_inlier_fraction", c.degeneracy_min_inlier_fraction);
    read_opt(j, "true_positive_area_factor", c.true_positive_area_factor);
    read_opt(j, "gt_correspondences", c.gt_correspondences);
    read_opt(j, "svg", c.write_svg);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config value has the wrong type: ") + e.what());
  }
  if (!c.scenario && c.inputs.empty()) throw ConfigError("config needs a scenario or camera inputs");
  validate(c);
  return c;
}

std::string config_to_json(const PipelineConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir.string();
  j["lines_per_camera"] = c.lines_per_camera;
  j["informative"] = {{"q_min", c.q_min}, {"q_max", c.q_max}};
  j["mutual_k"] = c.mutual_k;
  j["candidate_limit"] = c.candidate_limit;
  j["raster_thickness"] = c.raster_thickness;
  j["traffic"] = {{"enabled", c.traffic_filter},
                  {"hot_fraction", c.hough.hot_fraction},
                  {"rho_step", c.hough.rho_step},
                  {"theta_step_deg", c.hough.theta_step * 180.0 / std::numbers::pi},
                  {"peak_min_support", c.hough.peak_min_support},
                  {"max_lines", c.hough.max_lines},
                  {"rho_tol_px", c.overlap.rho_tol_px},
                  {"theta_tol_rad", c.overlap.theta_tol_rad}};
  j["ransac"] = {{"max_iterations", c.ransac.max_iterations},
                 {"inlier_area_threshold_px", c.ransac.inlier_area_threshold_px},
                 {"min_pair_separation_deg", c.ransac.min_pair_separation_deg},
                 {"early_exit_confidence", c.ransac.early_exit_confidence}};
  j["degeneracy_span_rad"] = c.degeneracy_span_rad;
  j["degeneracy_min_inlier_fraction"] = c.degeneracy_min_inlier_fraction;
  j["true_positive_area_factor"] = c.true_positive_area_factor;
  j["gt_correspondences"] = c.gt_correspondences;
  j["svg"] = c.write_svg;
  if (c.scenario) {
    const auto& s = *c.scenario;
    j["scenario"] = {{"kind", to_string(s.kind)},         {"num_frames", s.num_frames},
                     {"cube_count_min", s.cube_count_min}, {"cube_count_max", s.cube_count_max},
                     {"half_extent_min", s.half_extent_min}, {"half_extent_max", s.half_extent_max},
                     {"speed_min", s.speed_min},           {"speed_max", s.speed_max},
                     {"path_fraction", s.path_fraction},   {"flip_noise", s.flip_noise},
                     {"num_cameras", s.num_cameras},       {"width", s.width},
                     {"height", s.height},                 {"focal_px", s.focal_px},
                     {"ring_radius", s.ring_radius},       {"ring_arc_deg", s.ring_arc_deg},
                     {"volume_lo", vec3(s.volume.lo)},     {"volume_hi", vec3(s.volume.hi)}};
  }
  for (const auto& in : c.inputs) {
    json e;
    if (!in.masks.empty()) e = {{"masks", in.masks}, {"first", in.frames.first}, {"last", in.frames.last}};
    else e = {{"packed", in.packed}};
    j["inputs"].push_back(e);
  }
  for (const auto& t : c.truths) j["ground_truth"].push_back({{"cam_a", t.cam_a}, {"cam_b", t.cam_b}, {"f", t.f_path}});
  return j.dump(2);
}

std::uint64_t line_seed(std::uint64_t seed, int camera) { return substream_seed(seed, 0x11e5'0000ULL + camera); }
std::uint64_t ransac_seed(std::uint64_t seed, int cam_a, int cam_b) {
  return substream_seed(seed, 0x4a5c'0000ULL + 1024ULL * cam_a + cam_b);
}
std::uint64_t truth_seed(std::uint64_t seed, int cam_a, int cam_b) {
  return substream_seed(seed, 0x9700'0000ULL + 1024ULL * cam_a + cam_b);
}

CameraLines extract_lines(const SilhouetteVideo& video, const PipelineConfig& config, std::uint64_t seed, Exec exec) {
  CameraLines out;
  out.rect = {video.width(), video.height()};
  Rng rng(seed);
  out.sampled = sample_border_lines(out.rect, config.lines_per_camera, rng);
  std::vector<std::vector<PixelCoord>> rasters(out.sampled.size());
  for (std::size_t i = 0; i < out.sampled.size(); ++i)
    rasters[i] = raster_line_pixels(out.sampled[i], out.rect, config.raster_thickness);
  const auto barcodes = compute_barcodes(video, rasters, exec);
  for (std::size_t i = 0; i < out.sampled.size(); ++i)
    if (!rasters[i].empty() && is_informative(barcodes[i], config.q_min, config.q_max)) {
      out.lines.push_back(out.sampled[i]);
      out.barcodes.push_back(barcodes[i]);
    }
  return out;
}

MatchOutput match_cameras(const CameraLines& a, const CameraLines& b, const HeatMap& heat_a, const HeatMap& heat_b,
                          const PipelineConfig& config, Exec exec) {
  MatchOutput out;
  if (a.lines.empty() || b.lines.empty()) throw InsufficientCandidatesError("a camera has no informative lines");
  std::vector<CandidatePair> mutual;
  for (const auto& p : mutual_topk_streaming(a.barcodes, b.barcodes, config.mutual_k, exec))
    mutual.push_back({a.lines[p.a], b.lines[p.b], p.score});
  out.selected = select_top_candidates(std::move(mutual), config.candidate_limit);
  if (config.traffic_filter) {
    out.traffic_a = detect_traffic_lines(heat_a, config.hough);
    out.traffic_b = detect_traffic_lines(heat_b, config.hough);
    out.filtered = filter_traffic_candidates(out.selected, out.traffic_a, out.traffic_b, a.rect, b.rect, config.overlap);
  } else {
    out.filtered = out.selected;
  }
  return out;
}

bool is_true_line(const HomLine2& line, const HomPoint2& epipole, const ImageRect& rect, double factor) {
  const auto seg = clip_line_to_rect(line, rect);
  if (!seg) return false;
  try {
    const HomLine2 truth = line_through(HomPoint2::from_pixel(seg->midpoint()), epipole);
    return area_between_lines(line, truth, rect) < factor * rect.length();
  } catch (const Error&) {
    return false;
  }
}

double true_positive_rate(std::span<const CandidatePair> cands, const FundamentalMatrix& f_truth,
                          const ImageRect& rect_a, const ImageRect& rect_b, double factor) {
  if (cands.empty()) return 0.0;
  const auto [e, e_prime] = epipoles_of(f_truth);
  int good = 0;
  for (const auto& c : cands)
    good += is_true_line(c.line_a.line, e, rect_a, factor) && is_true_line(c.line_b.line, e_prime, rect_b, factor);
  return static_cast<double>(good) / static_cast<double>(cands.size());
}

DistanceSummary evaluate_f(const FundamentalMatrix& f, std::span<const std::pair<HomPoint2, HomPoint2>> gt_pairs) {
  if (gt_pairs.empty()) throw DomainError("evaluate_f needs at least one correspondence");
  DistanceSummary s;
  std::vector<double> d;
  for (const auto& [x, xp] : gt_pairs) {
    try {
      d.push_back(symmetric_epipolar_distance(f, x, xp));
    } catch (const DomainError&) {
      ++s.errors;
    }
  }
  s.count = static_cast<int>(d.size());
  if (d.empty()) return s;
  double sum = 0.0;
  for (double v : d) sum += v;
  s.mean = sum / static_cast<double>(d.size());
  s.max = *std::max_element(d.begin(), d.end());
  std::sort(d.begin(), d.end());
  s.median = d.size() % 2 ? d[d.size() / 2] : 0.5 * (d[d.size() / 2 - 1] + d[d.size() / 2]);
  return s;
}

std::vector<std::pair<HomPoint2, HomPoint2>> correspondences_from_f(const FundamentalMatrix& f,
                                                                    const ImageRect& rect_a,
                                                                    const ImageRect& rect_b, int count, Rng& rng) {
  std::vector<std::pair<HomPoint2, HomPoint2>> out;
  const Eigen::Vector2d center_b(0.5 * rect_b.width, 0.5 * rect_b.height);
  for (int attempt = 0; attempt < 1000 * count && static_cast<int>(out.size()) < count; ++attempt) {
    const HomPoint2 x = HomPoint2::from_pixel(uniform(rng, 0, rect_a.width), uniform(rng, 0, rect_a.height));
    const Eigen::Vector3d l = f.f * x.h;
    const double n = l.head<2>().norm();
    if (n < 1e-300) continue;
    const Eigen::Vector2d normal = l.head<2>() / n;
    const double offset = (normal.dot(center_b) + l.z() / n);
    const Eigen::Vector2d xp = center_b - offset * normal;
    if (xp.x() < 0 || xp.y() < 0 || xp.x() > rect_b.width || xp.y() > rect_b.height) continue;
    out.emplace_back(x, HomPoint2::from_pixel(xp));
  }
  if (out.empty()) throw ConfigError("no epipolar line of the ground-truth F crosses image B");
  return out;
}

void finalize_report(EvaluationReport& report) {
  std::sort(report.pairs.begin(), report.pairs.end(), [](const PairReport& l, const PairReport& r) {
    return l.cam_a != r.cam_a ? l.cam_a < r.cam_a : l.cam_b < r.cam_b;
  });
  double dist_sum = 0.0, tp_sum = 0.0;
  int dist_n = 0, tp_n = 0;
  report.good_pairs = 0;
  for (const auto& p : report.pairs) {
    if (p.distance && p.distance->count > 0) {
      dist_sum += p.distance->mean;
      ++dist_n;
    }
    if (p.true_positive_rate) {
      tp_sum += *p.true_positive_rate;
      ++tp_n;
    }
    report.good_pairs += p.ok && !p.degenerate;
  }
  report.mean_distance = dist_n ? dist_sum / dist_n : 0.0;
  report.mean_true_positive_rate = tp_n ? tp_sum / tp_n : 0.0;
}

std::string report_to_json(const EvaluationReport& report) {
  json j;
  j["pairs"] = json::array();
  for (const auto& p : report.pairs) {
    json e = {{"cam_a", p.cam_a},
              {"cam_b", p.cam_b},
              {"status", p.ok ? "ok" : "error"},
              {"error", p.error},
              {"candidates_selected", p.candidates_selected},
              {"candidates_after_filter", p.candidates_after_filter},
              {"inliers", p.inliers},
              {"iterations", p.iterations},
              {"degenerate", p.degenerate},
              {"degenerate_reason", p.degenerate_reason},
              {"pencil_span_rad", p.pencil_span_rad}};
    e["true_positive_rate"] = p.true_positive_rate ? json(*p.true_positive_rate) : json(nullptr);
    if (p.distance)
      e["symmetric_epipolar_distance"] = {{"mean", p.distance->mean},
                                          {"median", p.distance->median},
                                          {"max", p.distance->max},
                                          {"count", p.distance->count},
                                          {"errors", p.distance->errors}};
    else
      e["symmetric_epipolar_distance"] = nullptr;
    j["pairs"].push_back(e);
  }
  j["summary"] = {{"pairs", report.pairs.size()},
                  {"good_pairs", report.good_pairs},
                  {"mean_symmetric_epipolar_distance", report.mean_distance},
                  {"mean_true_positive_rate", report.mean_true_positive_rate}};
  j["conventions"] = {
      {"symmetric_epipolar_distance", "mean of the two point-to-epipolar-line distances, pixels"},
      {"true_positive", "each line compared with the true epipolar line through its own clipped midpoint; "
                        "area below factor * max(width, height)"}};
  return j.dump(2) + "\n";
}

std::string report_to_csv(const EvaluationReport& report) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "cam_a,cam_b,status,candidates_selected,candidates_after_filter,inliers,iterations,true_positive_rate,"
         "mean_sed,median_sed,max_sed,degenerate,pencil_span_rad\n";
  for (const auto& p : report.pairs) {
    out << p.cam_a << ',' << p.cam_b << ',' << (p.ok ? "ok" : "error") << ',' << p.candidates_selected << ','
        << p.candidates_after_filter << ',' << p.inliers << ',' << p.iterations << ',';
    if (p.true_positive_rate) out << *p.true_positive_rate;
    out << ',';
    if (p.distance) out << p.distance->mean << ',' << p.distance->median << ',' << p.distance->max;
    else out << ",,";
    out << ',' << (p.degenerate ? 1 : 0) << ',' << p.pencil_span_rad << '\n';
  }
  return out.str();
}

std::string timings_to_json(const EvaluationReport& report) {
  json j = json::array();
  for (const auto& p : report.pairs) j.push_back({{"cam_a", p.cam_a}, {"cam_b", p.cam_b}, {"runtime_s", p.runtime_s}});
  return j.dump(2) + "\n";
}

std::string estimation_to_json(const EstimationResult& r, const ImageRect& rect_a) {
  json j;
  json f = json::array();
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) f.push_back(r.f.f(row, col));
  j["F"] = f;
  j["epipole_a"] = point_json(r.h.e);
  j["epipole_b"] = point_json(r.h.e_prime);
  json ids = json::array();
  for (const auto& p : r.inlier_pairs) ids.push_back(json::array({p.line_a.id, p.line_b.id}));
  j["inlier_pairs"] = ids;
  j["iterations_run"] = r.iterations_run;
  j["degenerate_trials"] = r.degenerate_trials;
  j["candidate_count"] = r.candidate_count;
  j["degenerate"] = r.degenerate;
  j["reason"] = r.reason;
  j["pencil_span_rad"] = inlier_pencil_span(r, rect_a);
  return j.dump(2) + "\n";
}

std::string scene_to_json(const Simulation& sim) {
  json j;
  j["seed"] = sim.config.seed;
  j["scenario"] = to_string(sim.config.kind);
  j["num_frames"] = sim.scene.num_frames;
  j["volume"] = {{"lo", vec3(sim.scene.bounds.lo)}, {"hi", vec3(sim.scene.bounds.hi)}};
  for (const auto& cam : sim.cameras)
    j["cameras"].push_back({{"intrinsics", mat3(cam.intrinsics)},
                            {"rotation", mat3(cam.rotation)},
                            {"center", vec3(cam.center)},
                            {"width", cam.image.width},
                            {"height", cam.image.height}});
  for (const auto& cube : sim.scene.cubes) {
    const auto& t = cube.trajectory;
    json c = {{"half_extent", cube.half_extent}, {"orientation", mat3(cube.orientation)}};
    if (t.kind == Trajectory::Kind::path)
      c["trajectory"] = {{"kind", "path"}, {"a", vec3(t.start)}, {"b", vec3(t.end)}, {"phase", t.phase}, {"speed", t.speed}};
    else
      c["trajectory"] = {{"kind", "bouncing"}, {"start", vec3(t.start)}, {"velocity", vec3(t.velocity)},
                         {"lo", vec3(t.lo)}, {"hi", vec3(t.hi)}};
    j["cubes"].push_back(c);
  }
  if (!sim.path.empty()) j["shared_path"] = {vec3(sim.path[0]), vec3(sim.path[1])};
  return j.dump(2) + "\n";
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_lines_csv(std::ostream& out, std::span<const BorderLine> lines) {
  out << "id,px,py,qx,qy\n" << std::setprecision(17);
  for (const auto& l : lines) out << l.id << ',' << l.p.x() << ',' << l.p.y() << ',' << l.q.x() << ',' << l.q.y() << '\n';
}

std::vector<BorderLine> read_lines_csv(std::istream& in) {
  std::vector<BorderLine> lines;
  std::string row;
  int line_no = 0;
  while (std::getline(in, row)) {
    ++line_no;
    if (row.empty() || row.rfind("id", 0) == 0) continue;
    std::replace(row.begin(), row.end(), ',', ' ');
    std::istringstream fields(row);
    BorderLine l;
    if (!(fields >> l.id >> l.p.x() >> l.p.y() >> l.q.x() >> l.q.y()))
      throw FormatError("lines CSV line " + std::to_string(line_no) + " malformed");
    l.line = line_through(HomPoint2::from_pixel(l.p), HomPoint2::from_pixel(l.q)).normalized();
    lines.push_back(l);
  }
  return lines;
}

SilhouetteVideo load_camera(const CameraInput& input) {
  return input.packed.empty() ? load_mask_sequence(input.masks, input.frames) : load_packed(input.packed);
}

LoadedCameras load_cameras(const PipelineConfig& config, Exec exec) {
  LoadedCameras out;
  if (config.scenario) {
    ScenarioConfig scenario = *config.scenario;
    scenario.seed = config.seed;
    Simulation sim = simulate(scenario, exec);
    for (const auto& v : sim.videos) out.videos.emplace_back(v);
    out.errors.assign(sim.videos.size(), "");
    out.sim = std::move(sim);
    return out;
  }
  for (const auto& in : config.inputs) {
    try {
      out.videos.emplace_back(load_camera(in));
      out.errors.emplace_back();
    } catch (const Error& e) {
      out.videos.emplace_back(std::nullopt);
      out.errors.emplace_back(e.what());
    }
  }
  return out;
}

std::vector<PairInputs> pair_inputs(const PipelineConfig& config, const LoadedCameras& cameras) {
  std::vector<PairInputs> pairs;
  const auto& videos = cameras.videos;
  const int n = static_cast<int>(videos.size());
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      PairInputs p;
      p.cam_a = a;
      p.cam_b = b;
      Rng rng(truth_seed(config.seed, a, b));
      if (cameras.sim) {
        const auto& sim = *cameras.sim;
        for (const auto& t : sim.truths)
          if (t.cam_a == a && t.cam_b == b) p.f_truth = t.f;
        p.gt_pairs = ground_truth_correspondences(sim.cameras[a], sim.cameras[b], sim.config.volume,
                                                  config.gt_correspondences, rng);
      } else if (videos[a] && videos[b]) {
        for (const auto& t : config.truths)
          if (t.cam_a == a && t.cam_b == b) {
            std::istringstream text(read_text_file(t.f_path));
            p.f_truth = read_fundamental(text);
            p.gt_pairs = correspondences_from_f(*p.f_truth, {videos[a]->width(), videos[a]->height()},
                                                {videos[b]->width(), videos[b]->height()}, config.gt_correspondences,
                                                rng);
          }
      }
      pairs.push_back(std::move(p));
    }
  return pairs;
}

PairReport process_pair(const CameraLines& a, const CameraLines& b, const HeatMap& heat_a, const HeatMap& heat_b,
                        const PairInputs& inputs, const PipelineConfig& config, MatchOutput* match_out,
                        std::optional<EstimationResult>* estimate_out, Exec exec) {
  const auto start = std::chrono::steady_clock::now();
  PairReport report;
  report.cam_a = inputs.cam_a;
  report.cam_b = inputs.cam_b;
  try {
    MatchOutput match = match_cameras(a, b, heat_a, heat_b, config, exec);
    report.candidates_selected = static_cast<int>(match.selected.size());
    report.candidates_after_filter = static_cast<int>(match.filtered.size());
    if (inputs.f_truth)
      report.true_positive_rate =
          true_positive_rate(match.filtered, *inputs.f_truth, a.rect, b.rect, config.true_positive_area_factor);

    RansacConfig ransac = config.ransac;
    ransac.seed = ransac_seed(config.seed, inputs.cam_a, inputs.cam_b);
    EstimationResult est = estimate_fundamental(match.filtered, a.rect, b.rect, ransac, exec);
    est = detect_degeneracy(std::move(est), a.rect, config.degeneracy_span_rad,
                            config.degeneracy_min_inlier_fraction);
    report.pencil_span_rad = inlier_pencil_span(est, a.rect);
    report.inliers = static_cast<int>(est.inlier_pairs.size());
    report.iterations = est.iterations_run;
    report.degenerate = est.degenerate;
    report.degenerate_reason = est.reason;
    if (!inputs.gt_pairs.empty()) report.distance = evaluate_f(est.f, inputs.gt_pairs);
    report.ok = true;
    if (match_out) *match_out = std::move(match);
    if (estimate_out) *estimate_out = std::move(est);
  } catch (const Error& e) {
    report.ok = false;
    report.error = e.what();
  }
  report.runtime_s = seconds_since(start);
  return report;
}

std::string overlay_svg(const SilhouetteVideo& video_a, const SilhouetteVideo& video_b,
                        std::span<const CandidatePair> pairs) {
  std::ostringstream svg;
  const int gap = 20;
  const int total_w = video_a.width() + gap + video_b.width();
  const int total_h = std::max(video_a.height(), video_b.height());
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << total_w << "\" height=\"" << total_h << "\">\n";
  const auto draw_mask = [&](const SilhouetteVideo& v, int dx) {
    svg << "<rect x=\"" << dx << "\" y=\"0\" width=\"" << v.width() << "\" height=\"" << v.height()
        << "\" fill=\"white\" stroke=\"black\"/>\n<g fill=\"#999\">\n";
    for (int y = 0; y < v.height(); ++y)
      for (int x = 0; x < v.width();) {
        if (!v.get(0, x, y)) {
          ++x;
          continue;
        }
        int run = x;
        while (run < v.width() && v.get(0, run, y)) ++run;
        svg << "<rect x=\"" << dx + x << "\" y=\"" << y << "\" width=\"" << run - x << "\" height=\"1\"/>\n";
        x = run;
      }
    svg << "</g>\n";
  };
  draw_mask(video_a, 0);
  draw_mask(video_b, video_a.width() + gap);
  svg << std::setprecision(6);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const int hue = static_cast<int>((i * 137) % 360);
    const auto& c = pairs[i];
    svg << "<line x1=\"" << c.line_a.p.x() << "\" y1=\"" << c.line_a.p.y() << "\" x2=\"" << c.line_a.q.x()
        << "\" y2=\"" << c.line_a.q.y() << "\" stroke=\"hsl(" << hue << ",80%,45%)\" stroke-width=\"1\"/>\n";
    const double dx = video_a.width() + gap;
    svg << "<line x1=\"" << dx + c.line_b.p.x() << "\" y1=\"" << c.line_b.p.y() << "\" x2=\"" << dx + c.line_b.q.x()
        << "\" y2=\"" << c.line_b.q.y() << "\" stroke=\"hsl(" << hue << ",80%,45%)\" stroke-width=\"1\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

EvaluationReport run_pipeline(const PipelineConfig& config, bool write, Exec exec) {
  const LoadedCameras cameras = load_cameras(config, exec);
  const auto& videos = cameras.videos;
  if (videos.size() < 2) throw ConfigError("pipeline needs at least two cameras");
  std::vector<HeatMap> heats(videos.size());
  std::vector<CameraLines> lines(videos.size());
  for (std::size_t c = 0; c < videos.size(); ++c) {
    if (!videos[c]) continue;
    heats[c] = compute_heat_map(*videos[c], exec);
    lines[c] = extract_lines(*videos[c], config, line_seed(config.seed, static_cast<int>(c)), exec);
  }
  EvaluationReport report;
  const auto& out = config.out_dir;
  if (write) std::filesystem::create_directories(out);
  for (const auto& in : pair_inputs(config, cameras)) {
    const auto& va = videos[in.cam_a];
    const auto& vb = videos[in.cam_b];
    if (!va || !vb) {
      PairReport failed;
      failed.cam_a = in.cam_a;
      failed.cam_b = in.cam_b;
      failed.error = "camera " + std::to_string(va ? in.cam_b : in.cam_a) + ": " +
                     cameras.errors[va ? in.cam_b : in.cam_a];
      report.pairs.push_back(failed);
      continue;
    }
    if (va->num_frames() != vb->num_frames()) {
      PairReport failed;
      failed.cam_a = in.cam_a;
      failed.cam_b = in.cam_b;
      failed.error = "videos are not synchronized: " + std::to_string(va->num_frames()) + " vs " +
                     std::to_string(vb->num_frames()) + " frames";
      report.pairs.push_back(failed);
      continue;
    }
    MatchOutput match;
    std::optional<EstimationResult> est;
    report.pairs.push_back(process_pair(lines[in.cam_a], lines[in.cam_b], heats[in.cam_a], heats[in.cam_b], in,
                                        config, &match, &est, exec));
    if (!write) continue;
    const std::string tag = pair_tag(in.cam_a, in.cam_b);
    std::ostringstream csv;
    write_candidates_csv(csv, match.filtered);
    write_text_file(out / ("candidates_" + tag + ".csv"), csv.str());
    if (in.f_truth) {
      std::ostringstream f;
      write_fundamental(f, *in.f_truth);
      write_text_file(out / ("F_truth_" + tag + ".txt"), f.str());
    }
    if (est) {
      std::ostringstream f;
      write_fundamental(f, est->f);
      write_text_file(out / ("F_est_" + tag + ".txt"), f.str());
      write_text_file(out / ("estimate_" + tag + ".json"), estimation_to_json(*est, lines[in.cam_a].rect));
      if (config.write_svg)
        write_text_file(out / ("overlay_" + tag + ".svg"), overlay_svg(*va, *vb, est->inlier_pairs));
    }
  }
  finalize_report(report);
  if (write) {
    write_text_file(out / "report.json", report_to_json(report));
    write_text_file(out / "report.csv", report_to_csv(report));
    write_text_file(out / "timings.json", timings_to_json(report));
    if (cameras.sim) write_text_file(out / "scene.json", scene_to_json(*cameras.sim));
  }
  return report;
}

}  // namespace epiline

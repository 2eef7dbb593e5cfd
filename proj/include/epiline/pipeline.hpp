#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <optional>
#include <string>
#include <vector>

#include "epiline/barcode.hpp"
#include "epiline/estimator.hpp"
#include "epiline/matching.hpp"
#include "epiline/simulator.hpp"

namespace epiline {

/// Where one camera's masks come from when no scenario is simulated.
struct CameraInput {
  std::string masks;   // PBM P4 path template, e.g. "cam0/%04d.pbm"
  FrameRange frames;
  std::string packed;  // alternatively a packed container
};

struct TruthInput {
  int cam_a = 0;
  int cam_b = 1;
  std::string f_path;
};

struct PipelineConfig {
  int lines_per_camera = 100000;
  double q_min = 0.05;
  double q_max = 0.95;
  int mutual_k = 3;
  int candidate_limit = 1000;
  double raster_thickness = 1.0;
  bool traffic_filter = true;
  HoughParams hough;
  OverlapParams overlap;
  RansacConfig ransac;
  double degeneracy_span_rad = 0.1;
  double degeneracy_min_inlier_fraction = 0.15;
  double true_positive_area_factor = 3.0;  // in units of image length (max of width, height)
  int gt_correspondences = 1000;
  std::uint64_t seed = 1;

  std::optional<ScenarioConfig> scenario;
  std::vector<CameraInput> inputs;
  std::vector<TruthInput> truths;
  std::filesystem::path out_dir = "out";
  bool write_svg = false;
};

/// Parses the JSON config schema (see README); unknown keys are rejected.
PipelineConfig config_from_json(const std::string& text);
std::string config_to_json(const PipelineConfig& config);

/// Informative lines of one camera with their barcodes (ids index the original sample).
struct CameraLines {
  ImageRect rect;
  std::vector<BorderLine> sampled;
  std::vector<BorderLine> lines;
  std::vector<MotionBarcode> barcodes;
};

CameraLines extract_lines(const SilhouetteVideo& video, const PipelineConfig& config, std::uint64_t seed,
                          Exec exec = Exec::parallel);

struct MatchOutput {
  std::vector<CandidatePair> selected;  // top candidates before traffic filtering
  std::vector<CandidatePair> filtered;  // after traffic filtering
  std::vector<TrafficLine> traffic_a;
  std::vector<TrafficLine> traffic_b;
};

MatchOutput match_cameras(const CameraLines& a, const CameraLines& b, const HeatMap& heat_a, const HeatMap& heat_b,
                          const PipelineConfig& config, Exec exec = Exec::parallel);

/// Fraction of pairs whose two lines each lie within factor * image length (area) of the
/// true epipolar line through their own clipped midpoint.
double true_positive_rate(std::span<const CandidatePair> cands, const FundamentalMatrix& f_truth,
                          const ImageRect& rect_a, const ImageRect& rect_b, double factor);
bool is_true_line(const HomLine2& line, const HomPoint2& epipole, const ImageRect& rect, double factor);

struct DistanceSummary {
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
  int count = 0;
  int errors = 0;
};

DistanceSummary evaluate_f(const FundamentalMatrix& f,
                           std::span<const std::pair<HomPoint2, HomPoint2>> gt_pairs);

/// Correspondences consistent with f: x uniform in A, x' the point of F x nearest B's center.
std::vector<std::pair<HomPoint2, HomPoint2>> correspondences_from_f(const FundamentalMatrix& f,
                                                                    const ImageRect& rect_a,
                                                                    const ImageRect& rect_b, int count, Rng& rng);

struct PairReport {
  int cam_a = 0;
  int cam_b = 0;
  bool ok = false;
  std::string error;
  int candidates_selected = 0;
  int candidates_after_filter = 0;
  int inliers = 0;
  int iterations = 0;
  std::optional<double> true_positive_rate;
  std::optional<DistanceSummary> distance;
  bool degenerate = false;
  std::string degenerate_reason;
  double pencil_span_rad = 0.0;
  double runtime_s = 0.0;  // reported separately from the deterministic report
};

struct EvaluationReport {
  std::vector<PairReport> pairs;
  double mean_distance = 0.0;           // over pairs with distances
  double mean_true_positive_rate = 0.0;
  int good_pairs = 0;                   // ok and not degenerate
};

/// Deterministic report JSON (no timings).
std::string report_to_json(const EvaluationReport& report);
std::string report_to_csv(const EvaluationReport& report);
std::string timings_to_json(const EvaluationReport& report);
void finalize_report(EvaluationReport& report);

/// Includes the pencil span of the inliers measured in rect_a.
std::string estimation_to_json(const EstimationResult& result, const ImageRect& rect_a);
std::string scene_to_json(const Simulation& sim);

/// Seeds derived from the master seed.
std::uint64_t line_seed(std::uint64_t seed, int camera);
std::uint64_t ransac_seed(std::uint64_t seed, int cam_a, int cam_b);
std::uint64_t truth_seed(std::uint64_t seed, int cam_a, int cam_b);

/// Everything needed to evaluate one camera pair.
struct PairInputs {
  int cam_a = 0;
  int cam_b = 0;
  std::optional<FundamentalMatrix> f_truth;
  std::vector<std::pair<HomPoint2, HomPoint2>> gt_pairs;
};

/// Runs matching, estimation and evaluation for one pair; stage errors are captured in the report.
PairReport process_pair(const CameraLines& a, const CameraLines& b, const HeatMap& heat_a, const HeatMap& heat_b,
                        const PairInputs& inputs, const PipelineConfig& config, MatchOutput* match_out = nullptr,
                        std::optional<EstimationResult>* estimate_out = nullptr, Exec exec = Exec::parallel);

/// Full in-memory pipeline over all camera pairs; writes artifacts under config.out_dir when `write` is set.
EvaluationReport run_pipeline(const PipelineConfig& config, bool write = true, Exec exec = Exec::parallel);

/// SVG with the two first-frame masks side by side and the given line pairs drawn over them.
std::string overlay_svg(const SilhouetteVideo& video_a, const SilhouetteVideo& video_b,
                        std::span<const CandidatePair> pairs);

}  // namespace epiline

namespace epiline {

/// Stage artifacts: "id,px,py,qx,qy" per sampled line.
void write_lines_csv(std::ostream& out, std::span<const BorderLine> lines);
std::vector<BorderLine> read_lines_csv(std::istream& in);

/// Per-camera videos; a camera that failed to load has no video and a non-empty error.
struct LoadedCameras {
  std::vector<std::optional<SilhouetteVideo>> videos;
  std::vector<std::string> errors;
  std::optional<Simulation> sim;
};

/// Simulates the scenario (failures are fatal) or loads every configured input (failures are per camera).
LoadedCameras load_cameras(const PipelineConfig& config, Exec exec = Exec::parallel);
SilhouetteVideo load_camera(const CameraInput& input);

/// Ground truth for every pair (simulated or loaded F files); pairs with a missing camera carry no truth.
std::vector<PairInputs> pair_inputs(const PipelineConfig& config, const LoadedCameras& cameras);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace epiline

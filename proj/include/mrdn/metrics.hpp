#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mrdn/image.hpp"

namespace mrdn {

inline constexpr double kPsnrCap = 100.0;

enum class MetricChannel { kRgb, kY };

struct MetricOptions {
  std::size_t shave = 0;  // border pixels dropped on every side
  MetricChannel channel = MetricChannel::kRgb;
};

// Mean squared error on the 8-bit scale over the shaved region. Throws
// ShapeError for mismatched extents and UsageError when nothing is left
// after shaving.
double mse(const ImageRGB& ref, const ImageRGB& test, const MetricOptions& opt = {});
double rmse(const ImageRGB& ref, const ImageRGB& test, const MetricOptions& opt = {});
// 10 log10(255^2 / MSE), kPsnrCap for identical regions.
double psnr(const ImageRGB& ref, const ImageRGB& test, const MetricOptions& opt = {});
double psnr_from_rmse(double rmse_val);

// P = ((10 - M) + N) / 2; lower is better.
double perceptual_score(double m_val, double n_val);

// 1: rmse <= 11.5, 2: 11.5 < rmse <= 12.5, 3: rmse > 12.5.
int classify_track(double rmse_val);

// (1 - alpha) d + alpha p without clamping. Throws UsageError for alpha
// outside [0, 1] and ShapeError for mismatched extents.
ImageRGB blend_unclamped(const ImageRGB& out_distortion, const ImageRGB& out_perceptual, double alpha);
ImageRGB blend(const ImageRGB& out_distortion, const ImageRGB& out_perceptual, double alpha);

struct PerceptualScores {
  double m = 0.0;
  double n = 0.0;
};

/// M(I)/N(I) values keyed by image id, read from `id<TAB>M<TAB>N` lines.
class ScoreBackend {
 public:
  static ScoreBackend parse(const std::string& text);
  static ScoreBackend load(const std::filesystem::path& path);

  std::optional<PerceptualScores> lookup(const std::string& id) const;
  std::size_t size() const { return scores_.size(); }

 private:
  std::map<std::string, PerceptualScores> scores_;
};

struct MetricReport {
  std::string id;
  double psnr_db = 0.0;
  double rmse = 0.0;
  std::optional<double> perceptual;
  int track = 0;
};

MetricReport evaluate_pair(const std::string& id, const ImageRGB& ref, const ImageRGB& test,
                           const MetricOptions& opt, const ScoreBackend* scores = nullptr);

// CSV with header `id,psnr,rmse,P,track` and a trailing `mean` row. P cells
// are empty when no score is known; the mean P is empty unless every row has one.
std::string reports_to_csv(const std::vector<MetricReport>& rows);

struct BlendTriple {
  ImageRGB out_distortion;
  ImageRGB out_perceptual;
  ImageRGB reference;
};

struct AlphaTuning {
  double alpha = 0.0;
  double mean_rmse = 0.0;
  std::vector<MetricReport> reports;
};

// Mean RMSE of blend(alpha) against the references.
double mean_blend_rmse(const std::vector<BlendTriple>& set, double alpha, const MetricOptions& opt);

/// Bisects alpha in [0, 1] until the mean RMSE over `set` is within `tol` of
/// target_rmse. Throws DataError, quoting both endpoint RMSEs, when the target
/// lies outside them.
AlphaTuning tune_alpha_for_track(const std::vector<BlendTriple>& set, double target_rmse,
                                 const MetricOptions& opt = {}, double tol = 0.01);

}  // namespace mrdn

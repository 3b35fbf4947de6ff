#include "mrdn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "mrdn/error.hpp"

namespace mrdn {

namespace {

double luma(const ImageRGB& img, std::size_t y, std::size_t x) {
  return 16.0 + 65.481 * img.at(0, y, x) + 128.553 * img.at(1, y, x) + 24.966 * img.at(2, y, x);
}

void check_same_extent(const ImageRGB& a, const ImageRGB& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError(std::string(what) + ": extents differ (" + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                     std::to_string(b.width) + ")");
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

}  // namespace

double mse(const ImageRGB& ref, const ImageRGB& test, const MetricOptions& opt) {
  check_same_extent(ref, test, "metric");
  const std::size_t s = opt.shave;
  if (2 * s >= ref.height || 2 * s >= ref.width) {
    throw UsageError("shave " + std::to_string(s) + " leaves nothing of a " + std::to_string(ref.height) +
                     "x" + std::to_string(ref.width) + " image");
  }
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t y = s; y < ref.height - s; ++y) {
    for (std::size_t x = s; x < ref.width - s; ++x) {
      if (opt.channel == MetricChannel::kY) {
        const double d = luma(ref, y, x) - luma(test, y, x);
        acc += d * d;
        ++count;
        continue;
      }
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = 255.0 * (ref.at(c, y, x) - test.at(c, y, x));
        acc += d * d;
        ++count;
      }
    }
  }
  return acc / static_cast<double>(count);
}

double rmse(const ImageRGB& ref, const ImageRGB& test, const MetricOptions& opt) {
  return std::sqrt(mse(ref, test, opt));
}

double psnr(const ImageRGB& ref, const ImageRGB& test, const MetricOptions& opt) {
  const double m = mse(ref, test, opt);
  return m == 0.0 ? kPsnrCap : 10.0 * std::log10(255.0 * 255.0 / m);
}

double psnr_from_rmse(double rmse_val) {
  return rmse_val == 0.0 ? kPsnrCap : 10.0 * std::log10(255.0 * 255.0 / (rmse_val * rmse_val));
}

double perceptual_score(double m_val, double n_val) { return 0.5 * ((10.0 - m_val) + n_val); }

int classify_track(double rmse_val) {
  if (!(rmse_val >= 0.0)) throw UsageError("classify_track: RMSE must be non-negative");
  if (rmse_val <= 11.5) return 1;
  if (rmse_val <= 12.5) return 2;
  return 3;
}

ImageRGB blend_unclamped(const ImageRGB& out_distortion, const ImageRGB& out_perceptual, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw UsageError("blend: alpha " + std::to_string(alpha) + " outside [0, 1]");
  }
  check_same_extent(out_distortion, out_perceptual, "blend");
  ImageRGB out(out_distortion.height, out_distortion.width);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = (1.0 - alpha) * out_distortion.data[i] + alpha * out_perceptual.data[i];
  }
  return out;
}

ImageRGB blend(const ImageRGB& out_distortion, const ImageRGB& out_perceptual, double alpha) {
  ImageRGB out = blend_unclamped(out_distortion, out_perceptual, alpha);
  for (auto& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

ScoreBackend ScoreBackend::parse(const std::string& text) {
  ScoreBackend backend;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string id, m, n, extra;
    if (!std::getline(fields, id, '\t') || !std::getline(fields, m, '\t') ||
        !std::getline(fields, n, '\t') || std::getline(fields, extra, '\t')) {
      throw DataError("score file line " + std::to_string(lineno) + ": expected id<TAB>M<TAB>N");
    }
    PerceptualScores s;
    try {
      std::size_t used_m = 0, used_n = 0;
      s.m = std::stod(m, &used_m);
      s.n = std::stod(n, &used_n);
      if (used_m != m.size() || used_n != n.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError("score file line " + std::to_string(lineno) + ": malformed number");
    }
    if (!std::isfinite(s.m) || !std::isfinite(s.n)) {
      throw DataError("score file line " + std::to_string(lineno) + ": non-finite score");
    }
    if (!backend.scores_.emplace(id, s).second) {
      throw DataError("score file: duplicate id '" + id + "'");
    }
  }
  return backend;
}

ScoreBackend ScoreBackend::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open score file '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::optional<PerceptualScores> ScoreBackend::lookup(const std::string& id) const {
  const auto it = scores_.find(id);
  if (it == scores_.end()) return std::nullopt;
  return it->second;
}

MetricReport evaluate_pair(const std::string& id, const ImageRGB& ref, const ImageRGB& test,
                           const MetricOptions& opt, const ScoreBackend* scores) {
  MetricReport r;
  r.id = id;
  const double m = mse(ref, test, opt);
  r.rmse = std::sqrt(m);
  r.psnr_db = m == 0.0 ? kPsnrCap : 10.0 * std::log10(255.0 * 255.0 / m);
  r.track = classify_track(r.rmse);
  if (scores != nullptr) {
    if (auto s = scores->lookup(id)) r.perceptual = perceptual_score(s->m, s->n);
  }
  return r;
}

std::string reports_to_csv(const std::vector<MetricReport>& rows) {
  std::ostringstream os;
  os << "id,psnr,rmse,P,track\n";
  double psnr_sum = 0.0, rmse_sum = 0.0, p_sum = 0.0;
  bool all_p = !rows.empty();
  for (const auto& r : rows) {
    os << r.id << ',' << fmt(r.psnr_db) << ',' << fmt(r.rmse) << ',';
    if (r.perceptual) os << fmt(*r.perceptual);
    os << ',' << r.track << '\n';
    psnr_sum += r.psnr_db;
    rmse_sum += r.rmse;
    if (r.perceptual) {
      p_sum += *r.perceptual;
    } else {
      all_p = false;
    }
  }
  if (!rows.empty()) {
    const double n = static_cast<double>(rows.size());
    const double mean_rmse = rmse_sum / n;
    os << "mean," << fmt(psnr_sum / n) << ',' << fmt(mean_rmse) << ',';
    if (all_p) os << fmt(p_sum / n);
    os << ',' << classify_track(mean_rmse) << '\n';
  }
  return os.str();
}

double mean_blend_rmse(const std::vector<BlendTriple>& set, double alpha, const MetricOptions& opt) {
  if (set.empty()) throw DataError("mean_blend_rmse: empty set");
  double acc = 0.0;
  for (const auto& t : set) acc += rmse(t.reference, blend(t.out_distortion, t.out_perceptual, alpha), opt);
  return acc / static_cast<double>(set.size());
}

AlphaTuning tune_alpha_for_track(const std::vector<BlendTriple>& set, double target_rmse,
                                 const MetricOptions& opt, double tol) {
  auto finish = [&](double alpha, double mean) {
    AlphaTuning t;
    t.alpha = alpha;
    t.mean_rmse = mean;
    for (std::size_t i = 0; i < set.size(); ++i) {
      t.reports.push_back(evaluate_pair(std::to_string(i), set[i].reference,
                                        blend(set[i].out_distortion, set[i].out_perceptual, alpha), opt));
    }
    return t;
  };
  const double r0 = mean_blend_rmse(set, 0.0, opt);
  const double r1 = mean_blend_rmse(set, 1.0, opt);
  if (std::abs(r0 - target_rmse) <= tol) return finish(0.0, r0);
  if (std::abs(r1 - target_rmse) <= tol) return finish(1.0, r1);
  if (target_rmse < std::min(r0, r1) || target_rmse > std::max(r0, r1)) {
    std::ostringstream os;
    os << "target RMSE " << target_rmse << " is not achievable: RMSE at alpha=0 is " << r0
       << ", at alpha=1 is " << r1;
    throw DataError(os.str());
  }
  // f(lo) - target and f(hi) - target keep opposite signs.
  double lo = 0.0, hi = 1.0;
  const bool rising = r1 > r0;
  double alpha = 0.5, mean = 0.0;
  for (int it = 0; it < 100; ++it) {
    alpha = 0.5 * (lo + hi);
    mean = mean_blend_rmse(set, alpha, opt);
    if (std::abs(mean - target_rmse) <= tol) break;
    if ((mean < target_rmse) == rising) {
      lo = alpha;
    } else {
      hi = alpha;
    }
  }
  return finish(alpha, mean);
}

}  // namespace mrdn

#include "neurodecode/analysis.hpp"

#include "csv.hpp"
#include "neurodecode/errors.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

namespace neurodecode::analysis {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double series_value(const train::EpochRecord& r, Series s) {
  switch (s) {
    case Series::test_acc: return r.test_acc;
    case Series::test_precision: return r.test_precision;
    case Series::test_recall: return r.test_recall;
  }
  return kNaN;
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string exact(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text, ReportFiles& files) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
  files.written.push_back(path);
}

std::size_t catalog_size() { return data::concept_catalog().size(); }

}  // namespace

const char* to_string(PeakMode m) { return m == PeakMode::max_last5 ? "max_last5" : "mean_last5"; }

PeakMode peak_mode_from_string(std::string_view s) {
  if (s == "max_last5") return PeakMode::max_last5;
  if (s == "mean_last5") return PeakMode::mean_last5;
  throw ConfigError("unknown extraction mode '" + std::string(s) + "'");
}

// --- peak extraction --------------------------------------------------------

PeakMetric peak_metric(const train::RunHistory& history, PeakMode mode, Series series) {
  if (history.records.empty()) throw DataError("run history is empty");
  std::vector<int> ends = history.restart_epochs;
  if (ends.empty()) ends.push_back(history.records.back().epoch);

  PeakMetric best;
  best.mode = mode;
  bool found = false;
  for (std::size_t c = 0; c < ends.size(); ++c) {
    const int e = ends[c];
    std::vector<const train::EpochRecord*> window;
    for (const auto& r : history.records) {
      if (r.epoch >= e - 4 && r.epoch <= e && std::isfinite(series_value(r, series))) window.push_back(&r);
    }
    if (window.empty()) continue;
    if (mode == PeakMode::max_last5) {
      for (const auto* r : window) {
        const double v = series_value(*r, series);
        if (!found || v > best.value) {
          best.value = v;
          best.cycle_index = static_cast<int>(c);
          best.epoch = r->epoch;
          best.precision = r->test_precision;
          best.recall = r->test_recall;
          found = true;
        }
      }
    } else {
      double sum = 0.0, prec = 0.0, rec = 0.0;
      for (const auto* r : window) {
        sum += series_value(*r, series);
        prec += r->test_precision;
        rec += r->test_recall;
      }
      const double n = static_cast<double>(window.size());
      if (!found || sum / n > best.value) {
        best.value = sum / n;
        best.cycle_index = static_cast<int>(c);
        best.epoch = e;
        best.precision = prec / n;
        best.recall = rec / n;
        found = true;
      }
    }
  }
  if (!found) throw DataError("no evaluated epoch falls inside a last-5 window");
  return best;
}

// --- object profiles --------------------------------------------------------

std::size_t ObjectAccuracyProfile::total_trials() const {
  return static_cast<std::size_t>(std::accumulate(counts.begin(), counts.end(), 0LL));
}

std::vector<int> ObjectAccuracyProfile::missing() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) out.push_back(static_cast<int>(i));
  }
  return out;
}

namespace {

ObjectAccuracyProfile empty_profile(std::size_t n) {
  ObjectAccuracyProfile p;
  p.accuracy.assign(n, kNaN);
  p.correct.assign(n, 0);
  p.counts.assign(n, 0);
  return p;
}

void tally(ObjectAccuracyProfile& p, int concept_id, bool hit) {
  if (concept_id < 0 || static_cast<std::size_t>(concept_id) >= p.size()) {
    throw DataError("concept id " + std::to_string(concept_id) + " outside the catalog of " +
                    std::to_string(p.size()));
  }
  ++p.counts[concept_id];
  if (hit) ++p.correct[concept_id];
}

void finish(ObjectAccuracyProfile& p) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    p.accuracy[i] = p.counts[i] ? static_cast<double>(p.correct[i]) / p.counts[i] : kNaN;
  }
}

}  // namespace

ObjectAccuracyProfile per_object_accuracy(std::span<const train::TrialPrediction> predictions,
                                          std::size_t n_concepts) {
  auto p = empty_profile(n_concepts ? n_concepts : catalog_size());
  for (const auto& t : predictions) tally(p, t.concept_id, t.predicted == t.truth);
  finish(p);
  return p;
}

ObjectAccuracyProfile per_object_accuracy(std::span<const int> predicted, std::span<const int> truth,
                                          std::span<const data::TrialMeta> meta, std::size_t n_concepts) {
  if (predicted.size() != meta.size() || truth.size() != meta.size()) {
    throw DataError("predictions, labels and metadata must align (" + std::to_string(predicted.size()) + ", " +
                    std::to_string(truth.size()) + ", " + std::to_string(meta.size()) + ")");
  }
  auto p = empty_profile(n_concepts ? n_concepts : catalog_size());
  for (std::size_t i = 0; i < meta.size(); ++i) tally(p, meta[i].concept_id, predicted[i] == truth[i]);
  finish(p);
  return p;
}

ObjectAccuracyProfile combine_profiles(std::span<const ObjectAccuracyProfile> profiles, Combine mode) {
  if (profiles.empty()) throw DataError("no profiles to combine");
  const std::size_t n = profiles.front().size();
  for (const auto& p : profiles) {
    if (p.size() != n) throw ShapeError("profiles cover different concept counts");
  }
  auto out = empty_profile(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool everywhere = std::all_of(profiles.begin(), profiles.end(), [&](const auto& p) { return p.counts[i] > 0; });
    if (!everywhere) continue;
    double acc = 0.0;
    for (const auto& p : profiles) {
      out.counts[i] += p.counts[i];
      out.correct[i] += p.correct[i];
      acc += p.accuracy[i];
    }
    out.accuracy[i] = mode == Combine::pooled ? static_cast<double>(out.correct[i]) / out.counts[i]
                                              : acc / static_cast<double>(profiles.size());
  }
  return out;
}

// --- paired t-test ----------------------------------------------------------

double two_sided_p(double t, double df) {
  if (!(df > 0)) throw NumericError("degrees of freedom must be positive");
  if (std::isnan(t)) throw NumericError("t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t))));
}

TTest paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("paired t-test needs equal lengths, got " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  }
  if (a.size() < 2) throw ShapeError("paired t-test needs at least 2 pairs");
  const std::size_t n = a.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  TTest r;
  r.df = static_cast<int>(n - 1);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) {
    r.degenerate = true;
    if (mean == 0.0) return r;
    r.t = std::copysign(std::numeric_limits<double>::infinity(), mean);
    r.p = 0.0;
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p = two_sided_p(r.t, r.df);
  return r;
}

// --- categories -------------------------------------------------------------

CategoryTable category_table(const ObjectAccuracyProfile& profile) {
  const auto& catalog = data::concept_catalog();
  if (profile.size() != catalog.size()) {
    throw ShapeError("profile covers " + std::to_string(profile.size()) + " concepts, catalog has " +
                     std::to_string(catalog.size()));
  }
  CategoryTable table;
  double total_sum = 0.0;
  int total_n = 0;
  for (const int label : {data::kAlive, data::kNonliving}) {
    const char* label_name = label == data::kAlive ? "Alive" : "Non-living";
    double label_sum = 0.0;
    int label_n = 0;
    for (const auto& cat : data::category_table()) {
      if (cat.label != label) continue;
      double sum = 0.0;
      int n = 0;
      for (const auto& c : catalog) {
        if (c.category != cat.name || !profile.present(c.id)) continue;
        sum += profile.accuracy[c.id];
        ++n;
      }
      if (n == 0) {
        table.warnings.push_back("category '" + cat.name + "' has no test trials; omitted");
        continue;
      }
      table.rows.push_back({label_name, cat.name, n, sum / n});
      label_sum += sum;
      label_n += n;
    }
    if (label_n > 0) table.rows.push_back({label_name, "all", label_n, label_sum / label_n});
    total_sum += label_sum;
    total_n += label_n;
  }
  if (total_n == 0) throw DataError("profile has no concept with test trials");
  table.rows.push_back({"Total", "", total_n, total_sum / total_n});
  return table;
}

std::vector<int> object_order(std::span<const ObjectAccuracyProfile> profiles) {
  if (profiles.empty()) throw DataError("no profiles to order");
  const auto mean = combine_profiles(profiles, Combine::mean_of_models);
  std::vector<int> ids;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    if (mean.present(i)) ids.push_back(static_cast<int>(i));
  }
  std::stable_sort(ids.begin(), ids.end(), [&](int x, int y) { return mean.accuracy[x] > mean.accuracy[y]; });
  return ids;
}

std::string format_duration(double seconds) {
  const auto s = static_cast<long long>(std::llround(std::max(0.0, seconds)));
  return std::to_string(s / 3600) + "h " + std::to_string(s / 60 % 60) + "m " + std::to_string(s % 60) + "s";
}

// --- report -----------------------------------------------------------------

namespace {

bool is_baseline(const train::LoadedRun& r) { return r.info.arch == "csp_lda"; }

std::string task_kind(const std::string& task) { return task.rfind("single", 0) == 0 ? "single" : "cross"; }

int arch_rank(const std::string& arch) {
  for (std::size_t i = 0; i < std::size(models::kArchs); ++i) {
    if (arch == models::to_string(models::kArchs[i])) return static_cast<int>(i);
  }
  return 100;
}

int size_rank(const std::string& size) {
  for (std::size_t i = 0; i < std::size(models::kSizes); ++i) {
    if (size == models::to_string(models::kSizes[i])) return static_cast<int>(i);
  }
  return 100;
}

// Groups runs of one architecture, size and task kind.
using GroupKey = std::tuple<std::string, int, int, std::string, std::string>;  // kind, ranks, arch, size

GroupKey group_key(const train::LoadedRun& r) {
  return {task_kind(r.info.task), arch_rank(r.info.arch), size_rank(r.info.size), r.info.arch, r.info.size};
}

PeakMode headline_mode(const std::string& kind) { return kind == "single" ? PeakMode::mean_last5 : PeakMode::max_last5; }

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22"};

std::string palette(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

std::string accuracy_color(double a) {
  a = std::clamp(a, 0.0, 1.0);
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(215 * (1 - a))),
                static_cast<int>(std::lround(190 * a)), 40);
  return buf;
}

struct Frame {
  double width = 960, height = 420, left = 60, right = 220, top = 30, bottom = 50;
  double plot_w() const { return width - left - right; }
  double plot_h() const { return height - top - bottom; }
  double y(double v) const { return top + plot_h() * (1.0 - std::clamp(v, 0.0, 1.0)); }
};

std::string svg_open(const Frame& f, const std::string& title) {
  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height
    << "\" viewBox=\"0 0 " << f.width << ' ' << f.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<title>" << xml_escape(title) << "</title>\n"
    << "<rect x=\"0\" y=\"0\" width=\"" << f.width << "\" height=\"" << f.height << "\" fill=\"white\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = k / 4.0, y = f.y(v);
    s << "<line x1=\"" << f.left << "\" y1=\"" << y << "\" x2=\"" << f.left + f.plot_w() << "\" y2=\"" << y
      << "\" stroke=\"#dddddd\"/>\n"
      << "<text x=\"" << f.left - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << fixed(v, 2) << "</text>\n";
  }
  s << "<text x=\"" << f.left << "\" y=\"18\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
  return s.str();
}

std::string polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color, bool dashed) {
  std::ostringstream s;
  s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
  if (dashed) s << " stroke-dasharray=\"5,3\"";
  s << " points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) s << (i ? " " : "") << pts[i].first << ',' << pts[i].second;
  s << "\"/>\n";
  return s.str();
}

std::string legend_entry(const Frame& f, std::size_t row, const std::string& color, bool dashed,
                         const std::string& text) {
  const double x = f.left + f.plot_w() + 16, y = f.top + 10 + 18.0 * static_cast<double>(row);
  std::ostringstream s;
  s << "<line x1=\"" << x << "\" y1=\"" << y << "\" x2=\"" << x + 24 << "\" y2=\"" << y << "\" stroke=\"" << color
    << "\" stroke-width=\"2\"" << (dashed ? " stroke-dasharray=\"5,3\"" : "") << "/>\n"
    << "<text x=\"" << x + 30 << "\" y=\"" << y + 4 << "\">" << xml_escape(text) << "</text>\n";
  return s.str();
}

std::string group_name(const GroupKey& k) {
  const auto& [kind, ar, sr, arch, size] = k;
  return size == "-" || size.empty() ? arch + " " + kind : arch + "/" + size + " " + kind;
}

}  // namespace

ReportFiles emit_report(std::span<const train::LoadedRun> runs, const std::filesystem::path& out_dir,
                        const ReportOptions& opts) {
  if (runs.empty()) throw DataError("analysis needs at least one run");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create report directory '" + out_dir.string() + "': " + ec.message());
  ReportFiles files;

  std::map<GroupKey, std::vector<const train::LoadedRun*>> groups;
  for (const auto& r : runs) groups[group_key(r)].push_back(&r);

  // Peak metrics per run (both modes) and per group (headline mode).
  std::string peaks = std::string(kPeaksHeader) + "\n";
  std::string metrics = std::string(kMetricsHeader) + "\n";
  for (const auto& [key, members] : groups) {
    const auto& [kind, ar, sr, arch, size] = key;
    const PeakMode mode = headline_mode(kind);
    double acc = 0.0, prec = 0.0, rec = 0.0, secs = 0.0;
    for (const auto* r : members) {
      for (const PeakMode m : {PeakMode::max_last5, PeakMode::mean_last5}) {
        const auto pk = peak_metric(r->history, m);
        peaks += detail::csv_field(r->dir.filename().string()) + "," + arch + "," + size + "," +
                 detail::csv_field(r->info.task) + "," + to_string(m) + "," + exact(pk.value) + "," +
                 std::to_string(pk.cycle_index) + "," + std::to_string(pk.epoch) + "," + exact(pk.precision) + "," +
                 exact(pk.recall) + "\n";
        if (m == mode) {
          acc += pk.value;
          prec += pk.precision;
          rec += pk.recall;
        }
      }
      secs += r->info.training_seconds;
    }
    const double n = static_cast<double>(members.size());
    metrics += arch + "," + size + "," + fixed(acc / n, 4) + "," + fixed(prec / n, 4) + "," + fixed(rec / n, 4) + "," +
               format_duration(secs / n) + "," + kind + "," + to_string(mode) + "," + std::to_string(members.size()) +
               "\n";
  }
  write_file(out_dir / "metrics.csv", metrics, files);
  write_file(out_dir / "peaks.csv", peaks, files);

  // Mean training curves per group.
  std::string curves = std::string(kCurvesHeader) + "\n";
  Frame cf;
  std::string curve_svg = svg_open(cf, "Mean accuracy during training");
  int max_epoch = 1;
  for (const auto& r : runs) {
    if (!r.history.records.empty()) max_epoch = std::max(max_epoch, r.history.records.back().epoch);
  }
  std::size_t series_index = 0, legend_row = 0;
  for (const auto& [key, members] : groups) {
    const auto& [kind, ar, sr, arch, size] = key;
    std::map<int, std::tuple<double, double, int, int>> by_epoch;  // train sum, test sum, n train, n test
    for (const auto* r : members) {
      for (const auto& rec : r->history.records) {
        auto& [tr, te, ntr, nte] = by_epoch[rec.epoch];
        if (std::isfinite(rec.train_acc)) tr += rec.train_acc, ++ntr;
        if (std::isfinite(rec.test_acc)) te += rec.test_acc, ++nte;
      }
    }
    std::vector<std::pair<double, double>> train_pts, test_pts;
    for (const auto& [epoch, v] : by_epoch) {
      const auto& [tr, te, ntr, nte] = v;
      const double train_mean = ntr ? tr / ntr : kNaN, test_mean = nte ? te / nte : kNaN;
      curves += arch + "," + size + "," + kind + "," + std::to_string(epoch) + "," +
                std::to_string(std::max(ntr, nte)) + "," + exact(train_mean) + "," + exact(test_mean) + "\n";
      const double x = cf.left + cf.plot_w() * (max_epoch > 1 ? (epoch - 1.0) / (max_epoch - 1.0) : 0.5);
      if (ntr) train_pts.emplace_back(x, cf.y(train_mean));
      if (nte) test_pts.emplace_back(x, cf.y(test_mean));
    }
    const std::string color = palette(series_index++);
    if (test_pts.size() == 1) {
      // Single-evaluation runs (the baseline) render as a horizontal reference.
      curve_svg += polyline({{cf.left, test_pts[0].second}, {cf.left + cf.plot_w(), test_pts[0].second}}, color, false);
    } else if (!test_pts.empty()) {
      curve_svg += polyline(test_pts, color, false);
    }
    if (train_pts.size() > 1) curve_svg += polyline(train_pts, color, true);
    curve_svg += legend_entry(cf, legend_row++, color, false, group_name(key) + " test");
    if (train_pts.size() > 1) curve_svg += legend_entry(cf, legend_row++, color, true, group_name(key) + " train");
  }
  curve_svg += "<text x=\"" + exact(cf.left + cf.plot_w() / 2) + "\" y=\"" + exact(cf.height - 12) +
               "\" text-anchor=\"middle\">epoch (1 to " + std::to_string(max_epoch) + ")</text>\n</svg>\n";
  write_file(out_dir / "training_curves.csv", curves, files);
  write_file(out_dir / "training_curves.svg", curve_svg, files);

  // Object-level comparison.
  std::vector<const train::LoadedRun*> compared;
  for (const auto& r : runs) {
    if (!is_baseline(r)) compared.push_back(&r);
  }
  if (compared.empty()) {
    for (const auto& r : runs) compared.push_back(&r);
  }
  std::vector<ObjectAccuracyProfile> profiles;
  std::vector<std::string> names;
  std::map<std::string, int> seen;
  for (const auto* r : compared) {
    profiles.push_back(per_object_accuracy(r->predictions));
    std::string name = r->info.label + " " + task_kind(r->info.task);
    if (const int k = ++seen[name]; k > 1) name += " #" + std::to_string(k);
    names.push_back(name);
  }
  const auto order = object_order(profiles);
  if (order.empty()) throw DataError("no concept has test trials in every compared run");
  const auto mean_profile = combine_profiles(profiles, Combine::mean_of_models);
  const auto& catalog = data::concept_catalog();

  std::string order_csv = kObjectOrderHeader;
  for (const auto& n : names) order_csv += "," + detail::csv_field(n);
  order_csv += "\n";
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const int id = order[rank];
    order_csv += std::to_string(rank + 1) + "," + std::to_string(id) + "," +
                 detail::csv_field(static_cast<std::size_t>(id) < catalog.size() ? catalog[id].category : "") + "," +
                 exact(mean_profile.accuracy[id]);
    for (const auto& p : profiles) order_csv += "," + exact(p.accuracy[id]);
    order_csv += "\n";
  }
  write_file(out_dir / "object_order.csv", order_csv, files);

  Frame of;
  std::string obj_svg = svg_open(of, "Per-object accuracy, ordered by mean across models");
  const double bar_w = of.plot_w() / static_cast<double>(order.size());
  obj_svg += "<g id=\"background\">\n";
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const int id = order[rank];
    const double a = mean_profile.accuracy[id];
    obj_svg += "<rect data-concept=\"" + std::to_string(id) + "\" data-accuracy=\"" + exact(a) + "\" x=\"" +
               exact(of.left + bar_w * static_cast<double>(rank)) + "\" y=\"" + exact(of.y(a)) + "\" width=\"" +
               exact(bar_w) + "\" height=\"" + exact(of.y(0.0) - of.y(a)) + "\" fill=\"" + accuracy_color(a) +
               "\"/>\n";
  }
  obj_svg += "</g>\n";
  for (std::size_t m = 0; m < profiles.size(); ++m) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      pts.emplace_back(of.left + bar_w * (static_cast<double>(rank) + 0.5), of.y(profiles[m].accuracy[order[rank]]));
    }
    obj_svg += polyline(pts, palette(m), false);
    obj_svg += legend_entry(of, m, palette(m), false, names[m]);
  }
  obj_svg += "<text x=\"" + exact(of.left + of.plot_w() / 2) + "\" y=\"" + exact(of.height - 12) +
             "\" text-anchor=\"middle\">objects (" + std::to_string(order.size()) + ")</text>\n</svg>\n";
  write_file(out_dir / "object_comparison.svg", obj_svg, files);

  std::string ttests = std::string(kTTestHeader) + "\n";
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    for (std::size_t j = i + 1; j < profiles.size(); ++j) {
      std::vector<double> a, b;
      for (const int id : order) {
        a.push_back(profiles[i].accuracy[id]);
        b.push_back(profiles[j].accuracy[id]);
      }
      if (a.size() < 2) continue;
      const auto t = paired_ttest(a, b);
      ttests += detail::csv_field(names[i]) + "," + detail::csv_field(names[j]) + "," + exact(t.t) + "," + exact(t.p) +
                "," + std::to_string(t.df) + "," + std::to_string(a.size()) + "\n";
    }
  }
  write_file(out_dir / "ttests.csv", ttests, files);

  const auto table = category_table(combine_profiles(profiles, opts.combine));
  files.warnings = table.warnings;
  std::string cats = std::string(kCategoryHeader) + "\n";
  for (const auto& row : table.rows) {
    cats += row.label + "," + detail::csv_field(row.category) + "," + std::to_string(row.n_objects) + "," +
            fixed(row.accuracy, 4) + "\n";
  }
  write_file(out_dir / "category_table.csv", cats, files);
  return files;
}

}  // namespace neurodecode::analysis
